import json
import subprocess
import sys

import pytest

from orgminer.cli import main

CONFIG = {
    "seed": 11,
    "cases": 4,
    "actors": [{"id": f"B{i}", "roles": ["bidder"]} for i in range(5)] + [{"id": "Buyer", "roles": ["buyer"]}],
    "structure": {"kind": "market", "initiators": ["Buyer"], "bidders": [f"B{i}" for i in range(5)]},
    "protocol_mix": {"contract-net": 2, "english-auction": 1},
    "activities": ["Purchase", "Repair"],
    "abort_rate": 0.2,
    "documents": {"Purchase": {"consumed": ["order"], "produced": ["invoice"]}},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "market.json"
    path.write_text(json.dumps(CONFIG))
    return path


@pytest.fixture
def generated(tmp_path, config):
    out = tmp_path / "log.csv"
    assert main(["generate", "--config", str(config), "--out", str(out)]) == 0
    return out


def records(text):
    return [json.loads(line) for line in text.splitlines()]


def test_summary_of_table2(table2_path, capsys):
    assert main(["summary", "--log", str(table2_path)]) == 0
    (rec,) = records(capsys.readouterr().out)
    assert (rec["processes"], rec["cases"], rec["events"], rec["actors"], rec["performatives"]) == (1, 1, 10, 5, 7)
    assert rec["system_actor"] is True


def test_validate_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["validate", "--log", str(empty)]) == 0
    assert records(capsys.readouterr().out)[-1]["ok"] is True


def test_validate_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("case,performative,activity,initiator,receiver\nC1,inform,a,x,x\n")
    assert main(["validate", "--log", str(bad)]) == 3
    captured = capsys.readouterr()
    assert records(captured.out)[0]["type"] == "violation"
    assert "both 'x'" in captured.err


def test_mining_refuses_invalid_logs(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("case,performative,activity,initiator,receiver\nC1,inform,a,x,x\n")
    out = tmp_path / "r.jsonl"
    assert main(["mine-protocols", "--log", str(bad), "--out", str(out)]) == 3
    assert not out.exists()


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["summary"],
    ["summary", "--log", "x.csv", "--colour"],
    ["mine-orgstruct", "--log", "x.csv", "--per-process=yes"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert "usage:" in capsys.readouterr().err


def test_help_is_success(capsys):
    assert main(["stats", "--help"]) == 0
    assert "--occurrences" in capsys.readouterr().out


def test_input_errors(tmp_path, table2_path, capsys):
    assert main(["summary", "--log", str(tmp_path / "missing.csv")]) == 2
    broken = tmp_path / "broken.csv"
    broken.write_text("case,performative\n")
    assert main(["summary", "--log", str(broken)]) == 2
    assert "line 1, column 3" in capsys.readouterr().err
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**CONFIG, "protocol_mix": {"delegation": 1}}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2
    assert "not compatible" in capsys.readouterr().err
    assert not (tmp_path / "o.csv").exists()
    thresholds = tmp_path / "t.json"
    thresholds.write_text('{"theta_reciprocity": 7}')
    assert main(["mine-orgstruct", "--log", str(table2_path), "--thresholds", str(thresholds)]) == 2
    assert "theta_reciprocity" in capsys.readouterr().err


def test_pipeline_recovers_configured_structure(generated, capsys):
    assert main(["mine-orgstruct", "--log", str(generated)]) == 0
    verdicts = [r for r in records(capsys.readouterr().out) if r["type"] == "verdict"]
    assert [v["label"] for v in verdicts] == ["market"]


def test_mine_protocols_and_stats(generated, capsys):
    assert main(["mine-protocols", "--log", str(generated)]) == 0
    rows = records(capsys.readouterr().out)
    assert {r["template"] for r in rows if r["type"] == "instance"} <= {"contract-net", "english-auction"}
    assert all(r["outcome"] == "complete" for r in rows if r["type"] == "instance")
    assert main(["stats", "--log", str(generated), "--occurrences"]) == 0
    rows = records(capsys.readouterr().out)
    kinds = {r["type"] for r in rows}
    assert {"activity", "actor", "contingency", "occurrence"} <= kinds


def test_mine_info(generated, capsys):
    assert main(["mine-info", "--log", str(generated)]) == 0
    rows = records(capsys.readouterr().out)
    docs = {r["document"]: r for r in rows if r["type"] == "document"}
    assert docs["invoice"]["producers"] == ["Purchase"]


def test_convert_and_filter(tmp_path, generated, capsys):
    tree = tmp_path / "log.json"
    assert main(["convert", "--in", str(generated), "--out", str(tree)]) == 0
    assert json.loads(capsys.readouterr().err)["events_written"] > 0
    back = tmp_path / "back.csv"
    assert main(["convert", "--in", str(tree), "--out", str(back)]) == 0
    assert back.read_bytes() == generated.read_bytes()
    filtered = tmp_path / "f.csv"
    assert main(["filter", "--log", str(generated), "--out", str(filtered), "--completed-only", "--case", "C1"]) == 0
    text = filtered.read_text()
    assert ",aborted," not in text
    assert all(line.startswith("C1,") for line in text.splitlines()[1:])


def test_agr_and_dot_outputs(tmp_path, generated):
    dot = tmp_path / "agr.dot"
    assert main(["agr", "--log", str(generated), "--out", str(dot)]) == 0
    assert dot.read_text().startswith("digraph agr {")
    sdot = tmp_path / "s.dot"
    assert main(["mine-orgstruct", "--log", str(generated), "--dot", str(sdot), "--out", str(tmp_path / "s.jsonl")]) == 0
    assert "market" in sdot.read_text()


def test_pretty_tables(table2_path, capsys):
    assert main(["mine-orgstruct", "--log", str(table2_path), "--pretty"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("[verdict]")
    assert "strict_hierarchy" in out


def test_seed_override_changes_output(tmp_path, config):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["generate", "--config", str(config), "--out", str(a)])
    main(["generate", "--config", str(config), "--out", str(b), "--seed", "12"])
    assert a.read_bytes() != b.read_bytes()


def test_inputs_are_not_modified(tmp_path, generated):
    before = generated.read_bytes()
    for cmd in ("summary", "validate", "mine-protocols", "mine-orgstruct", "mine-info", "stats"):
        main([cmd, "--log", str(generated), "--out", str(tmp_path / f"{cmd}.out")])
    assert generated.read_bytes() == before


def test_console_entry_point(table2_path):
    proc = subprocess.run([sys.executable, "-m", "orgminer", "summary", "--log", str(table2_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["events"] == 10
