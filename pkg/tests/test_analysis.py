from dataclasses import replace

import pydot
import pytest
from hypothesis import given, strategies as st

from oracles import kind_config, minutes
from orgminer.analysis import (
    INCOMPLETE,
    MALFORMED,
    export_agr_dot,
    extract_occurrences,
    mine_documents,
    perf_report,
)
from orgminer.generator import generate, generate_with_truth
from orgminer.model import SYSTEM, EventLine, Process, ProcessInstance, WorkflowLog, build_registries
from orgminer.orgstruct import mine_structures
from orgminer.protocols import mine_protocols


def lifecycle(*steps, activity="A", actor="x", case="C1", timed=True):
    """steps: (state, minute) pairs for one executor."""
    return [EventLine(case, i, "execute", activity, actor, SYSTEM, minutes(m) if timed else None, state)
            for i, (state, m) in enumerate(steps)]


def log_of(*cases):
    return build_registries([Process("p", [ProcessInstance(f"C{i + 1}", [replace(e, case_id=f"C{i + 1}", seq=j)
                                                                          for j, e in enumerate(evs)])
                                           for i, evs in enumerate(cases)])], {})


def only(log):
    (occ,) = extract_occurrences(log)
    return occ


# -- documents ----------------------------------------------------------------


def test_document_unions():
    evs = [
        EventLine("C1", 0, "execute", "A", "x", SYSTEM, None, "started", {"d1"}),
        EventLine("C1", 1, "execute", "A", "x", SYSTEM, None, "completed", (), {"d2"}),
        EventLine("C1", 2, "execute", "B", "y", SYSTEM, None, "started", {"d2"}),
    ]
    report = mine_documents(log_of(evs))
    assert report.consumed("A") == {"d1"} and report.produced("A") == {"d2"}
    assert report.documents["d2"] == {"producers": ["A"], "consumers": ["B"]}
    assert report.activities["A"]["consumed"] == {"d1": 1}


def test_no_documents(table2):
    assert mine_documents(table2).empty
    assert mine_documents(WorkflowLog()).records() == []


@given(st.integers(min_value=0, max_value=5000), st.randoms(use_true_random=False))
def test_document_report_ignores_event_order(seed, rnd):
    log = generate(kind_config("coalition", seed, cases=3,
                               documents={"Intake": {"consumed": ["form"], "produced": ["file"]},
                                          "Review": {"consumed": ["file"], "produced": ["memo"]}}))
    shuffled = []
    for _, inst in log.instances():
        evs = list(inst.events)
        rnd.shuffle(evs)
        shuffled.append(evs)
    assert mine_documents(log_of(*shuffled)).records() == mine_documents(log).records()


# -- lifecycle arithmetic -----------------------------------------------------


def test_scheduled_started_completed():
    occ = only(log_of(lifecycle(("scheduled", 0), ("started", 5), ("completed", 15))))
    assert (occ.waiting, occ.processing, occ.flow) == (300.0, 600.0, 900.0)
    assert occ.flags == ()


def test_lone_completed_is_incomplete():
    occ = only(log_of(lifecycle(("completed", 3))))
    assert (occ.waiting, occ.processing, occ.flow) == (None, None, None)
    assert occ.flags == (INCOMPLETE,)


def test_suspension_gap_is_excluded_from_processing():
    occ = only(log_of(lifecycle(("started", 0), ("suspended", 4), ("resumed", 9), ("completed", 15))))
    assert occ.processing == 600.0  # 4 + 6 minutes
    assert occ.flow is None and occ.waiting is None


def test_full_cycle_identities():
    occ = only(log_of(lifecycle(("scheduled", 0), ("started", 2), ("suspended", 5), ("resumed", 11),
                                ("suspended", 12), ("resumed", 12), ("completed", 20))))
    assert occ.waiting == 120.0
    assert occ.processing == (3 + 1 + 8) * 60.0
    assert occ.flow == 1200.0
    assert occ.waiting + occ.processing <= occ.flow


def test_aborted_closes_processing():
    occ = only(log_of(lifecycle(("scheduled", 0), ("started", 1), ("aborted", 7))))
    assert (occ.waiting, occ.processing, occ.flow) == (60.0, 360.0, 420.0)
    assert occ.last_state == "aborted"


def test_malformed_order_is_flagged_not_dropped():
    occ = only(log_of(lifecycle(("scheduled", 0), ("completed", 1), ("started", 2))))
    assert MALFORMED in occ.flags
    assert occ.processing is None and len(occ.events) == 3


def test_untimed_log_has_counts_only():
    log = log_of(lifecycle(("scheduled", 0), ("started", 5), ("completed", 15), timed=False))
    occ = only(log)
    assert (occ.waiting, occ.processing, occ.flow) == (None, None, None)
    report = perf_report(log, mine_protocols(log))
    assert report.activities == {"A": {"occurrences": 1}}
    assert report.actors["x"]["completed"] == 1


def test_occurrences_keyed_by_executor():
    evs = lifecycle(("scheduled", 0), ("started", 1), activity="A", actor="x")
    evs += lifecycle(("scheduled", 2), ("started", 3), ("completed", 4), activity="A", actor="y")
    keys = [o.key for o in extract_occurrences(log_of(evs))]
    assert keys == [("C1", "A", "x"), ("C1", "A", "y")]


def test_mean_processing_over_two_occurrences():
    log = log_of(lifecycle(("scheduled", 0), ("started", 0), ("completed", 10)),
                 lifecycle(("scheduled", 0), ("started", 0), ("completed", 20)))
    stats = perf_report(log, mine_protocols(log)).activities["A"]["processing"]
    assert stats == {"mean": 900.0, "min": 600.0, "max": 1200.0}


def test_actor_counts():
    log = log_of(
        lifecycle(("scheduled", 0), ("started", 1), ("suspended", 2), ("resumed", 3), ("completed", 4)),
        lifecycle(("scheduled", 0), ("started", 1), ("aborted", 2)),
    )
    assert perf_report(log, mine_protocols(log)).actors == {
        "x": {"occurrences": 2, "completed": 1, "suspended": 1, "aborted": 1}}


@given(st.lists(st.sampled_from(["scheduled", "started", "suspended", "resumed", "completed", "aborted"]),
                min_size=1, max_size=8),
       st.lists(st.integers(min_value=0, max_value=30), min_size=8, max_size=8))
def test_time_invariants_on_arbitrary_sequences(states, gaps):
    t, steps = 0, []
    for s, g in zip(states, gaps):
        t += g
        steps.append((s, t))
    occ = only(log_of(lifecycle(*steps)))
    for value in (occ.waiting, occ.processing, occ.flow):
        assert value is None or value >= 0
    if occ.processing is not None and occ.flow is not None:
        assert occ.processing <= occ.flow
        if occ.waiting is not None:
            assert occ.waiting + occ.processing <= occ.flow


# -- contingency --------------------------------------------------------------


def test_contract_net_without_aborts_has_single_completed_column():
    log = generate(kind_config("market", 4, cases=8, protocol_mix={"contract-net": 1}, abort_rate=0.0))
    report = perf_report(log, mine_protocols(log))
    assert list(report.contingency) == ["contract-net"]
    assert list(report.contingency["contract-net"]) == ["completed"]
    assert report.contingency["contract-net"]["completed"] == 16


@given(st.sampled_from(["strict_hierarchy", "market", "coalition", "federation"]),
       st.integers(min_value=0, max_value=5000))
def test_contingency_conservation(kind, seed):
    log, truth = generate_with_truth(kind_config(kind, seed, abort_rate=0.3, suspend_rate=0.3))
    report = perf_report(log, mine_protocols(log))
    executed = [t for t in truth.instances if t.executor is not None]
    assert report.total() == len(executed)
    expected_rows = {}
    for t in executed:
        expected_rows[t.template] = expected_rows.get(t.template, 0) + 1
    assert report.row_sums() == expected_rows
    expected_cols = {}
    for t in executed:
        expected_cols[t.terminal] = expected_cols.get(t.terminal, 0) + 1
    assert report.column_sums() == dict(sorted(expected_cols.items()))


# -- AGR ----------------------------------------------------------------------


def _with_units(log, units):
    actors = {k: replace(a, org_unit=units.get(k)) for k, a in log.actors.items()}
    return build_registries(log.processes, actors)


def test_agr_table2_with_units(table2):
    units = {"Mahdi": "Crisis", "Salim": "Crisis", "Malik": "Lab", "Sami": "Lab", "Amal": "Lab"}
    log = _with_units(table2, units)
    text = export_agr_dot(log, mine_structures(log))
    (g,) = pydot.graph_from_dot_data(text)
    clusters = g.get_subgraphs()
    assert len(clusters) == 2
    assert sum(len(c.get_nodes()) for c in clusters) == 5
    assert len(g.get_edges()) == 8
    assert 'label="Lab [market]"' in text and 'label="Crisis [strict_hierarchy]"' in text


def test_agr_empty_log():
    assert export_agr_dot(WorkflowLog()) == "digraph agr {\n}\n"


def test_agr_roles_on_nodes():
    log, _ = generate_with_truth(kind_config("coalition", 3, cases=3))
    text = export_agr_dot(log)
    assert "(lead, member)" in text


@pytest.mark.parametrize("seed", range(5))
def test_agr_federation_clusters_match_config(seed):
    cfg = kind_config("federation", seed)
    log = generate(cfg)
    (g,) = pydot.graph_from_dot_data(export_agr_dot(log, mine_structures(log)))
    labels = sorted(c.get_label().strip('"').split(" [")[0] for c in g.get_subgraphs())
    assert labels == sorted({a.org_unit for a in cfg.actors if a.id in log.actors})
    nodes = [n for c in g.get_subgraphs() for n in c.get_nodes()]
    assert len(nodes) == len([a for a in log.actors if a != SYSTEM])
