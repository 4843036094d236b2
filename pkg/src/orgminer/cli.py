"""``orgminer`` command line.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 validation
failure. Reports are JSON Lines on stdout (or ``--out``); ``--pretty`` prints
plain-text tables instead. Output files are written only once the whole
artifact has been produced.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import analysis, logio
from .generator import BindingError, ConfigError, GeneratorConfig, generate_with_truth
from .model import SYSTEM, WorkflowLog, validate_log
from .orgstruct import StructureThresholds, mine_structures, structure_dot
from .protocols import TemplateError, load_templates, mine_protocols

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVALID = 0, 1, 2, 3

log = logging.getLogger("orgminer")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class InvalidLog(Exception):
    def __init__(self, report):
        super().__init__(f"{len(report)} validation violation(s)")
        self.report = report


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- output -------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, list):
        return ",".join(map(str, value)) if all(not isinstance(v, (dict, list)) for v in value) else json.dumps(value)
    if isinstance(value, dict):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def render(records: Sequence[dict], pretty: bool) -> str:
    if not pretty:
        return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
    blocks = []
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(r.get("type", ""), []).append(r)
    for kind, rows in groups.items():
        cols = []
        for r in rows:
            cols.extend(k for k in r if k != "type" and k not in cols)
        table = [cols] + [[_cell(r.get(c)) for c in cols] for r in rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
        lines = [f"[{kind}]"] if kind else []
        for row in table:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="")


# -- shared loading -----------------------------------------------------------


def _read(args) -> WorkflowLog:
    try:
        return logio.read_log(args.log, args.format)
    except ValueError as exc:  # LogParseError, undecodable bytes
        raise InputError(f"{args.log}: {exc}") from None
    except OSError as exc:
        raise InputError(f"{args.log}: {exc.strerror or exc}") from None


def _read_valid(args) -> WorkflowLog:
    wlog = _read(args)
    report = validate_log(wlog)
    if not report.ok:
        raise InvalidLog(report)
    return wlog


def _templates(args):
    try:
        return load_templates(args.templates or ())
    except (TemplateError, OSError) as exc:
        raise InputError(str(exc)) from None


def _thresholds(args) -> StructureThresholds:
    if not args.thresholds:
        return StructureThresholds()
    try:
        return StructureThresholds.from_file(args.thresholds)
    except (OSError, ValueError, TypeError) as exc:
        raise InputError(f"{args.thresholds}: {exc}") from None


# -- subcommands --------------------------------------------------------------


def cmd_generate(args) -> None:
    try:
        cfg = GeneratorConfig.from_file(args.config)
    except OSError as exc:
        raise InputError(f"{args.config}: {exc.strerror or exc}") from None
    except ConfigError as exc:
        raise InputError(f"{args.config}: {exc}") from None
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.cases is not None:
        cfg = replace(cfg, cases=args.cases)
    try:
        wlog, _ = generate_with_truth(cfg, _templates(args))
    except (ConfigError, BindingError) as exc:
        raise InputError(f"{args.config}: {exc}") from None
    fmt = args.to or logio.guess_format(args.out)
    _emit(logio.SERIALIZERS[fmt](wlog), args.out)


def cmd_convert(args) -> None:
    src = args.input_format or logio.guess_format(args.input)
    dst = args.to or logio.guess_format(args.out)
    wlog = _read(argparse.Namespace(log=args.input, format=src))
    _emit(logio.SERIALIZERS[dst](wlog), args.out)
    report = validate_log(wlog)
    rec = {"type": "conversion", "input_format": src, "output_format": dst,
           "events_read": wlog.event_count, "events_written": wlog.event_count,
           "violations": len(report)}
    sys.stderr.write(render([rec], args.pretty))


def cmd_filter(args) -> None:
    wlog = _read_valid(args)
    spec = logio.FilterSpec(
        completed_only=args.completed_only,
        logistics_activities=frozenset(args.drop_activity or ()),
        case_whitelist=frozenset(args.case) if args.case else None,
        keep_performatives=frozenset(args.keep_performative) if args.keep_performative else None,
    )
    out = logio.filter_log(wlog, spec)
    fmt = args.to or logio.guess_format(args.out)
    _emit(logio.SERIALIZERS[fmt](out), args.out)


def cmd_validate(args) -> None:
    wlog = _read(args)
    report = validate_log(wlog)
    records = [{"type": "violation", **v.as_record()} for v in report]
    records.append({"type": "summary", "events": wlog.event_count, "violations": len(report),
                    "ok": report.ok})
    _emit(render(records, args.pretty), args.out)
    if not report.ok:
        raise InvalidLog(report)


def cmd_mine_protocols(args) -> None:
    wlog = _read_valid(args)
    report = mine_protocols(wlog, _templates(args))
    _emit(render(report.records(), args.pretty), args.out)


def cmd_mine_orgstruct(args) -> None:
    wlog = _read_valid(args)
    report = mine_structures(wlog, _thresholds(args), per_process=args.per_process)
    text = render(report.records(), args.pretty)
    if args.dot:
        Path(args.dot).write_text(structure_dot(report), encoding="utf-8", newline="")
    _emit(text, args.out)


def cmd_mine_info(args) -> None:
    wlog = _read_valid(args)
    _emit(render(analysis.mine_documents(wlog).records(), args.pretty), args.out)


def cmd_stats(args) -> None:
    wlog = _read_valid(args)
    report = analysis.perf_report(wlog, mine_protocols(wlog, _templates(args)))
    records = report.records()
    if args.occurrences:
        records += [o.as_record() for o in report.occurrences]
    _emit(render(records, args.pretty), args.out)


def cmd_agr(args) -> None:
    wlog = _read_valid(args)
    text = analysis.export_agr_dot(wlog, mine_structures(wlog, _thresholds(args)))
    _emit(text, args.out)


def summary_record(wlog: WorkflowLog) -> dict:
    actors = [a for a in wlog.actors if a != SYSTEM]
    performatives = sorted({str(ev.performative) for ev in wlog.events()})
    activities = sorted({ev.activity for ev in wlog.events()})
    return {
        "type": "summary",
        "processes": len(wlog.processes),
        "cases": sum(len(p.instances) for p in wlog.processes),
        "events": wlog.event_count,
        "actors": len(actors),
        "system_actor": SYSTEM in wlog.actors,
        "performatives": len(performatives),
        "activities": len(activities),
        "org_units": len(wlog.org_units),
        "roles": len(wlog.roles),
        "documents": len(wlog.documents),
        "actor_ids": actors,
        "performative_names": performatives,
        "activity_names": activities,
        "org_unit_names": sorted(wlog.org_units),
        "role_names": sorted(wlog.roles),
        "document_names": sorted(wlog.documents),
    }


def cmd_summary(args) -> None:
    _emit(render([summary_record(_read(args))], args.pretty), args.out)


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orgminer", description="Organizational workflow mining over message-level logs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def command(name, func, help_text, log_input=True, report=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        if log_input:
            p.add_argument("--log", required=True, help="input log file")
            p.add_argument("--format", choices=logio.FORMATS, help="input format (default: by extension)")
        if report:
            p.add_argument("--out", help="write the report here instead of stdout")
            p.add_argument("--pretty", action="store_true", help="human-readable tables instead of JSON Lines")
        return p

    def templates(p):
        p.add_argument("--templates", action="append", metavar="PATH",
                       help="extra protocol template file or directory (repeatable)")

    def thresholds(p):
        p.add_argument("--thresholds", metavar="PATH", help="JSON file of structure thresholds")

    p = command("generate", cmd_generate, "generate a synthetic log from a JSON config", log_input=False, report=False)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--to", "--out-format", dest="to", choices=logio.FORMATS)
    p.add_argument("--seed", type=int)
    p.add_argument("--cases", type=int)
    templates(p)

    p = command("convert", cmd_convert, "convert between flat CSV and JSON tree", log_input=False, report=False)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--from", dest="input_format", choices=logio.FORMATS)
    p.add_argument("--to", choices=logio.FORMATS)
    p.add_argument("--pretty", action="store_true")

    p = command("filter", cmd_filter, "drop cases, activities or events", report=False)
    p.add_argument("--out", required=True)
    p.add_argument("--to", choices=logio.FORMATS)
    p.add_argument("--completed-only", action="store_true",
                   help="drop lifecycle events of occurrences that never complete")
    p.add_argument("--drop-activity", action="append", metavar="NAME", help="logistics activity to remove")
    p.add_argument("--case", action="append", metavar="ID", help="keep only these cases")
    p.add_argument("--keep-performative", action="append", metavar="NAME")

    command("validate", cmd_validate, "check a log against the meta-model")
    templates(command("mine-protocols", cmd_mine_protocols, "discover interaction protocol instances"))
    p = command("mine-orgstruct", cmd_mine_orgstruct, "classify organizational structures")
    thresholds(p)
    p.add_argument("--per-process", action="store_true")
    p.add_argument("--dot", metavar="PATH", help="also write the annotated interaction graph")
    command("mine-info", cmd_mine_info, "documents consumed and produced per activity")
    p = command("stats", cmd_stats, "execution times, actor counts and protocol/outcome table")
    templates(p)
    p.add_argument("--occurrences", action="store_true", help="also list every lifecycle occurrence")
    p = command("agr", cmd_agr, "Agent-Group-Role export as DOT", report=False)
    p.add_argument("--out", help="DOT output file (default stdout)")
    thresholds(p)
    command("summary", cmd_summary, "general data about a log")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except InvalidLog as exc:
        for v in exc.report:
            sys.stderr.write(f"invalid: {json.dumps(v.as_record(), ensure_ascii=False)}\n")
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
