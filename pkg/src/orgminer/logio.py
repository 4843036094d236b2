"""Reading, writing, filtering and converting workflow logs.

Two encodings are supported:

* the flat format, a CSV dialect with one row per event line;
* the tree format, a JSON document (processes -> instances -> events plus the
  actor/role/unit/document registries) validated against
  ``schemas/tree.schema.json``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from .model import (
    SYSTEM,
    Actor,
    EventLine,
    LifecycleState,
    Performative,
    Process,
    ProcessInstance,
    WorkflowLog,
    build_registries,
    normalize_actor_id,
    validate_log,
)

log = logging.getLogger(__name__)

FLAT_COLUMNS = (
    "case",
    "performative",
    "activity",
    "initiator",
    "receiver",
    "timestamp",
    "event_stream",
    "role",
    "org_unit",
    "consumed_docs",
    "produced_docs",
)
REQUIRED_COLUMNS = FLAT_COLUMNS[:5]
OPTIONAL_COLUMNS = FLAT_COLUMNS[5:]
PROCESS_COLUMN = "process"
DEFAULT_PROCESS = "default"
MULTI_SEP = ";"
TREE_FORMAT_TAG = "orgminer-tree/1"
FORMATS = ("flat", "tree")


class LogParseError(ValueError):
    """A log could not be read; carries the location of the offending input."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 path: Optional[str] = None):
        self.reason = message
        self.line = line
        self.column = column
        self.path = path
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if path is not None:
            where.append(f"at {path}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def format_timestamp(ts: Optional[datetime]) -> str:
    return "" if ts is None else ts.isoformat()


def _split_multi(cell: str) -> frozenset:
    return frozenset(part.strip() for part in cell.split(MULTI_SEP) if part.strip())


def _join_multi(values, what: str) -> str:
    for v in values:
        if MULTI_SEP in v:
            raise ValueError(f"{what} {v!r} contains the separator {MULTI_SEP!r}")
    return MULTI_SEP.join(sorted(values))


def _check_header(header: list[str]) -> list[str]:
    cols = [c.strip() for c in header]
    if cols and cols[0].startswith("\ufeff"):
        cols[0] = cols[0][1:]
    body = cols[1:] if cols and cols[0] == PROCESS_COLUMN else cols
    for i, name in enumerate(REQUIRED_COLUMNS):
        if i >= len(body) or body[i] != name:
            col = i + 1 + (len(cols) - len(body))
            raise LogParseError(f"expected header column {name!r}", line=1, column=col)
    seen = set(REQUIRED_COLUMNS)
    for i, name in enumerate(body[len(REQUIRED_COLUMNS):], start=len(REQUIRED_COLUMNS)):
        col = i + 1 + (len(cols) - len(body))
        if name not in OPTIONAL_COLUMNS:
            raise LogParseError(f"unknown header column {name!r}", line=1, column=col)
        if name in seen:
            raise LogParseError(f"duplicate header column {name!r}", line=1, column=col)
        seen.add(name)
    return cols


def parse_flat(text: str) -> WorkflowLog:
    """Parse the flat CSV encoding into a :class:`WorkflowLog`.

    Event order within a case is (timestamp, row order); ``seq`` is assigned
    densely from that order. Role and org-unit cells describe the initiator of
    the row, last write wins. A file with no content at all is the empty log.
    """
    if not text.strip():
        return WorkflowLog()
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader, None)
        if header is None:
            raise LogParseError("missing header row", line=1)
        cols = _check_header(header)
        index = {name: i for i, name in enumerate(cols)}

        cases: dict[tuple[str, str], list] = {}
        actors: dict[str, Actor] = {}
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(cols):
                raise LogParseError(f"expected {len(cols)} fields, found {len(row)}", line=line)

            def cell(name: str) -> str:
                i = index.get(name)
                return "" if i is None else row[i].strip()

            def need(name: str) -> str:
                value = cell(name)
                if not value:
                    raise LogParseError(f"empty {name!r}", line=line, column=index[name] + 1)
                return value

            process = cell(PROCESS_COLUMN) or DEFAULT_PROCESS
            case_id = need("case")
            try:
                performative = Performative(need("performative"))
            except ValueError as exc:
                raise LogParseError(str(exc), line=line, column=index["performative"] + 1)
            activity = need("activity")
            initiator = normalize_actor_id(need("initiator"))
            receiver = normalize_actor_id(need("receiver"))

            timestamp = None
            if cell("timestamp"):
                try:
                    timestamp = parse_timestamp(cell("timestamp"))
                except ValueError:
                    raise LogParseError(
                        f"unparseable timestamp {cell('timestamp')!r}",
                        line=line, column=index["timestamp"] + 1,
                    )
            stream = None
            if cell("event_stream"):
                try:
                    stream = LifecycleState.parse(cell("event_stream"))
                except ValueError:
                    raise LogParseError(
                        f"unknown event_stream {cell('event_stream')!r}",
                        line=line, column=index["event_stream"] + 1,
                    )

            roles = _split_multi(cell("role"))
            unit = cell("org_unit") or None
            if initiator != SYSTEM and (roles or unit):
                prev = actors.get(initiator)
                new = Actor(initiator, initiator, roles or (prev.roles if prev else frozenset()),
                            unit if unit is not None else (prev.org_unit if prev else None))
                if prev is not None and prev != new:
                    log.warning("line %d: conflicting role/unit for actor %r; last write wins",
                                line, initiator)
                actors[initiator] = new

            rows = cases.setdefault((process, case_id), [])
            rows.append(
                (
                    line,
                    dict(
                        performative=performative,
                        activity=activity,
                        initiator=initiator,
                        receiver=receiver,
                        timestamp=timestamp,
                        event_stream=stream,
                        consumed_docs=_split_multi(cell("consumed_docs")),
                        produced_docs=_split_multi(cell("produced_docs")),
                    ),
                )
            )
    except csv.Error as exc:
        raise LogParseError(f"CSV syntax error: {exc}", line=reader.line_num) from None

    processes: dict[str, list[ProcessInstance]] = {}
    for (process, case_id), rows in cases.items():
        stamped = [r for r in rows if r[1]["timestamp"] is not None]
        if stamped and len(stamped) != len(rows):
            missing = next(r for r in rows if r[1]["timestamp"] is None)
            raise LogParseError(f"case {case_id!r} mixes rows with and without timestamps",
                                line=missing[0])
        if stamped:
            rows = sorted(rows, key=lambda r: r[1]["timestamp"])  # stable: row order breaks ties
        events = [EventLine(case_id=case_id, seq=i, **fields) for i, (_, fields) in enumerate(rows)]
        processes.setdefault(process, []).append(ProcessInstance(case_id, events))
    return build_registries((Process(name, insts) for name, insts in processes.items()), actors)


def serialize_flat(log_: WorkflowLog) -> str:
    """Render a log in the flat encoding; rows follow (process, case, seq) log order."""
    with_process = any(p.process_name != DEFAULT_PROCESS for p in log_.processes)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(((PROCESS_COLUMN,) if with_process else ()) + FLAT_COLUMNS)
    for process, inst in log_.instances():
        for ev in inst.events:
            actor = log_.actors.get(ev.initiator)
            roles = actor.roles if actor else ()
            unit = actor.org_unit if actor and actor.org_unit else ""
            row = [
                inst.case_id,
                str(ev.performative),
                ev.activity,
                ev.initiator,
                ev.receiver,
                format_timestamp(ev.timestamp),
                "" if ev.event_stream is None else ev.event_stream.value,
                _join_multi(roles, "role"),
                unit,
                _join_multi(ev.consumed_docs, "document"),
                _join_multi(ev.produced_docs, "document"),
            ]
            writer.writerow(([process.process_name] if with_process else []) + row)
    return buf.getvalue()


def tree_schema() -> dict:
    return json.loads(resources.files("orgminer").joinpath("schemas/tree.schema.json").read_text())


def _tree_validator() -> jsonschema.Draft202012Validator:
    return jsonschema.Draft202012Validator(tree_schema())


def _event_to_tree(ev: EventLine) -> dict:
    node = {
        "Seq": ev.seq,
        "Per_Name": str(ev.performative),
        "Act_Name": ev.activity,
        "Has_Initiator_Actor": ev.initiator,
        "Has_Receiver_Actor": ev.receiver,
        "TimeStamp": None if ev.timestamp is None else ev.timestamp.isoformat(),
        "EventStream": None if ev.event_stream is None else ev.event_stream.value,
        "Has_Consumed_Doc": sorted(ev.consumed_docs),
        "Has_Produced_Doc": sorted(ev.produced_docs),
    }
    return node


def log_to_tree(log_: WorkflowLog) -> dict:
    return {
        "format": TREE_FORMAT_TAG,
        "Actors": [
            {
                "Actor_ID": a.actor_id,
                "Actor_Name": a.actor_name,
                "Role_Name": sorted(a.roles),
                "Org_Unit_Name": a.org_unit,
            }
            for a in log_.actors.values()
        ],
        "Roles": [{"Role_Name": r} for r in sorted(log_.roles)],
        "Org_Units": [{"Org_Unit_Name": u} for u in sorted(log_.org_units)],
        "Documents": [{"Doc_Name": d} for d in sorted(log_.documents)],
        "Processes": [
            {
                "Process_Name": p.process_name,
                "Instances": [
                    {"Case_ID": inst.case_id, "Events": [_event_to_tree(ev) for ev in inst.events]}
                    for inst in p.instances
                ],
            }
            for p in log_.processes
        ],
    }


def serialize_tree(log_: WorkflowLog) -> str:
    return json.dumps(log_to_tree(log_), indent=2, ensure_ascii=False) + "\n"


def _json_path(parts) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts)


def tree_to_log(doc: dict) -> WorkflowLog:
    errors = sorted(_tree_validator().iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise LogParseError(f"schema violation: {err.message}", path=_json_path(err.absolute_path))

    actors = {}
    for i, node in enumerate(doc["Actors"]):
        actor = Actor(node["Actor_ID"], node["Actor_Name"], frozenset(node["Role_Name"]),
                      node["Org_Unit_Name"])
        if actor.actor_id in actors:
            raise LogParseError(f"duplicate actor {actor.actor_id!r}", path=f"$.Actors[{i}]")
        actors[actor.actor_id] = actor

    processes = []
    for pi, pnode in enumerate(doc["Processes"]):
        instances = []
        for ii, inode in enumerate(pnode["Instances"]):
            events = []
            for ei, enode in enumerate(inode["Events"]):
                where = f"$.Processes[{pi}].Instances[{ii}].Events[{ei}]"
                timestamp = None
                if enode.get("TimeStamp"):
                    try:
                        timestamp = parse_timestamp(enode["TimeStamp"])
                    except ValueError:
                        raise LogParseError(f"unparseable TimeStamp {enode['TimeStamp']!r}",
                                            path=where + ".TimeStamp")
                events.append(
                    EventLine(
                        case_id=inode["Case_ID"],
                        seq=enode["Seq"],
                        performative=Performative(enode["Per_Name"]),
                        activity=enode["Act_Name"],
                        initiator=normalize_actor_id(enode["Has_Initiator_Actor"]),
                        receiver=normalize_actor_id(enode["Has_Receiver_Actor"]),
                        timestamp=timestamp,
                        event_stream=enode.get("EventStream"),
                        consumed_docs=frozenset(enode.get("Has_Consumed_Doc", ())),
                        produced_docs=frozenset(enode.get("Has_Produced_Doc", ())),
                    )
                )
            instances.append(ProcessInstance(inode["Case_ID"], events))
        processes.append(Process(pnode["Process_Name"], instances))

    return WorkflowLog(
        processes,
        actors,
        frozenset(r["Role_Name"] for r in doc["Roles"]),
        frozenset(u["Org_Unit_Name"] for u in doc["Org_Units"]),
        frozenset(d["Doc_Name"] for d in doc["Documents"]),
    )


def parse_tree(text: str) -> WorkflowLog:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LogParseError(f"JSON syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return tree_to_log(doc)


PARSERS = {"flat": parse_flat, "tree": parse_tree}
SERIALIZERS = {"flat": serialize_flat, "tree": serialize_tree}


def guess_format(path) -> str:
    return "tree" if Path(path).suffix.lower() == ".json" else "flat"


def read_log(path, fmt: Optional[str] = None) -> WorkflowLog:
    fmt = fmt or guess_format(path)
    return PARSERS[fmt](Path(path).read_text(encoding="utf-8"))


def write_log(log_: WorkflowLog, path, fmt: Optional[str] = None) -> None:
    fmt = fmt or guess_format(path)
    Path(path).write_text(SERIALIZERS[fmt](log_), encoding="utf-8", newline="")


@dataclass(frozen=True)
class FilterSpec:
    completed_only: bool = False
    logistics_activities: frozenset = frozenset()
    case_whitelist: Optional[frozenset] = None
    keep_performatives: Optional[frozenset] = None

    def __post_init__(self):
        object.__setattr__(self, "logistics_activities", frozenset(self.logistics_activities))
        if self.case_whitelist is not None:
            object.__setattr__(self, "case_whitelist", frozenset(self.case_whitelist))
        if self.keep_performatives is not None:
            object.__setattr__(self, "keep_performatives",
                               frozenset(Performative(p) for p in self.keep_performatives))


def incomplete_occurrences(inst: ProcessInstance) -> set:
    """Keys (activity, executor) of lifecycle occurrences that never reach ``completed``."""
    reached: dict[tuple, bool] = {}
    for ev in inst.events:
        if ev.is_lifecycle:
            key = (ev.activity, ev.initiator)
            reached[key] = reached.get(key, False) or ev.event_stream is LifecycleState.COMPLETED
    return {key for key, done in reached.items() if not done}


def filter_log(log_: WorkflowLog, spec: FilterSpec) -> WorkflowLog:
    """Drop events per ``spec``; registries are kept and seq is re-densified.

    ``completed_only`` acts on lifecycle occurrences (case, activity, executor)
    only; interaction events and execute lines without a lifecycle state carry
    no completion information and are kept.
    """
    processes = []
    for process in log_.processes:
        instances = []
        for inst in process.instances:
            if spec.case_whitelist is not None and inst.case_id not in spec.case_whitelist:
                continue
            dropped = incomplete_occurrences(inst) if spec.completed_only else set()
            kept = [
                ev
                for ev in inst.events
                if ev.activity not in spec.logistics_activities
                and (spec.keep_performatives is None or ev.performative in spec.keep_performatives)
                and not (ev.is_lifecycle and (ev.activity, ev.initiator) in dropped)
            ]
            if kept:
                events = [ev if ev.seq == i else replace(ev, seq=i) for i, ev in enumerate(kept)]
                instances.append(ProcessInstance(inst.case_id, events))
        if instances:
            processes.append(Process(process.process_name, instances))
    return WorkflowLog(processes, log_.actors, log_.roles, log_.org_units, log_.documents)


@dataclass
class ConversionSummary:
    events_read: int
    events_written: int
    violations: int
    input_format: str = ""
    output_format: str = ""
    messages: list = field(default_factory=list)

    def as_record(self) -> dict:
        return {
            "input_format": self.input_format,
            "output_format": self.output_format,
            "events_read": self.events_read,
            "events_written": self.events_written,
            "violations": self.violations,
        }


def convert(input_path, input_format: str, output_path, output_format: str) -> ConversionSummary:
    """Read a log in one encoding and write it in another.

    Raises :class:`LogParseError` (with location) or :class:`OSError`.
    """
    for fmt in (input_format, output_format):
        if fmt not in FORMATS:
            raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    log_ = read_log(input_path, input_format)
    report = validate_log(log_)
    write_log(log_, output_path, output_format)
    written = read_log(output_path, output_format).event_count
    return ConversionSummary(
        log_.event_count, written, len(report), input_format, output_format,
        [v.message for v in report],
    )
