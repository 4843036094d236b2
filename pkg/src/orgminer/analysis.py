"""Document flow, execution timing and Agent-Group-Role export."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import dot
from .model import SYSTEM, TERMINAL_STATES, LifecycleState, WorkflowLog
from .orgstruct import StructureReport, build_interaction_graph
from .protocols import ProtocolReport

S = LifecycleState

# Legal successor states; anything else marks the occurrence malformed.
_NEXT = {
    S.SCHEDULED: {S.STARTED, S.ABORTED},
    S.STARTED: {S.SUSPENDED, S.COMPLETED, S.ABORTED},
    S.SUSPENDED: {S.RESUMED, S.ABORTED},
    S.RESUMED: {S.SUSPENDED, S.COMPLETED, S.ABORTED},
    S.COMPLETED: set(),
    S.ABORTED: set(),
}
_OPENS = {S.STARTED, S.RESUMED}
_CLOSES = {S.SUSPENDED, S.COMPLETED, S.ABORTED}

INCOMPLETE = "incomplete-lifecycle"
MALFORMED = "malformed-lifecycle"


# -- documents ----------------------------------------------------------------


@dataclass
class DocumentFlowReport:
    activities: dict = field(default_factory=dict)  # activity -> {"consumed": {doc: n}, "produced": {doc: n}}
    documents: dict = field(default_factory=dict)  # doc -> {"producers": [...], "consumers": [...]}

    @property
    def empty(self) -> bool:
        return not self.activities

    def consumed(self, activity: str) -> set:
        return set(self.activities.get(activity, {}).get("consumed", ()))

    def produced(self, activity: str) -> set:
        return set(self.activities.get(activity, {}).get("produced", ()))

    def records(self) -> list[dict]:
        rows = [
            {"type": "activity", "activity": a, "consumed": v["consumed"], "produced": v["produced"]}
            for a, v in self.activities.items()
        ]
        rows += [
            {"type": "document", "document": d, "producers": v["producers"], "consumers": v["consumers"]}
            for d, v in self.documents.items()
        ]
        return rows


def mine_documents(log: WorkflowLog) -> DocumentFlowReport:
    """Per-activity consumed/produced documents with event counts, and the inverse index."""
    acts: dict[str, dict[str, dict[str, int]]] = {}
    for ev in log.events():
        if not ev.consumed_docs and not ev.produced_docs:
            continue
        entry = acts.setdefault(ev.activity, {"consumed": {}, "produced": {}})
        for kind, docs in (("consumed", ev.consumed_docs), ("produced", ev.produced_docs)):
            for d in docs:
                entry[kind][d] = entry[kind].get(d, 0) + 1
    report = DocumentFlowReport()
    docs: dict[str, dict[str, set]] = {}
    for activity in sorted(acts):
        entry = acts[activity]
        report.activities[activity] = {k: dict(sorted(entry[k].items())) for k in ("consumed", "produced")}
        for d in entry["produced"]:
            docs.setdefault(d, {"producers": set(), "consumers": set()})["producers"].add(activity)
        for d in entry["consumed"]:
            docs.setdefault(d, {"producers": set(), "consumers": set()})["consumers"].add(activity)
    report.documents = {d: {k: sorted(v[k]) for k in ("producers", "consumers")} for d, v in sorted(docs.items())}
    return report


# -- lifecycle occurrences ----------------------------------------------------


@dataclass(frozen=True)
class Occurrence:
    process: str
    case_id: str
    activity: str
    executor: str
    events: tuple
    waiting: Optional[float] = None  # seconds
    processing: Optional[float] = None
    flow: Optional[float] = None
    flags: tuple = ()

    @property
    def key(self) -> tuple:
        return (self.case_id, self.activity, self.executor)

    @property
    def states(self) -> tuple:
        return tuple(ev.event_stream for ev in self.events)

    @property
    def last_state(self) -> LifecycleState:
        return self.events[-1].event_stream

    @property
    def suspensions(self) -> int:
        return self.states.count(S.SUSPENDED)

    def as_record(self) -> dict:
        rec = {
            "type": "occurrence",
            "process": self.process,
            "case": self.case_id,
            "activity": self.activity,
            "executor": self.executor,
            "states": [str(s) for s in self.states],
        }
        for name in ("waiting", "processing", "flow"):
            value = getattr(self, name)
            if value is not None:
                rec[name] = value
        rec["flags"] = list(self.flags)
        return rec


def _times(events: list) -> tuple[Optional[float], Optional[float], Optional[float], tuple]:
    states = [ev.event_stream for ev in events]
    malformed = any(b not in _NEXT[a] for a, b in zip(states, states[1:]))
    complete = states[0] is S.SCHEDULED and states[-1] in TERMINAL_STATES
    flags = []
    if not complete:
        flags.append(INCOMPLETE)
    if malformed:
        flags.append(MALFORMED)
    if malformed or any(ev.timestamp is None for ev in events):
        return None, None, None, tuple(flags)

    def seconds(a, b):
        return (b.timestamp - a.timestamp).total_seconds()

    waiting = flow = processing = None
    if states[0] is S.SCHEDULED and len(states) > 1 and states[1] is S.STARTED:
        waiting = seconds(events[0], events[1])
    if complete:
        flow = seconds(events[0], events[-1])
    if S.STARTED in states and states[-1] in TERMINAL_STATES:
        start = states.index(S.STARTED)
        total, opened = 0.0, None
        for ev in events[start:]:
            if ev.event_stream in _OPENS:
                opened = ev
            elif ev.event_stream in _CLOSES and opened is not None:
                total += seconds(opened, ev)
                opened = None
        processing = total
    return waiting, processing, flow, tuple(flags)


def extract_occurrences(log: WorkflowLog) -> list[Occurrence]:
    """Group lifecycle events by (case, activity, executor), in order of first appearance."""
    out = []
    for process, inst in log.instances():
        groups: dict[tuple, list] = {}
        for ev in inst.events:
            if ev.is_lifecycle:
                groups.setdefault((ev.activity, ev.initiator), []).append(ev)
        for (activity, executor), events in groups.items():
            waiting, processing, flow, flags = _times(events)
            out.append(Occurrence(process.process_name, inst.case_id, activity, executor, tuple(events),
                                  waiting, processing, flow, flags))
    return out


# -- performance --------------------------------------------------------------


def _stats(values: list) -> dict:
    if not values:
        return {}
    return {"mean": sum(values) / len(values), "min": min(values), "max": max(values)}


@dataclass
class PerfReport:
    activities: dict = field(default_factory=dict)
    actors: dict = field(default_factory=dict)
    contingency: dict = field(default_factory=dict)  # template -> {state: count}
    occurrences: list = field(default_factory=list)

    def row_sums(self) -> dict:
        return {t: sum(row.values()) for t, row in self.contingency.items()}

    def column_sums(self) -> dict:
        cols: dict[str, int] = {}
        for row in self.contingency.values():
            for state, n in row.items():
                cols[state] = cols.get(state, 0) + n
        return dict(sorted(cols.items()))

    def total(self) -> int:
        return sum(self.row_sums().values())

    def records(self) -> list[dict]:
        rows = [{"type": "activity", "activity": a, **v} for a, v in self.activities.items()]
        rows += [{"type": "actor", "actor": a, **v} for a, v in self.actors.items()]
        rows += [
            {"type": "contingency", "template": t, "state": s, "count": n}
            for t, row in self.contingency.items()
            for s, n in row.items()
        ]
        return rows


def attribute_occurrence(occ: Occurrence, protocol_report: ProtocolReport):
    """The complete protocol instance whose conversation the occurrence belongs to, if any."""
    for inst in protocol_report.complete():
        if (inst.process, inst.case_id, inst.activity) == (occ.process, occ.case_id, occ.activity) and (
            occ.executor == inst.initiator or occ.executor in inst.participants
        ):
            return inst
    return None


def perf_report(log: WorkflowLog, protocol_report: ProtocolReport) -> PerfReport:
    occurrences = extract_occurrences(log)
    report = PerfReport(occurrences=occurrences)

    by_activity: dict[str, list] = {}
    for occ in occurrences:
        by_activity.setdefault(occ.activity, []).append(occ)
    for activity in sorted(by_activity):
        occs = by_activity[activity]
        entry = {"occurrences": len(occs)}
        for name in ("waiting", "processing", "flow"):
            stats = _stats([getattr(o, name) for o in occs if getattr(o, name) is not None])
            if stats:
                entry[name] = stats
        report.activities[activity] = entry

    for actor in sorted({o.executor for o in occurrences}):
        mine = [o for o in occurrences if o.executor == actor]
        report.actors[actor] = {
            "occurrences": len(mine),
            "completed": sum(1 for o in mine if o.last_state is S.COMPLETED),
            "suspended": sum(1 for o in mine if o.suspensions),
            "aborted": sum(1 for o in mine if o.last_state is S.ABORTED),
        }

    table: dict[str, dict[str, int]] = {}
    for occ in occurrences:
        inst = attribute_occurrence(occ, protocol_report)
        if inst is None:
            continue
        row = table.setdefault(inst.template, {})
        state = str(occ.last_state)
        row[state] = row.get(state, 0) + 1
    report.contingency = {t: dict(sorted(row.items())) for t, row in sorted(table.items())}
    return report


# -- Agent-Group-Role export --------------------------------------------------


def export_agr_dot(log: WorkflowLog, structure_report: Optional[StructureReport] = None) -> str:
    """Org units as clusters, actors as role-labelled nodes, interactions as edges.

    Each cluster is annotated with the verdicts of the structure components
    its members belong to. Actors without a unit sit outside every cluster.
    """
    graph = build_interaction_graph(log)
    verdict_of: dict[str, set] = {}
    if structure_report is not None:
        for v in structure_report.verdicts:
            for actor in v.component:
                verdict_of.setdefault(actor, set()).add(v.label)

    actors = [a for a in log.actors.values() if a.actor_id != SYSTEM]
    units: dict[Optional[str], list] = {}
    for a in actors:
        units.setdefault(a.org_unit, []).append(a)

    def node(a, indent):
        roles = ", ".join(sorted(a.roles))
        label = f"{a.actor_id}\n({roles})" if roles else a.actor_id
        return f"{indent}{dot.quote(a.actor_id)}{dot.attrs(label=label)};"

    lines = ["digraph agr {"]
    if actors:
        lines.append("  node [shape=ellipse];")
    named = sorted(u for u in units if u is not None)
    for n, unit in enumerate(named):
        members = units[unit]
        labels = sorted({lab for a in members for lab in verdict_of.get(a.actor_id, ())})
        title = f"{unit} [{', '.join(labels)}]" if labels else unit
        lines.append(f"  subgraph cluster_{n} {{")
        lines.append(f"    label={dot.quote(title)};")
        lines.extend(node(a, "    ") for a in members)
        lines.append("  }")
    lines.extend(node(a, "  ") for a in units.get(None, ()))
    for (u, v, p), count in graph.edges.items():
        lines.append(f"  {dot.quote(u)} -> {dot.quote(v)}{dot.attrs(label=f'{p} x{count}', color=dot.edge_color(p))};")
    lines.append("}")
    return "\n".join(lines) + "\n"
