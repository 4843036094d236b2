"""Organizational structure discovery over the actor interaction graph."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import networkx as nx

from . import dot
from .model import SYSTEM, WorkflowLog

DELEGATE = "delegate"
CFP = "cfp"

LABELS = ("strict_hierarchy", "relaxed_hierarchy", "federation", "market", "coalition")
UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class InteractionGraph:
    nodes: tuple = ()
    edges: Mapping = field(default_factory=dict)  # (initiator, receiver, performative) -> count

    def delegation_edges(self, within=None) -> set:
        return self._view(DELEGATE, within)

    def cfp_edges(self, within=None) -> set:
        return self._view(CFP, within)

    def _view(self, performative, within) -> set:
        return {
            (u, v)
            for (u, v, p) in self.edges
            if p == performative and (within is None or (u in within and v in within))
        }

    def support(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((u, v) for u, v, _ in self.edges)
        return g

    @property
    def message_count(self) -> int:
        return sum(self.edges.values())


def build_interaction_graph(log: WorkflowLog, process: Optional[str] = None) -> InteractionGraph:
    """Aggregate interaction events into performative-labelled multiedges.

    Lifecycle events and anything addressed to ``system`` are left out.
    """
    counts: dict[tuple, int] = {}
    for proc, inst in log.instances():
        if process is not None and proc.process_name != process:
            continue
        for ev in inst.events:
            if ev.is_lifecycle or ev.receiver == SYSTEM or ev.initiator == SYSTEM:
                continue
            key = (ev.initiator, ev.receiver, str(ev.performative))
            counts[key] = counts.get(key, 0) + 1
    nodes = sorted({a for u, v, _ in counts for a in (u, v)})
    return InteractionGraph(tuple(nodes), dict(sorted(counts.items())))


def components(graph: InteractionGraph) -> list[tuple]:
    comps = [tuple(sorted(c)) for c in nx.connected_components(graph.support())]
    return sorted(comps, key=lambda c: c[0])


@dataclass(frozen=True)
class StructureThresholds:
    theta_reciprocity: float = 0.5
    theta_delegation_ratio: float = 0.2
    min_market_cfp_edges: int = 2

    def __post_init__(self):
        for name in ("theta_reciprocity", "theta_delegation_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.min_market_cfp_edges < 0 or int(self.min_market_cfp_edges) != self.min_market_cfp_edges:
            raise ValueError("min_market_cfp_edges must be a non-negative integer")

    @classmethod
    def from_file(cls, path) -> "StructureThresholds":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(doc) - {"theta_reciprocity", "theta_delegation_ratio", "min_market_cfp_edges"}
        if unknown:
            raise ValueError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class RuleOutcome:
    rule: str
    holds: bool
    detail: str


@dataclass(frozen=True)
class StructureVerdict:
    component: tuple
    label: str
    evidence: dict
    rule_trace: tuple
    process: Optional[str] = None

    def as_record(self) -> dict:
        rec = {"type": "verdict"}
        if self.process is not None:
            rec["process"] = self.process
        rec.update(
            component=list(self.component),
            label=self.label,
            evidence=self.evidence,
            rule_trace=[{"rule": r.rule, "holds": r.holds, "detail": r.detail} for r in self.rule_trace],
        )
        return rec


def _reciprocity(graph: InteractionGraph, comp: set) -> float:
    """Share of communicating actor pairs that exchanged messages in both directions."""
    directed = {(u, v) for u, v, _ in graph.edges if u in comp and v in comp}
    pairs = {tuple(sorted(e)) for e in directed}
    if not pairs:
        return 0.0
    mutual = sum(1 for u, v in pairs if (u, v) in directed and (v, u) in directed)
    return mutual / len(pairs)


def classify_component(graph: InteractionGraph, component, thresholds: StructureThresholds = StructureThresholds(),
                       unit_map: Optional[Mapping[str, str]] = None) -> StructureVerdict:
    """Label one connected component; the first rule that holds wins."""
    comp = set(component)
    unit_map = unit_map or {}
    delegations = graph.delegation_edges(comp)
    cfps = graph.cfp_edges(comp)
    multiedges = [k for k in graph.edges if k[0] in comp and k[1] in comp]

    dag = nx.DiGraph(sorted(delegations))
    acyclic = nx.is_directed_acyclic_graph(dag)
    bosses = {v: sorted(dag.predecessors(v)) for v in dag.nodes}
    multi_boss = sorted(v for v, b in bosses.items() if len(b) >= 2)
    roots = sorted(v for v, b in bosses.items() if not b)
    cfp_share = len(cfps) / len(multiedges) if multiedges else 0.0

    trace = []
    evidence = {}

    strict = bool(delegations) and acyclic and not multi_boss and not cfps
    trace.append(RuleOutcome(
        "strict_hierarchy", strict,
        f"delegation_edges={len(delegations)} acyclic={acyclic} multi_delegator_nodes={len(multi_boss)} "
        f"cfp_edges={len(cfps)}",
    ))
    evidence["strict_hierarchy"] = {"roots": roots, "edges": [list(e) for e in sorted(delegations)]}

    relaxed = bool(delegations) and acyclic and (
        bool(multi_boss) or cfp_share <= thresholds.theta_delegation_ratio
    )
    trace.append(RuleOutcome(
        "relaxed_hierarchy", relaxed,
        f"delegation_edges={len(delegations)} acyclic={acyclic} multi_delegator_nodes={len(multi_boss)} "
        f"cfp_share={cfp_share:.4f} theta={thresholds.theta_delegation_ratio}",
    ))
    evidence["relaxed_hierarchy"] = {
        "roots": roots,
        "edges": [list(e) for e in sorted(delegations)],
        "multi_delegator_nodes": multi_boss,
    }

    units = {a: unit_map.get(a) for a in comp}
    partitioned = all(u is not None for u in units.values())
    unit_names = sorted({u for u in units.values() if u is not None})
    boundary: dict[str, set] = {u: set() for u in unit_names}
    if partitioned:
        for u, v, _ in graph.edges:
            if u in comp and v in comp and units[u] != units[v]:
                boundary[units[u]].add(u)
                boundary[units[v]].add(v)
    federation = partitioned and len(unit_names) >= 2 and all(len(b) <= 1 for b in boundary.values())
    trace.append(RuleOutcome(
        "federation", federation,
        f"units={len(unit_names) if partitioned else 'unassigned'} "
        f"max_boundary_actors={max((len(b) for b in boundary.values()), default=0)}",
    ))
    evidence["federation"] = {
        "representatives": {u: (sorted(b)[0] if b else None) for u, b in boundary.items()}
    }

    market = not delegations and len(cfps) >= thresholds.min_market_cfp_edges
    trace.append(RuleOutcome(
        "market", market,
        f"delegation_edges={len(delegations)} cfp_edges={len(cfps)} min={thresholds.min_market_cfp_edges}",
    ))
    evidence["market"] = {
        "initiators": sorted({u for u, _ in cfps}),
        "bidders": sorted({v for _, v in cfps}),
    }

    reciprocity = _reciprocity(graph, comp)
    coalition = not delegations and not cfps and reciprocity >= thresholds.theta_reciprocity
    trace.append(RuleOutcome(
        "coalition", coalition,
        f"delegation_edges={len(delegations)} cfp_edges={len(cfps)} reciprocity={reciprocity:.4f} "
        f"theta={thresholds.theta_reciprocity}",
    ))
    evidence["coalition"] = {"reciprocity": round(reciprocity, 6)}

    label = next((r.rule for r in trace if r.holds), UNCLASSIFIED)
    return StructureVerdict(
        component=tuple(sorted(comp)),
        label=label,
        evidence=evidence.get(label, {}),
        rule_trace=tuple(trace),
    )


@dataclass
class StructureReport:
    verdicts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    graphs: dict = field(default_factory=dict)  # process (or None) -> InteractionGraph

    def labels(self) -> list[str]:
        return [v.label for v in self.verdicts]

    def records(self) -> list[dict]:
        rows = [v.as_record() for v in self.verdicts]
        rows.append({"type": "summary", **self.summary})
        return rows


def mine_structures(log: WorkflowLog, thresholds: StructureThresholds = StructureThresholds(),
                    per_process: bool = False) -> StructureReport:
    """Classify every connected component of the interaction graph."""
    scopes = [p.process_name for p in log.processes] if per_process else [None]
    report = StructureReport()
    unit_map = log.unit_map()
    nodes = edges = messages = 0
    for scope in scopes:
        graph = build_interaction_graph(log, scope)
        report.graphs[scope] = graph
        nodes += len(graph.nodes)
        edges += len(graph.edges)
        messages += graph.message_count
        for comp in components(graph):
            verdict = classify_component(graph, comp, thresholds, unit_map)
            if scope is not None:
                verdict = StructureVerdict(verdict.component, verdict.label, verdict.evidence,
                                           verdict.rule_trace, scope)
            report.verdicts.append(verdict)
    report.summary = {
        "nodes": nodes,
        "multiedges": edges,
        "messages": messages,
        "components": len(report.verdicts),
        "labels": {label: report.labels().count(label) for label in LABELS + (UNCLASSIFIED,)
                   if label in report.labels()},
    }
    return report


def structure_dot(report: StructureReport) -> str:
    """One cluster per component, titled with its verdict; edges coloured by performative class."""
    lines = ["digraph orgstruct {", "  node [shape=box];"]
    for n, verdict in enumerate(report.verdicts):
        graph = report.graphs[verdict.process]
        prefix = f"{verdict.process}/" if verdict.process is not None else ""
        lines.append(f"  subgraph cluster_{n} {{")
        lines.append(f"    label={dot.quote(prefix + verdict.label)};")
        for actor in verdict.component:
            lines.append(f"    {dot.quote(prefix + actor)}{dot.attrs(label=actor)};")
        lines.append("  }")
        comp = set(verdict.component)
        for (u, v, p), count in graph.edges.items():
            if u in comp:
                lines.append(
                    f"  {dot.quote(prefix + u)} -> {dot.quote(prefix + v)}"
                    f"{dot.attrs(label=f'{p} x{count}', color=dot.edge_color(p))};"
                )
    lines.append("}")
    return "\n".join(lines) + "\n"
