import json

import pydot
import pytest
from hypothesis import given, strategies as st

from oracles import kind_config
from orgminer.generator import generate
from orgminer.model import Actor, EventLine, Process, ProcessInstance, build_registries
from orgminer.orgstruct import (
    InteractionGraph,
    StructureThresholds,
    build_interaction_graph,
    classify_component,
    components,
    mine_structures,
    structure_dot,
)


def graph(*edges):
    counts = {}
    for e in edges:
        counts[e] = counts.get(e, 0) + 1
    nodes = sorted({a for u, v, _ in counts for a in (u, v)})
    return InteractionGraph(tuple(nodes), counts)


def label(g, units=None, **thresholds):
    comp = g.nodes
    return classify_component(g, comp, StructureThresholds(**thresholds), units).label


def test_table2_graph_counts(table2):
    g = build_interaction_graph(table2)
    assert len(g.nodes) == 5
    assert len(g.edges) == 8
    assert g.message_count == 8
    assert components(g) == [("Amal", "Malik", "Sami"), ("Mahdi", "Salim")]


def test_table2_verdicts(table2):
    report = mine_structures(table2)
    assert [(v.component, v.label) for v in report.verdicts] == [
        (("Amal", "Malik", "Sami"), "market"),
        (("Mahdi", "Salim"), "strict_hierarchy"),
    ]
    assert report.summary["labels"] == {"strict_hierarchy": 1, "market": 1}
    market = report.verdicts[0]
    assert market.evidence == {"initiators": ["Malik"], "bidders": ["Amal", "Sami"]}
    assert [r.rule for r in market.rule_trace] == ["strict_hierarchy", "relaxed_hierarchy", "federation",
                                                   "market", "coalition"]


def test_strict_vs_relaxed():
    tree = graph(("a", "b", "delegate"), ("a", "c", "delegate"), ("b", "a", "inform"))
    assert label(tree) == "strict_hierarchy"
    two_bosses = graph(("a", "c", "delegate"), ("b", "c", "delegate"), ("a", "b", "delegate"))
    assert label(two_bosses) == "relaxed_hierarchy"


def test_delegation_cycle_is_not_a_hierarchy():
    cyc = graph(("a", "b", "delegate"), ("b", "a", "delegate"), ("a", "b", "inform"), ("b", "a", "inform"))
    assert label(cyc) == "unclassified"


def test_relaxed_by_small_cfp_share():
    g = graph(("a", "b", "delegate"), ("a", "c", "delegate"), ("b", "c", "inform"), ("c", "b", "inform"),
              ("b", "a", "inform"), ("a", "c", "cfp"))
    assert label(g) == "relaxed_hierarchy"  # 1 cfp of 6 multiedges
    assert label(g, theta_delegation_ratio=0.1) == "unclassified"


def test_federation_needs_single_boundary_actor_per_unit():
    units = {"a1": "U", "a2": "U", "b1": "V", "b2": "V"}
    g = graph(("a1", "a2", "request"), ("a2", "a1", "inform"), ("b1", "b2", "request"), ("b2", "b1", "inform"),
              ("a1", "b1", "request"), ("b1", "a1", "inform"))
    verdict = classify_component(g, g.nodes, StructureThresholds(), units)
    assert verdict.label == "federation"
    assert verdict.evidence["representatives"] == {"U": "a1", "V": "b1"}
    leaky = graph(*g.edges, ("a2", "b2", "request"))
    assert label(leaky, units) == "coalition"


def test_market_threshold():
    g = graph(("m", "x", "cfp"), ("x", "m", "propose"))
    assert label(g) == "unclassified"  # too few cfp edges for a market, and cfp rules out a coalition
    assert label(g, min_market_cfp_edges=1) == "market"


def test_coalition_reciprocity():
    g = graph(("a", "b", "request"), ("b", "a", "inform"), ("a", "c", "inform"))
    assert label(g) == "coalition"  # 1 of 2 pairs mutual
    assert label(g, theta_reciprocity=0.6) == "unclassified"


def test_thresholds_validate_and_load(tmp_path):
    with pytest.raises(ValueError):
        StructureThresholds(theta_reciprocity=1.5)
    with pytest.raises(ValueError):
        StructureThresholds(min_market_cfp_edges=-1)
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"theta_reciprocity": 0.9}))
    assert StructureThresholds.from_file(path).theta_reciprocity == 0.9
    path.write_text(json.dumps({"theta": 0.9}))
    with pytest.raises(ValueError, match="unknown threshold"):
        StructureThresholds.from_file(path)


def test_per_process_scopes():
    def inst(case, *msgs):
        return ProcessInstance(case, [EventLine(case, i, p, "x", a, b) for i, (p, a, b) in enumerate(msgs)])
    log = build_registries([
        Process("P", [inst("C1", ("delegate", "a", "b"))]),
        Process("Q", [inst("C2", ("request", "a", "b"), ("inform", "b", "a"))]),
    ], {})
    whole = mine_structures(log)
    assert whole.labels() == ["strict_hierarchy"]
    split = mine_structures(log, per_process=True)
    assert [(v.process, v.label) for v in split.verdicts] == [("P", "strict_hierarchy"), ("Q", "coalition")]


def test_system_and_lifecycle_excluded():
    log = build_registries([Process("P", [ProcessInstance("C1", [
        EventLine("C1", 0, "execute", "x", "a", "system", None, "started"),
        EventLine("C1", 1, "execute", "x", "a", "system"),
    ])])], {"a": Actor("a")})
    g = build_interaction_graph(log)
    assert g.nodes == () and g.edges == {}
    assert mine_structures(log).verdicts == []


def test_structure_dot_parses(table2):
    text = structure_dot(mine_structures(table2))
    (parsed,) = pydot.graph_from_dot_data(text)
    assert len(parsed.get_subgraphs()) == 2
    assert len(parsed.get_edges()) == 8


@given(st.sampled_from(["strict_hierarchy", "relaxed_hierarchy", "federation", "coalition", "market"]),
       st.integers(min_value=0, max_value=10_000))
def test_generated_structures_recovered(kind, seed):
    report = mine_structures(generate(kind_config(kind, seed)))
    assert report.labels() == [kind]
