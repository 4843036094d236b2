"""Seeded synthetic workflow logs with known organizational ground truth.

Randomness comes from Python's Mersenne Twister (MT19937, ``random.Random``)
drawn exclusively through ``random()``, the one method whose output stream the
standard library promises to keep identical across versions and platforms.
Every case gets its own stream seeded from ``sha256(f"{seed}/case/{index}")``,
so cases can be produced independently and in any order.
"""

from __future__ import annotations

import functools
import hashlib
import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import jsonschema
import networkx as nx

from .logio import parse_timestamp
from .model import (
    SYSTEM,
    Actor,
    EventLine,
    LifecycleState,
    Process,
    ProcessInstance,
    WorkflowLog,
    build_registries,
)
from .protocols import EACH, ONE, P_TO_I, P_TO_SYSTEM, ProtocolTemplate

STRUCTURE_KINDS = ("strict_hierarchy", "relaxed_hierarchy", "federation", "coalition", "market")
MIN_POPULATION = {
    "strict_hierarchy": 2,
    "relaxed_hierarchy": 3,
    "federation": 4,
    "coalition": 3,
    "market": 3,
}
# Protocols each structure can carry without blurring its signature, and the
# ones of which at least one must have positive weight.
ALLOWED_PROTOCOLS = {
    "strict_hierarchy": ("delegation", "request", "vote"),
    "relaxed_hierarchy": ("delegation", "request", "vote"),
    "federation": ("request", "vote", "contract-net", "english-auction"),
    "coalition": ("request", "vote"),
    "market": ("contract-net", "english-auction", "request", "vote"),
}
ANCHOR_PROTOCOLS = {
    "strict_hierarchy": ("delegation",),
    "relaxed_hierarchy": ("delegation",),
    "federation": ALLOWED_PROTOCOLS["federation"],
    "coalition": ALLOWED_PROTOCOLS["coalition"],
    "market": ("contract-net", "english-auction"),
}


class ConfigError(ValueError):
    pass


class BindingError(ValueError):
    pass


def derive_seed(seed: int, *labels) -> int:
    text = "/".join([str(seed), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


class RandomStream:
    """Portable random draws built only on ``random.Random.random()``."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def random(self) -> float:
        return self._rng.random()

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("empty range")
        return min(int(self._rng.random() * n), n - 1)

    def chance(self, p: float) -> bool:
        return self._rng.random() < p

    def choice(self, items: Sequence):
        return items[self.below(len(items))]

    def shuffled(self, items: Sequence) -> list:
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def sample(self, items: Sequence, k: int) -> list:
        return self.shuffled(items)[:k]

    def subset(self, items: Sequence, minimum: int = 1) -> list:
        """Random subset of size in [minimum, len(items)], keeping input order."""
        k = minimum + self.below(len(items) - minimum + 1)
        picked = set(self.sample(range(len(items)), k))
        return [x for i, x in enumerate(items) if i in picked]

    def weighted(self, weights: Mapping[str, float]) -> str:
        keys = sorted(k for k, w in weights.items() if w > 0)
        total = sum(weights[k] for k in keys)
        r = self._rng.random() * total
        for k in keys:
            r -= weights[k]
            if r < 0:
                return k
        return keys[-1]


@dataclass(frozen=True)
class ActorSpec:
    id: str
    name: str = ""
    roles: tuple = ()
    org_unit: Optional[str] = None


@dataclass(frozen=True)
class ProcessSpec:
    name: str
    activities: tuple = ()


@dataclass(frozen=True)
class StructureSpec:
    kind: str
    edges: tuple = ()
    branching: Optional[int] = None
    representatives: Mapping = field(default_factory=dict)
    members: tuple = ()
    initiators: tuple = ()
    bidders: object = None  # int (pool size) or tuple of actor ids


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int
    actors: tuple
    structure: StructureSpec
    activities: tuple
    cases: int = 10
    processes: tuple = (ProcessSpec("default"),)
    protocol_mix: Mapping = field(default_factory=dict)
    instances_per_case: int = 1
    interleave: bool = False
    timestamp_base: datetime = datetime(2024, 1, 1, 8, 0, 0)
    mean_step: float = 300.0
    case_interval: float = 3600.0
    report_back: float = 1.0
    suspend_rate: float = 0.1
    abort_rate: float = 0.05
    propose_rate: float = 0.7
    accept_rate: float = 0.5
    max_rounds: int = 3
    documents: Mapping = field(default_factory=dict)

    @property
    def mix(self) -> dict:
        """Protocol weights; an empty mix means uniform over the structure's protocols."""
        if self.protocol_mix:
            return dict(self.protocol_mix)
        return {p: 1.0 for p in ALLOWED_PROTOCOLS[self.structure.kind]}

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        errors = sorted(jsonschema.Draft202012Validator(_config_schema()).iter_errors(doc),
                        key=lambda e: list(map(str, e.absolute_path)))
        if errors:
            err = errors[0]
            where = "/".join(map(str, err.absolute_path)) or "<root>"
            raise ConfigError(f"schema violation at {where}: {err.message}")
        s = doc["structure"]
        bidders = s.get("bidders")
        structure = StructureSpec(
            kind=s["kind"],
            edges=tuple(tuple(e) for e in s.get("edges", ())),
            branching=s.get("branching"),
            representatives=dict(s.get("representatives", {})),
            members=tuple(s.get("members", ())),
            initiators=tuple(s.get("initiators", ())),
            bidders=tuple(bidders) if isinstance(bidders, list) else bidders,
        )
        kwargs = {
            k: doc[k]
            for k in ("cases", "instances_per_case", "interleave", "mean_step", "case_interval",
                      "report_back", "suspend_rate", "abort_rate", "propose_rate", "accept_rate",
                      "max_rounds", "protocol_mix")
            if k in doc
        }
        if "timestamp_base" in doc:
            try:
                kwargs["timestamp_base"] = parse_timestamp(doc["timestamp_base"])
            except ValueError:
                raise ConfigError(f"unparseable timestamp_base {doc['timestamp_base']!r}") from None
        if "processes" in doc:
            kwargs["processes"] = tuple(ProcessSpec(p["name"], tuple(p.get("activities", ())))
                                        for p in doc["processes"])
        if "documents" in doc:
            kwargs["documents"] = {
                a: {"consumed": tuple(d.get("consumed", ())), "produced": tuple(d.get("produced", ()))}
                for a, d in doc["documents"].items()
            }
        return cls(
            seed=doc["seed"],
            actors=tuple(ActorSpec(a["id"], a.get("name", ""), tuple(a.get("roles", ())),
                                   a.get("org_unit")) for a in doc["actors"]),
            structure=structure,
            activities=tuple(doc["activities"]),
            **kwargs,
        )

    @classmethod
    def from_file(cls, path) -> "GeneratorConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON syntax error at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)


@functools.lru_cache(maxsize=None)
def _config_schema() -> dict:
    return json.loads(resources.files("orgminer").joinpath("schemas/config.schema.json").read_text())


# -- structure topologies -----------------------------------------------------


@dataclass
class Topology:
    """Who may talk to whom under a structure kind.

    ``coverage`` lists (protocol, initiator, participants) instances that must
    all be emitted so every structural edge shows up in the log at least once.
    """

    kind: str
    edges: list = field(default_factory=list)
    units: dict = field(default_factory=dict)
    reps: dict = field(default_factory=dict)
    members: list = field(default_factory=list)
    initiators: list = field(default_factory=list)
    bidders: list = field(default_factory=list)

    def children(self, boss) -> list:
        return [v for u, v in self.edges if u == boss]

    def draw(self, protocol: str, rng: RandomStream) -> tuple[str, list]:
        if self.kind in ("strict_hierarchy", "relaxed_hierarchy"):
            if protocol == "vote":
                boss = rng.choice(sorted({u for u, _ in self.edges}))
                return boss, self.children(boss)
            boss, sub = rng.choice(self.edges)
            return boss, [sub]
        if self.kind == "federation":
            channels = [("unit", u) for u, m in self.units.items() if len(m) >= 2] + [("cross", None)]
            kind, unit = rng.choice(channels)
            if kind == "unit":
                initiator = rng.choice(self.units[unit])
                pool = [a for a in self.units[unit] if a != initiator]
            else:
                initiator = rng.choice(list(self.reps.values()))
                pool = [r for r in self.reps.values() if r != initiator]
            return initiator, _participants_for(protocol, pool, rng, minimum=1)
        if self.kind == "coalition":
            initiator = rng.choice(self.members)
            pool = [a for a in self.members if a != initiator]
            return initiator, _participants_for(protocol, pool, rng, minimum=1)
        initiator = rng.choice(self.initiators)
        return initiator, _participants_for(protocol, self.bidders, rng, minimum=2)

    def coverage(self, mix: Mapping[str, float], rng: RandomStream) -> list[tuple]:
        anchors = {p: w for p, w in mix.items() if p in ANCHOR_PROTOCOLS[self.kind] and w > 0}
        out = []

        def cover(initiator, pool):
            protocol = rng.weighted(anchors)
            if protocol in ("request", "delegation"):
                out.extend((protocol, initiator, [p]) for p in pool)
            else:
                out.append((protocol, initiator, list(pool)))

        if self.kind in ("strict_hierarchy", "relaxed_hierarchy"):
            out.extend(("delegation", u, [v]) for u, v in self.edges)
        elif self.kind == "federation":
            for unit, members in self.units.items():
                rep = self.reps[unit]
                pool = [a for a in members if a != rep]
                if pool:
                    cover(rep, pool)
            reps = list(self.reps.values())
            cover(reps[0], reps[1:])
        elif self.kind == "coalition":
            for a, b in zip(self.members, self.members[1:]):
                cover(a, [b])
        else:
            for initiator in self.initiators:
                cover(initiator, self.bidders)
        return out


def _participants_for(protocol: str, pool: list, rng: RandomStream, minimum: int) -> list:
    if protocol in ("request", "delegation"):
        return [rng.choice(pool)]
    if protocol == "vote":
        return list(pool)
    return rng.subset(pool, min(minimum, len(pool)))


def _hierarchy_edges(cfg: GeneratorConfig, ids: list) -> list[tuple]:
    s = cfg.structure
    if s.edges:
        return [tuple(e) for e in s.edges]
    b = s.branching or 2
    edges = [(ids[(i - 1) // b], ids[i]) for i in range(1, len(ids))]
    if s.kind == "relaxed_hierarchy":
        last = len(ids) - 1
        parent = (last - 1) // b
        extra = next(j for j in range(last) if j != parent)
        edges.append((ids[extra], ids[last]))
    return edges


def build_topology(cfg: GeneratorConfig) -> Topology:
    """Resolve and check the structure; raise :class:`ConfigError` naming the violated rule."""
    s = cfg.structure
    kind = s.kind
    if kind not in STRUCTURE_KINDS:
        raise ConfigError(f"unknown structure kind {kind!r}")
    ids = [a.id for a in cfg.actors]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate actor ids")
    if any(i.lower() == SYSTEM for i in ids):
        raise ConfigError("actor id 'system' is reserved")
    if len(ids) < MIN_POPULATION[kind]:
        raise ConfigError(f"{kind} needs at least {MIN_POPULATION[kind]} actors, got {len(ids)}")
    known = set(ids)

    mix = cfg.mix
    if not any(w > 0 for w in mix.values()):
        raise ConfigError("protocol_mix weights are all zero")
    for p, w in mix.items():
        if w > 0 and p not in ALLOWED_PROTOCOLS[kind]:
            raise ConfigError(f"protocol {p!r} is not compatible with structure {kind!r}")
    if not any(mix.get(p, 0) > 0 for p in ANCHOR_PROTOCOLS[kind]):
        raise ConfigError(f"{kind} needs positive weight on one of {list(ANCHOR_PROTOCOLS[kind])}")

    units: dict[str, list] = {}
    for a in cfg.actors:
        if a.org_unit is not None:
            units.setdefault(a.org_unit, []).append(a.id)

    topo = Topology(kind)
    if kind in ("strict_hierarchy", "relaxed_hierarchy"):
        edges = _hierarchy_edges(cfg, ids)
        for u, v in edges:
            if u not in known or v not in known:
                raise ConfigError(f"hierarchy edge ({u!r}, {v!r}) names an unknown actor")
            if u == v:
                raise ConfigError(f"hierarchy edge ({u!r}, {v!r}) is a self-loop")
        if len(set(edges)) != len(edges):
            raise ConfigError("duplicate hierarchy edge")
        g = nx.DiGraph(edges)
        if not nx.is_directed_acyclic_graph(g):
            raise ConfigError("hierarchy edges contain a cycle")
        max_in = max(d for _, d in g.in_degree())
        if kind == "strict_hierarchy" and max_in > 1:
            raise ConfigError("strict_hierarchy edges must form a forest (in-degree <= 1)")
        if kind == "relaxed_hierarchy" and max_in < 2:
            raise ConfigError("relaxed_hierarchy needs an actor with at least two superiors")
        topo.edges = edges
    elif kind == "federation":
        missing = [a.id for a in cfg.actors if a.org_unit is None]
        if missing:
            raise ConfigError(f"federation actors without org unit: {missing}")
        if len(units) < 2:
            raise ConfigError("federation needs at least 2 org units")
        reps = {}
        for unit, members in units.items():
            rep = s.representatives.get(unit, members[0])
            if rep not in members:
                raise ConfigError(f"representative {rep!r} is not a member of unit {unit!r}")
            reps[unit] = rep
        for unit in s.representatives:
            if unit not in units:
                raise ConfigError(f"representative given for unknown unit {unit!r}")
        topo.units, topo.reps = units, reps
    else:
        if len(units) > 1:
            raise ConfigError(f"{kind} actors must share a single org unit (or have none)")
        if kind == "coalition":
            members = list(s.members) or ids
            if len(members) < 3 or not set(members) <= known:
                raise ConfigError("coalition needs at least 3 known members")
            topo.members = members
        else:
            if isinstance(s.bidders, tuple):
                bidders = list(s.bidders)
            else:
                size = s.bidders if s.bidders is not None else len(ids) - max(1, len(ids) // 4)
                if size >= len(ids):
                    raise ConfigError("market bidder pool must leave at least one initiator")
                bidders = ids[len(ids) - size:]
            initiators = list(s.initiators) or [i for i in ids if i not in bidders]
            if not set(bidders) <= known or not set(initiators) <= known:
                raise ConfigError("market names unknown actors")
            if set(bidders) & set(initiators):
                raise ConfigError("market initiators and bidders overlap")
            if len(bidders) < 2 or not initiators:
                raise ConfigError("market needs at least 2 bidders and 1 initiator")
            topo.bidders, topo.initiators = bidders, initiators

    if cfg.cases < 0:
        raise ConfigError("cases must be non-negative")
    if not cfg.activities and not all(p.activities for p in cfg.processes):
        raise ConfigError("no activities")
    if not cfg.processes:
        raise ConfigError("at least one process is required")
    if cfg.mean_step <= 0:
        raise ConfigError("mean_step must be positive")
    return topo


# -- protocol emission --------------------------------------------------------


@dataclass(frozen=True)
class LifecycleOptions:
    suspend_rate: float = 0.1
    abort_rate: float = 0.05
    consumed: tuple = ()
    produced: tuple = ()


@dataclass(frozen=True)
class EmitOptions:
    winner: Optional[str] = None
    report_back: float = 1.0
    propose_rate: float = 0.7
    accept_rate: float = 0.5
    max_rounds: int = 3
    shuffle: bool = True
    lifecycle: Optional[LifecycleOptions] = None  # None: one plain Execute line per execution


@dataclass
class _Emission:
    messages: list = field(default_factory=list)  # (performative, initiator, receiver, state, consumed, produced)
    executor: Optional[str] = None
    terminal: Optional[str] = None
    winners: tuple = ()

    def send(self, performative, initiator, receiver):
        self.messages.append((performative, initiator, receiver, None, (), ()))

    def execute(self, actor, rng: RandomStream, opts: EmitOptions) -> str:
        self.executor = actor
        lc = opts.lifecycle
        if lc is None:
            self.messages.append(("execute", actor, SYSTEM, None, (), ()))
            self.terminal = None
            return LifecycleState.COMPLETED.value
        self.messages.append(("execute", actor, SYSTEM, "scheduled", (), ()))
        self.messages.append(("execute", actor, SYSTEM, "started", lc.consumed, ()))
        pauses = 0
        while pauses < 3 and rng.chance(lc.suspend_rate):
            self.messages.append(("execute", actor, SYSTEM, "suspended", (), ()))
            self.messages.append(("execute", actor, SYSTEM, "resumed", (), ()))
            pauses += 1
        if rng.chance(lc.abort_rate):
            self.messages.append(("execute", actor, SYSTEM, "aborted", (), ()))
            self.terminal = "aborted"
        else:
            self.messages.append(("execute", actor, SYSTEM, "completed", (), lc.produced))
            self.terminal = "completed"
        return self.terminal


def _order(items: list, rng: RandomStream, opts: EmitOptions, first=None) -> list:
    if opts.shuffle:
        return rng.shuffled(items)
    if first is not None and first in items:
        return [first] + [x for x in items if x != first]
    return list(items)


def _emit_delegation(em, initiator, parts, rng, opts):
    sub = parts[0]
    em.send("delegate", initiator, sub)
    em.execute(sub, rng, opts)
    if rng.chance(opts.report_back):
        em.send("inform", sub, initiator)


def _emit_request(em, initiator, parts, rng, opts):
    target = parts[0]
    em.send("request", initiator, target)
    outcome = em.execute(target, rng, opts)
    em.send("failure" if outcome == "aborted" else "inform", target, initiator)


def _award(em, initiator, proposers, winner, rng, opts):
    em.winners = (winner,)
    for p in _order(proposers, rng, opts, first=winner):
        em.send("accept-proposal" if p == winner else "reject-proposal", initiator, p)
    em.execute(winner, rng, opts)


def _emit_contract_net(em, initiator, parts, rng, opts):
    if opts.winner is not None and opts.winner not in parts:
        raise BindingError(f"forced winner {opts.winner!r} is not a participant")
    for p in _order(parts, rng, opts):
        em.send("cfp", initiator, p)
    proposes = {p: (p == opts.winner or rng.chance(opts.propose_rate)) for p in parts}
    if not any(proposes.values()):
        proposes[rng.choice(parts)] = True
    proposers = [p for p in parts if proposes[p]]
    winner = opts.winner if opts.winner is not None else rng.choice(proposers)
    for p in _order(parts, rng, opts, first=winner):
        em.send("propose" if proposes[p] else "refuse", p, initiator)
    _award(em, initiator, proposers, winner, rng, opts)


def _emit_english_auction(em, initiator, parts, rng, opts):
    if opts.winner is not None and opts.winner not in parts:
        raise BindingError(f"forced winner {opts.winner!r} is not a participant")
    rounds = 2 + rng.below(max(1, opts.max_rounds - 1))
    active = list(parts)
    for r in range(rounds):
        if r > 0 and len(active) > 1:
            keep = [p for p in active if p == opts.winner or rng.chance(0.5)]
            active = keep or [rng.choice(active)]
        for p in _order(parts, rng, opts):
            em.send("cfp", initiator, p)
        for p in _order(active, rng, opts, first=opts.winner):
            em.send("propose", p, initiator)
    winner = opts.winner if opts.winner is not None else rng.choice(active)
    _award(em, initiator, active, winner, rng, opts)


def _emit_vote(em, initiator, parts, rng, opts):
    for p in _order(parts, rng, opts):
        em.send("propose", initiator, p)
    for p in _order(parts, rng, opts):
        em.send("accept-proposal" if rng.chance(opts.accept_rate) else "reject-proposal", p, initiator)
    for p in _order(parts, rng, opts):
        em.send("inform", initiator, p)


def _emit_walk(em, template: ProtocolTemplate, initiator, parts, rng, opts):
    """Random accepted walk of an arbitrary template (used for user-defined protocols)."""
    outgoing = template.outgoing
    state = template.start
    replies: dict[str, str] = {}
    for _ in range(64):
        options = []
        for ti in outgoing.get(state, ()):
            t = template.transitions[ti]
            if t.among is not None:
                pool = [p for p in parts if replies.get(p) in t.among]
            else:
                pool = list(parts)
            if pool:
                options.append((t, pool))
        if state in template.accepting and (not options or rng.chance(0.5)):
            return
        if not options:
            break
        t, pool = rng.choice(options)
        if t.multiplicity == ONE:
            group = [rng.choice(pool)]
        elif t.multiplicity == EACH:
            group = _order(pool, rng, opts)
        else:
            group = rng.subset(pool, 1)
        perfs = sorted(t.performatives)
        chosen = [rng.choice(perfs) for _ in group]
        for i, need in enumerate(sorted(t.require)):
            if need not in chosen and i < len(chosen):
                chosen[i] = need
        if t.direction == P_TO_I:
            replies = {}
        for p, perf in zip(group, chosen):
            if t.outbound:
                em.send(perf, initiator, p)
            elif t.direction == P_TO_I:
                em.send(perf, p, initiator)
                replies[p] = perf
            elif t.direction == P_TO_SYSTEM:
                em.messages.append((perf, p, SYSTEM, None, (), ()))
        state = t.target
    raise BindingError(f"could not complete a walk of template {template.name!r}")


_EMITTERS = {
    "delegation": _emit_delegation,
    "request": _emit_request,
    "contract-net": _emit_contract_net,
    "english-auction": _emit_english_auction,
    "vote": _emit_vote,
}


def _emit(template: ProtocolTemplate, binding: Mapping, activity: str, rng: RandomStream,
          opts: EmitOptions) -> _Emission:
    initiator = binding.get("initiator")
    parts = binding.get("participants")
    if isinstance(parts, str):
        parts = [parts]
    parts = list(parts or ())
    if not initiator:
        raise BindingError("binding has no initiator")
    if len(set(parts)) != len(parts) or initiator in parts or SYSTEM in parts:
        raise BindingError("participants must be distinct actors other than the initiator")
    if not template.min_participants <= len(parts) <= template.max_participants:
        raise BindingError(
            f"{template.name} takes {template.min_participants}..{template.max_participants} "
            f"participants, got {len(parts)}"
        )
    em = _Emission()
    emitter = _EMITTERS.get(template.name)
    if emitter is None:
        _emit_walk(em, template, initiator, parts, rng, opts)
    else:
        emitter(em, initiator, parts, rng, opts)
    return em


def emit_protocol_instance(template: ProtocolTemplate, binding: Mapping, activity: str,
                           rng: RandomStream, options: EmitOptions = EmitOptions(),
                           case_id: str = "C1") -> list[EventLine]:
    """Emit one occurrence of ``template`` with the bound actors.

    ``binding`` maps ``initiator`` to an actor id and ``participants`` to a
    list of actor ids. Events come back with seq 0..n-1 and no timestamps.
    """
    em = _emit(template, binding, activity, rng, options)
    return [
        EventLine(case_id, i, perf, activity, ini, rec, None, state, frozenset(cons), frozenset(prod))
        for i, (perf, ini, rec, state, cons, prod) in enumerate(em.messages)
    ]


# -- whole logs ---------------------------------------------------------------


@dataclass(frozen=True)
class TruthInstance:
    process: str
    case_id: str
    template: str
    activity: str
    initiator: str
    participants: tuple
    winners: tuple
    executor: Optional[str]
    terminal: Optional[str]


@dataclass
class GroundTruth:
    kind: str
    topology: Topology
    instances: list = field(default_factory=list)


def _activity_names(base: Sequence[str], count: int, rng: RandomStream) -> list[str]:
    order = rng.shuffled(base)
    names = []
    for j in range(count):
        name = order[j % len(order)]
        names.append(name if j < len(order) else f"{name} ({j // len(order) + 1})")
    return names


def _interleave(streams: list[list], rng: RandomStream) -> list:
    queues = [list(s) for s in streams if s]
    out = []
    while queues:
        q = rng.choice(queues)
        out.append(q.pop(0))
        if not q:
            queues.remove(q)
    return out


def generate_with_truth(config: GeneratorConfig, templates: Optional[Sequence[ProtocolTemplate]] = None
                        ) -> tuple[WorkflowLog, GroundTruth]:
    """Generate a log and the bookkeeping of every protocol instance it contains."""
    from .protocols import load_templates

    topo = build_topology(config)
    by_name = {t.name: t for t in (templates if templates is not None else load_templates())}
    mix = config.mix
    for name in mix:
        if name not in by_name:
            raise ConfigError(f"protocol_mix names unknown template {name!r}")

    truth = GroundTruth(config.structure.kind, topo)
    if config.cases == 0:
        return WorkflowLog(), truth

    plan_rng = RandomStream(derive_seed(config.seed, "plan"))
    coverage = topo.coverage(mix, plan_rng)
    per_case_cover: dict[int, list] = {}
    for j, item in enumerate(coverage):
        per_case_cover.setdefault(j % config.cases, []).append(item)

    spec_by_id = {a.id: a for a in config.actors}
    processes: dict[str, list] = {p.name: [] for p in config.processes}
    step = timedelta(seconds=1)
    for index in range(config.cases):
        rng = RandomStream(derive_seed(config.seed, "case", index))
        pspec = config.processes[index % len(config.processes)]
        case_id = f"C{index + 1}"
        plan = list(per_case_cover.get(index, []))
        while len(plan) < config.instances_per_case:
            protocol = rng.weighted(mix)
            initiator, parts = topo.draw(protocol, rng)
            plan.append((protocol, initiator, parts))
        activities = _activity_names(pspec.activities or config.activities, len(plan), rng)

        streams = []
        for (protocol, initiator, parts), activity in zip(plan, activities):
            docs = config.documents.get(activity.split(" (")[0], {})
            opts = EmitOptions(
                report_back=config.report_back,
                propose_rate=config.propose_rate,
                accept_rate=config.accept_rate,
                max_rounds=config.max_rounds,
                lifecycle=LifecycleOptions(config.suspend_rate, config.abort_rate,
                                           tuple(docs.get("consumed", ())), tuple(docs.get("produced", ()))),
            )
            em = _emit(by_name[protocol], {"initiator": initiator, "participants": parts}, activity, rng, opts)
            truth.instances.append(TruthInstance(pspec.name, case_id, protocol, activity, initiator,
                                                 tuple(parts), em.winners, em.executor, em.terminal))
            streams.append([(activity, m) for m in em.messages])
        merged = _interleave(streams, rng) if config.interleave else [x for s in streams for x in s]

        ts = config.timestamp_base + timedelta(seconds=index * config.case_interval)
        events = []
        for seq, (activity, (perf, ini, rec, state, cons, prod)) in enumerate(merged):
            ts += max(step, timedelta(seconds=int(config.mean_step * (0.5 + rng.random()))))
            events.append(EventLine(case_id, seq, perf, activity, ini, rec, ts, state,
                                    frozenset(cons), frozenset(prod)))
        processes[pspec.name].append(ProcessInstance(case_id, events))

    used = {a for insts in processes.values() for inst in insts for ev in inst.events
            for a in (ev.initiator, ev.receiver)}
    actors = {
        a.id: Actor(a.id, a.name or a.id, frozenset(a.roles), a.org_unit)
        for a in config.actors
        if a.id in used
    }
    log = build_registries((Process(n, insts) for n, insts in processes.items() if insts), actors)
    return log, truth


def generate(config: GeneratorConfig) -> WorkflowLog:
    return generate_with_truth(config)[0]
