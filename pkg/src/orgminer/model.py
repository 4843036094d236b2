"""Domain types of the performative-extended workflow log and their validation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Iterator, Mapping, Optional

SYSTEM = "system"

CANONICAL_PERFORMATIVES = frozenset(
    {
        "execute",
        "delegate",
        "inform",
        "cfp",
        "propose",
        "accept-proposal",
        "reject-proposal",
        "refuse",
        "request",
        "failure",
        "cancel",
        "agree",
        "confirm",
        "disconfirm",
        "not-understood",
        "query-if",
        "query-ref",
        "subscribe",
    }
)

_ALIASES = {"call-for-proposal": "cfp", "call-for-proposals": "cfp"}


def canonicalize_performative(name: str) -> str:
    key = "-".join(name.strip().lower().replace("_", " ").replace("-", " ").split())
    return _ALIASES.get(key, key)


class Performative(str):
    """Performative name, canonicalized to lower-kebab-case on construction.

    Unknown names are kept as-is (after canonicalization); check
    :attr:`canonical` to tell them apart from the FIPA-ACL vocabulary.
    """

    def __new__(cls, name: str) -> "Performative":
        key = canonicalize_performative(str(name))
        if not key:
            raise ValueError("empty performative name")
        return super().__new__(cls, key)

    @property
    def canonical(self) -> bool:
        return str(self) in CANONICAL_PERFORMATIVES


EXECUTE = Performative("execute")


class LifecycleState(str, enum.Enum):
    SCHEDULED = "scheduled"
    STARTED = "started"
    SUSPENDED = "suspended"
    RESUMED = "resumed"
    COMPLETED = "completed"
    ABORTED = "aborted"

    @classmethod
    def parse(cls, value: str) -> "LifecycleState":
        return cls(value.strip().lower())

    def __str__(self) -> str:
        return self.value


TERMINAL_STATES = frozenset({LifecycleState.COMPLETED, LifecycleState.ABORTED})


def normalize_actor_id(actor_id: str) -> str:
    """Map every spelling of the pseudo-actor (``System``, ``SYSTEM``) to ``system``."""
    actor_id = actor_id.strip()
    return SYSTEM if actor_id.lower() == SYSTEM else actor_id


@dataclass(frozen=True)
class Actor:
    actor_id: str
    actor_name: str = ""
    roles: frozenset = frozenset()
    org_unit: Optional[str] = None

    def __post_init__(self):
        if not self.actor_name:
            object.__setattr__(self, "actor_name", self.actor_id)
        object.__setattr__(self, "roles", frozenset(self.roles))


SYSTEM_ACTOR = Actor(SYSTEM, "System")


@dataclass(frozen=True)
class EventLine:
    case_id: str
    seq: int
    performative: Performative
    activity: str
    initiator: str
    receiver: str
    timestamp: Optional[datetime] = None
    event_stream: Optional[LifecycleState] = None
    consumed_docs: frozenset = frozenset()
    produced_docs: frozenset = frozenset()

    def __post_init__(self):
        if not isinstance(self.performative, Performative):
            object.__setattr__(self, "performative", Performative(self.performative))
        if self.event_stream is not None and not isinstance(self.event_stream, LifecycleState):
            object.__setattr__(self, "event_stream", LifecycleState.parse(self.event_stream))
        object.__setattr__(self, "consumed_docs", frozenset(self.consumed_docs))
        object.__setattr__(self, "produced_docs", frozenset(self.produced_docs))

    @property
    def is_lifecycle(self) -> bool:
        """Execution-state event: an ``execute`` line carrying a lifecycle state."""
        return self.performative == EXECUTE and self.event_stream is not None

    @property
    def is_interaction(self) -> bool:
        return not self.is_lifecycle

    @property
    def sort_key(self):
        # Timestamp-free cases order by seq alone; mixing is a validation error.
        return (self.timestamp is None, self.timestamp or datetime.min, self.seq)


@dataclass(frozen=True)
class ProcessInstance:
    case_id: str
    events: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))


@dataclass(frozen=True)
class Process:
    process_name: str
    instances: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))


@dataclass(frozen=True, eq=True)
class WorkflowLog:
    processes: tuple = ()
    actors: Mapping[str, Actor] = field(default_factory=dict)
    roles: frozenset = frozenset()
    org_units: frozenset = frozenset()
    documents: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "processes", tuple(self.processes))
        object.__setattr__(self, "actors", dict(sorted(self.actors.items())))
        object.__setattr__(self, "roles", frozenset(self.roles))
        object.__setattr__(self, "org_units", frozenset(self.org_units))
        object.__setattr__(self, "documents", frozenset(self.documents))

    def instances(self) -> Iterator[tuple[Process, ProcessInstance]]:
        for process in self.processes:
            for instance in process.instances:
                yield process, instance

    def events(self) -> Iterator[EventLine]:
        for _, instance in self.instances():
            yield from instance.events

    @property
    def event_count(self) -> int:
        return sum(len(inst.events) for _, inst in self.instances())

    def unit_map(self) -> dict[str, str]:
        return {a.actor_id: a.org_unit for a in self.actors.values() if a.org_unit is not None}


def order_events(events: Iterable[EventLine]) -> list[EventLine]:
    return sorted(events, key=lambda e: e.sort_key)


def build_registries(processes: Iterable[Process], actors: Mapping[str, Actor]) -> WorkflowLog:
    """Assemble a log whose role/unit/document registries are derived from the data."""
    processes = tuple(processes)
    actors = dict(actors)
    docs = set()
    for process in processes:
        for inst in process.instances:
            for ev in inst.events:
                docs |= ev.consumed_docs | ev.produced_docs
                for actor_id in (ev.initiator, ev.receiver):
                    if actor_id not in actors:
                        actors[actor_id] = SYSTEM_ACTOR if actor_id == SYSTEM else Actor(actor_id)
    roles = {r for a in actors.values() for r in a.roles}
    units = {a.org_unit for a in actors.values() if a.org_unit is not None}
    return WorkflowLog(processes, actors, roles, units, docs)


@dataclass(frozen=True, order=True)
class Violation:
    process: str
    case_id: str
    seq: int
    message: str
    severity: str = "error"

    def as_record(self) -> dict:
        return {
            "severity": self.severity,
            "process": self.process,
            "case": self.case_id,
            "seq": self.seq,
            "message": self.message,
        }


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def validate_log(log: WorkflowLog) -> ValidationReport:
    """Check every structural invariant of the meta-model.

    Violations are returned as data, ordered by (process, case, seq); registry
    problems that belong to no case sort first with an empty case id and seq -1.
    """
    found: list[Violation] = []

    def bad(process="", case="", seq=-1, message=""):
        found.append(Violation(process, case, seq, message))

    for actor_id, actor in log.actors.items():
        if actor_id != actor.actor_id:
            bad(message=f"actor registry key {actor_id!r} != actor_id {actor.actor_id!r}")
        if actor_id == SYSTEM and (actor.roles or actor.org_unit):
            bad(message="pseudo-actor 'system' must not have roles or an org unit")
        for role in sorted(actor.roles - log.roles):
            bad(message=f"actor {actor_id!r} plays unregistered role {role!r}")
        if actor.org_unit is not None and actor.org_unit not in log.org_units:
            bad(message=f"actor {actor_id!r} belongs to unregistered unit {actor.org_unit!r}")

    seen_process_names = set()
    for process in log.processes:
        pname = process.process_name
        if pname in seen_process_names:
            bad(pname, message=f"duplicate process name {pname!r}")
        seen_process_names.add(pname)
        seen_cases = set()
        for inst in process.instances:
            cid = inst.case_id
            if cid in seen_cases:
                bad(pname, cid, message=f"duplicate case id {cid!r}")
            seen_cases.add(cid)
            if not inst.events:
                bad(pname, cid, message="process instance has no events")
            stamped = [ev.timestamp is not None for ev in inst.events]
            if any(stamped) and not all(stamped):
                bad(pname, cid, message="timestamps present on some but not all events of the case")
            prev = None
            for idx, ev in enumerate(inst.events):
                if ev.case_id != cid:
                    bad(pname, cid, ev.seq, f"event carries case id {ev.case_id!r}")
                if ev.seq != idx:
                    bad(pname, cid, ev.seq, f"seq {ev.seq} at position {idx}; expected {idx}")
                if (
                    prev is not None
                    and prev.timestamp is not None
                    and ev.timestamp is not None
                    and ev.timestamp < prev.timestamp
                ):
                    bad(pname, cid, ev.seq, "events not ordered by (timestamp, seq)")
                if ev.initiator == ev.receiver and ev.receiver != SYSTEM:
                    bad(pname, cid, ev.seq, f"initiator and receiver are both {ev.initiator!r}")
                if ev.initiator == SYSTEM:
                    bad(pname, cid, ev.seq, "pseudo-actor 'system' cannot initiate")
                for actor_id in (ev.initiator, ev.receiver):
                    if actor_id != SYSTEM and actor_id not in log.actors:
                        bad(pname, cid, ev.seq, f"unregistered actor {actor_id!r}")
                for doc in sorted((ev.consumed_docs | ev.produced_docs) - log.documents):
                    bad(pname, cid, ev.seq, f"unregistered document {doc!r}")
                prev = ev
    return ValidationReport(tuple(sorted(found)))
