"""Interaction protocol discovery.

Each case is split into conversations keyed by (case, activity, initiator);
each conversation is replayed against declarative protocol templates.

A template is a state machine whose transitions consume *groups* of messages
rather than single messages: a transition labelled ``cfp I->all-P
each-participant`` is taken by a run of ``cfp`` messages from the initiator to
distinct participants that together cover every participant. The first
initiator-to-participant group of a walk binds the participant set. Group
boundaries are not marked in a log, so :func:`match_template` tracks every
possible group split at once (a set of configurations) instead of guessing.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import jsonschema

from .model import SYSTEM, EventLine, Performative, WorkflowLog

I_TO_P = "I->P"
I_TO_ALL = "I->all-P"
P_TO_I = "P->I"
P_TO_SYSTEM = "P->system"
I_TO_SYSTEM = "I->system"
UNRELATED = "unrelated"

ONE = "one"
EACH = "each-participant"
SOME = "some-participants"

ACCEPT = Performative("accept-proposal")

BUILTIN_ORDER = ("delegation", "contract-net", "vote", "english-auction", "request")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    source: str
    performatives: frozenset
    direction: str
    multiplicity: str
    target: str
    among: Optional[frozenset] = None
    require: frozenset = frozenset()

    @property
    def outbound(self) -> bool:
        return self.direction in (I_TO_P, I_TO_ALL)

    def matches(self, direction: str, performative: str) -> bool:
        if performative not in self.performatives:
            return False
        if self.outbound:
            return direction == I_TO_P
        return direction == self.direction


@dataclass(frozen=True)
class ProtocolTemplate:
    name: str
    priority: int
    min_participants: int
    max_participants: int
    states: tuple
    start: str
    accepting: frozenset
    transitions: tuple
    resumable: frozenset = frozenset()
    description: str = ""
    source: str = "<builtin>"

    @property
    def outgoing(self) -> dict:
        out: dict[str, list[int]] = {}
        for i, t in enumerate(self.transitions):
            out.setdefault(t.source, []).append(i)
        return out

    @property
    def awards(self) -> bool:
        return any(t.outbound and ACCEPT in t.performatives for t in self.transitions)

    def state_rank(self, state: str) -> int:
        return self.states.index(state)


@functools.lru_cache(maxsize=None)
def _schema() -> dict:
    return json.loads(resources.files("orgminer").joinpath("schemas/template.schema.json").read_text())


def _normalize_direction(text: str) -> str:
    return text.replace("→", "->").replace(" ", "")


def template_from_dict(doc: dict, source: str = "<dict>") -> ProtocolTemplate:
    """Build and check one template; raise :class:`TemplateError` naming the defect."""
    if isinstance(doc, dict) and "transitions" in doc:
        doc = dict(doc)
        doc["transitions"] = [
            {**t, "direction": _normalize_direction(t["direction"])} if isinstance(t, dict) and
            isinstance(t.get("direction"), str) else t
            for t in doc["transitions"]
        ]
    errors = sorted(jsonschema.Draft202012Validator(_schema()).iter_errors(doc),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise TemplateError(f"{source}: schema violation at {where}: {err.message}")

    name = doc["name"]
    states = tuple(doc["states"])
    known = set(states)

    def need_state(state: str, what: str):
        if state not in known:
            raise TemplateError(f"{source}: template {name!r}: {what} refers to unknown state {state!r}")

    need_state(doc["start"], "start")
    for s in doc["accepting"]:
        need_state(s, "accepting")
    for s in doc.get("resumable", ()):
        need_state(s, "resumable")
    lo, hi = doc["participants"]["min"], doc["participants"]["max"]
    if lo > hi:
        raise TemplateError(f"{source}: template {name!r}: participant range [{lo}, {hi}] is empty")

    transitions = []
    for i, t in enumerate(doc["transitions"]):
        need_state(t["from"], f"transition {i}")
        need_state(t["to"], f"transition {i}")
        if t["direction"] == I_TO_ALL and t["multiplicity"] != EACH:
            raise TemplateError(
                f"{source}: template {name!r}: transition {i} is I->all-P but not each-participant"
            )
        transitions.append(
            Transition(
                source=t["from"],
                performatives=frozenset(Performative(p) for p in t["performatives"]),
                direction=t["direction"],
                multiplicity=t["multiplicity"],
                target=t["to"],
                among=frozenset(Performative(p) for p in t["among"]) if "among" in t else None,
                require=frozenset(Performative(p) for p in t.get("require", ())),
            )
        )

    seen = {}
    for i, t in enumerate(transitions):
        klass = I_TO_P if t.outbound else t.direction
        for perf in t.performatives:
            key = (t.source, perf, klass)
            if key in seen:
                raise TemplateError(
                    f"{source}: template {name!r} is nondeterministic: transitions {seen[key]} and {i} "
                    f"both fire on ({t.source}, {perf}, {klass})"
                )
            seen[key] = i

    accepting = frozenset(doc["accepting"])
    resumable = frozenset(doc.get("resumable", ()))
    for i, t in enumerate(transitions):
        if t.source in accepting and t.source not in resumable:
            raise TemplateError(
                f"{source}: template {name!r}: transition {i} leaves accepting state {t.source!r} "
                "which is not marked resumable"
            )

    reached = {doc["start"]}
    frontier = [doc["start"]]
    while frontier:
        state = frontier.pop()
        for t in transitions:
            if t.source == state and t.target not in reached:
                reached.add(t.target)
                frontier.append(t.target)
    for s in doc["accepting"]:
        if s not in reached:
            raise TemplateError(f"{source}: template {name!r}: accepting state {s!r} is unreachable")

    return ProtocolTemplate(
        name=name,
        priority=doc["priority"],
        min_participants=lo,
        max_participants=hi,
        states=states,
        start=doc["start"],
        accepting=accepting,
        transitions=tuple(transitions),
        resumable=resumable,
        description=doc.get("description", ""),
        source=source,
    )


def _read_template_file(path: Path) -> ProtocolTemplate:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TemplateError(f"{path}: JSON syntax error at line {exc.lineno}: {exc.msg}") from None
    return template_from_dict(doc, str(path))


def builtin_templates() -> list[ProtocolTemplate]:
    root = resources.files("orgminer").joinpath("templates")
    out = []
    for name in BUILTIN_ORDER:
        doc = json.loads(root.joinpath(f"{name}.json").read_text())
        out.append(template_from_dict(doc, f"<builtin:{name}>"))
    return out


def load_templates(paths: Iterable = ()) -> list[ProtocolTemplate]:
    """Built-in templates followed by user templates from files or directories of ``*.json``."""
    templates = builtin_templates()
    names = {t.name for t in templates}
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.json")) if p.is_dir() else [p]
        for f in files:
            tpl = _read_template_file(f)
            if tpl.name in names:
                raise TemplateError(f"{f}: duplicate template name {tpl.name!r}")
            names.add(tpl.name)
            templates.append(tpl)
    return templates


@dataclass(frozen=True)
class Conversation:
    process: str
    case_id: str
    activity: str
    initiator: str
    events: tuple = ()

    @property
    def key(self) -> tuple:
        return (self.case_id, self.activity, self.initiator)

    def partners(self) -> set:
        out = set()
        for ev in self.events:
            if ev.initiator == self.initiator and ev.receiver != SYSTEM:
                out.add(ev.receiver)
            elif ev.receiver == self.initiator:
                out.add(ev.initiator)
        return out


def segment_conversations(log: WorkflowLog) -> list[Conversation]:
    """Partition every non-lifecycle event of every case into conversations.

    An event joins an existing conversation on the same activity when it is a
    reply to that conversation's initiator from a known partner, a further
    message from the initiator, or an execution by a partner; otherwise it
    opens a new conversation with its initiator as key.
    """
    result = []
    for process, inst in log.instances():
        convs: list[list] = []  # [activity, initiator, events, partners]

        def find(pred):
            for conv in reversed(convs):
                if pred(conv):
                    return conv
            return None

        for ev in inst.events:
            if ev.is_lifecycle:
                continue
            same = lambda c: c[0] == ev.activity  # noqa: E731
            if ev.receiver == SYSTEM:
                conv = find(lambda c: same(c) and ev.initiator in c[3]) or find(
                    lambda c: same(c) and c[1] == ev.initiator
                )
            else:
                conv = (
                    find(lambda c: same(c) and c[1] == ev.receiver and ev.initiator in c[3])
                    or find(lambda c: same(c) and c[1] == ev.initiator)
                    or find(lambda c: same(c) and c[1] == ev.receiver)
                )
            if conv is None:
                conv = [ev.activity, ev.initiator, [], set()]
                convs.append(conv)
            conv[2].append(ev)
            if ev.receiver != SYSTEM:
                other = ev.receiver if ev.initiator == conv[1] else ev.initiator
                if other != conv[1]:
                    conv[3].add(other)
        for activity, initiator, events, _ in convs:
            result.append(Conversation(process.process_name, inst.case_id, activity, initiator,
                                       tuple(events)))
    return result


def classify_event(ev: EventLine, initiator: str) -> tuple[str, Optional[str]]:
    """Direction of ``ev`` relative to a conversation initiator, plus the counterpart."""
    if ev.initiator == initiator:
        return (I_TO_SYSTEM, None) if ev.receiver == SYSTEM else (I_TO_P, ev.receiver)
    if ev.receiver == initiator:
        return P_TO_I, ev.initiator
    if ev.receiver == SYSTEM:
        return P_TO_SYSTEM, ev.initiator
    return UNRELATED, None


class _Config(NamedTuple):
    state: str
    group: int  # index of the transition whose message group is open, -1 when at rest
    covered: tuple  # ((counterpart, performative), ...) of the open group
    participants: Optional[frozenset]
    replies: frozenset  # (participant, performative) of the latest closed P->I group
    winners: frozenset

    def sort_key(self):
        return (
            self.state,
            self.group,
            self.covered,
            tuple(sorted(self.participants)) if self.participants is not None else (),
            tuple(sorted(self.replies)),
            tuple(sorted(self.winners)),
        )


def _pool(t: Transition, cfg: _Config) -> Optional[frozenset]:
    if cfg.participants is None:
        return None
    if t.among is not None:
        return frozenset(p for p, perf in cfg.replies if perf in t.among)
    return cfg.participants


def _admits(tpl: ProtocolTemplate, t: Transition, cfg: _Config, direction: str,
            counterpart: Optional[str], perf: str) -> bool:
    if counterpart is None or not t.matches(direction, perf):
        return False
    if t.multiplicity == ONE and cfg.covered:
        return False
    if any(c == counterpart for c, _ in cfg.covered):
        return False
    pool = _pool(t, cfg)
    if pool is None:
        return t.outbound and len(cfg.covered) < tpl.max_participants
    return counterpart in pool


def _close(tpl: ProtocolTemplate, cfg: _Config) -> Optional[_Config]:
    if cfg.group < 0:
        return cfg
    t = tpl.transitions[cfg.group]
    names = frozenset(c for c, _ in cfg.covered)
    perfs = {p for _, p in cfg.covered}
    binding = cfg.participants is None
    if t.multiplicity == ONE and len(cfg.covered) != 1:
        return None
    if not cfg.covered:
        return None
    if binding:
        if not tpl.min_participants <= len(names) <= tpl.max_participants:
            return None
    elif t.multiplicity == EACH and names != _pool(t, cfg):
        return None
    if not t.require <= perfs:
        return None
    winners = cfg.winners
    if t.outbound and ACCEPT in t.performatives:
        winners = frozenset(c for c, p in cfg.covered if p == ACCEPT)
    return _Config(
        state=t.target,
        group=-1,
        covered=(),
        participants=names if binding else cfg.participants,
        replies=frozenset(cfg.covered) if t.direction == P_TO_I else cfg.replies,
        winners=winners,
    )


def _step(tpl: ProtocolTemplate, outgoing: dict, cfg: _Config, direction: str,
          counterpart: Optional[str], perf: str) -> list[_Config]:
    out = []
    if cfg.group >= 0:
        if _admits(tpl, tpl.transitions[cfg.group], cfg, direction, counterpart, perf):
            out.append(cfg._replace(covered=cfg.covered + ((counterpart, perf),)))
        base = _close(tpl, cfg)
        if base is None:
            return out
    else:
        base = cfg
    for ti in outgoing.get(base.state, ()):
        if _admits(tpl, tpl.transitions[ti], base, direction, counterpart, perf):
            out.append(base._replace(group=ti, covered=((counterpart, perf),)))
    return out


@dataclass(frozen=True)
class ProtocolInstance:
    template: str
    process: str
    case_id: str
    activity: str
    initiator: str
    participants: frozenset
    outcome: str  # "complete" | "partial"
    winners: Optional[frozenset]
    event_span: tuple
    furthest_state: str
    events_consumed: int
    priority: int = 0
    silent_participants: frozenset = frozenset()
    flags: tuple = ()

    @property
    def complete(self) -> bool:
        return self.outcome == "complete"

    def as_record(self) -> dict:
        return {
            "type": "instance",
            "template": self.template,
            "process": self.process,
            "case": self.case_id,
            "activity": self.activity,
            "initiator": self.initiator,
            "participants": sorted(self.participants),
            "outcome": self.outcome,
            "winners": None if self.winners is None else sorted(self.winners),
            "event_span": list(self.event_span),
            "furthest_state": self.furthest_state,
            "events_consumed": self.events_consumed,
            "silent_participants": sorted(self.silent_participants),
            "flags": list(self.flags),
        }


def match_template(conv: Conversation, template: ProtocolTemplate) -> Optional[ProtocolInstance]:
    """Replay ``conv`` on ``template``.

    Returns ``None`` when the first message cannot fire from the start state,
    otherwise a complete instance (every message consumed, accepting state
    reached) or a partial one recording the furthest state.
    """
    outgoing = template.outgoing
    configs = {_Config(template.start, -1, (), None, frozenset(), frozenset())}
    consumed = 0
    stalled = None
    for i, ev in enumerate(conv.events):
        direction, counterpart = classify_event(ev, conv.initiator)
        nxt = set()
        for cfg in configs:
            nxt.update(_step(template, outgoing, cfg, direction, counterpart, ev.performative))
        if not nxt:
            stalled = i
            break
        configs = nxt
        consumed = i + 1
    if consumed == 0:
        return None

    settled = [(cfg, _close(template, cfg)) for cfg in configs]
    accepting = [s for _, s in settled if s is not None and s.state in template.accepting]
    flags = []
    if accepting and stalled is None:
        outcome = "complete"
        chosen = min(accepting, key=_Config.sort_key)
        state = chosen.state
    else:
        outcome = "partial"
        if accepting:
            flags.append("ambiguous-interleaving")

        def effective(pair):
            cfg, s = pair
            return s if s is not None else cfg

        chosen = min(
            (effective(p) for p in settled),
            key=lambda c: (-template.state_rank(c.state), c.sort_key()),
        )
        state = chosen.state

    participants = chosen.participants
    if participants is None:
        participants = frozenset(c for c, _ in chosen.covered)
    used = conv.events[:consumed]
    responders = {ev.initiator for ev in used if classify_event(ev, conv.initiator)[0] == P_TO_I}
    silent = frozenset(participants - responders)
    if silent:
        flags.append("silent-participants")
    return ProtocolInstance(
        template=template.name,
        process=conv.process,
        case_id=conv.case_id,
        activity=conv.activity,
        initiator=conv.initiator,
        participants=frozenset(participants),
        outcome=outcome,
        winners=chosen.winners if template.awards else None,
        event_span=(used[0].seq, used[-1].seq),
        furthest_state=state,
        events_consumed=consumed,
        priority=template.priority,
        silent_participants=silent,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class UnmatchedConversation:
    process: str
    case_id: str
    activity: str
    initiator: str
    event_span: tuple
    reason: str

    @property
    def key(self) -> tuple:
        return (self.case_id, self.activity, self.initiator)

    def as_record(self) -> dict:
        return {
            "type": "unmatched",
            "process": self.process,
            "case": self.case_id,
            "activity": self.activity,
            "initiator": self.initiator,
            "event_span": list(self.event_span),
            "furthest_state": "start",
            "reason": self.reason,
        }


@dataclass
class ProtocolReport:
    instances: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)  # template -> {"complete": n, "partial": m}
    case_order: dict = field(default_factory=dict)  # (process, case) -> position in the log

    @property
    def conversations(self) -> int:
        return len(self.instances) + len(self.unmatched)

    def complete(self, template: Optional[str] = None) -> list:
        return [i for i in self.instances if i.complete and (template is None or i.template == template)]

    def records(self) -> list[dict]:
        rows = []
        for item in sorted(self.instances + self.unmatched, key=self.order_key):
            rows.append(item.as_record())
        for name, c in self.counts.items():
            rows.append({"type": "count", "template": name, "complete": c["complete"],
                         "partial": c["partial"]})
        return rows

    def order_key(self, item) -> tuple:
        return (self.case_order.get((item.process, item.case_id), -1), item.event_span[0])


def _best(matches: Sequence[ProtocolInstance]) -> ProtocolInstance:
    complete = [m for m in matches if m.complete]
    if complete:
        return min(complete, key=lambda m: (-m.priority, -m.events_consumed, m.template))
    return min(matches, key=lambda m: (-m.events_consumed, -m.priority, m.template))


def mine_protocols(log: WorkflowLog, templates: Optional[Sequence[ProtocolTemplate]] = None
                   ) -> ProtocolReport:
    """Discover protocol instances in every conversation of the log."""
    templates = list(templates) if templates is not None else load_templates()
    report = ProtocolReport(counts={t.name: {"complete": 0, "partial": 0} for t in templates})
    for process, inst in log.instances():
        report.case_order.setdefault((process.process_name, inst.case_id), len(report.case_order))
    for conv in segment_conversations(log):
        matches = [m for t in templates if (m := match_template(conv, t)) is not None]
        if matches:
            best = _best(matches)
            report.counts[best.template][best.outcome] += 1
            report.instances.append(best)
        else:
            first = conv.events[0]
            direction, _ = classify_event(first, conv.initiator)
            item = UnmatchedConversation(
                conv.process, conv.case_id, conv.activity, conv.initiator,
                (first.seq, conv.events[-1].seq),
                f"no template fires on opening message {first.performative} {direction}",
            )
            report.unmatched.append(item)
    report.instances.sort(key=report.order_key)
    report.unmatched.sort(key=report.order_key)
    return report
