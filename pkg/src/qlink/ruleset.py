"""RuleSet object model: Rules, Clauses, Actions, identifiers, canonical
serialization and constructors for the tomography and recurrent-purification
protocols.

Both endpoints of a connection hold RuleSets sharing one 128-bit identifier.
A Rule fires its Action only when every Clause of its Condition holds, and
resources promote from one Rule to the next as they complete each step.
"""
from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

from .purification import CircuitSpec, Scheme
from .sim import NS_PER_SEC

RULESET_TIMEOUT_NS = 120 * NS_PER_SEC  # two minutes

_MAGIC = b"QRS"
_VERSION = 1


class DecodeError(ValueError):
    """Serialized RuleSet is malformed, truncated or of unknown version."""


def generate_ruleset_id(time_ns: int, address: int, nonce: int) -> int:
    """Deterministic 128-bit identifier from generation time, generator
    address and a nonce, via a cryptographic digest of the canonical
    little-endian field encoding."""
    blob = struct.pack("<QQQ", time_ns & (2**64 - 1), address & (2**64 - 1), nonce & (2**64 - 1))
    return int.from_bytes(hashlib.sha256(blob).digest()[:16], "little")


@dataclass
class EnoughResourceClause:
    num_required: int


@dataclass
class MeasurementCountClause:
    target: int
    current: int = 0


@dataclass
class TimeoutClause:
    deadline_ns: int


Clause = Union[EnoughResourceClause, MeasurementCountClause, TimeoutClause]


class ActionKind(enum.Enum):
    TOMOGRAPHY_MEASURE = "tomography-measure"
    PURIFY = "purify"


@dataclass
class Action:
    kind: ActionKind
    partner: int
    circuit: Optional[CircuitSpec] = None  # purification only

    @property
    def arity(self) -> int:
        return 1 if self.kind is ActionKind.TOMOGRAPHY_MEASURE else self.circuit.arity


@dataclass
class Rule:
    rule_id: int
    clauses: tuple
    action: Action
    action_index: int = 0
    # Runtime resource allocation; never serialized or compared.
    resources: list = field(default_factory=list, compare=False, repr=False)


@dataclass
class RuleSet:
    ruleset_id: int
    owner: int
    partner: int
    rules: tuple
    termination: tuple

    def measurement_target(self) -> Optional[int]:
        for clause in self.termination:
            if isinstance(clause, MeasurementCountClause):
                return clause.target
        return None

    def timeout_ns(self) -> Optional[int]:
        for clause in self.termination:
            if isinstance(clause, TimeoutClause):
                return clause.deadline_ns
        return None


@dataclass
class RuleContext:
    """What clause evaluation may see: the rule's allocated resources, a
    predicate for this endpoint's lock state and the rule's counters."""

    resources: list
    is_locked: callable
    measurements_performed: int = 0


def evaluate_clause(clause: Clause, ctx: RuleContext) -> bool:
    """Side-effect-free clause check.

    EnoughResource scans the allocation list in order, counting unlocked
    resources and stopping as soon as the requirement is met.
    """
    if isinstance(clause, EnoughResourceClause):
        if clause.num_required <= 0:
            return True
        free = 0
        for r in ctx.resources:
            if not ctx.is_locked(r):
                free += 1
                if free >= clause.num_required:
                    return True
        return False
    if isinstance(clause, MeasurementCountClause):
        return ctx.measurements_performed < clause.target
    raise TypeError(f"cannot evaluate {type(clause).__name__} as a condition clause")


def _mirrored(ruleset_id, owner, partner, rules_for, termination_for):
    a = RuleSet(ruleset_id, owner, partner, rules_for(partner), termination_for())
    b = RuleSet(ruleset_id, partner, owner, rules_for(owner), termination_for())
    return a, b


def build_tomography_ruleset(
    n_measurements: int, owner: int, partner: int, at_time: int = 0, nonce: int = 0
):
    """Mirrored single-Rule RuleSets: measure when a resource is available
    and the measurement budget is not exhausted."""
    if n_measurements < 0:
        raise ValueError("n_measurements must be >= 0")
    rs_id = generate_ruleset_id(at_time, owner, nonce)

    def rules_for(remote):
        return (
            Rule(
                rule_id=0,
                clauses=(
                    MeasurementCountClause(n_measurements),
                    EnoughResourceClause(1),
                ),
                action=Action(ActionKind.TOMOGRAPHY_MEASURE, partner=remote),
            ),
        )

    def termination_for():
        return (MeasurementCountClause(n_measurements),)

    return _mirrored(rs_id, owner, partner, rules_for, termination_for)


def build_recurrent_purification_ruleset(
    scheme: Scheme,
    rounds: int,
    n_measurements: int,
    owner: int,
    partner: int,
    switch_at: Optional[int] = None,
    timeout_ns: int = RULESET_TIMEOUT_NS,
    at_time: int = 0,
    nonce: int = 0,
):
    """Mirrored RuleSets with one purification Rule per round and a final
    tomography Rule consuming the survivors.

    Rounds alternate the attacked error (X first), or the stage order for
    double-error schemes.  With switch_at set, rounds before it use double
    selection and rounds from it on use single selection, keeping the
    scheme's error mode.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if switch_at is not None and not 0 <= switch_at < rounds:
        raise ValueError("switch_at must fall inside the purification rounds")
    rs_id = generate_ruleset_id(at_time, owner, nonce)
    double_error = scheme in (Scheme.SS_DP, Scheme.DS_DP)
    default_double_sel = scheme in (Scheme.DS_SP, Scheme.DS_DP)

    def circuit_for(r):
        double_sel = default_double_sel if switch_at is None else (r < switch_at)
        sch = {
            (False, False): Scheme.SS_SP,
            (False, True): Scheme.SS_DP,
            (True, False): Scheme.DS_SP,
            (True, True): Scheme.DS_DP,
        }[(double_sel, double_error)]
        return CircuitSpec(sch, "X" if r % 2 == 0 else "Z")

    def rules_for(remote):
        rules = []
        for r in range(rounds):
            circuit = circuit_for(r)
            rules.append(
                Rule(
                    rule_id=r,
                    clauses=(EnoughResourceClause(circuit.arity),),
                    action=Action(ActionKind.PURIFY, partner=remote, circuit=circuit),
                )
            )
        rules.append(
            Rule(
                rule_id=rounds,
                clauses=(
                    MeasurementCountClause(n_measurements),
                    EnoughResourceClause(1),
                ),
                action=Action(ActionKind.TOMOGRAPHY_MEASURE, partner=remote),
            )
        )
        return tuple(rules)

    def termination_for():
        return (MeasurementCountClause(n_measurements), TimeoutClause(timeout_ns))

    return _mirrored(rs_id, owner, partner, rules_for, termination_for)


def _clause_to_dict(clause: Clause) -> dict:
    if isinstance(clause, EnoughResourceClause):
        return {"type": "enough-resource", "num_required": clause.num_required}
    if isinstance(clause, MeasurementCountClause):
        return {"type": "measurement-count", "target": clause.target, "current": clause.current}
    if isinstance(clause, TimeoutClause):
        return {"type": "timeout", "deadline_ns": clause.deadline_ns}
    raise TypeError(f"unknown clause {type(clause).__name__}")


def _clause_from_dict(d: dict) -> Clause:
    t = d.get("type")
    if t == "enough-resource":
        return EnoughResourceClause(d["num_required"])
    if t == "measurement-count":
        return MeasurementCountClause(d["target"], d.get("current", 0))
    if t == "timeout":
        return TimeoutClause(d["deadline_ns"])
    raise DecodeError(f"unknown clause type {t!r}")


def _action_to_dict(action: Action) -> dict:
    d = {"kind": action.kind.value, "partner": action.partner}
    if action.circuit is not None:
        d["circuit"] = {"scheme": action.circuit.scheme.value, "first": action.circuit.first}
    return d


def _action_from_dict(d: dict) -> Action:
    try:
        kind = ActionKind(d["kind"])
    except (KeyError, ValueError) as e:
        raise DecodeError(f"bad action: {e}") from e
    circuit = None
    if "circuit" in d:
        c = d["circuit"]
        circuit = CircuitSpec(Scheme(c["scheme"]), c["first"])
    return Action(kind, d["partner"], circuit)


def serialize_ruleset(rs: RuleSet) -> bytes:
    """Canonical, versioned, platform-independent encoding."""
    payload = {
        "ruleset_id": f"{rs.ruleset_id:032x}",
        "owner": rs.owner,
        "partner": rs.partner,
        "rules": [
            {
                "rule_id": r.rule_id,
                "clauses": [_clause_to_dict(c) for c in r.clauses],
                "action": _action_to_dict(r.action),
                "action_index": r.action_index,
            }
            for r in rs.rules
        ],
        "termination": [_clause_to_dict(c) for c in rs.termination],
    }
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return _MAGIC + bytes([_VERSION]) + struct.pack(">I", len(body)) + body


def deserialize_ruleset(blob: bytes) -> RuleSet:
    if len(blob) < 8 or blob[:3] != _MAGIC:
        raise DecodeError("not a serialized RuleSet")
    if blob[3] != _VERSION:
        raise DecodeError(f"unknown version {blob[3]}")
    (length,) = struct.unpack(">I", blob[4:8])
    body = blob[8:]
    if len(body) != length:
        raise DecodeError(f"payload length {len(body)} does not match header {length}")
    try:
        payload = json.loads(body.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DecodeError(f"corrupt payload: {e}") from e
    try:
        rules = tuple(
            Rule(
                rule_id=r["rule_id"],
                clauses=tuple(_clause_from_dict(c) for c in r["clauses"]),
                action=_action_from_dict(r["action"]),
                action_index=r["action_index"],
            )
            for r in payload["rules"]
        )
        return RuleSet(
            ruleset_id=int(payload["ruleset_id"], 16),
            owner=payload["owner"],
            partner=payload["partner"],
            rules=rules,
            termination=tuple(_clause_from_dict(c) for c in payload["termination"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DecodeError(f"malformed RuleSet payload: {e}") from e


def describe(rs: RuleSet) -> str:
    """Human-readable dump, one line per Rule."""
    lines = [f"RuleSet {rs.ruleset_id:032x} owner={rs.owner} partner={rs.partner}"]
    for r in rs.rules:
        clauses = ", ".join(_clause_to_dict(c)["type"] for c in r.clauses)
        action = r.action.kind.value
        if r.action.circuit is not None:
            action += f"({r.action.circuit.scheme.value}, first={r.action.circuit.first})"
        lines.append(f"  rule {r.rule_id}: [{clauses}] -> {action} arity={r.action.arity}")
    term = ", ".join(_clause_to_dict(c)["type"] for c in rs.termination)
    lines.append(f"  terminate on: {term}")
    return "\n".join(lines)
