"""Event-driven RuleSet executor.

One engine runs per node.  Fresh resources enter the first Rule; the
dispatch loop fires Rules top-down whenever their clauses hold, consuming
the oldest unlocked resources.  Actions emit classical records carrying
(ruleset, rule, action index) headers so the peer can pair them with its own
half; purification keeps its surviving pair locked until the peer's parity
bits arrive, then promotes it to the next Rule or discards it.

Both engines run the same deterministic selection logic over identically
ordered resource lists, so they pick the same pairs for the same action
index without negotiating.  The shared PurifyInstance records carry the
quantum correlations between the two halves of each purification.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .error_model import EXCITED, RELAXED, is_pauli
from .purification import circuit_schedule, run_circuit
from .ruleset import ActionKind, RuleContext, RuleSet, evaluate_clause
from .tomography import first_outcome, second_outcome


class ProtocolDesyncError(RuntimeError):
    """The two endpoints selected different resources for one action:
    a violation of the symmetric-execution guarantee."""


@dataclass
class PurifyInstance:
    """Shared state of one purification across both endpoints."""

    key: tuple  # (rule_id, action_index)
    pairs: tuple
    circuit: object
    first_node: int
    bits: list = field(default_factory=lambda: [None, None])
    fired: list = field(default_factory=lambda: [False, False])
    decided: list = field(default_factory=lambda: [False, False])
    result: Optional[object] = None
    labels_applied: bool = False


class RuleEngine:
    """Executes one node's RuleSet; communicates only via ctx.send."""

    def __init__(self, node: int, ruleset: RuleSet, ctx):
        self.node = node
        self.ruleset = ruleset
        self.ctx = ctx
        self.rules = list(ruleset.rules)
        self._rule_ctx = [
            RuleContext(
                resources=rule.resources,
                is_locked=self._is_locked,
                measurements_performed=0,
            )
            for rule in self.rules
        ]
        self.meas_actions = 0
        self.joins = 0
        self.target = ruleset.measurement_target() or 0
        self.timeout_ns = ruleset.timeout_ns()
        self.terminated = False
        self.timed_out = False
        self.finished_at = None
        self.data_pending = {}
        self.remote_tomo = {}
        self.remote_parity = {}
        self.ignored_messages = 0
        self.outbox = []
        if self.target == 0:
            self._terminate(0, timed_out=False)

    def _is_locked(self, pair) -> bool:
        return pair.locked[self.node]

    # -- entry points -------------------------------------------------

    def on_heralds(self, pairs, now: int) -> None:
        if self.terminated:
            for pair in pairs:
                self._release(pair)
            return
        rule0 = self.rules[0]
        for pair in pairs:
            pair.rule_pos[self.node] = 0
            rule0.resources.append(pair)
        self.dispatch(now)

    def on_message_batch(self, ruleset_id: int, records, now: int) -> None:
        if self.terminated:
            self.ignored_messages += len(records)
            return
        if ruleset_id != self.ruleset.ruleset_id:
            self.ignored_messages += len(records)
            return
        for rec in records:
            if rec[0] == "tomo":
                _, _rule_id, action_index, basis, outcome = rec
                if action_index in self.data_pending:
                    self._join(action_index, basis, outcome, now)
                else:
                    self.remote_tomo[action_index] = (basis, outcome)
            else:
                _, rule_id, action_index, bits = rec
                self._on_parity(rule_id, action_index, bits, now)
            if self.terminated:
                return
        self.dispatch(now)

    def on_timeout(self, now: int) -> None:
        if not self.terminated:
            self._terminate(now, timed_out=True)

    # -- dispatch -----------------------------------------------------

    def dispatch(self, now: int) -> None:
        progressed = True
        while progressed and not self.terminated:
            progressed = False
            for rule, rctx in zip(self.rules, self._rule_ctx):
                while not self.terminated and self._clauses_pass(rule, rctx):
                    self._fire(rule, now)
                    progressed = True
                if self.terminated:
                    return

    def _clauses_pass(self, rule, rctx) -> bool:
        rctx.measurements_performed = self.meas_actions
        return all(evaluate_clause(c, rctx) for c in rule.clauses)

    def _select(self, rule, k):
        picked = []
        for pair in rule.resources:
            if not pair.locked[self.node]:
                picked.append(pair)
                if len(picked) == k:
                    break
        for pair in picked:
            rule.resources.remove(pair)
        return picked

    def _fire(self, rule, now: int) -> None:
        if rule.action.kind is ActionKind.TOMOGRAPHY_MEASURE:
            self._fire_tomography(rule, now)
        else:
            self._fire_purify(rule, now)

    # -- tomography ---------------------------------------------------

    def _fire_tomography(self, rule, now: int) -> None:
        ctx = self.ctx
        node = self.node
        pair = self._select(rule, 1)[0]
        ctx.touch(pair, node, now)
        rng = ctx.rng_measurement
        state = pair.state[node]
        if ctx.meas_error > 0.0 and rng.random() < ctx.meas_error and is_pauli(state):
            state ^= rng.randrange(1, 4)
            pair.state[node] = state
        basis = ctx.rng_basis.randrange(3)
        other = pair.meas[1 - node]
        if other is None:
            outcome = first_outcome(state, basis, rng)
        else:
            outcome = second_outcome(state, pair.state[1 - node], basis, other[0], other[1], rng)
        pair.meas[node] = (basis, outcome)
        if other is not None:
            ctx.tally_measured(pair)
        ctx.release_slot(node)

        action_index = rule.action_index
        rule.action_index += 1
        self.meas_actions += 1
        self.data_pending[action_index] = (basis, outcome)
        self.outbox.append(("tomo", rule.rule_id, action_index, basis, outcome))
        remote = self.remote_tomo.pop(action_index, None)
        if remote is not None:
            self._join(action_index, remote[0], remote[1], now)

    def _join(self, action_index: int, basis_remote: int, outcome_remote: int, now: int) -> None:
        basis_own, outcome_own = self.data_pending.pop(action_index)
        self.joins += 1
        if self.node == 0:
            self.ctx.accumulator.add(basis_own, basis_remote, outcome_own, outcome_remote)
        if self.joins >= self.target and not self.terminated:
            self._terminate(now, timed_out=False)

    # -- purification ---------------------------------------------------

    def _fire_purify(self, rule, now: int) -> None:
        ctx = self.ctx
        node = self.node
        circuit = rule.action.circuit
        pairs = tuple(self._select(rule, circuit.arity))
        for pair in pairs:
            ctx.touch(pair, node, now)

        action_index = rule.action_index
        rule.action_index += 1
        key = (rule.rule_id, action_index)
        inst = ctx.purify_instances.get(key)
        if inst is None:
            n_stages = len(circuit_schedule(circuit)[1])
            bits = tuple(ctx.rng_purify.getrandbits(1) for _ in range(n_stages))
            inst = PurifyInstance(key, pairs, circuit, first_node=node)
            inst.bits[node] = bits
            ctx.purify_instances[key] = inst
        else:
            if inst.pairs != pairs:
                raise ProtocolDesyncError(
                    f"action {key}: node {node} picked "
                    f"{[p.pid for p in pairs]} vs {[p.pid for p in inst.pairs]}"
                )
            result = run_circuit(
                circuit,
                [tuple(p.state) for p in pairs],
                ctx.gate2q_error,
                ctx.meas_error,
                ctx.rng_purify,
                first_side=inst.first_node,
                first_bits=inst.bits[inst.first_node],
            )
            inst.result = result
            inst.bits[node] = result.bits_a if node == 0 else result.bits_b
        inst.fired[self.node] = True

        kept = pairs[0]
        kept.locked[node] = True
        for consumed in pairs[1:]:
            ctx.set_fate(consumed, "consumed")
            ctx.release_slot(node)
        self.outbox.append(("purify", rule.rule_id, action_index, inst.bits[node]))

        remote = self.remote_parity.pop(key, None)
        if remote is not None:
            self._decide(inst, remote, now)

    def _on_parity(self, rule_id: int, action_index: int, remote_bits, now: int) -> None:
        key = (rule_id, action_index)
        inst = self.ctx.purify_instances.get(key)
        if inst is None or not inst.fired[self.node]:
            # the peer's packet outran our own half; hold it, never drop it
            self.remote_parity[key] = remote_bits
            return
        self._decide(inst, remote_bits, now)

    def _decide(self, inst: PurifyInstance, remote_bits, now: int) -> None:
        node = self.node
        kept = inst.pairs[0]
        kept.locked[node] = False
        success = inst.bits[node] == remote_bits
        if success:
            if not inst.labels_applied:
                kept.state[0], kept.state[1] = inst.result.kept_state_pair
                inst.labels_applied = True
            next_rule = inst.key[0] + 1
            kept.rule_pos[node] = next_rule
            self.rules[next_rule].resources.append(kept)
        else:
            self.ctx.set_fate(kept, "discarded")
            self.ctx.release_slot(node)
        inst.decided[node] = True
        if inst.decided[0] and inst.decided[1]:
            del self.ctx.purify_instances[inst.key]

    # -- termination ----------------------------------------------------

    def _release(self, pair) -> None:
        self.ctx.set_fate(pair, "released")
        self.ctx.release_slot(self.node)

    def _terminate(self, now: int, timed_out: bool) -> None:
        self.terminated = True
        self.timed_out = timed_out
        self.finished_at = now
        for rule in self.rules:
            for pair in rule.resources:
                self._release(pair)
            rule.resources.clear()
        self.ctx.on_engine_terminated(self.node, now)
