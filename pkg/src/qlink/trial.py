"""Trial orchestration: one seeded, deterministic simulation run.

A trial wires the generation session, the two rule engines and the
tomography accumulator onto one event queue, runs until both RuleSets
terminate (counter or timeout), and reduces the outcome to a TrialResult.
Independent trials share no state and may run in parallel processes.
"""
from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from . import tomography
from .error_model import (
    EXCITED,
    MIXED,
    RELAXED,
    build_transition_matrix,
    is_pauli,
)
from .link_layer import LinkSession
from .rule_engine import RuleEngine
from .ruleset import build_recurrent_purification_ruleset, build_tomography_ruleset
from .sim import (
    CLASSICAL_MESSAGE_DELIVERY,
    PHOTON_ARRIVAL_AT_BSA,
    PHOTON_BURST_START,
    RULESET_TIMEOUT_CHECK,
    NS_PER_SEC,
    EventCapExceeded,
    EventQueue,
    make_streams,
)

STREAM_IDS = ("channel", "darkcount", "memory", "measurement", "basis-choice", "purify")

TALLY_KEYS = ("clean", "x", "z", "y", "er", "mixed")
_PAULI_TALLY = ("clean", "x", "z", "y")
_FA_CREDIT = {"clean": 1.0, "x": 0.0, "z": 0.0, "y": 0.0, "er": 0.5, "mixed": 0.25}


class TrialAbort(RuntimeError):
    """The trial hit its livelock guard and cannot produce a result."""


@dataclass(frozen=True)
class TrialResult:
    seed: int
    f_r: Optional[float]
    f_undefined: bool
    f_a: Optional[float]
    error_tallies: dict
    n_target: int
    n_joined: int
    elapsed_ns: int
    throughput_per_s: float
    raw_pairs_per_s: float
    heralded: int
    dark_heralds: int
    measured: int
    consumed: int
    discarded: int
    released: int
    timed_out: bool
    rounds: int
    events: int

    def audit_balanced(self) -> bool:
        return self.heralded == self.measured + self.consumed + self.discarded + self.released

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


class _TrialContext:
    """Mutable state shared by the engines within one trial."""

    def __init__(self, config, streams, matrix, session):
        self.rng_measurement = streams["measurement"]
        self.rng_basis = streams["basis-choice"]
        self.rng_purify = streams["purify"]
        self.rng_memory = streams["memory"]
        self.meas_error = config.hardware.meas_error
        self.gate2q_error = config.hardware.gate2q_error
        self.matrix = matrix
        self.session = session
        self.accumulator = tomography.CorrelationAccumulator()
        self.purify_instances = {}
        self.tallies = {k: 0 for k in TALLY_KEYS}
        self.fa_sum = 0.0
        self.fates = {"measured": 0, "consumed": 0, "discarded": 0, "released": 0}
        self.engines_done = [False, False]
        self.tau_ns = matrix.tau_ns

    def touch(self, pair, side: int, now: int) -> None:
        """Lazily evolve one side's memory label over its idle interval."""
        dt = now - pair.touched[side]
        pair.touched[side] = now
        n = (dt + self.tau_ns // 2) // self.tau_ns
        if n <= 0:
            return
        state = pair.state[side]
        row = self.matrix.sampling_rows(n)[state]
        u = self.rng_memory.random()
        new = 6
        for i in range(6):
            if u < row[i]:
                new = i
                break
        if new == state:
            return
        pair.state[side] = new
        if new == EXCITED or new == RELAXED:
            other = pair.state[1 - side]
            if is_pauli(other):
                pair.state[1 - side] = MIXED

    def set_fate(self, pair, fate: str) -> None:
        if pair.fate is None:
            pair.fate = fate
            self.fates[fate] += 1

    def release_slot(self, node: int) -> None:
        self.session.release_slot(node)

    def tally_measured(self, pair) -> None:
        sa, sb = pair.state
        if is_pauli(sa) and is_pauli(sb):
            cat = _PAULI_TALLY[sa ^ sb]
        elif sa == EXCITED or sa == RELAXED or sb == EXCITED or sb == RELAXED:
            cat = "er"
        else:
            cat = "mixed"
        self.tallies[cat] += 1
        self.fa_sum += _FA_CREDIT[cat]
        self.set_fate(pair, "measured")

    def on_engine_terminated(self, node: int, now: int) -> None:
        self.engines_done[node] = True
        if self.engines_done[0] or self.engines_done[1]:
            # once either RuleSet dies no joint attempt can complete
            self.session.stop()


def build_rulesets(config):
    proto = config.protocol
    if proto.mode == "tomography" or proto.rounds == 0:
        return build_tomography_ruleset(config.n_measurements, owner=0, partner=1)
    return build_recurrent_purification_ruleset(
        proto.scheme,
        proto.rounds,
        config.n_measurements,
        owner=0,
        partner=1,
        switch_at=proto.switch_at,
    )


def run_trial(config, seed: int, trace=None) -> TrialResult:
    """Execute one seeded trial of the configured experiment."""
    config.validate()
    streams = make_streams(seed, STREAM_IDS)
    matrix = build_transition_matrix(config.hardware.memory_rates())
    queue = EventQueue()
    session = LinkSession(config.link, config.hardware, queue, streams["channel"], streams["darkcount"])
    ctx = _TrialContext(config, streams, matrix, session)

    rs_a, rs_b = build_rulesets(config)
    engines = (RuleEngine(0, rs_a, ctx), RuleEngine(1, rs_b, ctx))
    node_latency = session.node_latency_ns

    def flush_outbox(engine):
        if engine.outbox:
            records = engine.outbox
            engine.outbox = []
            queue.schedule(
                queue.now + node_latency,
                CLASSICAL_MESSAGE_DELIVERY,
                f"node{1 - engine.node}",
                ("protocol", 1 - engine.node, engine.ruleset.ruleset_id, records),
            )

    if not (engines[0].terminated and engines[1].terminated):
        session.start(0)
        for engine in engines:
            if engine.timeout_ns is not None:
                queue.schedule(engine.timeout_ns, RULESET_TIMEOUT_CHECK, f"node{engine.node}")

    event_cap = config.event_cap
    while queue and not (engines[0].terminated and engines[1].terminated):
        if queue.processed >= event_cap:
            raise TrialAbort(
                f"event cap {event_cap} exceeded at t={queue.now}ns: likely protocol livelock"
            )
        t, _seq, kind, target, payload = queue.pop()
        if trace is not None:
            trace(f"{t} {target} {kind}")
        if kind is PHOTON_BURST_START:
            session.handle_burst_start(t)
        elif kind is PHOTON_ARRIVAL_AT_BSA:
            session.handle_bsa_arrival(t, payload[0], payload[1])
        elif kind is CLASSICAL_MESSAGE_DELIVERY:
            if payload[0] == "results":
                _, node, pairs, committed = payload
                session.return_failed_slots(node, committed, len(pairs))
                engines[node].on_heralds(pairs, t)
                flush_outbox(engines[node])
            else:
                _, node, ruleset_id, records = payload
                engines[node].on_message_batch(ruleset_id, records, t)
                flush_outbox(engines[node])
        elif kind is RULESET_TIMEOUT_CHECK:
            node = int(target[-1])
            engines[node].on_timeout(t)

    # Drain undelivered heralds so every generated pair has a final fate.
    while queue:
        _t, _seq, kind, _target, payload = queue.pop()
        if kind is CLASSICAL_MESSAGE_DELIVERY and payload[0] == "results":
            for pair in payload[2]:
                ctx.set_fate(pair, "released")

    owner = engines[0]
    elapsed_ns = owner.finished_at if owner.finished_at is not None else queue.now
    elapsed_s = elapsed_ns / NS_PER_SEC

    f_r = None
    f_undefined = False
    if ctx.accumulator.total == 0:
        f_undefined = True
    else:
        try:
            rho = tomography.reconstruct(ctx.accumulator)
            f_r = tomography.fidelity(rho)
        except tomography.ReconstructionError:
            f_undefined = True

    measured = ctx.fates["measured"]
    f_a = ctx.fa_sum / measured if measured else None

    return TrialResult(
        seed=seed,
        f_r=f_r,
        f_undefined=f_undefined,
        f_a=f_a,
        error_tallies=dict(ctx.tallies),
        n_target=config.n_measurements,
        n_joined=owner.joins,
        elapsed_ns=elapsed_ns,
        throughput_per_s=owner.joins / elapsed_s if elapsed_s > 0 else 0.0,
        raw_pairs_per_s=session.heralded / elapsed_s if elapsed_s > 0 else 0.0,
        heralded=session.heralded,
        dark_heralds=session.dark_heralds,
        measured=measured,
        consumed=ctx.fates["consumed"],
        discarded=ctx.fates["discarded"],
        released=ctx.fates["released"],
        timed_out=owner.timed_out or engines[1].timed_out,
        rounds=session.rounds,
        events=queue.processed,
    )


def _run_trial_star(args):
    config, seed = args
    return run_trial(config, seed)


def run_trials(config, trials: Optional[int] = None, seed_base: Optional[int] = None, jobs: int = 1):
    """Run `trials` independent trials with seeds seed_base + i.

    Results are returned in trial order regardless of worker completion
    order, so a pooled run is byte-identical to a serial one.
    """
    n = config.trials if trials is None else trials
    base = config.seed_base if seed_base is None else seed_base
    seeds = [base + i for i in range(n)]
    if jobs and jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_trial_star, [(config, s) for s in seeds]))
    return [run_trial(config, s) for s in seeds]


def aggregate(results: Sequence[TrialResult]) -> tomography.AggregateStats:
    return tomography.aggregate(results)
