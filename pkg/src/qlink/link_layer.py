"""Entanglement generation over the two data-link architectures.

A mid-span analyzer coordinates photon bursts: it computes emission timings
so both photons of an attempt arrive simultaneously, collects the attempt
outcomes of a burst and returns them to both nodes as one batched packet.
The next burst starts only once both nodes hold their results.  In the
sender-receiver architecture the analyzer sits inside one endpoint, which
therefore learns outcomes immediately and can recycle failed slots early,
while the sender waits a full span for its acknowledgement.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from .error_model import CLEAN, MIXED, HardwareParams, ConfigurationError, \
    channel_label_distribution, dark_count_probability
from .sim import (
    CLASSICAL_MESSAGE_DELIVERY,
    PHOTON_ARRIVAL_AT_BSA,
    PHOTON_BURST_START,
    NS_PER_SEC,
)

MIM = "mim"
SENDER_RECEIVER = "sr"

# Classical and optical propagation: refractive index 1.44 over c = 3e8 m/s
# gives an integer 4800 ns per km, which keeps all event times exact.
_C_M_PER_S = 3.0e8


def propagation_ns_per_km(refractive_index: float) -> float:
    return refractive_index * 1.0e12 / _C_M_PER_S


@dataclass
class LinkConfig:
    architecture: str = MIM
    total_length_km: float = 20.0
    bsa_position_km: Optional[float] = None  # distance from node A; None = midpoint

    def __post_init__(self):
        if self.architecture not in (MIM, SENDER_RECEIVER):
            raise ConfigurationError(f"unknown architecture {self.architecture!r}")
        if self.total_length_km < 0:
            raise ConfigurationError("total_length_km must be non-negative")
        if self.architecture == SENDER_RECEIVER:
            # analyzer lives inside the receiving endpoint
            self.bsa_position_km = self.total_length_km
        elif self.bsa_position_km is None:
            self.bsa_position_km = self.total_length_km / 2.0
        if not 0 <= self.bsa_position_km <= self.total_length_km:
            raise ConfigurationError("bsa_position_km outside the link")

    @property
    def arms_km(self):
        return (self.bsa_position_km, self.total_length_km - self.bsa_position_km)


@dataclass
class EmissionTiming:
    first_emit_offset_ns: int  # delay after burst epoch so photons meet at the BSA
    interval_ns: int
    burst_size: int


def compute_emission_timing(link: LinkConfig, params: HardwareParams):
    """Per-node emission schedule: the node nearer the analyzer delays its
    first emission by the flight-time difference; photons step at the
    detector recovery time; the burst spans the whole memory bank."""
    ns_km = propagation_ns_per_km(params.fiber_refractive_index)
    arms = link.arms_km
    max_arm = max(arms)
    return tuple(
        EmissionTiming(
            first_emit_offset_ns=round((max_arm - arm) * ns_km),
            interval_ns=params.detector_recovery_ns,
            burst_size=params.qubits_per_qnic,
        )
        for arm in arms
    )


def attempt_success_probability(link: LinkConfig, params: HardwareParams) -> float:
    """Per-attempt heralding probability.

    Each photon must be emitted into the fiber, survive its arm and fire
    its detector; the linear-optic analyzer then succeeds for at most half
    of the joint outcomes.
    """
    p = 0.5
    for arm in link.arms_km:
        p *= (
            params.emission_zpl_prob
            * params.collection_eff
            * (1.0 - params.fiber_loss_rate_per_km) ** arm
            * params.detector_eff
        )
    return p


def round_period_ns(link: LinkConfig, params: HardwareParams, attempts: int) -> int:
    """One full generation cycle: emissions, photon flight to the analyzer
    and the batched result return to the farther node."""
    ns_km = propagation_ns_per_km(params.fiber_refractive_index)
    max_arm_ns = round(max(link.arms_km) * ns_km)
    span = max(attempts, 1) - 1
    return 2 * max_arm_ns + span


def expected_generation_rate(link: LinkConfig, params: HardwareParams) -> float:
    """Analytic pairs-per-second estimate used as an oracle for the
    simulated rate."""
    burst = params.qubits_per_qnic
    period_s = round_period_ns(link, params, burst) / NS_PER_SEC
    return burst * attempt_success_probability(link, params) / period_s


# --- wire format for the optional trace log ------------------------------

BOOT_UP_NOTIFICATION = 0
EMISSION_TIMING = 1
BURST_END = 2
BSA_RESULTS = 3
PROTOCOL_DATA = 4

_HEADER = struct.Struct("<BHHQ")


@dataclass
class LinkMessage:
    kind: int
    src: int
    dst: int
    sent_at: int
    payload: bytes = b""


def encode_message(msg: LinkMessage) -> bytes:
    """Length-prefixed record: u32 length, then kind/src/dst/sent_at and
    the raw payload bytes."""
    body = _HEADER.pack(msg.kind, msg.src, msg.dst, msg.sent_at) + msg.payload
    return struct.pack("<I", len(body)) + body


def decode_message(blob: bytes):
    """Decode one record; returns (message, bytes consumed)."""
    if len(blob) < 4:
        raise ValueError("truncated record")
    (length,) = struct.unpack_from("<I", blob)
    if len(blob) < 4 + length or length < _HEADER.size:
        raise ValueError("truncated record")
    kind, src, dst, sent_at = _HEADER.unpack_from(blob, 4)
    payload = blob[4 + _HEADER.size : 4 + length]
    return LinkMessage(kind, src, dst, sent_at, payload), 4 + length


def encode_results_bitset(outcomes) -> bytes:
    """Pack per-attempt success bits (attempt i at bit i), prefixed by the
    attempt count."""
    n = len(outcomes)
    out = bytearray(struct.pack("<H", n))
    byte = 0
    for i, ok in enumerate(outcomes):
        if ok:
            byte |= 1 << (i & 7)
        if (i & 7) == 7:
            out.append(byte)
            byte = 0
    if n & 7:
        out.append(byte)
    return bytes(out)


def decode_results_bitset(payload: bytes):
    (n,) = struct.unpack_from("<H", payload)
    bits = []
    for i in range(n):
        bits.append(bool(payload[2 + (i >> 3)] & (1 << (i & 7))))
    return bits


# --- per-trial state ------------------------------------------------------


class EntangledPairRecord:
    """One heralded Bell-pair resource tracked across both nodes."""

    __slots__ = ("pid", "state", "touched", "heralded_at", "locked", "rule_pos", "meas", "fate")

    def __init__(self, pid, state_a, state_b, emitted_a, emitted_b, heralded_at):
        self.pid = pid
        self.state = [state_a, state_b]
        self.touched = [emitted_a, emitted_b]
        self.heralded_at = heralded_at
        self.locked = [False, False]
        self.rule_pos = [0, 0]
        self.meas = [None, None]
        self.fate = None


def _binomial_cdf(n: int, p: float):
    """Cumulative Binomial(n, p) table for inverse sampling."""
    q = 1.0 - p
    pmf = q**n
    cdf = [pmf]
    for k in range(1, n + 1):
        pmf *= (n - k + 1) / k * (p / q) if q > 0 else 0.0
        cdf.append(cdf[-1] + pmf)
    if q == 0.0:
        cdf = [0.0] * n + [1.0]
    return cdf


class LinkSession:
    """Drives the burst cycle of one trial.

    Slots are committed per burst (min of both nodes' free counts), attempt
    outcomes are sampled at the analyzer and the heralded pair records are
    delivered to each node with that node's return latency.  A burst with
    no free slots still paces a full (empty) round.
    """

    def __init__(self, link, params, queue, rng_channel, rng_dark):
        self.link = link
        self.params = params
        self.queue = queue
        self.rng_channel = rng_channel
        self.rng_dark = rng_dark

        ns_km = propagation_ns_per_km(params.fiber_refractive_index)
        arms = link.arms_km
        self.arm_ns = tuple(round(a * ns_km) for a in arms)
        self.max_arm_ns = max(self.arm_ns)
        self.emit_offset = tuple(self.max_arm_ns - a for a in self.arm_ns)
        self.node_latency_ns = round(link.total_length_km * ns_km)

        self.p_attempt = attempt_success_probability(link, params)
        self.p_dark = dark_count_probability(params.detector_recovery_ns, params.darkcount_rate_per_sec)
        rate = params.fiber_pauli_rate_per_km
        self.label_cdf = tuple(
            self._cumsum(channel_label_distribution(a, rate)) for a in arms
        )

        self.qubits = params.qubits_per_qnic
        self.free = [self.qubits, self.qubits]
        self._success_cdf = {}
        self._dark_cdf = {}
        self.next_pid = 0
        self.rounds = 0
        self.heralded = 0
        self.dark_heralds = 0
        self.active = True

    @staticmethod
    def _cumsum(dist):
        total, out = 0.0, []
        for p in dist:
            total += p
            out.append(total)
        return tuple(out)

    def _sample_binomial(self, n, p, cache, rng):
        if n == 0 or p == 0.0:
            return 0
        cdf = cache.get(n)
        if cdf is None:
            cdf = _binomial_cdf(n, p)
            cache[n] = cdf
        u = rng.random()
        # linear scan is fine: success counts concentrate near n*p
        for k, c in enumerate(cdf):
            if u < c:
                return k
        return n

    def _sample_label(self, side):
        u = self.rng_channel.random()
        cdf = self.label_cdf[side]
        for label in range(3):
            if u < cdf[label]:
                return label
        return 3

    def start(self, t0: int = 0):
        self.queue.schedule(t0, PHOTON_BURST_START, "link")

    def stop(self):
        self.active = False

    def handle_burst_start(self, now: int):
        if not self.active:
            return
        self.rounds += 1
        n = min(self.free[0], self.free[1])
        if n == 0:
            # fully stalled: pace one empty round and poll again
            self.queue.schedule(now + max(2 * self.max_arm_ns, 1), PHOTON_BURST_START, "link")
            return
        self.free[0] -= n
        self.free[1] -= n
        arrive = now + self.max_arm_ns + (n - 1)
        self.queue.schedule(arrive, PHOTON_ARRIVAL_AT_BSA, "bsa", (now, n))

    def handle_bsa_arrival(self, now: int, burst_epoch: int, n: int):
        """Sample the burst's outcomes and return the batched results."""
        k = self._sample_binomial(n, self.p_attempt, self._success_cdf, self.rng_channel)
        dark = self._sample_binomial(n - k, self.p_dark, self._dark_cdf, self.rng_dark)

        emit_a = burst_epoch + self.emit_offset[0]
        emit_b = burst_epoch + self.emit_offset[1]
        pairs = []
        for _ in range(k):
            pairs.append(
                EntangledPairRecord(
                    self.next_pid,
                    self._sample_label(0),
                    self._sample_label(1),
                    emit_a,
                    emit_b,
                    now,
                )
            )
            self.next_pid += 1
        for _ in range(dark):
            pairs.append(EntangledPairRecord(self.next_pid, MIXED, MIXED, emit_a, emit_b, now))
            self.next_pid += 1
        self.heralded += len(pairs)
        self.dark_heralds += dark

        # Results are scheduled before the next burst so that when both land
        # on the same tick the FIFO tie-break frees failed slots first.
        for node in (0, 1):
            self.queue.schedule(
                now + self.arm_ns[node],
                CLASSICAL_MESSAGE_DELIVERY,
                f"node{node}",
                ("results", node, pairs, n),
            )
        if self.active:
            self.queue.schedule(now + self.max_arm_ns, PHOTON_BURST_START, "link")

    def return_failed_slots(self, node: int, committed: int, heralds: int):
        self.free[node] += committed - heralds

    def release_slot(self, node: int):
        self.free[node] += 1
