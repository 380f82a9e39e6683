"""Stochastic imperfection models.

Covers the seven-state memory-idling Markov chain, fiber Pauli errors and
photon loss, gate errors, measurement errors and detector dark counts.

Error states 0..3 are the Pauli subspace encoded so that composition is
bitwise XOR: Clean=0b00, X=0b01, Z=0b10, Y=0b11 (x-flag is bit 0, z-flag is
bit 1).  States 4..6 (Excited, Relaxed, Mixed) are lifecycle states that
break entanglement with the partner qubit and are absorbing with respect to
the Pauli subspace.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .sim import NS_PER_SEC

TAU_NS = 1_000  # base Markov step: 1 microsecond


class ErrorState(enum.IntEnum):
    CLEAN = 0
    X_ERROR = 1
    Z_ERROR = 2
    Y_ERROR = 3
    EXCITED = 4
    RELAXED = 5
    MIXED = 6


CLEAN = int(ErrorState.CLEAN)
X_ERROR = int(ErrorState.X_ERROR)
Z_ERROR = int(ErrorState.Z_ERROR)
Y_ERROR = int(ErrorState.Y_ERROR)
EXCITED = int(ErrorState.EXCITED)
RELAXED = int(ErrorState.RELAXED)
MIXED = int(ErrorState.MIXED)

PAULI_STATES = (CLEAN, X_ERROR, Z_ERROR, Y_ERROR)
LIFECYCLE_STATES = (EXCITED, RELAXED, MIXED)

# All 15 non-identity two-qubit Paulis as (first, second) label pairs.
TWO_QUBIT_PAULIS = tuple((a, b) for a in range(4) for b in range(4) if (a, b) != (0, 0))


def is_pauli(state: int) -> bool:
    return state <= Y_ERROR


def compose(a: int, b: int) -> int:
    """Compose two Pauli labels (group product modulo phase)."""
    return a ^ b


class ConfigurationError(ValueError):
    """A parameter combination outside the model's domain."""


@dataclass
class MemoryErrorRates:
    """Idle-memory error rates.

    pauli_rate_total is the combined X+Y+Z rate per second, split equally.
    excite_to_relax_ratio partitions the 1/T1 lifecycle rate.
    """

    pauli_rate_total: float
    lifetime_t1: float
    excite_to_relax_ratio: float = 100.0

    def validate(self):
        if self.pauli_rate_total < 0 or self.lifetime_t1 <= 0 or self.excite_to_relax_ratio <= 0:
            raise ConfigurationError("memory error rates must be positive")


@dataclass
class HardwareParams:
    """Hardware defaults used for all simulations unless overridden."""

    fiber_refractive_index: float = 1.44
    fiber_pauli_rate_per_km: float = 0.03  # total, split equally X/Y/Z
    fiber_loss_rate_per_km: float = 0.04501  # 0.2 dB/km
    memory_pauli_rate_per_sec: float = 1.0 / 3.0  # total, split equally
    memory_lifetime_s: float = 0.05
    excite_relax_ratio: float = 100.0  # excitation : relaxation
    emission_zpl_prob: float = 0.46
    collection_eff: float = 0.49
    detector_eff: float = 0.8
    darkcount_rate_per_sec: float = 10.0
    detector_recovery_ns: int = 1
    gate1q_error: float = 0.0005
    gate2q_error: float = 0.02
    meas_error: float = 0.05
    qubits_per_qnic: int = 100

    _PROBS = (
        "fiber_loss_rate_per_km",
        "emission_zpl_prob",
        "collection_eff",
        "detector_eff",
        "gate1q_error",
        "gate2q_error",
        "meas_error",
    )

    def validate(self):
        for name in self._PROBS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} outside [0, 1]")
        if not 0.0 <= self.fiber_pauli_rate_per_km <= 1.0:
            raise ConfigurationError(
                f"fiber_pauli_rate_per_km={self.fiber_pauli_rate_per_km} out of range "
                "for per-km application"
            )
        for name in ("fiber_refractive_index", "memory_lifetime_s"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("memory_pauli_rate_per_sec", "darkcount_rate_per_sec"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.detector_recovery_ns < 1:
            raise ConfigurationError("detector_recovery_ns must be >= 1")
        if self.qubits_per_qnic < 1:
            raise ConfigurationError("qubits_per_qnic must be >= 1")
        if self.excite_relax_ratio <= 0:
            raise ConfigurationError("excite_relax_ratio must be positive")

    def memory_rates(self) -> MemoryErrorRates:
        return MemoryErrorRates(
            pauli_rate_total=self.memory_pauli_rate_per_sec,
            lifetime_t1=self.memory_lifetime_s,
            excite_to_relax_ratio=self.excite_relax_ratio,
        )


class TransitionMatrix:
    """7x7 stochastic matrix for one base idling step of length tau.

    Rows/columns follow the state encoding above.  Lifecycle rows never
    return to the Pauli subspace.  Powers are computed by squaring and both
    the power-of-two ladder and per-exponent sampling rows are cached, since
    the same idle intervals recur throughout a trial.
    """

    def __init__(self, entries: np.ndarray, tau_ns: int = TAU_NS):
        self.entries = entries
        self.tau_ns = tau_ns
        self._pow2 = [entries]
        self._rows = {}  # n -> tuple of 7 cumulative rows for sampling

    def power(self, n: int) -> np.ndarray:
        """Exact n-step matrix via exponentiation by squaring."""
        if n == 0:
            return np.eye(7)
        result = None
        bit = 0
        while (1 << bit) <= n:
            if n & (1 << bit):
                while bit >= len(self._pow2):
                    last = self._pow2[-1]
                    self._pow2.append(last @ last)
                m = self._pow2[bit]
                result = m if result is None else result @ m
            bit += 1
        return result

    def sampling_rows(self, n: int):
        rows = self._rows.get(n)
        if rows is None:
            m = self.power(n)
            rows = tuple(tuple(np.cumsum(m[i])) for i in range(7))
            self._rows[n] = rows
        return rows


def build_transition_matrix(rates: MemoryErrorRates, tau_ns: int = TAU_NS) -> TransitionMatrix:
    """Build the one-step idling matrix from per-second rates.

    Per-step probabilities: each Pauli gets (total/3)*tau, the lifecycle
    pair splits tau/T1 by the excitation:relaxation ratio.
    """
    rates.validate()
    tau_s = tau_ns / NS_PER_SEC
    p_pauli = rates.pauli_rate_total / 3.0 * tau_s
    p_life = tau_s / rates.lifetime_t1
    ratio = rates.excite_to_relax_ratio
    p_e = p_life * ratio / (ratio + 1.0)
    p_r = p_life / (ratio + 1.0)

    off_sum = 3 * p_pauli + p_e + p_r
    if off_sum > 1.0 or p_e + p_r > 1.0:
        raise ConfigurationError(
            f"tau={tau_ns}ns too large for given rates (row sum {off_sum:.3g} > 1)"
        )

    m = np.zeros((7, 7))
    pauli_step = (0.0, p_pauli, p_pauli, p_pauli)
    for row in range(4):
        for col in range(4):
            if row != col:
                # reaching `col` from `row` requires applying row^col
                m[row, col] = pauli_step[row ^ col]
        m[row, EXCITED] = p_e
        m[row, RELAXED] = p_r
    m[EXCITED, RELAXED] = p_r
    m[RELAXED, EXCITED] = p_e
    m[MIXED, EXCITED] = p_e
    m[MIXED, RELAXED] = p_r
    for row in range(7):
        m[row, row] = 1.0 - (m[row].sum() - m[row, row])
    return TransitionMatrix(m, tau_ns)


def evolve_memory(state: int, dt_ns: int, matrix: TransitionMatrix, rng) -> int:
    """Sample the idle-evolution of one qubit over dt nanoseconds.

    The output distribution is the state's row of matrix^round(dt/tau).
    Forcing the partner of a freshly excited/relaxed qubit to Mixed is the
    caller's job; this function sees a single qubit.
    """
    if dt_ns < 0:
        raise ValueError("dt must be non-negative")
    n = round(dt_ns / matrix.tau_ns)
    if n == 0:
        return state
    row = matrix.sampling_rows(n)[state]
    u = rng.random()
    for i in range(6):
        if u < row[i]:
            return i
    return 6


def channel_step_distribution(p_each: float):
    """Distribution of the net Pauli applied by one fiber segment.

    X, Y and Z each fire independently with probability p_each; the net
    label is their group product.
    """
    q = 1.0 - p_each
    p_i = q**3 + p_each**3
    p_one = p_each * q * q + p_each * p_each * q
    return (p_i, p_one, p_one, p_one)


def channel_moment(length_km: float, rate_per_km_total: float) -> float:
    """Character damping factor of the whole-fiber Pauli channel.

    The per-segment distribution is symmetric in X/Y/Z, so the three
    nontrivial characters share one damping m = q_I - q_X and the full-run
    label distribution is ((1+3m)/4, (1-m)/4, (1-m)/4, (1-m)/4).
    Composition over segments multiplies m.
    """
    if length_km < 0:
        raise ValueError("length must be non-negative")
    p_each = rate_per_km_total / 3.0
    whole = int(length_km)
    frac = length_km - whole

    def seg_m(p):
        d = channel_step_distribution(p)
        return d[0] - d[1]

    m = seg_m(p_each) ** whole
    if frac > 0:
        m *= seg_m(p_each * frac)
    return m


def channel_label_distribution(length_km: float, rate_per_km_total: float):
    """Exact label distribution (I, X, Z, Y) after traversing the fiber."""
    m = channel_moment(length_km, rate_per_km_total)
    p_err = (1.0 - m) / 4.0
    return ((1.0 + 3.0 * m) / 4.0, p_err, p_err, p_err)


def apply_channel_error(state: int, length_km: float, params: HardwareParams, rng) -> int:
    """Apply fiber Pauli noise to a flying qubit's label, km by km.

    Lifecycle states pass through unchanged; channel noise cannot un-break
    a pair.
    """
    if length_km < 0:
        raise ValueError("length must be non-negative")
    if not is_pauli(state):
        return state
    p_each = params.fiber_pauli_rate_per_km / 3.0
    whole = int(length_km)
    frac = length_km - whole
    for _ in range(whole):
        if rng.random() < p_each:
            state ^= X_ERROR
        if rng.random() < p_each:
            state ^= Y_ERROR
        if rng.random() < p_each:
            state ^= Z_ERROR
    if frac > 0:
        p = p_each * frac
        if rng.random() < p:
            state ^= X_ERROR
        if rng.random() < p:
            state ^= Y_ERROR
        if rng.random() < p:
            state ^= Z_ERROR
    return state


def apply_two_qubit_gate_error(a: int, b: int, rate: float, rng):
    """With probability rate, apply a uniform non-identity two-qubit Pauli."""
    if rate > 0.0 and rng.random() < rate:
        ea, eb = TWO_QUBIT_PAULIS[rng.randrange(15)]
        if is_pauli(a):
            a ^= ea
        if is_pauli(b):
            b ^= eb
    return a, b


def apply_single_qubit_gate_error(state: int, rate: float, rng) -> int:
    """With probability rate, apply a uniform Pauli from {X, Y, Z}."""
    if rate > 0.0 and rng.random() < rate and is_pauli(state):
        state ^= rng.randrange(1, 4)
    return state


def apply_measurement_corruption(state: int, rate: float, rng) -> int:
    """Corrupt a qubit label at readout time.

    The measurement error budget covers X, Y and Z errors, so a readout
    fault is a uniform Pauli applied to the qubit just before measurement.
    Lifecycle labels are left alone; their outcomes are already noise.
    """
    if rate > 0.0 and rng.random() < rate and is_pauli(state):
        state ^= rng.randrange(1, 4)
    return state


def apply_measurement_error(outcome: int, rate: float, rng) -> int:
    """Flip a reported measurement bit with the given probability."""
    if rate > 0.0 and rng.random() < rate:
        return 1 - outcome
    return outcome


def dark_count_probability(window_ns: int, rate_per_sec: float) -> float:
    if window_ns < 0:
        raise ValueError("window must be non-negative")
    return -math.expm1(-rate_per_sec * window_ns / NS_PER_SEC)


def sample_dark_count(window_ns: int, rate_per_sec: float, rng) -> bool:
    """True if at least one dark count fires within the window."""
    p = dark_count_probability(window_ns, rate_per_sec)
    return p > 0.0 and rng.random() < p
