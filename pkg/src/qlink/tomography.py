"""Link-level tomography: joint measurement semantics, correlation
accumulation over the nine basis pairs, linear-inversion reconstruction and
cross-trial statistics.

Outcome conventions target the canonical Bell state (|00>+|11>)/sqrt(2),
whose stabilizer signs are XX=+1, YY=-1, ZZ=+1.  A pair's joint Pauli label
flips the signs of the two bases it anticommutes with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .error_model import EXCITED, RELAXED, compose, is_pauli

BASIS_X, BASIS_Y, BASIS_Z = 0, 1, 2
BASIS_NAMES = "XYZ"
# Pauli label index carried by each measurement basis.
_BASIS_PAULI = (1, 3, 2)
_BASE_SIGN = (1, -1, 1)  # XX, YY, ZZ signs of the target Bell state

# SIGNS[basis][joint_label] = outcome correlation sign in matching bases.
SIGNS = tuple(
    tuple(
        _BASE_SIGN[b] * (-1 if (l != 0 and l != _BASIS_PAULI[b]) else 1)
        for l in range(4)
    )
    for b in range(3)
)

_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_MATRICES = (_I2, _SX, _SY, _SZ)

_PHI_PLUS = np.zeros(4, dtype=complex)
_PHI_PLUS[0] = _PHI_PLUS[3] = 1 / math.sqrt(2)
RHO_IDEAL = np.outer(_PHI_PLUS, _PHI_PLUS.conj())


class ReconstructionError(RuntimeError):
    """Linear inversion failed, e.g. a basis-pair cell has no samples."""


@dataclass
class MeasurementRecord:
    action_index: int
    basis: int  # BASIS_X / BASIS_Y / BASIS_Z
    outcome: int  # +1 or -1


def first_outcome(state: int, basis: int, rng) -> int:
    """Outcome of the first qubit of a pair to be measured.

    Locally any Pauli-subspace half of a Bell pair is maximally mixed, so
    the draw is uniform; Excited/Relaxed give a deterministic Z outcome and
    uniform X/Y; Mixed is uniform.
    """
    if basis == BASIS_Z:
        if state == EXCITED:
            return -1
        if state == RELAXED:
            return 1
    return 1 if rng.getrandbits(1) else -1


def second_outcome(
    state: int, partner_state: int, basis: int, partner_basis: int, partner_outcome: int, rng
) -> int:
    """Outcome of the second qubit given its partner's result.

    Matching bases on an intact pair correlate through the joint label's
    stabilizer sign; mismatched bases and broken pairs are independent.
    """
    if is_pauli(state) and is_pauli(partner_state):
        if basis == partner_basis:
            return partner_outcome * SIGNS[basis][compose(state, partner_state)]
        return 1 if rng.getrandbits(1) else -1
    return first_outcome(state, basis, rng)


def joint_outcome(states: tuple, basis_a: int, basis_b: int, rng) -> tuple:
    """Sample the two endpoints' outcomes for one pair measurement."""
    o_a = first_outcome(states[0], basis_a, rng)
    o_b = second_outcome(states[1], states[0], basis_b, basis_a, o_a, rng)
    return o_a, o_b


class CorrelationAccumulator:
    """Counts of (basis_a, basis_b, outcome_a, outcome_b) over measured pairs."""

    __slots__ = ("counts", "total")

    def __init__(self):
        self.counts = [[[ [0, 0], [0, 0] ] for _ in range(3)] for _ in range(3)]
        self.total = 0

    def add(self, basis_a: int, basis_b: int, o_a: int, o_b: int) -> None:
        self.counts[basis_a][basis_b][o_a < 0][o_b < 0] += 1
        self.total += 1

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


def moments(acc: CorrelationAccumulator) -> np.ndarray:
    """Empirical moments E[sigma_i x sigma_j], i,j in (I, X, Y, Z).

    Matching two-basis moments come from that basis-pair cell; one-sided
    moments are marginals over the other endpoint's basis choice.
    """
    c = acc.as_array()  # [ba][bb][ia][ib], index 0 = outcome +1
    m = np.ones((4, 4))
    sa = c.sum(axis=(2, 3))  # samples per basis pair
    for i in range(3):
        for j in range(3):
            if sa[i, j] == 0:
                raise ReconstructionError(
                    f"no samples for basis pair ({BASIS_NAMES[i]}, {BASIS_NAMES[j]})"
                )
    oa_sign = np.array([1, -1])
    for i in range(3):
        for j in range(3):
            cell = c[i, j]
            m[i + 1, j + 1] = (oa_sign[:, None] * oa_sign[None, :] * cell).sum() / sa[i, j]
    for i in range(3):
        row = c[i].sum(axis=(0, 2))  # outcomes of side A measuring basis i
        m[i + 1, 0] = (row[0] - row[1]) / c[i].sum()
    for j in range(3):
        col = c[:, j].sum(axis=(0, 1))  # outcomes of side B measuring basis j
        m[0, j + 1] = (col[0] - col[1]) / c[:, j].sum()
    return m


def reconstruct(acc: CorrelationAccumulator) -> np.ndarray:
    """Linear-inversion density matrix from accumulated correlations.

    No physicality projection is applied; eigenvalues may dip below zero at
    finite samples, and that is deliberate so fidelity estimates stay
    comparable across sample counts.
    """
    m = moments(acc)
    rho = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            rho += m[i, j] * np.kron(PAULI_MATRICES[i], PAULI_MATRICES[j])
    return rho / 4.0


def fidelity(rho: np.ndarray) -> float:
    """Overlap with the canonical Bell state, Re Tr[rho * rho_ideal]."""
    return float(np.trace(rho @ RHO_IDEAL).real)


def fidelity_from_moments(acc: CorrelationAccumulator) -> float:
    """Bell-diagonal shortcut (1 + E[XX] - E[YY] + E[ZZ]) / 4."""
    m = moments(acc)
    return (1.0 + m[1, 1] - m[2, 2] + m[3, 3]) / 4.0


def mean_abs_fidelity_gap(trials: Sequence) -> float:
    """Average |reconstructed - actual| fidelity over trials."""
    if not trials:
        raise ValueError("need at least one trial")
    return sum(abs(t.f_r - t.f_a) for t in trials) / len(trials)


@dataclass
class AggregateStats:
    mean_f_r: float
    sigma_f_r: float
    min_f_r: float
    max_f_r: float
    mean_f_a: float
    mean_throughput: float
    mean_raw_rate: float
    error_fractions: dict
    f_r_points: tuple
    trials: int


def aggregate(trials: Sequence) -> AggregateStats:
    """Cross-trial statistics: mean, sample standard deviation (N-1),
    extremes and mean rates."""
    n = len(trials)
    if n == 0:
        raise ValueError("need at least one trial")
    f_rs = [t.f_r for t in trials]
    mean = sum(f_rs) / n
    sigma = math.sqrt(sum((f - mean) ** 2 for f in f_rs) / (n - 1)) if n > 1 else 0.0
    tall = {}
    for t in trials:
        for k, v in t.error_tallies.items():
            tall[k] = tall.get(k, 0) + v
    total = sum(tall.values())
    fractions = {k: v / total for k, v in tall.items()} if total else {}
    return AggregateStats(
        mean_f_r=mean,
        sigma_f_r=sigma,
        min_f_r=min(f_rs),
        max_f_r=max(f_rs),
        mean_f_a=sum(t.f_a for t in trials) / n,
        mean_throughput=sum(t.throughput_per_s for t in trials) / n,
        mean_raw_rate=sum(t.raw_pairs_per_s for t in trials) / n,
        error_fractions=fractions,
        f_r_points=tuple(f_rs),
        trials=n,
    )
