"""Tomography tests: measurement semantics against the statevector oracle,
linear-inversion exactness, fidelity formulas and aggregation."""
import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlink.error_model import CLEAN, EXCITED, MIXED, RELAXED, X_ERROR, Y_ERROR, Z_ERROR
from qlink.sim import RngStream
from qlink.tomography import (
    BASIS_X,
    BASIS_Y,
    BASIS_Z,
    SIGNS,
    CorrelationAccumulator,
    ReconstructionError,
    RHO_IDEAL,
    aggregate,
    fidelity,
    fidelity_from_moments,
    joint_outcome,
    mean_abs_fidelity_gap,
    moments,
    reconstruct,
)

from sv_oracle import pair_measurement_statistics

_BASIS_NAME = {BASIS_X: "X", BASIS_Y: "Y", BASIS_Z: "Z"}


def test_signs_table_matches_statevector():
    # correlation signs for all 4 labels x 3 matching bases, and zero
    # correlation for mismatched bases
    for label in range(4):
        for b in range(3):
            _, _, eab = pair_measurement_statistics(label, _BASIS_NAME[b], _BASIS_NAME[b])
            assert math.isclose(eab, SIGNS[b][label], abs_tol=1e-12)
        for ba in range(3):
            for bb in range(3):
                if ba == bb:
                    continue
                ea, eb, eab = pair_measurement_statistics(
                    label, _BASIS_NAME[ba], _BASIS_NAME[bb]
                )
                assert abs(eab) < 1e-12 and abs(ea) < 1e-12 and abs(eb) < 1e-12


def test_joint_outcome_clean_pair_zz_equal():
    rng = RngStream(1, "measurement")
    for _ in range(200):
        oa, ob = joint_outcome((CLEAN, CLEAN), BASIS_Z, BASIS_Z, rng)
        assert oa == ob


def test_joint_outcome_clean_pair_yy_opposite():
    rng = RngStream(2, "measurement")
    for _ in range(200):
        oa, ob = joint_outcome((CLEAN, CLEAN), BASIS_Y, BASIS_Y, rng)
        assert oa == -ob


def test_joint_outcome_x_label_zz_opposite():
    rng = RngStream(3, "measurement")
    for _ in range(200):
        oa, ob = joint_outcome((X_ERROR, CLEAN), BASIS_Z, BASIS_Z, rng)
        assert oa == -ob
        oa, ob = joint_outcome((CLEAN, X_ERROR), BASIS_Z, BASIS_Z, rng)
        assert oa == -ob


def test_joint_outcome_sampled_correlations_match_statevector():
    rng = RngStream(4, "measurement")
    n = 40_000
    for label in range(4):
        for b in range(3):
            total = 0
            for _ in range(n):
                oa, ob = joint_outcome((label, CLEAN), b, b, rng)
                total += oa * ob
            expected = SIGNS[b][label]
            assert total == expected * n  # correlations are exact, not sampled


def test_joint_outcome_mismatched_bases_independent():
    rng = RngStream(5, "measurement")
    n = 40_000
    total = 0
    for _ in range(n):
        oa, ob = joint_outcome((CLEAN, CLEAN), BASIS_X, BASIS_Z, rng)
        total += oa * ob
    assert abs(total) < 3 * math.sqrt(n)


def test_joint_outcome_lifecycle_states():
    rng = RngStream(6, "measurement")
    for _ in range(100):
        oa, _ = joint_outcome((EXCITED, MIXED), BASIS_Z, BASIS_Z, rng)
        assert oa == -1
        oa, _ = joint_outcome((RELAXED, MIXED), BASIS_Z, BASIS_Z, rng)
        assert oa == 1
    n = 20_000
    total = 0
    for _ in range(n):
        oa, ob = joint_outcome((EXCITED, MIXED), BASIS_Z, BASIS_Z, rng)
        total += oa * ob
    assert abs(total + n * 0) < 3 * math.sqrt(n)  # partner uniform: no correlation


def _fill_exact(acc: CorrelationAccumulator, weights, per_cell=400):
    """Populate an accumulator with the exact finite-sample correlations of
    a Bell-diagonal mixture (weights over I, X, Z, Y joint labels)."""
    for ba in range(3):
        for bb in range(3):
            for label, w in enumerate(weights):
                n = round(w * per_cell)
                if ba == bb:
                    sign = SIGNS[ba][label]
                    half = n // 2
                    for oa, ob, k in ((1, sign, half), (-1, -sign, n - half)):
                        for _ in range(k):
                            acc.add(ba, bb, oa, ob)
                else:
                    # uncorrelated: spread evenly over the four outcome cells
                    for oa in (1, -1):
                        for ob in (1, -1):
                            for _ in range(n // 4):
                                acc.add(ba, bb, oa, ob)


def test_reconstruct_exact_bell_state():
    acc = CorrelationAccumulator()
    _fill_exact(acc, (1.0, 0.0, 0.0, 0.0))
    rho = reconstruct(acc)
    assert np.allclose(rho, RHO_IDEAL, atol=1e-12)
    assert math.isclose(fidelity(rho), 1.0, abs_tol=1e-12)


def test_reconstruct_uniform_outcomes_give_maximally_mixed():
    acc = CorrelationAccumulator()
    for ba in range(3):
        for bb in range(3):
            for oa in (1, -1):
                for ob in (1, -1):
                    for _ in range(50):
                        acc.add(ba, bb, oa, ob)
    rho = reconstruct(acc)
    assert np.allclose(rho, np.eye(4) / 4.0, atol=1e-12)
    assert math.isclose(fidelity(rho), 0.25, abs_tol=1e-12)


def test_reconstruct_bell_diagonal_mixture_recovers_weights():
    weights = (0.7, 0.1, 0.1, 0.1)
    acc = CorrelationAccumulator()
    _fill_exact(acc, weights, per_cell=1000)
    rho = reconstruct(acc)
    # Bell-diagonal entries in the Bell basis equal the label weights
    from sv_oracle import bell_state

    for label, w in enumerate(weights):
        v = bell_state(label)
        assert math.isclose(float((v.conj() @ rho @ v).real), w, abs_tol=1e-9)


def test_reconstruct_hermitian_unit_trace():
    rng = RngStream(7, "measurement")
    acc = CorrelationAccumulator()
    for _ in range(2000):
        ba, bb = rng.randrange(3), rng.randrange(3)
        oa, ob = joint_outcome((CLEAN, CLEAN), ba, bb, rng)
        acc.add(ba, bb, oa, ob)
    rho = reconstruct(acc)
    assert np.allclose(rho, rho.conj().T, atol=1e-10)
    assert math.isclose(float(np.trace(rho).real), 1.0, abs_tol=1e-10)


def test_reconstruct_moment_consistency():
    # linear inversion is exact on the moments it was fed
    rng = RngStream(8, "measurement")
    acc = CorrelationAccumulator()
    for _ in range(3000):
        ba, bb = rng.randrange(3), rng.randrange(3)
        oa, ob = joint_outcome((X_ERROR, CLEAN), ba, bb, rng)
        acc.add(ba, bb, oa, ob)
    m = moments(acc)
    rho = reconstruct(acc)
    from qlink.tomography import PAULI_MATRICES

    for i in range(4):
        for j in range(4):
            op = np.kron(PAULI_MATRICES[i], PAULI_MATRICES[j])
            got = float(np.trace(rho @ op).real)
            assert math.isclose(got, m[i, j], abs_tol=1e-12)


def test_fidelity_formula_equivalence():
    rng = RngStream(9, "measurement")
    acc = CorrelationAccumulator()
    for _ in range(5000):
        ba, bb = rng.randrange(3), rng.randrange(3)
        oa, ob = joint_outcome((CLEAN, CLEAN) if rng.random() < 0.8 else (Z_ERROR, CLEAN),
                               ba, bb, rng)
        acc.add(ba, bb, oa, ob)
    assert math.isclose(fidelity(reconstruct(acc)), fidelity_from_moments(acc), abs_tol=1e-12)


def test_fidelity_reference_states():
    assert math.isclose(fidelity(RHO_IDEAL), 1.0, abs_tol=1e-12)
    assert math.isclose(fidelity(np.eye(4) / 4), 0.25, abs_tol=1e-12)
    psi_plus = np.zeros(4, dtype=complex)
    psi_plus[1] = psi_plus[2] = 1 / math.sqrt(2)
    assert math.isclose(fidelity(np.outer(psi_plus, psi_plus.conj())), 0.0, abs_tol=1e-12)


def test_reconstruct_starved_cell_errors():
    acc = CorrelationAccumulator()
    acc.add(BASIS_X, BASIS_X, 1, 1)
    with pytest.raises(ReconstructionError) as err:
        reconstruct(acc)
    assert "basis pair" in str(err.value)


@dataclass
class _T:
    f_r: float
    f_a: float
    throughput_per_s: float = 1000.0
    raw_pairs_per_s: float = 5000.0
    error_tallies: dict = None

    def __post_init__(self):
        if self.error_tallies is None:
            self.error_tallies = {"clean": 1}


def test_mean_abs_fidelity_gap():
    ts = [_T(0.7, 0.68), _T(0.8, 0.82)]
    assert math.isclose(mean_abs_fidelity_gap(ts), 0.02, abs_tol=1e-12)
    ts = [_T(0.5, 0.5), _T(0.9, 0.9)]
    assert mean_abs_fidelity_gap(ts) == 0.0


def test_aggregate_statistics():
    ts = [_T(0.8, 0.8), _T(0.9, 0.9)]
    agg = aggregate(ts)
    assert math.isclose(agg.mean_f_r, 0.85, abs_tol=1e-12)
    assert math.isclose(agg.sigma_f_r, math.sqrt(((0.05) ** 2 + (0.05) ** 2) / 1), abs_tol=1e-12)
    assert math.isclose(agg.sigma_f_r, 0.07071067811865477, rel_tol=1e-9)
    assert agg.min_f_r == 0.8 and agg.max_f_r == 0.9
    same = [_T(0.77, 0.7)] * 5
    assert aggregate(same).sigma_f_r == 0.0


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30))
@settings(max_examples=30, deadline=None)
def test_aggregate_sigma_matches_numpy(values):
    ts = [_T(v, v) for v in values]
    agg = aggregate(ts)
    assert math.isclose(agg.sigma_f_r, float(np.std(values, ddof=1)), abs_tol=1e-9)
