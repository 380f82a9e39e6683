"""Purification circuit tests: CNOT propagation against the statevector
oracle, exhaustive noiseless agreement for all four schemes, round
alternation and the exact distribution oracle."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlink.error_model import CLEAN, MIXED, X_ERROR, Y_ERROR, Z_ERROR
from qlink.purification import (
    ARITY,
    CircuitSpec,
    PauliLabel,
    Scheme,
    circuit_schedule,
    enumerate_pure_cases,
    oracle_distribution,
    propagate_cnot,
    round_spec,
    run_circuit,
    truth_table,
)
from qlink.sim import RngStream

from sv_oracle import run_circuit_statevector

ALL_SPECS = [CircuitSpec(s, f) for s in Scheme for f in ("X", "Z")]


def test_propagate_cnot_identity():
    assert propagate_cnot(CLEAN, CLEAN) == (CLEAN, CLEAN)


def test_propagate_cnot_x_copies_forward():
    # conjugation: CNOT (X x I) CNOT = X x X
    assert propagate_cnot(X_ERROR, CLEAN) == (X_ERROR, X_ERROR)


def test_propagate_cnot_z_copies_backward():
    # conjugation: CNOT (I x Z) CNOT = Z x Z
    assert propagate_cnot(CLEAN, Z_ERROR) == (Z_ERROR, Z_ERROR)


def test_propagate_cnot_full_table_vs_statevector():
    # all 16 (control, target) label pairs against exact conjugation on a
    # 2-qubit statevector
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    paulis = [np.eye(2, dtype=complex), sx, sz, sx @ sz]
    cnot = np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    )
    for c in range(4):
        for t in range(4):
            op = np.kron(paulis[c], paulis[t])
            conj = cnot @ op @ cnot
            nc, nt = propagate_cnot(c, t)
            expected = np.kron(paulis[nc], paulis[nt])
            ratio = conj @ np.linalg.inv(expected)
            # equal up to global phase
            phase = ratio[0, 0]
            assert abs(abs(phase) - 1) < 1e-12
            assert np.allclose(ratio, phase * np.eye(4), atol=1e-12)


def test_propagate_cnot_is_involution():
    for c in range(4):
        for t in range(4):
            assert propagate_cnot(*propagate_cnot(c, t)) == (c, t)


def test_arities():
    assert ARITY[Scheme.SS_SP] == 2
    assert ARITY[Scheme.SS_DP] == 3
    assert ARITY[Scheme.DS_SP] == 3
    assert ARITY[Scheme.DS_DP] == 5


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.scheme.value}-{s.first}")
def test_noiseless_truth_table_matches_statevector_oracle(spec):
    """Every pure-Pauli input: label algebra == exact statevector simulation."""
    rows = truth_table(spec)
    rng = RngStream(0, "purify")
    for labels, success, kept in rows:
        sv_success, sv_kept = run_circuit_statevector(spec, labels)
        assert success == sv_success, f"{spec}: success mismatch at {labels}"
        assert kept == sv_kept, f"{spec}: kept label mismatch at {labels}"
        # production sampling path: realize each joint label on side A
        inputs = [(l, CLEAN) for l in labels]
        res = run_circuit(spec, inputs, 0.0, 0.0, rng)
        assert res.success == success, f"run_circuit success mismatch at {labels}"
        if success:
            got = res.kept_state_pair[0] ^ res.kept_state_pair[1]
            assert got == kept, f"run_circuit kept mismatch at {labels}"


def test_run_circuit_side_split_invariance():
    # realizing the same joint label with different per-side splits cannot
    # change success or the kept joint label
    rng = RngStream(7, "purify")
    spec = CircuitSpec(Scheme.DS_SP, "X")
    for labels in itertools.product(range(4), repeat=3):
        base = None
        for split in range(4):
            inputs = [(l ^ split, split) for l in labels]
            res = run_circuit(spec, inputs, 0.0, 0.0, rng)
            joint = None
            if res.success:
                joint = res.kept_state_pair[0] ^ res.kept_state_pair[1]
            if base is None:
                base = (res.success, joint)
            else:
                assert base == (res.success, joint)


def test_ss_sp_detects_x_error_on_kept():
    spec = CircuitSpec(Scheme.SS_SP, "X")
    rng = RngStream(1, "purify")
    res = run_circuit(spec, [(X_ERROR, CLEAN), (CLEAN, CLEAN)], 0.0, 0.0, rng)
    assert not res.success


def test_ss_sp_back_propagates_z_from_consumed():
    spec = CircuitSpec(Scheme.SS_SP, "X")
    rng = RngStream(2, "purify")
    res = run_circuit(spec, [(CLEAN, CLEAN), (Z_ERROR, CLEAN)], 0.0, 0.0, rng)
    assert res.success
    assert res.kept_state_pair[0] ^ res.kept_state_pair[1] == Z_ERROR


def test_ds_sp_catches_z_on_probe_and_keeps_pair_clean():
    # a Z on the consumed probe would back-propagate; the verifier stage
    # must detect it and discard
    spec = CircuitSpec(Scheme.DS_SP, "X")
    rng = RngStream(3, "purify")
    res = run_circuit(spec, [(CLEAN, CLEAN), (Z_ERROR, CLEAN), (CLEAN, CLEAN)], 0.0, 0.0, rng)
    assert not res.success


def test_ds_sp_misses_z_on_kept():
    # double selection still cannot see a Z already on the kept pair
    spec = CircuitSpec(Scheme.DS_SP, "X")
    rng = RngStream(4, "purify")
    res = run_circuit(spec, [(Z_ERROR, CLEAN), (CLEAN, CLEAN), (CLEAN, CLEAN)], 0.0, 0.0, rng)
    assert res.success
    assert res.kept_state_pair[0] ^ res.kept_state_pair[1] == Z_ERROR


def test_ss_dp_x_propagates_from_z_stage_probe():
    # the Z-stage probe's X error lands on the kept pair
    spec = CircuitSpec(Scheme.SS_DP, "X")
    rng = RngStream(5, "purify")
    res = run_circuit(spec, [(CLEAN, CLEAN), (CLEAN, CLEAN), (X_ERROR, CLEAN)], 0.0, 0.0, rng)
    assert res.success
    assert res.kept_state_pair[0] ^ res.kept_state_pair[1] == X_ERROR


def test_broken_pair_parities_are_fair_coins():
    spec = CircuitSpec(Scheme.SS_SP, "X")
    rng = RngStream(6, "purify")
    wins = 0
    n = 20_000
    for _ in range(n):
        res = run_circuit(spec, [(CLEAN, CLEAN), (MIXED, MIXED)], 0.0, 0.0, rng)
        wins += res.success
    sigma = math.sqrt(0.25 * n)
    assert abs(wins - n / 2) < 3 * sigma


def test_round_spec_alternation():
    assert round_spec(Scheme.SS_SP, 0) == CircuitSpec(Scheme.SS_SP, "X")
    assert round_spec(Scheme.SS_SP, 1) == CircuitSpec(Scheme.SS_SP, "Z")
    assert round_spec(Scheme.SS_SP, 2) == CircuitSpec(Scheme.SS_SP, "X")
    assert round_spec(Scheme.DS_DP, 1) == CircuitSpec(Scheme.DS_DP, "Z")
    assert round_spec(Scheme.SS_DP, 3) == CircuitSpec(Scheme.SS_DP, "Z")


# --- exact distribution oracle ---------------------------------------------


def test_oracle_all_clean_noiseless():
    spec = CircuitSpec(Scheme.SS_SP, "X")
    dists = [(1.0, 0.0, 0.0, 0.0)] * 2
    p, kept = oracle_distribution(spec, dists)
    assert math.isclose(p, 1.0, abs_tol=1e-12)
    assert np.allclose(kept, (1.0, 0.0, 0.0, 0.0), atol=1e-12)


def test_oracle_kept_x_probability_four_term():
    # kept X with probability q, probe clean: the X is always detected, so
    # success probability is 1-q and survivors are clean
    q = 0.17
    spec = CircuitSpec(Scheme.SS_SP, "X")
    p, kept = oracle_distribution(spec, [(1 - q, q, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0)])
    assert math.isclose(p, 1 - q, rel_tol=1e-12)
    assert np.allclose(kept, (1.0, 0.0, 0.0, 0.0), atol=1e-12)


def test_oracle_matches_hand_computed_ss_sp_map():
    # independent symmetric inputs: success and output by direct 16-term sum
    dist = (0.7, 0.1, 0.1, 0.1)
    spec = CircuitSpec(Scheme.SS_SP, "X")
    p, kept = oracle_distribution(spec, [dist, dist])
    p_hand = 0.0
    out_hand = [0.0] * 4
    for k in range(4):
        for c in range(4):
            w = dist[k] * dist[c]
            if (k ^ c) & 1:  # joint x-bits differ: probe readout anticoincides
                continue
            p_hand += w
            out_hand[k ^ (c & 2)] += w  # kept picks up the probe's z-bit
    assert math.isclose(p, p_hand, rel_tol=1e-12)
    assert np.allclose(kept, np.array(out_hand) / p_hand, atol=1e-12)


def test_oracle_uniform_mixed_ds_dp_matches_statevector_uniformity():
    # uniform Pauli inputs stay uniform: every parity pattern equally likely
    spec = CircuitSpec(Scheme.DS_DP, "X")
    uniform = (0.25, 0.25, 0.25, 0.25)
    p, kept = oracle_distribution(spec, [uniform] * 5)
    assert math.isclose(p, 1.0 / 16.0, rel_tol=1e-12)
    assert np.allclose(kept, uniform, atol=1e-12)


def test_oracle_against_sampled_run_circuit_with_noise():
    # distributional agreement of the sampling path with the exact oracle
    # under gate and readout noise, 3 sigma
    spec = CircuitSpec(Scheme.SS_SP, "X")
    dist = (0.75, 0.09, 0.08, 0.08)
    gate, meas = 0.02, 0.05
    p_exact, kept_exact = oracle_distribution(spec, [dist, dist], gate, meas)
    rng = RngStream(11, "purify")
    n = 120_000
    wins = 0
    kept_counts = [0] * 4
    labels = list(range(4))
    cdf = np.cumsum(dist)

    def draw_label():
        u = rng.random()
        return labels[int(np.searchsorted(cdf, u, side="right"))]

    for _ in range(n):
        inputs = [(draw_label(), CLEAN), (draw_label(), CLEAN)]
        res = run_circuit(spec, inputs, gate, meas, rng)
        if res.success:
            wins += 1
            kept_counts[res.kept_state_pair[0] ^ res.kept_state_pair[1]] += 1
    sigma = math.sqrt(p_exact * (1 - p_exact) * n)
    assert abs(wins - p_exact * n) < 3 * sigma
    for label in range(4):
        pk = kept_exact[label]
        sigma_k = math.sqrt(max(pk * (1 - pk) * wins, 1.0))
        assert abs(kept_counts[label] - pk * wins) < 3 * sigma_k + 1


def test_oracle_success_impossible_returns_none():
    spec = CircuitSpec(Scheme.SS_SP, "X")
    p, kept = oracle_distribution(spec, [(0.0, 1.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0)])
    assert p == 0.0 and kept is None


def test_wrong_arity_rejected():
    rng = RngStream(1, "purify")
    with pytest.raises(ValueError):
        run_circuit(CircuitSpec(Scheme.SS_SP), [(0, 0)] * 3, 0.0, 0.0, rng)
    with pytest.raises(ValueError):
        oracle_distribution(CircuitSpec(Scheme.DS_DP), [(1, 0, 0, 0)] * 3)


def test_pauli_label_round_trip():
    for idx in range(4):
        assert PauliLabel.from_index(idx).to_index() == idx
    assert PauliLabel(True, True).to_index() == Y_ERROR


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 100))
@settings(max_examples=40, deadline=None)
def test_run_circuit_pure_function_of_fixed_draws(a, b, seed):
    spec = CircuitSpec(Scheme.SS_SP, "X")
    r1 = run_circuit(spec, [(a, 0), (b, 0)], 0.02, 0.05, RngStream(seed, "p"))
    r2 = run_circuit(spec, [(a, 0), (b, 0)], 0.02, 0.05, RngStream(seed, "p"))
    assert r1 == r2
