"""Pauli-error tracking for the four purification circuits.

Each circuit consumes extra Bell pairs to test a kept pair.  An X-test uses
the kept qubits as CNOT controls and reads the consumed pair in Z; a Z-test
reverses the orientation and reads in X.  Double selection adds a verifier
pair per test to catch the error kind the test itself back-propagates.
Circuit schedules are validated against an exact statevector oracle in the
test suite rather than trusted by construction.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .error_model import TWO_QUBIT_PAULIS, compose, is_pauli


class PauliLabel(NamedTuple):
    """Pauli frame flags; Y sets both. Composition is pairwise XOR."""

    x: bool
    z: bool

    @classmethod
    def from_index(cls, idx: int) -> "PauliLabel":
        return cls(bool(idx & 1), bool(idx & 2))

    def to_index(self) -> int:
        return (1 if self.x else 0) | (2 if self.z else 0)


def propagate_cnot(control: int, target: int):
    """Propagate Pauli labels through a CNOT (control's X copies to the
    target, target's Z copies back to the control)."""
    return control ^ (target & 2), target ^ (control & 1)


class Scheme(enum.Enum):
    SS_SP = "ss-sp"  # single selection, single error; 2 pairs
    SS_DP = "ss-dp"  # single selection, double error; 3 pairs
    DS_SP = "ds-sp"  # double selection, single error; 3 pairs
    DS_DP = "ds-dp"  # double selection, double error; 5 pairs


ARITY = {Scheme.SS_SP: 2, Scheme.SS_DP: 3, Scheme.DS_SP: 3, Scheme.DS_DP: 5}


@dataclass(frozen=True)
class CircuitSpec:
    """One purification circuit instance: scheme plus which error is
    attacked first ('X' or 'Z')."""

    scheme: Scheme
    first: str = "X"

    def __post_init__(self):
        if self.first not in ("X", "Z"):
            raise ValueError(f"first must be 'X' or 'Z', got {self.first!r}")

    @property
    def arity(self) -> int:
        return ARITY[self.scheme]


def _x_test(kept: int, probe: int):
    # kept is control, probe consumed in Z basis
    return [(kept, probe)], (probe, "Z")


def _z_test(kept: int, probe: int):
    # probe is control, kept is target, probe consumed in X basis
    return [(probe, kept)], (probe, "X")


def circuit_schedule(spec: CircuitSpec):
    """CNOT list [(control_pair, target_pair)] and measurement list
    [(pair, basis)] for one circuit, pairs indexed 0 (kept) upward."""
    tests = {"X": _x_test, "Z": _z_test}
    a, b = spec.first, ("Z" if spec.first == "X" else "X")
    cnots, meas = [], []

    def add(test, kept, probe):
        c, m = tests[test](kept, probe)
        cnots.extend(c)
        meas.append(m)

    if spec.scheme is Scheme.SS_SP:
        add(a, 0, 1)
    elif spec.scheme is Scheme.SS_DP:
        add(a, 0, 1)
        add(b, 0, 2)
    elif spec.scheme is Scheme.DS_SP:
        add(a, 0, 1)
        add(b, 1, 2)  # verify the probe for the error it would back-propagate
    else:  # DS_DP
        add(a, 0, 1)
        add(b, 1, 2)
        add(b, 0, 3)
        add(a, 3, 4)
    return cnots, meas


@dataclass
class PurificationResult:
    success: bool
    kept_state_pair: Optional[tuple]  # (state_a, state_b) or None if discarded
    bits_a: tuple
    bits_b: tuple


def run_circuit(
    spec: CircuitSpec,
    inputs: Sequence[tuple],
    gate2q_error: float,
    meas_error: float,
    rng,
    first_side: int = 0,
    first_bits: Optional[tuple] = None,
) -> PurificationResult:
    """Execute one purification instance over both endpoints.

    `inputs` are (state_a, state_b) label pairs, kept pair first.  Each
    endpoint applies its own noisy CNOTs and reads its consumed qubits with
    measurement corruption.  Endpoint `first_side` reports uniformly random
    parity bits (pass `first_bits` if they were drawn earlier); the other
    endpoint's bits follow from the joint labels.  Purification succeeds
    exactly when the endpoints' bits coincide stage by stage.  A lifecycle
    label feeding a readout makes that comparison a fair coin: broken pairs
    are physically unentangled.
    """
    if len(inputs) != spec.arity:
        raise ValueError(f"{spec.scheme.value} needs {spec.arity} pairs, got {len(inputs)}")
    cnots, meas = circuit_schedule(spec)

    sides = [[p[0] for p in inputs], [p[1] for p in inputs]]
    # Taint flags per side/pair/component, set once a lifecycle label fed it.
    taint = [[[not is_pauli(s)] * 2 for s in side] for side in sides]

    for c, t in cnots:
        for side, tnt in zip(sides, taint):
            ctrl, tgt = side[c], side[t]
            if is_pauli(ctrl) and is_pauli(tgt):
                side[c], side[t] = propagate_cnot(ctrl, tgt)
            tnt[t][0] = tnt[t][0] or tnt[c][0]  # x copies control -> target
            tnt[c][1] = tnt[c][1] or tnt[t][1]  # z copies target -> control
        if gate2q_error > 0.0:
            for side in sides:
                if rng.random() < gate2q_error:
                    ec, et = TWO_QUBIT_PAULIS[rng.randrange(15)]
                    if is_pauli(side[c]):
                        side[c] ^= ec
                    if is_pauli(side[t]):
                        side[t] ^= et

    if meas_error > 0.0:
        for p, _basis in meas:
            for side in sides:
                if rng.random() < meas_error and is_pauli(side[p]):
                    side[p] ^= rng.randrange(1, 4)

    if first_bits is None:
        first_bits = tuple(rng.getrandbits(1) for _ in meas)
    elif len(first_bits) != len(meas):
        raise ValueError("first_bits length does not match the stage count")

    other_bits = []
    for (p, basis), b1 in zip(meas, first_bits):
        comp = 0 if basis == "Z" else 1  # which joint component flips the readout
        if taint[0][p][comp] or taint[1][p][comp]:
            cbit = rng.getrandbits(1)
        else:
            cbit = (compose(sides[0][p], sides[1][p]) >> comp) & 1
        other_bits.append(b1 ^ cbit)
    other_bits = tuple(other_bits)
    success = first_bits == other_bits

    kept = []
    for side, tnt in zip(sides, taint):
        s = side[0]
        if is_pauli(s):
            # components entangled with broken junk are effectively random
            if tnt[0][0] and rng.getrandbits(1):
                s ^= 1
            if tnt[0][1] and rng.getrandbits(1):
                s ^= 2
        kept.append(s)

    bits = (first_bits, other_bits) if first_side == 0 else (other_bits, first_bits)
    return PurificationResult(
        success=success,
        kept_state_pair=tuple(kept) if success else None,
        bits_a=bits[0],
        bits_b=bits[1],
    )


def round_spec(scheme: Scheme, round_index: int) -> CircuitSpec:
    """Circuit for one recurrence round.

    Single-error schemes alternate X and Z rounds starting with X;
    double-error schemes alternate XZ and ZX stage order.
    """
    if round_index < 0:
        raise ValueError("round_index must be >= 0")
    first = "X" if round_index % 2 == 0 else "Z"
    return CircuitSpec(scheme, first)


_LABEL_TABLES = {}


def _labels_table(arity: int) -> np.ndarray:
    """(4^arity, arity) table decoding flat joint-label indices, pair 0 most
    significant."""
    tbl = _LABEL_TABLES.get(arity)
    if tbl is None:
        size = 4**arity
        base = np.arange(size)
        tbl = np.empty((size, arity), dtype=np.int64)
        for q in range(arity):
            tbl[:, q] = (base >> (2 * (arity - 1 - q))) & 3
        _LABEL_TABLES[arity] = tbl
    return tbl


def _final_labels(spec: CircuitSpec) -> np.ndarray:
    """Joint labels of every pair after all CNOTs, per flat input index."""
    cnots, _ = circuit_schedule(spec)
    labels = _labels_table(spec.arity).copy()
    for c, t in cnots:
        lc = labels[:, c].copy()
        lt = labels[:, t].copy()
        labels[:, c] = lc ^ (lt & 2)
        labels[:, t] = lt ^ (lc & 1)
    return labels


def _cnot_inverse_permutation(arity: int, c: int, t: int) -> np.ndarray:
    """inv such that new_tensor = old_tensor[inv] realizes one CNOT step."""
    labels = _labels_table(arity)
    lc = labels[:, c]
    lt = labels[:, t]
    nc = lc ^ (lt & 2)
    nt = lt ^ (lc & 1)
    sc = 2 * (arity - 1 - c)
    st = 2 * (arity - 1 - t)
    base = np.arange(4**arity)
    out = base ^ ((lc ^ nc) << sc) ^ ((lt ^ nt) << st)
    inv = np.empty_like(out)
    inv[out] = base
    return inv


def oracle_distribution(
    spec: CircuitSpec,
    input_dists: Sequence[Sequence[float]],
    gate2q_error: float = 0.0,
    meas_error: float = 0.0,
):
    """Exact output distribution of one circuit over joint Pauli labels.

    Inputs are per-pair probability vectors over (I, X, Z, Y) joint labels.
    Returns (success_probability, kept-pair label distribution conditioned
    on success, or None when success has probability zero).  Pauli noise
    acts on joint labels by XOR, so each endpoint's gate and readout errors
    are exact convolutions and the whole circuit is a linear map on the
    4^arity joint space.
    """
    arity = spec.arity
    if len(input_dists) != arity:
        raise ValueError(f"{spec.scheme.value} needs {arity} input distributions")
    cnots, meas = circuit_schedule(spec)
    size = 4**arity
    base = np.arange(size)

    tensor = np.array([1.0])
    for d in input_dists:
        d = np.asarray(d, dtype=float)
        if d.shape != (4,) or abs(d.sum() - 1.0) > 1e-9 or (d < -1e-12).any():
            raise ValueError("each input distribution must be a 4-vector summing to 1")
        tensor = np.outer(tensor, d).ravel()

    def apply_pair_channel(vec, q, dist):
        # independent Pauli channel on pair q's joint label
        out = dist[0] * vec
        shift = 2 * (arity - 1 - q)
        for e in (1, 2, 3):
            if dist[e]:
                out += dist[e] * vec[base ^ (e << shift)]
        return out

    def apply_gate_channel(vec, qc, qt, rate):
        # uniform non-identity two-qubit Pauli on pairs (qc, qt), one endpoint
        if rate == 0.0:
            return vec
        out = (1.0 - rate) * vec
        sc, st = 2 * (arity - 1 - qc), 2 * (arity - 1 - qt)
        w = rate / 15.0
        for ec, et in TWO_QUBIT_PAULIS:
            out += w * vec[base ^ (ec << sc) ^ (et << st)]
        return out

    for c, t in cnots:
        tensor = tensor[_cnot_inverse_permutation(arity, c, t)]
        tensor = apply_gate_channel(tensor, c, t, gate2q_error)
        tensor = apply_gate_channel(tensor, c, t, gate2q_error)

    if meas_error > 0.0:
        corr = (1.0 - meas_error, meas_error / 3.0, meas_error / 3.0, meas_error / 3.0)
        for p, _basis in meas:
            tensor = apply_pair_channel(tensor, p, corr)
            tensor = apply_pair_channel(tensor, p, corr)

    ok = np.ones(size, dtype=bool)
    for p, basis in meas:
        shift = 2 * (arity - 1 - p)
        comp = 0 if basis == "Z" else 1
        ok &= (((base >> shift) & 3) >> comp) & 1 == 0

    success_prob = float(tensor[ok].sum())
    if success_prob <= 0.0:
        return 0.0, None
    kept_labels = (base >> (2 * (arity - 1))) & 3
    sel = np.where(ok, tensor, 0.0)
    kept = np.array([sel[kept_labels == l].sum() for l in range(4)])
    return success_prob, tuple(kept / success_prob)


def enumerate_pure_cases(spec: CircuitSpec):
    """All 4^arity pure-Pauli joint input assignments."""
    return itertools.product(range(4), repeat=spec.arity)


def truth_table(spec: CircuitSpec):
    """Noiseless behavior for every pure-Pauli input assignment.

    Returns a list of (input labels, success, kept joint label or None) in
    enumeration order; for definite Pauli inputs the parity comparisons are
    deterministic, so success is a hard bool.
    """
    arity = spec.arity
    _, meas = circuit_schedule(spec)
    final = _final_labels(spec)
    rows = []
    for flat, labels in enumerate(enumerate_pure_cases(spec)):
        success = True
        for p, basis in meas:
            comp = 0 if basis == "Z" else 1
            if (final[flat, p] >> comp) & 1:
                success = False
                break
        rows.append((labels, success, int(final[flat, 0]) if success else None))
    return rows
