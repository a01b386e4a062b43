"""Dense statevector simulator.

Convention used everywhere in this package: qubit 0 is the *most significant*
bit of a basis-state label, so the basis label ``x1 x2 ... xn`` reads
left-to-right as qubit 0 ... n-1.  Gates act by stride iteration over the
amplitude array; no 2^n x 2^n matrices are ever materialized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_QUBITS = 24

ROTATION_KINDS = ("RX", "RY", "RZ")
GATE_KINDS = ("X", "Y", "Z", "H", "CNOT", "RX", "RY", "RZ", "MCX")


class CapacityError(ValueError):
    """Requested register exceeds the configured qubit capacity."""


class DegenerateMeasurementError(RuntimeError):
    """Total outcome probability mass is numerically zero."""


@dataclass
class Statevector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes, "
                f"got {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "Statevector":
        return Statevector(self.num_qubits, self.amplitudes.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class Gate:
    kind: str
    targets: list[int]
    controls: list[int] = field(default_factory=list)
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if set(self.targets) & set(self.controls):
            raise ValueError("targets and controls must be disjoint")
        if self.kind == "MCX" and (len(self.targets) != 1 or not self.controls):
            raise ValueError("MCX needs exactly one target and >=1 control")
        if self.kind == "CNOT" and (len(self.targets) != 1 or len(self.controls) != 1):
            raise ValueError("CNOT needs one control and one target")
        if (self.angle is not None) != (self.kind in ROTATION_KINDS):
            raise ValueError("angle is present exactly for RX/RY/RZ")


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            _check_indices(self.num_qubits, g.targets + g.controls)


def _check_indices(n: int, qubits) -> None:
    for q in qubits:
        if not 0 <= q < n:
            raise ValueError(f"qubit index {q} out of range for {n} qubits")


def new_zero_state(n: int, max_qubits: int = DEFAULT_MAX_QUBITS) -> Statevector:
    """All-qubits-|0> state on ``n`` qubits."""
    if not 1 <= n <= max_qubits:
        raise CapacityError(f"qubit count {n} outside supported range [1, {max_qubits}]")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(n, amps)


def _single_qubit_unitary(kind: str, angle: float | None) -> np.ndarray:
    if kind == "X":
        return np.array([[0, 1], [1, 0]], dtype=np.complex128)
    if kind == "Y":
        return np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    if kind == "Z":
        return np.array([[1, 0], [0, -1]], dtype=np.complex128)
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
    h = angle / 2.0
    c, s = math.cos(h), math.sin(h)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == "RZ":
        return np.array([[np.exp(-1j * h), 0], [0, np.exp(1j * h)]], dtype=np.complex128)
    raise ValueError(f"no single-qubit unitary for {kind!r}")


def _apply_single(amps: np.ndarray, n: int, qubit: int, u: np.ndarray) -> None:
    # Qubit 0 is the slowest-varying axis, so the block layout for qubit q
    # is (2^q, 2, 2^(n-q-1)).
    a = amps.reshape(1 << qubit, 2, -1)
    lo, hi = a[:, 0, :], a[:, 1, :]
    new_lo = u[0, 0] * lo + u[0, 1] * hi
    a[:, 1, :] = u[1, 0] * lo + u[1, 1] * hi
    a[:, 0, :] = new_lo


def _bit(n: int, qubit: int) -> int:
    return 1 << (n - 1 - qubit)


def apply_mcx(state: Statevector, controls, target: int) -> Statevector:
    """Flip ``target`` on every basis state whose control bits are all 1."""
    controls = list(controls)
    if not controls:
        raise ValueError("MCX requires at least one control")
    if target in controls:
        raise ValueError("target must not be a control")
    _check_indices(state.num_qubits, controls + [target])
    n = state.num_qubits
    cmask = 0
    for c in controls:
        cmask |= _bit(n, c)
    tbit = _bit(n, target)
    idx = np.arange(1 << n)
    i0 = idx[((idx & cmask) == cmask) & ((idx & tbit) == 0)]
    i1 = i0 | tbit
    amps = state.amplitudes
    amps[i0], amps[i1] = amps[i1], amps[i0].copy()
    return state


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    """Apply ``gate`` in place and return the (mutated) state."""
    _check_indices(state.num_qubits, gate.targets + gate.controls)
    if gate.kind == "MCX":
        return apply_mcx(state, gate.controls, gate.targets[0])
    if gate.kind == "CNOT":
        return apply_mcx(state, gate.controls, gate.targets[0])
    u = _single_qubit_unitary(gate.kind, gate.angle)
    for t in gate.targets:
        _apply_single(state.amplitudes, state.num_qubits, t, u)
    return state


def apply_circuit(state: Statevector, circuit: Circuit) -> Statevector:
    if circuit.num_qubits != state.num_qubits:
        raise ValueError("circuit/state qubit count mismatch")
    for g in circuit.gates:
        apply_gate(state, g)
    return state


def prob_one(state: Statevector, qubit: int) -> float:
    """Probability that ``qubit`` measures to 1 (projective expectation)."""
    _check_indices(state.num_qubits, [qubit])
    a = state.amplitudes.reshape(1 << qubit, 2, -1)
    return float(np.sum(np.abs(a[:, 1, :]) ** 2))


def marginal_probabilities(state: Statevector, qubits) -> np.ndarray:
    """Joint outcome distribution over ``qubits``, in the listed qubit order.

    Entry ``o`` is the probability of outcome bits ``b_0 ... b_{m-1}`` with
    ``b_0`` (first listed qubit) as the most significant bit of ``o``.
    """
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits):
        raise ValueError("qubits must be distinct")
    _check_indices(state.num_qubits, qubits)
    n = state.num_qubits
    p = state.probabilities().reshape((2,) * n)
    keep = sorted(qubits)
    drop = tuple(ax for ax in range(n) if ax not in keep)
    marg = p.sum(axis=drop) if drop else p
    # Axes of marg now follow ascending qubit order; reorder to listed order.
    order = [keep.index(q) for q in qubits]
    marg = np.transpose(marg, order)
    return marg.reshape(-1)


def measure_and_collapse(state: Statevector, qubits, rng) -> tuple[list[int], Statevector]:
    """Sample a Born-rule outcome for ``qubits``; collapse and renormalize.

    Consumes exactly one uniform variate from ``rng.random()``, so a test can
    force a branch by injecting a deterministic stream.
    """
    qubits = list(qubits)
    probs = marginal_probabilities(state, qubits)
    total = probs.sum()
    if total < 1e-12:
        raise DegenerateMeasurementError("outcome probability mass below 1e-12")
    u = rng.random() * total
    outcome = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    outcome = min(outcome, len(probs) - 1)
    m = len(qubits)
    bits = [(outcome >> (m - 1 - i)) & 1 for i in range(m)]

    n = state.num_qubits
    idx = np.arange(1 << n)
    sel = np.ones(1 << n, dtype=bool)
    for q, b in zip(qubits, bits):
        sel &= ((idx & _bit(n, q)) != 0) == bool(b)
    amps = state.amplitudes
    amps[~sel] = 0.0
    nrm = np.linalg.norm(amps)
    if nrm < 1e-12:
        raise DegenerateMeasurementError("post-measurement norm vanished")
    amps /= nrm
    return bits, state


def tensor_product(a: Statevector, b: Statevector,
                   max_qubits: int = DEFAULT_MAX_QUBITS) -> Statevector:
    """Kronecker product; a's qubits occupy the lower (more significant) indices."""
    n = a.num_qubits + b.num_qubits
    if n > max_qubits:
        raise CapacityError(f"combined register of {n} qubits exceeds capacity {max_qubits}")
    return Statevector(n, np.kron(a.amplitudes, b.amplitudes))


def fidelity(a: Statevector, b: Statevector) -> float:
    """|<a|b>|^2 -- insensitive to global phase."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("qubit count mismatch")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def permute_qubits(state: Statevector, new_order) -> Statevector:
    """Relabel qubits so that new qubit ``i`` is old qubit ``new_order[i]``."""
    new_order = list(new_order)
    n = state.num_qubits
    if sorted(new_order) != list(range(n)):
        raise ValueError("new_order must be a permutation of qubit indices")
    a = state.amplitudes.reshape((2,) * n)
    return Statevector(n, np.ascontiguousarray(np.transpose(a, new_order)).reshape(-1))


def remove_qubits(state: Statevector, qubits, bits) -> Statevector:
    """Drop qubits that are in definite basis states (e.g. after measurement)."""
    qubits = list(qubits)
    bits = list(bits)
    _check_indices(state.num_qubits, qubits)
    n = state.num_qubits
    a = state.amplitudes.reshape((2,) * n)
    indexer: list = [slice(None)] * n
    for q, b in zip(qubits, bits):
        indexer[q] = int(b)
    a = a[tuple(indexer)]
    return Statevector(n - len(qubits), np.ascontiguousarray(a).reshape(-1))
