"""Party pipeline and server-side evidential fusion.

A party maps its raw feature block through the TT layer, squashes the result
into (0, pi/2), angle-encodes it with Ry rotations, and runs a block-repeated
variational circuit (per-qubit Rx/Ry/Rz, then a CNOT ring).  The server fuses
party outputs either through the explicit multi-controlled-X joint circuit
(reference semantics) or through the factorized product of per-party
marginals; commonality multiplicativity makes the two exactly equal, and the
test suite holds them to that.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qsim
from .qsim import Gate, Statevector
from .ttn import TTLayerParams, squash, ttn_forward, ttn_param_count


@dataclass
class PartyModel:
    ttn: TTLayerParams
    vqc_angles: np.ndarray  # shape (blocks, n_qubits, 3)
    n_qubits: int
    num_classes: int
    blocks: int

    def __post_init__(self):
        if self.n_qubits < self.num_classes:
            raise ValueError("party must hold at least num_classes qubits")
        if self.ttn.out_size != self.n_qubits:
            raise ValueError("TT output size must equal the qubit count")
        self.vqc_angles = np.asarray(self.vqc_angles, dtype=np.float64)
        if self.vqc_angles.shape != (self.blocks, self.n_qubits, 3):
            raise ValueError("vqc_angles must have shape (blocks, n_qubits, 3)")

    def param_count(self) -> int:
        return ttn_param_count(self.ttn) + self.vqc_angles.size

    @classmethod
    def random_init(cls, input_dims, output_dims, internal_rank, blocks,
                    num_classes, rng, angle_scale: float = np.pi / 8) -> "PartyModel":
        ttn = TTLayerParams.random_init(input_dims, output_dims, internal_rank, rng)
        n = ttn.out_size
        angles = rng.uniform(-angle_scale, angle_scale, size=(blocks, n, 3))
        return cls(ttn, angles, n, num_classes, blocks)


@dataclass
class FusionConfig:
    num_parties: int
    num_classes: int
    mode: str = "factorized"  # or "joint"

    def __post_init__(self):
        if self.num_parties < 1 or self.num_classes < 2:
            raise ValueError("need K >= 1 parties and C >= 2 classes")
        if self.mode not in ("factorized", "joint"):
            raise ValueError(f"unknown fusion mode {self.mode!r}")


@dataclass
class Prediction:
    plausibilities: np.ndarray
    probabilities: np.ndarray

    @property
    def predicted_class(self) -> int:
        # np.argmax already breaks ties toward the lowest index
        return int(np.argmax(self.probabilities))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def vqc_block_gates(vqc_angles: np.ndarray) -> list[Gate]:
    """Per block: Rx/Ry/Rz on every qubit, then the CNOT ring 0->1->...->0."""
    gates = []
    n = vqc_angles.shape[1]
    for block in vqc_angles:
        for q in range(n):
            gates.append(Gate("RX", [q], angle=float(block[q][0])))
            gates.append(Gate("RY", [q], angle=float(block[q][1])))
            gates.append(Gate("RZ", [q], angle=float(block[q][2])))
        for q in range(n):
            gates.append(Gate("CNOT", [(q + 1) % n], controls=[q]))
    return gates


def party_circuit_gates(enc_angles: np.ndarray, vqc_angles: np.ndarray) -> list[Gate]:
    """Gate sequence: Ry encoding, then the repeated variational blocks."""
    n = len(enc_angles)
    gates = [Gate("RY", [q], angle=float(enc_angles[q])) for q in range(n)]
    gates.extend(vqc_block_gates(vqc_angles))
    return gates


def party_forward(model: PartyModel, x: np.ndarray) -> tuple[Statevector, dict]:
    """Run one party's full pipeline; the cache feeds the backward pass."""
    pre_activation = ttn_forward(model.ttn, x)
    x_tilde = squash(pre_activation)
    state = qsim.new_zero_state(model.n_qubits)
    for gate in party_circuit_gates(2.0 * x_tilde, model.vqc_angles):
        qsim.apply_gate(state, gate)
    cache = {"x": np.asarray(x, dtype=np.float64),
             "pre_activation": pre_activation,
             "x_tilde": x_tilde}
    return state, cache


def party_marginals(state: Statevector, num_classes: int) -> np.ndarray:
    """Per-class Pl({w_c}) of the party's output evidence: P(qubit c = 1)."""
    if state.num_qubits < num_classes:
        raise ValueError("state has fewer qubits than classes")
    return np.array([qsim.prob_one(state, c) for c in range(num_classes)])


def fuse_factorized(marginals) -> np.ndarray:
    """Fused plausibilities as the product of per-party class marginals."""
    stack = np.asarray(list(marginals), dtype=np.float64)
    if stack.ndim != 2:
        raise ValueError("expected K vectors of equal length")
    return np.prod(stack, axis=0)


def fuse_joint_state(states: list[Statevector], num_classes: int,
                     max_qubits: int = qsim.DEFAULT_MAX_QUBITS
                     ) -> tuple[Statevector, list[int]]:
    """Build the joint fusion circuit state; returns it plus the result qubits.

    Layout: party registers in order, then a |0>^C result register.  One MCX
    per class, controlled by qubit c of every party, targeting result qubit c.
    """
    total = sum(s.num_qubits for s in states) + num_classes
    if total > max_qubits:
        raise qsim.CapacityError(f"joint circuit needs {total} qubits")
    joint = states[0].copy()
    for s in states[1:]:
        joint = qsim.tensor_product(joint, s, max_qubits=max_qubits)
    joint = qsim.tensor_product(joint, qsim.new_zero_state(num_classes),
                                max_qubits=max_qubits)
    offsets = np.cumsum([0] + [s.num_qubits for s in states])
    result_base = int(offsets[-1])
    for c in range(num_classes):
        controls = [int(off) + c for off in offsets[:-1]]
        qsim.apply_mcx(joint, controls, result_base + c)
    return joint, list(range(result_base, result_base + num_classes))


def fuse_joint_circuit(states: list[Statevector], num_classes: int) -> np.ndarray:
    """Reference fusion semantics: plausibilities read off the result register."""
    joint, result_qubits = fuse_joint_state(states, num_classes)
    return np.array([qsim.prob_one(joint, q) for q in result_qubits])


def result_register_distribution(states: list[Statevector],
                                 num_classes: int) -> np.ndarray:
    """Measurement distribution of the fusion result register."""
    joint, result_qubits = fuse_joint_state(states, num_classes)
    return qsim.marginal_probabilities(joint, result_qubits)


def predict(plausibilities: np.ndarray) -> Prediction:
    pl = np.asarray(plausibilities, dtype=np.float64)
    if np.any(pl < -1e-9) or np.any(pl > 1 + 1e-9):
        raise ValueError("plausibilities must lie in [0, 1]")
    return Prediction(pl, softmax(pl))


def loss_lower_bound(num_classes: int) -> float:
    """Cross-entropy floor for any model whose logits live in [0, 1]."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    return float(np.log(num_classes + np.e - 1) - 1)


# ---------------------------------------------------------------------------
# Batched circuit evaluation.  Training evaluates the same party circuit at
# dozens of shifted angle settings per sample; running them as rows of one
# (batch, 2^n) array amortizes the per-gate overhead.  Equality with the
# qsim path is pinned by tests.

def _batched_rotation(amps: np.ndarray, n: int, qubit: int, axis: str,
                      angles: np.ndarray) -> None:
    b = amps.shape[0]
    a = amps.reshape(b, 1 << qubit, 2, -1)
    half = angles.reshape(b, 1, 1) / 2.0
    lo, hi = a[:, :, 0, :], a[:, :, 1, :]
    if axis == "x":
        c, s = np.cos(half), 1j * np.sin(half)
        new_lo = c * lo - s * hi
        a[:, :, 1, :] = -s * lo + c * hi
    elif axis == "y":
        c, s = np.cos(half), np.sin(half)
        new_lo = c * lo - s * hi
        a[:, :, 1, :] = s * lo + c * hi
    else:
        phase = np.exp(-1j * half)
        new_lo = phase * lo
        a[:, :, 1, :] = np.conj(phase) * hi
    a[:, :, 0, :] = new_lo


def _cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n)
    cbit = 1 << (n - 1 - control)
    tbit = 1 << (n - 1 - target)
    return np.where(idx & cbit, idx ^ tbit, idx)


def batched_marginals(enc_angles: np.ndarray, vqc_angles: np.ndarray,
                      num_classes: int) -> np.ndarray:
    """Class marginals for a batch of (encoding, VQC) angle settings.

    enc_angles: (B, n) Ry rotation angles (already doubled features).
    vqc_angles: (B, blocks, n, 3).
    Returns (B, num_classes).
    """
    enc_angles = np.asarray(enc_angles, dtype=np.float64)
    vqc_angles = np.asarray(vqc_angles, dtype=np.float64)
    b, n = enc_angles.shape
    blocks = vqc_angles.shape[1]
    amps = np.zeros((b, 1 << n), dtype=np.complex128)
    amps[:, 0] = 1.0
    for q in range(n):
        _batched_rotation(amps, n, q, "y", enc_angles[:, q])
    for t in range(blocks):
        for q in range(n):
            _batched_rotation(amps, n, q, "x", vqc_angles[:, t, q, 0])
            _batched_rotation(amps, n, q, "y", vqc_angles[:, t, q, 1])
            _batched_rotation(amps, n, q, "z", vqc_angles[:, t, q, 2])
        for q in range(n):
            amps = amps[:, _cnot_permutation(n, q, (q + 1) % n)]
    probs = np.abs(amps) ** 2
    out = np.empty((b, num_classes))
    for c in range(num_classes):
        out[:, c] = probs.reshape(b, 1 << c, 2, -1)[:, :, 1, :].sum(axis=(1, 2))
    return out
