"""End-to-end gradient training.

Gradients for quantum angles use the exact parameter-shift rule
(E(t + pi/2) - E(t - pi/2)) / 2, valid for every Pauli rotation in the
circuits here (generators with eigenvalues +-1/2).  They flow through the
factorized fusion -- the product of per-party class marginals -- whose exact
equality with the joint circuit is established separately.  TT-core gradients
chain the encoding-angle shifts through the squash activation into the exact
multilinear backward pass.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from .data import VerticalDataset, batch_indices
from .model import PartyModel, Prediction, batched_marginals, loss_lower_bound, softmax
from .ttn import squash_grad, ttn_backward

BOUND_SLACK = 1e-9


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    eval_mode: str = "factorized"  # or "joint"
    grad_mode: str = "parameter_shift"  # or "finite_difference"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.eval_mode not in ("factorized", "joint"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")
        if self.grad_mode not in ("parameter_shift", "finite_difference"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")


@dataclass
class OptimizerState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params])


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float
    seconds: float


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def export(self, path, include_wall_clock: bool = True) -> None:
        """One line per epoch: ``epoch,loss,train_acc,test_acc,seconds``.

        The seconds column is wall-clock timing and is the only
        non-deterministic column; pass ``include_wall_clock=False`` to zero it
        when traces must be byte-comparable across runs.
        """
        with open(path, "w") as f:
            f.write("epoch,loss,train_acc,test_acc,seconds\n")
            for r in self.records:
                secs = r.seconds if include_wall_clock else 0.0
                f.write(f"{r.epoch},{float(r.loss)!r},{float(r.train_acc)!r},"
                        f"{float(r.test_acc)!r},{float(secs)!r}\n")

    @classmethod
    def load(cls, path) -> "TrainTrace":
        records = []
        with open(path) as f:
            header = f.readline()
            if not header.startswith("epoch,"):
                raise ValueError(f"malformed trace header in {path}")
            for line in f:
                e, loss, tr, te, s = line.strip().split(",")
                records.append(EpochRecord(int(e), float(loss), float(tr),
                                           float(te), float(s)))
        return cls(records)


def ce_loss(prediction: Prediction, label: np.ndarray,
            check_bound: bool = False) -> float:
    """-ln p(true class); optionally assert the quantum-output loss floor."""
    label = np.asarray(label, dtype=np.float64)
    num_classes = prediction.probabilities.size
    if label.shape != (num_classes,) or abs(label.sum() - 1.0) > 1e-9 \
            or not np.all((label == 0) | (label == 1)):
        raise ValueError("label must be one-hot of length C")
    true_class = int(np.argmax(label))
    loss = float(-np.log(prediction.probabilities[true_class]))
    if check_bound:
        bound = loss_lower_bound(num_classes)
        if loss < bound - BOUND_SLACK:
            raise AssertionError(
                f"quantum-output CE loss {loss} violates the {bound} floor")
    return loss


def param_shift_grad(evaluate, theta: float) -> float:
    """Exact derivative of a Pauli-rotation expectation at ``theta``."""
    return (evaluate(theta + np.pi / 2) - evaluate(theta - np.pi / 2)) / 2.0


# --- eviQVFL forward/backward ---------------------------------------------

def _party_features(models: list[PartyModel], sample: list[np.ndarray]):
    """TT + squash for every party; returns per-party caches."""
    caches = []
    for m, x in zip(models, sample):
        from .ttn import squash, ttn_forward
        pre = ttn_forward(m.ttn, np.asarray(x, dtype=np.float64))
        caches.append({"x": np.asarray(x, dtype=np.float64),
                       "pre_activation": pre, "x_tilde": squash(pre)})
    return caches


def forward_pass(models: list[PartyModel], sample: list[np.ndarray]
                 ) -> tuple[np.ndarray, list[dict]]:
    """All party marginals, stacked (K, C); caches feed the backward pass."""
    caches = _party_features(models, sample)
    num_classes = models[0].num_classes
    marginals = np.empty((len(models), num_classes))
    for k, (m, cache) in enumerate(zip(models, caches)):
        enc = 2.0 * cache["x_tilde"]
        marginals[k] = batched_marginals(enc[None, :],
                                         m.vqc_angles[None, ...],
                                         num_classes)[0]
        cache["marginals"] = marginals[k]
    return marginals, caches


def eviqvfl_predict(models: list[PartyModel], sample: list[np.ndarray]) -> Prediction:
    marginals, _ = forward_pass(models, sample)
    return model_mod.predict(model_mod.fuse_factorized(marginals))


def _shift_batch(base: np.ndarray) -> np.ndarray:
    """Rows 2i / 2i+1 are base with entry i shifted by +pi/2 / -pi/2."""
    a = base.size
    batch = np.tile(base.reshape(-1), (2 * a, 1))
    for i in range(a):
        batch[2 * i, i] += np.pi / 2
        batch[2 * i + 1, i] -= np.pi / 2
    return batch


def party_angle_gradients(m: PartyModel, x_tilde: np.ndarray,
                          dL_dmarg: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Parameter-shift gradients of the loss wrt one party's circuit angles.

    Returns (d/d encoding angle, d/d vqc angle); ``dL_dmarg`` is the loss
    gradient wrt this party's class marginals with every other party frozen.
    """
    n = m.n_qubits
    base = np.concatenate([2.0 * x_tilde, m.vqc_angles.reshape(-1)])
    batch = _shift_batch(base)
    enc_batch = batch[:, :n]
    vqc_batch = batch[:, n:].reshape(-1, m.blocks, n, 3)
    marg = batched_marginals(enc_batch, vqc_batch, m.num_classes)
    dmarg_dangle = (marg[0::2] - marg[1::2]) / 2.0  # (A, C)
    dL_dangle = dmarg_dangle @ dL_dmarg
    return dL_dangle[:n], dL_dangle[n:].reshape(m.blocks, n, 3)


def party_parameters(m: PartyModel) -> list[np.ndarray]:
    """Flat parameter list (mutated in place by the optimizer)."""
    return list(m.ttn.cores) + [m.vqc_angles]


def full_gradient(models: list[PartyModel], sample: list[np.ndarray],
                  label: np.ndarray, config: TrainConfig | None = None
                  ) -> tuple[float, list[list[np.ndarray]], Prediction]:
    """Loss, per-party gradients (TT cores then VQC angles), and prediction."""
    if config is not None and config.grad_mode == "finite_difference":
        return full_gradient_fd(models, sample, label)
    marginals, caches = forward_pass(models, sample)
    plaus = np.prod(marginals, axis=0)
    pred = model_mod.predict(plaus)
    loss = ce_loss(pred, label, check_bound=True)
    dL_dpl = pred.probabilities - np.asarray(label, dtype=np.float64)
    grads = []
    for k, (m, cache) in enumerate(zip(models, caches)):
        others = np.prod(np.delete(marginals, k, axis=0), axis=0) \
            if len(models) > 1 else np.ones_like(plaus)
        dL_dmarg = others * dL_dpl
        d_enc, d_vqc = party_angle_gradients(m, cache["x_tilde"], dL_dmarg)
        dL_dxtilde = 2.0 * d_enc
        dL_dpre = dL_dxtilde * squash_grad(cache["pre_activation"])
        core_grads, _ = ttn_backward(m.ttn, cache["x"], dL_dpre)
        grads.append(core_grads + [d_vqc])
    return loss, grads, pred


def eviqvfl_loss(models: list[PartyModel], sample: list[np.ndarray],
                 label: np.ndarray) -> float:
    return ce_loss(eviqvfl_predict(models, sample), label, check_bound=True)


def full_gradient_fd(models: list[PartyModel], sample: list[np.ndarray],
                     label: np.ndarray, step: float = 1e-5
                     ) -> tuple[float, list[list[np.ndarray]], Prediction]:
    """Central finite differences over every scalar parameter (oracle path)."""
    pred = eviqvfl_predict(models, sample)
    loss = ce_loss(pred, label, check_bound=True)
    grads = []
    for m in models:
        party_grads = []
        for arr in party_parameters(m):
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = eviqvfl_loss(models, sample, label)
                flat[i] = orig - step
                lo = eviqvfl_loss(models, sample, label)
                flat[i] = orig
                gflat[i] = (hi - lo) / (2 * step)
            party_grads.append(g)
        grads.append(party_grads)
    return loss, grads, pred


# --- optimizer -------------------------------------------------------------

def adam_step(state: OptimizerState, params: list[np.ndarray],
              grads: list[np.ndarray], config: TrainConfig) -> None:
    """Standard bias-corrected Adam; updates ``params`` in place."""
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    b1, b2 = config.adam_betas
    state.step_count += 1
    t = state.step_count
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)


# --- training loop ---------------------------------------------------------

def _accuracy(trainable, dataset: VerticalDataset) -> float:
    if dataset.num_samples == 0:
        return float("nan")
    hits = 0
    for i in range(dataset.num_samples):
        pred = trainable.predict(dataset.sample(i))
        hits += int(pred.predicted_class == int(np.argmax(dataset.labels[i])))
    return hits / dataset.num_samples


class EvidentialTrainable:
    """Adapter giving the party ensemble the generic trainable interface."""

    quantum_output = True

    def __init__(self, models: list[PartyModel], eval_mode: str = "factorized"):
        self.models = models
        self.eval_mode = eval_mode

    def parameters(self) -> list[np.ndarray]:
        return [p for m in self.models for p in party_parameters(m)]

    def predict(self, sample) -> Prediction:
        if self.eval_mode == "joint":
            states = [model_mod.party_forward(m, x)[0]
                      for m, x in zip(self.models, sample)]
            plaus = model_mod.fuse_joint_circuit(states,
                                                 self.models[0].num_classes)
            return model_mod.predict(plaus)
        return eviqvfl_predict(self.models, sample)

    def loss_and_gradients(self, sample, label, config):
        loss, party_grads, pred = full_gradient(self.models, sample, label, config)
        return loss, [g for pg in party_grads for g in pg], pred


def train_run(models, train_set: VerticalDataset, config: TrainConfig,
              test_set: VerticalDataset | None = None
              ) -> tuple[object, TrainTrace]:
    """Mini-batch training loop; fully deterministic given ``config.seed``.

    ``models`` is either a list of PartyModel (trained as the evidential
    ensemble) or any object with the trainable interface (see baselines).
    """
    trainable = models
    if isinstance(models, list):
        trainable = EvidentialTrainable(models, eval_mode=config.eval_mode)
    params = trainable.parameters()
    opt = OptimizerState.for_params(params)
    trace = TrainTrace()
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        losses = []
        hits = 0
        for batch in batch_indices(train_set.num_samples, config.batch_size,
                                   config.seed, epoch):
            grad_sum = [np.zeros_like(p) for p in params]
            for i in batch:
                sample = train_set.sample(int(i))
                label = train_set.labels[int(i)]
                loss, grads, pred = trainable.loss_and_gradients(sample, label, config)
                losses.append(loss)
                hits += int(pred.predicted_class == int(np.argmax(label)))
                for gs, g in zip(grad_sum, grads):
                    gs += g
            for gs in grad_sum:
                gs /= len(batch)
            adam_step(opt, params, grad_sum, config)
        test_acc = _accuracy(trainable, test_set) if test_set is not None else float("nan")
        trace.records.append(EpochRecord(
            epoch=epoch,
            loss=float(np.mean(losses)),
            train_acc=hits / train_set.num_samples,
            test_acc=test_acc,
            seconds=time.monotonic() - t0,
        ))
    return trainable, trace


# --- barren-plateau diagnostic --------------------------------------------

@dataclass
class GradientVarianceReport:
    evidential_variance: float
    monolithic_vqc_variance: float
    total_qubits: int
    num_seeds: int


def barren_plateau_diagnostic(party_input_dims, party_output_dims,
                              internal_rank: int, blocks: int,
                              num_parties: int, num_classes: int,
                              num_seeds: int = 50, seed: int = 0
                              ) -> GradientVarianceReport:
    """Compare first-angle gradient variance: evidential fusion vs a single
    trainable fusion circuit over all teleported qubits.

    The monolithic variant replaces the fixed fusion circuit with a trainable
    block-structured circuit on the full sum-of-parties register; its gradient
    signal is expected to be markedly weaker.
    """
    from . import qsim
    from .model import party_forward, predict, vqc_block_gates

    d = int(np.prod(party_input_dims))
    evi_grads = []
    mono_grads = []
    total_qubits = 0
    for s in range(num_seeds):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s]))
        models = [PartyModel.random_init(party_input_dims, party_output_dims,
                                         internal_rank, blocks, num_classes,
                                         rng, angle_scale=np.pi)
                  for _ in range(num_parties)]
        sample = [rng.uniform(0, 1, size=d) for _ in range(num_parties)]
        label = np.zeros(num_classes)
        label[0] = 1.0

        # Evidential path: shift the first VQC angle of party 0.
        def evi_loss(theta: float) -> float:
            old = models[0].vqc_angles[0, 0, 0]
            models[0].vqc_angles[0, 0, 0] = theta
            val = eviqvfl_loss(models, sample, label)
            models[0].vqc_angles[0, 0, 0] = old
            return val

        evi_grads.append(param_shift_grad(evi_loss, models[0].vqc_angles[0, 0, 0]))

        # Monolithic variant: joint register of all party outputs followed by
        # a random trainable fusion circuit over the whole register.  The same
        # party angle is differentiated in both models; here its signal must
        # survive the scrambling fusion circuit.
        total_qubits = sum(m.n_qubits for m in models)
        # Depth grows with width so the random circuit actually mixes the
        # register; shallow circuits would understate the plateau.
        fusion_blocks = max(2, total_qubits // 2)
        fusion_angles = rng.uniform(-np.pi, np.pi,
                                    size=(fusion_blocks, total_qubits, 3))

        def mono_loss(theta: float) -> float:
            old = models[0].vqc_angles[0, 0, 0]
            models[0].vqc_angles[0, 0, 0] = theta
            states = [party_forward(m, x)[0] for m, x in zip(models, sample)]
            models[0].vqc_angles[0, 0, 0] = old
            st = states[0]
            for other in states[1:]:
                st = qsim.tensor_product(st, other)
            for gate in vqc_block_gates(fusion_angles):
                qsim.apply_gate(st, gate)
            plaus = np.array([qsim.prob_one(st, c) for c in range(num_classes)])
            return ce_loss(predict(plaus), label, check_bound=True)

        mono_grads.append(param_shift_grad(mono_loss, models[0].vqc_angles[0, 0, 0]))

    return GradientVarianceReport(
        evidential_variance=float(np.var(evi_grads)),
        monolithic_vqc_variance=float(np.var(mono_grads)),
        total_qubits=total_qubits,
        num_seeds=num_seeds,
    )
