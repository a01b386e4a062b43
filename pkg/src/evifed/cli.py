"""Command-line front end: train, verify, inspect, export-curves.

Experiments are described by a YAML config (schema below); every command is
deterministic given the config and seed, so rerunning reproduces outputs
byte for byte.  Output directory precedence: ``--out`` flag, then the
``EVIFED_OUT_DIR`` environment variable, then the config's ``out_dir``.

Config schema (all keys lowercase)::

    dataset:
      kind: idx | csv
      # kind: idx
      train_images: path     # IDX image file
      train_labels: path
      test_images: path
      test_labels: path
      classes: [3, 6]        # digit subset, mapped to labels 0..C-1 in order
      max_train_samples: 2000
      max_test_samples: 500
      # kind: csv
      path: file.csv
      feature_columns: [colA, colB, ...]
      label_column: target
      label_map: {M: 1, B: 0}   # optional; default labels already 0/1
      balance: false            # balanced_subsample before splitting
      test_fraction: 0.2
      widths: [10, 10, 10]      # per-party feature widths, file order
    model_kind: eviqvfl | classical_average | classical_fuse |
                measure_then_average | measure_then_vqc
    parties:
      input_dims: [2, 7, 7, 2]  # TT input factorization, product = d_k
      output_dims: [3, 2]       # TT output factorization, product = n_k
      rank: 2
      vqc_blocks: 2
      num_classes: 2
    train:
      learning_rate: 0.05
      batch_size: 64
      epochs: 20
      seed: 0
      eval_mode: factorized | joint
      grad_mode: parameter_shift | finite_difference
    out_dir: runs/exp1
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import baselines, data, evidence, model, qsim, train, verify
from .model import PartyModel
from .ttn import TTLayerParams
from .verify import SUITES

OUT_DIR_ENV = "EVIFED_OUT_DIR"
MODEL_MAGIC = "evifed-model v1"

MODEL_KINDS = ("eviqvfl",) + baselines.BASELINE_KINDS


class ConfigError(ValueError):
    """Config validation failure; message carries the offending field path."""


# --- configuration ---------------------------------------------------------

@dataclass
class ExperimentConfig:
    dataset: dict
    model_kind: str
    parties: dict
    train: train.TrainConfig
    out_dir: str = "."
    raw: dict = field(default_factory=dict)


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}.{key}: required field missing")
    return section[key]


def validate_party_topology(parties: dict, path: str = "parties") -> None:
    out_dims = _require(parties, "output_dims", path)
    num_classes = int(_require(parties, "num_classes", path))
    _require(parties, "input_dims", path)
    for key in ("input_dims", "output_dims"):
        dims = parties[key]
        if not dims or any(int(d) < 1 for d in dims):
            raise ConfigError(f"{path}.{key}: dimensions must be positive")
    n_qubits = math.prod(int(q) for q in out_dims)
    if n_qubits < num_classes:
        raise ConfigError(
            f"{path}.output_dims: product {n_qubits} is fewer qubits than "
            f"{path}.num_classes={num_classes}")
    if int(parties.get("rank", 1)) < 1:
        raise ConfigError(f"{path}.rank: must be >= 1")
    if int(parties.get("vqc_blocks", 1)) < 1:
        raise ConfigError(f"{path}.vqc_blocks: must be >= 1")


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    dataset = _require(raw, "dataset", "config")
    model_kind = raw.get("model_kind", "eviqvfl")
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"config.model_kind: unknown kind {model_kind!r}")
    parties = _require(raw, "parties", "config")
    validate_party_topology(parties)
    kind = _require(dataset, "kind", "config.dataset")
    if kind not in ("idx", "csv"):
        raise ConfigError(f"config.dataset.kind: unknown kind {kind!r}")
    file_keys = {"idx": ("train_images", "train_labels",
                         "test_images", "test_labels"),
                 "csv": ("path",)}[kind]
    for key in file_keys:
        p = _require(dataset, key, "config.dataset")
        if not os.path.exists(p):
            raise ConfigError(f"config.dataset.{key}: file not found: {p}")
    try:
        train_cfg = train.TrainConfig(**raw.get("train", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config.train: {exc}") from exc
    return ExperimentConfig(dataset=dataset, model_kind=model_kind,
                            parties=parties, train=train_cfg,
                            out_dir=raw.get("out_dir", "."), raw=raw)


# --- dataset construction --------------------------------------------------

def _limit(ds: data.VerticalDataset, max_n: int | None, seed: int, salt: int
           ) -> data.VerticalDataset:
    if max_n is None or ds.num_samples <= max_n:
        return ds
    rng = np.random.default_rng(np.random.SeedSequence([seed, salt]))
    return ds.subset(rng.permutation(ds.num_samples)[:max_n])


def _idx_to_dataset(images: np.ndarray, labels: np.ndarray,
                    classes: list[int], tag: str) -> data.VerticalDataset:
    keep = np.isin(labels, classes)
    images, labels = images[keep], labels[keep]
    remap = {c: i for i, c in enumerate(classes)}
    mapped = np.array([remap[int(v)] for v in labels], dtype=np.int64)
    blocks = data.quadrant_partition(images.astype(np.float64) / 255.0)
    return data.VerticalDataset(blocks, data.one_hot(mapped, len(classes)), tag)


def build_datasets(cfg: ExperimentConfig, seed: int
                   ) -> tuple[data.VerticalDataset, data.VerticalDataset]:
    ds = cfg.dataset
    if ds["kind"] == "idx":
        classes = list(ds.get("classes", list(range(10))))
        tr_img, tr_lab = data.load_idx_images(ds["train_images"], ds["train_labels"])
        te_img, te_lab = data.load_idx_images(ds["test_images"], ds["test_labels"])
        train_set = _idx_to_dataset(tr_img, tr_lab, classes, "train")
        test_set = _idx_to_dataset(te_img, te_lab, classes, "test")
        train_set = _limit(train_set, ds.get("max_train_samples", 2000), seed, 1)
        test_set = _limit(test_set, ds.get("max_test_samples", 500), seed, 2)
        return train_set, test_set

    features, labels = data.load_tabular_csv(
        ds["path"], list(ds["feature_columns"]), ds["label_column"],
        label_map=ds.get("label_map"))
    if ds.get("balance", False):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
        features, labels = data.balanced_subsample(features, labels, rng)
    raw = data.VerticalDataset([features], data.one_hot(labels, 2))
    train_raw, test_raw = data.train_test_split(
        raw, float(ds.get("test_fraction", 0.2)), seed)
    train_feat, test_feat = data.standardize(train_raw.party_blocks[0],
                                             test_raw.party_blocks[0])
    widths = list(ds["widths"])
    return (data.VerticalDataset(data.vertical_split(train_feat, widths),
                                 train_raw.labels, "train"),
            data.VerticalDataset(data.vertical_split(test_feat, widths),
                                 test_raw.labels, "test"))


# --- model construction ----------------------------------------------------

def build_party_models(cfg: ExperimentConfig, rng) -> list[PartyModel]:
    p = cfg.parties
    widths = (list(cfg.dataset.get("widths", []))
              if cfg.dataset["kind"] == "csv" else [196] * 4)
    num_parties = len(widths)
    d = int(np.prod(p["input_dims"]))
    for k, w in enumerate(widths):
        if w != d:
            raise ConfigError(
                f"parties.input_dims: product {d} does not match party {k}'s "
                f"feature width {w}")
    return [PartyModel.random_init(list(p["input_dims"]), list(p["output_dims"]),
                                   int(p.get("rank", 2)),
                                   int(p.get("vqc_blocks", 2)),
                                   int(p["num_classes"]), rng)
            for _ in range(num_parties)]


def build_trainable(cfg: ExperimentConfig, rng):
    """The configured model under the common trainable interface."""
    if cfg.model_kind == "eviqvfl":
        return build_party_models(cfg, rng)
    widths = (list(cfg.dataset.get("widths", []))
              if cfg.dataset["kind"] == "csv" else [196] * 4)
    num_classes = int(cfg.parties["num_classes"])
    if cfg.model_kind in ("measure_then_average", "measure_then_vqc"):
        return baselines.build_baseline(cfg.model_kind, widths, num_classes, rng,
                                        quantum_models=build_party_models(cfg, rng))
    probe = PartyModel.random_init(list(cfg.parties["input_dims"]),
                                   list(cfg.parties["output_dims"]),
                                   int(cfg.parties.get("rank", 2)),
                                   int(cfg.parties.get("vqc_blocks", 2)),
                                   num_classes, rng)
    return baselines.build_baseline(cfg.model_kind, widths, num_classes, rng,
                                    party_budget=probe.param_count())


# --- model serialization ---------------------------------------------------

def save_party_models(path, models: list[PartyModel]) -> None:
    """Flat text dump: shape headers + full-precision values, one array per line."""
    with open(path, "w") as f:
        f.write(f"{MODEL_MAGIC}\n")
        m0 = models[0]
        f.write(f"parties {len(models)} num_classes {m0.num_classes} "
                f"blocks {m0.blocks}\n")
        for k, m in enumerate(models):
            f.write(f"party {k} input_dims {' '.join(map(str, m.ttn.input_dims))} "
                    f"output_dims {' '.join(map(str, m.ttn.output_dims))}\n")
            for l, core in enumerate(m.ttn.cores):
                f.write(f"array party{k}.core{l} shape "
                        f"{' '.join(map(str, core.shape))}\n")
                f.write(" ".join(repr(float(v)) for v in core.ravel()) + "\n")
            f.write(f"array party{k}.vqc shape "
                    f"{' '.join(map(str, m.vqc_angles.shape))}\n")
            f.write(" ".join(repr(float(v)) for v in m.vqc_angles.ravel()) + "\n")


def load_party_models(path) -> list[PartyModel]:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model dump (missing {MODEL_MAGIC!r} header)")
    head = lines[1].split()
    num_parties, num_classes, blocks = int(head[1]), int(head[3]), int(head[5])
    pos = 2
    models = []

    def read_array(expect_name: str) -> np.ndarray:
        nonlocal pos
        fields = lines[pos].split()
        if fields[0] != "array" or fields[1] != expect_name or fields[2] != "shape":
            raise ValueError(f"{path}:{pos + 1}: expected array {expect_name}")
        shape = tuple(int(v) for v in fields[3:])
        values = np.array([float(v) for v in lines[pos + 1].split()])
        pos += 2
        return values.reshape(shape)

    for k in range(num_parties):
        fields = lines[pos].split()
        split_at = fields.index("output_dims")
        input_dims = [int(v) for v in fields[3:split_at]]
        output_dims = [int(v) for v in fields[split_at + 1:]]
        pos += 1
        cores = [read_array(f"party{k}.core{l}") for l in range(len(input_dims))]
        vqc = read_array(f"party{k}.vqc")
        ranks = [c.shape[0] for c in cores] + [1]
        ttn = TTLayerParams(input_dims, output_dims, ranks, cores)
        models.append(PartyModel(ttn, vqc, ttn.out_size, num_classes, blocks))
    return models


# --- commands --------------------------------------------------------------

def _resolve_out_dir(cfg: ExperimentConfig, args) -> str:
    out = args.out or os.environ.get(OUT_DIR_ENV) or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
    out_dir = _resolve_out_dir(cfg, args)
    train_set, test_set = build_datasets(cfg, cfg.train.seed)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.train.seed, 0]))
    trainable = build_trainable(cfg, rng)
    trained, trace = train.train_run(trainable, train_set, cfg.train, test_set)

    # The seconds column is wall clock and would break rerun byte-identity.
    trace.export(os.path.join(out_dir, "trace.csv"), include_wall_clock=False)
    if cfg.model_kind == "eviqvfl":
        save_party_models(os.path.join(out_dir, "model.txt"), trainable)
        counts = [m.param_count() for m in trainable]
    elif hasattr(trained, "party_param_counts"):
        counts = trained.party_param_counts()
    else:
        counts = [p.size for p in trained.parameters()]
    final = trace.records[-1]
    with open(os.path.join(out_dir, "summary.txt"), "w") as f:
        f.write(f"model_kind {cfg.model_kind}\n")
        f.write(f"seed {cfg.train.seed}\n")
        f.write(f"final_loss {final.loss!r}\n")
        f.write(f"final_train_acc {final.train_acc!r}\n")
        f.write(f"final_test_acc {final.test_acc!r}\n")
        f.write(f"params_per_party {' '.join(map(str, counts))}\n")
    print(f"trained {cfg.model_kind}: loss {final.loss:.4f}, "
          f"test acc {final.test_acc:.4f}, params/party {counts}")
    return 0


def cmd_verify(args) -> int:
    results = verify.run_suite(args.suite)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status}  {r.name}: worst deviation {r.worst:.3e} "
              f"(tolerance {r.tolerance:.0e})")
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return 1 if failed else 0


def cmd_inspect(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.train.seed
    models = load_party_models(args.model)
    _, test_set = build_datasets(cfg, seed)
    if not 0 <= args.sample < test_set.num_samples:
        print(f"sample index {args.sample} out of range "
              f"(test set has {test_set.num_samples})", file=sys.stderr)
        return 1
    sample = test_set.sample(args.sample)
    num_classes = models[0].num_classes

    states = [model.party_forward(m, x)[0] for m, x in zip(models, sample)]
    bbas = []
    for k, state in enumerate(states):
        dist = qsim.marginal_probabilities(state, range(num_classes))
        bba = evidence.decode_distribution(dist)
        bbas.append(bba)
        print(f"party {k} output BBA (mass per subset bitmask):")
        for subset in range(1 << num_classes):
            print(f"  m[{subset:0{num_classes}b}] = {bba.masses[subset]:.6f}")
        print(f"  sum = {bba.masses.sum():.9f}")
    combined = evidence.ccr_combine(bbas)
    print("combined BBA:")
    for subset in range(1 << num_classes):
        print(f"  m[{subset:0{num_classes}b}] = {combined.masses[subset]:.6f}")

    joint = model.fuse_joint_circuit(states, num_classes)
    factorized = model.fuse_factorized(
        [model.party_marginals(s, num_classes) for s in states])
    print("per-class plausibilities:")
    for c in range(num_classes):
        print(f"  class {c}: joint {joint[c]:.9f}  factorized {factorized[c]:.9f}")
    pred = model.predict(factorized)
    true_class = int(np.argmax(test_set.labels[args.sample]))
    print(f"prediction: class {pred.predicted_class} "
          f"(probabilities {np.array2string(pred.probabilities, precision=6)}); "
          f"true class {true_class}")
    return 0


def cmd_export_curves(args) -> int:
    traces = [train.TrainTrace.load(p) for p in args.traces]
    lengths = {len(t.records) for t in traces}
    if len(lengths) != 1:
        print(f"traces disagree on epoch count: {sorted(lengths)}", file=sys.stderr)
        return 1
    n_runs = len(traces)
    with open(args.out_file, "w") as f:
        f.write("epoch,mean_loss,mean_acc,n_runs\n")
        for i in range(lengths.pop()):
            losses = [t.records[i].loss for t in traces]
            accs = [t.records[i].test_acc for t in traces]
            f.write(f"{traces[0].records[i].epoch},{float(np.mean(losses))!r},"
                    f"{float(np.mean(accs))!r},{n_runs}\n")
    print(f"wrote {args.out_file} ({n_runs} runs merged)")
    return 0


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evifed",
        description="Evidential quantum vertical federated learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None,
                         help="override the config's training seed")
    p_train.add_argument("--out", default=None, help="output directory")
    p_train.add_argument("--threads", type=int, default=1,
                         help="reserved; kernels are single-threaded")
    p_train.set_defaults(func=cmd_train)

    p_verify = sub.add_parser("verify", help="run the property suites")
    p_verify.add_argument("--suite", default="all",
                          choices=list(SUITES) + ["all"])
    p_verify.set_defaults(func=cmd_verify)

    p_inspect = sub.add_parser("inspect",
                               help="audit the evidential pipeline on one sample")
    p_inspect.add_argument("--config", required=True)
    p_inspect.add_argument("--model", required=True, help="model dump path")
    p_inspect.add_argument("--sample", type=int, required=True,
                           help="test-set sample index")
    p_inspect.add_argument("--seed", type=int, default=None)
    p_inspect.set_defaults(func=cmd_inspect)

    p_export = sub.add_parser("export-curves",
                              help="merge trace files into a plot-ready table")
    p_export.add_argument("traces", nargs="+", help="trace csv paths")
    p_export.add_argument("--out-file", required=True)
    p_export.set_defaults(func=cmd_export_curves)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
