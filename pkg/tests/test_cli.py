"""Command-line front end: configs, training runs, model dumps, curves."""
import os

import numpy as np
import pytest

from evifed import cli, data
from evifed.cli import ConfigError, load_config, load_party_models, \
    save_party_models, validate_party_topology
from evifed.model import PartyModel


def write_yaml(path, text):
    path.write_text(text)
    return str(path)


def make_csv(path, n=80, width=6, seed=0):
    """Small linearly separable tabular file: label = sign of the first column."""
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, width))
    labels = (feats[:, 0] > 0).astype(int)
    feats[:, 1] = labels * 2.0 - 1.0 + 0.1 * feats[:, 1]
    header = ",".join([f"f{i}" for i in range(width)] + ["target"])
    lines = [header] + [
        ",".join([repr(float(v)) for v in row] + [str(lab)])
        for row, lab in zip(feats, labels)
    ]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def csv_config(tmp_path, csv_path, extra="", model_kind="eviqvfl",
               epochs=2, out_name="run"):
    return write_yaml(tmp_path / f"{out_name}.yaml", f"""
dataset:
  kind: csv
  path: {csv_path}
  feature_columns: [f0, f1, f2, f3, f4, f5]
  label_column: target
  test_fraction: 0.25
  widths: [3, 3]
model_kind: {model_kind}
parties:
  input_dims: [3]
  output_dims: [2]
  rank: 2
  vqc_blocks: 1
  num_classes: 2
train:
  learning_rate: 0.1
  batch_size: 16
  epochs: {epochs}
  seed: 0
out_dir: {tmp_path / out_name}
{extra}""")


# --- config validation -----------------------------------------------------

def test_missing_dataset_section_names_field():
    with pytest.raises(ConfigError, match="config.dataset"):
        cli_load_from_text("model_kind: eviqvfl\nparties: {}\n")


def cli_load_from_text(text, tmp_path=None):
    import tempfile
    with tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False) as f:
        f.write(text)
        name = f.name
    try:
        return load_config(name)
    finally:
        os.unlink(name)


def test_unknown_model_kind_rejected(tmp_path, ):
    with pytest.raises(ConfigError, match="model_kind"):
        cli_load_from_text("dataset: {kind: csv}\nmodel_kind: qsvm\nparties: {}\n")


def test_missing_csv_file_reported(tmp_path):
    cfg = f"""
dataset: {{kind: csv, path: {tmp_path}/nope.csv}}
parties: {{input_dims: [3], output_dims: [2], num_classes: 2}}
"""
    with pytest.raises(ConfigError, match="file not found"):
        cli_load_from_text(cfg)


def test_bad_dataset_kind(tmp_path):
    with pytest.raises(ConfigError, match="dataset.kind"):
        cli_load_from_text(
            "dataset: {kind: parquet}\n"
            "parties: {input_dims: [3], output_dims: [2], num_classes: 2}\n")


def test_train_section_errors_carry_field_path(tmp_path):
    csv = make_csv(tmp_path / "d.csv")
    cfg = f"""
dataset:
  kind: csv
  path: {csv}
  feature_columns: [f0]
  label_column: target
  widths: [1]
parties: {{input_dims: [1], output_dims: [2], num_classes: 2}}
train: {{learning_rate: -1.0}}
"""
    with pytest.raises(ConfigError, match="config.train"):
        cli_load_from_text(cfg)


def test_topology_rejects_too_few_qubits():
    with pytest.raises(ConfigError, match="fewer qubits"):
        validate_party_topology(
            {"input_dims": [4], "output_dims": [2], "num_classes": 4})


def test_topology_rejects_nonpositive_dims():
    with pytest.raises(ConfigError, match="positive"):
        validate_party_topology(
            {"input_dims": [0, 4], "output_dims": [2], "num_classes": 2})


def test_topology_rejects_bad_rank():
    with pytest.raises(ConfigError, match="rank"):
        validate_party_topology(
            {"input_dims": [4], "output_dims": [2], "num_classes": 2, "rank": 0})


def test_width_mismatch_caught_at_model_build(tmp_path):
    csv = make_csv(tmp_path / "d.csv")
    cfg = load_config(csv_config(tmp_path, csv))
    cfg.parties["input_dims"] = [4]  # parties hold 3 features each
    with pytest.raises(ConfigError, match="does not match"):
        cli.build_party_models(cfg, np.random.default_rng(0))


# --- model dump roundtrip --------------------------------------------------

def test_model_dump_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    models = [PartyModel.random_init([2, 5], [2, 2], 2, 1, 2, rng)
              for _ in range(3)]
    path = tmp_path / "model.txt"
    save_party_models(path, models)
    back = load_party_models(path)
    assert len(back) == 3
    for a, b in zip(models, back):
        assert a.ttn.input_dims == b.ttn.input_dims
        assert a.ttn.output_dims == b.ttn.output_dims
        for ca, cb in zip(a.ttn.cores, b.ttn.cores):
            assert np.array_equal(ca, cb)
        assert np.array_equal(a.vqc_angles, b.vqc_angles)


def test_model_dump_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("hello\nworld\n")
    with pytest.raises(ValueError, match="not a model dump"):
        load_party_models(path)


# --- train command ---------------------------------------------------------

def run_cli(*argv):
    return cli.main(list(argv))


def test_train_writes_expected_artifacts(tmp_path):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv)
    assert run_cli("train", "--config", config) == 0
    out = tmp_path / "run"
    assert (out / "trace.csv").exists()
    assert (out / "model.txt").exists()
    summary = (out / "summary.txt").read_text()
    assert "model_kind eviqvfl" in summary
    # 3-feature rank-2 party: TT (3*2*2=12... ) realized counts from the model
    counts = [int(v) for v in
              [line for line in summary.splitlines()
               if line.startswith("params_per_party")][0].split()[1:]]
    back = load_party_models(out / "model.txt")
    assert counts == [m.param_count() for m in back]


def test_train_rerun_is_byte_identical(tmp_path):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv)
    assert run_cli("train", "--config", config) == 0
    first = {name: (tmp_path / "run" / name).read_bytes()
             for name in ("trace.csv", "model.txt", "summary.txt")}
    assert run_cli("train", "--config", config) == 0
    for name, blob in first.items():
        assert (tmp_path / "run" / name).read_bytes() == blob


def test_seed_flag_changes_the_run(tmp_path):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv)
    assert run_cli("train", "--config", config, "--seed", "0") == 0
    trace0 = (tmp_path / "run" / "trace.csv").read_text()
    assert run_cli("train", "--config", config, "--seed", "1") == 0
    assert (tmp_path / "run" / "trace.csv").read_text() != trace0


def test_out_flag_beats_environment_beats_config(tmp_path, monkeypatch):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv)
    env_dir, flag_dir = tmp_path / "from_env", tmp_path / "from_flag"
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(env_dir))
    assert run_cli("train", "--config", config) == 0
    assert (env_dir / "trace.csv").exists()
    assert run_cli("train", "--config", config, "--out", str(flag_dir)) == 0
    assert (flag_dir / "trace.csv").exists()


@pytest.mark.parametrize("kind", ["classical_average", "measure_then_average"])
def test_train_supports_baseline_kinds(tmp_path, kind):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv, model_kind=kind, out_name=kind)
    assert run_cli("train", "--config", config) == 0
    summary = (tmp_path / kind / "summary.txt").read_text()
    assert f"model_kind {kind}" in summary
    assert not (tmp_path / kind / "model.txt").exists()


def test_bad_config_returns_nonzero(tmp_path, capsys):
    bad = write_yaml(tmp_path / "bad.yaml", "dataset: {kind: csv}\n")
    assert run_cli("train", "--config", bad) == 1
    assert "error:" in capsys.readouterr().err


# --- verify command --------------------------------------------------------

def test_verify_single_suite_reports_pass(capsys):
    assert run_cli("verify", "--suite", "evidence") == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert "properties passed" in out


# --- inspect command -------------------------------------------------------

def test_inspect_prints_bbas_and_matching_plausibilities(tmp_path, capsys):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv)
    assert run_cli("train", "--config", config) == 0
    capsys.readouterr()
    assert run_cli("inspect", "--config", config,
                   "--model", str(tmp_path / "run" / "model.txt"),
                   "--sample", "0") == 0
    out = capsys.readouterr().out
    assert "party 0 output BBA" in out
    assert "combined BBA" in out
    assert "prediction: class" in out
    for line in out.splitlines():
        if line.strip().startswith("class "):
            _, _, joint_word, joint, fact_word, fact = line.split()
            assert abs(float(joint) - float(fact)) < 1e-8


def test_inspect_sample_out_of_range(tmp_path, capsys):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv)
    assert run_cli("train", "--config", config) == 0
    assert run_cli("inspect", "--config", config,
                   "--model", str(tmp_path / "run" / "model.txt"),
                   "--sample", "10000") == 1


# --- export-curves command -------------------------------------------------

def test_export_curves_averages_runs(tmp_path):
    csv = make_csv(tmp_path / "d.csv")
    config = csv_config(tmp_path, csv)
    assert run_cli("train", "--config", config, "--seed", "0",
                   "--out", str(tmp_path / "s0")) == 0
    assert run_cli("train", "--config", config, "--seed", "1",
                   "--out", str(tmp_path / "s1")) == 0
    out_file = tmp_path / "curves.csv"
    assert run_cli("export-curves", str(tmp_path / "s0" / "trace.csv"),
                   str(tmp_path / "s1" / "trace.csv"),
                   "--out-file", str(out_file)) == 0
    lines = out_file.read_text().splitlines()
    assert lines[0] == "epoch,mean_loss,mean_acc,n_runs"
    assert len(lines) == 3  # header + 2 epochs
    from evifed.train import TrainTrace
    t0 = TrainTrace.load(tmp_path / "s0" / "trace.csv")
    t1 = TrainTrace.load(tmp_path / "s1" / "trace.csv")
    first = lines[1].split(",")
    assert abs(float(first[1]) - (t0.records[0].loss + t1.records[0].loss) / 2) < 1e-12
    assert first[3] == "2"


def test_export_curves_rejects_mismatched_epochs(tmp_path):
    csv = make_csv(tmp_path / "d.csv")
    c2 = csv_config(tmp_path, csv, epochs=2, out_name="e2")
    c3 = csv_config(tmp_path, csv, epochs=3, out_name="e3")
    assert run_cli("train", "--config", c2) == 0
    assert run_cli("train", "--config", c3) == 0
    assert run_cli("export-curves", str(tmp_path / "e2" / "trace.csv"),
                   str(tmp_path / "e3" / "trace.csv"),
                   "--out-file", str(tmp_path / "c.csv")) == 1
