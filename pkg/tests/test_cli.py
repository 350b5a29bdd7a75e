import json
import math

import numpy as np
import pytest

from uniformgan.cli import main
from uniformgan.data import load_features, save_features
from uniformgan.numerics import Rng

GAN_YAML = """\
seed: 1
data:
  k_modes: 4
  n_per_mode: 20
gan:
  g_hidden: [8, 8]
  d_hidden: [8, 8]
  batch_size: 16
  steps: 15
  eval_samples: 100
"""

SCM_YAML = """\
seed: 2
scm:
  d_c: 1
  d_eps: 1
encoder:
  hidden: [8]
  steps: 20
  batch_size: 64
bench:
  n_pairs: 600
  n_eval: 600
"""


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_sphere_two_points(capsys):
    code, out, _ = run(["sphere-uniformity", "--n", 2, "--d", 2, "--gamma", 2, "--trials", 5], capsys)
    assert code == 0
    assert json.loads(out)["final_potential"] == pytest.approx(math.exp(-8), rel=1e-6)


@pytest.mark.parametrize("gamma", ["0", "-2", "nan"])
def test_nonpositive_gamma_is_usage_error(gamma, capsys):
    with pytest.raises(SystemExit) as info:
        main(["sphere-uniformity", "--n", "2", "--gamma", gamma])
    assert info.value.code == 2
    assert "gamma" in capsys.readouterr().err


def test_eval_features_identical_rows(tmp_path, capsys):
    path = tmp_path / "f.csv"
    save_features(path, np.tile([[0.5, -1.0, 2.0]], (6, 1)))
    code, out, _ = run(["eval-features", "--input", path, "--gamma", 2], capsys)
    report = json.loads(out)
    assert code == 0 and report["pairwise_potential"] == 1.0 and report["rows"] == 6


def test_eval_features_values(tmp_path, capsys):
    path = tmp_path / "f.csv"
    save_features(path, np.array([[1.0, 0.0], [-1.0, 0.0]]))
    _, out, _ = run(["eval-features", "--input", path], capsys)
    report = json.loads(out)
    assert report["pairwise_potential"] == pytest.approx(math.exp(-8), rel=1e-12)
    assert report["batch_entropy_metric"] == pytest.approx(0.5 * math.log(0.25), abs=1e-12)


def test_eval_features_missing_file(tmp_path, capsys):
    code, _, err = run(["eval-features", "--input", tmp_path / "none.csv"], capsys)
    assert code == 4 and "none.csv" in err


def test_eval_features_malformed(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("f0,f1\n1,2\n3\n")
    code, _, err = run(["eval-features", "--input", tmp_path / "bad.csv"], capsys)
    assert code == 4 and "line 3" in err


def test_train_gan_artifacts_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "gan.yaml"
    cfg.write_text(GAN_YAML)
    for name in ("a", "b"):
        code, _, _ = run(["train-gan", "--config", cfg, "--output-dir", tmp_path / name], capsys)
        assert code == 0
    for name in ("VERSION", "metrics.jsonl", "params.txt", "samples.csv", "summary.json", "dataset.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    resolved = json.loads((tmp_path / "a" / "config.json").read_text())
    other = json.loads((tmp_path / "b" / "config.json").read_text())
    assert resolved.pop("output_dir") != other.pop("output_dir") and resolved == other
    assert resolved["gan"]["seed"] == 1 and resolved["data"]["k_modes"] == 4
    assert len((tmp_path / "a" / "metrics.jsonl").read_text().splitlines()) == 15


def test_flags_win_over_config(tmp_path, capsys):
    cfg = tmp_path / "gan.yaml"
    cfg.write_text(GAN_YAML + "  regularizer:\n    lambda_g: 0.9\n    delta_d: 0.3\n")
    run(["train-gan", "--config", cfg, "--output-dir", tmp_path / "r", "--no-ur", "--no-er", "--steps", 2], capsys)
    reg = json.loads((tmp_path / "r" / "config.json").read_text())["gan"]["regularizer"]
    assert (reg["lambda_g"], reg["lambda_d"], reg["delta_g"], reg["delta_d"]) == (0.0, 0.0, 0.0, 0.0)
    assert json.loads((tmp_path / "r" / "config.json").read_text())["gan"]["steps"] == 2


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "gan.yaml"
    cfg.write_text("gan:\n  stepz: 3\n")
    code, _, err = run(["train-gan", "--config", cfg], capsys)
    assert code == 2 and "gan.stepz" in err


def test_missing_config(tmp_path, capsys):
    code, _, _ = run(["train-gan", "--config", tmp_path / "x.yaml"], capsys)
    assert code == 4


def test_scm_bench(tmp_path, capsys):
    cfg = tmp_path / "scm.yaml"
    cfg.write_text(SCM_YAML)
    code, out, _ = run(["scm-bench", "--config", cfg, "--output-dir", tmp_path / "s", "--dump-pairs"], capsys)
    assert code == 0
    summary = json.loads(out)
    assert {"r2_content", "r2_noise", "alignment_final", "entropy_final", "oracle_alignment"} <= set(summary)
    report = json.loads((tmp_path / "s" / "report.json").read_text())
    assert report["spec"]["d_c"] == 1
    header = (tmp_path / "s" / "pairs.csv").read_text().splitlines()[0].split(",")
    assert header == ["x_0", "x_1", "xt_0", "xt_1", "c_0", "eps_0", "epst_0", "A_0"]
    pairs = load_features(tmp_path / "s" / "pairs.csv")
    assert pairs.shape == (600, 8)


def test_make_data(tmp_path, capsys):
    code, _, _ = run(["make-data", "ring", "--output", tmp_path / "r.csv", "--k-modes", 8, "--n-per-mode", 10, "--n-classes", 4], capsys)
    assert code == 0
    d = load_features(tmp_path / "r.csv")
    assert d.shape == (40, 3) and len(set(d[:, 2].tolist())) == 4


def test_gradcheck_command(capsys):
    code, out, _ = run(["gradcheck", "--instances", 3], capsys)
    report = json.loads(out)
    assert code == 0 and report["passed"]


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
