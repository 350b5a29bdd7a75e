import pytest

from uniformgan.config import ConfigError, GanRunConfig, build, load_gan_config, load_scm_config, to_dict


def write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_gan_config(write(tmp_path, ""))
    assert cfg == GanRunConfig()


def test_nested_values_and_seed_override(tmp_path):
    cfg = load_gan_config(
        write(tmp_path, "seed: 7\ndata:\n  k_modes: 4\ngan:\n  steps: 10\n  g_hidden: [8, 8]\n  regularizer:\n    lambda_g: 0.25\n")
    )
    assert cfg.data.k_modes == 4
    assert cfg.gan.steps == 10 and cfg.gan.g_hidden == [8, 8]
    assert cfg.gan.regularizer.lambda_g == 0.25
    assert cfg.gan.seed == 7


def test_int_accepted_for_float(tmp_path):
    cfg = load_gan_config(write(tmp_path, "gan:\n  regularizer:\n    gamma: 3\n"))
    assert cfg.gan.regularizer.gamma == 3.0 and isinstance(cfg.gan.regularizer.gamma, float)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("gan:\n  regularizer:\n    lamda_g: 1\n", "gan.regularizer.lamda_g"),
        ("bogus: 1\n", "bogus"),
        ("data:\n  sigmaa: 1\n", "data.sigmaa"),
    ],
)
def test_unknown_key_named(tmp_path, text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
        load_gan_config(write(tmp_path, text))


@pytest.mark.parametrize(
    "text",
    [
        "gan:\n  steps: ten\n",
        "gan:\n  steps: 1.5\n",
        "gan:\n  regularizer:\n    normalize_features: 1\n",
        "gan:\n  regularizer:\n    gamma: -1\n",
        "gan:\n  tap_layer_g: 9\n",
        "data: 3\n",
    ],
)
def test_invalid_values(tmp_path, text):
    with pytest.raises(ConfigError):
        load_gan_config(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_gan_config(tmp_path / "nope.yaml")


def test_scm_config(tmp_path):
    cfg = load_scm_config(write(tmp_path, "seed: 3\nscm:\n  d_c: 1\n  d_eps: 3\nencoder:\n  steps: 5\n"))
    assert cfg.scm.n_obs == 4 and cfg.encoder.steps == 5 and cfg.bench.seed == 3
    with pytest.raises(ConfigError, match="scm.d_x"):
        load_scm_config(write(tmp_path, "scm:\n  d_x: 1\n"))


def test_round_trip_through_dict():
    cfg = GanRunConfig()
    assert build(GanRunConfig, to_dict(cfg)) == cfg


def test_shipped_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    paths = sorted(root.glob("*.yaml"))
    assert paths
    for path in paths:
        loader = load_scm_config if path.name.startswith("scm") else load_gan_config
        loader(path)
