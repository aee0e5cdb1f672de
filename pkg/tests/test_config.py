from pathlib import Path

import pytest

from tcvolterra.config import ConfigError, ExperimentConfig, build_harvest_model, load_config, parse_config

CONFIGS = sorted((Path(__file__).parents[1] / "configs").glob("*.yaml"))


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.ensemble.seed == 0 and cfg.harvest.K == 2.0


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_bundled_configs_validate(path):
    load_config(path)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("grid:\n  T: 1.0\n  stepz: 10\n", "x.yaml")
    assert exc.value.messages == ["x.yaml:3: grid.stepz: Extra inputs are not permitted"]


def test_negative_K_names_field_and_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("harvest:\n  sigma: 0.1\n  K: -1\n", "h.yaml")
    (msg,) = exc.value.messages
    assert msg.startswith("h.yaml:3: harvest.K:") and "K must be positive" in msg


def test_multiple_errors_are_all_reported():
    with pytest.raises(ConfigError) as exc:
        parse_config("grid:\n  steps: 0\nharvest:\n  delta: 0\n")
    assert len(exc.value.messages) == 2


@pytest.mark.parametrize(
    "text",
    [
        "grid: [1, 2\n",
        "- 1\n- 2\n",
        "marks:\n  z: [0.5]\n  weights: []\n",
        "marks:\n  z: [0.0]\n  weights: [1.0]\n",
        "mp:\n  u_min: 1\n  u_max: 0\n",
        "partition_levels: []\n",
        "ensemble:\n  seed: -1\n",
        "harvest:\n  sigma: -1.5\n",
    ],
)
def test_invalid_documents(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "nope.yaml")


def test_overrides_and_digest():
    cfg = parse_config("ensemble:\n  seed: 3\n  n_paths: 50\n")
    over = cfg.with_overrides(seed=9)
    assert over.ensemble.seed == 9 and over.ensemble.n_paths == 50
    assert over.digest() != cfg.digest()
    assert cfg.with_overrides().digest() == cfg.digest()


def test_harvest_builder():
    cfg = parse_config("harvest:\n  r: {kind: exponential, r0: 0.3, c: 0.4, kappa: 1.0}\n  K: 3\n")
    m = build_harvest_model(cfg)
    assert m.K == 3.0 and m.r(0.0, 0.0) == pytest.approx(0.7)
