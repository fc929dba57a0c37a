import json
from os.path import join
import tempfile

import pytest

from intentformer.config import (
    ModelConfig,
    RunConfig,
    TrainConfig,
    load_run_config,
)
from intentformer.errors import ConfigError


def eq_(x, y):
    assert x == y


def write_json(document):
    path = join(tempfile.mkdtemp(), "run.json")
    with open(path, "w") as f:
        json.dump(document, f)
    return path


def test_model_defaults():
    config = ModelConfig()
    eq_((config.num_modes, config.num_heads, config.head_dim), (8, 4, 16))
    eq_(config.d_model, 64)
    eq_(config.total_frames, 100)
    eq_(config.feature_dim, 8)


def test_dropped_features():
    config = ModelConfig(dropped_features=["theta", "yaw"])
    eq_(config.feature_indices, [0, 1, 2, 3, 4, 5])
    eq_(config.to_dict()["dropped_features"], ["theta", "yaw"])
    with pytest.raises(ConfigError):
        ModelConfig(dropped_features=["speed"])


@pytest.mark.parametrize("settings", [
    {"heads": 2},
    {"num_heads": 1, "head_dim": 3},
    {"num_modes": 0},
    {"beta": 0.5},
    {"alpha": -1.0},
    {"bias_reference": "first"},
    {"motion_prior": "constant_acceleration"},
    {"sigma_floor": 0.0},
])
def test_invalid_model_config(settings):
    with pytest.raises(ConfigError):
        ModelConfig(**settings)


def test_invalid_train_config():
    for settings in [{"epochs": 0}, {"learning_rate": -1.0}, {"grad_clip": 0.0},
                     {"batch_scenes": 0}, {"checkpoint_every": -1}]:
        with pytest.raises(ConfigError):
            TrainConfig(**settings)


def test_replace_and_fingerprint():
    config = ModelConfig()
    other = config.replace(num_modes=4)
    eq_(other.num_modes, 4)
    eq_(config.num_modes, 8)
    assert config.fingerprint() != other.fingerprint()
    eq_(config.fingerprint(), ModelConfig().fingerprint())
    eq_(ModelConfig.from_dict(config.to_dict()), config)


def test_run_config_frames_must_match():
    with pytest.raises(ConfigError):
        RunConfig(sample_rate_hz=5)
    config = RunConfig.for_frames(sample_rate_hz=2, hist_s=3, pred_s=4, horizons=[1, 4])
    eq_((config.model.hist_frames, config.model.pred_frames), (6, 8))
    with pytest.raises(ConfigError):
        RunConfig.for_frames(sample_rate_hz=2, hist_s=3, pred_s=4, horizons=[5])


def test_run_config_check_paths():
    config = RunConfig(train_data=[join(tempfile.mkdtemp(), "missing.csv")])
    with pytest.raises(ConfigError):
        config.check_paths()


def test_load_run_config_with_overrides():
    path = write_json({
        "sample_rate_hz": 2,
        "hist_s": 2,
        "pred_s": 3,
        "horizons": [1, 3],
        "model": {"num_modes": 3},
        "train": {"epochs": 7},
    })
    config = load_run_config(path, overrides={"train": {"learning_rate": 0.01}})
    eq_(config.model.num_modes, 3)
    eq_((config.model.hist_frames, config.model.pred_frames), (4, 6))
    eq_((config.train.epochs, config.train.learning_rate), (7, 0.01))
    eq_(config.horizons, (1, 3))

    saved = join(tempfile.mkdtemp(), "saved.json")
    config.save(saved)
    eq_(load_run_config(saved), config)


def test_load_run_config_errors():
    path = join(tempfile.mkdtemp(), "broken.json")
    with open(path, "w") as f:
        f.write("{not json")
    with pytest.raises(ConfigError):
        load_run_config(path)
    with pytest.raises(ConfigError):
        load_run_config(write_json({"model": {"layers": 3}}))
