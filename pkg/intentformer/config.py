# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Model, training and run configuration records"""

from __future__ import print_function, division, absolute_import

import json
import logging
from os.path import exists

from typechecks import require_integer, require_iterable_of

from .common import fingerprint
from .errors import ConfigError
from .scene import FEATURE_COLUMNS

logger = logging.getLogger(__name__)

MOTION_PRIORS = ("none", "constant_velocity")


class ConfigRecord(object):
    """
    Shared behaviour of the configuration classes: every field is a
    constructor keyword listed in FIELDS with its default.
    """
    FIELDS = ()

    def __init__(self, **kwargs):
        defaults = dict(self.FIELDS)
        unknown = set(kwargs) - set(defaults)
        if unknown:
            raise ConfigError(
                "Unknown %s fields: %s" % (
                    type(self).__name__, ", ".join(sorted(unknown))))
        for name, default in self.FIELDS:
            value = kwargs.get(name, default)
            if isinstance(value, list):
                value = tuple(value)
            setattr(self, name, value)
        self.validate()

    def validate(self):
        pass

    def to_dict(self):
        result = {}
        for name, _ in self.FIELDS:
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = list(value)
            result[name] = value
        return result

    @classmethod
    def from_dict(cls, d):
        return cls(**dict(d))

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return type(self).from_dict(d)

    def fingerprint(self):
        return fingerprint(self.to_dict())

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "%s(%s)" % (
            type(self).__name__,
            ", ".join("%s=%r" % (name, getattr(self, name)) for name, _ in self.FIELDS))


class ModelConfig(ConfigRecord):
    """
    Hyperparameters of the two-track network.

    num_modes, num_heads and head_dim default to 8 modes, 4 heads of width
    16. `displacement` selects whether the trajectory head emits per-frame
    displacements (integrated over time) or offsets from the last observed
    position. `bias_reference` picks the history frame(s) the relative
    bias compares: "last" common frame or the "mean" over common frames.
    With `motion_prior` "constant_velocity" the head predicts residuals
    around each vehicle's last observed velocity carried forward; "none"
    integrates the head's output alone.
    """
    FIELDS = (
        ("num_modes", 8),
        ("num_heads", 4),
        ("head_dim", 16),
        ("enc_layers", 2),
        ("traj_dec_layers", 2),
        ("prob_dec_layers", 2),
        ("mlp_hidden", 128),
        ("ffn_multiplier", 4),
        ("hist_frames", 50),
        ("pred_frames", 50),
        ("dropped_features", ()),
        ("alpha", 1.0),
        ("beta", 0.0),
        ("gaussian_head", False),
        ("spatial_enabled", True),
        ("displacement", True),
        ("bias_reference", "last"),
        ("motion_prior", "constant_velocity"),
        ("final_norm", True),
        ("layer_norm_eps", 1e-5),
        ("sigma_floor", 1e-3),
        ("seed", 0),
    )

    def validate(self):
        for name in (
                "num_modes", "num_heads", "head_dim", "enc_layers",
                "traj_dec_layers", "prob_dec_layers", "mlp_hidden",
                "ffn_multiplier", "hist_frames", "pred_frames", "seed"):
            require_integer(getattr(self, name), name)
        for name in (
                "num_modes", "num_heads", "head_dim", "enc_layers",
                "traj_dec_layers", "prob_dec_layers", "mlp_hidden",
                "ffn_multiplier", "hist_frames", "pred_frames"):
            if getattr(self, name) < 1:
                raise ConfigError("%s must be at least 1, got %s" % (
                    name, getattr(self, name)))
        if self.d_model % 2:
            raise ConfigError(
                "d_model = num_heads * head_dim must be even, got %d" % self.d_model)
        require_iterable_of(self.dropped_features, str, name="dropped_features")
        unknown = set(self.dropped_features) - set(FEATURE_COLUMNS)
        if unknown:
            raise ConfigError("Unknown dropped_features: %s" % sorted(unknown))
        if len(set(self.dropped_features)) == len(FEATURE_COLUMNS):
            raise ConfigError("At least one feature channel must remain")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("Loss weights must be non-negative")
        if self.beta > 0 and not self.gaussian_head:
            raise ConfigError("beta > 0 requires gaussian_head=True")
        if self.bias_reference not in ("last", "mean"):
            raise ConfigError(
                "bias_reference must be 'last' or 'mean', got %r" % (
                    self.bias_reference,))
        if self.motion_prior not in MOTION_PRIORS:
            raise ConfigError(
                "motion_prior must be one of %s, got %r" % (
                    ", ".join(MOTION_PRIORS), self.motion_prior))
        if not self.layer_norm_eps > 0 or not self.sigma_floor > 0:
            raise ConfigError("layer_norm_eps and sigma_floor must be positive")

    @property
    def d_model(self):
        return self.num_heads * self.head_dim

    @property
    def total_frames(self):
        return self.hist_frames + self.pred_frames

    @property
    def feature_indices(self):
        return [
            i for i, name in enumerate(FEATURE_COLUMNS)
            if name not in self.dropped_features
        ]

    @property
    def feature_dim(self):
        return len(self.feature_indices)


class TrainConfig(ConfigRecord):
    """
    Optimization settings. The optimizer is Adam with global grad-norm
    clipping; `checkpoint_every` = 0 disables intermediate checkpoints.
    """
    FIELDS = (
        ("epochs", 100),
        ("batch_scenes", 8),
        ("learning_rate", 3e-4),
        ("adam_beta1", 0.9),
        ("adam_beta2", 0.999),
        ("adam_eps", 1e-8),
        ("grad_clip", 1.0),
        ("seed", 0),
        ("checkpoint_every", 0),
        ("horizon_s", 5),
        ("log_wall_time", True),
        ("show_progress", False),
    )

    def validate(self):
        for name in ("epochs", "batch_scenes", "seed", "checkpoint_every"):
            require_integer(getattr(self, name), name)
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1, got %d" % self.epochs)
        if self.batch_scenes < 1:
            raise ConfigError("batch_scenes must be at least 1")
        if not self.learning_rate >= 0:
            raise ConfigError(
                "learning_rate must be non-negative, got %s" % self.learning_rate)
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive or None")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")


class RunConfig(ConfigRecord):
    """
    Everything one CLI command needs: model and training settings, data
    locations and chunking, output directory and command flags.
    """
    FIELDS = (
        ("model", None),
        ("train", None),
        ("train_data", ()),
        ("test_data", ()),
        ("test_fraction", 0.2),
        ("sample_rate_hz", 10),
        ("hist_s", 5),
        ("pred_s", 5),
        ("horizons", (1, 2, 3, 4, 5)),
        ("output_dir", "intentformer-out"),
        ("seed", 0),
        ("include_mv1", False),
        ("flags", None),
    )

    def __init__(self, **kwargs):
        model = kwargs.get("model")
        if model is None:
            kwargs["model"] = ModelConfig()
        elif isinstance(model, dict):
            kwargs["model"] = ModelConfig.from_dict(model)
        train = kwargs.get("train")
        if train is None:
            kwargs["train"] = TrainConfig()
        elif isinstance(train, dict):
            kwargs["train"] = TrainConfig.from_dict(train)
        if kwargs.get("flags") is None:
            kwargs["flags"] = {}
        ConfigRecord.__init__(self, **kwargs)

    def validate(self):
        require_integer(self.sample_rate_hz, "sample_rate_hz")
        if self.sample_rate_hz < 1:
            raise ConfigError("sample_rate_hz must be at least 1")
        hist_frames = int(round(self.hist_s * self.sample_rate_hz))
        pred_frames = int(round(self.pred_s * self.sample_rate_hz))
        if (self.model.hist_frames, self.model.pred_frames) != (hist_frames, pred_frames):
            raise ConfigError(
                "Model frames %d/%d do not match %s s/%s s at %d Hz (%d/%d)" % (
                    self.model.hist_frames, self.model.pred_frames,
                    self.hist_s, self.pred_s, self.sample_rate_hz,
                    hist_frames, pred_frames))
        for horizon in self.horizons:
            if not 1 <= horizon <= self.pred_s:
                raise ConfigError(
                    "Horizon %s s is outside 1..%s s" % (horizon, self.pred_s))
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction must be in [0, 1)")

    def check_paths(self):
        """Raise ConfigError if any referenced data path is missing"""
        for path in tuple(self.train_data) + tuple(self.test_data):
            if not exists(path):
                raise ConfigError("Data path does not exist: %s" % path)

    def to_dict(self):
        d = ConfigRecord.to_dict(self)
        d["model"] = self.model.to_dict()
        d["train"] = self.train.to_dict()
        d["flags"] = dict(self.flags)
        return d

    @classmethod
    def for_frames(cls, sample_rate_hz=10, hist_s=5, pred_s=5, model=None, **kwargs):
        """RunConfig whose model frame counts follow the chunking settings"""
        model = dict(model or {})
        model["hist_frames"] = int(round(hist_s * sample_rate_hz))
        model["pred_frames"] = int(round(pred_s * sample_rate_hz))
        return cls(
            sample_rate_hz=sample_rate_hz,
            hist_s=hist_s,
            pred_s=pred_s,
            model=model,
            **kwargs)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info("Wrote run configuration %s to %s", self.fingerprint(), path)


def load_run_config(path, overrides=None):
    """
    Read a JSON run configuration, apply `overrides` (a dict whose
    "model"/"train" entries are merged field by field), and validate.
    If the document has no model frame counts they are derived from the
    chunking settings.
    """
    try:
        with open(path) as f:
            document = json.load(f)
    except ValueError as e:
        raise ConfigError("Cannot parse %s: %s" % (path, e))
    return run_config_from_dict(document, overrides)


def run_config_from_dict(document, overrides=None):
    document = dict(document)
    for key, value in (overrides or {}).items():
        if key in ("model", "train", "flags"):
            merged = dict(document.get(key) or {})
            merged.update(value)
            document[key] = merged
        else:
            document[key] = value
    model = dict(document.get("model") or {})
    rate = document.get("sample_rate_hz", 10)
    model.setdefault("hist_frames", int(round(document.get("hist_s", 5) * rate)))
    model.setdefault("pred_frames", int(round(document.get("pred_s", 5) * rate)))
    document["model"] = model
    return RunConfig.from_dict(document)
