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

from __future__ import print_function, division, absolute_import

from collections import OrderedDict
import logging

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor

logger = logging.getLogger(__name__)

EMBEDDING_STD = 0.02


def parameter_shapes(config):
    """
    Ordered (name, shape) list of every learnable tensor for `config`.

    The order is the initialization draw order and the checkpoint order.
    """
    d = config.d_model
    hidden = config.mlp_hidden
    ffn = config.ffn_multiplier * d
    shapes = []

    def mlp(prefix, n_in, n_out):
        shapes.extend([
            (prefix + ".w1", (n_in, hidden)),
            (prefix + ".b1", (hidden,)),
            (prefix + ".w2", (hidden, n_out)),
            (prefix + ".b2", (n_out,)),
        ])

    def layer_norm(prefix):
        shapes.extend([(prefix + ".gain", (d,)), (prefix + ".bias", (d,))])

    def attention_block(prefix):
        layer_norm(prefix + ".ln1")
        for name in ("wq", "wk", "wv", "wo"):
            shapes.append(("%s.attn.%s" % (prefix, name), (d, d)))
        shapes.append((prefix + ".attn.bo", (d,)))
        layer_norm(prefix + ".ln2")
        shapes.extend([
            (prefix + ".ffn.w1", (d, ffn)),
            (prefix + ".ffn.b1", (ffn,)),
            (prefix + ".ffn.w2", (ffn, d)),
            (prefix + ".ffn.b2", (d,)),
        ])

    mlp("input_mlp", config.feature_dim, d)
    shapes.append(("intent_embeddings", (config.num_modes, d)))
    shapes.append(("future_queries", (config.pred_frames, d)))

    for layer in range(config.enc_layers):
        attention_block("encoder.%d" % layer)
    for layer in range(config.traj_dec_layers):
        attention_block("traj_decoder.%d" % layer)
    for layer in range(config.prob_dec_layers):
        attention_block("prob_decoder.%d.temporal" % layer)
        if config.spatial_enabled:
            attention_block("prob_decoder.%d.spatial" % layer)
    if config.final_norm:
        for stack in ("encoder", "traj_decoder", "prob_decoder"):
            layer_norm(stack + ".final_ln")

    if config.spatial_enabled:
        mlp("bias_mlp", config.feature_dim, config.num_heads)
    mlp("prob_head", d, config.num_modes)
    # one output layer per mode on a shared hidden layer
    shapes.extend([
        ("traj_head.w1", (d, hidden)),
        ("traj_head.b1", (hidden,)),
        ("traj_head.w2", (config.num_modes, hidden, 2)),
        ("traj_head.b2", (config.num_modes, 2)),
    ])
    if config.gaussian_head:
        mlp("sigma_head", d, 2)
    return shapes


def _initial_value(name, shape, rng):
    leaf = name.rsplit(".", 1)[-1]
    if name in ("intent_embeddings", "future_queries", "traj_head.w2"):
        return rng.normal(0.0, EMBEDDING_STD, size=shape)
    if name == "traj_head.b2":
        return np.zeros(shape)
    if leaf == "gain":
        return np.ones(shape)
    if len(shape) == 1:
        return np.zeros(shape)
    fan_in, fan_out = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelParams(object):
    """
    Named learnable tensors of one model, in a fixed order.

    Names are dotted paths such as "encoder.0.attn.wq"; `scope(prefix)`
    gives the tensors of one block keyed by the remaining suffix.
    `metadata` holds the extra checkpoint values the tensors were loaded
    with, so that saving them again reproduces the same file.
    """
    def __init__(self, tensors, metadata=None):
        self.metadata = dict(metadata or {})
        self._tensors = OrderedDict()
        for name, value in tensors.items() if hasattr(tensors, "items") else tensors:
            if not isinstance(value, Tensor):
                value = Tensor(value)
            self._tensors[name] = value

    @classmethod
    def from_arrays(cls, named_arrays, config=None, metadata=None):
        """
        Build parameters from (name, array) pairs; when `config` is given
        the names and shapes must be exactly those it implies.
        """
        params = cls(
            ((name, Tensor(array)) for name, array in named_arrays),
            metadata=metadata)
        if config is not None:
            params.check_config(config)
        return params

    def check_config(self, config):
        expected = parameter_shapes(config)
        actual = [(name, t.shape) for name, t in self._tensors.items()]
        if actual != expected:
            missing = set(dict(expected)) - set(self._tensors)
            extra = set(self._tensors) - set(dict(expected))
            if missing or extra:
                raise ConfigError(
                    "Parameters do not match configuration (missing %s, unexpected %s)" % (
                        sorted(missing), sorted(extra)))
            for (name, shape), (_, got) in zip(expected, actual):
                if shape != got:
                    raise DimensionError(
                        "Parameter %s has shape %s, configuration needs %s" % (
                            name, got, shape))
            raise ConfigError("Parameters are not in configuration order")

    def __getitem__(self, name):
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError("No parameter named %r" % (name,))

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def __iter__(self):
        return iter(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return list(self._tensors.items())

    def tensors(self):
        return list(self._tensors.values())

    def scope(self, prefix):
        prefix = prefix + "."
        return {
            name[len(prefix):]: tensor
            for name, tensor in self._tensors.items()
            if name.startswith(prefix)
        }

    def num_scalars(self):
        return int(sum(t.size for t in self._tensors.values()))

    def requires_grad_(self, flag=True):
        for tensor in self._tensors.values():
            tensor.requires_grad = flag
            tensor.grad = None
        return self

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.grad = None

    def copy(self):
        return ModelParams(
            ((name, Tensor(t.data)) for name, t in self._tensors.items()),
            metadata=self.metadata)

    def to_arrays(self):
        return OrderedDict(
            (name, t.data.copy()) for name, t in self._tensors.items())

    def all_finite(self):
        return all(np.all(np.isfinite(t.data)) for t in self._tensors.values())

    def __repr__(self):
        return "ModelParams(%d tensors, %d scalars)" % (len(self), self.num_scalars())


def init_params(config, seed=None):
    """
    Fresh parameters for `config`: Xavier-uniform matrices, zero biases,
    unit LayerNorm gains, and N(0, 0.02) intent/query embeddings and
    per-mode trajectory output weights.
    """
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(seed)
    params = ModelParams(
        (name, Tensor(_initial_value(name, shape, rng)))
        for name, shape in parameter_shapes(config))
    logger.debug(
        "Initialized %d parameter tensors (%d scalars) with seed %d",
        len(params), params.num_scalars(), seed)
    return params
