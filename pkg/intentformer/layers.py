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

"""
Building blocks shared by the encoder and both decoders: input
embedding, positional encoding, masked multi-head attention over time
or over vehicles, and the pairwise relative bias.
"""

from __future__ import print_function, division, absolute_import

import logging

import numpy as np

from . import ops
from .errors import ConfigError, DegenerateInputError, DimensionError, UsageError
from .scene import FEATURE_SCALES
from .tensor import Tensor

logger = logging.getLogger(__name__)


def positional_encoding(total_frames, d_model):
    """
    Sinusoidal encoding: PE[t, 2i] = sin(t / 10000^(2i/d)) and
    PE[t, 2i+1] = cos(t / 10000^(2i/d)).
    """
    if d_model % 2:
        raise ConfigError("Positional encoding needs an even d_model, got %d" % d_model)
    t = np.arange(total_frames, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angles = t / np.power(10000.0, 2.0 * i / d_model)
    pe = np.zeros((total_frames, d_model))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return Tensor(pe)


def mlp(x, weights):
    """Two-layer perceptron with a GELU in between; `weights` holds w1/b1/w2/b2"""
    hidden = ops.gelu(ops.linear(x, weights["w1"], weights["b1"]))
    return ops.linear(hidden, weights["w2"], weights["b2"])


def mode_head(x, weights):
    """
    MLP over (N, K, T, d) states whose output layer is separate for each
    mode: `w2` is (K, hidden, n_out) and `b2` is (K, n_out).
    """
    hidden = ops.gelu(ops.linear(x, weights["w1"], weights["b1"]))
    k, _, n_out = weights["w2"].shape
    if x.ndim < 3 or x.shape[-3] != k:
        raise DimensionError(
            "mode_head needs states with %d modes on axis -3, got %s" % (k, x.shape))
    out = ops.matmul(hidden, weights["w2"])
    return ops.add(out, ops.reshape(weights["b2"], (k, 1, n_out)))


def input_features(scene, config):
    """History features of the configured channels, zero where masked"""
    features = scene.history_features[:, :, config.feature_indices]
    return np.where(scene.history_mask[:, :, None], features, 0.0)


def embed_inputs(scene, params, config, intent_index=None):
    """
    Embed each vehicle's history frames: MLP(features / FEATURE_SCALES)
    + PE, plus the learned intent vector e_intent[k] on every frame when
    `intent_index` is given.

    Returns a Tensor of shape (N, hist_frames, d_model). Masked frames
    are embedded from zeroed features; attention masks exclude them.
    """
    if intent_index is not None and not 0 <= intent_index < config.num_modes:
        raise UsageError(
            "intent_index %d is outside 0..%d" % (intent_index, config.num_modes - 1))
    if scene.hist_frames != config.hist_frames:
        raise DimensionError(
            "Scene has %d history frames, model expects %d" % (
                scene.hist_frames, config.hist_frames))
    scales = FEATURE_SCALES[list(config.feature_indices)]
    x = Tensor(input_features(scene, config) / scales)
    embedded = mlp(x, params.scope("input_mlp"))
    pe = positional_encoding(config.total_frames, config.d_model)
    embedded = ops.add(embedded, pe.data[:config.hist_frames])
    if intent_index is not None:
        embedded = ops.add(embedded, params["intent_embeddings"][intent_index])
    return embedded


def _split_heads(x, num_heads):
    batch, length, d = x.shape
    x = ops.reshape(x, (batch, length, num_heads, d // num_heads))
    return ops.transpose(x, (0, 2, 1, 3))


def multi_head_attention(x, weights, num_heads, key_mask, bias=None, recorder=None):
    """
    Scaled dot-product self-attention over axis 1 of x (batch, length, d).

    key_mask : bool array (batch, length)
        Keys that may be attended to. Masked keys get a vanishing logit
        before the softmax and an exact zero weight after it.

    bias : Tensor broadcastable to (batch, heads, length, length), optional
        Added to the logits.
    """
    batch, length, d = x.shape
    head_dim = d // num_heads
    q = _split_heads(ops.matmul(x, weights["attn.wq"]), num_heads)
    k = _split_heads(ops.matmul(x, weights["attn.wk"]), num_heads)
    v = _split_heads(ops.matmul(x, weights["attn.wv"]), num_heads)

    scores = ops.div(ops.matmul(q, ops.swapaxes(k, -1, -2)), np.sqrt(head_dim))
    if bias is not None:
        scores = ops.add(scores, bias)
    blocked = ~np.asarray(key_mask, dtype=bool)[:, None, None, :]
    scores = ops.masked_fill(scores, blocked, ops.MASKED_LOGIT)
    attention = ops.masked_fill(ops.softmax(scores, axis=-1), blocked, 0.0)
    if recorder is not None:
        recorder.record(attention.data, np.linalg.norm(v.data, axis=-1))

    context = ops.transpose(ops.matmul(attention, v), (0, 2, 1, 3))
    context = ops.reshape(context, (batch, length, d))
    return ops.linear(context, weights["attn.wo"], weights["attn.bo"])


def feed_forward(x, weights):
    hidden = ops.gelu(ops.linear(x, weights["ffn.w1"], weights["ffn.b1"]))
    return ops.linear(hidden, weights["ffn.w2"], weights["ffn.b2"])


def _layer_norm(x, weights, name, config):
    return ops.layer_norm(
        x, weights[name + ".gain"], weights[name + ".bias"], eps=config.layer_norm_eps)


def temporal_attention_block(x, time_mask, weights, config):
    """
    Pre-LN residual block attending across each vehicle's own time axis:
    x + MHA(LN(x)), then + FFN(LN(x)).

    x : Tensor (N, T, d_model)
    time_mask : bool array (N, T), True on valid frames
    weights : dict of the block's tensors (see ModelParams.scope)
    """
    time_mask = np.asarray(time_mask, dtype=bool)
    if time_mask.shape != x.shape[:2]:
        raise DimensionError(
            "Time mask shape %s does not match input %s" % (time_mask.shape, x.shape))
    empty = ~time_mask.any(axis=1)
    if empty.any():
        raise DegenerateInputError(
            "Temporal attention over %d sequence(s) with no valid frame" % empty.sum())
    attended = multi_head_attention(
        _layer_norm(x, weights, "ln1", config),
        weights,
        config.num_heads,
        key_mask=time_mask)
    x = ops.add(x, attended)
    return ops.add(x, feed_forward(_layer_norm(x, weights, "ln2", config), weights))


def pairwise_differences(scene, config):
    """
    Feature differences s_i - s_j for every vehicle pair over their common
    history frames, at the last such frame or averaged over all of them.

    Returns (deltas (N, N, F), valid (N, N)); invalid pairs have zeros.
    """
    features = input_features(scene, config)
    present = scene.history_mask
    common = present[:, None, :] & present[None, :, :]
    valid = common.any(axis=2)
    differences = features[:, None, :, :] - features[None, :, :, :]
    if config.bias_reference == "mean":
        counts = np.maximum(common.sum(axis=2), 1)[:, :, None]
        deltas = np.where(common[:, :, :, None], differences, 0.0).sum(axis=2) / counts
    else:
        frames = common.shape[2]
        last = frames - 1 - np.argmax(common[:, :, ::-1], axis=2)
        deltas = np.take_along_axis(
            differences, last[:, :, None, None], axis=2)[:, :, 0, :]
    deltas = np.where(valid[:, :, None], deltas, 0.0)
    return deltas, valid


def relative_bias(scene, params, config):
    """
    Per-head attention bias B[h, i, j] = MLP(s_i - s_j).

    Pairs without a common present history frame get a zero bias.
    """
    deltas, valid = pairwise_differences(scene, config)
    if not valid.all():
        logger.warning(
            "%d vehicle pair(s) share no history frame; their bias is 0",
            int((~valid).sum()))
    bias = mlp(Tensor(deltas), params.scope("bias_mlp"))
    bias = ops.mul(bias, valid[:, :, None].astype(np.float64))
    return ops.transpose(bias, (2, 0, 1))


def spatial_attention_block(x, presence_mask, bias, weights, config, recorder=None):
    """
    Pre-LN residual block attending across vehicles at each frame with
    logits QK^T / sqrt(d_head) + B. Vehicles absent at a frame are
    masked out as keys and left unchanged as queries.

    x : Tensor (N, T, d_model)
    presence_mask : bool array (N, T)
    bias : Tensor (H, N, N) or None
    """
    presence_mask = np.asarray(presence_mask, dtype=bool)
    if presence_mask.shape != x.shape[:2]:
        raise DimensionError(
            "Presence mask shape %s does not match input %s" % (
                presence_mask.shape, x.shape))
    n = x.shape[0]
    if bias is not None and bias.shape != (config.num_heads, n, n):
        raise DimensionError(
            "Bias shape %s does not match (%d, %d, %d)" % (
                bias.shape, config.num_heads, n, n))
    frames_first = ops.transpose(x, (1, 0, 2))
    presence = presence_mask.T
    query_scale = presence[:, :, None].astype(np.float64)
    attended = multi_head_attention(
        _layer_norm(frames_first, weights, "ln1", config),
        weights,
        config.num_heads,
        key_mask=presence,
        bias=bias,
        recorder=recorder)
    frames_first = ops.add(frames_first, ops.mul(attended, query_scale))
    update = feed_forward(_layer_norm(frames_first, weights, "ln2", config), weights)
    frames_first = ops.add(frames_first, ops.mul(update, query_scale))
    return ops.transpose(frames_first, (1, 0, 2))


class AttentionRecorder(object):
    """
    Collects the spatial attention weights and value norms of one forward
    pass, one entry per spatial layer.
    """
    def __init__(self):
        self.entries = []
        self._layer = None
        self._presence = None

    def start_layer(self, layer, presence_mask):
        self._layer = layer
        self._presence = np.asarray(presence_mask, dtype=bool)

    def record(self, weights, value_norms):
        """weights (T, H, N, N) and value_norms (T, H, N) from one block"""
        assert self._layer is not None, "record() called outside a spatial layer"
        self.entries.append({
            "layer": self._layer,
            "weights": np.array(weights),
            "value_norms": np.array(value_norms),
            "presence": self._presence,
        })
        self._layer = None

    def __len__(self):
        return len(self.entries)
