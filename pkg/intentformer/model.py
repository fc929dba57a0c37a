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
The two-track predictor: a shared temporal encoder feeding a trajectory
decoder (K ordered modes built by cumulative summation) and a
probability decoder (temporal + spatial attention) scoring the modes.
"""

from __future__ import print_function, division, absolute_import

import logging

import numpy as np

from . import ops
from .errors import DegenerateInputError, DimensionError
from .scene import POSITION_SLICE
from .layers import (
    embed_inputs,
    mlp,
    mode_head,
    positional_encoding,
    relative_bias,
    spatial_attention_block,
    temporal_attention_block,
)
from .tensor import Tensor

logger = logging.getLogger(__name__)


class ModePrediction(object):
    """
    K candidate futures per vehicle and their probabilities.

    trajectories : Tensor (N, K, pred_frames, 2)
    probabilities : Tensor (N, K), rows sum to 1
    sigma : Tensor (N, K, pred_frames, 2) or None
    offsets : Tensor (N, K, pred_frames, 2), per-mode blocks before summation
    valid : bool array (N,), False for vehicles without history, whose
        outputs are placeholders (zero trajectories, uniform probabilities)
    """
    def __init__(
            self,
            trajectories,
            probabilities,
            sigma=None,
            offsets=None,
            valid=None,
            ids=None):
        self.trajectories = trajectories
        self.probabilities = probabilities
        self.sigma = sigma
        self.offsets = offsets
        if valid is None:
            valid = np.ones(probabilities.shape[0], dtype=bool)
        self.valid = np.asarray(valid, dtype=bool)
        self.ids = tuple(ids) if ids is not None else None

    @property
    def num_vehicles(self):
        return self.probabilities.shape[0]

    @property
    def num_modes(self):
        return self.probabilities.shape[1]

    def __repr__(self):
        return "ModePrediction(N=%d, K=%d, sigma=%s)" % (
            self.num_vehicles, self.num_modes, self.sigma is not None)


def _final_norm(x, params, stack, config):
    if not config.final_norm:
        return x
    return ops.layer_norm(
        x,
        params[stack + ".final_ln.gain"],
        params[stack + ".final_ln.bias"],
        eps=config.layer_norm_eps)


def encode(scene, params, config):
    """Shared temporal encoder over history frames: (N, hist_frames, d_model)"""
    x = embed_inputs(scene, params, config)
    for layer in range(config.enc_layers):
        x = temporal_attention_block(
            x, scene.history_mask, params.scope("encoder.%d" % layer), config)
    return _final_norm(x, params, "encoder", config)


def integrate_offsets(offsets, last_positions, displacement=True):
    """
    Turn per-mode offset blocks (N, K, T, 2) into absolute trajectories.

    Mode k is the cumulative sum of the blocks of modes 0..k. With
    `displacement` the blocks are per-frame displacements summed over
    time; otherwise they are offsets from the last observed position.
    """
    modes = ops.cumsum(offsets, axis=1)
    if displacement:
        modes = ops.cumsum(modes, axis=2)
    origin = np.asarray(last_positions, dtype=np.float64)[:, None, None, :]
    return ops.add(modes, origin)


def constant_velocity_prior(scene, pred_frames):
    """
    Displacement from the last observed position under constant velocity,
    (N, pred_frames, 2). The velocity is the position change between the
    last two observed history frames per frame elapsed; vehicles observed
    once stay put.
    """
    n = scene.num_vehicles
    last = scene.last_history_index()
    earlier = scene.history_mask.copy()
    earlier[np.arange(n), np.maximum(last, 0)] = False
    frames = np.arange(scene.hist_frames)
    prev = np.where(earlier, frames, -1).max(axis=1)
    positions = scene.features[:, :scene.hist_frames, POSITION_SLICE]
    rows = np.arange(n)
    velocity = np.zeros((n, 2))
    moving = (prev >= 0) & (last >= 0)
    velocity[moving] = (
        positions[rows[moving], last[moving]] - positions[rows[moving], prev[moving]]
    ) / (last[moving] - prev[moving])[:, None]
    steps = (scene.hist_frames - last)[:, None] + np.arange(pred_frames)[None, :]
    return velocity[:, None, :] * steps[:, :, None]


def _decoder_tokens(encoder_out, scene, params, config):
    """
    Per-mode decoder input: history encodings followed by the learned
    future queries, both carrying e_intent[k]. Returns (tokens (N*K, T, d), mask).
    """
    n, hist, d = encoder_out.shape
    k = config.num_modes
    intents = ops.reshape(params["intent_embeddings"], (1, k, 1, d))
    history = ops.add(ops.reshape(encoder_out, (n, 1, hist, d)), intents)
    pe = positional_encoding(config.total_frames, d).data[hist:]
    queries = ops.add(params["future_queries"], pe)
    future = ops.add(
        ops.broadcast_to(ops.reshape(queries, (1, 1, config.pred_frames, d)),
                         (n, k, config.pred_frames, d)),
        intents)
    tokens = ops.concat([ops.broadcast_to(history, (n, k, hist, d)), future], axis=2)
    tokens = ops.reshape(tokens, (n * k, config.total_frames, d))
    mask = np.concatenate(
        [scene.history_mask, np.ones((n, config.pred_frames), dtype=bool)], axis=1)
    mask = np.repeat(mask, k, axis=0)
    return tokens, mask


def decode_future(encoder_out, scene, params, config):
    """Decoder states of the future query tokens: (N, K, pred_frames, d_model)"""
    n, hist, d = encoder_out.shape
    x, mask = _decoder_tokens(encoder_out, scene, params, config)
    for layer in range(config.traj_dec_layers):
        x = temporal_attention_block(
            x, mask, params.scope("traj_decoder.%d" % layer), config)
    x = _final_norm(x, params, "traj_decoder", config)
    x = ops.getitem(x, (slice(None), slice(hist, None)))
    return ops.reshape(x, (n, config.num_modes, config.pred_frames, d))


def trajectory_decoder(encoder_out, scene, params, config, states=None):
    """
    K ordered mode trajectories in the scene frame.

    The K decoder passes share their attention weights and differ by
    e_intent[k]; they are batched along the leading axis. Each mode has
    its own output layer in the head. With a motion prior the offsets are residuals around it.
    Returns (trajectories, offsets), both (N, K, pred_frames, 2).
    """
    if states is None:
        states = decode_future(encoder_out, scene, params, config)
    offsets = mode_head(states, params.scope("traj_head"))
    trajectories = integrate_offsets(
        offsets, scene.last_observed_positions(), config.displacement)
    if config.motion_prior == "constant_velocity":
        prior = constant_velocity_prior(scene, config.pred_frames)
        trajectories = ops.add(trajectories, prior[:, None])
    return trajectories, offsets


def probability_decoder(encoder_out, scene, bias, params, config, recorder=None):
    """
    Mode probabilities (N, K): alternating temporal and spatial blocks over
    the history, masked mean over time, MLP to K logits, softmax.
    """
    mask = scene.history_mask
    empty = ~mask.any(axis=1)
    if empty.any():
        raise DegenerateInputError(
            "Probability decoder got %d vehicle(s) with no history frame" % empty.sum())
    if config.spatial_enabled and bias is None:
        bias = relative_bias(scene, params, config)
    x = encoder_out
    for layer in range(config.prob_dec_layers):
        prefix = "prob_decoder.%d" % layer
        x = temporal_attention_block(x, mask, params.scope(prefix + ".temporal"), config)
        if config.spatial_enabled:
            if recorder is not None:
                recorder.start_layer(layer, mask)
            x = spatial_attention_block(
                x, mask, bias, params.scope(prefix + ".spatial"), config,
                recorder=recorder)
    x = _final_norm(x, params, "prob_decoder", config)
    pooled = ops.mean(x, axis=1, mask=mask[:, :, None])
    logits = mlp(pooled, params.scope("prob_head"))
    return ops.softmax(logits, axis=-1)


def _scatter_rows(tensor, valid, fill=0.0):
    """Expand rows of `tensor` for valid vehicles back to all N vehicles"""
    if valid.all():
        return tensor
    source = np.maximum(np.cumsum(valid) - 1, 0)
    gathered = ops.getitem(tensor, source)
    shape = (len(valid),) + (1,) * (tensor.ndim - 1)
    keep = valid.astype(np.float64).reshape(shape)
    out = ops.mul(gathered, keep)
    if fill:
        out = ops.add(out, (1.0 - keep) * fill)
    return out


def forward(scene, params, config, recorder=None):
    """
    Predict K trajectories and their probabilities for every vehicle.

    Vehicles with no observed history frame are left out of every
    computation; their rows hold placeholders and are flagged invalid.
    """
    if (scene.hist_frames, scene.pred_frames) != (config.hist_frames, config.pred_frames):
        raise DimensionError(
            "Scene frames %d/%d do not match the model's %d/%d" % (
                scene.hist_frames, scene.pred_frames,
                config.hist_frames, config.pred_frames))
    valid = scene.has_history()
    if not valid.any():
        raise DegenerateInputError("Scene has no vehicle with a history frame")
    active = scene
    if not valid.all():
        rows = np.nonzero(valid)[0]
        logger.debug("Excluding %d vehicle(s) without history", (~valid).sum())
        active = scene.replace(
            features=scene.features[rows],
            mask=scene.mask[rows],
            ids=[scene.ids[i] for i in rows])

    encoded = encode(active, params, config)
    states = decode_future(encoded, active, params, config)
    trajectories, offsets = trajectory_decoder(
        encoded, active, params, config, states=states)
    bias = relative_bias(active, params, config) if config.spatial_enabled else None
    probabilities = probability_decoder(
        encoded, active, bias, params, config, recorder=recorder)
    sigma = None
    if config.gaussian_head:
        sigma = ops.floor_at(
            ops.softplus(mlp(states, params.scope("sigma_head"))), config.sigma_floor)
        sigma = _scatter_rows(sigma, valid, fill=1.0)

    return ModePrediction(
        trajectories=_scatter_rows(trajectories, valid),
        probabilities=_scatter_rows(probabilities, valid, fill=1.0 / config.num_modes),
        sigma=sigma,
        offsets=_scatter_rows(offsets, valid),
        valid=valid,
        ids=scene.ids)


def select_best(pred):
    """
    Most probable mode per vehicle (lowest index on ties).

    Returns (trajectories (N, pred_frames, 2) as an array, indices (N,)).
    """
    probabilities = pred.probabilities
    if isinstance(probabilities, Tensor):
        probabilities = probabilities.data
    best = np.argmax(probabilities, axis=1)
    trajectories = pred.trajectories
    if isinstance(trajectories, Tensor):
        trajectories = trajectories.data
    return trajectories[np.arange(len(best)), best], best
