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
Who attends to whom in the spatial blocks, and how much each vehicle's
prediction moves when another vehicle is removed from the scene.
"""

from __future__ import print_function, division, absolute_import

import logging

import numpy as np
import pandas as pd

from .errors import UsageError
from .layers import AttentionRecorder
from .metrics import horizon_frame
from .model import forward, select_best
from .scene import normalize_scene

logger = logging.getLogger(__name__)

ATTENTION_COLUMNS = ["query_id", "key_id", "influence"]
COUNTERFACTUAL_COLUMNS = ["removed_id", "vehicle_id", "horizon_s", "delta_m", "prob_tv"]


class AttentionRecord(object):
    """
    Spatial attention of one head in one layer at one frame.

    weights : array (N, N), row i is query vehicle i over key vehicles
    value_norms : array (N,), L2 norm of each key's value vector
    influence : array (N, N), weights * value_norms renormalized per row
    """
    def __init__(self, layer, head, t, weights, value_norms, influence):
        self.layer = layer
        self.head = head
        self.t = t
        self.weights = weights
        self.value_norms = value_norms
        self.influence = influence

    def __repr__(self):
        return "AttentionRecord(layer=%d, head=%d, t=%d)" % (
            self.layer, self.head, self.t)


def influence_matrix(weights, value_norms, present):
    """
    Row-normalized weights * value norms; rows of absent queries and
    columns of absent keys are zero.
    """
    influence = weights * value_norms[None, :]
    influence = np.where(present[:, None] & present[None, :], influence, 0.0)
    totals = influence.sum(axis=1, keepdims=True)
    safe = np.where(totals > 0, totals, 1.0)
    return np.where(totals > 0, influence / safe, 0.0)


def _expand(matrix, rows, n):
    full = np.zeros((n,) * matrix.ndim)
    full[np.ix_(*([rows] * matrix.ndim))] = matrix
    return full


def export_attention(scene, params, config):
    """
    Spatial attention records of every layer, head and frame, plus the
    N x N summary: each query's influence rows averaged over heads,
    layers and the frames where the query is present.

    Returns (records, summary). Vehicles without history have zero rows
    and columns.
    """
    if not config.spatial_enabled:
        raise UsageError("Attention export needs a model with spatial attention")
    normalized, _ = normalize_scene(scene)
    recorder = AttentionRecorder()
    pred = forward(normalized, params, config, recorder=recorder)
    rows = np.nonzero(pred.valid)[0]
    n = scene.num_vehicles

    records = []
    totals = np.zeros((n, n))
    counts = np.zeros(n)
    for entry in recorder.entries:
        presence = entry["presence"]
        weights = entry["weights"]
        value_norms = entry["value_norms"]
        for t in range(weights.shape[0]):
            present = presence[:, t]
            if not present.any():
                continue
            for head in range(weights.shape[1]):
                w = np.where(present[:, None] & present[None, :], weights[t, head], 0.0)
                influence = influence_matrix(w, value_norms[t, head], present)
                full_influence = _expand(influence, rows, n)
                records.append(AttentionRecord(
                    layer=entry["layer"],
                    head=head,
                    t=t,
                    weights=_expand(w, rows, n),
                    value_norms=_expand(
                        np.where(present, value_norms[t, head], 0.0), rows, n),
                    influence=full_influence))
                totals += full_influence
                counts[rows[present]] += 1
    summary = np.zeros((n, n))
    seen = counts > 0
    summary[seen] = totals[seen] / counts[seen][:, None]
    logger.info(
        "Exported %d attention records for %d vehicles", len(records), n)
    return records, summary


def attention_table(summary, ids):
    rows = [
        {"query_id": ids[i], "key_id": ids[j], "influence": float(summary[i, j])}
        for i in range(len(ids))
        for j in range(len(ids))
    ]
    return pd.DataFrame(rows, columns=ATTENTION_COLUMNS)


def write_attention_summary(summary, ids, path):
    attention_table(summary, ids).to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote attention summary to %s", path)
    return path


def counterfactual_remove(
        scene,
        vehicle_id,
        params,
        config,
        horizons=None,
        sample_rate_hz=None):
    """
    Predict the scene with and without vehicle `vehicle_id` and report,
    for every other vehicle, how far its most probable trajectory moves at
    each horizon and the total variation between its mode probabilities.

    Both runs share the same normalization, so deltas are in meters of the
    original frame. Returns a DataFrame with columns
    removed_id, vehicle_id, horizon_s, delta_m, prob_tv.
    """
    if scene.num_vehicles < 2:
        raise UsageError("Cannot remove the only vehicle of a scene")
    removed = scene.index_of(vehicle_id)
    rate = sample_rate_hz or scene.sample_rate_hz
    if rate is None:
        raise UsageError("Scene has no sample rate; pass sample_rate_hz")
    if horizons is None:
        horizons = list(range(1, scene.pred_frames // rate + 1))

    normalized, _ = normalize_scene(scene)
    base = forward(normalized, params, config)
    without = forward(normalized.with_vehicle_masked(removed), params, config)
    base_best, _ = select_best(base)
    without_best, _ = select_best(without)
    base_probabilities = base.probabilities.data
    without_probabilities = without.probabilities.data

    rows = []
    for i in range(scene.num_vehicles):
        if i == removed or not base.valid[i]:
            continue
        tv = 0.5 * float(np.sum(np.abs(without_probabilities[i] - base_probabilities[i])))
        for h in horizons:
            frame = horizon_frame(h, rate, scene.pred_frames)
            delta = without_best[i, frame] - base_best[i, frame]
            rows.append({
                "removed_id": vehicle_id,
                "vehicle_id": scene.ids[i],
                "horizon_s": h,
                "delta_m": float(np.sqrt(np.sum(delta ** 2))),
                "prob_tv": tv,
            })
    return pd.DataFrame(rows, columns=COUNTERFACTUAL_COLUMNS)


def write_counterfactual(table, path):
    table.to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote %d counterfactual rows to %s", len(table), path)
    return path
