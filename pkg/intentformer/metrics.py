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
Displacement metrics at a time horizon and whole-dataset evaluation
reports, computed in the original (denormalized) coordinates.
"""

from __future__ import print_function, division, absolute_import

from collections import OrderedDict
import json
import logging

import numpy as np
import pandas as pd

from .errors import DegenerateInputError, DimensionError, UsageError
from .model import forward, select_best
from .scene import dataset_digest, normalize_scene

logger = logging.getLogger(__name__)


def horizon_frame(horizon_s, sample_rate_hz, pred_frames=None):
    """Index into the prediction window of the frame `horizon_s` seconds ahead"""
    frame = int(round(horizon_s * sample_rate_hz)) - 1
    if frame < 0 or (pred_frames is not None and frame >= pred_frames):
        raise UsageError(
            "Horizon %s s at %s Hz is outside the %s-frame prediction window" % (
                horizon_s, sample_rate_hz, pred_frames))
    return frame


def _horizon_errors(pred_best, gt, mask, horizon_s, sample_rate_hz, average):
    pred_best = np.asarray(pred_best, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred_best.shape != gt.shape or pred_best.shape[:2] != mask.shape:
        raise DimensionError(
            "Prediction %s, ground truth %s and mask %s do not line up" % (
                pred_best.shape, gt.shape, mask.shape))
    frame = horizon_frame(horizon_s, sample_rate_hz, gt.shape[1])
    if average:
        window = slice(0, frame + 1)
    else:
        window = slice(frame, frame + 1)
    valid = mask[:, window]
    if not valid.any():
        raise DegenerateInputError(
            "No vehicle is observed at the %s s horizon" % horizon_s)
    return (pred_best[:, window] - gt[:, window])[valid]


def rmse_T(pred_best, gt, mask, horizon_s, sample_rate_hz=10, average=False):
    """
    Root mean squared L2 displacement at the horizon frame, over vehicles
    observed there. With `average`, pools every observed frame up to the
    horizon instead.

    pred_best, gt : arrays (N, pred_frames, 2)
    mask : bool array (N, pred_frames)
    """
    errors = _horizon_errors(pred_best, gt, mask, horizon_s, sample_rate_hz, average)
    return float(np.sqrt(np.mean(np.sum(errors ** 2, axis=1))))


def mae_T(pred_best, gt, mask, horizon_s, sample_rate_hz=10, average=False):
    """Mean L1 displacement at the horizon frame (see rmse_T)"""
    errors = _horizon_errors(pred_best, gt, mask, horizon_s, sample_rate_hz, average)
    return float(np.mean(np.sum(np.abs(errors), axis=1)))


class EvalReport(object):
    """
    Final-frame and horizon-averaged RMSE/MAE (meters) for each horizon in
    whole seconds, with per-vehicle errors and provenance.
    """
    def __init__(
            self,
            label,
            rmse_by_horizon,
            mae_by_horizon,
            rmse_avg_by_horizon,
            mae_avg_by_horizon,
            per_vehicle,
            config_fingerprint=None,
            data_digest=None,
            best_probability_range=None):
        self.label = label
        self.rmse_by_horizon = OrderedDict(rmse_by_horizon)
        self.mae_by_horizon = OrderedDict(mae_by_horizon)
        self.rmse_avg_by_horizon = OrderedDict(rmse_avg_by_horizon)
        self.mae_avg_by_horizon = OrderedDict(mae_avg_by_horizon)
        self.per_vehicle = per_vehicle
        self.config_fingerprint = config_fingerprint
        self.data_digest = data_digest
        self.best_probability_range = best_probability_range

    @property
    def horizons(self):
        return list(self.rmse_by_horizon)

    def final_rmse(self):
        return self.rmse_by_horizon[max(self.rmse_by_horizon)]

    def final_mae(self):
        return self.mae_by_horizon[max(self.mae_by_horizon)]

    def to_dict(self):
        def keyed(d):
            return OrderedDict(("%g" % h, v) for h, v in d.items())
        return OrderedDict([
            ("label", self.label),
            ("config_fingerprint", self.config_fingerprint),
            ("data_digest", self.data_digest),
            ("rmse_by_horizon", keyed(self.rmse_by_horizon)),
            ("mae_by_horizon", keyed(self.mae_by_horizon)),
            ("rmse_avg_by_horizon", keyed(self.rmse_avg_by_horizon)),
            ("mae_avg_by_horizon", keyed(self.mae_avg_by_horizon)),
            ("best_probability_range", self.best_probability_range),
            ("num_vehicles", len(
                self.per_vehicle[["scene", "vehicle_id"]].drop_duplicates())),
        ])

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def format_text(self):
        lines = ["%s  (config %s)" % (self.label, self.config_fingerprint)]
        lines.append("%-8s %12s %12s %12s %12s" % (
            "horizon", "RMSE", "MAE", "RMSE(avg)", "MAE(avg)"))
        for h in self.horizons:
            lines.append("%-8s %12.4f %12.4f %12.4f %12.4f" % (
                "%gs" % h,
                self.rmse_by_horizon[h],
                self.mae_by_horizon[h],
                self.rmse_avg_by_horizon[h],
                self.mae_avg_by_horizon[h]))
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return "EvalReport(label=%s, final RMSE=%.4f, final MAE=%.4f)" % (
            self.label, self.final_rmse(), self.final_mae())


def _per_vehicle_table(best, gt, mask, vehicle_ids, horizons, sample_rate_hz):
    rows = []
    for h in horizons:
        frame = horizon_frame(h, sample_rate_hz, gt.shape[1])
        for i in np.nonzero(mask[:, frame])[0]:
            error = best[i, frame] - gt[i, frame]
            rows.append({
                "scene": vehicle_ids[i][0],
                "vehicle_id": vehicle_ids[i][1],
                "horizon_s": h,
                "l2": float(np.sqrt(np.sum(error ** 2))),
                "l1": float(np.sum(np.abs(error))),
            })
    return pd.DataFrame(rows, columns=["scene", "vehicle_id", "horizon_s", "l2", "l1"])


def build_report(
        label,
        best,
        gt,
        mask,
        vehicle_ids,
        horizons,
        sample_rate_hz,
        scenes=(),
        config_fingerprint=None,
        best_probability_range=None):
    """EvalReport from pooled (vehicles, pred_frames, 2) arrays"""
    rmse, mae, rmse_avg, mae_avg = {}, {}, {}, {}
    for h in horizons:
        try:
            rmse[h] = rmse_T(best, gt, mask, h, sample_rate_hz)
            mae[h] = mae_T(best, gt, mask, h, sample_rate_hz)
            rmse_avg[h] = rmse_T(best, gt, mask, h, sample_rate_hz, average=True)
            mae_avg[h] = mae_T(best, gt, mask, h, sample_rate_hz, average=True)
        except DegenerateInputError:
            logger.warning("%s: no vehicle observed at %s s, horizon skipped", label, h)
    if not rmse:
        raise DegenerateInputError("%s: no horizon has an observed vehicle" % label)
    per_vehicle = _per_vehicle_table(
        best, gt, mask, vehicle_ids, sorted(rmse), sample_rate_hz)
    report = EvalReport(
        label=label,
        rmse_by_horizon=rmse,
        mae_by_horizon=mae,
        rmse_avg_by_horizon=rmse_avg,
        mae_avg_by_horizon=mae_avg,
        per_vehicle=per_vehicle,
        config_fingerprint=config_fingerprint,
        data_digest=dataset_digest(scenes) if scenes else None,
        best_probability_range=best_probability_range)
    logger.info("%r", report)
    return report


def _scene_rate(scenes, sample_rate_hz):
    if sample_rate_hz is not None:
        return sample_rate_hz
    rates = set(scene.sample_rate_hz for scene in scenes)
    rates.discard(None)
    if len(rates) != 1:
        raise UsageError(
            "Pass sample_rate_hz explicitly, scenes have rates %s" % sorted(rates))
    return rates.pop()


def _default_horizons(scenes, rate):
    pred_s = scenes[0].pred_frames // rate
    return list(range(1, pred_s + 1))


def _pool(scenes, predict):
    best_rows, gt_rows, mask_rows, ids = [], [], [], []
    for scene in scenes:
        best, keep = predict(scene)
        rows = np.nonzero(keep)[0]
        best_rows.append(best[rows])
        gt_rows.append(scene.future_positions[rows])
        mask_rows.append(scene.future_mask[rows])
        ids.extend((scene.source, scene.ids[i]) for i in rows)
    return (
        np.concatenate(best_rows),
        np.concatenate(gt_rows),
        np.concatenate(mask_rows),
        ids)


def evaluate(
        scenes,
        params,
        config,
        horizons=None,
        label="MV_K",
        sample_rate_hz=None):
    """
    Predict every scene (normalized, then mapped back) and report the
    errors of each vehicle's most probable mode, pooled over all scenes.
    """
    scenes = list(scenes)
    if not scenes:
        raise DegenerateInputError("Nothing to evaluate")
    rate = _scene_rate(scenes, sample_rate_hz)
    if horizons is None:
        horizons = _default_horizons(scenes, rate)
    best_probabilities = []

    def predict(scene):
        normalized, transform = normalize_scene(scene)
        pred = forward(normalized, params, config)
        best, index = select_best(pred)
        probabilities = pred.probabilities.data[np.arange(len(index)), index]
        best_probabilities.extend(probabilities[pred.valid].tolist())
        return transform.invert(best), pred.valid

    best, gt, mask, ids = _pool(scenes, predict)
    return build_report(
        label, best, gt, mask, ids, horizons, rate,
        scenes=scenes,
        config_fingerprint=config.fingerprint(),
        best_probability_range=[min(best_probabilities), max(best_probabilities)])


def constant_velocity_prediction(scene, sample_rate_hz):
    """
    Extrapolate each vehicle from its last observed position with its last
    observed velocity. Returns (trajectories (N, pred_frames, 2), valid).
    """
    last = scene.last_history_index()
    valid = last >= 0
    rows = np.arange(scene.num_vehicles)
    safe_last = np.maximum(last, 0)
    position = scene.features[rows, safe_last, 0:2]
    velocity = scene.features[rows, safe_last, 2:4]
    future_index = scene.hist_frames + np.arange(scene.pred_frames)
    dt = (future_index[None, :] - safe_last[:, None]) / float(sample_rate_hz)
    trajectories = position[:, None, :] + velocity[:, None, :] * dt[:, :, None]
    return trajectories, valid


def evaluate_constant_velocity(scenes, horizons=None, sample_rate_hz=None, label="CV"):
    """Same report for the constant-velocity reference predictor"""
    scenes = list(scenes)
    if not scenes:
        raise DegenerateInputError("Nothing to evaluate")
    rate = _scene_rate(scenes, sample_rate_hz)
    if horizons is None:
        horizons = _default_horizons(scenes, rate)
    best, gt, mask, ids = _pool(
        scenes, lambda scene: constant_velocity_prediction(scene, rate))
    return build_report(label, best, gt, mask, ids, horizons, rate, scenes=scenes)
