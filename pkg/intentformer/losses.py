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

"""Winner-takes-all trajectory loss, mode classification loss and Gaussian NLL"""

from __future__ import print_function, division, absolute_import

import numpy as np

from . import ops
from .errors import DegenerateInputError, DimensionError, UsageError

HALF_LOG_TWO_PI = 0.5 * np.log(2.0 * np.pi)


def _eligible(pred, future_mask):
    future_mask = np.asarray(future_mask, dtype=bool)
    if future_mask.shape[0] != pred.num_vehicles:
        raise DimensionError(
            "Future mask covers %d vehicles, prediction has %d" % (
                future_mask.shape[0], pred.num_vehicles))
    return future_mask.any(axis=1) & pred.valid


def wta_loss(pred, future_positions, future_mask):
    """
    Winner-takes-all displacement loss.

    Each mode's error is the masked mean over future frames of the squared
    displacement to ground truth; each vehicle contributes the error of its
    best mode, so only that mode receives gradient.

    Returns (loss, winner_index); winner_index is -1 for vehicles left out
    because they have no valid future frame (or no history).
    """
    eligible = _eligible(pred, future_mask)
    if not eligible.any():
        raise DegenerateInputError("No vehicle has a valid future frame")
    rows = np.nonzero(eligible)[0]
    trajectories = ops.getitem(pred.trajectories, rows)
    target = np.asarray(future_positions, dtype=np.float64)[rows][:, None]
    squared = ops.sum(ops.power(ops.sub(trajectories, target), 2), axis=-1)
    mask = np.asarray(future_mask, dtype=bool)[rows][:, None, :]
    errors = ops.mean(squared, axis=2, mask=mask)

    winners = np.argmin(errors.data, axis=1)
    winning = ops.getitem(errors, (np.arange(len(rows)), winners))
    winner_index = np.full(pred.num_vehicles, -1, dtype=int)
    winner_index[rows] = winners
    return ops.mean(winning), winner_index


def prob_loss(probabilities, winner_index):
    """Mean over scored vehicles of -log P[i, winner_index[i]]"""
    winner_index = np.asarray(winner_index)
    rows = np.nonzero(winner_index >= 0)[0]
    if len(rows) == 0:
        raise DegenerateInputError("No vehicle has a winning mode")
    chosen = ops.getitem(probabilities, (rows, winner_index[rows]))
    return ops.neg(ops.mean(ops.log(chosen)))


def gaussian_nll(pred, future_positions, future_mask, winner_index, sigma_floor=1e-3):
    """
    Axis-independent Gaussian negative log-likelihood of the ground truth
    under the winning mode, averaged over valid frames and both axes.
    Standard deviations are floored at `sigma_floor`.
    """
    if pred.sigma is None:
        raise UsageError("gaussian_nll needs a model with gaussian_head enabled")
    winner_index = np.asarray(winner_index)
    rows = np.nonzero(winner_index >= 0)[0]
    if len(rows) == 0:
        raise DegenerateInputError("No vehicle has a winning mode")
    index = (rows, winner_index[rows])
    mu = ops.getitem(pred.trajectories, index)
    sigma = ops.floor_at(ops.getitem(pred.sigma, index), sigma_floor)
    target = np.asarray(future_positions, dtype=np.float64)[rows]
    z = ops.div(ops.sub(target, mu), sigma)
    nll = ops.add(ops.add(ops.log(sigma), ops.mul(ops.power(z, 2), 0.5)), HALF_LOG_TWO_PI)
    mask = np.asarray(future_mask, dtype=bool)[rows][:, :, None]
    return ops.mean(nll, mask=mask)


class LossBreakdown(object):
    """
    Components of one scene's loss: total = wta + alpha * prob + beta * gauss.

    `gauss` is None without a Gaussian head. It is reported but left out of
    `total` when beta is 0.
    """
    def __init__(self, wta, prob, total, winner_index, gauss=None):
        self.wta = wta
        self.prob = prob
        self.gauss = gauss
        self.total = total
        self.winner_index = winner_index

    def values(self):
        """Plain floats of every component"""
        result = {
            "total": self.total.item(),
            "wta": self.wta.item(),
            "prob": self.prob.item(),
        }
        if self.gauss is not None:
            result["gauss"] = self.gauss.item()
        return result

    def __repr__(self):
        return "LossBreakdown(%s)" % ", ".join(
            "%s=%.6g" % item for item in sorted(self.values().items()))


def compute_loss(pred, scene, config):
    """Loss of a prediction against a scene's future, in the scene's frame"""
    wta, winner_index = wta_loss(pred, scene.future_positions, scene.future_mask)
    prob = prob_loss(pred.probabilities, winner_index)
    total = ops.add(wta, ops.mul(prob, config.alpha))
    gauss = None
    if pred.sigma is not None:
        gauss = gaussian_nll(
            pred, scene.future_positions, scene.future_mask, winner_index,
            sigma_floor=config.sigma_floor)
        if config.beta != 0:
            total = ops.add(total, ops.mul(gauss, config.beta))
    return LossBreakdown(
        wta=wta, prob=prob, total=total, winner_index=winner_index, gauss=gauss)
