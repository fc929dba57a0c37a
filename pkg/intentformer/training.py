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

"""Mini-batch training loop with checkpoints and a per-epoch metrics log"""

from __future__ import print_function, division, absolute_import

from collections import OrderedDict
import json
import logging
from os.path import join
import tempfile
import time

import numpy as np
import progressbar

from .checkpoint import save_checkpoint
from .common import ensure_dir
from .errors import DegenerateInputError, NumericError, TrainingDivergedError
from .losses import compute_loss
from .metrics import evaluate
from .model import forward
from .optim import Adam
from .params import init_params
from .scene import DatasetSplit, dataset_digest, normalize_scene
from .tensor import ComputationTape

logger = logging.getLogger(__name__)

METRICS_FILENAME = "metrics.jsonl"
CHECKPOINT_FILENAME = "checkpoint.db"
NAN_DUMP_FILENAME = "nan_batch.json"


class FitResult(object):
    """
    Trained parameters, one metrics record per epoch and the mean batch
    loss of every optimizer step.
    """
    def __init__(self, params, history, step_losses, checkpoint_path=None):
        self.params = params
        self.history = history
        self.step_losses = step_losses
        self.checkpoint_path = checkpoint_path

    def __repr__(self):
        return "FitResult(epochs=%d, steps=%d, checkpoint=%s)" % (
            len(self.history), len(self.step_losses), self.checkpoint_path)


def _dump_nan_batch(output_dir, epoch, batch_index, scenes, values):
    if output_dir is None:
        output_dir = tempfile.mkdtemp(prefix="intentformer-nan-")
    ensure_dir(output_dir)
    path = join(output_dir, NAN_DUMP_FILENAME)
    document = OrderedDict([
        ("epoch", epoch),
        ("batch", batch_index),
        ("losses", values),
        ("scenes", [
            OrderedDict([
                ("source", scene.source),
                ("offset", scene.meta.get("offset")),
                ("vehicle_ids", [str(i) for i in scene.ids]),
                ("digest", scene.content_digest()),
            ])
            for scene in scenes
        ]),
    ])
    with open(path, "w") as f:
        json.dump(document, f, indent=2)
    return path


def _validation_horizon(model_config, train_config, sample_rate_hz):
    pred_s = model_config.pred_frames / float(sample_rate_hz)
    return min(train_config.horizon_s, pred_s)


def _batches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def train_step(scenes, params, model_config, optimizer):
    """
    One optimizer update from a batch of normalized scenes: a separate tape
    per scene, gradients summed in batch order then averaged.

    Returns (mean loss components, number of scenes used). A NaN loss
    raises TrainingDivergedError before any parameter changes.
    """
    params.requires_grad_(True)
    sums = OrderedDict()
    used = 0
    for scene in scenes:
        with ComputationTape() as tape:
            pred = forward(scene, params, model_config)
            try:
                losses = compute_loss(pred, scene, model_config)
            except DegenerateInputError:
                logger.debug("Skipping %r: no vehicle with a valid future", scene)
                continue
            values = losses.values()
            if not all(np.isfinite(v) for v in values.values()):
                raise TrainingDivergedError(
                    "Non-finite loss %s on scene %s" % (values, scene.source))
            tape.backward(losses.total)
        for key, value in values.items():
            sums[key] = sums.get(key, 0.0) + value
        used += 1
    if used == 0:
        params.requires_grad_(False)
        return None, 0
    grads = [
        (t.grad if t.grad is not None else np.zeros_like(t.data)) / used
        for t in params.tensors()
    ]
    optimizer.step(grads)
    params.requires_grad_(False)
    return OrderedDict((key, value / used) for key, value in sums.items()), used


def fit(
        data,
        model_config,
        train_config,
        output_dir=None,
        params=None,
        validation_scenes=None,
        sample_rate_hz=None):
    """
    Train a model.

    Parameters
    ----------
    data : DatasetSplit or list of Scene
        With a DatasetSplit the test side provides validation metrics.

    model_config : ModelConfig

    train_config : TrainConfig

    output_dir : str, optional
        Where metrics.jsonl, checkpoints and NaN dumps go.

    params : ModelParams, optional
        Starting point; freshly initialized from model_config.seed if omitted.

    validation_scenes : list of Scene, optional
        Used when `data` is a plain list.

    Returns FitResult.
    """
    if isinstance(data, DatasetSplit):
        train_scenes, validation_scenes = data.train, data.test
        sample_rate_hz = sample_rate_hz or data.sample_rate_hz
    else:
        train_scenes = list(data)
    validation_scenes = list(validation_scenes or [])
    if not train_scenes:
        raise DegenerateInputError("fit() needs at least one training scene")
    if sample_rate_hz is None:
        sample_rate_hz = train_scenes[0].sample_rate_hz or 10

    if params is None:
        params = init_params(model_config)
    optimizer = Adam.from_config(params, train_config)
    normalized = [normalize_scene(scene)[0] for scene in train_scenes]
    rng = np.random.default_rng(train_config.seed)
    horizon = _validation_horizon(model_config, train_config, sample_rate_hz)

    metrics_path = checkpoint_path = None
    if output_dir is not None:
        ensure_dir(output_dir)
        metrics_path = join(output_dir, METRICS_FILENAME)
        checkpoint_path = join(output_dir, CHECKPOINT_FILENAME)
        open(metrics_path, "w").close()

    logger.info(
        "Training on %d scenes (data %s) for %d epochs, model config %s",
        len(train_scenes), dataset_digest(train_scenes)[:12],
        train_config.epochs, model_config.fingerprint())
    history = []
    step_losses = []
    start_time = time.time()
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(len(normalized))
        batches = list(_batches(order, train_config.batch_scenes))
        bar = None
        if train_config.show_progress:
            bar = progressbar.ProgressBar(
                maxval=len(batches),
                widgets=[
                    "epoch %d " % epoch,
                    progressbar.Percentage(), " ",
                    progressbar.Bar(), " ",
                    progressbar.ETA(),
                ]).start()
        epoch_sums = OrderedDict()
        epoch_scenes = 0
        for batch_index, batch in enumerate(batches):
            scenes = [normalized[i] for i in batch]
            try:
                values, used = train_step(scenes, params, model_config, optimizer)
            except NumericError as e:
                params.requires_grad_(False)
                dump_path = _dump_nan_batch(
                    output_dir, epoch, batch_index, scenes, str(e))
                logger.error("Training diverged, batch dumped to %s", dump_path)
                raise TrainingDivergedError(str(e), dump_path=dump_path)
            if bar is not None:
                bar.update(batch_index + 1)
            if used == 0:
                continue
            step_losses.append(values["total"])
            for key, value in values.items():
                epoch_sums[key] = epoch_sums.get(key, 0.0) + value * used
            epoch_scenes += used
            logger.debug(
                "Epoch %d batch %d: %s", epoch, batch_index,
                ", ".join("%s=%.6g" % item for item in values.items()))
        if bar is not None:
            bar.finish()

        record = OrderedDict([("epoch", epoch)])
        for key in ("total", "wta", "prob", "gauss"):
            if key in epoch_sums:
                record["train_" + key] = epoch_sums[key] / epoch_scenes
        record["val_rmse_T"] = record["val_mae_T"] = None
        if validation_scenes:
            report = evaluate(
                validation_scenes, params, model_config,
                horizons=[horizon], sample_rate_hz=sample_rate_hz, label="validation")
            record["val_rmse_T"] = report.rmse_by_horizon.get(horizon)
            record["val_mae_T"] = report.mae_by_horizon.get(horizon)
        if train_config.log_wall_time:
            record["wall_time_s"] = time.time() - start_time
        history.append(record)
        logger.info(
            "Epoch %d/%d: %s", epoch, train_config.epochs,
            ", ".join("%s=%s" % item for item in record.items() if item[0] != "epoch"))

        if metrics_path is not None:
            with open(metrics_path, "a") as f:
                f.write(json.dumps(record) + "\n")
            cadence = train_config.checkpoint_every
            if cadence and epoch % cadence == 0 and epoch != train_config.epochs:
                save_checkpoint(
                    join(output_dir, "checkpoint_epoch_%04d.db" % epoch),
                    params, model_config,
                    extra={"epoch": epoch, "train": train_config.to_dict()})

    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path, params, model_config,
            extra={"epoch": train_config.epochs, "train": train_config.to_dict()})
    return FitResult(params, history, step_losses, checkpoint_path)
