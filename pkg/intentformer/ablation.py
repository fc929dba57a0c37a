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
Single- vs multi-modal and with vs without vehicle interaction: the same
data and training budget for every variant.
"""

from __future__ import print_function, division, absolute_import

from collections import OrderedDict
import json
import logging
from os.path import join

from .common import ensure_dir
from .metrics import evaluate
from .training import fit

logger = logging.getLogger(__name__)

# label -> (single mode?, spatial interaction?)
VARIANTS = OrderedDict([
    ("OV_1", (True, False)),
    ("OV_K", (False, False)),
    ("MV_K", (False, True)),
])

MV_1 = ("MV_1", (True, True))


def variant_config(model_config, single_mode, spatial):
    """ModelConfig of one ablation variant derived from `model_config`"""
    return model_config.replace(
        num_modes=1 if single_mode else model_config.num_modes,
        spatial_enabled=spatial)


def run_ablation(
        split,
        model_config,
        train_config,
        horizons=None,
        include_mv1=False,
        output_dir=None):
    """
    Train and evaluate each variant on `split` with identical seeds and
    epochs. Returns an OrderedDict label -> EvalReport in column order
    OV_1, OV_K, MV_K (then MV_1 when `include_mv1`).
    """
    variants = list(VARIANTS.items())
    if include_mv1:
        variants.append(MV_1)
    digest = split.digest()
    reports = OrderedDict()
    for label, (single_mode, spatial) in variants:
        config = variant_config(model_config, single_mode, spatial)
        logger.info(
            "Ablation variant %s: K=%d, spatial=%s, config %s, data %s",
            label, config.num_modes, spatial, config.fingerprint(), digest)
        variant_dir = None
        if output_dir is not None:
            variant_dir = join(output_dir, label)
            ensure_dir(variant_dir)
        result = fit(split, config, train_config, output_dir=variant_dir)
        test_scenes = split.test or split.train
        if not split.test:
            logger.warning("%s: no test scenes, evaluating on training data", label)
        reports[label] = evaluate(
            test_scenes, result.params, config,
            horizons=horizons, label=label, sample_rate_hz=split.sample_rate_hz)
    return reports


def format_table(reports, horizon=None, average=False):
    """
    Plain-text table with one row per metric (RMSE, MAE) and one column
    per variant, at `horizon` (default: each report's final horizon).
    """
    labels = list(reports)
    width = max([10] + [len(label) + 2 for label in labels])
    header = "%-8s" % "" + "".join(label.rjust(width) for label in labels)
    lines = [header]
    for name in ("RMSE", "MAE"):
        cells = []
        for label in labels:
            report = reports[label]
            if average:
                values = (report.rmse_avg_by_horizon if name == "RMSE"
                          else report.mae_avg_by_horizon)
            else:
                values = report.rmse_by_horizon if name == "RMSE" else report.mae_by_horizon
            h = horizon if horizon is not None else max(values)
            cells.append(("%.4f" % values[h]) if h in values else "n/a")
        lines.append("%-8s" % name + "".join(cell.rjust(width) for cell in cells))
    return "\n".join(lines) + "\n"


def ablation_document(reports):
    return OrderedDict(
        (label, report.to_dict()) for label, report in reports.items())


def write_ablation(reports, output_dir, horizon=None):
    """Write ablation.json and ablation.txt; returns their paths"""
    ensure_dir(output_dir)
    json_path = join(output_dir, "ablation.json")
    text_path = join(output_dir, "ablation.txt")
    with open(json_path, "w") as f:
        json.dump(ablation_document(reports), f, indent=2)
        f.write("\n")
    with open(text_path, "w") as f:
        f.write(format_table(reports, horizon=horizon))
        f.write("\n")
        f.write(format_table(reports, horizon=horizon, average=True))
    logger.info("Wrote %s and %s", json_path, text_path)
    return json_path, text_path
