import json
from os.path import exists, join
import tempfile

import pandas as pd

from intentformer.ablation import (
    format_table,
    run_ablation,
    variant_config,
    write_ablation,
)
from intentformer.metrics import EvalReport
from intentformer.scene import build_split
from intentformer.synthetic import synth_corpus

from .toy import HIST_FRAMES, PRED_FRAMES, SAMPLE_RATE_HZ, toy_config, toy_train_config


def eq_(x, y):
    assert x == y


def tiny_split():
    def corpus(seed, n_scenes):
        return synth_corpus(
            seed, n_scenes, n_vehicles=3, sample_rate_hz=SAMPLE_RATE_HZ,
            hist_s=HIST_FRAMES, pred_s=PRED_FRAMES)
    return build_split(corpus(0, 2), corpus(1, 1))


def report(label, rmse, mae):
    per_vehicle = pd.DataFrame(columns=["scene", "vehicle_id", "horizon_s", "l2", "l1"])
    return EvalReport(
        label,
        rmse_by_horizon={1: rmse / 2, 2: rmse},
        mae_by_horizon={1: mae / 2, 2: mae},
        rmse_avg_by_horizon={1: rmse / 2, 2: 0.75 * rmse},
        mae_avg_by_horizon={1: mae / 2, 2: 0.75 * mae},
        per_vehicle=per_vehicle)


def test_variant_configs():
    config = toy_config(num_modes=3)
    ov1 = variant_config(config, single_mode=True, spatial=False)
    eq_((ov1.num_modes, ov1.spatial_enabled), (1, False))
    ovk = variant_config(config, single_mode=False, spatial=False)
    eq_((ovk.num_modes, ovk.spatial_enabled), (3, False))
    mvk = variant_config(config, single_mode=False, spatial=True)
    eq_(mvk, config)


def test_run_ablation_labels():
    reports = run_ablation(tiny_split(), toy_config(), toy_train_config(epochs=1))
    eq_(list(reports), ["OV_1", "OV_K", "MV_K"])
    for label, r in reports.items():
        eq_(r.label, label)
        eq_(r.horizons, [1, 2, 3, 4])


def test_run_ablation_with_mv1_writes_variant_dirs():
    out = tempfile.mkdtemp()
    reports = run_ablation(
        tiny_split(), toy_config(), toy_train_config(epochs=1),
        horizons=[2, 4], include_mv1=True, output_dir=out)
    eq_(list(reports), ["OV_1", "OV_K", "MV_K", "MV_1"])
    for label in reports:
        assert exists(join(out, label, "metrics.jsonl"))
    eq_(reports["MV_1"].horizons, [2, 4])


def test_format_table():
    reports = {"OV_1": report("OV_1", 4.0, 5.0)}
    reports["MV_K"] = report("MV_K", 2.0, 3.0)
    lines = format_table(reports).splitlines()
    eq_(len(lines), 3)
    assert lines[0].split() == ["OV_1", "MV_K"]
    eq_(lines[1].split(), ["RMSE", "4.0000", "2.0000"])
    eq_(lines[2].split(), ["MAE", "5.0000", "3.0000"])
    eq_(format_table(reports, horizon=1).splitlines()[1].split(), ["RMSE", "2.0000", "1.0000"])
    eq_(format_table(reports, average=True).splitlines()[2].split(), ["MAE", "3.7500", "2.2500"])
    eq_(format_table(reports, horizon=5).splitlines()[1].split(), ["RMSE", "n/a", "n/a"])


def test_write_ablation():
    out = tempfile.mkdtemp()
    reports = {"OV_1": report("OV_1", 4.0, 5.0), "OV_K": report("OV_K", 3.0, 4.0)}
    json_path, text_path = write_ablation(reports, out)
    with open(json_path) as f:
        document = json.load(f)
    eq_(list(document), ["OV_1", "OV_K"])
    eq_(document["OV_K"]["rmse_by_horizon"], {"1": 1.5, "2": 3.0})
    eq_(document["OV_K"]["num_vehicles"], 0)
    with open(text_path) as f:
        text = f.read()
    assert "RMSE" in text and "MAE" in text
