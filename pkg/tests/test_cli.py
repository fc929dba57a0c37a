import json
from os import listdir
from os.path import exists, join
import tempfile

import pandas as pd

from intentformer.cli import main
from intentformer.loading import load_scene_dir

MODEL = {
    "num_modes": 2,
    "num_heads": 2,
    "head_dim": 2,
    "enc_layers": 1,
    "traj_dec_layers": 1,
    "prob_dec_layers": 1,
    "mlp_hidden": 8,
    "ffn_multiplier": 2,
}
RUN = {
    "sample_rate_hz": 1,
    "hist_s": 4,
    "pred_s": 4,
    "horizons": [1, 2, 3, 4],
    "test_fraction": 0.3,
    "model": MODEL,
    "train": {"epochs": 1, "batch_scenes": 2, "log_wall_time": False},
}
SYNTH_ARGS = [
    "synth", "--scenes", "3", "--vehicles", "3",
    "--sample-rate", "1", "--hist-s", "4", "--pred-s", "4",
]


def eq_(x, y):
    assert x == y


def synth(out, seed=0, extra=()):
    eq_(main(["--seed", str(seed), "--out", out] + SYNTH_ARGS + list(extra)), 0)
    return out


def run_config():
    path = join(tempfile.mkdtemp(), "run.json")
    with open(path, "w") as f:
        json.dump(RUN, f)
    return path


def read_tree(directory):
    contents = {}
    for name in sorted(listdir(directory)):
        path = join(directory, name)
        if name.startswith("scene_"):
            for inner in sorted(listdir(path)):
                with open(join(path, inner), "rb") as f:
                    contents[join(name, inner)] = f.read()
        else:
            with open(path, "rb") as f:
                contents[name] = f.read()
    return contents


def test_synth_is_reproducible(capsys):
    a = synth(tempfile.mkdtemp())
    b = synth(tempfile.mkdtemp())
    eq_(read_tree(a), read_tree(b))
    assert "config_fingerprint=" in capsys.readouterr().out
    eq_(len(load_scene_dir(a)), 3)
    assert read_tree(synth(tempfile.mkdtemp(), seed=1)) != read_tree(a)


def test_synth_zero_scenes_writes_manifest_only():
    out = tempfile.mkdtemp()
    eq_(main(["--out", out, "synth", "--scenes", "0"]), 0)
    eq_(listdir(out), ["manifest.json"])


def test_bad_mix_is_reported(capsys):
    code = main(["--out", tempfile.mkdtemp(), "synth", "--mix", "keep=2"])
    eq_(code, 1)
    assert "error: ConfigError: " in capsys.readouterr().err


def test_missing_checkpoint_is_reported(capsys):
    missing = join(tempfile.mkdtemp(), "checkpoint.db")
    code = main(["eval", "--checkpoint", missing, "--data", tempfile.mkdtemp()])
    eq_(code, 1)
    err = capsys.readouterr().err
    assert "error: ConfigError: " in err
    assert "Traceback" not in err


def test_train_eval_interpret(capsys):
    data = synth(tempfile.mkdtemp())
    config = run_config()
    run_dir = tempfile.mkdtemp()
    eq_(main(["--config", config, "--out", run_dir, "train", "--train-data", data]), 0)
    checkpoint = join(run_dir, "checkpoint.db")
    assert exists(checkpoint)
    assert exists(join(run_dir, "run_config.json"))
    assert exists(join(run_dir, "metrics.jsonl"))

    eval_dir = tempfile.mkdtemp()
    eq_(main([
        "--out", eval_dir, "eval", "--checkpoint", checkpoint, "--data", data,
        "--sample-rate", "1", "--baseline"]), 0)
    with open(join(eval_dir, "report.json")) as f:
        report = json.load(f)
    eq_(sorted(report), ["CV", "MV_K"])
    eq_(sorted(report["MV_K"]["rmse_by_horizon"]), ["1", "2", "3", "4"])
    per_vehicle = pd.read_csv(join(eval_dir, "per_vehicle.csv"))
    eq_(len(per_vehicle), 3 * 3 * 4)

    interpret_dir = tempfile.mkdtemp()
    eq_(main([
        "--out", interpret_dir, "interpret", "--checkpoint", checkpoint,
        "--data", data, "--sample-rate", "1", "--remove", "0"]), 0)
    attention = pd.read_csv(join(interpret_dir, "attention_summary.csv"))
    eq_(len(attention), 9)
    counterfactual = pd.read_csv(join(interpret_dir, "counterfactual.csv"))
    eq_(sorted(set(counterfactual["vehicle_id"])), [1, 2])

    code = main([
        "--out", interpret_dir, "interpret", "--checkpoint", checkpoint,
        "--data", data, "--sample-rate", "1", "--remove", "99"])
    eq_(code, 1)
    assert "error: UsageError: " in capsys.readouterr().err


def test_ablate(capsys):
    data = synth(tempfile.mkdtemp())
    out = tempfile.mkdtemp()
    eq_(main(["--config", run_config(), "--out", out, "ablate", "--train-data", data]), 0)
    with open(join(out, "ablation.json")) as f:
        document = json.load(f)
    eq_(list(document), ["OV_1", "OV_K", "MV_K"])
    printed = capsys.readouterr().out.splitlines()
    eq_([line.split()[0] for line in printed[-2:]], ["RMSE", "MAE"])
    assert exists(join(out, "ablation.txt"))


def test_eval_uses_the_rate_stored_with_the_scenes():
    data = tempfile.mkdtemp()
    eq_(main([
        "--out", data, "synth", "--scenes", "3", "--vehicles", "3",
        "--sample-rate", "2", "--hist-s", "2", "--pred-s", "3"]), 0)
    run = dict(RUN, sample_rate_hz=2, hist_s=2, pred_s=3, horizons=[1, 2, 3])
    config = join(tempfile.mkdtemp(), "run.json")
    with open(config, "w") as f:
        json.dump(run, f)
    run_dir = tempfile.mkdtemp()
    eq_(main(["--config", config, "--out", run_dir, "train", "--train-data", data]), 0)

    eval_dir = tempfile.mkdtemp()
    eq_(main([
        "--out", eval_dir, "eval", "--checkpoint", join(run_dir, "checkpoint.db"),
        "--data", data]), 0)
    with open(join(eval_dir, "report.json")) as f:
        report = json.load(f)
    eq_(sorted(report["rmse_by_horizon"]), ["1", "2", "3"])


def test_checkpoint_that_is_not_a_database_is_reported(capsys):
    checkpoint = join(tempfile.mkdtemp(), "checkpoint.db")
    with open(checkpoint, "w") as f:
        f.write("not a checkpoint\n" * 50)
    code = main(["eval", "--checkpoint", checkpoint, "--data", tempfile.mkdtemp()])
    eq_(code, 1)
    err = capsys.readouterr().err
    assert "error: ConfigError: " in err
    assert "Traceback" not in err
