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
Command line entry point:

    intentformer synth --scenes 200 --out data/
    intentformer train --config run.json --out runs/mv8
    intentformer eval --checkpoint runs/mv8/checkpoint.db --data data/ --out runs/mv8/eval
    intentformer ablate --config run.json --out runs/ablation
    intentformer interpret --checkpoint runs/mv8/checkpoint.db --data data/ --remove 3 --out runs/cf
"""

from __future__ import print_function, division, absolute_import

import argparse
import json
import logging
from os.path import isfile, join
import sqlite3
import sys

from .ablation import format_table, run_ablation, write_ablation
from .cache import SceneCache
from .checkpoint import load_checkpoint
from .common import ensure_dir, fingerprint
from .config import load_run_config, run_config_from_dict
from .errors import ConfigError, DataError, IntentformerError, UsageError
from .interpret import (
    counterfactual_remove,
    export_attention,
    write_attention_summary,
    write_counterfactual,
)
from .loading import is_scene_dir, load_scene_dir, save_scenes
from .metrics import evaluate, evaluate_constant_velocity
from .scene import build_split, split_by_source
from .synthetic import parse_maneuver_mix, synth_corpus
from .training import fit
from .version import __version__

logger = logging.getLogger(__name__)

RUN_CONFIG_FILENAME = "run_config.json"

# recordings carry no rate of their own; scene directories do
DEFAULT_RECORDING_RATE_HZ = 10


def _announce(config_fingerprint, seed):
    print("config_fingerprint=%s seed=%s" % (config_fingerprint, seed))


def _resolve_run_config(args, overrides=None):
    """Run configuration from --config (or defaults) with flag overrides"""
    overrides = dict(overrides or {})
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides.setdefault("model", {})["seed"] = args.seed
        overrides.setdefault("train", {})["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.config:
        config = load_run_config(args.config, overrides)
    else:
        config = run_config_from_dict({}, overrides)
    config.check_paths()
    return config


def load_scenes(paths, sample_rate_hz=10, hist_s=5, pred_s=5):
    """Scenes from scene directories (written by synth) or recording CSVs"""
    scenes = []
    cache = None
    for path in paths:
        if is_scene_dir(path):
            scenes.extend(load_scene_dir(path))
        elif isfile(path):
            if cache is None:
                cache = SceneCache()
            scenes.extend(cache.fetch(
                path, sample_rate_hz=sample_rate_hz, hist_s=hist_s, pred_s=pred_s))
        else:
            raise ConfigError("Not a scene directory or CSV file: %s" % path)
    return scenes


def _check_frames(scenes, model_config, paths):
    for scene in scenes:
        if (scene.hist_frames, scene.pred_frames) != (
                model_config.hist_frames, model_config.pred_frames):
            raise DataError(
                "Scenes from %s have %d/%d frames, model expects %d/%d" % (
                    ", ".join(paths), scene.hist_frames, scene.pred_frames,
                    model_config.hist_frames, model_config.pred_frames))


def _scenes_for_model(paths, model_config, sample_rate_hz=None):
    """
    Scenes cut to the checkpoint's window. Recordings are chunked at
    `sample_rate_hz` (or DEFAULT_RECORDING_RATE_HZ); scene directories
    keep the rate they were written with.
    """
    rate = sample_rate_hz or DEFAULT_RECORDING_RATE_HZ
    return load_scenes(
        paths, rate,
        model_config.hist_frames / float(rate),
        model_config.pred_frames / float(rate))


def _dataset_split(config):
    if not config.train_data:
        raise ConfigError("No train_data given (set it in --config or use --train-data)")
    train = load_scenes(
        config.train_data, config.sample_rate_hz, config.hist_s, config.pred_s)
    _check_frames(train, config.model, config.train_data)
    if config.test_data:
        test = load_scenes(
            config.test_data, config.sample_rate_hz, config.hist_s, config.pred_s)
        _check_frames(test, config.model, config.test_data)
        return build_split(train, test, config.sample_rate_hz)
    split = split_by_source(train, config.test_fraction, config.seed)
    split.sample_rate_hz = config.sample_rate_hz
    return split


def _write_json(document, path):
    with open(path, "w") as f:
        json.dump(document, f, indent=2)
        f.write("\n")


def cmd_synth(args):
    mix = parse_maneuver_mix(args.mix) if args.mix else None
    seed = args.seed if args.seed is not None else 0
    flags = {
        "scenes": args.scenes,
        "vehicles": args.vehicles,
        "lanes": args.lanes,
        "mix": mix,
        "sample_rate_hz": args.sample_rate,
        "hist_s": args.hist_s,
        "pred_s": args.pred_s,
        "partial_presence": args.partial_presence,
    }
    _announce(fingerprint(flags), seed)
    out = args.out or "synthetic"
    scenes = synth_corpus(
        seed,
        args.scenes,
        n_vehicles=args.vehicles,
        n_lanes=args.lanes,
        maneuver_mix=mix,
        sample_rate_hz=args.sample_rate,
        hist_s=args.hist_s,
        pred_s=args.pred_s,
        partial_presence=args.partial_presence)
    save_scenes(scenes, out, manifest={"seed": seed, "flags": flags})
    return 0


def cmd_train(args):
    overrides = {}
    if args.train_data:
        overrides["train_data"] = args.train_data
    if args.epochs is not None:
        overrides.setdefault("train", {})["epochs"] = args.epochs
    config = _resolve_run_config(args, overrides)
    _announce(config.fingerprint(), config.seed)
    ensure_dir(config.output_dir)
    config.save(join(config.output_dir, RUN_CONFIG_FILENAME))
    split = _dataset_split(config)
    logger.info("Dataset %r, digest %s", split, split.digest())
    result = fit(split, config.model, config.train, output_dir=config.output_dir)
    print("checkpoint=%s" % result.checkpoint_path)
    return 0


def cmd_eval(args):
    params, model_config = load_checkpoint(args.checkpoint)
    rate = args.sample_rate
    _announce(model_config.fingerprint(), model_config.seed)
    scenes = _scenes_for_model(args.data, model_config, rate)
    _check_frames(scenes, model_config, args.data)
    horizons = None
    if args.horizons:
        horizons = [float(h) if "." in h else int(h) for h in args.horizons.split(",")]
    out = args.out or "."
    ensure_dir(out)
    report = evaluate(
        scenes, params, model_config, horizons=horizons,
        label=args.label, sample_rate_hz=rate)
    document = report.to_dict()
    text = report.format_text()
    if args.baseline:
        baseline = evaluate_constant_velocity(scenes, horizons=horizons, sample_rate_hz=rate)
        document = {report.label: document, baseline.label: baseline.to_dict()}
        text += "\n" + baseline.format_text()
    _write_json(document, join(out, "report.json"))
    with open(join(out, "report.txt"), "w") as f:
        f.write(text)
    report.per_vehicle.to_csv(join(out, "per_vehicle.csv"), index=False)
    print(text, end="")
    return 0


def cmd_ablate(args):
    overrides = {}
    if args.train_data:
        overrides["train_data"] = args.train_data
    if args.epochs is not None:
        overrides.setdefault("train", {})["epochs"] = args.epochs
    if args.include_mv1:
        overrides["include_mv1"] = True
    config = _resolve_run_config(args, overrides)
    _announce(config.fingerprint(), config.seed)
    ensure_dir(config.output_dir)
    config.save(join(config.output_dir, RUN_CONFIG_FILENAME))
    split = _dataset_split(config)
    reports = run_ablation(
        split,
        config.model,
        config.train,
        horizons=list(config.horizons),
        include_mv1=config.include_mv1,
        output_dir=config.output_dir)
    write_ablation(reports, config.output_dir)
    print(format_table(reports), end="")
    return 0


def _parse_vehicle_id(scene, text):
    for vehicle_id in scene.ids:
        if str(vehicle_id) == text:
            return vehicle_id
    raise UsageError("Vehicle %s is not part of the selected scene" % text)


def cmd_interpret(args):
    params, model_config = load_checkpoint(args.checkpoint)
    rate = args.sample_rate
    _announce(model_config.fingerprint(), model_config.seed)
    scenes = _scenes_for_model([args.data], model_config, rate)
    if not 0 <= args.scene_index < len(scenes):
        raise UsageError(
            "Scene index %d is outside 0..%d" % (args.scene_index, len(scenes) - 1))
    scene = scenes[args.scene_index]
    out = args.out or "."
    ensure_dir(out)
    if model_config.spatial_enabled:
        _, summary = export_attention(scene, params, model_config)
        write_attention_summary(summary, scene.ids, join(out, "attention_summary.csv"))
    elif args.remove is None:
        raise UsageError("Checkpoint has no spatial attention to export")
    else:
        logger.warning("Spatial attention disabled, skipping attention summary")
    if args.remove is not None:
        vehicle_id = _parse_vehicle_id(scene, args.remove)
        table = counterfactual_remove(
            scene, vehicle_id, params, model_config, sample_rate_hz=rate)
        write_counterfactual(table, join(out, "counterfactual.csv"))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="intentformer",
        description="Multimodal vehicle trajectory prediction with intent modes")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="Overrides every seed in the config")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command")
    subparsers.required = True

    synth = subparsers.add_parser("synth", help="Generate synthetic highway scenes")
    synth.add_argument("--scenes", type=int, default=10)
    synth.add_argument("--vehicles", type=int, default=4)
    synth.add_argument("--lanes", type=int, default=3)
    synth.add_argument("--mix", help="e.g. keep=0.5,lane_change_left=0.5")
    synth.add_argument("--sample-rate", type=int, default=10)
    synth.add_argument("--hist-s", type=float, default=5)
    synth.add_argument("--pred-s", type=float, default=5)
    synth.add_argument("--partial-presence", type=float, default=0.0)
    synth.set_defaults(function=cmd_synth)

    for name, function, help_text in (
            ("train", cmd_train, "Train a model"),
            ("ablate", cmd_ablate, "Train and compare OV_1, OV_K and MV_K")):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--train-data", nargs="+")
        sub.add_argument("--epochs", type=int)
        if name == "ablate":
            sub.add_argument("--include-mv1", action="store_true")
        sub.set_defaults(function=function)

    evaluate_parser = subparsers.add_parser("eval", help="Evaluate a checkpoint")
    evaluate_parser.add_argument("--checkpoint", required=True)
    evaluate_parser.add_argument("--data", nargs="+", required=True)
    evaluate_parser.add_argument("--horizons", help="Comma separated seconds")
    evaluate_parser.add_argument(
        "--sample-rate", type=int,
        help="Defaults to the rate stored with the scenes")
    evaluate_parser.add_argument("--label", default="MV_K")
    evaluate_parser.add_argument(
        "--baseline", action="store_true", help="Also report constant velocity")
    evaluate_parser.set_defaults(function=cmd_eval)

    interpret = subparsers.add_parser(
        "interpret", help="Export attention and vehicle removal effects")
    interpret.add_argument("--checkpoint", required=True)
    interpret.add_argument("--data", required=True)
    interpret.add_argument("--scene-index", type=int, default=0)
    interpret.add_argument("--remove", help="Vehicle id to remove")
    interpret.add_argument(
        "--sample-rate", type=int,
        help="Defaults to the rate stored with the scenes")
    interpret.set_defaults(function=cmd_interpret)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    try:
        return args.function(args)
    except (IntentformerError, TypeError, OSError, sqlite3.DatabaseError) as e:
        message = " ".join(str(e).split())
        print("error: %s: %s" % (type(e).__name__, message), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
