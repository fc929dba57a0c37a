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
Reading trajectory CSVs, cutting them into scenes, and persisting scenes.

CSV schema (header required):

    frame,vehicle_id,x,y,vx,vy,ax,ay,theta,yaw
"""

from __future__ import print_function, division, absolute_import

import json
import logging
import os
from os.path import exists, join, isdir
import re

import numpy as np
import pandas as pd
from typechecks import require_integer

from .common import ensure_dir
from .errors import DataError, ParseError
from .scene import (
    FEATURE_COLUMNS,
    NUM_FEATURES,
    Scene,
    VehicleTrack,
    wrap_angle,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("frame", "vehicle_id") + FEATURE_COLUMNS
MASK_COLUMNS = ("vehicle_id", "frame", "present")
TRAJECTORY_FILENAME = "trajectories.csv"
MASK_FILENAME = "mask.csv"
MANIFEST_FILENAME = "manifest.json"

# 17 significant digits round-trip float64 exactly
FLOAT_FORMAT = "%.17g"


def _read_raw_csv(path):
    try:
        return pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise ParseError("missing header", path=path, line_number=1)
    except pd.errors.ParserError as e:
        message = str(e).strip()
        match = re.search(r"line (\d+)", message)
        line_number = int(match.group(1)) if match else None
        raise ParseError(message, path=path, line_number=line_number)


def _first_bad_row(values):
    """Row position of the first NaN in a coerced column, or None"""
    bad = np.nonzero(np.isnan(values))[0]
    if len(bad):
        return int(bad[0])
    return None


def load_csv(path, sample_rate_hz=10):
    """
    Read per-vehicle state sequences from a trajectory CSV.

    Parameters
    ----------
    path : str

    sample_rate_hz : int
        Frame rate of the recording; frames are plain indices at this rate.

    Returns list of VehicleTrack ordered by vehicle_id. Malformed rows raise
    ParseError (with the 1-based file line), duplicated (vehicle, frame)
    pairs and per-vehicle frames that go backwards raise DataError.
    """
    require_integer(sample_rate_hz, "sample_rate_hz")
    df = _read_raw_csv(path)
    missing = [c for c in CSV_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(
            "header is missing columns %s" % ", ".join(missing),
            path=path,
            line_number=1)
    if len(df) == 0:
        logger.info("No rows in %s", path)
        return []

    numeric = {}
    for column in CSV_COLUMNS:
        values = pd.to_numeric(df[column], errors="coerce").to_numpy(dtype=np.float64)
        bad_row = _first_bad_row(values)
        if bad_row is None and not np.all(np.isfinite(values)):
            bad_row = int(np.nonzero(~np.isfinite(values))[0][0])
        if bad_row is not None:
            raise ParseError(
                "invalid %s value %r" % (column, df[column].iloc[bad_row]),
                path=path,
                line_number=bad_row + 2)
        numeric[column] = values

    frame_values = numeric["frame"]
    bad = np.nonzero((frame_values != np.round(frame_values)) | (frame_values < 0))[0]
    if len(bad):
        raise ParseError(
            "frame must be a non-negative integer",
            path=path,
            line_number=int(bad[0]) + 2)
    id_values = numeric["vehicle_id"]
    bad = np.nonzero(id_values != np.round(id_values))[0]
    if len(bad):
        raise ParseError(
            "vehicle_id must be an integer",
            path=path,
            line_number=int(bad[0]) + 2)

    frames = numeric["frame"].astype(np.int64)
    vehicle_ids = numeric["vehicle_id"].astype(np.int64)
    states = np.stack([numeric[c] for c in FEATURE_COLUMNS], axis=1)
    states[:, FEATURE_COLUMNS.index("theta")] = wrap_angle(
        states[:, FEATURE_COLUMNS.index("theta")])

    keys = pd.DataFrame({"vehicle_id": vehicle_ids, "frame": frames})
    duplicated = keys.duplicated(keep="first").to_numpy()
    if duplicated.any():
        row = int(np.nonzero(duplicated)[0][0])
        raise DataError(
            "%s:%d: duplicate row for vehicle %d, frame %d" % (
                path, row + 2, vehicle_ids[row], frames[row]))

    tracks = []
    for vehicle_id in np.unique(vehicle_ids):
        rows = np.nonzero(vehicle_ids == vehicle_id)[0]
        vehicle_frames = frames[rows]
        backwards = np.nonzero(np.diff(vehicle_frames) <= 0)[0]
        if len(backwards):
            row = rows[backwards[0] + 1]
            raise DataError(
                "%s:%d: frame %d of vehicle %d comes after frame %d" % (
                    path, row + 2, frames[row], vehicle_id,
                    vehicle_frames[backwards[0]]))
        tracks.append(VehicleTrack(int(vehicle_id), vehicle_frames, states[rows]))
    logger.info(
        "Loaded %d vehicles (%d rows) from %s", len(tracks), len(df), path)
    return tracks


def chunk_scenes(
        tracks,
        sample_rate_hz=10,
        hist_s=5,
        pred_s=5,
        stride_s=None,
        source=None):
    """
    Cut a recording into fixed windows of hist_s + pred_s seconds.

    Windows start at the first recorded frame and, by default, do not
    overlap; `stride_s` shorter than the window makes them overlap. Only
    whole windows are produced. Inside a window a vehicle is kept when it
    is observed on at least one history frame; its absent frames are
    masked out.

    Returns list of Scene (empty when the recording is shorter than one
    window).
    """
    hist_frames = int(round(hist_s * sample_rate_hz))
    pred_frames = int(round(pred_s * sample_rate_hz))
    window = hist_frames + pred_frames
    if hist_frames < 1 or pred_frames < 1:
        raise DataError(
            "hist_s and pred_s must each span at least one frame at %s Hz" % (
                sample_rate_hz,))
    stride = window if stride_s is None else int(round(stride_s * sample_rate_hz))
    if stride < 1:
        raise DataError("stride_s must span at least one frame")

    tracks = sorted(tracks, key=lambda track: track.vehicle_id)
    tracks = [track for track in tracks if len(track)]
    if not tracks:
        return []
    first = min(int(track.frames[0]) for track in tracks)
    last = max(int(track.frames[-1]) for track in tracks)
    length = last - first + 1

    scenes = []
    for start in range(first, last + 1, stride):
        if start + window > first + length:
            break
        features = []
        mask = []
        ids = []
        for track in tracks:
            in_window = (track.frames >= start) & (track.frames < start + window)
            if not in_window.any():
                continue
            offsets = track.frames[in_window] - start
            if not np.any(offsets < hist_frames):
                logger.debug(
                    "Dropping vehicle %s from window at frame %d: no history",
                    track.vehicle_id, start)
                continue
            vehicle_features = np.zeros((window, NUM_FEATURES))
            vehicle_mask = np.zeros(window, dtype=bool)
            vehicle_features[offsets] = track.states[in_window]
            vehicle_mask[offsets] = True
            features.append(vehicle_features)
            mask.append(vehicle_mask)
            ids.append(track.vehicle_id)
        if not ids:
            logger.warning("Skipping empty window at frame %d of %s", start, source)
            continue
        scenes.append(Scene(
            features=np.stack(features),
            mask=np.stack(mask),
            hist_frames=hist_frames,
            pred_frames=pred_frames,
            ids=ids,
            meta={
                "source": source,
                "offset": start,
                "sample_rate_hz": sample_rate_hz,
            }))
    logger.info(
        "Chunked %s into %d scenes of %d frames", source, len(scenes), window)
    return scenes


def load_recording(path, sample_rate_hz=10, hist_s=5, pred_s=5, stride_s=None):
    """load_csv followed by chunk_scenes, tagging scenes with the file path"""
    tracks = load_csv(path, sample_rate_hz=sample_rate_hz)
    return chunk_scenes(
        tracks,
        sample_rate_hz=sample_rate_hz,
        hist_s=hist_s,
        pred_s=pred_s,
        stride_s=stride_s,
        source=os.path.abspath(path))


def scene_to_frames(scene):
    """
    Flatten a scene into (trajectory rows, mask rows) DataFrames using
    global frame indices (chunk offset + local frame).
    """
    offset = int(scene.meta.get("offset", 0))
    n, t = scene.mask.shape
    vehicle_index, frame_index = np.meshgrid(np.arange(n), np.arange(t), indexing="ij")
    vehicle_index = vehicle_index.reshape(-1)
    frame_index = frame_index.reshape(-1)
    present = scene.mask.reshape(-1)
    ids = np.asarray(scene.ids)[vehicle_index]
    mask_df = pd.DataFrame({
        "vehicle_id": ids,
        "frame": frame_index + offset,
        "present": present.astype(int),
    }, columns=list(MASK_COLUMNS))
    rows = scene.features.reshape(-1, NUM_FEATURES)[present]
    trajectory_df = pd.DataFrame(rows, columns=list(FEATURE_COLUMNS))
    trajectory_df.insert(0, "vehicle_id", ids[present])
    trajectory_df.insert(0, "frame", frame_index[present] + offset)
    trajectory_df = trajectory_df.sort_values(
        ["frame", "vehicle_id"], kind="mergesort").reset_index(drop=True)
    return trajectory_df, mask_df


def save_scenes(scenes, directory, manifest=None):
    """
    Write scenes as one sub-directory per chunk, each holding
    trajectories.csv (present rows only) and mask.csv, plus a
    manifest.json describing the whole set.
    """
    ensure_dir(directory)
    entries = []
    for i, scene in enumerate(scenes):
        name = "scene_%05d" % i
        scene_dir = join(directory, name)
        ensure_dir(scene_dir)
        trajectory_df, mask_df = scene_to_frames(scene)
        trajectory_df.to_csv(
            join(scene_dir, TRAJECTORY_FILENAME),
            index=False,
            float_format=FLOAT_FORMAT,
            encoding="utf-8")
        mask_df.to_csv(join(scene_dir, MASK_FILENAME), index=False, encoding="utf-8")
        entries.append({
            "name": name,
            "source": scene.source,
            "offset": int(scene.meta.get("offset", 0)),
            "vehicles": [int(v) for v in scene.ids],
        })
    if scenes:
        hist_frames, pred_frames = scenes[0].hist_frames, scenes[0].pred_frames
        sample_rate_hz = scenes[0].sample_rate_hz
    else:
        hist_frames = pred_frames = sample_rate_hz = None
    document = dict(manifest or {})
    document.update({
        "hist_frames": hist_frames,
        "pred_frames": pred_frames,
        "sample_rate_hz": sample_rate_hz,
        "scenes": entries,
    })
    with open(join(directory, MANIFEST_FILENAME), "w") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("Wrote %d scenes to %s", len(scenes), directory)
    return join(directory, MANIFEST_FILENAME)


def is_scene_dir(path):
    return isdir(path) and exists(join(path, MANIFEST_FILENAME))


def read_manifest(directory):
    with open(join(directory, MANIFEST_FILENAME)) as f:
        return json.load(f)


def load_scene_dir(directory):
    """Read back a directory written by save_scenes"""
    manifest = read_manifest(directory)
    hist_frames = manifest["hist_frames"]
    pred_frames = manifest["pred_frames"]
    sample_rate_hz = manifest["sample_rate_hz"]
    scenes = []
    for entry in manifest["scenes"]:
        scene_dir = join(directory, entry["name"])
        tracks = load_csv(join(scene_dir, TRAJECTORY_FILENAME), sample_rate_hz)
        mask_df = pd.read_csv(join(scene_dir, MASK_FILENAME))
        offset = int(entry["offset"])
        ids = [int(v) for v in entry["vehicles"]]
        window = hist_frames + pred_frames
        features = np.zeros((len(ids), window, NUM_FEATURES))
        mask = np.zeros((len(ids), window), dtype=bool)
        row_of = dict((vehicle_id, i) for i, vehicle_id in enumerate(ids))
        for track in tracks:
            if track.vehicle_id not in row_of:
                raise DataError(
                    "%s: vehicle %s is not listed in the manifest" % (
                        scene_dir, track.vehicle_id))
            features[row_of[track.vehicle_id], track.frames - offset] = track.states
        present = mask_df[mask_df["present"] == 1]
        for vehicle_id, frame in zip(present["vehicle_id"], present["frame"]):
            mask[row_of[int(vehicle_id)], int(frame) - offset] = True
        scenes.append(Scene(
            features=features,
            mask=mask,
            hist_frames=hist_frames,
            pred_frames=pred_frames,
            ids=ids,
            meta={
                "source": entry["source"],
                "offset": offset,
                "sample_rate_hz": sample_rate_hz,
            }))
    logger.info("Loaded %d scenes from %s", len(scenes), directory)
    return scenes
