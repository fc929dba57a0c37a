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
Synthetic multi-lane highway scenes with the same layout as chunked CSV
recordings.

Longitudinal motion is constant acceleration; lane changes follow a
smoothstep lateral profile, so positions, velocities and accelerations are
analytically consistent with each other.
"""

from __future__ import print_function, division, absolute_import

import logging

import numpy as np
from typechecks import require_integer

from .errors import ConfigError
from .scene import NUM_FEATURES, Scene

logger = logging.getLogger(__name__)

LANE_WIDTH = 3.75

KEEP = "keep"
LANE_CHANGE_LEFT = "lane_change_left"
LANE_CHANGE_RIGHT = "lane_change_right"
MERGE = "merge"
MANEUVERS = (KEEP, LANE_CHANGE_LEFT, LANE_CHANGE_RIGHT, MERGE)

DEFAULT_MIX = {KEEP: 0.55, LANE_CHANGE_LEFT: 0.2, LANE_CHANGE_RIGHT: 0.2, MERGE: 0.05}


def parse_maneuver_mix(mix):
    """
    Accept a dict or a "keep=0.5,lane_change_left=0.5" string and return
    probabilities aligned with MANEUVERS.
    """
    if mix is None:
        mix = DEFAULT_MIX
    if isinstance(mix, str):
        parsed = {}
        for item in mix.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise ConfigError("Expected maneuver=probability, got %r" % item)
            name, value = item.split("=", 1)
            try:
                parsed[name.strip()] = float(value)
            except ValueError:
                raise ConfigError("Invalid probability for %s: %r" % (name, value))
        mix = parsed
    unknown = set(mix) - set(MANEUVERS)
    if unknown:
        raise ConfigError(
            "Unknown maneuvers %s (expected a subset of %s)" % (
                sorted(unknown), ", ".join(MANEUVERS)))
    probabilities = np.array([float(mix.get(name, 0.0)) for name in MANEUVERS])
    if np.any(probabilities < 0) or abs(probabilities.sum() - 1.0) > 1e-9:
        raise ConfigError(
            "Maneuver probabilities must be non-negative and sum to 1, got %s" % (
                dict(zip(MANEUVERS, probabilities.tolist())),))
    return probabilities


def stack_states(x, y, vx, vy, ax, ay):
    """Assemble (T, 8) feature rows, deriving heading and yaw rate"""
    theta = np.arctan2(vy, vx)
    speed_sq = vx ** 2 + vy ** 2
    yaw = np.where(speed_sq > 0, (vx * ay - vy * ax) / np.maximum(speed_sq, 1e-12), 0.0)
    return np.stack([x, y, vx, vy, ax, ay, theta, yaw], axis=-1)


def lateral_profile(t, y0, shift, onset, duration):
    """
    Lane change of `shift` meters along a quintic smoothstep centered at
    `onset` seconds; the vehicle is exactly in its lane before
    onset - duration and exactly in the target lane after onset + duration.
    """
    width = 2.0 * duration
    u = np.clip((t - onset + duration) / width, 0.0, 1.0)
    s = u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)
    y = y0 + shift * s
    vy = shift * 30.0 * u ** 2 * (1.0 - u) ** 2 / width
    ay = shift * 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / width ** 2
    return y, vy, ay


def _lane_shift(maneuver, lane, n_lanes, lane_width):
    """Signed lateral displacement for a maneuver starting in `lane`"""
    if maneuver == LANE_CHANGE_LEFT:
        if lane < n_lanes - 1:
            return lane_width
        if lane > 0:
            return -lane_width
    elif maneuver == LANE_CHANGE_RIGHT:
        if lane > 0:
            return -lane_width
        if lane < n_lanes - 1:
            return lane_width
    return 0.0


def synth_highway(
        seed,
        n_vehicles,
        n_lanes=3,
        maneuver_mix=None,
        sample_rate_hz=10,
        hist_s=5,
        pred_s=5,
        lane_width=LANE_WIDTH,
        road_length_m=200.0,
        speed_range=(20.0, 32.0),
        accel_range=(-0.5, 0.5),
        onset_window_s=None,
        partial_presence=0.0,
        maneuvers=None,
        source=None):
    """
    Generate one highway scene.

    Parameters
    ----------
    seed : int
        Same seed, same arguments -> bit-identical scene.

    n_vehicles : int

    n_lanes : int

    maneuver_mix : dict or str, optional
        Probabilities over MANEUVERS.

    onset_window_s : (float, float), optional
        Range of lane-change midpoints in seconds from the scene start.
        Defaults to the middle 60% of the window.

    partial_presence : float
        Probability that a vehicle enters late or leaves early.

    maneuvers : list of str, optional
        Override the sampled maneuver per vehicle (all other draws are
        unchanged, so histories stay identical across overrides that only
        act after the onset window).

    source : str, optional
        Source label; defaults to "synthetic-<seed>".
    """
    require_integer(n_vehicles, "n_vehicles")
    require_integer(n_lanes, "n_lanes")
    if n_vehicles < 1:
        raise ConfigError("n_vehicles must be at least 1, got %d" % n_vehicles)
    if n_lanes < 1:
        raise ConfigError("n_lanes must be at least 1, got %d" % n_lanes)
    probabilities = parse_maneuver_mix(maneuver_mix)
    if maneuvers is not None and len(maneuvers) != n_vehicles:
        raise ConfigError(
            "Got %d maneuver overrides for %d vehicles" % (len(maneuvers), n_vehicles))

    hist_frames = int(round(hist_s * sample_rate_hz))
    pred_frames = int(round(pred_s * sample_rate_hz))
    total = hist_frames + pred_frames
    duration_s = total / float(sample_rate_hz)
    t = np.arange(total) / float(sample_rate_hz)
    if onset_window_s is None:
        onset_window_s = (0.2 * duration_s, 0.8 * duration_s)

    rng = np.random.default_rng(seed)
    features = np.zeros((n_vehicles, total, NUM_FEATURES))
    mask = np.ones((n_vehicles, total), dtype=bool)
    chosen = []
    for i in range(n_vehicles):
        maneuver = MANEUVERS[rng.choice(len(MANEUVERS), p=probabilities)]
        lane = int(rng.integers(n_lanes))
        x0 = rng.uniform(0.0, road_length_m)
        v0 = rng.uniform(*speed_range)
        a0 = rng.uniform(*accel_range)
        onset = rng.uniform(*onset_window_s)
        change_duration = rng.uniform(0.5, 1.0)
        presence_draw = rng.uniform()
        presence_kind = rng.integers(2)
        presence_cut = rng.uniform()
        if maneuvers is not None:
            maneuver = maneuvers[i]
            if maneuver not in MANEUVERS:
                raise ConfigError("Unknown maneuver %r" % (maneuver,))

        y0 = (lane + 0.5) * lane_width
        shift = _lane_shift(maneuver, lane, n_lanes, lane_width)
        if maneuver == MERGE:
            # joins the outermost lane from its shoulder edge while speeding up
            lane = 0
            y0 = 0.25 * lane_width
            shift = 0.25 * lane_width
            a0 = abs(a0) + 0.5

        x = x0 + v0 * t + 0.5 * a0 * t ** 2
        vx = v0 + a0 * t
        ax = np.full(total, a0)
        if shift == 0.0:
            y = np.full(total, y0)
            vy = np.zeros(total)
            ay = np.zeros(total)
        else:
            y, vy, ay = lateral_profile(t, y0, shift, onset, change_duration)
        features[i] = stack_states(x, y, vx, vy, ax, ay)
        chosen.append(maneuver)

        if presence_draw < partial_presence:
            if presence_kind == 0 and hist_frames > 1:
                first = 1 + int(presence_cut * (hist_frames - 1))
                mask[i, :first] = False
            elif total - hist_frames > 1:
                last = hist_frames + int(presence_cut * (total - hist_frames - 1))
                mask[i, last + 1:] = False
    features[~mask] = 0.0

    return Scene(
        features=features,
        mask=mask,
        hist_frames=hist_frames,
        pred_frames=pred_frames,
        ids=list(range(n_vehicles)),
        meta={
            "source": source if source is not None else "synthetic-%d" % seed,
            "offset": 0,
            "sample_rate_hz": sample_rate_hz,
            "maneuvers": chosen,
            "lane_width": lane_width,
            "n_lanes": n_lanes,
        })


def scene_seeds(seed, n_scenes):
    """Independent per-scene seeds derived from one corpus seed"""
    children = np.random.SeedSequence(seed).spawn(n_scenes)
    return [int(child.generate_state(1)[0]) for child in children]


def synth_corpus(seed, n_scenes, n_vehicles=4, **kwargs):
    """
    `n_scenes` independent highway scenes. `n_vehicles` may be an int or
    an inclusive (low, high) range drawn per scene.
    """
    rng = np.random.default_rng(seed)
    scenes = []
    for i, scene_seed in enumerate(scene_seeds(seed, n_scenes)):
        if isinstance(n_vehicles, (tuple, list)):
            count = int(rng.integers(n_vehicles[0], n_vehicles[1] + 1))
        else:
            count = n_vehicles
        scenes.append(synth_highway(
            scene_seed,
            count,
            source="synthetic-%d-%d" % (seed, i),
            **kwargs))
    logger.info("Generated %d synthetic scenes (seed %d)", n_scenes, seed)
    return scenes


def synth_intent_corpus(
        seed,
        n_scenes,
        n_vehicles=1,
        n_lanes=3,
        change_probability=0.5,
        n_histories=1,
        sample_rate_hz=5,
        hist_s=5,
        pred_s=5,
        **kwargs):
    """
    Scenes whose histories repeat exactly while the futures split between
    lane keeping and a left lane change that starts inside the prediction
    window. `n_histories` distinct histories are cycled through.
    """
    base_seeds = scene_seeds(seed, n_histories)
    rng = np.random.default_rng(seed)
    onset_window_s = (hist_s + 1.0, hist_s + 2.0)
    scenes = []
    for i in range(n_scenes):
        maneuver = LANE_CHANGE_LEFT if rng.uniform() < change_probability else KEEP
        scenes.append(synth_highway(
            base_seeds[i % n_histories],
            n_vehicles,
            n_lanes=n_lanes,
            maneuver_mix={KEEP: 1.0},
            sample_rate_hz=sample_rate_hz,
            hist_s=hist_s,
            pred_s=pred_s,
            onset_window_s=onset_window_s,
            maneuvers=[maneuver] * n_vehicles,
            source="intent-%d-%d" % (seed, i),
            **kwargs))
    return scenes


def follow_leader(
        t,
        leader_x,
        leader_v,
        x_start,
        v_start,
        desired_speed,
        headway_s,
        min_gap_m=2.0,
        max_accel=1.5,
        comfortable_decel=2.0,
        hard_decel=9.0,
        substeps=20):
    """
    Intelligent-driver-model follower behind a leader given as callables
    `leader_x(t)` and `leader_v(t)`, integrated on `substeps` steps per
    frame. Returns (x, vx, ax) sampled at `t`.
    """
    dt = (t[1] - t[0]) / substeps if len(t) > 1 else 1.0
    fine_t = t[0] + dt * np.arange(len(t) * substeps)
    lead_x = leader_x(fine_t)
    lead_v = leader_v(fine_t)
    x = np.zeros(len(fine_t))
    v = np.zeros(len(fine_t))
    a = np.zeros(len(fine_t))
    position, speed = x_start, v_start
    braking_scale = 2.0 * np.sqrt(max_accel * comfortable_decel)
    for i in range(len(fine_t)):
        gap = max(lead_x[i] - position, 0.1)
        wanted_gap = min_gap_m + max(
            0.0, speed * headway_s + speed * (speed - lead_v[i]) / braking_scale)
        accel = max_accel * (
            1.0 - (speed / desired_speed) ** 4 - (wanted_gap / gap) ** 2)
        accel = max(accel, -hard_decel)
        x[i], v[i], a[i] = position, speed, accel
        speed = max(speed + accel * dt, 0.0)
        position += speed * dt
    frames = slice(None, None, substeps)
    return x[frames], v[frames], a[frames]


def synth_car_following(
        seed=0,
        gap_m=12.0,
        speed=25.0,
        brake=-3.0,
        n_lanes=3,
        far_lanes=2,
        far_offset_m=60.0,
        sample_rate_hz=5,
        hist_s=5,
        pred_s=5,
        lane_width=LANE_WIDTH):
    """
    Three vehicles on an `n_lanes` road: a follower (id 0) keeping its gap
    to a leader `gap_m` ahead in the same lane (id 1), which brakes to a
    stop once the prediction window starts, and a vehicle `far_lanes`
    lanes away and `far_offset_m` ahead (id 2).
    """
    require_integer(n_lanes, "n_lanes")
    require_integer(far_lanes, "far_lanes")
    if not 0 < far_lanes < n_lanes:
        raise ConfigError(
            "far_lanes must be between 1 and %d on a %d lane road, got %d" % (
                n_lanes - 1, n_lanes, far_lanes))
    rng = np.random.default_rng(seed)
    hist_frames = int(round(hist_s * sample_rate_hz))
    pred_frames = int(round(pred_s * sample_rate_hz))
    total = hist_frames + pred_frames
    t = np.arange(total) / float(sample_rate_hz)
    x0 = rng.uniform(0.0, 20.0)
    jitter = rng.uniform(-0.5, 0.5, size=3)

    leader_start = x0 + gap_m
    leader_speed = speed + jitter[1]
    stop_s = leader_speed / -brake

    def braking_time(times):
        return np.clip(times - hist_s, 0.0, stop_s)

    def leader_x(times):
        after = braking_time(times)
        return leader_start + leader_speed * times + 0.5 * brake * after ** 2

    def leader_v(times):
        return leader_speed + brake * braking_time(times)

    leader_ax = np.where((t >= hist_s) & (t < hist_s + stop_s), brake, 0.0)
    follower_speed = speed + jitter[0]
    follower = follow_leader(
        t, leader_x, leader_v,
        x_start=x0,
        v_start=follower_speed,
        desired_speed=1.3 * speed,
        headway_s=max(gap_m - 2.0, 0.0) / speed)
    far_speed = speed + jitter[2]
    far_x = x0 + far_offset_m + far_speed * t

    zeros = np.zeros(total)
    lane0 = 0.5 * lane_width
    features = np.stack([
        stack_states(follower[0], np.full(total, lane0), follower[1], zeros, follower[2], zeros),
        stack_states(leader_x(t), np.full(total, lane0), leader_v(t), zeros, leader_ax, zeros),
        stack_states(
            far_x, np.full(total, lane0 + far_lanes * lane_width),
            np.full(total, far_speed), zeros, zeros, zeros),
    ])
    return Scene(
        features=features,
        mask=np.ones((3, total), dtype=bool),
        hist_frames=hist_frames,
        pred_frames=pred_frames,
        ids=[0, 1, 2],
        meta={
            "source": "car-following-%d" % seed,
            "offset": 0,
            "sample_rate_hz": sample_rate_hz,
            "roles": ["follower", "leader", "far"],
            "lane_width": lane_width,
            "n_lanes": n_lanes,
        })
