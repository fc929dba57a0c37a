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

"""Vehicle states, fixed-length scenes and their coordinate transforms"""

from __future__ import print_function, division, absolute_import

import hashlib

import numpy as np

from .errors import DataError, DimensionError, UsageError

FEATURE_COLUMNS = ("x", "y", "vx", "vy", "ax", "ay", "theta", "yaw")
NUM_FEATURES = len(FEATURE_COLUMNS)
POSITION_SLICE = slice(0, 2)
# typical magnitudes (m, m/s, m/s^2, rad); network inputs are divided by these
FEATURE_SCALES = np.array([100.0, 100.0, 10.0, 10.0, 1.0, 1.0, 1.0, 1.0])


def wrap_angle(theta):
    """Wrap angles into [-pi, pi]"""
    theta = np.asarray(theta, dtype=np.float64)
    inside = np.abs(theta) <= np.pi
    return np.where(inside, theta, np.arctan2(np.sin(theta), np.cos(theta)))


class MotionState(object):
    """Kinematic state of one vehicle at one frame"""

    def __init__(self, t, vehicle_id, p, v, a, theta, yaw):
        self.t = int(t)
        self.vehicle_id = vehicle_id
        self.p = (float(p[0]), float(p[1]))
        self.v = (float(v[0]), float(v[1]))
        self.a = (float(a[0]), float(a[1]))
        self.theta = float(theta)
        self.yaw = float(yaw)

    @classmethod
    def from_array(cls, t, vehicle_id, values):
        values = np.asarray(values, dtype=np.float64)
        return cls(
            t=t,
            vehicle_id=vehicle_id,
            p=values[0:2],
            v=values[2:4],
            a=values[4:6],
            theta=values[6],
            yaw=values[7])

    def as_array(self):
        return np.array(
            self.p + self.v + self.a + (self.theta, self.yaw),
            dtype=np.float64)

    def __eq__(self, other):
        return (
            isinstance(other, MotionState) and
            self.t == other.t and
            self.vehicle_id == other.vehicle_id and
            np.array_equal(self.as_array(), other.as_array()))

    def __repr__(self):
        return "MotionState(t=%d, vehicle_id=%s, p=%s)" % (
            self.t, self.vehicle_id, self.p)


class VehicleTrack(object):
    """
    One vehicle's recorded states, sorted by frame.

    Parameters
    ----------
    vehicle_id : int

    frames : array of int, shape (L,)
        Strictly increasing frame indices.

    states : array of float, shape (L, 8)
        Rows laid out as FEATURE_COLUMNS.
    """
    def __init__(self, vehicle_id, frames, states):
        frames = np.asarray(frames, dtype=np.int64)
        states = np.asarray(states, dtype=np.float64)
        if states.shape != (len(frames), NUM_FEATURES):
            raise DimensionError(
                "Track %s: expected states of shape (%d, %d), got %s" % (
                    vehicle_id, len(frames), NUM_FEATURES, states.shape))
        if len(frames) > 1 and np.any(np.diff(frames) <= 0):
            raise DataError(
                "Track %s: frames are not strictly increasing" % (vehicle_id,))
        if not np.all(np.isfinite(states)):
            raise DataError("Track %s contains non-finite values" % (vehicle_id,))
        self.vehicle_id = vehicle_id
        self.frames = frames
        self.states = states

    def __len__(self):
        return len(self.frames)

    def state_at(self, i):
        return MotionState.from_array(self.frames[i], self.vehicle_id, self.states[i])

    def __repr__(self):
        return "VehicleTrack(vehicle_id=%s, frames=%d)" % (self.vehicle_id, len(self))


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


class Scene(object):
    """
    A fixed-length window of N vehicles over T = hist_frames + pred_frames.

    Parameters
    ----------
    features : array, shape (N, T, 8)

    mask : bool array, shape (N, T)
        True where the vehicle was observed at that frame.

    hist_frames : int

    pred_frames : int

    ids : sequence of vehicle identifiers, length N

    meta : dict, optional
        Provenance, at least "source", "offset" and "sample_rate_hz".
    """
    def __init__(self, features, mask, hist_frames, pred_frames, ids, meta=None):
        features = _frozen(features, np.float64)
        mask = _frozen(mask, bool)
        if features.ndim != 3 or features.shape[2] != NUM_FEATURES:
            raise DimensionError(
                "Scene features must have shape (N, T, %d), got %s" % (
                    NUM_FEATURES, features.shape))
        if mask.shape != features.shape[:2]:
            raise DimensionError(
                "Scene mask shape %s does not match features %s" % (
                    mask.shape, features.shape))
        if hist_frames < 1 or pred_frames < 0:
            raise DimensionError(
                "Scene needs hist_frames >= 1 and pred_frames >= 0, got %d/%d" % (
                    hist_frames, pred_frames))
        if features.shape[1] != hist_frames + pred_frames:
            raise DimensionError(
                "Scene has %d frames but hist_frames + pred_frames = %d" % (
                    features.shape[1], hist_frames + pred_frames))
        if len(ids) != features.shape[0]:
            raise DimensionError(
                "Scene has %d vehicles but %d ids" % (features.shape[0], len(ids)))
        self.features = features
        self.mask = mask
        self.hist_frames = int(hist_frames)
        self.pred_frames = int(pred_frames)
        self.ids = tuple(ids)
        self.meta = dict(meta or {})

    @property
    def num_vehicles(self):
        return self.features.shape[0]

    @property
    def total_frames(self):
        return self.features.shape[1]

    @property
    def sample_rate_hz(self):
        return self.meta.get("sample_rate_hz")

    @property
    def source(self):
        return self.meta.get("source")

    @property
    def history_features(self):
        return self.features[:, :self.hist_frames]

    @property
    def history_mask(self):
        return self.mask[:, :self.hist_frames]

    @property
    def future_positions(self):
        return self.features[:, self.hist_frames:, POSITION_SLICE]

    @property
    def future_mask(self):
        return self.mask[:, self.hist_frames:]

    def has_history(self):
        """Per vehicle: at least one observed history frame"""
        return self.history_mask.any(axis=1)

    def last_history_index(self):
        """Index of each vehicle's last observed history frame (-1 if none)"""
        hist = self.history_mask
        reversed_first = np.argmax(hist[:, ::-1], axis=1)
        last = self.hist_frames - 1 - reversed_first
        return np.where(hist.any(axis=1), last, -1)

    def last_observed_positions(self):
        last = self.last_history_index()
        positions = np.zeros((self.num_vehicles, 2))
        present = last >= 0
        rows = np.nonzero(present)[0]
        positions[rows] = self.features[rows, last[rows], POSITION_SLICE]
        return positions

    def replace(self, features=None, mask=None, ids=None, meta=None):
        return Scene(
            features=self.features if features is None else features,
            mask=self.mask if mask is None else mask,
            hist_frames=self.hist_frames,
            pred_frames=self.pred_frames,
            ids=self.ids if ids is None else ids,
            meta=self.meta if meta is None else meta)

    def index_of(self, vehicle_id):
        try:
            return self.ids.index(vehicle_id)
        except ValueError:
            raise UsageError(
                "Vehicle %s is not part of scene %s" % (vehicle_id, self.meta))

    def with_vehicle_masked(self, index):
        """Same scene with every frame of vehicle `index` marked absent"""
        mask = self.mask.copy()
        mask[index, :] = False
        return self.replace(mask=mask)

    def permuted(self, order):
        order = np.asarray(order)
        return self.replace(
            features=self.features[order],
            mask=self.mask[order],
            ids=[self.ids[i] for i in order])

    def with_phantom(self, vehicle_id=None, fill_value=0.0):
        """Append a vehicle that is absent on every frame"""
        if vehicle_id is None:
            vehicle_id = "phantom"
        features = np.concatenate([
            self.features,
            np.full((1, self.total_frames, NUM_FEATURES), fill_value)])
        mask = np.concatenate([
            self.mask, np.zeros((1, self.total_frames), dtype=bool)])
        return self.replace(features=features, mask=mask, ids=self.ids + (vehicle_id,))

    def content_digest(self):
        """SHA-1 over features, mask and frame split"""
        digest = hashlib.sha1()
        digest.update(np.ascontiguousarray(self.features).tobytes())
        digest.update(np.ascontiguousarray(self.mask).tobytes())
        digest.update(("%d/%d" % (self.hist_frames, self.pred_frames)).encode("utf-8"))
        return digest.hexdigest()

    def __repr__(self):
        return "Scene(N=%d, T=%d+%d, source=%s)" % (
            self.num_vehicles, self.hist_frames, self.pred_frames, self.source)


class SceneTransform(object):
    """Translation taking original coordinates into a scene's local frame"""

    def __init__(self, origin):
        self.origin = np.array(origin, dtype=np.float64).reshape(2)

    def apply(self, points):
        """Original -> normalized, for arrays whose last axis is (x, y)"""
        return np.asarray(points, dtype=np.float64) - self.origin

    def invert(self, points):
        """Normalized -> original"""
        return np.asarray(points, dtype=np.float64) + self.origin

    def __repr__(self):
        return "SceneTransform(origin=%s)" % (self.origin.tolist(),)


def normalize_scene(scene):
    """
    Translate positions so that the mean last-history position of the
    vehicles is the origin.

    Returns (normalized scene, SceneTransform). Velocities, accelerations
    and angles are translation invariant and left untouched.
    """
    has_history = scene.has_history()
    if has_history.any():
        origin = scene.last_observed_positions()[has_history].mean(axis=0)
    else:
        origin = np.zeros(2)
    transform = SceneTransform(origin)
    features = scene.features.copy()
    features[:, :, POSITION_SLICE] = transform.apply(features[:, :, POSITION_SLICE])
    meta = dict(scene.meta)
    meta["origin"] = transform.origin.tolist()
    return scene.replace(features=features, meta=meta), transform


def denormalize_scene(scene, transform):
    features = scene.features.copy()
    features[:, :, POSITION_SLICE] = transform.invert(features[:, :, POSITION_SLICE])
    meta = dict(scene.meta)
    meta.pop("origin", None)
    return scene.replace(features=features, meta=meta)


def dataset_digest(scenes):
    digest = hashlib.sha1()
    for scene in scenes:
        digest.update(scene.content_digest().encode("ascii"))
    return digest.hexdigest()


class DatasetSplit(object):
    """Train and test scenes drawn from disjoint source recordings"""

    def __init__(self, train, test, sample_rate_hz):
        self.train = list(train)
        self.test = list(test)
        self.sample_rate_hz = sample_rate_hz
        overlap = (
            set(scene.source for scene in self.train) &
            set(scene.source for scene in self.test))
        overlap.discard(None)
        if overlap:
            raise DataError(
                "Train and test scenes share source recordings: %s" % (
                    ", ".join(sorted(str(s) for s in overlap)),))

    def digest(self):
        return dataset_digest(self.train + self.test)

    def __repr__(self):
        return "DatasetSplit(train=%d, test=%d, sample_rate_hz=%s)" % (
            len(self.train), len(self.test), self.sample_rate_hz)


def build_split(train_scenes, test_scenes, sample_rate_hz=None):
    if sample_rate_hz is None:
        rates = set(s.sample_rate_hz for s in list(train_scenes) + list(test_scenes))
        rates.discard(None)
        if len(rates) > 1:
            raise DataError("Scenes mix sample rates: %s" % sorted(rates))
        sample_rate_hz = rates.pop() if rates else None
    return DatasetSplit(train_scenes, test_scenes, sample_rate_hz)


def split_by_source(scenes, test_fraction=0.2, seed=0):
    """
    Hold out whole source recordings for testing.

    Sources are shuffled with `seed` and assigned to the test side until
    it holds at least `test_fraction` of the sources (at least one when
    there are two or more sources).
    """
    scenes = list(scenes)
    sources = sorted(set(str(scene.source) for scene in scenes))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sources))
    n_test = int(np.ceil(test_fraction * len(sources))) if len(sources) > 1 else 0
    n_test = min(n_test, len(sources) - 1) if sources else 0
    test_sources = set(sources[i] for i in order[:n_test])
    train = [s for s in scenes if str(s.source) not in test_sources]
    test = [s for s in scenes if str(s.source) in test_sources]
    return build_split(train, test)
