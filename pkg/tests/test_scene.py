import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from intentformer.errors import DataError, DimensionError, UsageError
from intentformer.scene import (
    NUM_FEATURES,
    MotionState,
    VehicleTrack,
    build_split,
    denormalize_scene,
    normalize_scene,
    split_by_source,
    wrap_angle,
)

from .toy import random_scene


def eq_(x, y):
    assert x == y


def test_wrap_angle():
    assert_allclose(wrap_angle([0.5, np.pi, 3 * np.pi / 2, -5 * np.pi / 2]),
                    [0.5, np.pi, -np.pi / 2, -np.pi / 2])


def test_motion_state_round_trip():
    values = np.arange(NUM_FEATURES, dtype=float)
    state = MotionState.from_array(3, 7, values)
    eq_(state.p, (0.0, 1.0))
    eq_(state.yaw, 7.0)
    assert_array_equal(state.as_array(), values)
    eq_(state, MotionState.from_array(3, 7, values))


def test_track_validation():
    with pytest.raises(DataError):
        VehicleTrack(1, [0, 2, 1], np.zeros((3, NUM_FEATURES)))
    with pytest.raises(DimensionError):
        VehicleTrack(1, [0, 1], np.zeros((2, 3)))
    states = np.zeros((2, NUM_FEATURES))
    states[1, 0] = np.inf
    with pytest.raises(DataError):
        VehicleTrack(1, [0, 1], states)
    track = VehicleTrack(1, [4, 5], np.ones((2, NUM_FEATURES)))
    eq_(track.state_at(1).t, 5)


def test_scene_shape_checks():
    scene = random_scene()
    with pytest.raises(DimensionError):
        scene.replace(features=np.zeros((3, 8, 5)))
    with pytest.raises(DimensionError):
        scene.replace(mask=np.ones((3, 7), dtype=bool))
    with pytest.raises(DimensionError):
        scene.replace(ids=[0, 1])


def test_scene_is_read_only():
    scene = random_scene()
    with pytest.raises(ValueError):
        scene.features[0, 0, 0] = 1.0


def test_last_history_index():
    mask = np.ones((3, 8), dtype=bool)
    mask[1, 2:4] = False
    mask[2, :4] = False
    scene = random_scene(mask=mask)
    assert_array_equal(scene.last_history_index(), [3, 1, -1])
    assert_array_equal(scene.has_history(), [True, True, False])
    assert_allclose(scene.last_observed_positions()[1], scene.features[1, 1, :2])
    assert_allclose(scene.last_observed_positions()[2], [0.0, 0.0])


def test_normalize_centers_last_positions():
    scene = random_scene()
    normalized, transform = normalize_scene(scene)
    assert_allclose(normalized.last_observed_positions().mean(axis=0), [0.0, 0.0], atol=1e-12)
    assert_array_equal(normalized.features[:, :, 2:], scene.features[:, :, 2:])
    restored = denormalize_scene(normalized, transform)
    assert_allclose(restored.features, scene.features, atol=1e-12)
    assert "origin" not in restored.meta


def test_phantom_does_not_move_origin():
    scene = random_scene()
    _, transform = normalize_scene(scene)
    _, with_phantom = normalize_scene(scene.with_phantom(fill_value=1e6))
    assert_array_equal(transform.origin, with_phantom.origin)


def test_vehicle_masking_and_permutation():
    scene = random_scene()
    masked = scene.with_vehicle_masked(1)
    assert not masked.mask[1].any()
    assert masked.mask[0].all()
    permuted = scene.permuted([2, 0, 1])
    eq_(permuted.ids, (2, 0, 1))
    assert_array_equal(permuted.features[0], scene.features[2])
    eq_(scene.index_of(2), 2)
    with pytest.raises(UsageError):
        scene.index_of("nobody")


def test_content_digest():
    scene = random_scene()
    eq_(scene.content_digest(), random_scene().content_digest())
    assert scene.content_digest() != random_scene(seed=1).content_digest()


def test_split_by_source_keeps_sources_apart():
    scenes = [random_scene(seed=i, source="rec-%d" % (i // 2)) for i in range(10)]
    split = split_by_source(scenes, test_fraction=0.2, seed=0)
    eq_(len(split.train) + len(split.test), 10)
    train_sources = set(s.source for s in split.train)
    test_sources = set(s.source for s in split.test)
    eq_(len(test_sources), 1)
    assert not train_sources & test_sources
    eq_(split.sample_rate_hz, 1)


def test_single_source_stays_in_training():
    scenes = [random_scene(seed=i, source="only") for i in range(3)]
    split = split_by_source(scenes)
    eq_((len(split.train), len(split.test)), (3, 0))


def test_overlapping_split_raises():
    with pytest.raises(DataError):
        build_split([random_scene(source="a")], [random_scene(seed=1, source="a")])
