import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from intentformer.errors import DegenerateInputError, DimensionError
from intentformer.model import (
    ModePrediction,
    constant_velocity_prior,
    forward,
    integrate_offsets,
    select_best,
)
from intentformer.params import init_params
from intentformer.scene import normalize_scene
from intentformer.tensor import Tensor

from .toy import random_scene, toy_config


def eq_(x, y):
    assert x == y


def predict(config, scene, seed=0):
    return forward(scene, init_params(config, seed=seed), config)


def test_forward_shapes_and_probabilities():
    config = toy_config(num_modes=3)
    scene, _ = normalize_scene(random_scene())
    pred = predict(config, scene)
    eq_(pred.trajectories.shape, (3, 3, config.pred_frames, 2))
    eq_(pred.offsets.shape, (3, 3, config.pred_frames, 2))
    eq_(pred.probabilities.shape, (3, 3))
    assert pred.sigma is None
    assert_allclose(pred.probabilities.data.sum(axis=1), 1.0)
    assert pred.valid.all()
    eq_(pred.ids, (0, 1, 2))


def test_forward_is_deterministic():
    config = toy_config()
    scene = random_scene()
    a = predict(config, scene)
    b = predict(config, scene)
    assert_array_equal(a.trajectories.data, b.trajectories.data)
    assert_array_equal(a.probabilities.data, b.probabilities.data)


def test_single_mode_probability_is_one():
    config = toy_config(num_modes=1)
    pred = predict(config, random_scene())
    assert_array_equal(pred.probabilities.data, np.ones((3, 1)))


def test_trajectories_integrate_offsets():
    config = toy_config(motion_prior="none")
    scene = random_scene()
    pred = predict(config, scene)
    expected = integrate_offsets(pred.offsets, scene.last_observed_positions())
    assert_allclose(pred.trajectories.data, expected.data)


def test_trajectories_add_the_constant_velocity_prior():
    scene = random_scene()
    with_prior = predict(toy_config(), scene)
    without = predict(toy_config(motion_prior="none"), scene)
    assert_allclose(with_prior.offsets.data, without.offsets.data)
    prior = constant_velocity_prior(scene, scene.pred_frames)
    assert_allclose(
        with_prior.trajectories.data, without.trajectories.data + prior[:, None])


def test_constant_velocity_prior_skips_unobserved_frames():
    scene = random_scene(n_vehicles=3)
    hist = scene.hist_frames
    features = scene.features.copy()
    frames = np.arange(scene.total_frames)
    features[:, :, 0] = 2.0 * frames
    features[:, :, 1] = -0.5 * frames
    mask = scene.mask.copy()
    # vehicle 1 misses its last frame and the one before, vehicle 2 is seen once
    mask[1, hist - 3:hist] = [True, False, False]
    mask[2, :hist] = False
    mask[2, 0] = True
    prior = constant_velocity_prior(
        scene.replace(features=features, mask=mask), scene.pred_frames)
    steps = np.arange(1, scene.pred_frames + 1)
    assert_allclose(prior[0, :, 0], 2.0 * steps)
    assert_allclose(prior[0, :, 1], -0.5 * steps)
    assert_allclose(prior[1, :, 0], 2.0 * (steps + 2))
    assert_allclose(prior[2], 0.0)


def test_integrate_offsets_accumulates_over_modes():
    offsets = np.zeros((1, 3, 1, 2))
    offsets[0, :, 0, 0] = [1.0, 2.0, 3.0]
    out = integrate_offsets(Tensor(offsets), np.zeros((1, 2)), displacement=False).data
    assert_allclose(out[0, :, 0, 0], [1.0, 3.0, 6.0])


def test_integrate_offsets_displacement_over_time():
    offsets = np.ones((1, 2, 3, 2))
    out = integrate_offsets(Tensor(offsets), np.array([[10.0, 0.0]])).data
    assert_allclose(out[0, 0, :, 0], [11.0, 12.0, 13.0])
    assert_allclose(out[0, 1, :, 0], [12.0, 14.0, 16.0])


def test_mode_depends_only_on_earlier_blocks():
    rng = np.random.default_rng(0)
    offsets = rng.normal(size=(2, 4, 3, 2))
    changed = offsets.copy()
    changed[:, 2] += 5.0
    last = rng.normal(size=(2, 2))
    out = integrate_offsets(Tensor(offsets), last).data
    out_changed = integrate_offsets(Tensor(changed), last).data
    assert_array_equal(out[:, :2], out_changed[:, :2])
    assert not np.allclose(out[:, 2:], out_changed[:, 2:])


def test_masked_history_values_are_not_read():
    config = toy_config()
    scene = random_scene()
    mask = scene.mask.copy()
    mask[0, 1] = False
    mask[2, 0] = False
    clean = scene.replace(mask=mask)
    features = scene.features.copy()
    features[0, 1] = 1e9
    features[2, 0] = -1e9
    poisoned = scene.replace(features=features, mask=mask)
    a = predict(config, clean)
    b = predict(config, poisoned)
    assert_array_equal(a.trajectories.data, b.trajectories.data)
    assert_array_equal(a.probabilities.data, b.probabilities.data)


def test_future_values_are_not_read():
    config = toy_config()
    scene = random_scene()
    features = scene.features.copy()
    features[:, config.hist_frames:] += 100.0
    a = predict(config, scene)
    b = predict(config, scene.replace(features=features))
    assert_array_equal(a.trajectories.data, b.trajectories.data)
    assert_array_equal(a.probabilities.data, b.probabilities.data)


def test_phantom_vehicle_changes_nothing():
    config = toy_config()
    scene = random_scene()
    base = predict(config, scene)
    pred = predict(config, scene.with_phantom(fill_value=123.0))
    assert_allclose(pred.trajectories.data[:3], base.trajectories.data, atol=1e-10)
    assert_allclose(pred.probabilities.data[:3], base.probabilities.data, atol=1e-10)
    assert_array_equal(pred.valid, [True, True, True, False])
    assert_array_equal(pred.trajectories.data[3], 0.0)
    assert_allclose(pred.probabilities.data[3], 1.0 / config.num_modes)


def test_permutation_equivariance():
    config = toy_config(num_modes=3)
    scene, _ = normalize_scene(random_scene(n_vehicles=4))
    order = [3, 1, 0, 2]
    base = predict(config, scene)
    pred = predict(config, scene.permuted(order))
    assert_allclose(pred.trajectories.data, base.trajectories.data[order], atol=1e-9)
    assert_allclose(pred.probabilities.data, base.probabilities.data[order], atol=1e-9)


def test_without_spatial_attention_vehicles_are_independent():
    config = toy_config(spatial_enabled=False)
    scene = random_scene()
    base = predict(config, scene)
    pred = predict(config, scene.with_vehicle_masked(1))
    for i in (0, 2):
        assert_allclose(pred.trajectories.data[i], base.trajectories.data[i], atol=1e-10)
        assert_allclose(pred.probabilities.data[i], base.probabilities.data[i], atol=1e-10)


def test_with_spatial_attention_neighbors_matter():
    config = toy_config()
    scene = random_scene()
    base = predict(config, scene)
    pred = predict(config, scene.with_vehicle_masked(1))
    assert not np.allclose(pred.probabilities.data[0], base.probabilities.data[0])
    # trajectories come from the per-vehicle decoder only
    assert_allclose(pred.trajectories.data[0], base.trajectories.data[0], atol=1e-10)


def test_gaussian_head_sigma_floor():
    config = toy_config(gaussian_head=True, sigma_floor=0.05)
    pred = predict(config, random_scene().with_phantom())
    eq_(pred.sigma.shape, pred.trajectories.shape)
    assert (pred.sigma.data[:3] >= 0.05).all()
    assert_array_equal(pred.sigma.data[3], 1.0)


def test_forward_frame_mismatch():
    config = toy_config()
    with pytest.raises(DimensionError):
        predict(config, random_scene(pred_frames=5))


def test_forward_without_any_history():
    config = toy_config()
    scene = random_scene()
    mask = scene.mask.copy()
    mask[:, :config.hist_frames] = False
    with pytest.raises(DegenerateInputError):
        predict(config, scene.replace(mask=mask))


def test_select_best_lowest_index_on_ties():
    trajectories = np.zeros((2, 3, 1, 2))
    trajectories[:, :, 0, 0] = [[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]]
    pred = ModePrediction(
        trajectories=trajectories,
        probabilities=np.array([[0.25, 0.5, 0.25], [0.4, 0.2, 0.4]]))
    best, index = select_best(pred)
    assert_array_equal(index, [1, 0])
    assert_allclose(best[:, 0, 0], [1.0, 0.0])
