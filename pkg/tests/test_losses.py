import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from intentformer.errors import DegenerateInputError, UsageError
from intentformer.losses import (
    HALF_LOG_TWO_PI,
    compute_loss,
    gaussian_nll,
    prob_loss,
    wta_loss,
)
from intentformer.model import ModePrediction
from intentformer.tensor import ComputationTape, Tensor

from .toy import random_scene, toy_config


def eq_(x, y):
    assert x == y


def two_mode_prediction():
    # one vehicle, one future frame at the origin; modes at (1, 1) and (2, 1)
    trajectories = Tensor(
        [[[[1.0, 1.0]], [[2.0, 1.0]]]], requires_grad=True)
    probabilities = Tensor([[0.5, 0.5]], requires_grad=True)
    return ModePrediction(trajectories, probabilities)


def test_wta_picks_closest_mode():
    pred = two_mode_prediction()
    loss, winner = wta_loss(pred, np.zeros((1, 1, 2)), np.ones((1, 1), dtype=bool))
    eq_(loss.item(), 2.0)
    assert_array_equal(winner, [0])


def test_wta_losing_mode_gets_no_gradient():
    pred = two_mode_prediction()
    with ComputationTape() as tape:
        loss, _ = wta_loss(pred, np.zeros((1, 1, 2)), np.ones((1, 1), dtype=bool))
    tape.backward(loss)
    assert_array_equal(pred.trajectories.grad[0, 1], 0.0)
    assert_allclose(pred.trajectories.grad[0, 0], [[2.0, 2.0]])


def test_wta_masks_future_frames_and_vehicles():
    trajectories = np.zeros((2, 1, 2, 2))
    trajectories[0, 0, 1] = 100.0
    future = np.zeros((2, 2, 2))
    future[1] = 3.0
    mask = np.array([[True, False], [False, False]])
    pred = ModePrediction(Tensor(trajectories), Tensor(np.ones((2, 1))))
    loss, winner = wta_loss(pred, future, mask)
    eq_(loss.item(), 0.0)
    assert_array_equal(winner, [0, -1])


def test_wta_skips_vehicles_without_history():
    pred = ModePrediction(
        Tensor(np.zeros((2, 1, 1, 2))), Tensor(np.ones((2, 1))),
        valid=[True, False])
    _, winner = wta_loss(pred, np.ones((2, 1, 2)), np.ones((2, 1), dtype=bool))
    assert_array_equal(winner, [0, -1])


def test_wta_without_any_future():
    pred = two_mode_prediction()
    with pytest.raises(DegenerateInputError):
        wta_loss(pred, np.zeros((1, 1, 2)), np.zeros((1, 1), dtype=bool))


def test_prob_loss_uniform():
    probabilities = Tensor(np.full((3, 8), 1.0 / 8))
    loss = prob_loss(probabilities, np.array([0, 5, -1]))
    assert_allclose(loss.item(), np.log(8.0))


def test_prob_loss_gradient_only_on_winner():
    probabilities = Tensor([[0.2, 0.8]], requires_grad=True)
    with ComputationTape() as tape:
        loss = prob_loss(probabilities, np.array([1]))
    tape.backward(loss)
    assert_allclose(probabilities.grad, [[0.0, -1.0 / 0.8]])


def test_gaussian_nll_unit_sigma_zero_residual():
    pred = ModePrediction(
        Tensor(np.zeros((1, 2, 3, 2))),
        Tensor([[0.5, 0.5]]),
        sigma=Tensor(np.ones((1, 2, 3, 2))))
    nll = gaussian_nll(pred, np.zeros((1, 3, 2)), np.ones((1, 3), dtype=bool), [1])
    assert_allclose(nll.item(), 0.5 * np.log(2.0 * np.pi))
    assert_allclose(HALF_LOG_TWO_PI, 0.5 * np.log(2.0 * np.pi))


def test_gaussian_nll_sigma_floor():
    pred = ModePrediction(
        Tensor(np.zeros((1, 1, 1, 2))),
        Tensor([[1.0]]),
        sigma=Tensor(np.full((1, 1, 1, 2), 1e-9)))
    nll = gaussian_nll(
        pred, np.zeros((1, 1, 2)), np.ones((1, 1), dtype=bool), [0], sigma_floor=1e-3)
    assert_allclose(nll.item(), np.log(1e-3) + HALF_LOG_TWO_PI)


def test_gaussian_nll_needs_sigma():
    with pytest.raises(UsageError):
        gaussian_nll(
            two_mode_prediction(), np.zeros((1, 1, 2)), np.ones((1, 1), dtype=bool), [0])


def prediction_for(scene, num_modes, sigma=None, seed=0):
    rng = np.random.default_rng(seed)
    n, t = scene.num_vehicles, scene.pred_frames
    trajectories = scene.future_positions[:, None] + rng.normal(size=(n, num_modes, t, 2))
    logits = rng.normal(size=(n, num_modes))
    probabilities = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    return ModePrediction(Tensor(trajectories), Tensor(probabilities), sigma=sigma)


def test_compute_loss_composition():
    config = toy_config(alpha=0.7)
    scene = random_scene()
    losses = compute_loss(prediction_for(scene, 2), scene, config)
    assert losses.gauss is None
    assert_allclose(losses.total.item(), losses.wta.item() + 0.7 * losses.prob.item())
    eq_(sorted(losses.values()), ["prob", "total", "wta"])


def test_compute_loss_with_gaussian_term():
    config = toy_config(alpha=1.0, beta=0.25, gaussian_head=True)
    scene = random_scene()
    sigma = Tensor(np.full((3, 2, config.pred_frames, 2), 0.5))
    losses = compute_loss(prediction_for(scene, 2, sigma=sigma), scene, config)
    assert_allclose(
        losses.total.item(),
        losses.wta.item() + losses.prob.item() + 0.25 * losses.gauss.item())


def test_compute_loss_reports_gauss_without_weight():
    config = toy_config(gaussian_head=True)
    scene = random_scene()
    sigma = Tensor(np.ones((3, 2, config.pred_frames, 2)))
    losses = compute_loss(prediction_for(scene, 2, sigma=sigma), scene, config)
    assert "gauss" in losses.values()
    assert_allclose(losses.total.item(), losses.wta.item() + losses.prob.item())
