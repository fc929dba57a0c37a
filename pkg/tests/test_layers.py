import numpy as np
from numpy.testing import assert_allclose
import pytest

from intentformer.errors import (
    ConfigError, DegenerateInputError, DimensionError, UsageError)
from intentformer.layers import (
    embed_inputs,
    input_features,
    mlp,
    mode_head,
    pairwise_differences,
    positional_encoding,
    relative_bias,
    spatial_attention_block,
    temporal_attention_block,
)
from intentformer.params import init_params
from intentformer.scene import FEATURE_SCALES
from intentformer.tensor import Tensor

from .toy import random_scene, toy_config


def eq_(x, y):
    assert x == y


def test_positional_encoding_first_frame():
    assert_allclose(positional_encoding(1, 4).data[0], [0.0, 1.0, 0.0, 1.0])


def test_positional_encoding_second_frame():
    assert_allclose(positional_encoding(2, 2).data[1], [0.84147, 0.54030], atol=1e-5)


def test_positional_encoding_odd_width():
    with pytest.raises(ConfigError):
        positional_encoding(3, 5)


def test_embed_inputs_with_zero_mlp_is_positional_encoding():
    config = toy_config()
    params = init_params(config)
    params["input_mlp.w2"].data = np.zeros(params["input_mlp.w2"].shape)
    params["input_mlp.b2"].data = np.zeros(params["input_mlp.b2"].shape)
    scene = random_scene()
    embedded = embed_inputs(scene, params, config).data
    pe = positional_encoding(config.total_frames, config.d_model).data
    for i in range(scene.num_vehicles):
        assert_allclose(embedded[i], pe[:config.hist_frames])


def test_embed_inputs_intent_offset():
    config = toy_config()
    params = init_params(config)
    scene = random_scene()
    e0 = embed_inputs(scene, params, config, intent_index=0).data
    e1 = embed_inputs(scene, params, config, intent_index=1).data
    intents = params["intent_embeddings"].data
    expected = np.broadcast_to(intents[1] - intents[0], e0.shape)
    assert_allclose(e1 - e0, expected, atol=1e-12)


def test_embed_inputs_bad_intent_index():
    config = toy_config()
    with pytest.raises(UsageError):
        embed_inputs(random_scene(), init_params(config), config, intent_index=2)


def test_embed_inputs_history_mismatch():
    config = toy_config()
    scene = random_scene(hist_frames=3, pred_frames=4)
    with pytest.raises(DimensionError):
        embed_inputs(scene, init_params(config), config)


def test_embed_inputs_ignores_masked_feature_values():
    config = toy_config()
    params = init_params(config)
    scene = random_scene()
    mask = scene.mask.copy()
    mask[1, 1] = False
    clean = scene.replace(mask=mask)
    features = scene.features.copy()
    features[1, 1] = 1e9
    poisoned = scene.replace(features=features, mask=mask)
    assert_allclose(
        embed_inputs(poisoned, params, config).data,
        embed_inputs(clean, params, config).data)


def test_temporal_block_masked_frames_do_not_leak():
    config = toy_config()
    weights = init_params(config).scope("encoder.0")
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 4, config.d_model))
    mask = np.array([[True, False, True, True], [True, True, True, False]])
    poisoned = x.copy()
    poisoned[~mask] = 1e6
    out = temporal_attention_block(Tensor(x), mask, weights, config).data
    out_poisoned = temporal_attention_block(Tensor(poisoned), mask, weights, config).data
    assert_allclose(out[mask], out_poisoned[mask], atol=1e-12)


def test_temporal_block_empty_sequence():
    config = toy_config()
    weights = init_params(config).scope("encoder.0")
    mask = np.array([[True, True, True, True], [False, False, False, False]])
    with pytest.raises(DegenerateInputError):
        temporal_attention_block(
            Tensor(np.zeros((2, 4, config.d_model))), mask, weights, config)


def test_pairwise_differences_antisymmetric():
    config = toy_config()
    deltas, valid = pairwise_differences(random_scene(), config)
    assert valid.all()
    assert_allclose(deltas, -deltas.transpose(1, 0, 2))
    for i in range(3):
        assert_allclose(deltas[i, i], 0.0)


def test_pairwise_differences_last_common_frame():
    config = toy_config()
    scene = random_scene(n_vehicles=2)
    mask = scene.mask.copy()
    mask[1, 3] = False
    scene = scene.replace(mask=mask)
    deltas, _ = pairwise_differences(scene, config)
    expected = scene.features[0, 2] - scene.features[1, 2]
    assert_allclose(deltas[0, 1], expected)


def test_relative_bias_zero_without_common_frame():
    config = toy_config()
    params = init_params(config)
    scene = random_scene(n_vehicles=3)
    mask = scene.mask.copy()
    mask[0, 2:4] = False
    mask[1, 0:2] = False
    scene = scene.replace(mask=mask)
    bias = relative_bias(scene, params, config).data
    eq_(bias.shape, (config.num_heads, 3, 3))
    assert_allclose(bias[:, 0, 1], 0.0)
    assert_allclose(bias[:, 1, 0], 0.0)
    assert np.abs(bias[:, 0, 2]).sum() > 0


def spatial_inputs(seed=0, n=3):
    config = toy_config()
    params = init_params(config)
    weights = params.scope("prob_decoder.0.spatial")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 4, config.d_model))
    bias = rng.normal(size=(config.num_heads, n, n))
    return config, weights, x, bias


def test_spatial_block_absent_query_unchanged():
    config, weights, x, bias = spatial_inputs()
    presence = np.ones((3, 4), dtype=bool)
    presence[2, 1] = False
    out = spatial_attention_block(Tensor(x), presence, Tensor(bias), weights, config).data
    assert_allclose(out[2, 1], x[2, 1])
    assert np.abs(out[0, 1] - x[0, 1]).max() > 0


def test_spatial_block_absent_key_ignored():
    config, weights, x, bias = spatial_inputs()
    presence = np.ones((3, 4), dtype=bool)
    presence[2, 1] = False
    poisoned = x.copy()
    poisoned[2, 1] = 1e6
    out = spatial_attention_block(Tensor(x), presence, Tensor(bias), weights, config).data
    out_poisoned = spatial_attention_block(
        Tensor(poisoned), presence, Tensor(bias), weights, config).data
    assert_allclose(out[:2, 1], out_poisoned[:2, 1], atol=1e-12)


def test_spatial_block_permutation_equivariant():
    config, weights, x, bias = spatial_inputs(n=4)
    order = np.array([2, 0, 3, 1])
    presence = np.ones((4, 4), dtype=bool)
    presence[3, 0] = False
    out = spatial_attention_block(Tensor(x), presence, Tensor(bias), weights, config).data
    permuted = spatial_attention_block(
        Tensor(x[order]),
        presence[order],
        Tensor(bias[:, order][:, :, order]),
        weights,
        config).data
    assert_allclose(permuted, out[order], atol=1e-9)


def test_spatial_block_bias_shape_checked():
    config, weights, x, _ = spatial_inputs()
    with pytest.raises(DimensionError):
        spatial_attention_block(
            Tensor(x), np.ones((3, 4), dtype=bool),
            Tensor(np.zeros((config.num_heads, 2, 2))), weights, config)


def test_mode_head_uses_each_modes_output_layer():
    rng = np.random.default_rng(0)
    weights = {
        "w1": Tensor(rng.normal(size=(4, 6))),
        "b1": Tensor(rng.normal(size=6)),
        "w2": Tensor(rng.normal(size=(3, 6, 2))),
        "b2": Tensor(rng.normal(size=(3, 2))),
    }
    states = rng.normal(size=(2, 3, 5, 4))
    out = mode_head(Tensor(states), weights).data
    eq_(out.shape, (2, 3, 5, 2))
    for k in range(3):
        single = {
            "w1": weights["w1"], "b1": weights["b1"],
            "w2": Tensor(weights["w2"].data[k:k + 1]),
            "b2": Tensor(weights["b2"].data[k:k + 1]),
        }
        assert_allclose(out[:, k:k + 1], mode_head(Tensor(states[:, k:k + 1]), single).data)
    with pytest.raises(DimensionError):
        mode_head(Tensor(states[:, :2]), weights)


def test_embed_inputs_scales_features():
    config = toy_config()
    params = init_params(config)
    scene = random_scene()
    scaled = scene.replace(features=scene.features * FEATURE_SCALES)
    expected = mlp(Tensor(input_features(scene, config)), params.scope("input_mlp")).data
    expected = expected + positional_encoding(
        config.total_frames, config.d_model).data[:config.hist_frames]
    assert_allclose(embed_inputs(scaled, params, config).data, expected)
