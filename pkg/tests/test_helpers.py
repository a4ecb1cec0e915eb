import numpy as np
import pytest

from spikemap.errors import UsageError
from spikemap.helpers import (
    create_conv_chain,
    create_depthwise_pair,
    create_mlp,
    random_network,
    toy_dataset,
)
from spikemap.model_ir import LayerKind, ResetMode


def test_create_conv_chain():
    """The first convolution keeps the size; the others halve it and double the channels."""
    network = create_conv_chain(16, 8)
    assert [layer.shape for layer in network.layers] == [
        (16, 16, 3),
        (16, 16, 8),
        (8, 8, 16),
        (4, 4, 32),
    ]
    assert network.name == "cnn_w8_s16"
    assert all(np.all(layer.weights == 1) for layer in network.layers[1:])


def test_create_conv_chain_random_weights():
    """Random weights are small integers and reproducible from the seed."""
    first = create_conv_chain(8, 4, rng=np.random.default_rng(0))
    second = create_conv_chain(8, 4, rng=np.random.default_rng(0))
    for a, b in zip(first.layers[1:], second.layers[1:]):
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.weights.min() >= -4
        assert a.weights.max() <= 8


def test_create_mlp():
    """Layer widths follow the sizes, input first."""
    network = create_mlp([6, 5, 3], soft_reset=True)
    assert [layer.n_neurons for layer in network.layers] == [6, 5, 3]
    assert [layer.id for layer in network.layers] == ["input", "dense0", "dense1"]
    assert network.layers[1].weights.shape == (6, 5)
    assert all(layer.neuron_config.reset_mode is ResetMode.SOFT for layer in network.layers[1:])
    with pytest.raises(UsageError):
        create_mlp([4])


def test_create_depthwise_pair():
    """Both variants have equal feature maps; only the depthwise one stays in channel."""
    standard, depthwise = create_depthwise_pair(8, 4)
    assert standard.output_layer.shape == depthwise.output_layer.shape == (8, 8, 4)
    assert standard.output_layer.kind is LayerKind.CONV2D
    assert depthwise.output_layer.kind is LayerKind.DEPTHWISE_CONV2D
    assert depthwise.output_layer.weights.shape == (3, 3, 4)


@pytest.mark.parametrize("seed", range(5))
def test_random_network_bounds(seed):
    """Random networks respect the layer and neuron limits."""
    network = random_network(np.random.default_rng(seed), max_layers=3, max_neurons=200)
    assert 2 <= len(network.layers) <= 3
    assert network.total_neurons <= 200
    assert network.lowered


def test_toy_dataset_margin():
    """Every sample is separated by at least the margin and labeled by the larger pair."""
    inputs, labels = toy_dataset(np.random.default_rng(0), 50, margin=0.3)
    gap = inputs[:, 0] + inputs[:, 1] - inputs[:, 2] - inputs[:, 3]
    assert inputs.shape == (50, 4)
    assert np.all(np.abs(gap) >= 0.3)
    np.testing.assert_array_equal(labels, (gap < 0).astype(int))
