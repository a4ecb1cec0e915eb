"""Builders for the network families used by sweeps, tests and examples."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import UsageError
from .model_ir import (
    DEFAULT_INPUT_THRESHOLD,
    LayerKind,
    LayerSpec,
    NetworkSpec,
    NeuronConfig,
    Padding,
    ResetMode,
    validate,
)

if TYPE_CHECKING:
    from .model_ir import Shape

_MAX_ATTEMPTS = 100
_SOFT_RESET_SHARE = 0.3


def input_layer(shape: Shape, layer_id: str = "input") -> LayerSpec:
    """An input layer of the given ``(height, width, channels)`` shape."""
    return LayerSpec(
        id=layer_id,
        kind=LayerKind.INPUT,
        output_shape=shape,
        neuron_config=NeuronConfig(threshold=DEFAULT_INPUT_THRESHOLD),
    )


def _neuron(threshold: int, *, soft_reset: bool) -> NeuronConfig:
    reset_mode = ResetMode.SOFT if soft_reset else ResetMode.HARD
    return NeuronConfig(threshold=threshold, reset_mode=reset_mode)


def _weights(rng: np.random.Generator | None, shape: tuple[int, ...]) -> np.ndarray:
    if rng is None:
        return np.ones(shape, dtype=np.float32)
    return rng.integers(-4, 9, size=shape).astype(np.float32)


def create_conv_chain(
    input_size: int,
    width: int,
    *,
    in_channels: int = 3,
    n_conv: int = 3,
    rng: np.random.Generator | None = None,
    soft_reset: bool = False,
) -> NetworkSpec:
    """A chain of 3x3 convolutions, the member of a CNN family.

    The first convolution keeps the input size, each following one halves it
    and doubles the channels.

    Parameters
    ----------
    input_size
        Height and width of the input.
    width
        Channels of the first convolution.
    in_channels
        Channels of the input.
    n_conv
        Number of convolution layers.
    rng
        Source of random integer weights; all-ones weights when omitted.
    soft_reset
        Use soft-reset neurons.

    """
    layers = [input_layer((input_size, input_size, in_channels))]
    channels = in_channels
    for k in range(n_conv):
        out_channels = width * 2**k
        stride = 1 if k == 0 else 2
        layers.append(
            LayerSpec(
                id=f"conv{k}",
                kind=LayerKind.CONV2D,
                kernel=(3, 3),
                strides=(stride, stride),
                padding=Padding.SAME,
                neuron_config=_neuron(16, soft_reset=soft_reset),
                channels=out_channels,
                weights=_weights(rng, (3, 3, channels, out_channels)),
            ),
        )
        channels = out_channels
    return validate(NetworkSpec(name=f"cnn_w{width}_s{input_size}", layers=tuple(layers)))


def create_mlp(
    sizes: list[int] | tuple[int, ...],
    *,
    rng: np.random.Generator | None = None,
    soft_reset: bool = False,
) -> NetworkSpec:
    """A fully connected network with the given layer widths, input first."""
    if len(sizes) < 2:  # noqa: PLR2004
        msg = "An MLP needs an input width and at least one layer width."
        raise UsageError(msg)
    layers = [input_layer((1, 1, sizes[0]))]
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(
            LayerSpec(
                id=f"dense{k}",
                kind=LayerKind.DENSE,
                neuron_config=_neuron(16, soft_reset=soft_reset),
                channels=fan_out,
                weights=_weights(rng, (fan_in, fan_out)),
            ),
        )
    return validate(NetworkSpec(name=f"mlp_{'x'.join(map(str, sizes))}", layers=tuple(layers)))


def create_depthwise_pair(
    input_size: int,
    channels: int,
    *,
    rng: np.random.Generator | None = None,
) -> tuple[NetworkSpec, NetworkSpec]:
    """A standard 3x3 convolution and a depthwise one with equal feature-map sizes."""
    first = input_layer((input_size, input_size, channels))
    conv = LayerSpec(
        id="conv",
        kind=LayerKind.CONV2D,
        kernel=(3, 3),
        strides=(1, 1),
        padding=Padding.SAME,
        neuron_config=_neuron(16, soft_reset=False),
        channels=channels,
        weights=_weights(rng, (3, 3, channels, channels)),
    )
    depthwise = LayerSpec(
        id="conv",
        kind=LayerKind.DEPTHWISE_CONV2D,
        kernel=(3, 3),
        strides=(1, 1),
        padding=Padding.SAME,
        neuron_config=_neuron(16, soft_reset=False),
        weights=_weights(rng, (3, 3, channels)),
    )
    name = f"s{input_size}_c{channels}"
    return (
        validate(NetworkSpec(name=f"standard_{name}", layers=(first, conv))),
        validate(NetworkSpec(name=f"depthwise_{name}", layers=(first, depthwise))),
    )


def _random_layer(
    rng: np.random.Generator,
    k: int,
    in_shape: Shape,
    *,
    soft_reset: bool,
) -> LayerSpec:
    h, w, c = in_shape
    neuron = _neuron(int(rng.integers(4, 32)), soft_reset=soft_reset)
    spatial = (h, w) != (1, 1)
    kind = rng.choice(["conv", "depthwise", "dense"]) if spatial else "dense"
    if kind == "dense":
        units = int(rng.integers(2, 11))
        return LayerSpec(
            id=f"l{k}",
            kind=LayerKind.DENSE,
            neuron_config=neuron,
            channels=units,
            weights=_weights(rng, (h * w * c, units)),
        )
    kh = int(rng.integers(1, min(h, 3) + 1))
    kw = int(rng.integers(1, min(w, 3) + 1))
    stride = int(rng.integers(1, 3))
    padding = Padding.SAME if rng.random() < 0.5 else Padding.VALID  # noqa: PLR2004
    if kind == "depthwise":
        return LayerSpec(
            id=f"l{k}",
            kind=LayerKind.DEPTHWISE_CONV2D,
            kernel=(kh, kw),
            strides=(stride, stride),
            padding=padding,
            neuron_config=neuron,
            weights=_weights(rng, (kh, kw, c)),
        )
    filters = int(rng.integers(1, 5))
    return LayerSpec(
        id=f"l{k}",
        kind=LayerKind.CONV2D,
        kernel=(kh, kw),
        strides=(stride, stride),
        padding=padding,
        neuron_config=neuron,
        channels=filters,
        weights=_weights(rng, (kh, kw, c, filters)),
    )


def random_network(
    rng: np.random.Generator,
    max_layers: int = 4,
    max_neurons: int = 500,
) -> NetworkSpec:
    """A random lowered integer network of at most ``max_layers`` layers.

    Layers are convolutions, depthwise convolutions or dense layers with
    small integer weights; each layer picks its reset mode at random.
    """
    for _ in range(_MAX_ATTEMPTS):
        shape = (int(rng.integers(2, 7)), int(rng.integers(2, 7)), int(rng.integers(1, 4)))
        layers = [input_layer(shape)]
        for k in range(1, int(rng.integers(2, max_layers + 1))):
            soft_reset = bool(rng.random() < _SOFT_RESET_SHARE)
            layer = _random_layer(rng, k, shape, soft_reset=soft_reset)
            network = NetworkSpec(name="random", layers=(*layers, layer), lowered=True)
            shape = validate(network).layers[-1].shape
            layers.append(replace(layer, output_shape=shape))
        if sum(math.prod(layer.shape) for layer in layers) <= max_neurons:
            return validate(NetworkSpec(name="random", layers=tuple(layers), lowered=True))
    msg = f"No random network with at most {max_neurons} neurons after {_MAX_ATTEMPTS} attempts."
    raise UsageError(msg)


def create_toy_classifier() -> NetworkSpec:
    """A two-class classifier on four inputs comparing ``x0 + x1`` against ``x2 + x3``."""
    weights = np.array([[1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, 1.0]], dtype=np.float32)
    layers = (
        input_layer((1, 1, 4)),
        LayerSpec(
            id="output",
            kind=LayerKind.DENSE,
            neuron_config=NeuronConfig(threshold=1),
            channels=2,
            weights=weights,
            biases=np.zeros(2, dtype=np.float32),
        ),
    )
    return validate(NetworkSpec(name="toy_classifier", layers=layers, timesteps=200))


def toy_dataset(
    rng: np.random.Generator,
    n: int,
    margin: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Inputs and labels for `create_toy_classifier`, separated by at least ``margin``."""
    inputs = np.zeros((0, 4))
    while inputs.shape[0] < n:
        batch = rng.random((4 * n, 4))
        gap = batch[:, 0] + batch[:, 1] - batch[:, 2] - batch[:, 3]
        inputs = np.vstack([inputs, batch[np.abs(gap) >= margin]])
    inputs = inputs[:n]
    labels = (inputs[:, 0] + inputs[:, 1] < inputs[:, 2] + inputs[:, 3]).astype(np.int64)
    return inputs, labels
