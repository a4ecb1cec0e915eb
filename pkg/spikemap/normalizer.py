"""Conversion of floating-point network parameters into integer neuron parameters.

Weights are quantized to the integer range of the synapse memory, and every
layer is then rescaled on a calibration batch so that the top of its input
distribution lies near the voltage threshold. Parameters that the hardware
stores as mantissa and exponent are snapped to representable values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .connectivity import unroll
from .errors import (
    BlobError,
    DeadLayer,
    DegenerateWeights,
    EmptyCalibration,
    RangeError,
    ShapeError,
    UsageError,
)
from .model_ir import NetworkSpec, infer_shapes, lower, read_blob

if TYPE_CHECKING:
    from .connectivity import ConnectionPair
    from .model_ir import LayerSpec

logger = logging.getLogger(__name__)

# Re-measured input ranges within this fraction of the threshold are accepted.
CALIBRATION_TOLERANCE = 0.05


@dataclass(frozen=True)
class QuantizationConfig:
    """Bit widths and ranges of the integer parameters.

    Parameters
    ----------
    weight_bits
        Signed bits of a synaptic weight.
    bias_bits
        Signed bits of a bias.
    percentile
        Percentile of ``|W|`` (and of the calibration input range) used as
        the scale, in ``(0, 100]``.
    mantissa_bits
        Signed bits of a mantissa.
    exponent_range
        Inclusive ``(min, max)`` exponent.

    """

    weight_bits: int = 8
    bias_bits: int = 13
    percentile: float = 99.9
    mantissa_bits: int = 8
    exponent_range: tuple[int, int] = (-8, 7)

    def __post_init__(self) -> None:
        for name in ("weight_bits", "bias_bits", "mantissa_bits"):
            if getattr(self, name) < 2:  # noqa: PLR2004
                msg = f"'{name}' must be at least 2, got {getattr(self, name)}."
                raise UsageError(msg)
        if not 0 < self.percentile <= 100:  # noqa: PLR2004
            msg = f"The percentile must lie in (0, 100], got {self.percentile}."
            raise UsageError(msg)
        lo, hi = self.exponent_range
        if lo > hi:
            msg = f"Invalid exponent range {self.exponent_range}."
            raise UsageError(msg)

    @property
    def weight_limits(self) -> tuple[int, int]:
        """``(W-_lim, W+_lim)``."""
        return _limits(self.weight_bits)

    @property
    def bias_limits(self) -> tuple[int, int]:
        """Smallest and largest bias."""
        return _limits(self.bias_bits)

    @property
    def max_mantissa(self) -> int:
        """Largest mantissa magnitude."""
        return 2 ** (self.mantissa_bits - 1) - 1


def _limits(bits: int) -> tuple[int, int]:
    return -(2 ** (bits - 1)), 2 ** (bits - 1) - 1


def round_half_away(values: np.ndarray | float) -> np.ndarray:
    """Round to the nearest integer, halves away from zero."""
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


class QuantizedWeight(NamedTuple):
    """An integer stored as ``mantissa * 2**exponent``."""

    mantissa: int
    exponent: int

    @property
    def value(self) -> int:
        """The represented integer."""
        return self.mantissa * 2**self.exponent


@dataclass(frozen=True)
class LayerScale:
    """Scale factors chosen for one layer."""

    sigma: float
    lam: float
    threshold: int


def quantize_weights(
    weights: np.ndarray,
    cfg: QuantizationConfig | None = None,
) -> tuple[np.ndarray, float]:
    """Map weights onto the signed integer range of ``cfg.weight_bits``.

    The weights are divided by ``sigma``, the chosen percentile of their
    magnitudes, scaled to the larger of the two limits and rounded. Clipping
    only matters when ``sigma`` comes from a percentile below 100.

    Returns
    -------
    tuple
        The integer weights (as int64) and ``sigma``.

    """
    cfg = cfg or QuantizationConfig()
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        msg = "Cannot quantize an empty weight tensor."
        raise DegenerateWeights(msg)
    sigma = float(np.percentile(np.abs(weights), cfg.percentile))
    if sigma == 0:
        msg = "Weights have zero scale; all values at the chosen percentile are 0."
        raise DegenerateWeights(msg)
    lo, hi = cfg.weight_limits
    scaled = round_half_away(weights / sigma * max(-lo, hi))
    return np.clip(scaled, lo, hi).astype(np.int64), sigma


def quantize_biases(
    biases: np.ndarray,
    sigma: float,
    cfg: QuantizationConfig | None = None,
) -> np.ndarray:
    """Quantize biases with the weight scale of their layer, clipped to ``bias_bits``."""
    cfg = cfg or QuantizationConfig()
    lo, hi = cfg.weight_limits
    b_lo, b_hi = cfg.bias_limits
    scaled = round_half_away(np.asarray(biases, dtype=np.float64) / sigma * max(-lo, hi))
    return np.clip(scaled, b_lo, b_hi).astype(np.int64)


def decompose(value: int, cfg: QuantizationConfig | None = None) -> QuantizedWeight:
    """Express an integer as mantissa and exponent.

    Integers that need a larger mantissa than ``cfg.mantissa_bits`` allow are
    rounded to the nearest representable value. When two representations are
    equally near, the smaller exponent wins, so 255 becomes ``127 * 2**1``
    rather than ``64 * 2**2``.
    """
    cfg = cfg or QuantizationConfig()
    value = int(value)
    lo, hi = cfg.exponent_range
    if abs(value) > cfg.max_mantissa * 2**hi:
        msg = (
            f"{value} exceeds the largest representable magnitude"
            f" {cfg.max_mantissa} * 2**{hi}."
        )
        raise RangeError(msg)
    best: QuantizedWeight | None = None
    for exponent in range(max(lo, 0), hi + 1):
        mantissa = int(round_half_away(value / 2**exponent))
        fits = abs(mantissa) <= cfg.max_mantissa
        mantissa = int(np.clip(mantissa, -cfg.max_mantissa, cfg.max_mantissa))
        candidate = QuantizedWeight(mantissa, exponent if mantissa else 0)
        if best is None or abs(candidate.value - value) < abs(best.value - value):
            best = candidate
        # Coarser exponents represent a subset of these values.
        if fits:
            return best
    msg = f"{value} cannot be expressed with exponents in {cfg.exponent_range}."  # pragma: no cover
    raise RangeError(msg)  # pragma: no cover


def snap(values: np.ndarray, cfg: QuantizationConfig | None = None) -> np.ndarray:
    """The nearest representable integers, element-wise."""
    cfg = cfg or QuantizationConfig()
    flat = np.asarray(values).reshape(-1)
    snapped = [decompose(int(v), cfg).value for v in flat]
    return np.asarray(snapped, dtype=np.int64).reshape(np.shape(values))


# --- Emulation ----------------------------------------------------------------------


@dataclass(frozen=True)
class Emulation:
    """Per-layer net input and rate of a dense-math forward pass."""

    du: dict[str, np.ndarray]
    rates: dict[str, np.ndarray]
    output_id: str

    def predictions(self) -> np.ndarray:
        """Index of the largest output input per sample; ties resolve to the lowest index."""
        return np.argmax(self.du[self.output_id], axis=1)


def input_rates(batch: np.ndarray) -> np.ndarray:
    """Rates of the input layer: analog values clipped to ``[0, 1]``."""
    return np.clip(np.asarray(batch, dtype=np.float64), 0.0, 1.0)


def _as_batch(network: NetworkSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    n_input = network.input_layer.n_neurons
    batch = batch.reshape(batch.shape[0], -1) if batch.ndim > 1 else batch.reshape(1, -1)
    if batch.shape[1] != n_input:
        msg = f"Inputs have {batch.shape[1]} values per sample, the input layer {n_input}."
        raise ShapeError(msg)
    return batch


def emulate(network: NetworkSpec, batch: np.ndarray) -> Emulation:
    """Forward pass with the activation ``clip(du, 0, threshold) / threshold``.

    With integer parameters this is the rate approximation of the spiking
    network; it is also the reference classifier the calibration measures.
    """
    network = infer_shapes(network)
    batch = _as_batch(network, batch)
    first = network.input_layer
    rates = input_rates(batch)
    du = {first.id: rates}
    out = {first.id: rates}
    for pre, post in network.pairs():
        net_input = unroll(pre, post).propagate(rates, post.flat_weights) + post.neuron_biases()
        threshold = post.neuron_config.threshold
        rates = np.clip(net_input, 0.0, threshold) / threshold
        du[post.id] = net_input
        out[post.id] = rates
    return Emulation(du, out, network.output_layer.id)


def ann_predictions(network: NetworkSpec, batch: np.ndarray) -> np.ndarray:
    """Predictions of the floating-point network with ReLU activations."""
    network = lower(network)
    batch = _as_batch(network, batch)
    net_input = batch
    for pre, post in network.pairs():
        activity = np.maximum(net_input, 0.0)
        net_input = unroll(pre, post).propagate(activity, post.flat_weights)
        net_input = net_input + post.neuron_biases()
    return np.argmax(net_input, axis=1)


# --- Calibration --------------------------------------------------------------------


def _percentile(values: np.ndarray, p: float) -> float:
    return float(np.percentile(values, p))


def _channel_biases(layer: LayerSpec) -> np.ndarray:
    if layer.biases is None:
        return np.zeros(layer.shape[2])
    return np.asarray(layer.biases, dtype=np.float64)


def _net_input(
    pair: ConnectionPair,
    rates: np.ndarray,
    weights: np.ndarray,
    biases: np.ndarray,
    offset: int,
) -> np.ndarray:
    """Net input of every destination neuron: weighted rates plus per-channel and config bias."""
    per_neuron = np.tile(biases, pair.post.n_neurons // max(biases.size, 1))
    return pair.propagate(rates, weights) + per_neuron + offset


def _with_params(layer: LayerSpec, weights: np.ndarray, biases: np.ndarray) -> LayerSpec:
    return replace(
        layer,
        weights=weights.astype(np.float64),
        biases=biases.astype(np.float64),
        weight_ref=None,
        bias_ref=None,
    )


def calibrate_dynamic_range(
    network: NetworkSpec,
    calibration_batch: np.ndarray,
    cfg: QuantizationConfig | None = None,
) -> tuple[NetworkSpec, dict[str, LayerScale]]:
    """Quantize and rescale every layer so its input range matches its threshold.

    Layers are processed in order on the rates of the already processed
    layers. With ``lam`` the chosen percentile of a layer's net input and
    ``f = threshold / lam``, a layer with ``f <= 1`` has its weights and
    biases scaled by ``f``; a layer with ``f > 1`` keeps its full-range
    integer weights and gets the threshold ``lam`` instead. When rounding
    leaves the re-measured range off by more than the tolerance, the
    threshold follows the re-measured range.

    Parameters
    ----------
    network
        A lowered network with floating-point weights.
    calibration_batch
        Inputs, one row per sample.
    cfg
        Bit widths and percentile.

    Returns
    -------
    tuple
        The integer network and the scale chosen for each weighted layer.

    """
    cfg = cfg or QuantizationConfig()
    network = infer_shapes(network)
    batch = np.asarray(calibration_batch, dtype=np.float64)
    if batch.size == 0 or batch.shape[0] == 0:
        msg = "The calibration batch holds no samples."
        raise EmptyCalibration(msg)
    batch = _as_batch(network, batch)
    rates = input_rates(batch)
    layers = [network.input_layer]
    scales: dict[str, LayerScale] = {}
    for post in network.layers[1:]:
        pair = unroll(layers[-1], post)
        weights, sigma = quantize_weights(post.flat_weights, cfg)
        biases = quantize_biases(_channel_biases(post), sigma, cfg)
        offset = post.neuron_config.bias
        lam = _percentile(_net_input(pair, rates, weights, biases, offset), cfg.percentile)
        if lam <= 0:
            msg = f"Layer '{post.id}' never receives positive input on the calibration batch."
            raise DeadLayer(msg)
        threshold = post.neuron_config.threshold
        factor = threshold / lam
        if factor <= 1:
            weights = round_half_away(weights * factor).astype(np.int64)
            biases = round_half_away(biases * factor).astype(np.int64)
        else:
            threshold = max(1, int(round_half_away(lam)))
        biases = snap(biases, cfg)
        du = _net_input(pair, rates, weights, biases, offset)
        remeasured = _percentile(du, cfg.percentile)
        if abs(remeasured - threshold) > CALIBRATION_TOLERANCE * threshold:
            threshold = max(1, int(round_half_away(remeasured)))
        threshold = max(1, int(snap(np.asarray([threshold]), cfg)[0]))
        assert post.weights is not None
        layer = _with_params(post, weights.reshape(post.weights.shape), biases)
        layer = replace(layer, neuron_config=replace(post.neuron_config, threshold=threshold))
        rates = np.clip(du, 0.0, threshold) / threshold
        layers.append(layer)
        scales[post.id] = LayerScale(sigma=sigma, lam=lam, threshold=threshold)
        logger.info(
            "Calibrated layer '%s': sigma=%.6g, lambda=%.6g, threshold=%d",
            post.id,
            sigma,
            lam,
            threshold,
        )
    return network.with_layers(layers), scales


def normalize(
    network: NetworkSpec,
    calibration_batch: np.ndarray,
    cfg: QuantizationConfig | None = None,
) -> tuple[NetworkSpec, dict[str, LayerScale]]:
    """Lower a floating-point network and convert it to integer parameters."""
    cfg = cfg or QuantizationConfig()
    lowered = lower(network)
    for layer in lowered.layers[1:]:
        if layer.weights is None:
            msg = f"Layer '{layer.id}' has no weights to normalize."
            raise DegenerateWeights(msg)
    first = lowered.input_layer
    threshold = int(snap(np.asarray([first.neuron_config.threshold]), cfg)[0])
    first = replace(first, neuron_config=replace(first.neuron_config, threshold=threshold))
    lowered = lowered.with_layers([first, *lowered.layers[1:]])
    return calibrate_dynamic_range(lowered, calibration_batch, cfg)


def load_batch(path: str | Path, network: NetworkSpec | int) -> np.ndarray:
    """Read an input batch blob: flat little-endian floats, one row per sample.

    ``network`` is the network the batch feeds, or its number of input neurons.
    """
    data = read_blob(Path(path))
    n_input = network if isinstance(network, int) else network.input_layer.n_neurons
    if data.size % n_input:
        msg = f"Batch {path} holds {data.size} floats, not a multiple of {n_input} inputs."
        raise BlobError(msg)
    return data.reshape(-1, n_input).astype(np.float64)
