"""Network intermediate representation: layers, neuron configs and the model manifest."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np

from .errors import BlobError, ParseError, ShapeError

if TYPE_CHECKING:
    from collections.abc import Iterator

logger = logging.getLogger(__name__)

D_MAX = 4096
DEFAULT_INPUT_THRESHOLD = 128
BLOB_DTYPE = "f32le"

Shape = tuple[int, int, int]


class LayerKind(str, Enum):
    """Kinds of layers a network may be built from."""

    INPUT = "Input"
    DENSE = "Dense"
    CONV2D = "Conv2D"
    DEPTHWISE_CONV2D = "DepthwiseConv2D"
    AVERAGE_POOL2D = "AveragePool2D"
    FLATTEN = "Flatten"

    @property
    def requires_kernel(self) -> bool:
        """Whether the kind is configured with a kernel and strides."""
        return self in _KERNEL_KINDS

    @property
    def has_weights(self) -> bool:
        """Whether the kind reads a weight tensor from the blob."""
        return self in _WEIGHTED_KINDS


_KERNEL_KINDS = frozenset(
    {LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D, LayerKind.AVERAGE_POOL2D},
)
_WEIGHTED_KINDS = frozenset({LayerKind.DENSE, LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D})


class Padding(str, Enum):
    """Spatial padding modes."""

    VALID = "valid"
    SAME = "same"


class ResetMode(str, Enum):
    """Post-spike voltage rules."""

    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class NeuronConfig:
    """Integer neuron parameters shared by all neurons of a layer.

    Decays are fractions of ``D_MAX``: a value ``d`` retains
    ``(D_MAX - d) / D_MAX`` of the state per step. The default ``i_decay`` of
    ``D_MAX`` means the synaptic current does not persist between steps, which
    together with ``v_decay = 0`` gives a pure integrate-and-fire neuron.
    """

    threshold: int = 0
    v_decay: int = 0
    i_decay: int = D_MAX
    reset_mode: ResetMode = ResetMode.HARD
    bias: int = 0
    refractory: int = 0

    def __post_init__(self) -> None:
        if self.threshold < 0:
            msg = f"Neuron threshold must be non-negative, got {self.threshold}."
            raise ParseError(msg)
        for name in ("v_decay", "i_decay"):
            value = getattr(self, name)
            if not 0 <= value <= D_MAX:
                msg = f"Neuron {name} must lie in [0, {D_MAX}], got {value}."
                raise ParseError(msg)
        if self.refractory != 0:
            msg = "Refractory periods are not supported; 'refractory' must be 0."
            raise ParseError(msg)

    @property
    def compartments_per_neuron(self) -> int:
        """Number of hardware compartments one neuron occupies."""
        return 2 if self.reset_mode is ResetMode.SOFT else 1


class BlobRef(NamedTuple):
    """A slice of the flat weight blob, counted in 32-bit floats."""

    offset: int
    count: int


class BlobDescriptor(NamedTuple):
    """Location and encoding of the weight blob."""

    path: str
    dtype: str = BLOB_DTYPE


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward chain.

    Parameters
    ----------
    id
        Unique layer identifier.
    kind
        The layer kind.
    output_shape
        ``(height, width, channels)`` in neurons; ``None`` until inferred.
    kernel
        ``(kh, kw)`` for convolution and pooling kinds.
    strides
        ``(sy, sx)`` for convolution and pooling kinds.
    padding
        Spatial padding mode.
    neuron_config
        Parameters of the layer's neurons.
    weight_ref
        Slice of the blob holding the weights.
    bias_ref
        Slice of the blob holding one bias per output channel.
    channels
        Output channels (Conv2D filters, Dense units) when no shape is declared.
    weights
        Weight tensor, ``(kh, kw, c_in, c_out)`` for Conv2D, ``(kh, kw, c)``
        for DepthwiseConv2D and ``(fan_in, fan_out)`` for Dense.
    biases
        Per-output-channel bias vector.

    """

    id: str
    kind: LayerKind
    output_shape: Shape | None = None
    kernel: tuple[int, int] | None = None
    strides: tuple[int, int] | None = None
    padding: Padding = Padding.VALID
    neuron_config: NeuronConfig = field(default_factory=NeuronConfig)
    weight_ref: BlobRef | None = None
    bias_ref: BlobRef | None = None
    channels: int | None = None
    weights: np.ndarray | None = field(default=None, compare=False, repr=False)
    biases: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def shape(self) -> Shape:
        """The output shape, which must already be known."""
        if self.output_shape is None:
            msg = f"Layer '{self.id}' has no output shape; call `infer_shapes` first."
            raise ShapeError(msg)
        return self.output_shape

    @property
    def n_neurons(self) -> int:
        """Number of logical neurons in the layer."""
        return math.prod(self.shape)

    @property
    def n_compartments(self) -> int:
        """Number of hardware compartments the layer occupies."""
        return self.n_neurons * self.neuron_config.compartments_per_neuron

    @property
    def flat_weights(self) -> np.ndarray:
        """Weights indexed by weight id (the row-major flattening of ``weights``)."""
        if self.weights is None:
            msg = f"Layer '{self.id}' carries no weights."
            raise ShapeError(msg)
        return self.weights.reshape(-1)

    def neuron_biases(self) -> np.ndarray:
        """Per-neuron bias: the neuron-config bias plus the channel bias."""
        bias = np.full(self.shape, self.neuron_config.bias, dtype=np.float64)
        if self.biases is not None:
            bias = bias + np.asarray(self.biases, dtype=np.float64)[None, None, :]
        return bias.reshape(-1)


@dataclass(frozen=True)
class NetworkSpec:
    """A feed-forward chain of layers, the compiler's input."""

    name: str
    layers: tuple[LayerSpec, ...]
    timesteps: int = 100
    blob: BlobDescriptor = BlobDescriptor("weights.bin")
    lowered: bool = False

    @property
    def input_layer(self) -> LayerSpec:
        """The first layer of the chain."""
        return self.layers[0]

    @property
    def output_layer(self) -> LayerSpec:
        """The last layer of the chain."""
        return self.layers[-1]

    @property
    def total_neurons(self) -> int:
        """Sum of the neuron counts of all layers."""
        return sum(layer.n_neurons for layer in self.layers)

    def index(self, layer_id: str) -> int:
        """Position of the layer with the given id."""
        for i, layer in enumerate(self.layers):
            if layer.id == layer_id:
                return i
        msg = f"Unknown layer id '{layer_id}'."
        raise KeyError(msg)

    def layer(self, layer_id: str) -> LayerSpec:
        """The layer with the given id."""
        return self.layers[self.index(layer_id)]

    def pairs(self) -> Iterator[tuple[LayerSpec, LayerSpec]]:
        """Consecutive (pre, post) layer pairs."""
        yield from zip(self.layers[:-1], self.layers[1:])

    def with_layers(self, layers: list[LayerSpec] | tuple[LayerSpec, ...]) -> NetworkSpec:
        """A copy of the network with its layers replaced."""
        return replace(self, layers=tuple(layers))


def conv_output_size(size: int, kernel: int, stride: int, padding: Padding) -> int:
    """Output extent of a convolution along one axis."""
    if padding is Padding.SAME:
        return math.ceil(size / stride)
    return (size - kernel) // stride + 1 if size >= kernel else 0


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """Zero padding ``(before, after)`` of a ``same`` convolution along one axis."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def padding_before(layer: LayerSpec, in_shape: Shape) -> tuple[int, int]:
    """Top and left zero padding applied by a convolution layer."""
    assert layer.kernel is not None
    assert layer.strides is not None
    if layer.padding is Padding.VALID:
        return 0, 0
    top, _ = same_padding(in_shape[0], layer.kernel[0], layer.strides[0])
    left, _ = same_padding(in_shape[1], layer.kernel[1], layer.strides[1])
    return top, left


def _expected_weight_count(layer: LayerSpec, in_shape: Shape, out_channels: int) -> int:
    assert layer.kernel is not None or layer.kind is LayerKind.DENSE
    match layer.kind:
        case LayerKind.DENSE:
            return math.prod(in_shape) * out_channels
        case LayerKind.CONV2D:
            kh, kw = layer.kernel  # type: ignore[misc]
            return kh * kw * in_shape[2] * out_channels
        case LayerKind.DEPTHWISE_CONV2D:
            kh, kw = layer.kernel  # type: ignore[misc]
            return kh * kw * in_shape[2]
        case _:
            return 0


def _out_channels(layer: LayerSpec, in_shape: Shape) -> int:
    """Output channels from the declared channels, the declared shape or the weight count."""
    if layer.channels is not None:
        return layer.channels
    if layer.output_shape is not None:
        return layer.output_shape[2]
    count = layer.weight_ref.count if layer.weight_ref is not None else None
    if count is None and layer.weights is not None:
        count = layer.weights.size
    if count is None:
        msg = f"Cannot determine the channel count of layer '{layer.id}'."
        raise ShapeError(msg)
    if layer.kind is LayerKind.DENSE:
        per_channel = math.prod(in_shape)
    else:
        assert layer.kernel is not None
        per_channel = layer.kernel[0] * layer.kernel[1] * in_shape[2]
    if per_channel == 0 or count % per_channel:
        msg = f"Weight count {count} of layer '{layer.id}' does not match its input {in_shape}."
        raise ShapeError(msg)
    return count // per_channel


def _infer_layer_shape(  # noqa: PLR0911
    layer: LayerSpec,
    in_shape: Shape,
    *,
    lowered: bool,
) -> Shape:
    match layer.kind:
        case LayerKind.INPUT:
            msg = f"Input layer '{layer.id}' may only appear first."
            raise ShapeError(msg)
        case LayerKind.FLATTEN:
            return (1, 1, math.prod(in_shape))
        case LayerKind.DENSE:
            if in_shape[:2] != (1, 1) and not lowered:
                msg = (
                    f"Dense layer '{layer.id}' needs a 1-D input, got {in_shape}."
                    " Insert a Flatten layer before it."
                )
                raise ShapeError(msg)
            return (1, 1, _out_channels(layer, in_shape))
        case LayerKind.CONV2D | LayerKind.DEPTHWISE_CONV2D | LayerKind.AVERAGE_POOL2D:
            assert layer.kernel is not None
            assert layer.strides is not None
            h = conv_output_size(in_shape[0], layer.kernel[0], layer.strides[0], layer.padding)
            w = conv_output_size(in_shape[1], layer.kernel[1], layer.strides[1], layer.padding)
            if layer.kind is LayerKind.CONV2D:
                c = _out_channels(layer, in_shape)
            else:
                c = in_shape[2]
            return (h, w, c)
    msg = f"Unknown layer kind {layer.kind!r}."  # pragma: no cover
    raise ShapeError(msg)  # pragma: no cover


def _check_positive(layer_id: str, shape: Shape) -> None:
    if any(dim <= 0 for dim in shape):
        msg = f"Layer '{layer_id}' has a non-positive dimension: {shape}."
        raise ShapeError(msg)


def infer_shapes(spec: NetworkSpec) -> NetworkSpec:
    """Populate every layer's output shape by forward propagation.

    Declared shapes are replaced by the inferred ones; use `validate` to check
    declarations instead. The operation is idempotent.
    """
    if not spec.layers or spec.layers[0].kind is not LayerKind.INPUT:
        msg = "A network must start with exactly one Input layer."
        raise ShapeError(msg)
    first = spec.layers[0]
    if first.output_shape is None:
        msg = f"Input layer '{first.id}' must declare its shape."
        raise ShapeError(msg)
    _check_positive(first.id, first.output_shape)
    layers = [first]
    for layer in spec.layers[1:]:
        shape = _infer_layer_shape(layer, layers[-1].shape, lowered=spec.lowered)
        _check_positive(layer.id, shape)
        layers.append(replace(layer, output_shape=shape))
    return spec.with_layers(layers)


def validate(spec: NetworkSpec) -> NetworkSpec:
    """Check all layer invariants and return the network with shapes filled in."""
    ids = [layer.id for layer in spec.layers]
    if len(set(ids)) != len(ids):
        msg = f"Layer ids must be unique, got {ids}."
        raise ParseError(msg)
    if sum(layer.kind is LayerKind.INPUT for layer in spec.layers) != 1:
        msg = "A network must contain exactly one Input layer."
        raise ShapeError(msg)
    inferred = infer_shapes(spec)
    for declared, layer in zip(spec.layers, inferred.layers):
        if declared.output_shape is not None and tuple(declared.output_shape) != layer.shape:
            msg = (
                f"Layer '{layer.id}' declares output shape {tuple(declared.output_shape)}"
                f" but its arithmetic gives {layer.shape}."
            )
            raise ShapeError(msg)
    for prev, layer in zip(inferred.layers[:-1], inferred.layers[1:]):
        _validate_layer(layer, prev.shape)
    return inferred


def _validate_layer(layer: LayerSpec, in_shape: Shape) -> None:
    needs_kernel = layer.kind.requires_kernel
    if needs_kernel != (layer.kernel is not None) or needs_kernel != (layer.strides is not None):
        msg = f"Layer '{layer.id}' of kind {layer.kind.value}: kernel/strides mismatch."
        raise ParseError(msg)
    if layer.kind is not LayerKind.FLATTEN and layer.neuron_config.threshold <= 0:
        msg = f"Layer '{layer.id}' must have a positive threshold."
        raise ParseError(msg)
    if layer.kind.has_weights:
        expected = _expected_weight_count(layer, in_shape, layer.shape[2])
        actual = layer.weights.size if layer.weights is not None else None
        if actual is None and layer.weight_ref is not None:
            actual = layer.weight_ref.count
        if actual is None:
            msg = f"Layer '{layer.id}' of kind {layer.kind.value} needs weights."
            raise ParseError(msg)
        if actual != expected:
            msg = f"Layer '{layer.id}' needs {expected} weights, got {actual}."
            raise ShapeError(msg)
    count = layer.biases.size if layer.biases is not None else None
    if count is None and layer.bias_ref is not None:
        count = layer.bias_ref.count
    if count is not None and count != layer.shape[2]:
        msg = f"Layer '{layer.id}' needs {layer.shape[2]} biases, got {count}."
        raise ShapeError(msg)


def weight_shape(layer: LayerSpec, in_shape: Shape) -> tuple[int, ...]:
    """Shape of the weight tensor of a weighted layer."""
    match layer.kind:
        case LayerKind.DENSE:
            return (math.prod(in_shape), layer.shape[2])
        case LayerKind.CONV2D:
            assert layer.kernel is not None
            return (*layer.kernel, in_shape[2], layer.shape[2])
        case LayerKind.DEPTHWISE_CONV2D | LayerKind.AVERAGE_POOL2D:
            assert layer.kernel is not None
            return (*layer.kernel, in_shape[2])
    msg = f"Layer '{layer.id}' of kind {layer.kind.value} has no weights."
    raise ShapeError(msg)


def lower(spec: NetworkSpec) -> NetworkSpec:
    """Drop Flatten layers and rewrite average pooling as a uniform depthwise convolution."""
    spec = infer_shapes(spec)
    layers: list[LayerSpec] = []
    for layer in spec.layers:
        if layer.kind is LayerKind.FLATTEN:
            continue
        if layer.kind is LayerKind.AVERAGE_POOL2D:
            assert layer.kernel is not None
            kh, kw = layer.kernel
            weights = np.full((kh, kw, layer.shape[2]), 1.0 / (kh * kw), dtype=np.float32)
            layer = replace(  # noqa: PLW2901
                layer,
                kind=LayerKind.DEPTHWISE_CONV2D,
                weights=weights,
                weight_ref=None,
                channels=layer.shape[2],
            )
        layers.append(layer)
    return replace(spec, layers=tuple(layers), lowered=True)


# --- Manifest I/O -----------------------------------------------------------------

_LAYER_KEYS = {
    "id",
    "kind",
    "shape",
    "kernel",
    "strides",
    "padding",
    "channels",
    "neuron",
    "weights",
    "biases",
}
_NEURON_KEYS = {"threshold", "v_decay", "i_decay", "reset", "bias", "refractory"}


def _pair(value: Any, key: str, layer_id: str) -> tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    if not isinstance(value, list | tuple) or len(value) != 2:  # noqa: PLR2004
        msg = f"Invalid '{key}' for layer '{layer_id}': expected two integers, got {value!r}."
        raise ParseError(msg)
    return (int(value[0]), int(value[1]))


def _parse_ref(value: Any, key: str, layer_id: str) -> BlobRef:
    if not isinstance(value, dict) or set(value) != {"offset", "count"}:
        msg = f"Invalid '{key}' for layer '{layer_id}': expected {{offset, count}}."
        raise ParseError(msg)
    ref = BlobRef(int(value["offset"]), int(value["count"]))
    if ref.offset < 0 or ref.count < 0:
        msg = f"Invalid '{key}' for layer '{layer_id}': negative offset or count."
        raise ParseError(msg)
    return ref


def _parse_neuron(data: Any, layer_id: str, kind: LayerKind) -> NeuronConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        msg = f"Invalid 'neuron' for layer '{layer_id}': expected a mapping."
        raise ParseError(msg)
    unknown = set(data) - _NEURON_KEYS
    if unknown:
        allowed = ", ".join(sorted(_NEURON_KEYS))
        msg = f"Invalid neuron key(s) {sorted(unknown)} for layer '{layer_id}'. Allowed: {allowed}"
        raise ParseError(msg)
    threshold = int(data.get("threshold", 0))
    if kind is LayerKind.INPUT and threshold == 0:
        threshold = DEFAULT_INPUT_THRESHOLD
    try:
        reset = ResetMode(data.get("reset", "hard"))
    except ValueError as e:
        msg = f"Invalid reset mode {data.get('reset')!r} for layer '{layer_id}'."
        raise ParseError(msg) from e
    return NeuronConfig(
        threshold=threshold,
        v_decay=int(data.get("v_decay", 0)),
        i_decay=int(data.get("i_decay", D_MAX)),
        reset_mode=reset,
        bias=int(data.get("bias", 0)),
        refractory=int(data.get("refractory", 0)),
    )


def _parse_layer(data: Any) -> LayerSpec:
    if not isinstance(data, dict) or "id" not in data or "kind" not in data:
        msg = f"Invalid layer definition: each layer needs 'id' and 'kind'. Found: {data}"
        raise ParseError(msg)
    layer_id = str(data["id"])
    unknown = set(data) - _LAYER_KEYS
    if unknown:
        allowed = ", ".join(sorted(_LAYER_KEYS))
        msg = f"Invalid key(s) {sorted(unknown)} for layer '{layer_id}'. Allowed: {allowed}"
        raise ParseError(msg)
    try:
        kind = LayerKind(data["kind"])
    except ValueError as e:
        valid = ", ".join(k.value for k in LayerKind)
        msg = f"Invalid layer kind '{data['kind']}' for layer '{layer_id}'. Must be one of: {valid}"
        raise ParseError(msg) from e
    shape = data.get("shape")
    if shape is not None:
        if not isinstance(shape, list) or len(shape) != 3:  # noqa: PLR2004
            msg = f"Invalid 'shape' for layer '{layer_id}': expected [height, width, channels]."
            raise ParseError(msg)
        shape = (int(shape[0]), int(shape[1]), int(shape[2]))
    kernel = _pair(data["kernel"], "kernel", layer_id) if "kernel" in data else None
    strides = _pair(data["strides"], "strides", layer_id) if "strides" in data else None
    if kind is LayerKind.AVERAGE_POOL2D and strides is None:
        strides = kernel
    if kind.requires_kernel and strides is None and kernel is not None:
        strides = (1, 1)
    try:
        padding = Padding(data.get("padding", "valid"))
    except ValueError as e:
        msg = f"Invalid padding {data.get('padding')!r} for layer '{layer_id}'."
        raise ParseError(msg) from e
    return LayerSpec(
        id=layer_id,
        kind=kind,
        output_shape=shape,
        kernel=kernel,
        strides=strides,
        padding=padding,
        neuron_config=_parse_neuron(data.get("neuron"), layer_id, kind),
        weight_ref=_parse_ref(data["weights"], "weights", layer_id) if "weights" in data else None,
        bias_ref=_parse_ref(data["biases"], "biases", layer_id) if "biases" in data else None,
        channels=int(data["channels"]) if "channels" in data else None,
    )


def parse_manifest(manifest: Any) -> NetworkSpec:
    """Build an unvalidated network from a decoded manifest document."""
    if not isinstance(manifest, dict):
        msg = "Invalid manifest: expected a JSON object."
        raise ParseError(msg)
    for key in ("name", "layers"):
        if key not in manifest:
            msg = f"Invalid manifest: missing '{key}' key."
            raise ParseError(msg)
    if not isinstance(manifest["layers"], list) or not manifest["layers"]:
        msg = "Invalid manifest: 'layers' must be a non-empty list."
        raise ParseError(msg)
    blob = manifest.get("blob", {})
    dtype = blob.get("dtype", BLOB_DTYPE)
    if dtype != BLOB_DTYPE:
        msg = f"Unsupported blob dtype '{dtype}'; only '{BLOB_DTYPE}' is supported."
        raise ParseError(msg)
    return NetworkSpec(
        name=str(manifest["name"]),
        timesteps=int(manifest.get("timesteps", 100)),
        layers=tuple(_parse_layer(layer) for layer in manifest["layers"]),
        blob=BlobDescriptor(str(blob.get("path", "weights.bin")), dtype),
    )


def read_blob(path: str | Path) -> np.ndarray:
    """Read a flat little-endian float32 blob."""
    try:
        return np.fromfile(path, dtype="<f4")
    except FileNotFoundError as e:
        msg = f"Weight blob not found: {path}"
        raise BlobError(msg) from e


def _slice(blob: np.ndarray, ref: BlobRef, layer_id: str) -> np.ndarray:
    if ref.offset + ref.count > blob.size:
        msg = (
            f"Layer '{layer_id}' references floats [{ref.offset}, {ref.offset + ref.count})"
            f" but the blob holds only {blob.size}."
        )
        raise BlobError(msg)
    return blob[ref.offset : ref.offset + ref.count].astype(np.float32)


def attach_weights(spec: NetworkSpec, blob: np.ndarray) -> NetworkSpec:
    """Resolve every weight and bias reference against ``blob``."""
    spec = infer_shapes(spec)
    layers = [spec.layers[0]]
    for prev, layer in zip(spec.layers[:-1], spec.layers[1:]):
        weights, biases = layer.weights, layer.biases
        if layer.weight_ref is not None:
            flat = _slice(blob, layer.weight_ref, layer.id)
            shape = weight_shape(layer, prev.shape)
            if flat.size != math.prod(shape):
                msg = f"Layer '{layer.id}' needs {math.prod(shape)} weights, got {flat.size}."
                raise ShapeError(msg)
            weights = flat.reshape(shape)
        if layer.bias_ref is not None:
            biases = _slice(blob, layer.bias_ref, layer.id)
        layers.append(replace(layer, weights=weights, biases=biases))
    return spec.with_layers(layers)


def load_network(manifest_path: str | Path, blob_path: str | Path | None = None) -> NetworkSpec:
    """Load and validate a network from its manifest and weight blob.

    Parameters
    ----------
    manifest_path
        Path to the JSON manifest.
    blob_path
        Path to the weight blob. Defaults to the manifest's ``blob.path``,
        resolved relative to the manifest.

    """
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        msg = f"Model manifest not found: {manifest_path}"
        raise ParseError(msg) from e
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"Error parsing manifest {manifest_path}: {e}"
        raise ParseError(msg) from e
    spec = parse_manifest(manifest)
    if blob_path is None:
        blob_path = manifest_path.parent / spec.blob.path
    needs_blob = any(layer.weight_ref or layer.bias_ref for layer in spec.layers)
    blob = read_blob(blob_path) if needs_blob else np.zeros(0, dtype=np.float32)
    spec = validate(attach_weights(spec, blob))
    logger.info("Loaded network '%s' with %d layers", spec.name, len(spec.layers))
    return spec


def _neuron_to_dict(config: NeuronConfig) -> dict[str, Any]:
    return {
        "threshold": config.threshold,
        "v_decay": config.v_decay,
        "i_decay": config.i_decay,
        "reset": config.reset_mode.value,
        "bias": config.bias,
    }


def to_manifest(spec: NetworkSpec, blob_name: str) -> tuple[dict[str, Any], np.ndarray]:
    """Canonical manifest document and blob contents for a network.

    Weights and biases are packed into the blob in layer order.
    """
    spec = infer_shapes(spec)
    chunks: list[np.ndarray] = []
    offset = 0
    layers = []
    for layer in spec.layers:
        entry: dict[str, Any] = {
            "id": layer.id,
            "kind": layer.kind.value,
            "shape": list(layer.shape),
            "neuron": _neuron_to_dict(layer.neuron_config),
        }
        if layer.kernel is not None:
            entry["kernel"] = list(layer.kernel)
            entry["strides"] = list(layer.strides or (1, 1))
            entry["padding"] = layer.padding.value
        for key, array in (("weights", layer.weights), ("biases", layer.biases)):
            if array is None:
                continue
            flat = np.asarray(array, dtype="<f4").reshape(-1)
            entry[key] = {"offset": offset, "count": int(flat.size)}
            chunks.append(flat)
            offset += flat.size
        layers.append(entry)
    manifest = {
        "name": spec.name,
        "timesteps": spec.timesteps,
        "layers": layers,
        "blob": {"path": blob_name, "dtype": BLOB_DTYPE},
    }
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f4")
    return manifest, blob


def dumps_manifest(manifest: dict[str, Any]) -> str:
    """Canonical JSON text of a manifest."""
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def save_network(
    spec: NetworkSpec,
    manifest_path: str | Path,
    blob_path: str | Path | None = None,
) -> None:
    """Write a network as a canonical manifest plus a f32le weight blob."""
    manifest_path = Path(manifest_path)
    blob_path = Path(blob_path) if blob_path is not None else manifest_path.with_suffix(".bin")
    blob_name = os.path.relpath(blob_path, manifest_path.parent)
    manifest, blob = to_manifest(spec, Path(blob_name).as_posix())
    manifest_path.write_text(dumps_manifest(manifest), encoding="utf-8")
    blob.astype("<f4").tofile(blob_path)
