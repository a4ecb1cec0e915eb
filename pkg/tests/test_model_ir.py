import json

import numpy as np
import pytest

from spikemap.errors import BlobError, ParseError, ShapeError
from spikemap.helpers import create_mlp
from spikemap.model_ir import (
    DEFAULT_INPUT_THRESHOLD,
    LayerKind,
    LayerSpec,
    NetworkSpec,
    NeuronConfig,
    Padding,
    ResetMode,
    infer_shapes,
    load_network,
    lower,
    parse_manifest,
    save_network,
    validate,
)


def _write(tmp_path, manifest, blob):
    manifest_path = tmp_path / "model.json"
    manifest_path.write_text(json.dumps(manifest))
    np.asarray(blob, dtype="<f4").tofile(tmp_path / "weights.bin")
    return manifest_path


def _conv_manifest(shape=None):
    conv = {
        "id": "conv",
        "kind": "Conv2D",
        "kernel": [3, 3],
        "strides": [1, 1],
        "padding": "valid",
        "neuron": {"threshold": 10},
        "weights": {"offset": 0, "count": 9},
    }
    if shape is not None:
        conv["shape"] = shape
    return {
        "name": "conv",
        "timesteps": 50,
        "layers": [{"id": "in", "kind": "Input", "shape": [6, 6, 1]}, conv],
        "blob": {"path": "weights.bin", "dtype": "f32le"},
    }


def test_load_conv_output_shape(tmp_path):
    """A valid 3x3 convolution on a 6x6 input gives 4x4."""
    path = _write(tmp_path, _conv_manifest(), np.arange(9))
    network = load_network(path)
    assert network.layers[1].shape == (4, 4, 1)
    assert network.layers[1].weights.shape == (3, 3, 1, 1)
    assert network.timesteps == 50
    assert network.input_layer.neuron_config.threshold == DEFAULT_INPUT_THRESHOLD


def test_load_dense_weight_count(tmp_path):
    """A Dense layer of 5 units after 10 inputs reads 50 floats."""
    manifest = {
        "name": "dense",
        "layers": [
            {"id": "in", "kind": "Input", "shape": [1, 1, 10]},
            {
                "id": "fc",
                "kind": "Dense",
                "neuron": {"threshold": 1},
                "weights": {"offset": 0, "count": 50},
            },
        ],
    }
    network = load_network(_write(tmp_path, manifest, np.zeros(50)))
    assert network.layers[1].shape == (1, 1, 5)
    assert network.layers[1].weights.shape == (10, 5)


def test_declared_shape_mismatch(tmp_path):
    """A declared shape that contradicts the arithmetic is rejected."""
    path = _write(tmp_path, _conv_manifest(shape=[5, 5, 1]), np.arange(9))
    with pytest.raises(ShapeError, match="arithmetic gives"):
        load_network(path)


def test_blob_out_of_bounds(tmp_path):
    """Weight references past the end of the blob are rejected."""
    path = _write(tmp_path, _conv_manifest(), np.arange(5))
    with pytest.raises(BlobError):
        load_network(path)


def test_missing_manifest(tmp_path):
    """A missing manifest is a parse error."""
    with pytest.raises(ParseError, match="not found"):
        load_network(tmp_path / "missing.json")


@pytest.mark.parametrize(
    ("manifest", "match"),
    [
        ([], "expected a JSON object"),
        ({"layers": []}, "missing 'name'"),
        ({"name": "x", "layers": []}, "non-empty list"),
        ({"name": "x", "layers": [{"id": "a", "kind": "Pool"}]}, "Invalid layer kind"),
        ({"name": "x", "layers": [{"id": "a", "kind": "Input", "color": 1}]}, "Allowed keys"),
        (
            {"name": "x", "layers": [{"id": "a", "kind": "Input"}], "blob": {"dtype": "f16"}},
            "Unsupported blob dtype",
        ),
    ],
)
def test_parse_manifest_errors(manifest, match):
    """Malformed manifests raise ParseError."""
    with pytest.raises(ParseError, match=match):
        parse_manifest(manifest)


def test_neuron_config_limits():
    """Decays outside [0, D_MAX] and refractory periods are rejected."""
    with pytest.raises(ParseError):
        NeuronConfig(threshold=1, v_decay=5000)
    with pytest.raises(ParseError):
        NeuronConfig(threshold=1, refractory=2)
    assert NeuronConfig(reset_mode=ResetMode.SOFT).compartments_per_neuron == 2


def _conv(kernel, strides, padding, channels=4):
    return LayerSpec(
        id="conv",
        kind=LayerKind.CONV2D,
        kernel=kernel,
        strides=strides,
        padding=padding,
        neuron_config=NeuronConfig(threshold=1),
        channels=channels,
    )


@pytest.mark.parametrize(
    ("in_shape", "layer", "expected"),
    [
        ((28, 28, 1), _conv((3, 3), (1, 1), Padding.SAME), (28, 28, 4)),
        ((32, 32, 3), _conv((3, 3), (2, 2), Padding.VALID), (15, 15, 4)),
        ((7, 7, 3), _conv((3, 3), (2, 2), Padding.SAME), (4, 4, 4)),
    ],
)
def test_infer_shapes(in_shape, layer, expected):
    """Convolution arithmetic for valid and same padding."""
    first = LayerSpec(id="in", kind=LayerKind.INPUT, output_shape=in_shape)
    network = infer_shapes(NetworkSpec(name="n", layers=(first, layer)))
    assert network.layers[1].shape == expected
    assert infer_shapes(network) == network


def test_infer_shapes_kernel_too_large():
    """A valid convolution larger than its input has no output."""
    first = LayerSpec(id="in", kind=LayerKind.INPUT, output_shape=(4, 4, 1))
    layer = _conv((5, 5), (1, 1), Padding.VALID)
    with pytest.raises(ShapeError):
        infer_shapes(NetworkSpec(name="n", layers=(first, layer)))


def test_dense_needs_flat_input():
    """Dense after a spatial layer needs a Flatten unless the network is lowered."""
    first = LayerSpec(id="in", kind=LayerKind.INPUT, output_shape=(2, 2, 3))
    dense = LayerSpec(id="fc", kind=LayerKind.DENSE, channels=4)
    with pytest.raises(ShapeError, match="Flatten"):
        infer_shapes(NetworkSpec(name="n", layers=(first, dense)))
    flatten = LayerSpec(id="flat", kind=LayerKind.FLATTEN)
    network = infer_shapes(NetworkSpec(name="n", layers=(first, flatten, dense)))
    assert network.layers[1].shape == (1, 1, 12)
    assert network.total_neurons == 12 + 12 + 4


def test_lower_pool_and_flatten():
    """Lowering drops Flatten and turns average pooling into a uniform depthwise layer."""
    first = LayerSpec(
        id="in",
        kind=LayerKind.INPUT,
        output_shape=(4, 4, 2),
        neuron_config=NeuronConfig(threshold=DEFAULT_INPUT_THRESHOLD),
    )
    pool = LayerSpec(
        id="pool",
        kind=LayerKind.AVERAGE_POOL2D,
        kernel=(2, 2),
        strides=(2, 2),
        neuron_config=NeuronConfig(threshold=1),
    )
    flatten = LayerSpec(id="flat", kind=LayerKind.FLATTEN)
    dense = LayerSpec(
        id="fc",
        kind=LayerKind.DENSE,
        neuron_config=NeuronConfig(threshold=1),
        weights=np.ones((8, 3), dtype=np.float32),
    )
    lowered = lower(NetworkSpec(name="n", layers=(first, pool, flatten, dense)))
    assert [layer.id for layer in lowered.layers] == ["in", "pool", "fc"]
    assert lowered.lowered
    pool = lowered.layer("pool")
    assert pool.kind is LayerKind.DEPTHWISE_CONV2D
    np.testing.assert_allclose(pool.weights, np.full((2, 2, 2), 0.25))
    assert validate(lowered).layer("fc").shape == (1, 1, 3)


def test_duplicate_ids():
    """Layer ids must be unique."""
    first = LayerSpec(id="a", kind=LayerKind.INPUT, output_shape=(1, 1, 2))
    dense = LayerSpec(
        id="a",
        kind=LayerKind.DENSE,
        neuron_config=NeuronConfig(threshold=1),
        weights=np.ones((2, 2), dtype=np.float32),
    )
    with pytest.raises(ParseError, match="unique"):
        validate(NetworkSpec(name="n", layers=(first, dense)))


def test_neuron_biases_add_channel_bias():
    """The per-neuron bias is the config bias plus the channel bias."""
    layer = LayerSpec(
        id="fc",
        kind=LayerKind.DENSE,
        output_shape=(1, 1, 2),
        neuron_config=NeuronConfig(threshold=1, bias=3),
        biases=np.array([1.0, -2.0]),
    )
    np.testing.assert_array_equal(layer.neuron_biases(), [4.0, 1.0])


def test_save_load_round_trip(tmp_path):
    """Saving a loaded network reproduces the canonical manifest bytes."""
    network = create_mlp([4, 3, 2], rng=np.random.default_rng(0))
    save_network(network, tmp_path / "a.json", tmp_path / "a.bin")
    loaded = load_network(tmp_path / "a.json")
    save_network(loaded, tmp_path / "b.json", tmp_path / "a.bin")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    for before, after in zip(network.layers[1:], loaded.layers[1:]):
        np.testing.assert_array_equal(before.weights, after.weights)
