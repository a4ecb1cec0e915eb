import json
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from spikemap.connectivity import SynapseGroup, unroll
from spikemap.errors import CapacityError, IntegrityError, MapError, ParseError, VersionError
from spikemap.helpers import create_mlp, input_layer, random_network
from spikemap.mapper import (
    AxonKind,
    CompartmentTable,
    OutputAxon,
    build_image,
    decode_group,
    emit,
    encode_group,
    expand_image,
    expand_soft_reset,
    image_tally,
    load_image,
    loads_image,
    place,
    write_image,
)
from spikemap.model_ir import (
    LayerKind,
    LayerSpec,
    NetworkSpec,
    NeuronConfig,
    Padding,
    ResetMode,
    validate,
)
from spikemap.normalizer import QuantizedWeight
from spikemap.partitioner import optimize, place_chain
from spikemap.resources import Compression, CoreConstraints, Partition, Sharing


@pytest.fixture
def mlp():
    return create_mlp([6, 5, 3], rng=np.random.default_rng(0))


@pytest.fixture
def compiled(mlp):
    plan = optimize(mlp, constraints=CoreConstraints(max_neurons_per_core=2))
    placement = place(plan)
    return plan, placement, build_image(mlp, plan, placement)


def _table(n_neurons, threshold, reset_mode):
    return CompartmentTable(
        n_neurons=n_neurons,
        threshold=QuantizedWeight(threshold, 0),
        v_decay=0,
        i_decay=4096,
        reset_mode=reset_mode,
        bias_mantissa=np.zeros(n_neurons, dtype=np.int64),
        bias_exponent=np.zeros(n_neurons, dtype=np.int64),
    )


def test_place_single_chip(compiled):
    """A small network lands on chip 0."""
    _, placement, image = compiled
    assert placement.n_chips == 1
    assert all(chip == 0 for layer in placement.chips for chip in layer)
    assert image.n_chips == 1


def test_place_two_chips():
    """130 cores split 128 + 2 in layer order, and the boundary axons are charged twice."""
    network = create_mlp([2, 128])
    plan = optimize(network, constraints=CoreConstraints(max_neurons_per_core=1))
    assert plan.n_cores == 130
    placement = place(plan, chips=2)
    assert placement.chips[0] == (0, 0)
    assert placement.chips[1] == (0,) * 126 + (1, 1)
    assert placement.n_chips == 2
    inputs = placement.tallies[0]
    # each input core reaches the two cores on chip 1 off chip
    assert inputs.n_offchip == 2 * 2
    assert all(usage.output_axons == 126 + 2 * 2 for usage in inputs.cores.values())
    assert placement.tallies == plan.tallies


def test_place_chain_fills_chips_in_layer_order():
    """Chips fill to capacity from the input layer, splitting the layer that crosses a boundary."""
    partitions = [Partition("a", (100, 1, 1), (100, 1, 1)), Partition("b", (30, 1, 1), (30, 1, 1))]
    chips = place_chain(partitions, 128)
    per_chip = Counter(chip for layer in chips for chip in layer)
    assert sorted(per_chip.values()) == [2, 128]
    assert per_chip[0] == 128
    assert chips[0] == (0,) * 100
    assert chips[1] == (0,) * 28 + (1, 1)


def test_place_capacity():
    """More cores than the chips hold is a capacity error."""
    network = create_mlp([4, 200])
    plan = optimize(network, constraints=CoreConstraints(max_neurons_per_core=1))
    with pytest.raises(CapacityError, match="204 cores"):
        place(plan, chips=1)


@pytest.mark.parametrize(
    ("template", "scheme", "cost"),
    [
        ((tuple((k, k) for k in range(9)),), Compression.DENSE, 9),
        ((((0, 0), (500, 1)),), Compression.SPARSE, 4),
        ((), Compression.SPARSE, 0),
    ],
)
def test_encode_auto(template, scheme, cost):
    """Auto encoding picks the cheapest scheme and decodes back."""
    group = SynapseGroup(template)
    encoded = encode_group(group)
    assert (encoded.scheme, encoded.cost_units) == (scheme, cost)
    assert decode_group(encoded) == group


@pytest.mark.parametrize("scheme", [Compression.SPARSE, Compression.DENSE, Compression.RUNLENGTH])
def test_encode_forced(scheme):
    """Every scheme decodes a gappy multi-slot group exactly."""
    group = SynapseGroup((((0, 5), (1, 6), (3, 7)), ((2, 1),), ()))
    encoded = encode_group(group, scheme)
    assert encoded.scheme is scheme
    assert decode_group(encoded) == group


def test_expand_soft_reset():
    """A soft-reset neuron gets a reset compartment with weight minus the threshold."""
    expanded = expand_soft_reset(_table(1, 100, ResetMode.SOFT))
    assert expanded.n_compartments == 2
    assert expanded.reset_weight == -100
    hard = _table(3, 100, ResetMode.HARD)
    assert expand_soft_reset(hard) is hard
    assert expand_soft_reset(_table(512, 10, ResetMode.SOFT)).n_compartments == 1024
    with pytest.raises(MapError):
        expand_soft_reset(_table(513, 10, ResetMode.SOFT))


def test_image_round_trip(compiled, tmp_path):
    """Loading and re-emitting an image reproduces its bytes."""
    _, _, image = compiled
    path = write_image(image, tmp_path / "mlp.nfimg.json")
    loaded = load_image(path)
    assert emit(loaded) == path.read_text()
    assert loaded.layers == image.layers
    assert image_tally(loaded) == image_tally(image)


def test_emit_deterministic(mlp):
    """Compiling the same network twice gives the same bytes."""
    texts = []
    for _ in range(2):
        plan = optimize(mlp)
        texts.append(emit(build_image(mlp, plan, place(plan))))
    assert texts[0] == texts[1]


def _conv1d():
    conv = LayerSpec(
        id="conv",
        kind=LayerKind.CONV2D,
        kernel=(1, 3),
        strides=(1, 1),
        padding=Padding.VALID,
        neuron_config=NeuronConfig(threshold=4),
        channels=1,
        weights=np.array([1, 2, 3], dtype=np.float32).reshape(1, 3, 1, 1),
    )
    return validate(NetworkSpec(name="conv1d", layers=(input_layer((1, 6, 1)), conv)))


@pytest.mark.parametrize("sharing", [Sharing.ON, Sharing.OFF])
def test_conv1d_golden(sharing):
    """A 1-D convolution maps to exactly its twelve kernel synapses."""
    network = _conv1d()
    plan = optimize(network, constraints=CoreConstraints(max_neurons_per_core=2), sharing=sharing)
    image = loads_image(emit(build_image(network, plan, place(plan))))
    golden = [("conv", j + k, j, k + 1) for j in range(4) for k in range(3)]
    assert expand_image(image) == sorted(golden)
    assert image.layers[-1].shape == (1, 4, 1)
    assert sum(c.compartments.n_neurons for c in image.cores) == 10
    assert image_tally(image) == plan.total


def test_emit_format(compiled):
    """Images are written as sorted, two-space indented JSON ending in a newline."""
    _, _, image = compiled
    text = emit(image)
    assert text.endswith("}\n")
    assert text.startswith('{\n  "')
    assert text == json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n"


def test_dangling_target(compiled):
    """An image routing to a missing axon is refused."""
    _, _, image = compiled
    index, core = next(
        (i, c)
        for i, c in enumerate(image.cores)
        if any(a.kind is AxonKind.ROUTE for a in c.output_axons)
    )
    broken = replace(core, output_axons=(OutputAxon(AxonKind.ROUTE, 0, 1, (999, 0)),))
    cores = (*image.cores[:index], broken, *image.cores[index + 1 :])
    with pytest.raises(IntegrityError):
        emit(replace(image, cores=cores))


def test_load_errors(tmp_path):
    """Unknown formats, broken JSON and missing files are rejected."""
    with pytest.raises(VersionError, match="nfimg/1"):
        loads_image('{"format": "nfimg/0"}')
    with pytest.raises(ParseError):
        loads_image("{not json")
    with pytest.raises(ParseError, match="not found"):
        load_image(tmp_path / "missing.json")


def test_full_sharing_not_mappable(mlp):
    """The full-sharing bound cannot be turned into an image."""
    plan = optimize(mlp, sharing=Sharing.FULL)
    with pytest.raises(MapError, match="accounting bound"):
        build_image(mlp, plan)


def test_non_integer_weights(mlp):
    """Float weights must be normalized before mapping."""
    layers = list(mlp.layers)
    layers[1] = replace(layers[1], weights=np.full((6, 5), 0.5, dtype=np.float32))
    network = mlp.with_layers(layers)
    plan = optimize(network)
    with pytest.raises(MapError, match="normalize"):
        build_image(network, plan)


def _expected_synapses(network):
    out = []
    for pre, post in network.pairs():
        pair = unroll(pre, post)
        weights = post.flat_weights.astype(np.int64)
        out.extend(
            (post.id, int(i), int(j), int(weights[w]))
            for i, j, w in zip(pair.pre_index, pair.post_index, pair.weight_id)
        )
    return sorted(out)


def test_image_fidelity(compiled, mlp):
    """The image reproduces the planned tallies and the unrolled synapses."""
    plan, placement, image = compiled
    first, *rest = placement.tallies
    assert image_tally(image) == first.merge(*rest)
    assert expand_image(image) == _expected_synapses(mlp)
    assert image.n_cores == plan.n_cores


@pytest.mark.slow
@pytest.mark.timeout(600)
@pytest.mark.parametrize("seed", range(15))
@pytest.mark.parametrize("sharing", [Sharing.ON, Sharing.OFF])
def test_image_fidelity_random(seed, sharing):
    """Random networks keep tally and connectivity fidelity through mapping."""
    network = random_network(np.random.default_rng(seed))
    constraints = CoreConstraints(max_neurons_per_core=24)
    plan = optimize(network, constraints=constraints, sharing=sharing)
    placement = place(plan)
    image = build_image(network, plan, placement)
    first, *rest = placement.tallies
    assert image_tally(image) == first.merge(*rest)
    assert expand_image(image) == _expected_synapses(network)
    assert emit(loads_image(emit(image))) == emit(image)
