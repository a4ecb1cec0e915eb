import json

import numpy as np
import pytest

from spikemap.errors import ShapeError
from spikemap.helpers import create_mlp, create_toy_classifier, input_layer, random_network
from spikemap.mapper import build_image, image_tally, place
from spikemap.model_ir import (
    D_MAX,
    LayerKind,
    LayerSpec,
    NetworkSpec,
    NeuronConfig,
    ResetMode,
    validate,
)
from spikemap.partitioner import optimize
from spikemap.resources import Compression, CoreConstraints, Sharing, SynapseCostModel
from spikemap.simulator import (
    Counters,
    EnergyConstants,
    NeuronState,
    SpikeTrace,
    Stimulus,
    edp_proxy,
    prefix_predictions,
    run_mapped,
    run_reference,
    step_dynamics,
)


def _compile(network, constraints=None, sharing=Sharing.ON, chips=1):
    plan = optimize(network, constraints=constraints, sharing=sharing)
    return build_image(network, plan, place(plan, chips=chips))


def _spike_count(a, threshold, reset_mode, steps):
    config = NeuronConfig(threshold=threshold, reset_mode=reset_mode)
    state = NeuronState.zeros(1)
    spikes = []
    for _ in range(steps):
        state = step_dynamics(state, np.array([a]), config)
        spikes.append(bool(state.spiked[0]))
    return spikes


def test_soft_reset_trace():
    """A constant input of 30 against a threshold of 100 spikes three times in ten steps."""
    spikes = _spike_count(30, 100, ResetMode.SOFT, 10)
    assert [t for t, s in enumerate(spikes) if s] == [3, 6, 9]
    hard = _spike_count(30, 100, ResetMode.HARD, 10)
    assert [t for t, s in enumerate(hard) if s] == [3, 7]


def test_current_cleared_each_step():
    """The default current decay clears the current, so each input is integrated once."""
    assert NeuronConfig(threshold=100).i_decay == D_MAX
    config = NeuronConfig(threshold=100, i_decay=0, reset_mode=ResetMode.SOFT)
    state = NeuronState.zeros(1)
    spikes = []
    for _ in range(3):
        state = step_dynamics(state, np.array([30]), config)
        spikes.append(bool(state.spiked[0]))
    assert spikes == [False, False, True]


@pytest.mark.parametrize(
    ("reset_mode", "voltage"),
    [(ResetMode.SOFT, 22), (ResetMode.HARD, 0)],
)
def test_reset_modes(reset_mode, voltage):
    """A soft reset keeps the excess over the threshold, a hard reset drops it."""
    config = NeuronConfig(threshold=128, reset_mode=reset_mode)
    state = step_dynamics(NeuronState.zeros(1), np.array([150]), config)
    assert state.spiked[0]
    assert state.u[0] == voltage


def test_decay_truncates_toward_zero():
    """Decayed voltages are truncated toward zero for both signs."""
    config = NeuronConfig(threshold=100, v_decay=2048)
    state = NeuronState(np.array([-5, 5]), np.zeros(2, dtype=np.int64), np.zeros(2, dtype=bool))
    state = step_dynamics(state, np.zeros(2), config)
    np.testing.assert_array_equal(state.u, [-2, 2])


def test_zero_input_never_spikes():
    """Without input and bias nothing spikes."""
    assert not any(_spike_count(0, 1, ResetMode.HARD, 50))


@pytest.mark.parametrize("a", [10, 30, 70, 99])
def test_soft_reset_rate(a):
    """Soft reset reaches the rate a / threshold; hard reset falls short unless a divides it."""
    threshold, steps = 100, 1000
    soft = sum(_spike_count(a, threshold, ResetMode.SOFT, steps))
    hard = sum(_spike_count(a, threshold, ResetMode.HARD, steps))
    assert soft == a * steps // threshold
    assert hard == steps // -(-threshold // a)
    if threshold % a == 0:
        assert hard == soft
    else:
        assert hard < soft


def _identity(weight=128, threshold=128):
    layers = (
        input_layer((1, 1, 1)),
        LayerSpec(
            id="out",
            kind=LayerKind.DENSE,
            neuron_config=NeuronConfig(threshold=threshold),
            weights=np.array([[weight]], dtype=np.float32),
        ),
    )
    return validate(NetworkSpec(name="identity", layers=layers, timesteps=20))


def test_identity_spikes_every_step():
    """The output follows the input one step later."""
    result = run_reference(_identity(), np.array([1.0]))
    raster = result.trace.rasters["out"]
    assert not raster[0].any()
    assert raster[1:].all()
    assert result.output_counts.tolist() == [19]
    assert result.prediction == 0
    assert result.trace.rasters["input"].all()


def test_zero_timesteps():
    """A run of no steps has no counts and no prediction."""
    result = run_reference(_identity(), np.array([1.0]), timesteps=0)
    assert result.output_counts.tolist() == [0]
    assert result.prediction is None


@pytest.mark.parametrize(
    ("frame", "label"),
    [([1.0, 1.0, 0.0, 0.0], 0), ([0.0, 0.1, 0.9, 0.8], 1)],
)
def test_toy_classifier(frame, label):
    """The spiking toy classifier predicts the larger pair."""
    network = create_toy_classifier()
    assert run_reference(network, np.array(frame)).prediction == label
    assert run_mapped(_compile(network), np.array(frame)).prediction == label


def test_raster_stimulus():
    """A boolean raster forces the input spikes."""
    network = _identity()
    raster = np.zeros((20, 1), dtype=bool)
    raster[[2, 5]] = True
    result = run_reference(network, raster)
    assert result.trace.times("input") == [[2, 5]]
    assert result.trace.times("out") == [[3, 6]]
    mapped = run_mapped(_compile(network), raster)
    assert mapped.trace == result.trace


def test_stimulus_shape_errors():
    """Frames and rasters must match the input layer."""
    with pytest.raises(ShapeError):
        run_reference(_identity(), np.array([1.0, 0.0]))
    with pytest.raises(ShapeError):
        run_reference(_identity(), np.zeros((5, 2), dtype=bool))
    assert Stimulus.of(np.zeros((5, 2), dtype=bool)).raster is not None
    assert Stimulus.of(np.zeros((2, 2))).frame.shape == (4,)


def test_non_integer_weights():
    """The reference executor runs integer networks only."""
    with pytest.raises(ShapeError, match="normalize"):
        run_reference(_identity(weight=0.5), np.array([1.0]))


def test_counters_match_fan_out():
    """Synaptic operations equal the fan-out of every delivered spike."""
    network = create_mlp([6, 5, 3], rng=np.random.default_rng(2))
    frame = np.random.default_rng(3).random(6)
    result = run_reference(network, frame, 50)
    expected = 0
    for pre, post in network.pairs():
        expected += int(result.trace.rasters[pre.id][:-1].sum()) * post.n_neurons
    assert result.counters.synaptic_ops_total == expected
    spikes = sum(int(r.sum()) for r in result.trace.rasters.values())
    assert result.counters.spikes_total == spikes


def test_mapped_single_chip():
    """A one-chip image sends no chip-to-chip messages and matches the reference."""
    network = create_mlp([6, 5, 3], rng=np.random.default_rng(2))
    frame = np.random.default_rng(3).random(6)
    mapped = run_mapped(_compile(network), frame, 50)
    reference = run_reference(network, frame, 50)
    assert mapped.trace == reference.trace
    assert mapped.counters.chip_to_chip_msgs == 0
    assert mapped.counters.synaptic_ops_total == reference.counters.synaptic_ops_total


def test_mapped_two_chips():
    """Spikes crossing chips are counted and do not change the trace."""
    network = create_mlp([4, 8])
    constraints = CoreConstraints(max_neurons_per_core=4, cores_per_chip=2)
    image = _compile(network, constraints, chips=2)
    assert image.n_chips == 2
    frame = np.ones(4)
    mapped = run_mapped(image, frame, 10)
    assert mapped.trace == run_reference(network, frame, 10).trace
    assert mapped.counters.chip_to_chip_msgs > 0


def test_soft_reset_mapped():
    """Soft-reset layers behave the same once expanded into two compartments."""
    network = create_mlp([5, 4, 3], rng=np.random.default_rng(4), soft_reset=True)
    frame = np.random.default_rng(5).random(5)
    image = _compile(network)
    assert all(core.compartments.reset_weight == -16 for core in image.cores[1:])
    assert run_mapped(image, frame, 60).trace == run_reference(network, frame, 60).trace


def test_prefix_predictions():
    """Predictions follow the cumulative counts, lowest index on ties."""
    raster = np.array([[0, 0], [1, 0], [0, 1], [0, 1]], dtype=bool)
    assert prefix_predictions(raster, [0, 2, 3, 4, 10]) == [None, 0, 0, 1, 1]


def test_trace_csv():
    """The trace export lists one row per spike, by layer, neuron and time."""
    trace = SpikeTrace({"a": np.array([[0, 1], [1, 1]], dtype=bool)})
    assert trace.to_csv() == "layer,neuron_id,t\na,0,1\na,1,0\na,1,1\n"
    assert trace.timesteps == 2
    assert trace.upto(1).counts("a").tolist() == [1]


def test_counters_json():
    """Counter totals are exported by name."""
    counters = Counters.zeros(3)
    counters.spikes[:] = [1, 2, 3]
    data = json.loads((counters + counters).to_json())
    assert data == {
        "spikes_total": 12,
        "synaptic_ops": 0,
        "core_to_core_msgs": 0,
        "chip_to_chip_msgs": 0,
        "timesteps_run": 3,
    }
    assert counters.upto(2).spikes_total == 3


def test_edp_static_floor():
    """Without activity the energy proxy is the static cost of the cores."""
    report = edp_proxy(Counters.zeros(10), 3)
    assert report.energy == 300.0
    assert report.delay == 10.0
    assert report.edp == 3000.0


def test_edp_linear_in_timesteps():
    """Doubling the run length at constant activity doubles energy and delay."""

    def counters(steps):
        c = Counters.zeros(steps)
        c.spikes[:] = 2
        c.synaptic_ops[:] = 5
        c.chip_to_chip[:] = 1
        return c

    constants = EnergyConstants()
    short = edp_proxy(counters(10), 4, constants=constants)
    long = edp_proxy(counters(20), 4, constants=constants)
    assert long.energy == pytest.approx(2 * short.energy)
    assert long.delay == pytest.approx(2 * short.delay)
    assert long.to_dict()["edp"] == pytest.approx(4 * short.edp)


@pytest.mark.slow
@pytest.mark.timeout(600)
@pytest.mark.parametrize("scheme", [Compression.SPARSE, Compression.DENSE, Compression.RUNLENGTH])
@pytest.mark.parametrize("seed", range(200))
def test_mapped_equals_reference(seed, scheme):
    """Mapped execution reproduces the reference spike trains bit for bit."""
    rng = np.random.default_rng(seed)
    network = random_network(rng)
    frame = rng.random(network.input_layer.n_neurons)
    reference = run_reference(network, frame, 100)
    constraints = CoreConstraints(max_neurons_per_core=int(rng.integers(16, 64)))
    cost_model = SynapseCostModel(scheme=scheme)
    for m in (1, 4):
        for sharing in (Sharing.ON, Sharing.OFF):
            plan = optimize(
                network, m, constraints=constraints, sharing=sharing, cost_model=cost_model,
            )
            placement = place(plan)
            image = build_image(network, plan, placement)
            first, *rest = placement.tallies
            assert image_tally(image) == first.merge(*rest)
            mapped = run_mapped(image, frame, 100)
            assert mapped.trace == reference.trace
            assert mapped.counters.synaptic_ops_total == reference.counters.synaptic_ops_total
            assert mapped.counters.spikes_total == reference.counters.spikes_total
