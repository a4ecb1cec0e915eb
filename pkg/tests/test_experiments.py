import json
from pathlib import Path

import numpy as np
import pytest

from spikemap.cli import compile_network, prepare_network
from spikemap.config import RunConfig
from spikemap.errors import UsageError
from spikemap.experiments import (
    ScalingRow,
    classification_error,
    compile_report,
    cost_terms,
    depthwise_comparison,
    dumps_report,
    error_vs_timesteps,
    mean_neuron_utilization,
    reference_error,
    scaling_row,
    scaling_table,
    to_csv,
    utilization,
)
from spikemap.helpers import create_conv_chain, create_mlp, create_toy_classifier, toy_dataset
from spikemap.mapper import build_image, place
from spikemap.partitioner import optimize
from spikemap.resources import CoreConstraints, CoreId, CoreUsage, ResourceTally, Sharing

FIXTURES = Path(__file__).parent / "fixtures"


def _compile(network, constraints=None):
    plan = optimize(network, constraints=constraints)
    return plan, build_image(network, plan, place(plan))


@pytest.fixture
def half_core():
    return ResourceTally(
        {
            CoreId("fc", 0): CoreUsage(
                compartments=512,
                input_axons=4096,
                synapse_units=65536,
            ),
        },
    )


def test_cost_terms(half_core):
    """The terms are normalized by the per-core budgets and sum to the total."""
    terms = cost_terms(half_core)
    assert terms == {
        "cores": 1.0,
        "synapses": 0.5,
        "axons": 0.5,
        "offchip": 0.0,
        "total": 2.0,
    }


def test_utilization(half_core):
    """Utilization is the used fraction of every per-core budget."""
    (row,) = utilization(half_core)
    assert (row.layer, row.core) == ("fc", 0)
    assert row.neurons == 0.5
    assert row.input_axons == 1.0
    assert row.output_axons == 0.0
    assert row.synapses == 0.5
    assert mean_neuron_utilization(half_core) == 0.5
    assert mean_neuron_utilization(ResourceTally()) == 0.0


def test_to_csv(half_core):
    """Rows are written under a header of their field names."""
    text = to_csv(utilization(half_core))
    assert text == "layer,core,neurons,input_axons,output_axons,synapses\nfc,0,0.5,1.0,0.0,0.5\n"
    assert to_csv([]) == ""


def test_compile_report():
    """The report lists every layer and agrees with the image."""
    network = create_mlp([6, 5, 3], rng=np.random.default_rng(0))
    plan, image = _compile(network, CoreConstraints(max_neurons_per_core=2))
    report = compile_report(plan, image)
    assert report["network"] == image.name
    assert report["n_cores"] == plan.n_cores
    assert [layer["id"] for layer in report["layers"]] == ["input", "dense0", "dense1"]
    assert sum(layer["cores"] for layer in report["layers"]) == report["n_cores"]
    assert len(report["cores"]) == report["n_cores"]
    assert report["cost"]["total"] == pytest.approx(
        sum(layer["cost"]["total"] for layer in report["layers"]),
    )
    assert json.loads(dumps_report(report)) == json.loads(json.dumps(report))


def test_classification_error():
    """A missing prediction counts as wrong."""
    assert classification_error([0, None, 1], np.array([0, 1, 0])) == pytest.approx(2 / 3)
    assert classification_error([], np.array([])) == 0.0


def test_reference_error():
    """The dense-math toy classifier separates its dataset."""
    inputs, labels = toy_dataset(np.random.default_rng(0), 20)
    assert reference_error(create_toy_classifier(), inputs, labels) == 0.0


def test_error_vs_timesteps():
    """The toy classifier errs on everything at no steps and on nothing after 200."""
    inputs, labels = toy_dataset(np.random.default_rng(1), 12)
    _, image = _compile(create_toy_classifier())
    points = error_vs_timesteps(image, inputs, labels, [200, 0, 50])
    assert [p.t for p in points] == [0, 50, 200]
    assert points[0].error == 1.0
    assert points[-1].error == 0.0
    assert points[0].energy_proxy == 0.0
    delays = [p.delay_proxy for p in points]
    assert delays == sorted(delays)
    for point in points:
        assert point.edp == pytest.approx(point.energy_proxy * point.delay_proxy)


def test_error_vs_timesteps_workers():
    """Threads do not change the results."""
    inputs, labels = toy_dataset(np.random.default_rng(2), 6)
    _, image = _compile(create_toy_classifier())
    serial = error_vs_timesteps(image, inputs, labels, [20, 100])
    threaded = error_vs_timesteps(image, inputs, labels, [20, 100], workers=3)
    assert serial == threaded


def test_error_vs_timesteps_usage():
    """Labels and at least one run length are required."""
    inputs, labels = toy_dataset(np.random.default_rng(3), 4)
    _, image = _compile(create_toy_classifier())
    with pytest.raises(UsageError, match="Labels are required"):
        error_vs_timesteps(image, inputs, None, [10])
    with pytest.raises(UsageError, match="3 labels for 4 inputs"):
        error_vs_timesteps(image, inputs, labels[:3], [10])
    with pytest.raises(UsageError, match="at least one run length"):
        error_vs_timesteps(image, inputs, labels, [])


def test_pretrained_time_sweep():
    """A calibrated pretrained classifier converges to its dense-math error."""
    cfg = RunConfig(
        model=FIXTURES / "pretrained_pairs.json",
        calib=FIXTURES / "pretrained_pairs_calib.bin",
    )
    network = prepare_network(cfg)
    output = network.output_layer
    assert output.neuron_config.threshold == 100
    np.testing.assert_array_equal(
        output.weights.reshape(4, 2), [[47, -35], [42, -29], [-35, 53], [-29, 47]]
    )
    inputs = np.array(
        [
            [0.9, 0.8, 0.0, 0.0],
            [0.0, 0.0, 0.7, 1.0],
            [0.6, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.9, 0.5],
            [0.0, 0.0, 0.4, 0.8],
            [1.0, 0.7, 0.0, 0.0],
        ]
    )
    labels = np.array([0, 1, 0, 1, 1, 1])
    expected = reference_error(network, inputs, labels)
    assert expected == pytest.approx(1 / 6)
    _, image = compile_network(cfg, network)
    points = error_vs_timesteps(image, inputs, labels, [10, 25, 50, 100, 200])
    edps = [p.edp for p in points]
    assert edps == sorted(edps)
    errors = [p.error for p in sorted(points, key=lambda p: p.edp)]
    assert all(later <= earlier for earlier, later in zip(errors, errors[1:]))
    assert points[-1].t == 200
    assert points[-1].error == expected


def test_scaling_table():
    """Partial sharing never needs more cores than no sharing."""
    rows = scaling_table([8, 4, 4], 16)
    assert [r.model_scale for r in rows] == [4, 8]
    for row in rows:
        assert isinstance(row, ScalingRow)
        assert row.cores_sharing_on <= row.cores_sharing_off
        assert row.cores_sharing_on <= 1.5 * row.cores_full_sharing_bound
        assert row.cores_sharing_on >= 4
        assert 0.0 < row.mean_utilization <= 1.0
    assert rows[0].cores_sharing_on <= rows[1].cores_sharing_on


def test_depthwise_comparison():
    """A depthwise layer fills its core; the standard one needs more synapses."""
    standard, depthwise = depthwise_comparison(8, 16, sharing=Sharing.OFF)
    assert (standard.variant, depthwise.variant) == ("standard", "depthwise")
    assert depthwise.cores <= standard.cores
    assert depthwise.mean_neuron_utilization == 1.0
    assert depthwise.synapse_units < standard.synapse_units


@pytest.mark.slow
@pytest.mark.timeout(600)
@pytest.mark.parametrize(
    ("width", "input_size"),
    [(8, 16), (16, 16), (32, 16), (64, 16), (8, 32), (16, 32), (8, 64)],
)
def test_scaling_family(width, input_size):
    """Across the CNN family partial sharing beats no sharing and stays near the bound."""
    row = scaling_row(create_conv_chain(input_size, width), width)
    assert row.cores_sharing_on <= row.cores_sharing_off
    assert row.cores_sharing_on <= 1.5 * row.cores_full_sharing_bound
