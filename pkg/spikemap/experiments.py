"""Sweeps and reports: error against run length, sharing scaling and utilization."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Any, NamedTuple, TypeVar

import numpy as np

from .errors import UsageError
from .helpers import create_conv_chain, create_depthwise_pair
from .mapper import image_tally
from .model_ir import lower
from .normalizer import emulate
from .partitioner import CostWeights, optimize
from .resources import CoreConstraints, Sharing, SynapseCostModel
from .simulator import edp_proxy, prefix_predictions, run_mapped

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .mapper import DeploymentImage
    from .model_ir import NetworkSpec
    from .partitioner import Plan
    from .resources import ResourceTally
    from .simulator import EnergyConstants, RunResult

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _map(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    """``fn`` over ``items`` in order, on ``workers`` threads."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def to_csv(rows: Sequence[Any]) -> str:
    """CSV text of named-tuple rows, with a header."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if rows:
        writer.writerow(rows[0]._fields)
        writer.writerows(rows)
    return buffer.getvalue()


# --- Utilization reports ------------------------------------------------------------


class CoreUtilization(NamedTuple):
    """Fractions of the per-core budgets one core uses."""

    layer: str
    core: int
    neurons: float
    input_axons: float
    output_axons: float
    synapses: float


def utilization(
    tally: ResourceTally,
    constraints: CoreConstraints | None = None,
) -> list[CoreUtilization]:
    """Per-core utilization of every core of a tally, in core order."""
    constraints = constraints or CoreConstraints()
    return [
        CoreUtilization(
            core.layer,
            core.core,
            usage.compartments / constraints.max_neurons_per_core,
            usage.input_axons / constraints.max_input_axons,
            usage.output_axons / constraints.max_output_axons,
            usage.synapse_units / constraints.synapse_budget_units,
        )
        for core, usage in tally.cores.items()
    ]


def mean_neuron_utilization(
    tally: ResourceTally,
    constraints: CoreConstraints | None = None,
) -> float:
    """Mean over cores of the used fraction of compartments."""
    rows = utilization(tally, constraints)
    return float(np.mean([row.neurons for row in rows])) if rows else 0.0


def cost_terms(
    tally: ResourceTally,
    w: CostWeights | None = None,
    constraints: CoreConstraints | None = None,
) -> dict[str, float]:
    """The weighted terms of the cost function and their sum."""
    w = w or CostWeights()
    constraints = constraints or CoreConstraints()
    terms = {
        "cores": w.cores * tally.n_cores,
        "synapses": w.synapses * tally.n_syn / constraints.synapse_budget_units,
        "axons": w.axons * tally.n_axons / constraints.max_axons,
        "offchip": w.offchip * tally.n_offchip,
    }
    terms["total"] = sum(terms.values())
    return terms


def compile_report(plan: Plan, image: DeploymentImage) -> dict[str, Any]:
    """Machine-readable summary of a compiled network.

    Resource figures come from the image itself, so the report shows what was
    actually mapped.
    """
    tally = image_tally(image)
    layers = []
    for partition in plan.partitions:
        layer_tally = tally.restrict(partition.layer_id)
        layers.append(
            {
                "id": partition.layer_id,
                "grid": list(partition.grid),
                "cores": partition.n_cores,
                "cost": cost_terms(layer_tally, plan.weights, plan.constraints),
            },
        )
    return {
        "network": image.name,
        "n_cores": image.n_cores,
        "n_chips": image.n_chips,
        "sharing": plan.sharing.value,
        "cost": cost_terms(tally, plan.weights, plan.constraints),
        "mean_neuron_utilization": mean_neuron_utilization(tally, plan.constraints),
        "layers": layers,
        "cores": [row._asdict() for row in utilization(tally, plan.constraints)],
    }


def dumps_report(report: dict[str, Any]) -> str:
    """Canonical JSON text of a report."""
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


# --- Error against run length -------------------------------------------------------


class TimePoint(NamedTuple):
    """Classification error and EDP proxy after ``t`` steps."""

    t: int
    error: float
    energy_proxy: float
    delay_proxy: float
    edp: float


def _check_labels(inputs: np.ndarray, labels: np.ndarray | None) -> np.ndarray:
    if labels is None:
        msg = "Labels are required to measure the classification error."
        raise UsageError(msg)
    labels = np.asarray(labels).reshape(-1)
    if labels.size != len(inputs):
        msg = f"Got {labels.size} labels for {len(inputs)} inputs."
        raise UsageError(msg)
    return labels


def classification_error(predictions: Sequence[int | None], labels: np.ndarray) -> float:
    """Fraction of wrong predictions; a missing prediction is wrong."""
    if len(predictions) == 0:
        return 0.0
    wrong = [p is None or p != int(label) for p, label in zip(predictions, labels)]
    return float(np.mean(wrong))


def reference_error(network: NetworkSpec, inputs: np.ndarray, labels: np.ndarray | None) -> float:
    """Error of the dense-math classifier the spiking network approximates."""
    labels = _check_labels(inputs, labels)
    return classification_error(emulate(network, inputs).predictions().tolist(), labels)


def error_vs_timesteps(
    image: DeploymentImage,
    inputs: np.ndarray,
    labels: np.ndarray | None,
    t_values: Sequence[int],
    *,
    constants: EnergyConstants | None = None,
    workers: int = 1,
) -> list[TimePoint]:
    """Error and EDP proxy for every run length in ``t_values``.

    Each input runs once for the longest run length; shorter run lengths are
    read off the prefixes of that run. Energy and delay are averaged per
    inference.
    """
    inputs = np.asarray(inputs)
    labels = _check_labels(inputs, labels)
    if not t_values:
        msg = "The time sweep needs at least one run length."
        raise UsageError(msg)
    t_max = max(t_values)
    output_id = image.layers[-1].id

    def run(frame: np.ndarray) -> RunResult:
        return run_mapped(image, frame, t_max)

    results = _map(run, list(inputs), workers)
    points = []
    for t in sorted(set(t_values)):
        predictions = [prefix_predictions(r.trace.rasters[output_id], [t])[0] for r in results]
        reports = [edp_proxy(r.counters.upto(t), image, t, constants) for r in results]
        energy = float(np.mean([r.energy for r in reports])) if reports else 0.0
        delay = float(np.mean([r.delay for r in reports])) if reports else 0.0
        error = classification_error(predictions, labels)
        point = TimePoint(t, error, energy, delay, energy * delay)
        logger.info("T=%d: error %.4f, EDP proxy %.4g", t, point.error, point.edp)
        points.append(point)
    return points


# --- Sharing scaling ----------------------------------------------------------------


class ScalingRow(NamedTuple):
    """Cores of one network under the three sharing modes."""

    model_scale: int
    cores_full_sharing_bound: int
    cores_sharing_on: int
    cores_sharing_off: int
    mean_utilization: float


def scaling_row(
    network: NetworkSpec,
    model_scale: int,
    *,
    m: int = 4,
    w: CostWeights | None = None,
    constraints: CoreConstraints | None = None,
    cost_model: SynapseCostModel | None = None,
) -> ScalingRow:
    """Compile one network with full, partial and no sharing."""
    constraints = constraints or CoreConstraints()
    network = lower(network)
    plans = {
        sharing: optimize(network, m, w, constraints, sharing, cost_model)
        for sharing in (Sharing.FULL, Sharing.ON, Sharing.OFF)
    }
    return ScalingRow(
        model_scale,
        plans[Sharing.FULL].n_cores,
        plans[Sharing.ON].n_cores,
        plans[Sharing.OFF].n_cores,
        mean_neuron_utilization(plans[Sharing.ON].total, constraints),
    )


def scaling_table(
    widths: Sequence[int],
    input_size: int,
    *,
    m: int = 4,
    w: CostWeights | None = None,
    constraints: CoreConstraints | None = None,
    cost_model: SynapseCostModel | None = None,
    seed: int | None = None,
    workers: int = 1,
) -> list[ScalingRow]:
    """Sharing effectiveness over a family of convolutional networks, one row per width.

    With a ``seed`` the networks carry random integer weights; the core counts
    depend on the connectivity only.
    """

    def row(width: int) -> ScalingRow:
        rng = np.random.default_rng([seed, width]) if seed is not None else None
        network = create_conv_chain(input_size, width, rng=rng)
        return scaling_row(network, width, m=m, w=w, constraints=constraints, cost_model=cost_model)

    rows = _map(row, sorted(set(widths)), workers)
    for r in rows:
        logger.info(
            "Width %d: %d / %d / %d cores (bound / on / off)",
            r.model_scale,
            r.cores_full_sharing_bound,
            r.cores_sharing_on,
            r.cores_sharing_off,
        )
    return rows


# --- Depthwise utilization ----------------------------------------------------------


class VariantRow(NamedTuple):
    """Cores and utilization of one convolution variant."""

    variant: str
    channels: int
    cores: int
    mean_neuron_utilization: float
    synapse_units: int


def depthwise_comparison(
    input_size: int,
    channels: int,
    *,
    sharing: Sharing = Sharing.ON,
    m: int = 4,
    w: CostWeights | None = None,
    constraints: CoreConstraints | None = None,
    cost_model: SynapseCostModel | None = None,
) -> list[VariantRow]:
    """Standard against depthwise 3x3 convolution on equal feature maps."""
    constraints = constraints or CoreConstraints()
    rows = []
    variants = zip(("standard", "depthwise"), create_depthwise_pair(input_size, channels))
    for variant, network in variants:
        plan = optimize(lower(network), m, w, constraints, sharing, cost_model)
        total = plan.total
        rows.append(
            VariantRow(
                variant,
                channels,
                plan.n_cores,
                mean_neuron_utilization(total, constraints),
                total.n_syn,
            ),
        )
    return rows
