"""Discrete-time execution of integer spiking networks.

Two executors share one neuron model: `run_reference` works on the network
with dense math, `run_mapped` on a deployment image, axon by axon. Spikes
emitted in one step are delivered in the next, so both produce identical
spike trains.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .connectivity import unroll
from .errors import IntegrityError, ShapeError
from .mapper import AxonKind, DeploymentImage, decode_group
from .model_ir import D_MAX, NeuronConfig, ResetMode, infer_shapes
from .normalizer import round_half_away

if TYPE_CHECKING:
    from .model_ir import NetworkSpec

logger = logging.getLogger(__name__)


@dataclass
class NeuronState:
    """Voltage, current and spike flag of a population of neurons."""

    u: np.ndarray
    i: np.ndarray
    spiked: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> NeuronState:
        """A population at rest."""
        zeros = np.zeros(n, dtype=np.int64)
        return cls(zeros, zeros.copy(), np.zeros(n, dtype=bool))


def _decay(values: np.ndarray, decay: int) -> np.ndarray:
    """``values * (D_MAX - decay) / D_MAX``, truncated toward zero."""
    product = values * (D_MAX - decay)
    return np.sign(product) * (np.abs(product) // D_MAX)


def step_dynamics(
    state: NeuronState,
    weighted_input: np.ndarray,
    cfg: NeuronConfig,
    bias: np.ndarray | int | None = None,
) -> NeuronState:
    """Advance a population by one step.

    The current decays and integrates the input, the voltage decays and
    integrates the current plus the bias, and neurons at or above the
    threshold spike. A hard reset sets the voltage to 0, a soft reset
    subtracts the threshold.
    """
    bias = cfg.bias if bias is None else bias
    current = _decay(state.i, cfg.i_decay) + np.asarray(weighted_input, dtype=np.int64)
    voltage = _decay(state.u, cfg.v_decay) + current + np.asarray(bias, dtype=np.int64)
    spiked = voltage >= cfg.threshold
    if cfg.reset_mode is ResetMode.SOFT:
        voltage = np.where(spiked, voltage - cfg.threshold, voltage)
    else:
        voltage = np.where(spiked, 0, voltage)
    return NeuronState(voltage, current, spiked)


@dataclass
class SpikeTrace:
    """Spike rasters of every layer, ``(T, n_neurons)`` booleans."""

    rasters: dict[str, np.ndarray]

    @property
    def timesteps(self) -> int:
        """Number of steps recorded."""
        return next(iter(self.rasters.values())).shape[0] if self.rasters else 0

    def times(self, layer_id: str) -> list[list[int]]:
        """Spike steps of every neuron of a layer, increasing."""
        raster = self.rasters[layer_id]
        return [np.flatnonzero(raster[:, n]).tolist() for n in range(raster.shape[1])]

    def counts(self, layer_id: str) -> np.ndarray:
        """Spikes per step of a layer."""
        return self.rasters[layer_id].sum(axis=1)

    def upto(self, t: int) -> SpikeTrace:
        """The first ``t`` steps."""
        return SpikeTrace({k: v[:t] for k, v in self.rasters.items()})

    def to_csv(self) -> str:
        """Rows ``layer, neuron_id, t``, ordered by layer, neuron and time."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["layer", "neuron_id", "t"])
        for layer_id, raster in self.rasters.items():
            t, neuron = np.nonzero(raster)
            order = np.lexsort((t, neuron))
            writer.writerows((layer_id, int(neuron[k]), int(t[k])) for k in order)
        return buffer.getvalue()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpikeTrace):
            return NotImplemented
        return self.rasters.keys() == other.rasters.keys() and all(
            np.array_equal(v, other.rasters[k]) for k, v in self.rasters.items()
        )


@dataclass
class Counters:
    """Per-step activity counters; totals are properties."""

    spikes: np.ndarray
    synaptic_ops: np.ndarray
    core_to_core: np.ndarray
    chip_to_chip: np.ndarray

    @classmethod
    def zeros(cls, timesteps: int) -> Counters:
        """Counters of a run of ``timesteps`` steps."""
        return cls(*(np.zeros(timesteps, dtype=np.int64) for _ in range(4)))

    @property
    def timesteps_run(self) -> int:
        """Number of steps counted."""
        return int(self.spikes.size)

    @property
    def spikes_total(self) -> int:
        """All spikes emitted."""
        return int(self.spikes.sum())

    @property
    def synaptic_ops_total(self) -> int:
        """Synapses activated by delivered spikes."""
        return int(self.synaptic_ops.sum())

    @property
    def core_to_core_msgs(self) -> int:
        """Spike messages sent between cores."""
        return int(self.core_to_core.sum())

    @property
    def chip_to_chip_msgs(self) -> int:
        """Spike messages that left their chip."""
        return int(self.chip_to_chip.sum())

    def upto(self, t: int) -> Counters:
        """The counters of the first ``t`` steps."""
        return Counters(
            self.spikes[:t],
            self.synaptic_ops[:t],
            self.core_to_core[:t],
            self.chip_to_chip[:t],
        )

    def __add__(self, other: Counters) -> Counters:
        return Counters(
            self.spikes + other.spikes,
            self.synaptic_ops + other.synaptic_ops,
            self.core_to_core + other.core_to_core,
            self.chip_to_chip + other.chip_to_chip,
        )

    def to_dict(self) -> dict[str, int]:
        """Totals by name."""
        return {
            "spikes_total": self.spikes_total,
            "synaptic_ops": self.synaptic_ops_total,
            "core_to_core_msgs": self.core_to_core_msgs,
            "chip_to_chip_msgs": self.chip_to_chip_msgs,
            "timesteps_run": self.timesteps_run,
        }

    def to_json(self) -> str:
        """Totals as a JSON object."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class RunResult:
    """Spike trace, output spike counts and prediction of one run."""

    trace: SpikeTrace
    output_counts: np.ndarray
    prediction: int | None
    counters: Counters = field(default_factory=lambda: Counters.zeros(0))


def predict(counts: np.ndarray) -> int | None:
    """Index of the most active output (lowest on ties), or None without output spikes."""
    counts = np.asarray(counts)
    if counts.size == 0 or counts.max() <= 0:
        return None
    return int(np.argmax(counts))


def prefix_predictions(raster: np.ndarray, t_values: list[int] | np.ndarray) -> list[int | None]:
    """Prediction after each of the given numbers of steps of one output raster."""
    cumulative = np.vstack([np.zeros((1, raster.shape[1]), dtype=np.int64), np.cumsum(raster, 0)])
    return [predict(cumulative[min(t, raster.shape[0])]) for t in t_values]


@dataclass(frozen=True)
class Stimulus:
    """Input of one run: an analog frame, or a ``(T, n_input)`` spike raster."""

    frame: np.ndarray | None = None
    raster: np.ndarray | None = None

    @classmethod
    def of(cls, value: np.ndarray | Stimulus) -> Stimulus:
        """Wrap an array; 2-D boolean arrays are rasters, anything else a frame."""
        if isinstance(value, Stimulus):
            return value
        array = np.asarray(value)
        if array.ndim == 2 and array.dtype == bool:  # noqa: PLR2004
            return cls(raster=array)
        return cls(frame=array.reshape(-1))

    def injection(self, config: NeuronConfig, n: int) -> np.ndarray:
        """Per-step bias current of the input neurons."""
        if self.frame is None:
            return np.zeros(n, dtype=np.int64)
        if self.frame.size != n:
            msg = f"The input frame has {self.frame.size} values, the input layer {n}."
            raise ShapeError(msg)
        rates = np.clip(self.frame.astype(np.float64), 0.0, 1.0)
        return round_half_away(rates * config.threshold).astype(np.int64)

    def forced(self, t: int, n: int) -> np.ndarray | None:
        """Input spikes forced at step ``t``, if the stimulus is a raster."""
        if self.raster is None:
            return None
        if self.raster.shape[1] != n:
            msg = f"The input raster has {self.raster.shape[1]} columns, the input layer {n}."
            raise ShapeError(msg)
        if t >= self.raster.shape[0]:
            return np.zeros(n, dtype=bool)
        return self.raster[t].astype(bool)


def _integer(array: np.ndarray | None, what: str) -> np.ndarray:
    if array is None:
        msg = f"{what} is missing."
        raise ShapeError(msg)
    if not np.array_equal(array, np.round(array)):
        msg = f"{what} is not integer valued; normalize the network first."
        raise ShapeError(msg)
    return np.asarray(array).astype(np.int64).reshape(-1)


def run_reference(
    network: NetworkSpec,
    stimulus: np.ndarray | Stimulus,
    timesteps: int | None = None,
) -> RunResult:
    """Run a lowered integer network layer by layer with dense math.

    Parameters
    ----------
    network
        A lowered network with integer weights and biases.
    stimulus
        An analog frame, injected every step as a bias of the input neurons,
        or a boolean spike raster that forces the input spikes.
    timesteps
        Steps to run; defaults to the network's ``timesteps``.

    """
    network = infer_shapes(network)
    timesteps = network.timesteps if timesteps is None else timesteps
    stimulus = Stimulus.of(stimulus)
    layers = network.layers
    pairs = [unroll(pre, post) for pre, post in network.pairs()]
    weights = [_integer(post.weights, f"Weights of layer '{post.id}'") for post in layers[1:]]
    biases = [_integer(layer.neuron_biases(), f"Biases of layer '{layer.id}'") for layer in layers]
    first = layers[0]
    biases[0] = biases[0] + stimulus.injection(first.neuron_config, first.n_neurons)
    fan_out = [pair.fan_out() for pair in pairs]

    states = [NeuronState.zeros(layer.n_neurons) for layer in layers]
    rasters = {layer.id: np.zeros((timesteps, layer.n_neurons), dtype=bool) for layer in layers}
    counters = Counters.zeros(timesteps)
    for t in range(timesteps):
        previous = [state.spiked for state in states]
        for k, layer in enumerate(layers):
            if k == 0:
                weighted = np.zeros(layer.n_neurons, dtype=np.int64)
            else:
                arriving = pairs[k - 1].propagate(previous[k - 1], weights[k - 1])
                weighted = np.rint(arriving).astype(np.int64)
                counters.synaptic_ops[t] += int(fan_out[k - 1][previous[k - 1]].sum())
            forced = stimulus.forced(t, layer.n_neurons) if k == 0 else None
            if forced is not None:
                states[k] = NeuronState(states[k].u, states[k].i, forced)
            else:
                states[k] = step_dynamics(states[k], weighted, layer.neuron_config, biases[k])
            rasters[layer.id][t] = states[k].spiked
        counters.spikes[t] = sum(int(state.spiked.sum()) for state in states)
    counts = rasters[layers[-1].id].sum(axis=0)
    return RunResult(SpikeTrace(rasters), counts, predict(counts), counters)


# --- Mapped execution ---------------------------------------------------------------


@dataclass
class _Route:
    """Synapses reached through the route axons of one source core, flattened."""

    member: np.ndarray
    dst: np.ndarray
    dst_local: np.ndarray
    weight: np.ndarray
    msg_member: np.ndarray
    msg_offchip: np.ndarray


@dataclass
class _MappedCore:
    layer: int
    config: NeuronConfig
    bias: np.ndarray
    neurons: np.ndarray
    route: _Route
    injected: bool
    state: NeuronState = field(init=False)

    def __post_init__(self) -> None:
        self.state = NeuronState.zeros(self.bias.size)


def _routes(image: DeploymentImage, index: int) -> _Route:
    core = image.cores[index]
    member, dst, dst_local, weight, msg_member, msg_offchip = [], [], [], [], [], []
    for axon in core.output_axons:
        if axon.kind is not AxonKind.ROUTE:
            continue
        if axon.target is None:
            msg = f"Route axon of core {core.core_id} has no target."
            raise IntegrityError(msg)
        target_core, slot = axon.target
        target = image.cores[target_core]
        entry = target.input_axons[slot]
        if entry.group is None or entry.group not in target.synapses:
            msg = f"Core {core.core_id} routes to an axon without synapses."
            raise IntegrityError(msg)
        template = decode_group(target.synapses[entry.group]).template
        table = image.weights[target.layer]
        members = np.arange(axon.start, axon.start + axon.count)
        msg_member.append(members)
        msg_offchip.append(np.full(members.size, target.chip != core.chip))
        for k, synapses in enumerate(template):
            for offset, wid in synapses:
                member.append(axon.start + k)
                dst.append(target_core)
                dst_local.append(entry.base + offset)
                weight.append(int(table[wid]))

    def cat(parts: list, dtype: type) -> np.ndarray:
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

    return _Route(
        member=np.asarray(member, dtype=np.int64),
        dst=np.asarray(dst, dtype=np.int64),
        dst_local=np.asarray(dst_local, dtype=np.int64),
        weight=np.asarray(weight, dtype=np.int64),
        msg_member=cat(msg_member, np.int64),
        msg_offchip=cat(msg_offchip, bool),
    )


def _mapped_cores(image: DeploymentImage, stimulus: Stimulus) -> list[_MappedCore]:
    layer_index = {layer.id: k for k, layer in enumerate(image.layers)}
    partitions = {layer.id: layer.partition for layer in image.layers}
    cores = []
    for i, core in enumerate(image.cores):
        table = core.compartments
        config = NeuronConfig(
            threshold=table.threshold.value,
            v_decay=table.v_decay,
            i_decay=table.i_decay,
            reset_mode=table.reset_mode,
        )
        neurons = partitions[core.layer].global_of[core.core]
        bias = table.biases
        injected = any(a.kind is AxonKind.INJECT for a in core.input_axons)
        if injected and stimulus.frame is not None:
            n_input = int(np.prod(partitions[core.layer].shape))
            frame = stimulus.injection(config, n_input)
            bias = bias + frame[neurons]
        cores.append(
            _MappedCore(
                layer_index[core.layer], config, bias, neurons, _routes(image, i), injected
            ),
        )
    return cores


def run_mapped(
    image: DeploymentImage,
    stimulus: np.ndarray | Stimulus,
    timesteps: int | None = None,
) -> RunResult:
    """Run a deployment image core by core.

    Every step first delivers the previous step's spikes through the route
    axons and the synapse groups they reference, then updates every core's
    compartments. A soft-reset neuron's reset compartment fires with it and
    its inhibition lands within the same step.
    """
    timesteps = image.timesteps if timesteps is None else timesteps
    stimulus = Stimulus.of(stimulus)
    cores = _mapped_cores(image, stimulus)
    rasters = {
        layer.id: np.zeros((timesteps, int(np.prod(layer.shape))), dtype=bool)
        for layer in image.layers
    }
    counters = Counters.zeros(timesteps)
    ids = [layer.id for layer in image.layers]
    for t in range(timesteps):
        buffers = [np.zeros(core.bias.size, dtype=np.int64) for core in cores]
        for core in cores:
            route = core.route
            spiked = core.state.spiked
            active = spiked[route.member]
            if active.any():
                for dst in np.unique(route.dst[active]):
                    hit = active & (route.dst == dst)
                    np.add.at(buffers[dst], route.dst_local[hit], route.weight[hit])
            counters.synaptic_ops[t] += int(active.sum())
            sent = spiked[route.msg_member]
            counters.core_to_core[t] += int(sent.sum())
            counters.chip_to_chip[t] += int((sent & route.msg_offchip).sum())
        for core, buffer in zip(cores, buffers):
            n_layer = rasters[ids[core.layer]].shape[1]
            forced = stimulus.forced(t, n_layer) if core.injected else None
            if forced is not None:
                spikes = forced[core.neurons]
                core.state = NeuronState(core.state.u, core.state.i, spikes)
            else:
                core.state = _step_core(core, buffer)
            rasters[ids[core.layer]][t, core.neurons] = core.state.spiked
            counters.spikes[t] += int(core.state.spiked.sum())
    counts = rasters[ids[-1]].sum(axis=0)
    return RunResult(SpikeTrace(rasters), counts, predict(counts), counters)


def _step_core(core: _MappedCore, weighted: np.ndarray) -> NeuronState:
    """Compartment update; the reset compartment applies its recurrent weight to spiking somas."""
    config = core.config
    if config.reset_mode is ResetMode.HARD:
        return step_dynamics(core.state, weighted, config, core.bias)
    current = _decay(core.state.i, config.i_decay) + weighted
    voltage = _decay(core.state.u, config.v_decay) + current + core.bias
    spiked = voltage >= config.threshold
    reset_input = np.where(spiked, -config.threshold, 0)
    return NeuronState(voltage + reset_input, current, spiked)


# --- EDP proxy ----------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyConstants:
    """Unitless cost constants of the energy and delay proxies."""

    e_spike: float = 1.0
    e_syn: float = 0.5
    e_static: float = 10.0
    t_base: float = 1.0
    t_syn: float = 0.001
    t_offchip: float = 0.01


class EdpReport(NamedTuple):
    """Energy proxy, delay proxy and their product."""

    energy: float
    delay: float
    edp: float

    def to_dict(self) -> dict[str, float]:
        """The report by name."""
        return {"energy_proxy": self.energy, "delay_proxy": self.delay, "edp": self.edp}


def edp_proxy(
    counters: Counters,
    image: DeploymentImage | int,
    timesteps: int | None = None,
    constants: EnergyConstants | None = None,
) -> EdpReport:
    """Energy-delay product proxy of a run.

    ``energy = e_spike * spikes + e_syn * synaptic_ops + e_static * n_cores * T``
    and ``delay = T * t_base + t_syn * synaptic_ops + t_offchip * chip_to_chip``.
    These are proxies built from counters, not physical units.
    """
    constants = constants or EnergyConstants()
    n_cores = image if isinstance(image, int) else image.n_cores
    timesteps = counters.timesteps_run if timesteps is None else timesteps
    energy = (
        constants.e_spike * counters.spikes_total
        + constants.e_syn * counters.synaptic_ops_total
        + constants.e_static * n_cores * timesteps
    )
    delay = (
        timesteps * constants.t_base
        + constants.t_syn * counters.synaptic_ops_total
        + constants.t_offchip * counters.chip_to_chip_msgs
    )
    return EdpReport(energy, delay, energy * delay)
