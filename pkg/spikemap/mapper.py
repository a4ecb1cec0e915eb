"""Placement of partitioned layers onto chips and assembly of the deployment image."""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from .connectivity import SynapseGroup, build_groups, choose_scheme, unroll
from .errors import CapacityError, IntegrityError, MapError, ParseError, VersionError
from .model_ir import ResetMode
from .normalizer import QuantizationConfig, QuantizedWeight, decompose
from .partitioner import Plan, check_hard, place_chain, tally_chain
from .resources import (
    Box,
    Compression,
    CoreConstraints,
    CoreId,
    CoreUsage,
    Partition,
    ResourceTally,
    Sharing,
    SynapseCostModel,
)

if TYPE_CHECKING:
    from .connectivity import PopulationAxon
    from .model_ir import LayerSpec, NetworkSpec

logger = logging.getLogger(__name__)

IMAGE_FORMAT = "nfimg/1"


# --- Placement ----------------------------------------------------------------------


@dataclass(frozen=True)
class Placement:
    """Chip of every core of every layer, and the tallies with off-chip charges."""

    chips: tuple[tuple[int, ...], ...]
    tallies: tuple[ResourceTally, ...]
    n_chips: int


def place(
    plan: Plan,
    constraints: CoreConstraints | None = None,
    chips: int = 1,
) -> Placement:
    """Assign cores to chips first-fit in layer order, starting from the input layer.

    Raises
    ------
    CapacityError
        If the plan needs more cores than ``chips`` chips hold.
    MapError
        If doubling the charge of off-chip axons breaks a hard limit.

    """
    constraints = constraints or plan.constraints
    capacity = chips * constraints.cores_per_chip
    if plan.n_cores > capacity:
        msg = (
            f"Network '{plan.network.name}' needs {plan.n_cores} cores but {chips} chip(s)"
            f" hold only {capacity}."
        )
        raise CapacityError(msg)
    assigned = place_chain(plan.partitions, constraints.cores_per_chip)
    tallies = tally_chain(plan.network, plan.partitions, plan.sharing, plan.cost_model, assigned)
    for partition, tally, layer_chips in zip(plan.partitions, tallies, assigned):
        valid, violation = check_hard(tally, constraints)
        if not valid:
            msg = f"Placement breaks a hard limit: {violation}."
            raise MapError(msg)
        logger.info(
            "Placed layer '%s' on chip(s) %s",
            partition.layer_id,
            sorted(set(layer_chips)),
        )
    n_chips = len({chip for layer in assigned for chip in layer})
    return Placement(chips=assigned, tallies=tuple(tallies), n_chips=n_chips)


# --- Synapse encodings --------------------------------------------------------------


@dataclass(frozen=True)
class EncodedGroup:
    """A synapse group in one of the storage encodings.

    Each slot's payload lists weight ids by encoding: ``sparse`` holds
    ``offset, wid`` pairs; ``dense`` holds the first offset followed by one
    weight id per covered destination (``-1`` for gaps); ``runlength`` holds
    ``start, length, wid...`` per run of consecutive destinations.
    """

    scheme: Compression
    payload: tuple[tuple[int, ...], ...]
    cost_units: int


def _runs(slot: tuple[tuple[int, int], ...]) -> list[list[tuple[int, int]]]:
    runs: list[list[tuple[int, int]]] = []
    for offset, wid in sorted(slot):
        if runs and offset == runs[-1][-1][0] + 1:
            runs[-1].append((offset, wid))
        else:
            runs.append([(offset, wid)])
    return runs


def _encode_slot(slot: tuple[tuple[int, int], ...], scheme: Compression) -> tuple[int, ...]:
    if not slot:
        return ()
    entries = sorted(slot)
    match scheme:
        case Compression.SPARSE:
            return tuple(v for entry in entries for v in entry)
        case Compression.DENSE:
            start, end = entries[0][0], entries[-1][0]
            row = [-1] * (end - start + 1)
            for offset, wid in entries:
                row[offset - start] = wid
            return (start, *row)
        case Compression.RUNLENGTH:
            out: list[int] = []
            for run in _runs(slot):
                out.extend((run[0][0], len(run), *(wid for _, wid in run)))
            return tuple(out)
    msg = f"Cannot encode with scheme {scheme.value}."
    raise MapError(msg)


def _decode_slot(payload: tuple[int, ...], scheme: Compression) -> tuple[tuple[int, int], ...]:
    if not payload:
        return ()
    match scheme:
        case Compression.SPARSE:
            return tuple(zip(payload[0::2], payload[1::2]))
        case Compression.DENSE:
            start = payload[0]
            return tuple((start + k, wid) for k, wid in enumerate(payload[1:]) if wid >= 0)
        case Compression.RUNLENGTH:
            out = []
            k = 0
            while k < len(payload):
                start, length = payload[k], payload[k + 1]
                out.extend((start + j, payload[k + 2 + j]) for j in range(length))
                k += 2 + length
            return tuple(out)
    msg = f"Cannot decode scheme {scheme.value}."
    raise MapError(msg)


def encode_group(
    group: SynapseGroup,
    scheme: Compression = Compression.AUTO,
    cost_model: SynapseCostModel | None = None,
) -> EncodedGroup:
    """Encode a group; ``auto`` picks the cheapest encoding (sparse, dense, runlength on ties)."""
    cost_model = replace(cost_model or SynapseCostModel(), scheme=scheme)
    chosen, cost = choose_scheme(group, cost_model)
    payload = tuple(_encode_slot(slot, chosen) for slot in group.template)
    return EncodedGroup(chosen, payload, cost)


def decode_group(encoded: EncodedGroup) -> SynapseGroup:
    """The group an encoding was made from."""
    return SynapseGroup(tuple(_decode_slot(p, encoded.scheme) for p in encoded.payload))


# --- Image types --------------------------------------------------------------------


class AxonKind(str, Enum):
    """Roles of input and output axons."""

    GROUP = "group"
    INJECT = "inject"
    RESET = "reset"
    ROUTE = "route"
    READOUT = "readout"


@dataclass(frozen=True)
class InputAxon:
    """An input axon table entry.

    A ``group`` axon applies its group, slot by slot, from ``base``.
    ``inject`` and ``reset`` entries stand for ``count`` axons, one per
    neuron of the core.
    """

    kind: AxonKind
    count: int
    group: str | None = None
    base: int = 0


@dataclass(frozen=True)
class OutputAxon:
    """An output axon table entry.

    A ``route`` axon carries the spikes of members ``start .. start + count``
    to input axon ``target[1]`` of image core ``target[0]``; a ``readout``
    entry stands for ``count`` axons to the spike counter.
    """

    kind: AxonKind
    start: int
    count: int
    target: tuple[int, int] | None = None


@dataclass(frozen=True)
class CompartmentTable:
    """Neuron parameters of one core; biases are per neuron."""

    n_neurons: int
    threshold: QuantizedWeight
    v_decay: int
    i_decay: int
    reset_mode: ResetMode
    bias_mantissa: np.ndarray = field(compare=False, repr=False)
    bias_exponent: np.ndarray = field(compare=False, repr=False)
    reset_weight: int | None = None

    @property
    def n_compartments(self) -> int:
        """Compartments in use: two per neuron once soft reset is expanded."""
        return self.n_neurons * (2 if self.reset_weight is not None else 1)

    @property
    def biases(self) -> np.ndarray:
        """Per-neuron bias values."""
        return self.bias_mantissa.astype(np.int64) << self.bias_exponent.astype(np.int64)


def expand_soft_reset(
    table: CompartmentTable,
    constraints: CoreConstraints | None = None,
) -> CompartmentTable:
    """Pair every soft-reset neuron with a reset compartment.

    The reset compartment fires with its soma and inhibits it through a
    recurrent synapse of weight ``-threshold``. Hard-reset tables are
    returned unchanged.
    """
    if table.reset_mode is not ResetMode.SOFT:
        return table
    constraints = constraints or CoreConstraints()
    expanded = replace(table, reset_weight=-table.threshold.value)
    if expanded.n_compartments > constraints.max_neurons_per_core:
        msg = (
            f"{table.n_neurons} soft-reset neurons need {expanded.n_compartments} compartments,"
            f" more than {constraints.max_neurons_per_core} per core."
        )
        raise MapError(msg)
    return expanded


@dataclass(frozen=True)
class CoreImage:
    """Everything one core is configured with."""

    layer: str
    core: int
    chip: int
    box: Box
    compartments: CompartmentTable
    input_axons: tuple[InputAxon, ...]
    output_axons: tuple[OutputAxon, ...]
    synapses: dict[str, EncodedGroup]

    @property
    def core_id(self) -> CoreId:
        """The core's layer and partition index."""
        return CoreId(self.layer, self.core)


@dataclass(frozen=True)
class LayerRecord:
    """A layer's place in the image."""

    id: str
    shape: tuple[int, int, int]
    grid: tuple[int, int, int]
    reset_mode: ResetMode

    @property
    def partition(self) -> Partition:
        """The layer's partition."""
        cpn = 2 if self.reset_mode is ResetMode.SOFT else 1
        return Partition(self.id, self.shape, self.grid, cpn)


@dataclass(frozen=True)
class DeploymentImage:
    """A compiled network: layers, per-core configuration and weight tables."""

    name: str
    layers: tuple[LayerRecord, ...]
    cores: tuple[CoreImage, ...]
    weights: dict[str, np.ndarray] = field(compare=False, repr=False)
    cores_per_chip: int = 128
    timesteps: int = 100

    @property
    def n_cores(self) -> int:
        """Cores in use."""
        return len(self.cores)

    @property
    def n_chips(self) -> int:
        """Chips in use."""
        return len({core.chip for core in self.cores})

    @property
    def chips(self) -> list[list[CoreImage]]:
        """Cores grouped by chip."""
        out: list[list[CoreImage]] = [[] for _ in range(max(c.chip for c in self.cores) + 1)]
        for core in self.cores:
            out[core.chip].append(core)
        return out

    def layer_cores(self, layer_id: str) -> list[int]:
        """Image indices of a layer's cores in partition order."""
        return [i for i, core in enumerate(self.cores) if core.layer == layer_id]


# --- Building -----------------------------------------------------------------------


def _representable(value: int, what: str, cfg: QuantizationConfig) -> QuantizedWeight:
    q = decompose(value, cfg)
    if q.value != value:
        msg = f"{what} {value} is not representable as mantissa and exponent; normalize first."
        raise MapError(msg)
    return q


def _integer_weights(layer: LayerSpec) -> np.ndarray:
    weights = layer.flat_weights
    if not np.array_equal(weights, np.round(weights)):
        msg = f"Layer '{layer.id}' has non-integer weights; normalize the network first."
        raise MapError(msg)
    return weights.astype(np.int64)


def _compartments(
    layer: LayerSpec,
    neurons: np.ndarray,
    constraints: CoreConstraints,
    cfg: QuantizationConfig,
) -> CompartmentTable:
    config = layer.neuron_config
    biases = layer.neuron_biases()[neurons]
    if not np.array_equal(biases, np.round(biases)):
        msg = f"Layer '{layer.id}' has non-integer biases; normalize the network first."
        raise MapError(msg)
    quantized = [_representable(int(b), f"Bias of layer '{layer.id}'", cfg) for b in biases]
    table = CompartmentTable(
        n_neurons=int(neurons.size),
        threshold=_representable(config.threshold, f"Threshold of layer '{layer.id}'", cfg),
        v_decay=config.v_decay,
        i_decay=config.i_decay,
        reset_mode=config.reset_mode,
        bias_mantissa=np.asarray([q.mantissa for q in quantized], dtype=np.int64),
        bias_exponent=np.asarray([q.exponent for q in quantized], dtype=np.int64),
    )
    return expand_soft_reset(table, constraints)


def build_image(
    network: NetworkSpec,
    plan: Plan,
    placement: Placement | None = None,
    cfg: QuantizationConfig | None = None,
) -> DeploymentImage:
    """Assemble the deployment image of a placed plan.

    Parameters
    ----------
    network
        The lowered integer network the plan was made for.
    plan
        Partitions from `optimize`.
    placement
        Chip assignment from `place`; defaults to the plan's own.
    cfg
        Mantissa and exponent ranges of thresholds and biases.

    """
    cfg = cfg or QuantizationConfig()
    if plan.sharing is Sharing.FULL:
        msg = "Full sharing is an accounting bound and cannot be mapped; use 'on' or 'off'."
        raise MapError(msg)
    chips = placement.chips if placement is not None else plan.chips
    constraints = plan.constraints
    partitions = plan.partitions
    index: dict[CoreId, int] = {}
    for partition in partitions:
        for core in partition.core_ids():
            index[core] = len(index)

    inputs: dict[int, list[InputAxon]] = {i: [] for i in index.values()}
    outputs: dict[int, list[OutputAxon]] = {i: [] for i in index.values()}
    stores: dict[int, dict[str, EncodedGroup]] = {i: {} for i in index.values()}

    first = partitions[0]
    for k, n in enumerate(first.box_neurons()):
        inputs[index[CoreId(first.layer_id, k)]].append(InputAxon(AxonKind.INJECT, n))

    for (pre, post), pre_part, post_part in zip(network.pairs(), partitions[:-1], partitions[1:]):
        groups, axons = build_groups(unroll(pre, post), pre_part, post_part, plan.sharing)
        _wire(groups, axons, pre_part, post_part, index, inputs, outputs, stores, plan.cost_model)

    last = partitions[-1]
    for k, n in enumerate(last.box_neurons()):
        outputs[index[CoreId(last.layer_id, k)]].append(OutputAxon(AxonKind.READOUT, 0, n))

    cores = []
    for layer, partition, layer_chips in zip(network.layers, partitions, chips):
        for k, neurons in enumerate(partition.global_of):
            i = index[CoreId(layer.id, k)]
            table = _compartments(layer, neurons, constraints, cfg)
            if table.reset_weight is not None:
                inputs[i].append(InputAxon(AxonKind.RESET, table.n_neurons))
            cores.append(
                CoreImage(
                    layer=layer.id,
                    core=k,
                    chip=layer_chips[k],
                    box=partition.boxes[k],
                    compartments=table,
                    input_axons=tuple(inputs[i]),
                    output_axons=tuple(outputs[i]),
                    synapses=dict(sorted(stores[i].items())),
                ),
            )
    image = DeploymentImage(
        name=network.name,
        layers=tuple(
            LayerRecord(p.layer_id, p.shape, p.grid, layer.neuron_config.reset_mode)
            for layer, p in zip(network.layers, partitions)
        ),
        cores=tuple(cores),
        weights={layer.id: _integer_weights(layer) for layer in network.layers[1:]},
        cores_per_chip=constraints.cores_per_chip,
        timesteps=network.timesteps,
    )
    check_integrity(image)
    logger.info(
        "Built image '%s': %d cores on %d chip(s)", image.name, image.n_cores, image.n_chips
    )
    return image


def _wire(  # noqa: PLR0913
    groups: dict[str, SynapseGroup],
    axons: list[PopulationAxon],
    pre: Partition,
    post: Partition,
    index: dict[CoreId, int],
    inputs: dict[int, list[InputAxon]],
    outputs: dict[int, list[OutputAxon]],
    stores: dict[int, dict[str, EncodedGroup]],
    cost_model: SynapseCostModel,
) -> None:
    for axon in axons:
        src = index[CoreId(pre.layer_id, axon.src_core)]
        dst = index[CoreId(post.layer_id, axon.dst_core)]
        target = (dst, len(inputs[dst]))
        inputs[dst].append(InputAxon(AxonKind.GROUP, axon.count, axon.group, axon.base))
        outputs[src].append(OutputAxon(AxonKind.ROUTE, axon.start, axon.count, target))
        if axon.group not in stores[dst]:
            stores[dst][axon.group] = encode_group(
                groups[axon.group],
                cost_model.scheme,
                cost_model,
            )


def check_integrity(image: DeploymentImage) -> None:
    """Raise `IntegrityError` unless every cross-reference of the image resolves."""
    per_chip: dict[int, int] = {}
    for core in image.cores:
        per_chip[core.chip] = per_chip.get(core.chip, 0) + 1
        for axon in core.input_axons:
            if axon.kind is AxonKind.GROUP and axon.group not in core.synapses:
                msg = f"Core {core.core_id} references missing synapse group '{axon.group}'."
                raise IntegrityError(msg)
        for axon in core.output_axons:
            if axon.kind is not AxonKind.ROUTE:
                continue
            assert axon.target is not None
            dst, slot = axon.target
            if not (0 <= dst < len(image.cores)) or not (
                0 <= slot < len(image.cores[dst].input_axons)
            ):
                msg = f"Core {core.core_id} routes to missing axon {axon.target}."
                raise IntegrityError(msg)
            if image.cores[dst].input_axons[slot].kind is not AxonKind.GROUP:
                msg = f"Core {core.core_id} routes to a non-synaptic axon {axon.target}."
                raise IntegrityError(msg)
    full = [chip for chip, n in per_chip.items() if n > image.cores_per_chip]
    if full:
        msg = f"Chip {full[0]} holds more than {image.cores_per_chip} cores."
        raise IntegrityError(msg)


def image_tally(image: DeploymentImage) -> ResourceTally:
    """Per-core resources recomputed from the image alone."""
    items = []
    for core in image.cores:
        inputs = sum(1 if a.kind is AxonKind.GROUP else a.count for a in core.input_axons)
        units = sum(g.cost_units for g in core.synapses.values())
        units += sum(a.count for a in core.input_axons if a.kind is AxonKind.RESET)
        out = offchip = 0
        for axon in core.output_axons:
            if axon.kind is AxonKind.READOUT:
                out += axon.count
                continue
            assert axon.target is not None
            crosses = image.cores[axon.target[0]].chip != core.chip
            out += 2 if crosses else 1
            offchip += int(crosses)
        usage = CoreUsage(
            compartments=core.compartments.n_compartments,
            input_axons=inputs,
            output_axons=out,
            synapse_units=units,
            offchip_axons=offchip,
        )
        items.append((core.core_id, usage))
    return ResourceTally.from_items(items)


def expand_image(image: DeploymentImage) -> list[tuple[str, int, int, int]]:
    """Sorted ``(post_layer, pre, post, weight)`` synapses reached through the image's axons."""
    partitions = {layer.id: layer.partition for layer in image.layers}
    out = []
    for core in image.cores:
        src = partitions[core.layer].global_of[core.core]
        for axon in core.output_axons:
            if axon.kind is not AxonKind.ROUTE:
                continue
            assert axon.target is not None
            dst_core = image.cores[axon.target[0]]
            entry = dst_core.input_axons[axon.target[1]]
            assert entry.group is not None
            group = decode_group(dst_core.synapses[entry.group])
            dst = partitions[dst_core.layer].global_of[dst_core.core]
            weights = image.weights[dst_core.layer]
            for slot, member in enumerate(range(axon.start, axon.start + axon.count)):
                out.extend(
                    (
                        dst_core.layer,
                        int(src[member]),
                        int(dst[entry.base + offset]),
                        int(weights[wid]),
                    )
                    for offset, wid in group.template[slot]
                )
    return sorted(out)


# --- Serialization ------------------------------------------------------------------


def _b64(values: np.ndarray | list[int] | tuple[int, ...]) -> str:
    return base64.b64encode(np.asarray(values, dtype="<i4").tobytes()).decode("ascii")


def _unb64(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<i4").astype(np.int64)


def _group_to_dict(group: EncodedGroup) -> dict[str, Any]:
    return {
        "scheme": group.scheme.value,
        "cost_units": group.cost_units,
        "slots": [len(p) for p in group.payload],
        "data": _b64([v for p in group.payload for v in p]),
    }


def _group_from_dict(data: dict[str, Any]) -> EncodedGroup:
    flat = _unb64(data["data"]).tolist()
    payload = []
    k = 0
    for n in data["slots"]:
        payload.append(tuple(flat[k : k + n]))
        k += n
    return EncodedGroup(Compression(data["scheme"]), tuple(payload), int(data["cost_units"]))


def _core_to_dict(core: CoreImage) -> dict[str, Any]:
    table = core.compartments
    return {
        "layer": core.layer,
        "core": core.core,
        "chip": core.chip,
        "box": list(core.box),
        "compartments": {
            "n_neurons": table.n_neurons,
            "threshold": list(table.threshold),
            "v_decay": table.v_decay,
            "i_decay": table.i_decay,
            "reset": table.reset_mode.value,
            "reset_weight": table.reset_weight,
            "bias_mantissa": _b64(table.bias_mantissa),
            "bias_exponent": _b64(table.bias_exponent),
        },
        "input_axons": [
            {"kind": a.kind.value, "count": a.count, "group": a.group, "base": a.base}
            for a in core.input_axons
        ],
        "output_axons": [
            {
                "kind": a.kind.value,
                "start": a.start,
                "count": a.count,
                "target": list(a.target) if a.target is not None else None,
            }
            for a in core.output_axons
        ],
        "synapses": {key: _group_to_dict(g) for key, g in core.synapses.items()},
    }


def _core_from_dict(data: dict[str, Any]) -> CoreImage:
    table = data["compartments"]
    return CoreImage(
        layer=data["layer"],
        core=int(data["core"]),
        chip=int(data["chip"]),
        box=Box(*data["box"]),
        compartments=CompartmentTable(
            n_neurons=int(table["n_neurons"]),
            threshold=QuantizedWeight(*table["threshold"]),
            v_decay=int(table["v_decay"]),
            i_decay=int(table["i_decay"]),
            reset_mode=ResetMode(table["reset"]),
            bias_mantissa=_unb64(table["bias_mantissa"]),
            bias_exponent=_unb64(table["bias_exponent"]),
            reset_weight=table["reset_weight"],
        ),
        input_axons=tuple(
            InputAxon(AxonKind(a["kind"]), int(a["count"]), a["group"], int(a["base"]))
            for a in data["input_axons"]
        ),
        output_axons=tuple(
            OutputAxon(
                AxonKind(a["kind"]),
                int(a["start"]),
                int(a["count"]),
                tuple(a["target"]) if a["target"] is not None else None,
            )
            for a in data["output_axons"]
        ),
        synapses={key: _group_from_dict(g) for key, g in data["synapses"].items()},
    )


def image_to_dict(image: DeploymentImage) -> dict[str, Any]:
    """The JSON document of an image."""
    return {
        "format": IMAGE_FORMAT,
        "name": image.name,
        "timesteps": image.timesteps,
        "cores_per_chip": image.cores_per_chip,
        "layers": [
            {
                "id": layer.id,
                "shape": list(layer.shape),
                "grid": list(layer.grid),
                "reset": layer.reset_mode.value,
            }
            for layer in image.layers
        ],
        "weights": {key: _b64(w) for key, w in image.weights.items()},
        "cores": [_core_to_dict(core) for core in image.cores],
    }


def image_from_dict(data: Any) -> DeploymentImage:
    """Rebuild an image from its JSON document."""
    if not isinstance(data, dict) or data.get("format") != IMAGE_FORMAT:
        found = data.get("format") if isinstance(data, dict) else None
        msg = f"Unsupported image format {found!r}; expected '{IMAGE_FORMAT}'."
        raise VersionError(msg)
    try:
        image = DeploymentImage(
            name=data["name"],
            layers=tuple(
                LayerRecord(
                    layer["id"],
                    tuple(layer["shape"]),  # type: ignore[arg-type]
                    tuple(layer["grid"]),  # type: ignore[arg-type]
                    ResetMode(layer["reset"]),
                )
                for layer in data["layers"]
            ),
            cores=tuple(_core_from_dict(core) for core in data["cores"]),
            weights={key: _unb64(w) for key, w in data["weights"].items()},
            cores_per_chip=int(data["cores_per_chip"]),
            timesteps=int(data["timesteps"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        msg = f"Malformed deployment image: {e}"
        raise IntegrityError(msg) from e
    check_integrity(image)
    return image


def emit(image: DeploymentImage) -> str:
    """Canonical text of an image: sorted keys, two-space indent, trailing newline."""
    check_integrity(image)
    return json.dumps(image_to_dict(image), indent=2, sort_keys=True) + "\n"


def write_image(image: DeploymentImage, path: str | Path) -> Path:
    """Write an image to ``path``."""
    path = Path(path)
    path.write_text(emit(image), encoding="utf-8")
    return path


def loads_image(text: str) -> DeploymentImage:
    """Parse an image from its text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"Error parsing deployment image: {e}"
        raise ParseError(msg) from e
    return image_from_dict(data)


def load_image(path: str | Path) -> DeploymentImage:
    """Read an image written by `write_image`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as e:
        msg = f"Deployment image not found: {path}"
        raise ParseError(msg) from e
    return loads_image(text)
