"""Core resource model: constraints, layer partitions and per-core resource tallies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .errors import PartitionError, UsageError

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping

    from .model_ir import Shape


class Sharing(str, Enum):
    """How axons and synapse groups are shared between source neurons.

    ``full`` is an accounting-only oracle that stores every distinct
    column template once per core; it bounds ``on`` from below.
    """

    OFF = "off"
    ON = "on"
    FULL = "full"


class Compression(str, Enum):
    """Synapse list encodings; ``auto`` picks the cheapest per group."""

    AUTO = "auto"
    SPARSE = "sparse"
    DENSE = "dense"
    RUNLENGTH = "runlength"


@dataclass(frozen=True)
class CoreConstraints:
    """Per-core hard limits of the neuromorphic resource model.

    Parameters
    ----------
    max_neurons_per_core
        Compartments per core.
    max_input_axons
        Input axons per core.
    max_output_axons
        Output axon charge per core (off-chip axons count twice).
    synapse_budget_units
        Synapse memory per core in cost-model units.
    cores_per_chip
        Cores on one chip.

    """

    max_neurons_per_core: int = 1024
    max_input_axons: int = 4096
    max_output_axons: int = 4096
    synapse_budget_units: int = 131072
    cores_per_chip: int = 128

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if value <= 0:
                msg = f"Core constraint '{name}' must be positive, got {value}."
                raise UsageError(msg)

    @property
    def max_axons(self) -> int:
        """Input plus output axon budget of one core."""
        return self.max_input_axons + self.max_output_axons


@dataclass(frozen=True)
class SynapseCostModel:
    """Synapse memory cost of the three encodings, in units per entry."""

    dense_unit: int = 1
    sparse_unit: int = 2
    rle_entry: int = 1
    rle_header: int = 1
    scheme: Compression = Compression.AUTO


class CoreId(NamedTuple):
    """A core, named by its layer and its index within the layer's partition."""

    layer: str
    core: int


class Box(NamedTuple):
    """Half-open ``[y0, y1) x [x0, x1) x [z0, z1)`` range of a layer volume."""

    y0: int
    y1: int
    x0: int
    x1: int
    z0: int
    z1: int

    @property
    def shape(self) -> Shape:
        """Extent of the box along each axis."""
        return (self.y1 - self.y0, self.x1 - self.x0, self.z1 - self.z0)

    @property
    def size(self) -> int:
        """Number of neurons inside the box."""
        return math.prod(self.shape)


def balanced_sizes(n: int, parts: int) -> list[int]:
    """Split ``n`` into ``parts`` sizes that differ by at most one, larger first."""
    return [n // parts + (1 if i < n % parts else 0) for i in range(parts)]


@dataclass(frozen=True)
class Partition:
    """A layer's split across cores by a balanced rectangular grid.

    Cores are numbered row-major over the grid ``(gy, gx, gz)``; neurons
    inside a box are numbered row-major over their local ``(y, x, c)``.
    """

    layer_id: str
    shape: Shape
    grid: tuple[int, int, int]
    compartments_per_neuron: int = 1

    def __post_init__(self) -> None:
        if len(self.grid) != 3 or any(g < 1 for g in self.grid):  # noqa: PLR2004
            msg = f"Invalid grid {self.grid} for layer '{self.layer_id}'."
            raise PartitionError(msg)
        if any(g > n for g, n in zip(self.grid, self.shape)):
            msg = f"Grid {self.grid} exceeds the shape {self.shape} of layer '{self.layer_id}'."
            raise PartitionError(msg)

    @property
    def n_cores(self) -> int:
        """Number of cores the layer occupies."""
        return math.prod(self.grid)

    @cached_property
    def _axis_sizes(self) -> tuple[list[int], list[int], list[int]]:
        ys, xs, zs = (balanced_sizes(n, g) for n, g in zip(self.shape, self.grid))
        return ys, xs, zs

    @cached_property
    def boxes(self) -> tuple[Box, ...]:
        """The per-core boxes in core order."""
        starts = [np.concatenate([[0], np.cumsum(sizes)]) for sizes in self._axis_sizes]
        gy, gx, gz = self.grid
        return tuple(
            Box(
                int(starts[0][iy]),
                int(starts[0][iy + 1]),
                int(starts[1][ix]),
                int(starts[1][ix + 1]),
                int(starts[2][iz]),
                int(starts[2][iz + 1]),
            )
            for iy in range(gy)
            for ix in range(gx)
            for iz in range(gz)
        )

    @cached_property
    def _maps(self) -> tuple[np.ndarray, np.ndarray]:
        ys, xs, zs = (np.asarray(sizes) for sizes in self._axis_sizes)
        gy_of, gx_of, gz_of = (np.repeat(np.arange(s.size), s) for s in (ys, xs, zs))
        y0, x0, z0 = (np.concatenate([[0], np.cumsum(s)[:-1]]) for s in (ys, xs, zs))
        yy, xx, zz = np.meshgrid(
            np.arange(self.shape[0]),
            np.arange(self.shape[1]),
            np.arange(self.shape[2]),
            indexing="ij",
        )
        gy, gx, gz = gy_of[yy], gx_of[xx], gz_of[zz]
        core = (gy * self.grid[1] + gx) * self.grid[2] + gz
        local = ((yy - y0[gy]) * xs[gx] + (xx - x0[gx])) * zs[gz] + (zz - z0[gz])
        return core.reshape(-1).astype(np.int64), local.reshape(-1).astype(np.int64)

    @property
    def core_of(self) -> np.ndarray:
        """Core index of every neuron, indexed by the layer's flat neuron index."""
        return self._maps[0]

    @property
    def local_of(self) -> np.ndarray:
        """Index of every neuron inside its core's box."""
        return self._maps[1]

    @cached_property
    def global_of(self) -> tuple[np.ndarray, ...]:
        """For each core, the flat layer indices of its neurons in local order."""
        order = np.lexsort((self.local_of, self.core_of))
        counts = np.bincount(self.core_of, minlength=self.n_cores)
        return tuple(np.split(order, np.cumsum(counts)[:-1]))

    def box_neurons(self) -> list[int]:
        """Neuron count of each core."""
        return [box.size for box in self.boxes]

    def compartments(self) -> list[int]:
        """Compartment count of each core."""
        return [size * self.compartments_per_neuron for size in self.box_neurons()]

    @property
    def max_compartments(self) -> int:
        """Largest compartment count over the cores."""
        return math.prod(sizes[0] for sizes in self._axis_sizes) * self.compartments_per_neuron

    def core_ids(self) -> list[CoreId]:
        """Identifiers of the partition's cores."""
        return [CoreId(self.layer_id, k) for k in range(self.n_cores)]


@dataclass(frozen=True)
class CoreUsage:
    """Resources consumed on one core."""

    compartments: int = 0
    input_axons: int = 0
    output_axons: int = 0
    synapse_units: int = 0
    offchip_axons: int = 0

    def __add__(self, other: CoreUsage) -> CoreUsage:
        return CoreUsage(
            self.compartments + other.compartments,
            self.input_axons + other.input_axons,
            self.output_axons + other.output_axons,
            self.synapse_units + other.synapse_units,
            self.offchip_axons + other.offchip_axons,
        )


@dataclass(frozen=True)
class ResourceTally:
    """Per-core resource accounting and the aggregates the cost function uses."""

    cores: Mapping[CoreId, CoreUsage] = field(default_factory=dict)

    @classmethod
    def from_items(cls, items: Iterable[tuple[CoreId, CoreUsage]]) -> ResourceTally:
        """Sum usages that name the same core."""
        cores: dict[CoreId, CoreUsage] = {}
        for core, usage in items:
            cores[core] = cores.get(core, CoreUsage()) + usage
        return cls(dict(sorted(cores.items())))

    def merge(self, *others: ResourceTally) -> ResourceTally:
        """Add the usages of other tallies to this one."""
        items = list(self.cores.items())
        for other in others:
            items.extend(other.cores.items())
        return ResourceTally.from_items(items)

    def restrict(self, layer_id: str) -> ResourceTally:
        """The part of the tally that belongs to one layer's cores."""
        return ResourceTally({k: v for k, v in self.cores.items() if k.layer == layer_id})

    @property
    def n_cores(self) -> int:
        """Number of cores in the tally."""
        return len(self.cores)

    @property
    def n_syn(self) -> int:
        """Synapse memory units over all cores."""
        return sum(u.synapse_units for u in self.cores.values())

    @property
    def n_axons(self) -> int:
        """Input axons plus output axon charge over all cores."""
        return sum(u.input_axons + u.output_axons for u in self.cores.values())

    @property
    def n_offchip(self) -> int:
        """Number of axons leaving their chip."""
        return sum(u.offchip_axons for u in self.cores.values())

    @property
    def n_compartments(self) -> int:
        """Compartments over all cores."""
        return sum(u.compartments for u in self.cores.values())
