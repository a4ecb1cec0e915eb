"""Layer partitioning under per-core hard constraints.

Layers are split by balanced rectangular grids. The search walks the network
from the output layer to the input layer, because the axons a layer needs
depend on how the *next* layer is split: a layer's tally is only final once
its successor's partition is fixed.

Chips are filled in layer order from the input layer. While searching, the
layers before a suffix are assumed to take their fewest cores; the finished
chains are re-tallied with the chips they actually land on.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .connectivity import ConnectionPair, injection_tally, pair_tally, readout_tally, unroll
from .errors import CapacityError, InfeasibleNetwork, NoFeasiblePartition, UsageError
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
    balanced_sizes,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .model_ir import LayerSpec, NetworkSpec

__all__ = [
    "Box",
    "Candidate",
    "Compression",
    "CoreConstraints",
    "CoreId",
    "CoreUsage",
    "CostWeights",
    "Partition",
    "Plan",
    "ResourceTally",
    "Sharing",
    "SynapseCostModel",
    "Violation",
    "balanced_sizes",
    "chain_cost",
    "check_hard",
    "evaluate_cost",
    "exhaustive_optimum",
    "first_fit",
    "free_after",
    "optimize",
    "place_chain",
    "propose_candidates",
    "tally_chain",
    "violations",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostWeights:
    """Weights of the four terms of the partition cost function."""

    cores: float = 1.0
    synapses: float = 1.0
    axons: float = 1.0
    offchip: float = 1.0

    def __post_init__(self) -> None:
        values = (self.cores, self.synapses, self.axons, self.offchip)
        if any(v < 0 for v in values) or not any(v > 0 for v in values):
            msg = f"Cost weights must be non-negative with at least one positive, got {values}."
            raise UsageError(msg)

    @classmethod
    def parse(cls, text: str) -> CostWeights:
        """Parse ``"a0,a1,a2,a3"``."""
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as e:
            msg = f"Invalid cost weights '{text}': expected four comma-separated numbers."
            raise UsageError(msg) from e
        if len(values) != 4:  # noqa: PLR2004
            msg = f"Invalid cost weights '{text}': expected four comma-separated numbers."
            raise UsageError(msg)
        return cls(*values)


def evaluate_cost(
    tally: ResourceTally,
    w: CostWeights | None = None,
    constraints: CoreConstraints | None = None,
) -> float:
    """Weighted cost of a tally.

    Synapse and axon usage are normalized by the per-core budgets so that all
    terms are comparable to the core count.
    """
    w = w or CostWeights()
    constraints = constraints or CoreConstraints()
    return (
        w.cores * tally.n_cores
        + w.synapses * tally.n_syn / constraints.synapse_budget_units
        + w.axons * tally.n_axons / constraints.max_axons
        + w.offchip * tally.n_offchip
    )


class Violation(NamedTuple):
    """A per-core hard limit that is exceeded."""

    core: CoreId
    resource: str
    value: int
    limit: int

    @property
    def ratio(self) -> float:
        """How far the usage exceeds the limit."""
        return self.value / self.limit

    def __str__(self) -> str:
        return (
            f"core {self.core.core} of layer '{self.core.layer}' uses {self.value}"
            f" {self.resource} (limit {self.limit})"
        )


def _limits(constraints: CoreConstraints) -> dict[str, int]:
    return {
        "compartments": constraints.max_neurons_per_core,
        "input_axons": constraints.max_input_axons,
        "output_axons": constraints.max_output_axons,
        "synapse_units": constraints.synapse_budget_units,
    }


def violations(tally: ResourceTally, constraints: CoreConstraints) -> list[Violation]:
    """All exceeded per-core limits, in core order."""
    limits = _limits(constraints)
    return [
        Violation(core, resource, getattr(usage, resource), limit)
        for core, usage in tally.cores.items()
        for resource, limit in limits.items()
        if getattr(usage, resource) > limit
    ]


def check_hard(
    tally: ResourceTally,
    constraints: CoreConstraints | None = None,
) -> tuple[bool, Violation | None]:
    """Whether every core respects all limits (inclusive), and the first violation."""
    found = violations(tally, constraints or CoreConstraints())
    return not found, found[0] if found else None


# --- Candidate generation -----------------------------------------------------------


def _grid_table(shape: tuple[int, int, int]) -> dict[str, np.ndarray]:
    """Box statistics of every grid that fits the shape."""
    axes = [np.arange(1, n + 1) for n in shape]
    gy, gx, gz = (a.reshape(-1) for a in np.meshgrid(*axes, indexing="ij"))
    hi = [-(-n // g) for n, g in zip(shape, (gy, gx, gz))]
    lo = [n // g for n, g in zip(shape, (gy, gx, gz))]
    return {
        "gy": gy,
        "gx": gx,
        "gz": gz,
        "cores": gy * gx * gz,
        "max_box": hi[0] * hi[1] * hi[2],
        "imbalance": hi[0] * hi[1] * hi[2] - lo[0] * lo[1] * lo[2],
        "perimeter": hi[0] + hi[1] + hi[2],
    }


def propose_candidates(
    layer: LayerSpec,
    m: int,
    constraints: CoreConstraints | None = None,
    max_compartments: int | None = None,
) -> list[Partition]:
    """The ``m`` best-ranked grid splits of a layer that respect the compartment bound.

    Splits are ranked by fewest cores, then most balanced boxes, then fewest
    channel splits (which duplicate axons), then smallest box perimeter, and
    finally by the grid tuple.

    Parameters
    ----------
    layer
        The layer to split.
    m
        Number of candidates to return.
    constraints
        Per-core limits.
    max_compartments
        A tighter per-core compartment cap than the constraint's.

    """
    if m < 1:
        msg = f"The number of candidates must be at least 1, got {m}."
        raise UsageError(msg)
    constraints = constraints or CoreConstraints()
    cap = constraints.max_neurons_per_core
    if max_compartments is not None:
        cap = min(cap, max_compartments)
    cpn = layer.neuron_config.compartments_per_neuron
    table = _grid_table(layer.shape)
    feasible = table["max_box"] * cpn <= cap
    if not feasible.any():
        msg = (
            f"Layer '{layer.id}' cannot be split into cores of at most {cap} compartments"
            f" ({cpn} per neuron)."
        )
        raise NoFeasiblePartition(msg)
    keys = [table[k][feasible] for k in ("gz", "gx", "gy", "perimeter", "gz", "imbalance", "cores")]
    order = np.lexsort(keys)[:m]
    gy, gx, gz = (table[k][feasible][order] for k in ("gy", "gx", "gz"))
    return [
        Partition(layer.id, layer.shape, (int(a), int(b), int(c)), cpn)
        for a, b, c in zip(gy, gx, gz)
    ]


# --- Chip accounting ----------------------------------------------------------------


def first_fit(
    n_cores: int,
    free: Sequence[int],
    cores_per_chip: int,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Place a layer's cores on the first free cores, in chip order.

    A new chip opens only when every open chip is full, so a layer that does
    not fit the room left is split across chips.

    Returns
    -------
    tuple
        The chip of each core, and the free core count of every chip afterwards.

    """
    slots = list(free)
    chips: list[int] = []
    chip = 0
    while len(chips) < n_cores:
        if chip == len(slots):
            slots.append(cores_per_chip)
        take = min(slots[chip], n_cores - len(chips))
        chips.extend([chip] * take)
        slots[chip] -= take
        chip += 1
    return tuple(chips), tuple(slots)


def free_after(n_placed: int, cores_per_chip: int) -> tuple[int, ...]:
    """Free cores per chip once ``n_placed`` cores fill the chips in order."""
    full, used = divmod(n_placed, cores_per_chip)
    return (0,) * full + ((cores_per_chip - used,) if used else ())


def place_chain(
    partitions: Sequence[Partition],
    cores_per_chip: int,
) -> tuple[tuple[int, ...], ...]:
    """Chip of every core of every layer, filling chips in layer order from the input layer."""
    free: tuple[int, ...] = ()
    chips = []
    for partition in partitions:
        assigned, free = first_fit(partition.n_cores, free, cores_per_chip)
        chips.append(assigned)
    return tuple(chips)


def _chip_lookup(
    partitions: Sequence[Partition],
    chips: Sequence[tuple[int, ...]],
) -> Callable[[CoreId], int]:
    table = {p.layer_id: c for p, c in zip(partitions, chips)}
    return lambda core: table[core.layer][core.core]


# --- Tallies of a full chain ----------------------------------------------------------


@dataclass
class _TallyCache:
    """Pair tallies memoized by the grids and chips involved.

    A pair that sits on a single chip shares its entry with the chip-agnostic tally.
    """

    network: NetworkSpec
    sharing: Sharing
    cost_model: SynapseCostModel
    pairs: list[ConnectionPair] = field(default_factory=list)
    cache: dict[tuple, ResourceTally] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.pairs = [unroll(pre, post) for pre, post in self.network.pairs()]

    def pair(
        self,
        index: int,
        pre: Partition,
        post: Partition,
        pre_chips: tuple[int, ...] | None,
        post_chips: tuple[int, ...] | None,
    ) -> ResourceTally:
        if pre_chips is None or post_chips is None or len({*pre_chips, *post_chips}) == 1:
            pre_chips = post_chips = None
        key = (index, pre.grid, post.grid, pre_chips, post_chips)
        if key not in self.cache:
            chip_of = None
            if pre_chips is not None and post_chips is not None:
                chip_of = _chip_lookup((pre, post), (pre_chips, post_chips))
            self.cache[key] = pair_tally(
                self.pairs[index],
                pre,
                post,
                self.sharing,
                self.cost_model,
                chip_of=chip_of,
            )
        return self.cache[key]


def tally_chain(
    network: NetworkSpec,
    partitions: Sequence[Partition],
    sharing: Sharing = Sharing.ON,
    cost_model: SynapseCostModel | None = None,
    chips: Sequence[tuple[int, ...]] | None = None,
) -> list[ResourceTally]:
    """Complete per-layer tallies of a partition chain, computed from scratch.

    A layer's tally combines the destination side of its incoming connection
    (or the injection of input spikes) with the source side of its outgoing
    connection (or the readout of output spikes).
    """
    cache = _TallyCache(network, sharing, cost_model or SynapseCostModel())
    return _chain_tallies(cache, partitions, chips)


def _chain_tallies(
    cache: _TallyCache,
    partitions: Sequence[Partition],
    chips: Sequence[tuple[int, ...]] | None,
) -> list[ResourceTally]:
    n = len(partitions)

    def chips_of(i: int) -> tuple[int, ...] | None:
        return chips[i] if chips is not None else None

    tallies = []
    for i, partition in enumerate(partitions):
        if i == 0:
            incoming = injection_tally(partition)
        else:
            incoming = cache.pair(i - 1, partitions[i - 1], partition, chips_of(i - 1), chips_of(i))
        if i + 1 < n:
            outgoing = cache.pair(i, partition, partitions[i + 1], chips_of(i), chips_of(i + 1))
        else:
            outgoing = readout_tally(partition)
        tallies.append(incoming.merge(outgoing).restrict(partition.layer_id))
    return tallies


def chain_cost(
    tallies: Sequence[ResourceTally],
    w: CostWeights | None = None,
    constraints: CoreConstraints | None = None,
) -> float:
    """Total cost of a chain, accumulated from the output layer to the input layer."""
    total = 0.0
    for tally in reversed(tallies):
        total += evaluate_cost(tally, w, constraints)
    return total


# --- Search -------------------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    """A partition chain for a suffix of the network, output layer last.

    ``cost`` covers the layers whose tallies are final, which are all
    layers of the suffix except its first; ``pending`` is the part of the
    first layer's tally that is already known. ``chips`` is provisional: it
    assumes the layers before the suffix take their fewest cores.
    """

    partitions: tuple[Partition, ...]
    chips: tuple[tuple[int, ...], ...]
    cost: float
    tallies: tuple[ResourceTally, ...]
    pending: ResourceTally

    @property
    def n_cores(self) -> int:
        """Cores used by the suffix."""
        return sum(p.n_cores for p in self.partitions)

    def sort_key(self) -> tuple:
        """Tie-break order: cost, then cores, then grids."""
        return (self.cost, self.n_cores, tuple(p.grid for p in self.partitions))


@dataclass(frozen=True)
class Plan:
    """The chosen partition of every layer, with its tallies and chip assignment."""

    network: NetworkSpec
    partitions: tuple[Partition, ...]
    tallies: tuple[ResourceTally, ...]
    chips: tuple[tuple[int, ...], ...]
    cost: float
    weights: CostWeights = field(default_factory=CostWeights)
    constraints: CoreConstraints = field(default_factory=CoreConstraints)
    sharing: Sharing = Sharing.ON
    cost_model: SynapseCostModel = field(default_factory=SynapseCostModel)

    @property
    def n_cores(self) -> int:
        """Cores used by the whole network."""
        return sum(p.n_cores for p in self.partitions)

    @property
    def n_chips(self) -> int:
        """Chips touched by the plan."""
        return len({chip for layer in self.chips for chip in layer})

    @property
    def total(self) -> ResourceTally:
        """The merged tally of all layers."""
        first, *rest = self.tallies
        return first.merge(*rest)

    def layer_costs(self) -> list[float]:
        """Cost of each layer's tally."""
        return [evaluate_cost(t, self.weights, self.constraints) for t in self.tallies]


def _plan_key(plan: Plan) -> tuple:
    return (plan.cost, plan.n_cores, tuple(p.grid for p in plan.partitions))


def _placed_plan(
    cache: _TallyCache,
    partitions: Sequence[Partition],
    w: CostWeights,
    constraints: CoreConstraints,
) -> Plan | Violation:
    """Place a complete chain, re-tally it with its chips and cost it, or the first violation."""
    chips = place_chain(partitions, constraints.cores_per_chip)
    tallies = _chain_tallies(cache, partitions, chips)
    for t in tallies:
        valid, violation = check_hard(t, constraints)
        if not valid:
            assert violation is not None
            return violation
    return Plan(
        network=cache.network,
        partitions=tuple(partitions),
        tallies=tuple(tallies),
        chips=chips,
        cost=chain_cost(tallies, w, constraints),
        weights=w,
        constraints=constraints,
        sharing=cache.sharing,
        cost_model=cache.cost_model,
    )


@dataclass
class _Search:
    network: NetworkSpec
    m: int
    w: CostWeights
    constraints: CoreConstraints
    cache: _TallyCache
    max_chips: int | None = None
    offsets: list[int] = field(init=False)
    _proposed: dict[tuple[int, int, int], list[Partition]] = field(init=False)

    def __post_init__(self) -> None:
        self._proposed = {}
        cap = self.constraints.max_neurons_per_core
        fewest = [self.propose(i, cap, 1)[0].n_cores for i in range(len(self.network.layers))]
        self.offsets = [0, *itertools.accumulate(fewest)]

    def propose(self, i: int, cap: int, m: int | None = None) -> list[Partition]:
        """Memoized `propose_candidates` of layer ``i`` under a compartment cap."""
        m = m or self.m
        key = (i, cap, m)
        if key not in self._proposed:
            layer = self.network.layers[i]
            self._proposed[key] = propose_candidates(layer, m, self.constraints, cap)
        return self._proposed[key]

    def _trial_violations(self, i: int, candidate: Partition) -> list[Violation]:
        """Destination-side load of ``candidate`` against the best split of the layer before it."""
        if i == 0:
            tally = injection_tally(candidate)
        else:
            pre = self.propose(i - 1, self.constraints.max_neurons_per_core, 1)[0]
            tally = self.cache.pair(i - 1, pre, candidate, None, None).restrict(candidate.layer_id)
        return violations(tally, self.constraints)

    def candidates(self, i: int, cap: int) -> tuple[list[Partition], int]:
        """Candidates of layer ``i`` that pass a trial tally, tightening the cap until some do."""
        layer = self.network.layers[i]
        while True:
            proposed = self.propose(i, cap)
            trials = [(p, self._trial_violations(i, p)) for p in proposed]
            passing = [p for p, found in trials if not found]
            if passing:
                return passing, cap
            worst = max((v for _, found in trials for v in found), key=lambda v: v.ratio)
            cap = self._tighten(layer, cap, worst)

    def _tighten(self, layer: LayerSpec, cap: int, worst: Violation) -> int:
        new_cap = min(math.floor(cap / worst.ratio), cap - 1)
        logger.debug("Tightening the cap of layer '%s' to %d (%s)", layer.id, new_cap, worst)
        if new_cap < layer.neuron_config.compartments_per_neuron:
            msg = f"No partition of layer '{layer.id}' satisfies the hard limits: {worst}."
            raise InfeasibleNetwork(msg)
        return new_cap

    def _fit(self, i: int, partition: Partition) -> tuple[int, ...]:
        """Chips of layer ``i``'s cores, assuming the layers before it take their fewest cores."""
        per_chip = self.constraints.cores_per_chip
        free = free_after(self.offsets[i], per_chip)
        return first_fit(partition.n_cores, free, per_chip)[0]

    def start(self, partition: Partition) -> Candidate:
        return Candidate(
            partitions=(partition,),
            chips=(self._fit(len(self.network.layers) - 1, partition),),
            cost=0.0,
            tallies=(),
            pending=readout_tally(partition),
        )

    def extend(self, parent: Candidate, i: int, partition: Partition) -> Candidate | Violation:
        """Prepend layer ``i`` to a suffix starting at ``i + 1``, finalizing layer ``i + 1``."""
        chips = self._fit(i, partition)
        post = parent.partitions[0]
        tally = self.cache.pair(i, partition, post, chips, parent.chips[0])
        final = parent.pending.merge(tally.restrict(post.layer_id))
        valid, violation = check_hard(final, self.constraints)
        if not valid:
            assert violation is not None
            return violation
        pending = tally.restrict(partition.layer_id)
        if i == 0:
            pending = pending.merge(injection_tally(partition))
        valid, violation = check_hard(pending, self.constraints)
        if not valid:
            assert violation is not None
            return violation
        return Candidate(
            partitions=(partition, *parent.partitions),
            chips=(chips, *parent.chips),
            cost=parent.cost + evaluate_cost(final, self.w, self.constraints),
            tallies=(final, *parent.tallies),
            pending=pending,
        )

    def _select(self, children: list[Candidate | Violation], layer: LayerSpec) -> list[Candidate]:
        valid = [c for c in children if isinstance(c, Candidate)]
        if valid:
            return sorted(valid, key=Candidate.sort_key)[: self.m]
        found = [c for c in children if isinstance(c, Violation)]
        own = [v for v in found if v.core.layer == layer.id]
        if not own:
            msg = f"Every candidate of layer '{layer.id}' violates a hard limit: {found[0]}."
            raise InfeasibleNetwork(msg)
        return []

    def run(self) -> Plan:
        n = len(self.network.layers)
        default_cap = self.constraints.max_neurons_per_core
        cands, _ = self.candidates(n - 1, default_cap)
        beam = [self.start(p) for p in cands]
        beam = self._finish_output(beam)
        for i in range(n - 2, -1, -1):
            layer = self.network.layers[i]
            cap = default_cap
            while True:
                cands, cap = self.candidates(i, cap)
                children = [self.extend(parent, i, p) for parent in beam for p in cands]
                selected = self._select(children, layer)
                if selected:
                    break
                worst = max(
                    (c for c in children if isinstance(c, Violation) and c.core.layer == layer.id),
                    key=lambda v: v.ratio,
                )
                cap = self._tighten(layer, cap, worst)
            logger.debug("Layer %d: %d children, kept %d", i, len(children), len(selected))
            beam = selected
        return self._place([self._close(c) for c in beam])

    def _finish_output(self, beam: list[Candidate]) -> list[Candidate]:
        """For a single-layer network the output layer is also the input layer."""
        if len(self.network.layers) > 1:
            return beam
        return [
            replace(c, pending=c.pending.merge(injection_tally(c.partitions[0]))) for c in beam
        ]

    def _close(self, candidate: Candidate) -> Candidate:
        """Finalize the input layer, whose pending tally is complete."""
        return replace(
            candidate,
            cost=candidate.cost + evaluate_cost(candidate.pending, self.w, self.constraints),
            tallies=(candidate.pending, *candidate.tallies),
            pending=ResourceTally(),
        )

    def _place(self, closed: list[Candidate]) -> Plan:
        """Re-tally the surviving chains on their actual chips and keep the cheapest one."""
        per_chip = self.constraints.cores_per_chip
        fitting = closed
        if self.max_chips is not None:
            fitting = [c for c in closed if c.n_cores <= self.max_chips * per_chip]
            if not fitting:
                fewest = min(c.n_cores for c in closed)
                msg = (
                    f"Network '{self.network.name}' needs {fewest} cores but {self.max_chips}"
                    f" chip(s) hold only {self.max_chips * per_chip}."
                )
                raise CapacityError(msg)
        placed = [
            _placed_plan(self.cache, c.partitions, self.w, self.constraints) for c in fitting
        ]
        plans = [p for p in placed if isinstance(p, Plan)]
        if not plans:
            msg = (
                f"Placing network '{self.network.name}' on chips breaks a hard limit:"
                f" {placed[0]}."
            )
            raise InfeasibleNetwork(msg)
        return min(plans, key=_plan_key)


def _width_ladder(m: int) -> list[int]:
    widths = []
    while m >= 1:
        widths.append(m)
        m //= 2
    return widths


def optimize(
    network: NetworkSpec,
    m: int = 4,
    w: CostWeights | None = None,
    constraints: CoreConstraints | None = None,
    sharing: Sharing = Sharing.ON,
    cost_model: SynapseCostModel | None = None,
    chips: int | None = None,
) -> Plan:
    """Search a low-cost partition of every layer.

    The search keeps the ``m`` cheapest suffix chains while stepping from the
    output layer to the input layer, combining each with up to ``m``
    candidates of the next layer. The surviving chains are then placed on
    chips in layer order and re-tallied, so off-chip axons are charged where
    the chips actually split. The best plan over the beam widths
    ``m, m/2, ..., 1`` is returned, so widening the beam never makes the
    result worse.

    Parameters
    ----------
    network
        A validated, lowered network.
    m
        Beam width and number of candidates proposed per layer.
    w
        Weights of the cost terms.
    constraints
        Per-core hard limits.
    sharing
        Axon and synapse sharing mode.
    cost_model
        Synapse encoding costs.
    chips
        Number of chips available; chains needing more cores are dropped.
        Unbounded when omitted.

    Returns
    -------
    Plan
        The best partition chain; every layer passes `check_hard`.

    Raises
    ------
    CapacityError
        If no chain found fits on ``chips`` chips.

    """
    if m < 1:
        msg = f"The beam width must be at least 1, got {m}."
        raise UsageError(msg)
    w = w or CostWeights()
    constraints = constraints or CoreConstraints()
    cost_model = cost_model or SynapseCostModel()
    cache = _TallyCache(network, sharing, cost_model)
    plans: list[Plan] = []
    refused: CapacityError | None = None
    for width in _width_ladder(m):
        search = _Search(network, width, w, constraints, cache, chips)
        try:
            plans.append(search.run())
        except CapacityError as e:
            refused = e
    if not plans:
        assert refused is not None
        raise refused
    best = min(plans, key=_plan_key)
    for partition, tally, cost in zip(best.partitions, best.tallies, best.layer_costs()):
        logger.info(
            "Layer '%s': grid %s, %d cores, cost %.4f",
            partition.layer_id,
            partition.grid,
            tally.n_cores,
            cost,
        )
    return best


def exhaustive_optimum(
    network: NetworkSpec,
    constraints: CoreConstraints | None = None,
    w: CostWeights | None = None,
    sharing: Sharing = Sharing.ON,
    cost_model: SynapseCostModel | None = None,
    chips: int | None = None,
    max_combinations: int = 20_000,
) -> Plan:
    """The cheapest feasible partition chain over every grid combination.

    Only practical for small networks; raises `UsageError` when the search
    space exceeds ``max_combinations``.
    """
    w = w or CostWeights()
    constraints = constraints or CoreConstraints()
    cost_model = cost_model or SynapseCostModel()
    options = [
        propose_candidates(layer, math.prod(layer.shape), constraints) for layer in network.layers
    ]
    total = math.prod(len(o) for o in options)
    if total > max_combinations:
        msg = f"Exhaustive search over {total} combinations exceeds the limit {max_combinations}."
        raise UsageError(msg)
    cache = _TallyCache(network, sharing, cost_model)
    capacity = None if chips is None else chips * constraints.cores_per_chip
    best: Plan | None = None
    for combination in itertools.product(*options):
        if capacity is not None and sum(p.n_cores for p in combination) > capacity:
            continue
        plan = _placed_plan(cache, combination, w, constraints)
        if isinstance(plan, Plan) and (best is None or _plan_key(plan) < _plan_key(best)):
            best = plan
    if best is None:
        msg = f"No partition chain of network '{network.name}' satisfies the hard limits."
        raise InfeasibleNetwork(msg)
    return best
