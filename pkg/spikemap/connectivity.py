"""Unrolled layer-to-layer connectivity, shared synapse groups and axon accounting.

A connection between two layers is kept in its column-major form: for every
source neuron the list of ``(destination, weight_id)`` entries it reaches,
since synapse look-up is triggered by the arrival of a spike at a source
neuron's axon. Given how both layers are split across cores, the columns are
cut per destination core and packed into axons that reference synapse groups.
"""

from __future__ import annotations

import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .errors import PartitionError, UnsupportedKind
from .model_ir import LayerKind, LayerSpec, padding_before
from .resources import (
    Compression,
    CoreId,
    CoreUsage,
    Partition,
    ResourceTally,
    Sharing,
    SynapseCostModel,
)

if TYPE_CHECKING:
    from collections.abc import Callable

logger = logging.getLogger(__name__)

Slot = tuple[tuple[int, int], ...]
Template = tuple[Slot, ...]

_SCHEME_ORDER = (Compression.SPARSE, Compression.DENSE, Compression.RUNLENGTH)


class Synapse(NamedTuple):
    """One synapse of a group, relative to the group's base destination."""

    dst_local: int
    weight_id: int
    weight: int | None = None


@dataclass(frozen=True)
class SynapseGroup:
    """A canonical block of synapses, one slot per source neuron of a population.

    Each slot lists ``(offset, weight_id)`` pairs, where ``offset`` is the
    destination relative to the group's base destination.
    """

    template: Template

    @property
    def slot_count(self) -> int:
        """Number of source-neuron slots."""
        return len(self.template)

    @property
    def n_entries(self) -> int:
        """Number of synapses over all slots."""
        return sum(len(slot) for slot in self.template)

    def slot(self, index: int) -> list[Synapse]:
        """The synapses of one slot."""
        return [Synapse(offset, wid) for offset, wid in self.template[index]]

    @cached_property
    def canonical_hash(self) -> str:
        """Digest of the template; equal digests mean equal templates."""
        return template_hash(self.template)


def template_hash(template: Template) -> str:
    """Digest of ``(slot_count, per-slot synapse lists)``."""
    words: list[int] = [len(template)]
    for slot in template:
        words.append(len(slot))
        for offset, wid in slot:
            words.extend((offset, wid))
    return hashlib.sha256(np.asarray(words, dtype="<i8").tobytes()).hexdigest()[:24]


@dataclass(frozen=True)
class PopulationAxon:
    """An axon carrying the spikes of a contiguous run of source neurons to one core.

    Parameters
    ----------
    src_core
        Core index of the source neurons in the pre layer's partition.
    dst_core
        Core index of the destination neurons in the post layer's partition.
    group
        Key of the synapse group the axon references.
    start
        Local index of the first member on the source core.
    count
        Number of members (slots).
    base
        Local index on the destination core that group offsets are added to.
    shared
        False for a discrete axon serving a single neuron.

    """

    src_core: int
    dst_core: int
    group: str
    start: int
    count: int
    base: int
    shared: bool

    @property
    def members(self) -> range:
        """Local indices of the source neurons on the source core."""
        return range(self.start, self.start + self.count)


@dataclass(frozen=True)
class ConnectionPair:
    """The unrolled connectivity between two consecutive layers.

    Synapses are stored as parallel arrays sorted by source and then
    destination neuron; ``indptr`` delimits each source neuron's column.
    """

    pre: LayerSpec
    post: LayerSpec
    pre_index: np.ndarray
    post_index: np.ndarray
    weight_id: np.ndarray
    indptr: np.ndarray

    @property
    def n_synapses(self) -> int:
        """Total number of synapses."""
        return int(self.pre_index.size)

    def column(self, pre: int) -> list[tuple[int, int]]:
        """The ``(post_global_index, weight_id)`` entries of one source neuron."""
        lo, hi = self.indptr[pre], self.indptr[pre + 1]
        return list(zip(self.post_index[lo:hi].tolist(), self.weight_id[lo:hi].tolist()))

    @property
    def column_index(self) -> list[list[tuple[int, int]]]:
        """Columns of every source neuron."""
        return [self.column(i) for i in range(self.pre.n_neurons)]

    def fan_out(self) -> np.ndarray:
        """Number of synapses leaving each source neuron."""
        return np.diff(self.indptr)

    def propagate(self, activity: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Weighted input arriving at every destination neuron.

        ``activity`` holds one value per source neuron, optionally with a
        leading batch axis; ``weights`` is indexed by weight id.
        """
        activity = np.asarray(activity, dtype=np.float64)
        rows = np.atleast_2d(activity)
        w = np.asarray(weights, dtype=np.float64).reshape(-1)[self.weight_id]
        out = np.stack(
            [
                np.bincount(
                    self.post_index,
                    weights=row[self.pre_index] * w,
                    minlength=self.post.n_neurons,
                )
                for row in rows
            ],
        )
        return out if activity.ndim > 1 else out[0]


def _conv_positions(
    pre: LayerSpec,
    post: LayerSpec,
) -> list[tuple[int, int, np.ndarray, np.ndarray]]:
    """For every kernel offset, the flat spatial indices of matched (pre, post) positions."""
    assert post.kernel is not None
    assert post.strides is not None
    h, w, _ = pre.shape
    ho, wo, _ = post.shape
    kh, kw = post.kernel
    sy, sx = post.strides
    top, left = padding_before(post, pre.shape)
    out = []
    for dy in range(kh):
        oy = np.arange(ho)
        iy = oy * sy - top + dy
        ok_y = (iy >= 0) & (iy < h)
        for dx in range(kw):
            ox = np.arange(wo)
            ix = ox * sx - left + dx
            ok_x = (ix >= 0) & (ix < w)
            pre_pos = (iy[ok_y][:, None] * w + ix[ok_x][None, :]).reshape(-1)
            post_pos = (oy[ok_y][:, None] * wo + ox[ok_x][None, :]).reshape(-1)
            out.append((dy, dx, pre_pos, post_pos))
    return out


def _unroll_conv(pre: LayerSpec, post: LayerSpec) -> tuple[np.ndarray, ...]:
    assert post.kernel is not None
    c_in = pre.shape[2]
    c_out = post.shape[2]
    kw = post.kernel[1]
    pres, posts, wids = [], [], []
    for dy, dx, pre_pos, post_pos in _conv_positions(pre, post):
        ci = np.arange(c_in)
        if post.kind is LayerKind.CONV2D:
            co = np.arange(c_out)
            shape = (pre_pos.size, c_in, c_out)
            pres.append(np.broadcast_to((pre_pos[:, None] * c_in + ci)[:, :, None], shape))
            posts.append(np.broadcast_to((post_pos[:, None] * c_out + co)[:, None, :], shape))
            wid = ((dy * kw + dx) * c_in + ci)[:, None] * c_out + co[None, :]
            wids.append(np.broadcast_to(wid[None, :, :], shape))
        else:
            shape = (pre_pos.size, c_in)
            pres.append(pre_pos[:, None] * c_in + ci)
            posts.append(post_pos[:, None] * c_out + ci)
            wids.append(np.broadcast_to(((dy * kw + dx) * c_in + ci)[None, :], shape))
    return tuple(np.concatenate([a.reshape(-1) for a in arrays]) for arrays in (pres, posts, wids))


def unroll(pre: LayerSpec, post: LayerSpec) -> ConnectionPair:
    """Unroll the connection into ``post`` into its column-major synapse list.

    Dense layers connect all-to-all, Conv2D layers follow the Toeplitz
    structure of the kernel, and depthwise convolutions (and average pooling)
    connect each channel only to itself.
    """
    match post.kind:
        case LayerKind.DENSE:
            n_pre, n_post = pre.n_neurons, post.n_neurons
            pre_index = np.repeat(np.arange(n_pre), n_post)
            post_index = np.tile(np.arange(n_post), n_pre)
            weight_id = pre_index * n_post + post_index
        case LayerKind.CONV2D | LayerKind.DEPTHWISE_CONV2D | LayerKind.AVERAGE_POOL2D:
            pre_index, post_index, weight_id = _unroll_conv(pre, post)
            order = np.lexsort((post_index, pre_index))
            pre_index, post_index, weight_id = pre_index[order], post_index[order], weight_id[order]
        case _:
            msg = (
                f"Layer '{post.id}' of kind {post.kind.value} is a reindexing, not a connection;"
                " lower the network before unrolling."
            )
            raise UnsupportedKind(msg)
    counts = np.bincount(pre_index, minlength=pre.n_neurons)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return ConnectionPair(
        pre=pre,
        post=post,
        pre_index=pre_index.astype(np.int64),
        post_index=post_index.astype(np.int64),
        weight_id=weight_id.astype(np.int64),
        indptr=indptr,
    )


@dataclass(frozen=True)
class _Segments:
    """Columns cut per destination core, one segment per (source neuron, destination core)."""

    pre: np.ndarray
    dst_core: np.ndarray
    bounds: np.ndarray
    dst_local: np.ndarray
    weight_id: np.ndarray
    n_dest: np.ndarray

    def slot(self, k: int) -> tuple[int, Slot]:
        """Base destination and relative synapse list of segment ``k``."""
        lo, hi = self.bounds[k], self.bounds[k + 1]
        local = self.dst_local[lo:hi]
        base = int(local[0])
        return base, tuple(zip((local - base).tolist(), self.weight_id[lo:hi].tolist()))


def _check_tiling(pair: ConnectionPair, pre: Partition | None, post: Partition) -> None:
    checks = [(pair.post, post)] if pre is None else [(pair.pre, pre), (pair.post, post)]
    for layer, partition in checks:
        if partition.layer_id != layer.id or tuple(partition.shape) != layer.shape:
            msg = (
                f"Partition of '{partition.layer_id}' with shape {partition.shape}"
                f" does not tile layer '{layer.id}' with shape {layer.shape}."
            )
            raise PartitionError(msg)


def _segments(pair: ConnectionPair, post_partition: Partition) -> _Segments:
    dst_core = post_partition.core_of[pair.post_index]
    dst_local = post_partition.local_of[pair.post_index]
    order = np.lexsort((dst_local, dst_core, pair.pre_index))
    pre, dst_core, dst_local = pair.pre_index[order], dst_core[order], dst_local[order]
    change = np.ones(pre.size, dtype=bool)
    change[1:] = (pre[1:] != pre[:-1]) | (dst_core[1:] != dst_core[:-1])
    starts = np.flatnonzero(change)
    seg_pre = pre[starts]
    return _Segments(
        pre=seg_pre,
        dst_core=dst_core[starts],
        bounds=np.append(starts, pre.size),
        dst_local=dst_local,
        weight_id=pair.weight_id[order],
        n_dest=np.bincount(seg_pre, minlength=pair.pre.n_neurons),
    )


def build_groups(
    pair: ConnectionPair,
    pre_partition: Partition,
    post_partition: Partition,
    sharing: Sharing = Sharing.ON,
) -> tuple[dict[str, SynapseGroup], list[PopulationAxon]]:
    """Pack the connection's columns into axons and synapse groups.

    Parameters
    ----------
    pair
        The unrolled connection.
    pre_partition
        Partition of the source layer.
    post_partition
        Partition of the destination layer.
    sharing
        With ``off`` every (source neuron, destination core) pair gets its own
        discrete axon and private group. With ``on`` (and ``full``), source
        neurons reaching more than one core get one discrete axon per core,
        the rest are packed into maximal contiguous populations per
        (source core, destination core), and groups with equal templates are
        stored once.

    Returns
    -------
    tuple
        The groups keyed by group key, and the axons in deterministic order.

    """
    _check_tiling(pair, pre_partition, post_partition)
    seg = _segments(pair, post_partition)
    src_core = pre_partition.core_of[seg.pre]
    src_local = pre_partition.local_of[seg.pre]
    groups: dict[str, SynapseGroup] = {}
    axons: list[PopulationAxon] = []

    digests: dict[Template, str] = {}

    def add(template: Template, *, private: bool) -> str:
        if template not in digests:
            digests[template] = template_hash(template)
        key = digests[template]
        if private:
            key = f"{key}.{len(axons)}"
        if key not in groups:
            groups[key] = SynapseGroup(template)
        return key

    if sharing is Sharing.OFF:
        for k in np.lexsort((seg.dst_core, src_local, src_core)).tolist():
            base, slot = seg.slot(k)
            key = add((slot,), private=True)
            axons.append(
                PopulationAxon(
                    int(src_core[k]), int(seg.dst_core[k]), key, int(src_local[k]), 1, base, False,
                ),
            )
        return groups, axons

    multi = seg.n_dest[seg.pre] > 1
    order = np.lexsort((seg.dst_core[multi], src_local[multi], src_core[multi]))
    for k in np.flatnonzero(multi)[order].tolist():
        base, slot = seg.slot(k)
        key = add((slot,), private=False)
        axon = PopulationAxon(
            int(src_core[k]), int(seg.dst_core[k]), key, int(src_local[k]), 1, base, False,
        )
        axons.append(axon)

    singles = np.flatnonzero(~multi)
    singles = singles[np.lexsort((src_local[singles], src_core[singles]))]
    run: list[int] = []
    for k in [*singles.tolist(), None]:
        if run and (
            k is None
            or src_core[k] != src_core[run[-1]]
            or src_local[k] != src_local[run[-1]] + 1
            or seg.dst_core[k] != seg.dst_core[run[-1]]
        ):
            axons.append(_population(seg, run, src_core, src_local, add))
            run = []
        if k is not None:
            run.append(k)
    return groups, axons


def _population(
    seg: _Segments,
    run: list[int],
    src_core: np.ndarray,
    src_local: np.ndarray,
    add: Callable[..., str],
) -> PopulationAxon:
    slots = [seg.slot(k) for k in run]
    base = min(b for b, _ in slots)
    template = tuple(tuple((off + b - base, wid) for off, wid in slot) for b, slot in slots)
    key = add(template, private=False)
    first = run[0]
    return PopulationAxon(
        int(src_core[first]),
        int(seg.dst_core[first]),
        key,
        int(src_local[first]),
        len(run),
        base,
        len(run) > 1,
    )


@dataclass(frozen=True)
class FullSharingBound:
    """Distinct column templates per destination core, each stored once."""

    per_core: dict[int, dict[str, SynapseGroup]]

    @property
    def n_templates(self) -> int:
        """Distinct templates summed over destination cores."""
        return sum(len(groups) for groups in self.per_core.values())

    @property
    def n_entries(self) -> int:
        """Stored synapse entries if every distinct template is stored once per core."""
        return sum(g.n_entries for groups in self.per_core.values() for g in groups.values())


def canonical_columns(pair: ConnectionPair, post_partition: Partition) -> FullSharingBound:
    """Canonicalize every column, cut per destination core, relative to its own minimum."""
    _check_tiling(pair, None, post_partition)
    seg = _segments(pair, post_partition)
    distinct: dict[int, set[Slot]] = defaultdict(set)
    for k, core in enumerate(seg.dst_core.tolist()):
        distinct[core].add(seg.slot(k)[1])
    per_core = {
        core: {g.canonical_hash: g for g in (SynapseGroup((slot,)) for slot in sorted(slots))}
        for core, slots in sorted(distinct.items())
    }
    return FullSharingBound(per_core)


# --- Synapse cost model -------------------------------------------------------------


def _runs(offsets: list[int]) -> int:
    return 1 + sum(1 for a, b in zip(offsets[:-1], offsets[1:]) if b != a + 1) if offsets else 0


def scheme_costs(group: SynapseGroup, model: SynapseCostModel) -> dict[Compression, int]:
    """Cost of storing the group under each concrete encoding."""
    sparse = dense = runlength = 0
    for slot in group.template:
        if not slot:
            continue
        offsets = [offset for offset, _ in slot]
        sparse += model.sparse_unit * len(slot)
        dense += model.dense_unit * (max(offsets) - min(offsets) + 1)
        runlength += model.rle_entry * len(slot) + model.rle_header * _runs(sorted(offsets))
    return {Compression.SPARSE: sparse, Compression.DENSE: dense, Compression.RUNLENGTH: runlength}


def choose_scheme(group: SynapseGroup, model: SynapseCostModel) -> tuple[Compression, int]:
    """The encoding the cost model selects for a group, and its cost."""
    costs = scheme_costs(group, model)
    if model.scheme is not Compression.AUTO:
        return model.scheme, costs[model.scheme]
    best = min(_SCHEME_ORDER, key=lambda scheme: (costs[scheme], _SCHEME_ORDER.index(scheme)))
    return best, costs[best]


# --- Tallies ------------------------------------------------------------------------


def _soft_charge(partition: Partition) -> list[CoreUsage]:
    """Compartments, plus one input axon and one synapse unit per soft-reset neuron."""
    soft = partition.compartments_per_neuron == 2  # noqa: PLR2004
    return [
        CoreUsage(
            compartments=n * partition.compartments_per_neuron,
            input_axons=n if soft else 0,
            synapse_units=n if soft else 0,
        )
        for n in partition.box_neurons()
    ]


def tally(
    pre_partition: Partition,
    post_partition: Partition,
    groups: dict[str, SynapseGroup],
    axons: list[PopulationAxon],
    cost_model: SynapseCostModel | None = None,
    *,
    chip_of: Callable[[CoreId], int] | None = None,
    synapse_units: dict[int, int] | None = None,
) -> ResourceTally:
    """Account the resources a connection consumes.

    Source cores are charged their output axons (twice for axons leaving the
    chip); destination cores are charged their compartments, one input axon
    per arriving axon and the synapse memory of the groups stored on them.

    Parameters
    ----------
    pre_partition
        Partition of the source layer.
    post_partition
        Partition of the destination layer.
    groups
        Groups from `build_groups`.
    axons
        Axons from `build_groups`.
    cost_model
        Synapse encoding costs.
    chip_of
        Chip of each core; all cores share one chip when omitted.
    synapse_units
        Replaces the per-destination-core synapse units computed from
        ``groups`` (used by the full-sharing oracle).

    """
    cost_model = cost_model or SynapseCostModel()
    pre_id, post_id = pre_partition.layer_id, post_partition.layer_id
    items: list[tuple[CoreId, CoreUsage]] = [
        (CoreId(post_id, k), usage) for k, usage in enumerate(_soft_charge(post_partition))
    ]
    stored: dict[int, set[str]] = defaultdict(set)
    for axon in axons:
        stored[axon.dst_core].add(axon.group)
    src = np.fromiter((axon.src_core for axon in axons), dtype=np.int64, count=len(axons))
    dst = np.fromiter((axon.dst_core for axon in axons), dtype=np.int64, count=len(axons))
    offchip = np.zeros(len(axons), dtype=np.int64)
    if chip_of is not None:
        src_chip = np.array([chip_of(core) for core in pre_partition.core_ids()], dtype=np.int64)
        dst_chip = np.array([chip_of(core) for core in post_partition.core_ids()], dtype=np.int64)
        offchip = (src_chip[src] != dst_chip[dst]).astype(np.int64)
    sent = np.bincount(src, minlength=pre_partition.n_cores)
    charge = np.bincount(src, weights=1 + offchip, minlength=pre_partition.n_cores)
    crossing = np.bincount(src, weights=offchip, minlength=pre_partition.n_cores)
    arriving = np.bincount(dst, minlength=post_partition.n_cores)
    items.extend(
        (CoreId(pre_id, k), CoreUsage(output_axons=int(charge[k]), offchip_axons=int(crossing[k])))
        for k in np.flatnonzero(sent).tolist()
    )
    items.extend(
        (CoreId(post_id, k), CoreUsage(input_axons=int(arriving[k])))
        for k in np.flatnonzero(arriving).tolist()
    )
    if synapse_units is None:
        unit_cost: dict[str, int] = {}
        for keys in stored.values():
            for key in keys:
                if key not in unit_cost:
                    unit_cost[key] = choose_scheme(groups[key], cost_model)[1]
        synapse_units = {core: sum(unit_cost[key] for key in keys) for core, keys in stored.items()}
    items.extend(
        (CoreId(post_id, core), CoreUsage(synapse_units=units))
        for core, units in synapse_units.items()
    )
    return ResourceTally.from_items(items)


def pair_tally(
    pair: ConnectionPair,
    pre_partition: Partition,
    post_partition: Partition,
    sharing: Sharing = Sharing.ON,
    cost_model: SynapseCostModel | None = None,
    *,
    chip_of: Callable[[CoreId], int] | None = None,
) -> ResourceTally:
    """`build_groups` followed by `tally`, with the full-sharing oracle for ``full``."""
    cost_model = cost_model or SynapseCostModel()
    groups, axons = build_groups(pair, pre_partition, post_partition, sharing)
    units = None
    if sharing is Sharing.FULL:
        bound = canonical_columns(pair, post_partition)
        units = {
            core: sum(choose_scheme(g, cost_model)[1] for g in core_groups.values())
            for core, core_groups in bound.per_core.items()
        }
    return tally(
        pre_partition,
        post_partition,
        groups,
        axons,
        cost_model,
        chip_of=chip_of,
        synapse_units=units,
    )


def injection_tally(partition: Partition) -> ResourceTally:
    """Input-layer cores: compartments plus one injection axon per input neuron."""
    items = [
        (CoreId(partition.layer_id, k), usage + CoreUsage(input_axons=n))
        for k, (usage, n) in enumerate(zip(_soft_charge(partition), partition.box_neurons()))
    ]
    return ResourceTally.from_items(items)


def readout_tally(partition: Partition) -> ResourceTally:
    """Output-layer cores: one on-chip readout axon per output neuron."""
    return ResourceTally.from_items(
        (CoreId(partition.layer_id, k), CoreUsage(output_axons=n))
        for k, n in enumerate(partition.box_neurons())
    )


def expand_axons(
    groups: dict[str, SynapseGroup],
    axons: list[PopulationAxon],
    pre_partition: Partition,
    post_partition: Partition,
) -> list[tuple[int, int, int]]:
    """Sorted ``(pre, post, weight_id)`` triples reached through the axons."""
    out = []
    for axon in axons:
        template = groups[axon.group].template
        src = pre_partition.global_of[axon.src_core]
        dst = post_partition.global_of[axon.dst_core]
        for slot, member in enumerate(axon.members):
            pre = int(src[member])
            out.extend((pre, int(dst[axon.base + offset]), wid) for offset, wid in template[slot])
    return sorted(out)
