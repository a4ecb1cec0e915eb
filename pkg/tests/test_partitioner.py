import numpy as np
import pytest

from spikemap.errors import InfeasibleNetwork, NoFeasiblePartition, UsageError
from spikemap.helpers import create_mlp, input_layer, random_network
from spikemap.model_ir import LayerKind, LayerSpec, NetworkSpec, NeuronConfig, ResetMode, validate
from spikemap.partitioner import (
    CostWeights,
    chain_cost,
    check_hard,
    evaluate_cost,
    exhaustive_optimum,
    first_fit,
    free_after,
    optimize,
    place_chain,
    propose_candidates,
    tally_chain,
)
from spikemap.resources import CoreConstraints, CoreId, CoreUsage, ResourceTally, Sharing


def _tally(**usage):
    return ResourceTally({CoreId("layer", 0): CoreUsage(**usage)})


def _layer(shape, *, soft_reset=False):
    reset_mode = ResetMode.SOFT if soft_reset else ResetMode.HARD
    return LayerSpec(
        id="layer",
        kind=LayerKind.DENSE,
        output_shape=shape,
        neuron_config=NeuronConfig(threshold=1, reset_mode=reset_mode),
    )


def test_evaluate_cost_full_core():
    """A core at its synapse and axon budgets costs three."""
    tally = _tally(compartments=1, input_axons=4096, output_axons=4096, synapse_units=131072)
    assert evaluate_cost(tally) == 3.0
    assert evaluate_cost(ResourceTally()) == 0.0


def test_evaluate_cost_single_term():
    """Zero weights drop their terms."""
    tally = ResourceTally.from_items(
        (CoreId("layer", k), CoreUsage(compartments=1, input_axons=10)) for k in range(7)
    )
    assert evaluate_cost(tally, CostWeights(1, 0, 0, 0)) == 7.0


def test_evaluate_cost_offchip():
    """Off-chip axons are counted by the last term."""
    tally = _tally(output_axons=2, offchip_axons=1)
    assert evaluate_cost(tally, CostWeights(0, 0, 0, 1)) == 1.0
    assert evaluate_cost(tally, CostWeights(0, 0, 1, 0)) == pytest.approx(2 / 8192)


@pytest.mark.parametrize(
    ("usage", "resource"),
    [
        ({"compartments": 1025}, "compartments"),
        ({"synapse_units": 131073}, "synapse_units"),
        ({"output_axons": 4097}, "output_axons"),
    ],
)
def test_check_hard_violation(usage, resource):
    """Usage above a limit invalidates the tally."""
    valid, violation = check_hard(_tally(**usage))
    assert not valid
    assert violation.resource == resource
    assert "layer 'layer'" in str(violation)


def test_check_hard_inclusive():
    """Limits are inclusive."""
    tally = _tally(compartments=1024, input_axons=4096, synapse_units=131072)
    assert check_hard(tally) == (True, None)


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("1,1,1,1", CostWeights()),
        ("2, 0, 0.5, 1", CostWeights(2.0, 0.0, 0.5, 1.0)),
    ],
)
def test_cost_weights_parse(text, expected):
    """Weights are parsed from four comma-separated numbers."""
    assert CostWeights.parse(text) == expected


@pytest.mark.parametrize("text", ["1,2", "a,b,c,d", "0,0,0,0", "1,-1,0,0"])
def test_cost_weights_invalid(text):
    """Wrong counts, non-numbers and all-zero or negative weights are rejected."""
    with pytest.raises(UsageError):
        CostWeights.parse(text)


def test_propose_soft_reset_channel_split():
    """Soft reset doubles compartments, so 2048 neurons need four cores."""
    candidates = propose_candidates(_layer((1, 1, 2048), soft_reset=True), 4)
    assert len(candidates) == 4
    assert candidates[0].grid == (1, 1, 4)
    assert all(p.max_compartments <= 1024 for p in candidates)


def test_propose_single_core():
    """A layer that fits one core is not split."""
    assert propose_candidates(_layer((4, 4, 10)), 4)[0].grid == (1, 1, 1)


def test_propose_large_layer():
    """A large layer gets distinct grids that respect the neuron bound."""
    candidates = propose_candidates(_layer((32, 32, 64)), 2)
    assert len(candidates) == 2
    assert candidates[0].grid != candidates[1].grid
    assert all(max(p.box_neurons()) <= 1024 for p in candidates)
    assert candidates[0].n_cores == 64


def test_propose_infeasible():
    """No split fits when a single soft-reset neuron exceeds the cap."""
    with pytest.raises(NoFeasiblePartition):
        propose_candidates(_layer((1, 1, 4), soft_reset=True), 1, max_compartments=1)
    with pytest.raises(UsageError):
        propose_candidates(_layer((1, 1, 4)), 0)


def test_first_fit():
    """Cores take the first free cores in chip order and open a chip only when all are full."""
    assert first_fit(3, (), 128) == ((0, 0, 0), (125,))
    chips, free = first_fit(130, (), 128)
    assert chips == (0,) * 128 + (1, 1)
    assert free == (0, 126)
    assert first_fit(2, (1, 5), 128) == ((0, 1), (0, 4))
    assert free_after(130, 128) == (0, 126)
    assert free_after(256, 128) == (0, 0)
    assert free_after(0, 128) == ()


def test_optimize_single_layer():
    """A one-layer network is split by its best candidate alone."""
    network = validate(NetworkSpec(name="single", layers=(input_layer((4, 4, 10)),)))
    plan = optimize(network)
    assert plan.partitions[0].grid == (1, 1, 1)
    # 160 injection axons plus 160 readout axons
    assert plan.cost == pytest.approx(1 + 320 / 8192)


def test_optimize_wide_output():
    """The 2048-wide output layer needs at least two cores; the cost is reproducible."""
    network = create_mlp([20, 2048])
    plan = optimize(network, m=4)
    assert plan.partitions[-1].n_cores >= 2
    recomputed = tally_chain(network, plan.partitions, plan.sharing, plan.cost_model, plan.chips)
    assert list(plan.tallies) == recomputed
    assert plan.cost == chain_cost(recomputed, plan.weights, plan.constraints)
    assert all(check_hard(t, plan.constraints)[0] for t in recomputed)


def test_optimize_deterministic():
    """Identical inputs give identical plans."""
    network = create_mlp([10, 40, 5], rng=np.random.default_rng(1))
    constraints = CoreConstraints(max_neurons_per_core=16)
    first = optimize(network, 4, constraints=constraints)
    second = optimize(network, 4, constraints=constraints)
    assert [p.grid for p in first.partitions] == [p.grid for p in second.partitions]
    assert first.cost == second.cost


def test_optimize_offchip():
    """Layers that cannot share a chip are charged for their off-chip axons."""
    network = create_mlp([4, 8])
    constraints = CoreConstraints(max_neurons_per_core=4, cores_per_chip=2)
    plan = optimize(network, constraints=constraints)
    assert plan.n_chips >= 2
    assert plan.total.n_offchip >= 1


def test_optimize_infeasible():
    """A synapse budget nothing fits in makes the network infeasible."""
    network = create_mlp([4, 2])
    with pytest.raises(InfeasibleNetwork):
        optimize(network, constraints=CoreConstraints(synapse_budget_units=1))
    with pytest.raises(UsageError):
        optimize(network, m=0)


def test_exhaustive_bounds_optimize():
    """The exhaustive optimum is never worse than the beam search."""
    network = create_mlp([3, 4, 2])
    constraints = CoreConstraints(max_neurons_per_core=2)
    best = exhaustive_optimum(network, constraints)
    plan = optimize(network, 4, constraints=constraints)
    assert best.cost <= plan.cost


@pytest.mark.parametrize("seed", range(6))
def test_exhaustive_bounds_greedy(seed):
    """The exhaustive optimum over every grid pair is never worse than the greedy chain."""
    network = random_network(np.random.default_rng([seed, 64]), max_layers=2, max_neurons=64)
    constraints = CoreConstraints(max_neurons_per_core=8, cores_per_chip=4)
    best = exhaustive_optimum(network, constraints)
    greedy = optimize(network, 1, constraints=constraints)
    assert best.cost <= greedy.cost
    recomputed = tally_chain(network, best.partitions, best.sharing, best.cost_model, best.chips)
    assert best.cost == chain_cost(recomputed, best.weights, constraints)


def test_exhaustive_limit():
    """Too many combinations are refused."""
    network = create_mlp([3, 4, 2])
    with pytest.raises(UsageError, match="exceeds the limit"):
        exhaustive_optimum(network, max_combinations=2)


@pytest.mark.slow
@pytest.mark.timeout(600)
@pytest.mark.parametrize("seed", range(20))
def test_beam_properties(seed):
    """Wider beams never cost more, and every plan re-tallies to a feasible chain."""
    network = random_network(np.random.default_rng(seed), max_neurons=300)
    constraints = CoreConstraints(max_neurons_per_core=32)
    costs = []
    for m in (1, 2, 4, 8):
        plan = optimize(network, m, constraints=constraints)
        recomputed = tally_chain(
            network, plan.partitions, plan.sharing, plan.cost_model, plan.chips
        )
        assert list(plan.tallies) == recomputed
        assert all(check_hard(t, constraints)[0] for t in recomputed)
        assert plan.cost == chain_cost(recomputed, plan.weights, constraints)
        costs.append(plan.cost)
    assert costs == sorted(costs, reverse=True)


@pytest.mark.slow
@pytest.mark.timeout(600)
@pytest.mark.parametrize("chunk", range(10))
def test_plans_retally_feasible(chunk):
    """Over a thousand random layer shapes, every plan re-tallies from scratch within the limits."""
    rng = np.random.default_rng([chunk, 1000])
    for _ in range(100):
        network = random_network(rng, max_layers=3, max_neurons=150)
        constraints = CoreConstraints(
            max_neurons_per_core=int(rng.integers(4, 40)),
            cores_per_chip=int(rng.integers(2, 17)),
        )
        sharing = (Sharing.ON, Sharing.OFF)[int(rng.integers(2))]
        m = int(rng.choice([1, 2, 4]))
        plan = optimize(network, m, constraints=constraints, sharing=sharing)
        recomputed = tally_chain(network, plan.partitions, sharing, plan.cost_model, plan.chips)
        assert list(plan.tallies) == recomputed
        assert plan.chips == place_chain(plan.partitions, constraints.cores_per_chip)
        for tally in recomputed:
            assert check_hard(tally, constraints) == (True, None)
        assert plan.cost == chain_cost(recomputed, plan.weights, constraints)
