import numpy as np
import pytest

from daol.attack import (
    ReconstructionRefused,
    ball_projection_collision,
    construct_ambiguous_inputs,
    observe,
    reconstruct_subgradients,
    simulate_outputs,
)
from daol.datasets import generate_synthetic
from daol.graph import CommGraph, MixingMatrix, build_topology, fig2b_graph, named_graph, random_generic_weights
from daol.losses import FeasibleSet, LossSpec
from daol.privacy import SystemSpec, finite_horizon_invertibility, partial_reconstruction_condition
from daol.simulator import SimConfig, run_distributed


def simulate(g, T=50, dim=2, seed=0, domain=None, lam=0.0, mixing=None):
    mixing = mixing or random_generic_weights(g, seed)
    domain = domain or FeasibleSet()
    data, _ = generate_synthetic(T * g.m, dim, 0.1, seed=seed)
    loss = LossSpec.for_domain(lam, domain) if domain.kind == "l2_ball" else LossSpec(lam)
    return run_distributed(SimConfig(mixing, loss, domain, T, data))


def test_observe_columns():
    trace = simulate(build_topology("clique", 4))
    assert observe(trace, 2).observed == (0, 1, 2, 3)
    trace = simulate(build_topology("ring", 4))
    log = observe(trace, 0)
    assert log.observed == (0, 1, 3)
    np.testing.assert_array_equal(log.Y, trace.W[:, [0, 1, 3]])


def test_observe_isolated_observer():
    A = np.eye(3)
    A[1:, 1:] = 0.5
    g = CommGraph.from_edges(3, [(1, 2)], directed=False)
    trace = simulate(g, mixing=MixingMatrix(A, g))
    assert observe(trace, 0).observed == (0,)


def test_clique3_reconstruction():
    trace = simulate(build_topology("clique", 3))
    res = reconstruct_subgradients(observe(trace, 0), {1, 2})
    assert res.max_error(trace) <= 1e-9


def test_star_hub_reconstruction():
    trace = simulate(build_topology("star", 5, hub=0), dim=3, seed=1)
    res = reconstruct_subgradients(observe(trace, 0), {1, 2, 3, 4})
    assert res.max_error(trace, relative=True) <= 1e-9


@pytest.mark.parametrize("spec,M,targets", [("fig2a", 0, {1, 2}), ("clique:5", 2, {0, 4}), ("star:9", 0, {3, 5})])
def test_soundness_where_conditions_hold(spec, M, targets):
    g = named_graph(spec)
    assert partial_reconstruction_condition(g, M, targets).holds
    trace = simulate(g, T=200, dim=3, seed=2)
    res = reconstruct_subgradients(observe(trace, M), targets)
    assert res.max_error(trace, relative=True) <= 1e-9


def test_no_oracle_leakage():
    trace = simulate(build_topology("clique", 3), seed=4)
    truth = trace.G.copy()
    log = observe(trace, 0)
    del trace
    res = reconstruct_subgradients(log, {1, 2})
    assert np.max(np.abs(res.g_hat - truth[:, [1, 2]])) <= 1e-9


def test_withheld_initial_only_round_one_lost():
    trace = simulate(build_topology("clique", 3), seed=5)
    res = reconstruct_subgradients(observe(trace, 0, withhold_initial=True), {1, 2})
    assert np.all(np.isnan(res.g_hat[0]))
    assert not np.any(np.isnan(res.g_hat[1:]))
    assert np.nanmax(res.errors(trace)) <= 1e-9
    assert 1 in res.status


def test_ring_refuses_nonadjacent_target():
    trace = simulate(build_topology("ring", 4))
    with pytest.raises(ReconstructionRefused) as info:
        reconstruct_subgradients(observe(trace, 0), {2})
    assert info.value.condition == "i" and info.value.nodes == (2,)


def test_fig2b_refuses_with_condition():
    trace = simulate(fig2b_graph())
    with pytest.raises(ReconstructionRefused) as info:
        reconstruct_subgradients(observe(trace, 0), {1})
    assert info.value.condition == "ii" and info.value.nodes == (2,)


def test_projection_refused():
    trace = simulate(build_topology("clique", 3), domain=FeasibleSet.ball(0.2))
    with pytest.raises(ReconstructionRefused) as info:
        reconstruct_subgradients(observe(trace, 0), {1, 2})
    assert info.value.condition == "projection"


def test_observer_cannot_target_itself():
    trace = simulate(build_topology("clique", 3))
    with pytest.raises(ValueError):
        reconstruct_subgradients(observe(trace, 0), {0, 1})


@pytest.mark.parametrize("spec,M,targets,projection", [
    ("fig2b", 0, {1, 2}, False),
    ("fig2b", 0, {1}, False),
    ("ring:4", 0, {2}, False),
    ("grid:3x3", 4, {1}, False),
    ("clique:3", 0, {1, 2}, True),
    ("clique:4", 1, {0, 2, 3}, True),
])
def test_ambiguous_pairs_verified(spec, M, targets, projection, rng):
    g = named_graph(spec)
    sys = SystemSpec(random_generic_weights(g, rng), M, frozenset(targets), projection)
    pair = construct_ambiguous_inputs(sys, rng=rng)
    assert pair.observation_gap <= 1e-10
    assert pair.target_gap >= 0.1
    ya = simulate_outputs(sys, pair.inputs_a, pair.residuals_a)
    yb = simulate_outputs(sys, pair.inputs_b, pair.residuals_b)
    assert np.max(np.abs(ya - yb)) <= 1e-10


def test_projection_witness_compensates_g_with_r(rng):
    sys = SystemSpec(random_generic_weights(build_topology("clique", 3), rng), 0, frozenset({1, 2}), True)
    pair = construct_ambiguous_inputs(sys, rng=rng)
    dg = pair.inputs_b - pair.inputs_a
    dr = pair.residuals_b - pair.residuals_a
    np.testing.assert_allclose(dg + dr, 0, atol=1e-10)


def test_unique_system_has_no_pair(rng):
    sys = SystemSpec(random_generic_weights(build_topology("clique", 3), rng), 0, frozenset({1, 2}))
    assert finite_horizon_invertibility(sys).verdict == "unique"
    with pytest.raises(ValueError):
        construct_ambiguous_inputs(sys)


def test_ball_collision_demo():
    g = build_topology("clique", 3)
    data, _ = generate_synthetic(3 * 30, 2, 0.1, seed=3)
    dom = FeasibleSet.ball(0.3)
    cfg = SimConfig(random_generic_weights(g, 3), LossSpec(0.0), dom, 30, data)
    demo = ball_projection_collision(cfg)
    assert np.linalg.norm(demo.g_a - demo.g_b) > 1e-3
    assert demo.max_param_gap <= 1e-12
    log_a, log_b = observe(demo.trace_a, 0), observe(demo.trace_b, 0)
    assert np.max(np.abs(log_a.Y - log_b.Y)) <= 1e-12


def test_report_csv():
    trace = simulate(build_topology("clique", 3), T=3)
    res = reconstruct_subgradients(observe(trace, 0), {1, 2})
    lines = res.to_csv(trace).splitlines()
    assert lines[0] == "t,node,coord,true_g,reconstructed_g,abs_error"
    assert len(lines) == 1 + 3 * 2 * 2
