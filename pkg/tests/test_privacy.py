import numpy as np
import pytest

from daol.graph import CommGraph, build_topology, fig2a_graph, fig2b_graph, named_graph, random_generic_weights
from daol.privacy import (
    SystemSpec,
    exhaustive_scan,
    finite_horizon_invertibility,
    full_reconstruction_condition,
    input_output_map,
    is_privacy_preserving,
    numerical_verdict,
    observed_nodes,
    partial_reconstruction_condition,
    path_count_rank,
    random_strongly_connected_digraph,
    rank_growth,
)


def corpus(count=60, seed=77):
    rng = np.random.default_rng(seed)
    return [random_strongly_connected_digraph(int(rng.integers(2, 6)), rng) for _ in range(count)]


def test_full_condition_fig2():
    assert full_reconstruction_condition(fig2a_graph(), 0)
    assert not full_reconstruction_condition(fig2b_graph(), 0)
    for M in range(4):
        assert full_reconstruction_condition(build_topology("clique", 4), M)


def test_observed_includes_self():
    assert observed_nodes(build_topology("ring", 4), 0) == [0, 1, 3]


def test_star_hub_single_leaf():
    g = build_topology("star", 5, hub=0)
    assert partial_reconstruction_condition(g, 0, {3}).holds


def test_grid_center_edge_neighbor_fails_ii():
    g = build_topology("grid", 9, rows=3, cols=3)
    cond = partial_reconstruction_condition(g, 4, {1})
    # node 1's neighbors 0 and 2 are corners, not adjacent to the center
    assert not cond.holds and cond.failed == "ii"
    assert set(cond.offenders_ii) == {0, 2}


def test_fig2b_single_target_fails_ii():
    cond = partial_reconstruction_condition(fig2b_graph(), 0, {1})
    assert cond.cond_i and not cond.cond_ii and cond.failed == "ii"
    assert cond.offenders_ii == (2,)


def test_fig2b_both_targets_fails_i_at_q():
    cond = partial_reconstruction_condition(fig2b_graph(), 0, {1, 2})
    assert cond.failed == "i" and cond.offenders_i == (2,)


def test_partial_condition_rejects_bad_targets():
    g = build_topology("ring", 4)
    with pytest.raises(ValueError):
        partial_reconstruction_condition(g, 0, {0})
    with pytest.raises(ValueError):
        partial_reconstruction_condition(g, 0, set())


@pytest.mark.parametrize("spec,expected", [("hypercube:3", True), ("grid:3x3", True), ("ring:6", True),
                                           ("clique:3", False), ("clique:4", False), ("star:5", False)])
def test_privacy_classification(spec, expected):
    g = named_graph(spec)
    rep = is_privacy_preserving(g, exhaustive_max_m=9)
    assert rep.privacy_preserving is expected
    assert rep.exhaustive_checked
    if spec.startswith("clique"):
        assert rep.full_reconstruction == list(g.nodes)
    if spec.startswith("star"):
        assert 0 in rep.full_reconstruction


def test_privacy_rejects_disconnected():
    g = build_topology("custom", 4, edges=[(0, 1), (1, 0), (2, 3), (3, 2)])
    with pytest.raises(ValueError):
        is_privacy_preserving(g)


def test_report_csv_columns():
    rep = is_privacy_preserving(named_graph("star:5"), numerical=True, rng=1)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "M,N_set,cond_i,cond_ii,structural,numerical,kappa,verdict"
    assert len(lines) == 1 + 5 * 4
    assert all(q.agrees for q in rep.queries)
    assert "NOT privacy-preserving" in rep.to_text()


def test_oracle_fig2a_unique_fig2b_ambiguous(rng):
    a = SystemSpec(random_generic_weights(fig2a_graph(), rng), 0, frozenset({1, 2}))
    assert finite_horizon_invertibility(a).verdict == "unique"
    b = SystemSpec(random_generic_weights(fig2b_graph(), rng), 0, frozenset({1, 2}))
    verdict = finite_horizon_invertibility(b)
    assert verdict.verdict == "ambiguous"
    cols = b.target_columns(verdict.horizon)
    assert np.max(np.abs(verdict.witness[cols])) == pytest.approx(1.0)
    Phi = input_output_map(b, verdict.horizon)
    assert np.max(np.abs(Phi @ verdict.witness)) <= 1e-10


def test_input_output_map_matches_forward_run(rng):
    spec = SystemSpec(random_generic_weights(build_topology("ring", 5), rng), 0, frozenset({2}), True)
    h = 6
    Phi = input_output_map(spec, h)
    u = rng.standard_normal(Phi.shape[1])
    blocks = u.reshape(h, 2, 5)
    w = np.zeros(5)
    ys = []
    for t in range(h):
        w = w @ spec.mixing.A + blocks[t, 0] + blocks[t, 1]
        ys.append(w[spec.observed])
    np.testing.assert_allclose(Phi @ u, np.concatenate(ys), atol=1e-12)


def test_structural_matches_numerical_on_corpus():
    rng = np.random.default_rng(5)
    for g in corpus():
        for M in g.nodes:
            for n in g.nodes:
                if n == M:
                    continue
                verdict, _, used = numerical_verdict(g, M, {n}, rng=rng)
                assert used <= 1
                assert (verdict.verdict == "unique") == partial_reconstruction_condition(g, M, {n}).holds


def test_structural_matches_numerical_multi_target():
    rng = np.random.default_rng(6)
    for g in corpus(20, seed=8):
        M = 0
        targets = set(range(1, g.m))
        verdict, _, _ = numerical_verdict(g, M, targets, rng=rng)
        assert (verdict.verdict == "unique") == partial_reconstruction_condition(g, M, targets).holds


def test_full_condition_is_partial_with_all_others():
    for g in corpus():
        for M in g.nodes:
            others = set(g.nodes) - {M}
            assert full_reconstruction_condition(g, M) == partial_reconstruction_condition(g, M, others).holds


def test_sufficient_condition_on_named_topologies():
    for spec in ("grid:3x3", "grid:4x4", "hypercube:3", "hypercube:4", "ring:6", "ring:8"):
        rep = is_privacy_preserving(named_graph(spec))
        assert rep.sufficient_condition and rep.privacy_preserving


def test_exhaustive_scan_matches_singletons():
    for g in corpus():
        assert exhaustive_scan(g) == is_privacy_preserving(g).privacy_preserving


def test_sufficient_condition_counterexample():
    # M=0 and n=1 share every neighbour; node 4 hangs off 2 and 3.  kappa=2, all degrees < m-1,
    # yet both reconstruction conditions hold and the rank oracle confirms it.
    g = CommGraph.from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 4), (3, 4)], directed=False)
    rep = is_privacy_preserving(g, numerical=True, rng=1)
    assert rep.kappa == 2 and rep.sufficient_condition
    assert not rep.privacy_preserving and rep.sufficient_condition_contradicted
    assert all(q.agrees for q in rep.queries)
    assert "warning" in rep.to_text()


def test_rank_growth_matches_path_count():
    rng = np.random.default_rng(9)
    for g in corpus(30, seed=10):
        mm = random_generic_weights(g, rng)
        for M in g.nodes:
            spec = SystemSpec(mm, M, frozenset({(M + 1) % g.m}))
            assert rank_growth(spec, 2 * g.m + 2) == path_count_rank(g, M)


@pytest.mark.parametrize("spec", ["clique:3", "clique:4", "fig2a", "star:5", "ring:4"])
def test_projection_inputs_always_ambiguous(spec, rng):
    g = named_graph(spec)
    for M in g.nodes:
        others = frozenset(set(g.nodes) - {M})
        verdict, _, _ = numerical_verdict(g, M, others, projection_inputs=True, rng=rng)
        assert verdict.verdict == "ambiguous"
