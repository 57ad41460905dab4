"""Acceptance checks shared by ``daol selftest`` and the test suite.

Each ``criterion_*`` function runs one check at its stated tolerance and
returns a :class:`CriterionResult`.  Expensive simulations are cached so
the invariant checks can reuse the regret runs.
"""

from __future__ import annotations

import functools
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .attack import ReconstructionRefused, construct_ambiguous_inputs, observe, reconstruct_subgradients
from .datasets import generate_synthetic
from .graph import (
    CommGraph,
    MixingMatrix,
    build_topology,
    column_deviations,
    fig2b_graph,
    make_doubly_stochastic,
    mixing_constants,
    named_graph,
    random_generic_weights,
    vertex_connectivity,
)
from .losses import FeasibleSet, LossSpec
from .privacy import (
    SystemSpec,
    exhaustive_scan,
    finite_horizon_invertibility,
    is_privacy_preserving,
    numerical_verdict,
    partial_reconstruction_condition,
    random_strongly_connected_digraph,
)
from .simulator import (
    SimConfig,
    disagreement_check,
    error_rate,
    hindsight_optimum,
    regret,
    regret_bound_rhs,
    run_distributed,
    run_sequential,
)

REGRET_SETUPS = (("ring", 4), ("ring", 16), ("hypercube", 4), ("hypercube", 16))
CLASSIFICATION = {"grid:3x3": True, "hypercube:3": True, "ring:6": True, "clique:4": False, "star:5": False}
RADIUS = 5.0
T_REGRET = 2000
SEED = 20240601


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: float | None = None   # runtime budget in seconds, if any

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} criterion {self.number:>2} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str, limit: float | None = None):
    def wrap(fn):
        @functools.wraps(fn)
        def run() -> CriterionResult:
            start = time.perf_counter()
            passed, detail = fn()
            elapsed = time.perf_counter() - start
            if limit is not None and elapsed > limit:
                passed, detail = False, f"{detail}; runtime {elapsed:.1f}s over {limit:.0f}s budget"
            return CriterionResult(number, name, bool(passed), detail, elapsed, limit)
        run.number = number
        return run
    return wrap


# ---------------------------------------------------------------------------
# Shared regret runs


@functools.lru_cache(maxsize=None)
def regret_run(kind: str, m: int, lam: float):
    """Trace, certified optimum and mixing constants for one regret setup."""
    g = build_topology(kind, m)
    mm = make_doubly_stochastic(g, "uniform_maxdeg")
    mc = mixing_constants(mm)
    dom = FeasibleSet.ball(RADIUS)
    loss = LossSpec.for_domain(lam, dom)
    data, _ = generate_synthetic(T_REGRET * m, 10, 0.1, seed=SEED + m)
    eta = None if lam > 0 else (lambda t: 1.0 / (2.0 * math.sqrt(t)))
    trace = run_distributed(SimConfig(mm, loss, dom, T_REGRET, data, eta=eta))
    opt = hindsight_optimum(loss, dom, data)
    return trace, opt, mc, loss, dom


def _regret_criterion(lam: float) -> tuple[bool, str]:
    worst, lines = 0.0, []
    ok = True
    for kind, m in REGRET_SETUPS:
        trace, opt, mc, loss, dom = regret_run(kind, m, lam)
        bound = regret_bound_rhs(lam, loss.grad_bound, m, dom.diameter, mc.beta, T_REGRET)
        # The certified lower bound on the optimum makes each regret an upper estimate.
        finals = [regret(trace, opt.w, j, optimum_value=opt.lower_bound).final for j in range(m)]
        ok &= max(finals) <= bound
        worst = max(worst, max(finals) / bound)
        lines.append(f"{kind}{m} {max(finals):.1f}<={bound:.1f}")
    return ok, f"max regret/bound {worst:.3f} [{', '.join(lines)}]"


@_timed(1, "regret bound, strongly convex", limit=60)
def criterion_1():
    return _regret_criterion(0.1)


@_timed(2, "regret bound, convex", limit=60)
def criterion_2():
    return _regret_criterion(0.0)


@_timed(3, "per-step invariants")
def criterion_3():
    ok, worst = True, [0.0, 0.0, 0.0]
    bad = []
    for lam in (0.1, 0.0):
        for kind, m in REGRET_SETUPS:
            trace, _, mc, loss, _ = regret_run(kind, m, lam)
            rep = disagreement_check(trace, loss.grad_bound, mc.beta, slack=1e-9)
            if not rep.passed:
                ok = False
                bad.append(f"{kind}{m} lam={lam}: {rep.violations[0]}")
            worst = [max(worst[0], rep.residual_ratio), max(worst[1], rep.disagreement_ratio),
                     max(worst[2], rep.disagreement_hat_ratio)]
    detail = "worst ratios residual {:.3f} difference1 {:.3f} difference2 {:.3f}".format(*worst)
    return ok, detail + ("; " + "; ".join(bad) if bad else "")


# ---------------------------------------------------------------------------
# Mixing


def suite_mixing_matrices() -> list[tuple[str, MixingMatrix]]:
    out = []
    for kind, m in REGRET_SETUPS:
        out.append((f"{kind}{m}/uniform_maxdeg", make_doubly_stochastic(build_topology(kind, m), "uniform_maxdeg")))
    rng = np.random.default_rng(SEED)
    for spec in (*CLASSIFICATION, "ring:4", "fig2a", "fig2b"):
        g = named_graph(spec)
        for scheme in ("uniform_maxdeg", "metropolis"):
            if g.is_symmetric():
                out.append((f"{spec}/{scheme}", make_doubly_stochastic(g, scheme)))
        out.append((f"{spec}/random", random_generic_weights(g, rng)))
    return out


@_timed(4, "mixing bound")
def criterion_4():
    worst = -math.inf
    matrices = suite_mixing_matrices()
    for name, mm in matrices:
        try:
            mc = mixing_constants(mm, kmax=50)
        except (RuntimeError, ValueError) as exc:
            return False, f"{name}: {exc}"
        bound = mm.c_mix * mc.beta ** np.arange(1, 51)
        worst = max(worst, float(np.max(mc.deviations - bound)))
    clique = make_doubly_stochastic(build_topology("clique", 4), "uniform_maxdeg")
    exact = float(column_deviations(clique.A, 50).max())
    if clique.beta > 1e-15 or exact != 0.0:
        return False, f"uniform clique(4) not exact: beta={clique.beta:.3g}, deviation={exact:.3g}"
    return True, f"{len(matrices)} matrices, max(deviation - bound) {worst:.2e} (tolerance 1e-12); clique(4) exactly 0"


# ---------------------------------------------------------------------------
# Learning


@_timed(5, "m=1 reduction")
def criterion_5():
    g = CommGraph.from_edges(1, [])
    mm = MixingMatrix.from_matrix(np.ones((1, 1)), g)
    data, _ = generate_synthetic(500, 5, 0.1, seed=SEED)
    worst = 0.0
    for lam, dom in ((0.1, FeasibleSet.ball(RADIUS)), (0.0, FeasibleSet()), (0.0, FeasibleSet.ball(0.5))):
        loss = LossSpec.for_domain(lam, dom)
        dist = run_distributed(SimConfig(mm, loss, dom, len(data), data))
        seq = run_sequential(loss, dom, data)
        for a, b in ((dist.W, seq.W), (dist.G, seq.G), (dist.R, seq.R)):
            worst = max(worst, float(np.max(np.abs(a - b))))
    return worst == 0.0, f"max abs diff {worst:.3g}"


@_timed(6, "convergence vs sequential", limit=120)
def criterion_6():
    data, _ = generate_synthetic(60_000, 10, 0.1, seed=SEED)
    train, test = data.split(50_000)
    dom = FeasibleSet.ball(RADIUS)
    loss = LossSpec.for_domain(0.0, dom)
    eta = lambda t: 1.0 / (2.0 * math.sqrt(t))
    mm = make_doubly_stochastic(build_topology("hypercube", 16), "uniform_maxdeg")
    dist = run_distributed(SimConfig(mm, loss, dom, 50_000 // 16, train, eta=eta))
    seq = run_sequential(loss, dom, train, eta=eta)
    e_d, e_s = error_rate(dist.W[-1, 0], test), error_rate(seq.W[-1, 0], test)
    return abs(e_d - e_s) <= 0.02, f"distributed {e_d:.4f} sequential {e_s:.4f} gap {abs(e_d - e_s):.4f}"


# ---------------------------------------------------------------------------
# Privacy and attack


def _attack_error(g: CommGraph, M: int, dim: int, seed: int) -> float:
    mm = random_generic_weights(g, seed)
    data, _ = generate_synthetic(50 * g.m, dim, 0.1, seed=seed)
    dom = FeasibleSet()
    trace = run_distributed(SimConfig(mm, LossSpec.for_domain(0.0, dom), dom, 50, data))
    targets = [v for v in g.nodes if v != M]
    res = reconstruct_subgradients(observe(trace, M), targets)
    return float(np.max(res.errors(trace)))


@_timed(7, "attack soundness")
def criterion_7():
    try:
        e3 = _attack_error(build_topology("clique", 3), 0, 2, SEED)
        e5 = _attack_error(build_topology("star", 5, hub=0), 0, 3, SEED + 1)
    except ReconstructionRefused as exc:
        return False, f"refused: {exc}"
    return max(e3, e5) <= 1e-9, f"clique3 {e3:.2e}, star5 {e5:.2e}"


@_timed(8, "ambiguity witnesses")
def criterion_8():
    rng = np.random.default_rng(SEED)
    cases = (("fig2b", fig2b_graph(), 0, {1, 2}), ("ring4", build_topology("ring", 4), 0, {2}))
    parts, ok = [], True
    for name, g, M, targets in cases:
        spec = SystemSpec(random_generic_weights(g, rng), M, frozenset(targets))
        verdict = finite_horizon_invertibility(spec)
        if verdict.verdict != "ambiguous":
            return False, f"{name}: verdict {verdict.verdict}"
        pair = construct_ambiguous_inputs(spec, rng=rng, verdict=verdict)
        ok &= pair.observation_gap <= 1e-10 and pair.target_gap >= 0.1
        parts.append(f"{name} obs gap {pair.observation_gap:.1e} target gap {pair.target_gap:.2f}")
    return ok, "; ".join(parts)


def random_suite_graphs(count: int = 200, seed: int = SEED) -> list[CommGraph]:
    rng = np.random.default_rng(seed)
    return [random_strongly_connected_digraph(int(rng.integers(2, 6)), rng) for _ in range(count)]


@_timed(9, "structural vs numerical", limit=300)
def criterion_9():
    rng = np.random.default_rng(SEED + 9)
    queries = disagree = over = 0
    for g in random_suite_graphs():
        for M in g.nodes:
            for n in g.nodes:
                if n == M:
                    continue
                structural = partial_reconstruction_condition(g, M, {n}).holds
                verdict, _, used = numerical_verdict(g, M, {n}, rng=rng, resamples=1)
                queries += 1
                over += verdict.verdict == "indeterminate"
                disagree += structural != (verdict.verdict == "unique")
    return disagree == 0 and over == 0, f"{queries} queries, {disagree} disagreements, {over} unresolved"


@_timed(10, "privacy classification")
def criterion_10():
    parts, ok = [], True
    for spec, expected in CLASSIFICATION.items():
        g = named_graph(spec)
        rep = is_privacy_preserving(g, exhaustive_max_m=g.m)
        ok &= rep.privacy_preserving == expected and rep.exhaustive_checked and exhaustive_scan(g) == expected
        parts.append(f"{spec} {'preserving' if rep.privacy_preserving else 'exposed'}")
    return ok, ", ".join(parts)


@_timed(11, "projection defeats reconstruction")
def criterion_11():
    rng = np.random.default_rng(SEED + 11)
    total = ambiguous = 0
    for spec in CLASSIFICATION:
        g = named_graph(spec)
        for M in g.nodes:
            for n in g.nodes:
                if n == M:
                    continue
                verdict, _, _ = numerical_verdict(g, M, {n}, projection_inputs=True, rng=rng)
                total += 1
                ambiguous += verdict.verdict == "ambiguous"
    return ambiguous == total, f"{ambiguous}/{total} queries ambiguous"


def brute_force_connectivity(g: CommGraph) -> int:
    """Smallest node set whose removal leaves >= 2 nodes not strongly connected; m-1 if none."""
    for k in range(g.m - 1):
        for cut in itertools.combinations(g.nodes, k):
            if g.m - k >= 2 and not g.is_strongly_connected(removed=cut):
                return k
    return g.m - 1


def suite_small_graphs() -> list[tuple[str, CommGraph]]:
    out = [(s, named_graph(s)) for s in ("ring:4", "ring:6", "hypercube:2", "hypercube:3", "clique:3",
                                         "clique:4", "star:5", "fig2a", "fig2b")]
    out += [(f"random{k}", g) for k, g in enumerate(random_suite_graphs())]
    return [(name, g) for name, g in out if g.m <= 8]


@_timed(12, "connectivity oracle")
def criterion_12():
    graphs = suite_small_graphs()
    for name, g in graphs:
        fast, slow = vertex_connectivity(g), brute_force_connectivity(g)
        if fast != slow:
            return False, f"{name}: max-flow {fast} vs brute force {slow}"
    return True, f"{len(graphs)} graphs agree"


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12)


def run_all(only=None) -> list[CriterionResult]:
    return [c() for c in CRITERIA if only is None or c.number in only]
