"""Which subgradients can a curious node recover from what it receives?

Two independent routes answer the question for an observer ``M`` and a
target set ``N``:

* structural: the neighbourhood conditions on the communication graph
  (every target sends to ``M``; every outside sender into a target also
  sends to ``M``);
* numerical: assemble the finite-horizon linear map from unknown inputs to
  the parameters ``M`` receives and test, by singular values, whether the
  target inputs are pinned down.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .graph import CommGraph, MixingMatrix, max_disjoint_paths, random_generic_weights, vertex_connectivity

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-8


def observed_nodes(g: CommGraph, M: int) -> list[int]:
    """``{M} | N(M)``: the columns of the parameter matrix that ``M`` sees."""
    return sorted(g.in_neighbors(M) | {M})


def full_reconstruction_condition(g: CommGraph, M: int) -> bool:
    """True iff every other node sends its parameter to ``M``."""
    if not 0 <= M < g.m:
        raise ValueError(f"node {M} outside 0..{g.m - 1}")
    return all((j, M) in g.edges for j in g.nodes if j != M)


class PartialCondition(NamedTuple):
    holds: bool
    failed: str | None        # "i", "ii" or None
    cond_i: bool
    cond_ii: bool
    offenders_i: tuple        # targets that do not send to M
    offenders_ii: tuple       # outside senders into targets that M cannot see


def partial_reconstruction_condition(g: CommGraph, M: int, targets: Iterable[int]) -> PartialCondition:
    """Structural test for recovering the subgradients of ``targets`` at ``M``.

    (i) every target sends to ``M``; (ii) every node outside
    ``targets | {M}`` that sends to a target also sends to ``M``.
    """
    targets = frozenset(targets)
    if not targets:
        raise ValueError("target set must be nonempty")
    if M in targets:
        raise ValueError("the observer cannot be one of its own targets")
    if any(not 0 <= v < g.m for v in targets | {M}):
        raise ValueError("nodes outside the graph")
    bad_i = tuple(sorted(n for n in targets if (n, M) not in g.edges))
    bad_ii = tuple(sorted(
        u for u in g.nodes
        if u not in targets and u != M
        and any((u, n) in g.edges for n in targets)
        and (u, M) not in g.edges
    ))
    cond_i, cond_ii = not bad_i, not bad_ii
    failed = None if cond_i and cond_ii else ("i" if not cond_i else "ii")
    return PartialCondition(cond_i and cond_ii, failed, cond_i, cond_ii, bad_i, bad_ii)


# ---------------------------------------------------------------------------
# Finite-horizon numerical oracle


@dataclass(frozen=True)
class SystemSpec:
    """Scalar-state model of the algorithm as seen by observer ``M``.

    Inputs per round are the scaled subgradients of every node and, with
    ``projection_inputs``, an independent projection residual per node.
    """

    mixing: MixingMatrix
    M: int
    targets: frozenset
    projection_inputs: bool = False

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(self.targets))
        if self.M in self.targets:
            raise ValueError("the observer cannot be one of its own targets")
        if not self.targets:
            raise ValueError("target set must be nonempty")
        if any(not 0 <= v < self.mixing.m for v in self.targets | {self.M}):
            raise ValueError("nodes outside the graph")

    @property
    def m(self) -> int:
        return self.mixing.m

    @property
    def observed(self) -> list[int]:
        return observed_nodes(self.mixing.graph, self.M)

    def input_labels(self, horizon: int) -> list[tuple[str, int, int]]:
        """``(kind, node, round)`` for every column of the input-output map."""
        kinds = ("g", "r") if self.projection_inputs else ("g",)
        return [(k, i, s) for s in range(1, horizon + 1) for k in kinds for i in range(self.m)]

    def target_columns(self, horizon: int) -> np.ndarray:
        labels = self.input_labels(horizon)
        return np.array([k == "g" and i in self.targets for k, i, _ in labels])


def input_output_map(spec: SystemSpec, horizon: int) -> np.ndarray:
    """Matrix ``Phi`` with ``vec(Y_2..Y_{h+1}) = Phi @ inputs`` when ``W_1 = 0``.

    Rows are ordered (round, observed node); columns follow
    :meth:`SystemSpec.input_labels`.  The block for output round ``t + 1``
    and input round ``s <= t`` is ``(A^(t-s))[:, observed]`` transposed.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    A, obs, m = spec.mixing.A, spec.observed, spec.m
    copies = 2 if spec.projection_inputs else 1
    powers = [np.eye(m)]
    for _ in range(horizon - 1):
        powers.append(powers[-1] @ A)
    k = len(obs)
    Phi = np.zeros((horizon * k, horizon * copies * m))
    for t in range(1, horizon + 1):
        for s in range(1, t + 1):
            block = powers[t - s][:, obs].T  # (k, m)
            col0 = (s - 1) * copies * m
            for c in range(copies):
                Phi[(t - 1) * k:t * k, col0 + c * m:col0 + (c + 1) * m] = block
    return Phi


@dataclass
class InvertibilityVerdict:
    verdict: str                   # "unique", "ambiguous" or "indeterminate"
    rank_full: int
    rank_others: int
    needed: int                    # |targets| * horizon
    horizon: int
    witness: np.ndarray | None = None   # null vector of Phi, largest target entry = 1
    margin: float = np.inf          # distance of the closest singular value from the threshold, in decades

    @property
    def unique(self) -> bool:
        return self.verdict == "unique"


def _rank(s: np.ndarray, threshold: float) -> tuple[int, float]:
    rank = int(np.sum(s > threshold))
    if s.size == 0:
        return rank, np.inf
    margin = float(np.min(np.abs(np.log10(np.maximum(s, 1e-300)) - np.log10(threshold))))
    return rank, margin


def finite_horizon_invertibility(spec: SystemSpec, horizon: int | None = None,
                                 rtol: float = RANK_RTOL) -> InvertibilityVerdict:
    """Decide whether ``horizon`` rounds of observations fix the target inputs.

    Unique iff ``rank(Phi) == rank(Phi without target columns) + |N| * horizon``,
    with singular values counted above ``rtol * sigma_max(Phi)``.  Any
    singular value within a factor 10 of the threshold gives
    ``indeterminate`` (callers should redraw the weights).
    """
    if horizon is None:
        horizon = 2 * spec.m + 2
    Phi = input_output_map(spec, horizon)
    target_cols = spec.target_columns(horizon)
    U, s, Vt = np.linalg.svd(Phi, full_matrices=True)
    threshold = rtol * (s[0] if s.size else 1.0)
    rank_full, margin_full = _rank(s, threshold)
    s_other = np.linalg.svd(Phi[:, ~target_cols], compute_uv=False)
    rank_other, margin_other = _rank(s_other, threshold)
    needed = int(target_cols.sum())
    margin = min(margin_full, margin_other)
    if margin < 1.0:
        return InvertibilityVerdict("indeterminate", rank_full, rank_other, needed, horizon, None, margin)
    if rank_full == rank_other + needed:
        return InvertibilityVerdict("unique", rank_full, rank_other, needed, horizon, None, margin)
    null = Vt[rank_full:].T            # orthonormal basis of the numerical null space
    _, _, vt = np.linalg.svd(null[target_cols], full_matrices=False)
    witness = null @ vt[0]
    witness /= witness[target_cols][np.argmax(np.abs(witness[target_cols]))]
    return InvertibilityVerdict("ambiguous", rank_full, rank_other, needed, horizon, witness, margin)


def numerical_verdict(g: CommGraph, M: int, targets: Iterable[int], *, projection_inputs: bool = False,
                      horizon: int | None = None, rng=None, resamples: int = 1,
                      rtol: float = RANK_RTOL) -> tuple[InvertibilityVerdict, MixingMatrix, int]:
    """Run the oracle on random generic weights, redrawing on ``indeterminate``.

    Returns the verdict, the weights it was computed with and the number of
    redraws used.
    """
    rng = np.random.default_rng(rng)
    targets = frozenset(targets)
    for attempt in range(resamples + 1):
        mixing = random_generic_weights(g, rng)
        spec = SystemSpec(mixing, M, targets, projection_inputs)
        verdict = finite_horizon_invertibility(spec, horizon, rtol)
        if verdict.verdict != "indeterminate":
            return verdict, mixing, attempt
        logger.info("indeterminate rank decision for M=%d targets=%s; redrawing weights", M, sorted(targets))
    return verdict, mixing, resamples


def path_count_rank(g: CommGraph, M: int, sources: Iterable[int] | None = None) -> int:
    """Max number of node-disjoint paths from ``sources`` (all nodes by default) to ``{M} | N(M)``."""
    sources = g.nodes if sources is None else sources
    return max_disjoint_paths(g, sources, observed_nodes(g, M)).count


def rank_growth(spec: SystemSpec, horizon: int, rtol: float = RANK_RTOL) -> int:
    """``rank(Phi_h) - rank(Phi_{h-1})``: the per-round rank, which settles at the
    generic rank of the transfer matrix."""
    def rank(h):
        s = np.linalg.svd(input_output_map(spec, h), compute_uv=False)
        return int(np.sum(s > rtol * s[0]))
    return rank(horizon) - rank(horizon - 1)


# ---------------------------------------------------------------------------
# Network-level report


@dataclass
class QueryResult:
    M: int
    targets: tuple
    cond_i: bool
    cond_ii: bool
    structural: bool
    numerical: str | None = None
    resamples: int = 0

    @property
    def agrees(self) -> bool | None:
        if self.numerical is None:
            return None
        return self.structural == (self.numerical == "unique")


@dataclass
class PrivacyReport:
    m: int
    kappa: int
    max_in_degree: int
    sufficient_condition: bool      # kappa > 1 and every |N(j)| < m - 1
    privacy_preserving: bool
    queries: list = field(default_factory=list)
    full_reconstruction: list = field(default_factory=list)   # observers that hear from everyone
    exhaustive_checked: bool = False

    @property
    def sufficient_condition_contradicted(self) -> bool:
        """The connectivity condition holds yet some query is reconstructable.

        The connectivity argument assumes every unseen in-neighbour of a
        target reaches it only through the observer; a node feeding both the
        target and the observer breaks that, so this can happen.
        """
        return self.sufficient_condition and not self.privacy_preserving

    @property
    def exposed_observers(self) -> list[int]:
        return sorted({q.M for q in self.queries if q.structural})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["M", "N_set", "cond_i", "cond_ii", "structural", "numerical", "kappa", "verdict"])
        verdict = "privacy-preserving" if self.privacy_preserving else "not-privacy-preserving"
        for q in self.queries:
            w.writerow([q.M, " ".join(map(str, q.targets)), int(q.cond_i), int(q.cond_ii),
                        "reconstructable" if q.structural else "not-reconstructable",
                        q.numerical if q.numerical is not None else "", self.kappa, verdict])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"nodes: {self.m}",
            f"vertex connectivity: {self.kappa}",
            f"max in-degree: {self.max_in_degree}",
            f"connectivity sufficient condition (kappa > 1 and all in-degrees < m-1): {self.sufficient_condition}",
            f"verdict: {'privacy-preserving' if self.privacy_preserving else 'NOT privacy-preserving'}",
        ]
        if self.full_reconstruction:
            lines.append(f"observers that can reconstruct every other node: {self.full_reconstruction}")
        if self.exposed_observers:
            lines.append(f"observers able to reconstruct some target: {self.exposed_observers}")
        if self.sufficient_condition_contradicted:
            lines.append("warning: the connectivity sufficient condition holds but reconstructable queries exist")
        lines.append("")
        lines.append(f"{'M':>3}  {'N':<8} {'i':>2} {'ii':>3}  {'structural':<20} numerical")
        for q in self.queries:
            lines.append(f"{q.M:>3}  {' '.join(map(str, q.targets)):<8} {int(q.cond_i):>2} {int(q.cond_ii):>3}  "
                         f"{'reconstructable' if q.structural else 'not reconstructable':<20} {q.numerical or '-'}")
        return "\n".join(lines) + "\n"


def exhaustive_scan(g: CommGraph) -> bool:
    """True iff no observer and no nonempty target set meet the structural conditions."""
    for M in g.nodes:
        others = [v for v in g.nodes if v != M]
        for r in range(1, len(others) + 1):
            for targets in itertools.combinations(others, r):
                if partial_reconstruction_condition(g, M, targets).holds:
                    return False
    return True


def is_privacy_preserving(g: CommGraph, *, numerical: bool = False, rng=None,
                          exhaustive_max_m: int = 6, horizon: int | None = None) -> PrivacyReport:
    """Scan every observer against every single target.

    A target set meets the conditions only if each of its singletons does,
    so singleton queries decide the network verdict.  For ``m <=
    exhaustive_max_m`` the full subset scan is run as a cross-check.  With
    ``numerical=True`` every query is also run through the numerical oracle
    on random generic weights.
    """
    if not g.is_strongly_connected():
        raise ValueError("privacy analysis needs a (strongly) connected graph")
    rng = np.random.default_rng(rng)
    kappa = vertex_connectivity(g)
    indeg = int(g.degrees().max())
    sufficient = kappa > 1 and indeg < g.m - 1
    queries = []
    for M in g.nodes:
        for n in g.nodes:
            if n == M:
                continue
            cond = partial_reconstruction_condition(g, M, {n})
            q = QueryResult(M, (n,), cond.cond_i, cond.cond_ii, cond.holds)
            if numerical:
                verdict, _, used = numerical_verdict(g, M, {n}, horizon=horizon, rng=rng)
                q.numerical, q.resamples = verdict.verdict, used
            queries.append(q)
    preserving = not any(q.structural for q in queries)
    full = [M for M in g.nodes if full_reconstruction_condition(g, M)]
    report = PrivacyReport(g.m, kappa, indeg, sufficient, preserving, queries, full)
    if g.m <= exhaustive_max_m:
        if exhaustive_scan(g) != preserving:
            raise AssertionError("singleton scan disagrees with the exhaustive subset scan")
        report.exhaustive_checked = True
    if report.sufficient_condition_contradicted:
        logger.warning("kappa=%d and max in-degree %d < m-1, yet observers %s can reconstruct a target",
                       kappa, indeg, report.exposed_observers)
    return report


def random_strongly_connected_digraph(m: int, rng, p: float | None = None, max_tries: int = 1000) -> CommGraph:
    """Erdos-Renyi digraph conditioned on strong connectivity."""
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        prob = rng.uniform(0.3, 0.8) if p is None else p
        mask = rng.uniform(size=(m, m)) < prob
        edges = [(i, j) for i in range(m) for j in range(m) if i != j and mask[i, j]]
        g = CommGraph.from_edges(m, edges, directed=True)
        if g.is_strongly_connected():
            return g
    raise RuntimeError(f"no strongly connected digraph on {m} nodes after {max_tries} draws")
