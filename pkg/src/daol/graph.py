"""Communication topologies, doubly stochastic mixing matrices and
graph-theoretic quantities (connectivity, disjoint paths, mixing rate).

Edge convention: ``(i, j)`` means node ``i`` sends its parameter to node
``j``.  The mixing matrix is indexed the same way, so ``A[j, i]`` is the
weight node ``i`` puts on the parameter received from ``j`` and the
consensus step is ``W_next = W @ A`` when nodes are columns of ``W``.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SUM_TOL = 1e-12

TOPOLOGIES = ("ring", "grid", "hypercube", "clique", "star", "path", "custom")
SCHEMES = ("uniform_maxdeg", "metropolis")


@dataclass(frozen=True)
class CommGraph:
    """Directed communication graph on nodes ``0..m-1``."""

    m: int
    edges: frozenset
    directed: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"node count must be positive, got {self.m}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"edge ({i}, {j}) references a node outside 0..{self.m - 1}")
            if i == j:
                raise ValueError(f"self-loop ({i}, {i}) is not allowed")
        if not self.directed:
            missing = [(j, i) for i, j in edges if (j, i) not in edges]
            if missing:
                raise ValueError(f"undirected graph is missing reverse edges, e.g. {missing[0]}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int]], directed: bool = True) -> "CommGraph":
        """Build a graph; for ``directed=False`` each pair is added both ways."""
        edges = set(map(tuple, edges))
        if not directed:
            edges |= {(j, i) for i, j in edges}
        return cls(m, frozenset(edges), directed)

    @property
    def nodes(self) -> range:
        return range(self.m)

    def in_neighbors(self, j: int) -> set[int]:
        """N(j): nodes that send to ``j``."""
        return {i for i, k in self.edges if k == j}

    def out_neighbors(self, i: int) -> set[int]:
        return {k for j, k in self.edges if j == i}

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edges

    def is_symmetric(self) -> bool:
        return all((j, i) in self.edges for i, j in self.edges)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.m, self.m), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj

    def degrees(self) -> np.ndarray:
        """In-degrees (equal to out-degrees on symmetric graphs)."""
        return self.adjacency().sum(axis=0)

    def is_strongly_connected(self, removed: Iterable[int] = ()) -> bool:
        keep = [v for v in self.nodes if v not in set(removed)]
        if len(keep) <= 1:
            return True
        keep_set = set(keep)
        out = {v: [] for v in keep}
        rev = {v: [] for v in keep}
        for i, j in self.edges:
            if i in keep_set and j in keep_set:
                out[i].append(j)
                rev[j].append(i)
        return all(len(_reach(keep[0], adj)) == len(keep) for adj in (out, rev))


def _reach(start, adj) -> set:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def build_topology(kind: str, m: int, *, rows: int | None = None, cols: int | None = None,
                   d: int | None = None, edges: Iterable[tuple[int, int]] | None = None,
                   directed: bool = True, hub: int = 0) -> CommGraph:
    """Construct a named topology.

    ``ring``, ``grid``, ``hypercube``, ``clique``, ``star`` and ``path`` give
    connected undirected graphs; ``custom`` accepts any directed edge list.
    """
    if m < 2:
        raise ValueError(f"topologies need at least 2 nodes, got m={m}")
    if kind == "clique":
        pairs = itertools.permutations(range(m), 2)
    elif kind == "ring":
        pairs = [(i, (i + 1) % m) for i in range(m)] if m > 2 else [(0, 1)]
    elif kind == "path":
        pairs = [(i, i + 1) for i in range(m - 1)]
    elif kind == "star":
        if not 0 <= hub < m:
            raise ValueError(f"hub {hub} outside 0..{m - 1}")
        pairs = [(hub, v) for v in range(m) if v != hub]
    elif kind == "grid":
        if rows is None and cols is None:
            rows = int(round(np.sqrt(m)))
        if rows is None:
            rows = m // cols
        if cols is None:
            cols = m // rows
        if rows * cols != m:
            raise ValueError(f"grid {rows}x{cols} does not have {m} nodes")
        pairs = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    pairs.append((v, v + 1))
                if r + 1 < rows:
                    pairs.append((v, v + cols))
    elif kind == "hypercube":
        if d is None:
            d = int(m).bit_length() - 1
        if 2 ** d != m:
            raise ValueError(f"hypercube of dimension {d} has {2 ** d} nodes, not {m}")
        pairs = [(v, v ^ (1 << b)) for v in range(m) for b in range(d)]
    elif kind == "custom":
        if edges is None:
            raise ValueError("custom topology needs an edge list")
        return CommGraph.from_edges(m, edges, directed=directed)
    else:
        raise ValueError(f"unknown topology {kind!r}; expected one of {TOPOLOGIES}")
    return CommGraph.from_edges(m, pairs, directed=False)


def fig2a_graph() -> CommGraph:
    """Three-node example where M=0 hears from both P=1 and Q=2.

    Minimal strongly connected edge set with P->M and Q->M (a star with hub M).
    """
    return CommGraph.from_edges(3, [(1, 0), (2, 0), (0, 1), (0, 2)], directed=True)


def fig2b_graph() -> CommGraph:
    """Three-node example where Q=2 only reaches M=0 through P=1.

    Edges Q->P and P->M, closed into a cycle by M->Q so the graph admits a
    doubly stochastic weighting.
    """
    return CommGraph.from_edges(3, [(2, 1), (1, 0), (0, 2)], directed=True)


# ---------------------------------------------------------------------------
# Mixing matrices


@dataclass(frozen=True)
class MixingMatrix:
    """Doubly stochastic weights supported on a communication graph.

    ``beta`` is the second largest singular value of ``A`` and ``c_mix`` the
    matching geometric prefactor ``sqrt(m)``.
    """

    A: np.ndarray
    graph: CommGraph
    beta: float = field(init=False)
    c_mix: float = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        m = self.graph.m
        if A.shape != (m, m):
            raise ValueError(f"matrix shape {A.shape} does not match {m} nodes")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ValueError("mixing weights must be finite and non-negative")
        row_err = np.max(np.abs(A.sum(axis=1) - 1.0))
        col_err = np.max(np.abs(A.sum(axis=0) - 1.0))
        if row_err > SUM_TOL or col_err > SUM_TOL:
            raise ValueError(f"matrix is not doubly stochastic (row err {row_err:.2e}, col err {col_err:.2e})")
        if np.any(np.diag(A) <= 0):
            raise ValueError("diagonal weights must be strictly positive")
        offdiag = (A > 0) & ~np.eye(m, dtype=bool)
        stray = offdiag & ~self.graph.adjacency()
        if stray.any():
            j, i = map(int, np.argwhere(stray)[0])
            raise ValueError(f"weight A[{j},{i}] is nonzero but ({j},{i}) is not an edge")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "beta", _second_singular_value(A))
        object.__setattr__(self, "c_mix", float(np.sqrt(m)))

    @property
    def m(self) -> int:
        return self.graph.m

    @classmethod
    def from_matrix(cls, A, graph: CommGraph | None = None) -> "MixingMatrix":
        """Wrap a matrix, inferring the graph from its off-diagonal support."""
        A = np.asarray(A, dtype=float)
        if graph is None:
            m = A.shape[0]
            support = [(j, i) for j in range(m) for i in range(m) if j != i and A[j, i] != 0]
            graph = CommGraph.from_edges(m, support, directed=True)
        return cls(A, graph)


def _second_singular_value(A: np.ndarray) -> float:
    if A.shape[0] == 1:
        return 0.0
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[1])


def make_doubly_stochastic(g: CommGraph, scheme: str = "uniform_maxdeg") -> MixingMatrix:
    """Deterministic symmetric weights on a connected symmetric graph."""
    if not g.is_symmetric():
        raise ValueError(f"scheme {scheme!r} needs a symmetric graph")
    if not g.is_strongly_connected():
        raise ValueError("graph is disconnected; the mixing matrix would be reducible")
    deg = g.degrees()
    A = np.zeros((g.m, g.m))
    if scheme == "uniform_maxdeg":
        w = 1.0 / (deg.max() + 1)
        for i, j in g.edges:
            A[i, j] = w
    elif scheme == "metropolis":
        for i, j in g.edges:
            A[i, j] = 1.0 / (1 + max(deg[i], deg[j]))
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}; expected one of {SCHEMES}")
    np.fill_diagonal(A, 1.0 - A.sum(axis=0))
    return MixingMatrix(A, g)


def sinkhorn(K: np.ndarray, max_iter: int = 500, tol: float = 1e-12) -> np.ndarray:
    """Alternate row/column scaling until the matrix is doubly stochastic.

    Raises ``RuntimeError`` if the row sums are not within ``tol`` after
    ``max_iter`` sweeps.
    """
    K = np.array(K, dtype=float)
    for _ in range(max_iter):
        K /= K.sum(axis=1, keepdims=True)
        K /= K.sum(axis=0, keepdims=True)
        if np.max(np.abs(K.sum(axis=1) - 1.0)) <= tol:
            return K
    raise RuntimeError(f"Sinkhorn scaling did not converge in {max_iter} iterations")


def random_generic_weights(g: CommGraph, rng: np.random.Generator | int | None = None,
                           low: float = 0.1, high: float = 1.0, max_iter: int = 500,
                           attempts: int = 10) -> MixingMatrix:
    """Random doubly stochastic weights on the support of ``g`` plus the diagonal.

    Used wherever a statement holds for "almost any" choice of weights.
    The graph must be strongly connected.
    """
    if not g.is_strongly_connected():
        raise ValueError("random doubly stochastic weights need a strongly connected graph")
    rng = np.random.default_rng(rng)
    support = g.adjacency() | np.eye(g.m, dtype=bool)
    for _ in range(attempts):
        K = np.where(support, rng.uniform(low, high, size=(g.m, g.m)), 0.0)
        try:
            A = sinkhorn(K, max_iter=max_iter)
        except RuntimeError:
            continue
        # Final column pass leaves columns exact; re-check rows against the invariant.
        return MixingMatrix(A, g)
    raise RuntimeError(f"could not produce generic weights after {attempts} draws")


@dataclass(frozen=True)
class MixingConstants:
    beta: float
    c_mix: float
    empirical_prefactor: float
    deviations: np.ndarray  # deviations[k-1] = max_i sum_j |A^k_ji - 1/m|

    def __iter__(self):
        return iter((self.beta, self.c_mix))


def column_deviations(A: np.ndarray, kmax: int = 50) -> np.ndarray:
    """``max_i sum_j |(A^k)_ji - 1/m|`` for ``k = 1..kmax`` by repeated multiplication."""
    m = A.shape[0]
    out = np.empty(kmax)
    P = np.eye(m)
    for k in range(kmax):
        P = P @ A
        out[k] = np.max(np.abs(P - 1.0 / m).sum(axis=0))
    return out


def mixing_constants(mm: MixingMatrix, kmax: int = 50) -> MixingConstants:
    """Spectral mixing rate and prefactor, checked against explicit powers of A."""
    beta, c_mix = mm.beta, mm.c_mix
    if beta >= 1.0 - 1e-12:
        raise ValueError(
            f"second singular value is {beta:.6g} >= 1: chain is reducible or periodic "
            "(no geometric mixing bound)"
        )
    dev = column_deviations(mm.A, kmax)
    bound = c_mix * beta ** np.arange(1, kmax + 1)
    violated = dev > bound + 1e-12
    if violated.any():
        k = int(np.argmax(violated)) + 1
        raise RuntimeError(f"geometric mixing bound fails at k={k}: {dev[k - 1]:.3e} > {bound[k - 1]:.3e}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dev > 0, dev / beta ** np.arange(1, kmax + 1), 0.0)
    ratios = ratios[np.isfinite(ratios)]
    prefactor = float(ratios.max()) if ratios.size else 0.0
    return MixingConstants(beta, c_mix, prefactor, dev)


# ---------------------------------------------------------------------------
# Connectivity and disjoint paths


class _FlowNetwork:
    """Edmonds-Karp max-flow on a small integer-capacity network."""

    def __init__(self, n: int):
        self.cap = [dict() for _ in range(n)]

    def add(self, u: int, v: int, c: int):
        self.cap[u][v] = self.cap[u].get(v, 0) + c
        self.cap[v].setdefault(u, 0)

    def max_flow(self, s: int, t: int) -> tuple[int, list[dict]]:
        residual = [dict(d) for d in self.cap]
        total = 0
        while True:
            parent = {s: None}
            queue = deque([s])
            while queue and t not in parent:
                u = queue.popleft()
                for v, c in residual[u].items():
                    if c > 0 and v not in parent:
                        parent[v] = u
                        queue.append(v)
            if t not in parent:
                break
            path = []
            v = t
            while parent[v] is not None:
                path.append((parent[v], v))
                v = parent[v]
            push = min(residual[u][v] for u, v in path)
            for u, v in path:
                residual[u][v] -= push
                residual[v][u] += push
            total += push
        flow = [{v: self.cap[u][v] - residual[u][v] for v in self.cap[u] if self.cap[u][v] > 0}
                for u in range(len(self.cap))]
        return total, flow


def _split_in(v):
    return 2 * v


def _split_out(v):
    return 2 * v + 1


def local_connectivity(g: CommGraph, s: int, t: int) -> int:
    """Maximum number of internally node-disjoint s->t paths (s, t nonadjacent)."""
    big = g.m
    net = _FlowNetwork(2 * g.m)
    for v in g.nodes:
        net.add(_split_in(v), _split_out(v), big if v in (s, t) else 1)
    for i, j in g.edges:
        net.add(_split_out(i), _split_in(j), big)
    value, _ = net.max_flow(_split_out(s), _split_in(t))
    return value


def vertex_connectivity(g: CommGraph) -> int:
    """Size of the smallest vertex cut, minimised over nonadjacent ordered pairs.

    A graph in which every ordered pair is adjacent gets ``m - 1``.
    """
    if g.m < 2:
        raise ValueError("vertex connectivity needs at least 2 nodes")
    best = g.m - 1
    for s, t in itertools.permutations(g.nodes, 2):
        if (s, t) in g.edges:
            continue
        best = min(best, local_connectivity(g, s, t))
        if best == 0:
            break
    return best


@dataclass(frozen=True)
class Linking:
    source_set: frozenset
    target_set: frozenset
    count: int
    witness_paths: tuple

    def __post_init__(self):
        if self.count != len(self.witness_paths):
            raise ValueError("count must equal the number of witness paths")
        used = set()
        for p in self.witness_paths:
            if p[0] not in self.source_set or p[-1] not in self.target_set:
                raise ValueError(f"path {p} does not run from the source to the target set")
            if used & set(p):
                raise ValueError(f"path {p} shares nodes with another witness path")
            used |= set(p)


def max_disjoint_paths(g: CommGraph, X: Iterable[int], Y: Iterable[int]) -> Linking:
    """Maximum set of node-disjoint paths from ``X`` to ``Y`` (a max r-linking).

    Nodes in both sets count as length-zero paths.
    """
    X, Y = frozenset(X), frozenset(Y)
    if not X or not Y:
        raise ValueError("source and target sets must be nonempty")
    if any(not 0 <= v < g.m for v in X | Y):
        raise ValueError("node sets reference nodes outside the graph")
    source, sink = 2 * g.m, 2 * g.m + 1
    net = _FlowNetwork(2 * g.m + 2)
    for v in g.nodes:
        net.add(_split_in(v), _split_out(v), 1)
    for i, j in g.edges:
        net.add(_split_out(i), _split_in(j), 1)
    for x in X:
        net.add(source, _split_in(x), 1)
    for y in Y:
        net.add(_split_out(y), sink, 1)
    value, flow = net.max_flow(source, sink)

    paths = []
    for x in sorted(X):
        if flow[source].get(_split_in(x), 0) == 0:
            continue
        path = [x]
        v = x
        while True:
            out = flow[_split_out(v)]
            if out.get(sink, 0) == 1:
                break
            v = next(w // 2 for w, f in out.items() if f == 1 and w != sink)
            path.append(v)
        paths.append(tuple(path))
    return Linking(X, Y, value, tuple(paths))


# ---------------------------------------------------------------------------
# Plain-text exchange formats


def write_edge_list(path, g: CommGraph, mixing: MixingMatrix | None = None) -> None:
    """``m <count> directed <0|1>`` header, then ``i j [weight]`` per directed edge."""
    lines = [f"m {g.m} directed {int(g.directed)}"]
    for i, j in sorted(g.edges):
        if mixing is None:
            lines.append(f"{i} {j}")
        else:
            lines.append(f"{i} {j} {float(mixing.A[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_edge_list(path) -> tuple[CommGraph, dict | None]:
    """Parse an edge-list file; returns the graph and an ``{(i, j): w}`` map if weighted."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty edge list")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "m" or head[2] != "directed" or head[3] not in ("0", "1"):
        raise ValueError(f"{path}:1: expected 'm <count> directed <0|1>', got {lines[0]!r}")
    m, directed = int(head[1]), head[3] == "1"
    edges, weights = [], {}
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected 'i j [weight]', got {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        edges.append((i, j))
        if len(parts) == 3:
            weights[(i, j)] = float(parts[2])
    g = CommGraph.from_edges(m, edges, directed=directed)
    return g, (weights or None)


def write_matrix(path, A: np.ndarray) -> None:
    """Dense rows of decimal floats, one row per line."""
    np.savetxt(path, np.asarray(A), fmt="%.17g", delimiter=" ")


def read_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, ndmin=2))


def named_graph(spec: str) -> CommGraph:
    """Parse short topology names such as ``ring:6``, ``grid:3x3``, ``hypercube:3``,
    ``clique:4``, ``star:5``, ``fig2a`` or ``fig2b``."""
    spec = spec.strip().lower()
    if spec == "fig2a":
        return fig2a_graph()
    if spec == "fig2b":
        return fig2b_graph()
    kind, _, arg = spec.partition(":")
    if not arg:
        raise ValueError(f"topology {spec!r} needs a size, e.g. {kind}:4")
    if kind == "grid":
        r, _, c = arg.partition("x")
        r, c = int(r), int(c or r)
        return build_topology("grid", r * c, rows=r, cols=c)
    if kind == "hypercube":
        d = int(arg)
        return build_topology("hypercube", 2 ** d, d=d)
    return build_topology(kind, int(arg))


__all__: Sequence[str] = (
    "CommGraph", "MixingMatrix", "MixingConstants", "Linking",
    "build_topology", "make_doubly_stochastic", "random_generic_weights", "sinkhorn",
    "mixing_constants", "column_deviations", "vertex_connectivity", "local_connectivity",
    "max_disjoint_paths", "fig2a_graph", "fig2b_graph", "named_graph",
    "write_edge_list", "read_edge_list", "write_matrix", "read_matrix",
)
