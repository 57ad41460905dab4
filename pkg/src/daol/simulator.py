"""Distributed autonomous online learning: runner, regret and bound checks."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .datasets import Dataset, round_robin
from .graph import MixingMatrix
from .losses import FeasibleSet, LossSpec, loss_value, project, step_size, subgradient

logger = logging.getLogger(__name__)


@dataclass
class SimConfig:
    mixing: MixingMatrix
    loss: LossSpec
    domain: FeasibleSet
    T: int
    data: Dataset
    assignment: np.ndarray | None = None  # (T, m) example indices; round-robin by default
    w_init: np.ndarray | None = None
    seed: int = 0
    reference_node: int = 0
    eta: Callable[[int], float] | None = None  # defaults to step_size(loss.lam, t)

    def __post_init__(self):
        m = self.mixing.m
        if self.T < 1:
            raise ValueError(f"need at least one round, got T={self.T}")
        if not 0 <= self.reference_node < m:
            raise ValueError(f"reference node {self.reference_node} outside 0..{m - 1}")
        if self.assignment is None:
            self.assignment = round_robin(self.data, m, self.T)
        self.assignment = np.asarray(self.assignment)
        if self.assignment.shape[1] != m:
            raise ValueError(f"assignment has {self.assignment.shape[1]} columns for {m} nodes")
        if self.assignment.shape[0] < self.T:
            raise ValueError(f"data stream exhausted: {self.assignment.shape[0]} rounds available, T={self.T}")
        if self.w_init is None:
            self.w_init = np.zeros(self.data.dim)
        self.w_init = np.asarray(self.w_init, dtype=float)
        if self.w_init.shape != (self.data.dim,):
            raise ValueError(f"w_init has shape {self.w_init.shape}, data has dimension {self.data.dim}")

    @property
    def m(self) -> int:
        return self.mixing.m

    def step(self, t: int) -> float:
        return self.eta(t) if self.eta is not None else step_size(self.loss.lam, t)


@dataclass
class SimTrace:
    """Full per-round record.

    Index ``t - 1`` holds round ``t``: ``W[t-1] = W_t`` for ``t = 1..T+1``,
    ``G[t-1] = G_t`` and ``eta[t-1] = eta_t`` for ``t = 1..T``, and
    ``R[t-1] = R_t`` for ``t = 1..T+1`` with ``R_1 = 0``.  Node parameters are
    rows, so ``W[t-1][i]`` is ``w_t^i``.
    """

    W: np.ndarray
    G: np.ndarray
    R: np.ndarray
    eta: np.ndarray
    A: np.ndarray
    loss: LossSpec
    domain: FeasibleSet
    data: Dataset
    assignment: np.ndarray
    node_loss: np.ndarray  # cumulative loss of each node on its own examples
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]

    @property
    def W_hat(self) -> np.ndarray:
        """Unprojected iterates; ``W_hat[t-1] = W_hat_t`` (``W_hat_1 = W_1``)."""
        return self.W - self.R

    def batch(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.assignment[t - 1]
        return self.data.rows(idx), self.data.y[idx]

    def examples(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (T, m, n) features and (T, m) labels actually consumed."""
        idx = self.assignment[: self.T]
        X = self.data.rows(idx.ravel()).reshape(self.T, self.m, -1)
        return X, self.data.y[idx]


def run_distributed(cfg: SimConfig, callback: Callable[[int, np.ndarray], None] | None = None) -> SimTrace:
    """Execute the distributed online subgradient algorithm for ``cfg.T`` rounds.

    Per round: local subgradients at the current parameters, one synchronous
    exchange weighted by ``A``, a local step and a projection.  All nodes run
    in lockstep as one vectorised update, so the result does not depend on
    any scheduling.  ``callback(t, W_t)`` is invoked before each round and
    once after the last one.
    """
    m, n, T = cfg.m, cfg.data.dim, cfg.T
    A_T = cfg.mixing.A.T
    W = np.empty((T + 1, m, n))
    G = np.empty((T, m, n))
    R = np.zeros((T + 1, m, n))
    eta = np.empty(T)
    node_loss = np.zeros(m)
    W[0] = cfg.w_init
    started = time.perf_counter()
    for t in range(1, T + 1):
        Wt = W[t - 1]
        if callback is not None:
            callback(t, Wt)
        idx = cfg.assignment[t - 1]
        X, y = cfg.data.rows(idx), cfg.data.y[idx]
        if X.shape[1] != n:
            raise ValueError(f"round {t}: examples have dimension {X.shape[1]}, expected {n}")
        node_loss += loss_value(cfg.loss, Wt, X, y)
        G[t - 1] = subgradient(cfg.loss, Wt, X, y)
        eta[t - 1] = cfg.step(t)
        W_hat = A_T @ Wt - eta[t - 1] * G[t - 1]
        W[t] = project(cfg.domain, W_hat)
        R[t] = W[t] - W_hat
    if callback is not None:
        callback(T + 1, W[T])
    meta = {"wall_clock_s": time.perf_counter() - started, "seed": cfg.seed, "m": m, "T": T, "dim": n}
    return SimTrace(W, G, R, eta, np.array(cfg.mixing.A), cfg.loss, cfg.domain, cfg.data,
                    cfg.assignment[:T].copy(), node_loss, meta)


def run_sequential(loss: LossSpec, domain: FeasibleSet, data: Dataset, T: int | None = None,
                   w_init=None, eta: Callable[[int], float] | None = None,
                   callback: Callable[[int, np.ndarray], None] | None = None) -> SimTrace:
    """Single learner running projected online subgradient descent over the stream."""
    T = len(data) if T is None else T
    if T < 1 or T > len(data):
        raise ValueError(f"T={T} outside 1..{len(data)}")
    n = data.dim
    w = np.zeros(n) if w_init is None else np.asarray(w_init, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"w_init has shape {w.shape}, data has dimension {n}")
    rule = eta if eta is not None else (lambda t: step_size(loss.lam, t))
    W = np.empty((T + 1, 1, n))
    G = np.empty((T, 1, n))
    R = np.zeros((T + 1, 1, n))
    etas = np.empty(T)
    total = 0.0
    W[0, 0] = w
    started = time.perf_counter()
    for t in range(1, T + 1):
        if callback is not None:
            callback(t, w[None, :])
        x, y = data.rows([t - 1])[0], data.y[t - 1]
        total += loss_value(loss, w, x, y)
        g = subgradient(loss, w, x, y)
        etas[t - 1] = rule(t)
        w_hat = w - etas[t - 1] * g
        w = project(domain, w_hat)
        W[t, 0], G[t - 1, 0], R[t, 0] = w, g, w - w_hat
    if callback is not None:
        callback(T + 1, w[None, :])
    meta = {"wall_clock_s": time.perf_counter() - started, "m": 1, "T": T, "dim": n}
    return SimTrace(W, G, R, etas, np.ones((1, 1)), loss, domain, data,
                    np.arange(T).reshape(T, 1), np.array([total]), meta)


# ---------------------------------------------------------------------------
# Hindsight optimum


@dataclass(frozen=True)
class HindsightResult:
    w: np.ndarray
    value: float         # J(w)
    lower_bound: float   # certified lower bound on min J
    iterations: int
    converged: bool

    @property
    def gap(self) -> float:
        return self.value - self.lower_bound


def _objective(loss: LossSpec, w, X, y) -> float:
    hinge = np.maximum(1.0 - y * (X @ w), 0.0).sum()
    return float(hinge + 0.5 * loss.lam * len(y) * (w @ w))


def _dual_bound(loss: LossSpec, domain: FeasibleSet, alpha, X, y) -> float:
    """Weak-duality lower bound on min J for hinge weights ``alpha`` in [0, 1].

    Uses ``max(0, 1 - z) = max_{a in [0,1]} a (1 - z)`` and minimises the
    resulting expression over the domain in closed form.
    """
    N = len(y)
    v = X.T @ (alpha * y)
    mu = loss.lam * N
    if domain.kind == "all_space":
        if mu > 0:
            inner = -(v @ v) / (2 * mu)
        else:
            inner = 0.0 if np.allclose(v, 0.0) else -math.inf
    elif domain.kind == "l2_ball":
        nv = float(np.linalg.norm(v))
        r = domain.radius
        if mu > 0 and nv / mu <= r:
            inner = -(nv ** 2) / (2 * mu)
        else:
            inner = -r * nv + 0.5 * mu * r ** 2
    else:
        lo, hi = domain.lo, domain.hi
        if mu > 0:
            w = np.clip(v / mu, lo, hi)
        else:
            w = np.where(v > 0, hi, lo)
        inner = float(-(v @ w) + 0.5 * mu * (w @ w))
    return float(alpha.sum() + inner)


def hindsight_optimum(loss: LossSpec, domain: FeasibleSet, data: Dataset, indices=None,
                      tol: float | None = None, max_iter: int = 20000, check_every: int = 250,
                      w0=None) -> HindsightResult:
    """Best fixed parameter for ``J(w) = sum_k f_k(w)`` over the given examples.

    Averaged projected subgradient descent on ``J / N`` (steps ``1/(lam k)``
    for ``lam > 0``, ``c / sqrt(k)`` otherwise).  Optimality is certified by
    a dual lower bound built from the averaged hinge activations.  ``tol`` is
    an absolute tolerance on ``J`` (default ``1e-4 * N``); if it is not met
    within ``max_iter`` steps the achieved gap is reported with
    ``converged=False``.
    """
    idx = np.arange(len(data)) if indices is None else np.asarray(indices).ravel()
    X, y = data.rows(idx), data.y[idx]
    N, n = X.shape
    if tol is None:
        tol = 1e-4 * N
    lam = loss.lam
    w = np.zeros(n) if w0 is None else project(domain, np.asarray(w0, dtype=float))
    scale = domain.diameter if math.isfinite(domain.diameter) else 2.0
    grad_scale = max(1.0, float(np.max(np.linalg.norm(X, axis=1))) if N else 1.0)

    avg_w = np.zeros(n)
    avg_alpha = np.zeros(N)
    weight_sum = 0.0
    best_w, best_val = w.copy(), _objective(loss, w, X, y)
    best_lb = -math.inf
    it = 0
    for it in range(1, max_iter + 1):
        active = (y * (X @ w) < 1.0).astype(float)
        g = -(X.T @ (active * y)) / N + lam * w
        if lam > 0:
            step, wt = 1.0 / (lam * it), float(it)
        else:
            step, wt = scale / (grad_scale * math.sqrt(it)), (1.0 if it > 50 else 0.0)
        if wt:
            weight_sum += wt
            avg_w += (wt / weight_sum) * (w - avg_w)
            avg_alpha += (wt / weight_sum) * (active - avg_alpha)
        w = project(domain, w - step * g)
        if it % check_every == 0 or it == max_iter:
            for cand in (avg_w, w):
                val = _objective(loss, cand, X, y)
                if val < best_val:
                    best_val, best_w = val, cand.copy()
            best_lb = max(best_lb, _dual_bound(loss, domain, avg_alpha, X, y))
            if best_val - best_lb <= tol:
                return HindsightResult(best_w, best_val, best_lb, it, True)
    logger.warning("hindsight optimum: gap %.3g above tolerance %.3g after %d steps",
                   best_val - best_lb, tol, it)
    return HindsightResult(best_w, best_val, best_lb, it, False)


# ---------------------------------------------------------------------------
# Regret and bounds


def mixing_regret_constant(beta: float) -> float:
    """``(5 - beta) / (1 - beta)``."""
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    return (5.0 - beta) / (1.0 - beta)


def regret_bound_rhs(lam: float, L: float, m: int, F: float, beta: float, T):
    """Regret bound after ``T`` rounds (scalar or array ``T``).

    ``lam > 0``: ``(2 C L^2 m / lam)(1 + log T)``; ``lam = 0``:
    ``m (F + 4 C L^2) sqrt(T)``, with ``C = (5 - beta)/(1 - beta)``.
    """
    C = mixing_regret_constant(beta)
    if L <= 0 or m < 1:
        raise ValueError("L and m must be positive")
    T_arr = np.asarray(T, dtype=float)
    if np.any(T_arr < 1):
        raise ValueError("T must be >= 1")
    if lam > 0:
        out = (2.0 * C * L ** 2 * m / lam) * (1.0 + np.log(T_arr))
    elif lam == 0:
        if not math.isfinite(F):
            raise ValueError("the convex (lam = 0) bound needs a bounded domain (finite F)")
        out = m * (F + 4.0 * C * L ** 2) * np.sqrt(T_arr)
    else:
        raise ValueError(f"lam must be >= 0, got {lam}")
    return float(out) if out.ndim == 0 else out


@dataclass
class RegretSeries:
    instantaneous: np.ndarray
    cumulative: np.ndarray
    w_star: np.ndarray
    node: int
    bound_rhs: np.ndarray | None = None

    @property
    def final(self) -> float:
        return float(self.cumulative[-1])


def round_losses(trace: SimTrace, w) -> np.ndarray:
    """``f_t(w) = sum_i f_t^i(w)`` for every round, for one fixed parameter."""
    X, y = trace.examples()
    marg = y * np.einsum("tin,n->ti", X, np.asarray(w, dtype=float))
    hinge = np.maximum(1.0 - marg, 0.0).sum(axis=1)
    return hinge + 0.5 * trace.loss.lam * trace.m * float(np.dot(w, w))


def node_round_losses(trace: SimTrace) -> np.ndarray:
    """(T, m) array: ``f_t(w_t^j)`` evaluated on all m examples of round t."""
    X, y = trace.examples()
    W = trace.W[: trace.T]
    marg = y[:, :, None] * np.einsum("tin,tjn->tij", X, W)
    hinge = np.maximum(1.0 - marg, 0.0).sum(axis=1)
    reg = 0.5 * trace.loss.lam * trace.m * np.einsum("tjn,tjn->tj", W, W)
    return hinge + reg


def regret(trace: SimTrace, w_star, j: int = 0, *, optimum_value: float | None = None,
           bound: dict | None = None) -> RegretSeries:
    """Cumulative regret of node ``j`` against ``w_star``.

    ``optimum_value`` replaces ``sum_t f_t(w_star)`` (e.g. with a certified
    lower bound, which makes the result an upper bound on the true regret);
    the per-round comparator is then spread evenly.  ``bound`` holds keyword
    arguments for :func:`regret_bound_rhs` minus ``T``.
    """
    if not 0 <= j < trace.m:
        raise ValueError(f"node {j} outside 0..{trace.m - 1}")
    learner = node_round_losses(trace)[:, j]
    comparator = round_losses(trace, w_star)
    if optimum_value is not None:
        comparator = np.full_like(comparator, optimum_value / trace.T)
    inst = learner - comparator
    rhs = None
    if bound is not None:
        rhs = regret_bound_rhs(T=np.arange(1, trace.T + 1), **bound)
    return RegretSeries(inst, np.cumsum(inst), np.asarray(w_star, dtype=float), j, rhs)


def generalization_bound_rhs(R_DA: float, N: int, delta: float) -> float:
    """High-probability excess-risk bound derived from the regret."""
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if R_DA < 0 or N < 1:
        raise ValueError("need R_DA >= 0 and N >= 1")
    log_term = math.log((R_DA + 3.0) / delta)
    return R_DA / N + (36.0 / N) * log_term + (2.0 / N) * math.sqrt(R_DA * log_term)


# ---------------------------------------------------------------------------
# Per-step invariants


@dataclass
class InvariantReport:
    """Worst observed ratios ``lhs / rhs`` (<= 1 means the inequality holds)."""

    residual_ratio: float
    disagreement_ratio: float
    disagreement_hat_ratio: float
    average_identity_err: float
    feasibility_err: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _invariant_sums(eta: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """``S1[t-1] = sum_{k=1}^{t-1} eta_{t-k} beta^{k-1}`` and
    ``S2[t-1] = sum_{k=0}^{t-1} eta_{t-k} beta^k`` for t = 1..T."""
    T = len(eta)
    S1 = np.zeros(T)
    S2 = np.zeros(T)
    prev2 = 0.0
    for t in range(1, T + 1):
        S2[t - 1] = eta[t - 1] + beta * prev2
        prev2 = S2[t - 1]
        if t >= 2:
            S1[t - 1] = S2[t - 2]
    return S1, S2


def disagreement_check(trace: SimTrace, L: float, beta: float, slack: float = 1e-9) -> InvariantReport:
    """Check the per-step identities and bounds along a trace.

    * ``||r_{t+1}^i|| <= eta_t ||g_t^i||``
    * ``||w_t - w_t^i|| <= 4 L sum_{k=1}^{t-1} eta_{t-k} beta^(k-1)``
    * ``||w_t - w_hat_{t+1}^i|| <= 4 L sum_{k=0}^{t-1} eta_{t-k} beta^k``
    * ``w_{t+1} = w_t - (eta_t/m) sum_i g_t^i + (1/m) sum_i r_{t+1}^i``
    * every iterate lies in the domain

    where ``w_t`` is the node average.  Inequalities get ``slack`` relative
    tolerance.
    """
    T, m = trace.T, trace.m
    violations = []
    W, G, R, eta = trace.W, trace.G, trace.R, trace.eta
    W_hat = trace.W_hat
    avg = W.mean(axis=1)  # (T+1, n)

    r_norm = np.linalg.norm(R[1:], axis=2)           # ||r_{t+1}^i||
    g_bound = eta[:, None] * np.linalg.norm(G, axis=2)
    residual_ratio = _max_ratio(r_norm, g_bound)
    bad = r_norm > g_bound + 1e-12
    if bad.any():
        t, i = map(int, np.argwhere(bad)[0])
        violations.append(("residual", t + 1, i, float(r_norm[t, i]), float(g_bound[t, i])))

    S1, S2 = _invariant_sums(eta, beta)
    lhs1 = np.linalg.norm(avg[:T, None, :] - W[:T], axis=2)
    rhs1 = 4 * L * S1[:, None] * np.ones((1, m))
    lhs2 = np.linalg.norm(avg[:T, None, :] - W_hat[1:], axis=2)
    rhs2 = 4 * L * S2[:, None] * np.ones((1, m))
    for name, lhs, rhs in (("difference1", lhs1, rhs1), ("difference2", lhs2, rhs2)):
        bad = lhs > rhs + slack * np.maximum(1.0, rhs)
        if bad.any():
            t, i = map(int, np.argwhere(bad)[0])
            violations.append((name, t + 1, i, float(lhs[t, i]), float(rhs[t, i])))
    ratio1 = _max_ratio(lhs1, rhs1)
    ratio2 = _max_ratio(lhs2, rhs2)

    predicted = avg[:T] - (eta[:, None] / m) * G.sum(axis=1) + R[1:].sum(axis=1) / m
    avg_err = float(np.max(np.abs(predicted - avg[1:]))) if T else 0.0
    scale = max(1.0, float(np.max(np.abs(W))))
    if avg_err > 1e-12 * scale * m:
        violations.append(("average_identity", None, None, avg_err, 1e-12 * scale * m))

    feas_err = _feasibility_error(trace.domain, W)
    if feas_err > 1e-12 * scale:
        violations.append(("feasibility", None, None, feas_err, 1e-12))
    return InvariantReport(residual_ratio, ratio1, ratio2, avg_err, feas_err, violations)


def _max_ratio(lhs: np.ndarray, rhs: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    return float(ratio.max()) if ratio.size else 0.0


def _feasibility_error(domain: FeasibleSet, W: np.ndarray) -> float:
    flat = W.reshape(-1, W.shape[-1])
    if domain.kind == "l2_ball":
        return float(max(0.0, np.max(np.linalg.norm(flat, axis=1)) - domain.radius))
    if domain.kind == "box":
        return float(max(0.0, np.max(domain.lo - flat), np.max(flat - domain.hi)))
    return 0.0


# ---------------------------------------------------------------------------
# Test error curves


def error_rate(w, data: Dataset) -> float:
    """Fraction of examples where ``sign(<w, x>)`` (0 counts as +1) misses the label."""
    scores = data.X @ np.asarray(w, dtype=float)
    pred = np.where(np.asarray(scores).ravel() >= 0, 1.0, -1.0)
    return float(np.mean(pred != data.y))


def test_error_curve(trace: SimTrace, test: Dataset, node: int = 0, points: int = 50) -> list[tuple[int, int, float]]:
    """``(examples_seen, rounds, error_rate)`` at evenly spaced checkpoints."""
    T = trace.T
    rounds = sorted(set(np.linspace(0, T, min(points, T) + 1).astype(int).tolist()))
    return [(r * trace.m, r, error_rate(trace.W[r, node], test)) for r in rounds]


test_error_curve.__test__ = False  # not a pytest test despite the name
