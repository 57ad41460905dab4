"""Reconstruction attack by a curious node, and indistinguishable-input
constructions for the cases where the attack must fail."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import Dataset
from .graph import CommGraph, MixingMatrix
from .privacy import (
    InvertibilityVerdict,
    SystemSpec,
    finite_horizon_invertibility,
    observed_nodes,
    partial_reconstruction_condition,
)
from .simulator import SimConfig, SimTrace, run_distributed


class ReconstructionRefused(ValueError):
    """The observer's data cannot determine the requested subgradients."""

    def __init__(self, reason: str, condition: str, nodes=()):
        super().__init__(reason)
        self.condition = condition
        self.nodes = tuple(nodes)


def graph_from_weights(A: np.ndarray) -> CommGraph:
    m = A.shape[0]
    return CommGraph.from_edges(m, [(j, i) for j in range(m) for i in range(m) if j != i and A[j, i] != 0])


@dataclass(frozen=True)
class ObservationLog:
    """Everything the observer ``M`` has: received parameters plus public knowledge.

    ``Y[k]`` holds the observed columns at round ``first_round + k``; the
    public knowledge is the weight matrix, the step-size schedule, whether a
    projection is applied, and (unless withheld) the common initial point.
    """

    M: int
    observed: tuple
    Y: np.ndarray            # (rounds, len(observed), n)
    first_round: int
    A: np.ndarray
    eta: np.ndarray
    W1: np.ndarray | None
    projected: bool

    def column(self, node: int) -> np.ndarray:
        return self.Y[:, self.observed.index(node)]

    def params(self, node: int, t: int) -> np.ndarray:
        """``w_t^node`` as known to the observer."""
        if t == 1 and self.W1 is not None:
            return self.W1[node]
        k = t - self.first_round
        if k < 0 or node not in self.observed:
            raise KeyError(f"w_{t}^{node} is not available to node {self.M}")
        return self.Y[k, self.observed.index(node)]


def observe(trace: SimTrace, M: int, withhold_initial: bool = False) -> ObservationLog:
    """Cut the observer's view out of a trace: columns ``{M} | N(M)`` of every ``W_t``."""
    if not 0 <= M < trace.m:
        raise ValueError(f"observer {M} outside 0..{trace.m - 1}")
    obs = tuple(observed_nodes(graph_from_weights(trace.A), M))
    first = 2 if withhold_initial else 1
    Y = trace.W[first - 1:, list(obs)].copy()
    W1 = None if withhold_initial else trace.W[0].copy()
    return ObservationLog(M, obs, Y, first, trace.A.copy(), trace.eta.copy(), W1, trace.domain.is_projecting)


@dataclass
class ReconstructionResult:
    M: int
    targets: tuple
    g_hat: np.ndarray            # (T, len(targets), n); NaN where not recoverable
    status: dict = field(default_factory=dict)

    def errors(self, trace: SimTrace) -> np.ndarray:
        """Absolute error against the true subgradients, shape like ``g_hat``."""
        return np.abs(self.g_hat - trace.G[:, list(self.targets)])

    def max_error(self, trace: SimTrace, relative: bool = False) -> float:
        err = self.errors(trace)
        if relative:
            scale = np.maximum(1.0, np.linalg.norm(trace.G[:, list(self.targets)], axis=2, keepdims=True))
            err = err / scale
        return float(np.nanmax(err)) if np.isfinite(err).any() else float("nan")

    def to_csv(self, trace: SimTrace | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "node", "coord", "true_g", "reconstructed_g", "abs_error"])
        T, k, n = self.g_hat.shape
        for t in range(T):
            for a, node in enumerate(self.targets):
                for c in range(n):
                    est = self.g_hat[t, a, c]
                    if trace is None:
                        w.writerow([t + 1, node, c, "", repr(float(est)), ""])
                    else:
                        true = trace.G[t, node, c]
                        w.writerow([t + 1, node, c, repr(float(true)), repr(float(est)), repr(float(abs(est - true)))])
        return buf.getvalue()


def reconstruct_subgradients(log: ObservationLog, targets) -> ReconstructionResult:
    """Replay each target's mixing step and difference successive parameters.

    ``g_t^n = -(w_{t+1}^n - sum_j A_jn w_t^j) / eta_t``.  Uses only the
    observation log.  Refuses when the graph conditions fail or when the
    iterates were projected.
    """
    targets = tuple(sorted(set(targets)))
    if log.M in targets:
        raise ValueError("the observer cannot be one of its own targets")
    g = graph_from_weights(log.A)
    cond = partial_reconstruction_condition(g, log.M, targets)
    if not cond.holds:
        nodes = cond.offenders_i if cond.failed == "i" else cond.offenders_ii
        what = ("targets not sending to the observer" if cond.failed == "i"
                else "outside nodes mixing into the targets unseen by the observer")
        raise ReconstructionRefused(f"partial-reconstruction condition {cond.failed} failed: {what}: {list(nodes)}",
                                    cond.failed, nodes)
    if log.projected:
        raise ReconstructionRefused(
            "iterates are projected: each target propagates only the sum of its scaled subgradient "
            "and its projection residual, which the observer cannot separate",
            "projection")
    T = len(log.eta)
    n = log.Y.shape[2]
    g_hat = np.full((T, len(targets), n), np.nan)
    status = {}
    for t in range(1, T + 1):
        if t == 1 and log.W1 is None and log.first_round > 1:
            status[1] = "initial parameters withheld: round-1 subgradients not recoverable"
            continue
        for a, node in enumerate(targets):
            senders = [j for j in range(log.A.shape[0]) if log.A[j, node] != 0]
            mixed = sum(log.A[j, node] * log.params(j, t) for j in senders)
            g_hat[t - 1, a] = -(log.params(node, t + 1) - mixed) / log.eta[t - 1]
    return ReconstructionResult(log.M, targets, g_hat, status)


# ---------------------------------------------------------------------------
# Indistinguishable inputs


@dataclass
class AmbiguousPair:
    """Two input sequences the observer cannot tell apart.

    ``inputs_*`` have shape (horizon, m) for the scaled subgradient inputs;
    ``residuals_*`` likewise for projection residuals (``None`` without
    projection inputs).  ``observations`` is (horizon, len(observed)) for
    rounds 2..horizon+1.
    """

    inputs_a: np.ndarray
    inputs_b: np.ndarray
    residuals_a: np.ndarray | None
    residuals_b: np.ndarray | None
    observations: np.ndarray
    observation_gap: float       # max |Y_a - Y_b| over all rounds
    target_gap: float            # max |inputs_a - inputs_b| over target entries
    verdict: InvertibilityVerdict


def simulate_outputs(spec: SystemSpec, inputs: np.ndarray, residuals: np.ndarray | None = None,
                     W1: np.ndarray | None = None) -> np.ndarray:
    """Forward run of ``W_{t+1} = W_t A + inputs_t (+ residuals_t)``, returning ``Y_2..Y_{h+1}``."""
    A, obs = spec.mixing.A, spec.observed
    w = np.zeros(spec.m) if W1 is None else np.asarray(W1, dtype=float)
    out = []
    for t in range(inputs.shape[0]):
        w = w @ A + inputs[t]
        if residuals is not None:
            w = w + residuals[t]
        out.append(w[obs])
    return np.array(out)


def construct_ambiguous_inputs(spec: SystemSpec, horizon: int | None = None, rng=None,
                               verdict: InvertibilityVerdict | None = None) -> AmbiguousPair:
    """Random inputs plus a null-space witness of the input-output map."""
    verdict = verdict or finite_horizon_invertibility(spec, horizon)
    if verdict.verdict != "ambiguous":
        raise ValueError(f"oracle verdict is {verdict.verdict!r}; no indistinguishable pair exists")
    h, m = verdict.horizon, spec.m
    rng = np.random.default_rng(rng)
    copies = 2 if spec.projection_inputs else 1
    base = rng.standard_normal(h * copies * m)
    other = base + verdict.witness

    def unpack(vec):
        blocks = vec.reshape(h, copies, m)
        return blocks[:, 0], (blocks[:, 1] if spec.projection_inputs else None)

    ga, ra = unpack(base)
    gb, rb = unpack(other)
    ya = simulate_outputs(spec, ga, ra)
    yb = simulate_outputs(spec, gb, rb)
    tgt = sorted(spec.targets)
    return AmbiguousPair(ga, gb, ra, rb, ya, float(np.max(np.abs(ya - yb))),
                         float(np.max(np.abs(ga[:, tgt] - gb[:, tgt]))), verdict)


@dataclass
class CollisionDemo:
    """Two full simulation runs differing in one example whose projected updates coincide."""

    round: int
    node: int
    g_a: np.ndarray
    g_b: np.ndarray
    trace_a: SimTrace
    trace_b: SimTrace
    max_param_gap: float     # max |W_a - W_b| over every node and round


def ball_projection_collision(cfg: SimConfig, stretch: float = 0.25) -> CollisionDemo:
    """On a ball domain, swap one example so the local step points along the
    same ray outside the ball; the projected parameter is unchanged.

    The replacement subgradient is ``(mixed - s * w_hat) / eta`` with
    ``s = 1 + stretch`` (halved until the hinge stays active), realised by the
    example ``x = lam * w - g``, ``y = +1``.
    """
    if cfg.domain.kind != "l2_ball":
        raise ValueError("collision demo needs an l2-ball domain")
    trace_a = run_distributed(cfg)
    A_T = trace_a.A.T
    lam = cfg.loss.lam
    for t in range(1, trace_a.T + 1):
        Wt = trace_a.W[t - 1]
        mixed = A_T @ Wt
        w_hat = mixed - trace_a.eta[t - 1] * trace_a.G[t - 1]
        for node in range(trace_a.m):
            if np.linalg.norm(w_hat[node]) <= cfg.domain.radius * (1 + 1e-9):
                continue
            s = 1.0 + stretch
            for _ in range(30):
                g_b = (mixed[node] - s * w_hat[node]) / trace_a.eta[t - 1]
                x_b = lam * Wt[node] - g_b
                if float(Wt[node] @ x_b) < 1.0:
                    break
                s = 1.0 + (s - 1.0) / 2
            else:
                continue
            data_b = _replace_example(cfg.data, int(cfg.assignment[t - 1, node]), x_b, 1.0)
            trace_b = run_distributed(replace(cfg, data=data_b))
            gap = float(np.max(np.abs(trace_a.W - trace_b.W)))
            return CollisionDemo(t, node, trace_a.G[t - 1, node].copy(), trace_b.G[t - 1, node].copy(),
                                 trace_a, trace_b, gap)
    raise RuntimeError("no round left the ball; shrink the radius or lengthen the run")


def _replace_example(data: Dataset, index: int, x: np.ndarray, y: float) -> Dataset:
    X = data.rows(np.arange(len(data)))
    labels = data.y.copy()
    X[index], labels[index] = x, y
    return Dataset(X, labels)
