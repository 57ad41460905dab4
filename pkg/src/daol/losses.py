"""Regularised hinge loss, Euclidean projections and step-size schedules.

All array functions accept either one vector or a stack of row vectors, so
the distributed and sequential runners share the exact same arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LossSpec:
    """``f(w) = max(1 - y<w, x>, 0) + (lam / 2) ||w||^2``."""

    lam: float = 0.0
    grad_bound: float = 1.0
    kind: str = "hinge"

    def __post_init__(self):
        if self.kind != "hinge":
            raise ValueError(f"unsupported loss {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError(f"strong convexity modulus must be >= 0, got {self.lam}")
        if not self.grad_bound > 0:
            raise ValueError(f"subgradient bound must be positive, got {self.grad_bound}")

    @classmethod
    def for_domain(cls, lam: float, domain: "FeasibleSet") -> "LossSpec":
        """Default ``L = 1 + lam * rho`` for data with ``||x|| <= 1``.

        ``rho`` is the largest norm of a point in the domain.
        """
        rho = domain.max_norm
        if lam > 0 and not math.isfinite(rho):
            raise ValueError("lam > 0 on an unbounded domain has no finite subgradient bound")
        return cls(lam=lam, grad_bound=1.0 + (lam * rho if lam > 0 else 0.0))


@dataclass(frozen=True)
class FeasibleSet:
    kind: str = "all_space"
    radius: float | None = None
    lo: np.ndarray | None = field(default=None, compare=False)
    hi: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "l2_ball":
            if self.radius is None or not self.radius > 0:
                raise ValueError(f"ball radius must be positive, got {self.radius}")
        elif self.kind == "box":
            lo = np.asarray(self.lo, dtype=float)
            hi = np.asarray(self.hi, dtype=float)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ValueError("box bounds must have equal shapes with lo <= hi")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        elif self.kind != "all_space":
            raise ValueError(f"unknown feasible set {self.kind!r}")

    @classmethod
    def ball(cls, radius: float) -> "FeasibleSet":
        return cls("l2_ball", radius=float(radius))

    @classmethod
    def box(cls, lo, hi) -> "FeasibleSet":
        return cls("box", lo=lo, hi=hi)

    @property
    def diameter(self) -> float:
        if self.kind == "l2_ball":
            return 2.0 * self.radius
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        return math.inf

    @property
    def max_norm(self) -> float:
        if self.kind == "l2_ball":
            return self.radius
        if self.kind == "box":
            return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))
        return math.inf

    @property
    def is_projecting(self) -> bool:
        return self.kind != "all_space"

    def contains(self, w, tol: float = 1e-12) -> bool:
        w = np.atleast_2d(w)
        if self.kind == "l2_ball":
            return bool(np.all(np.linalg.norm(w, axis=1) <= self.radius + tol))
        if self.kind == "box":
            return bool(np.all(w >= self.lo - tol) and np.all(w <= self.hi + tol))
        return True

    def __str__(self):
        if self.kind == "l2_ball":
            return f"l2_ball({self.radius:g})"
        if self.kind == "box":
            return f"box({self.lo.tolist()}, {self.hi.tolist()})"
        return "all_space"


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def margins(w, x, y) -> np.ndarray:
    """``y * <w, x>`` row by row."""
    w2, x2 = np.atleast_2d(w), np.atleast_2d(x)
    return np.asarray(y, dtype=float).reshape(-1) * np.einsum("ij,ij->i", w2, x2)


def subgradient(spec: LossSpec, w, x, y) -> np.ndarray:
    """One element of the subdifferential; ties at margin 1 take the ``lam * w`` side."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_finite(w, x, y)
    if w.shape[-1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: w has {w.shape[-1]}, x has {x.shape[-1]}")
    y_col = np.asarray(y, dtype=float).reshape(-1, 1)
    active = (margins(w, x, y) < 1.0)[:, None]
    g = np.where(active, -y_col * np.atleast_2d(x), 0.0)
    if spec.lam:
        g = g + spec.lam * np.atleast_2d(w)
    return g.reshape(np.broadcast_shapes(w.shape, x.shape))


def loss_value(spec: LossSpec, w, x, y):
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_finite(w, x, y)
    vals = np.maximum(1.0 - margins(w, x, y), 0.0)
    if spec.lam:
        vals = vals + 0.5 * spec.lam * np.sum(np.atleast_2d(w) ** 2, axis=1)
    if w.ndim == 1 and x.ndim == 1:
        return float(vals[0])
    return vals


def project(domain: FeasibleSet, w) -> np.ndarray:
    """Euclidean projection onto ``domain`` (row-wise for stacked input)."""
    w = np.asarray(w, dtype=float)
    _check_finite(w)
    if domain.kind == "all_space":
        return w.copy()
    if domain.kind == "box":
        return np.clip(w, domain.lo, domain.hi)
    w2 = np.atleast_2d(w)
    norms = np.linalg.norm(w2, axis=1, keepdims=True)
    scale = np.ones_like(norms)
    outside = norms > domain.radius
    scale[outside] = domain.radius / norms[outside]
    return (w2 * scale).reshape(w.shape)


def step_size(lam: float, t: int) -> float:
    """``1/(2 lam t)`` for strongly convex losses, ``1/(2 sqrt t)`` otherwise."""
    if t < 1:
        raise ValueError(f"rounds are numbered from 1, got t={t}")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if lam > 0:
        return 1.0 / (2.0 * lam * t)
    return 1.0 / (2.0 * math.sqrt(t))
