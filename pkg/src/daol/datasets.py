"""Labelled example streams: synthetic unit-ball data and sparse text files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


@dataclass
class Dataset:
    """``X`` is dense (N, n) or CSR sparse; ``y`` holds labels in {-1, +1}."""

    X: np.ndarray | sp.csr_matrix
    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} feature rows but {self.y.shape[0]} labels")

    def __len__(self):
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def rows(self, idx) -> np.ndarray:
        """Dense feature rows for the given indices."""
        out = self.X[idx]
        if sp.issparse(out):
            out = out.toarray()
        return np.asarray(out, dtype=float)

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        return Dataset(self.X[:n_first], self.y[:n_first]), Dataset(self.X[n_first:], self.y[n_first:])


def generate_synthetic(n: int, dim: int, flip_rate: float = 0.0, seed: int | None = 0) -> tuple[Dataset, np.ndarray]:
    """Points uniform in the unit ball, labelled by a random unit-norm classifier.

    Each label is flipped independently with probability ``flip_rate``.
    Returns the dataset and the true classifier.
    """
    if dim < 1 or n < 0:
        raise ValueError(f"need dim >= 1 and n >= 0, got dim={dim}, n={n}")
    if not 0 <= flip_rate < 0.5:
        raise ValueError(f"flip_rate must lie in [0, 0.5), got {flip_rate}")
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(dim)
    w_true /= np.linalg.norm(w_true)
    directions = rng.standard_normal((n, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.uniform(size=n) ** (1.0 / dim)
    X = directions * radii[:, None]
    # Guard against radii * unit vectors drifting above 1 by an ulp.
    norms = np.linalg.norm(X, axis=1)
    X[norms > 1.0] /= norms[norms > 1.0, None]
    y = np.where(X @ w_true >= 0, 1.0, -1.0)
    flips = rng.uniform(size=n) < flip_rate
    y[flips] *= -1
    return Dataset(X, y), w_true


def _parse_label(token: str, label_map, lineno: int, path) -> float:
    if label_map is not None and token in label_map:
        return float(label_map[token])
    try:
        value = float(token)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad label {token!r}") from None
    if label_map is not None and value in label_map:
        return float(label_map[value])
    if value not in (1.0, -1.0):
        raise ValueError(f"{path}:{lineno}: label {token!r} is not +1/-1 and no mapping was given")
    return value


def load_sparse_dataset(path, n_features: int | None = None, normalize: bool = False,
                        label_map: dict | None = None) -> Dataset:
    """Read ``label idx:val idx:val ...`` lines (1-based feature indices).

    With ``normalize=True`` every row with norm above 1 is scaled onto the
    unit sphere so that ``||x|| <= 1``.
    """
    labels, rows, cols, vals = [], [], [], []
    max_index = 0
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], label_map, lineno, path))
        r = len(labels) - 1
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            try:
                j, v = int(idx), float(val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed feature {tok!r}") from None
            if not sep or j < 1:
                raise ValueError(f"{path}:{lineno}: malformed feature {tok!r} (indices are 1-based)")
            if not np.isfinite(v):
                raise ValueError(f"{path}:{lineno}: non-finite value in {tok!r}")
            rows.append(r)
            cols.append(j - 1)
            vals.append(v)
            max_index = max(max_index, j)
    if n_features is None:
        n_features = max_index
    elif max_index > n_features:
        raise ValueError(f"{path}: feature index {max_index} exceeds n_features={n_features}")
    X = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), n_features))
    X.sum_duplicates()
    if normalize:
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        scale = np.where(norms > 1.0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
        X = sp.csr_matrix(sp.diags(scale) @ X)
    return Dataset(X, np.array(labels))


def write_sparse_dataset(path, data: Dataset) -> None:
    """Inverse of :func:`load_sparse_dataset`; values are written with ``repr``."""
    X = sp.csr_matrix(data.X)
    lines = []
    for r in range(X.shape[0]):
        start, stop = X.indptr[r], X.indptr[r + 1]
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[start:stop], X.data[start:stop]) if v != 0)
        label = "+1" if data.y[r] > 0 else "-1"
        lines.append(f"{label} {feats}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def round_robin(data: Dataset, m: int, T: int | None = None) -> np.ndarray:
    """Index array of shape (T, m): example ``t*m + i`` goes to node ``i`` in round ``t+1``."""
    if T is None:
        T = len(data) // m
    if T * m > len(data):
        raise ValueError(f"stream has {len(data)} examples, {T} rounds on {m} nodes need {T * m}")
    return np.arange(T * m).reshape(T, m)
