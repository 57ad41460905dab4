"""``key=value`` experiment configuration files.

One assignment per line, ``#`` starts a comment.  Command-line overrides
use the same syntax.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import __version__
from .datasets import Dataset, generate_synthetic, load_sparse_dataset
from .graph import CommGraph, MixingMatrix, make_doubly_stochastic, named_graph, random_generic_weights, read_edge_list
from .losses import FeasibleSet

DEFAULTS = {
    "simulate": {
        "topology": "hypercube:4", "scheme": "uniform_maxdeg", "lambda": "0", "T": "200",
        "seed": "0", "domain": "ball:5", "reference_node": "0", "eta": "auto",
        "dim": "10", "flip_rate": "0.1", "n_test": "2000", "sequential": "1",
    },
    "privacy": {"topology": "grid:3x3", "numerical": "auto", "seed": "0"},
    "attack": {
        "topology": "clique:3", "scheme": "random", "observer": "0", "targets": "all",
        "lambda": "0", "T": "50", "seed": "0", "domain": "all_space", "eta": "auto",
        "dim": "2", "flip_rate": "0.1", "withhold_initial": "0",
    },
}


class ConfigError(ValueError):
    pass


def parse_lines(lines, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path | None, overrides=(), command: str = "simulate") -> dict[str, str]:
    """Defaults, then the file, then command-line ``key=value`` overrides."""
    cfg = dict(DEFAULTS.get(command, {}))
    if path is not None:
        cfg.update(parse_lines(Path(path).read_text(encoding="utf-8").splitlines(), str(path)))
    cfg.update(parse_lines(overrides, "<command line>"))
    return cfg


def write_manifest(path: Path, cfg: dict[str, str], command: str) -> None:
    """Resolved configuration in the same format, so it can be fed back in."""
    lines = [f"# daol {__version__} {command}"]
    lines += [f"{k}={cfg[k]}" for k in sorted(cfg)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def get_int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except KeyError:
        raise ConfigError(f"missing required key {key!r}") from None
    except ValueError:
        raise ConfigError(f"{key}={cfg[key]!r} is not an integer") from None


def get_float(cfg, key) -> float:
    try:
        return float(cfg[key])
    except KeyError:
        raise ConfigError(f"missing required key {key!r}") from None
    except ValueError:
        raise ConfigError(f"{key}={cfg[key]!r} is not a number") from None


def get_bool(cfg, key) -> bool:
    value = cfg.get(key, "0").lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{key}={cfg[key]!r} is not a boolean")


def build_graph(cfg) -> CommGraph:
    spec = cfg.get("topology", "")
    if spec.startswith("file:"):
        g, _ = read_edge_list(spec[5:])
        return g
    if ":" not in spec and spec not in ("fig2a", "fig2b") and "m" in cfg:
        m = get_int(cfg, "m")
        if m == 1:
            return CommGraph.from_edges(1, [])
        if spec == "hypercube":
            spec = f"hypercube:{max(m.bit_length() - 1, 1)}"
        elif spec == "grid":
            side = int(round(m ** 0.5))
            spec = f"grid:{side}x{m // max(side, 1)}"
        else:
            spec = f"{spec}:{m}"
    try:
        g = named_graph(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "m" in cfg and get_int(cfg, "m") != g.m:
        raise ConfigError(f"topology {spec!r} has {g.m} nodes but m={cfg['m']}")
    return g


def build_mixing(cfg, g: CommGraph) -> MixingMatrix:
    scheme = cfg.get("scheme", "uniform_maxdeg")
    spec = cfg.get("topology", "")
    if g.m == 1:
        return MixingMatrix.from_matrix(np.ones((1, 1)), g)
    if spec.startswith("file:"):
        _, weights = read_edge_list(spec[5:])
        if weights is not None and scheme == "file":
            A = np.zeros((g.m, g.m))
            for (i, j), w in weights.items():
                A[i, j] = w
            np.fill_diagonal(A, 1.0 - A.sum(axis=0))
            return MixingMatrix(A, g)
    if scheme == "random":
        return random_generic_weights(g, get_int(cfg, "seed") + 7919)
    try:
        return make_doubly_stochastic(g, scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_domain(cfg, dim: int) -> FeasibleSet:
    spec = cfg.get("domain", "all_space")
    kind, _, arg = spec.partition(":")
    if kind == "all_space":
        return FeasibleSet()
    if kind == "ball":
        return FeasibleSet.ball(float(arg))
    if kind == "box":
        lo, _, hi = arg.partition(":")
        return FeasibleSet.box(np.full(dim, float(lo)), np.full(dim, float(hi)))
    raise ConfigError(f"unknown domain {spec!r}; use all_space, ball:<radius> or box:<lo>:<hi>")


def build_data(cfg, n_train: int) -> tuple[Dataset, Dataset | None]:
    """Training stream and optional held-out set."""
    seed = get_int(cfg, "seed")
    if "dataset" in cfg:
        normalize = get_bool(cfg, "normalize") if "normalize" in cfg else True
        train = load_sparse_dataset(cfg["dataset"], normalize=normalize)
        test = None
        if "test_dataset" in cfg:
            test = load_sparse_dataset(cfg["test_dataset"], n_features=train.dim, normalize=normalize)
        if len(train) < n_train:
            raise ConfigError(f"dataset has {len(train)} examples, the run needs {n_train}")
        return train, test
    n_test = get_int(cfg, "n_test") if "n_test" in cfg else 0
    data, _ = generate_synthetic(n_train + n_test, get_int(cfg, "dim"), get_float(cfg, "flip_rate"), seed)
    train, test = data.split(n_train)
    return train, (test if n_test else None)


def parse_nodes(text: str, m: int, exclude: int | None = None) -> list[int]:
    if text.strip() == "all":
        return [v for v in range(m) if v != exclude]
    try:
        nodes = sorted({int(tok) for tok in text.replace(",", " ").split()})
    except ValueError:
        raise ConfigError(f"bad node list {text!r}") from None
    if not nodes or any(not 0 <= v < m for v in nodes):
        raise ConfigError(f"node list {text!r} must name nodes in 0..{m - 1}")
    return nodes
