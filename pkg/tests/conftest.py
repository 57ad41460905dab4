import itertools

import numpy as np
import pytest

from daol.graph import CommGraph


def brute_vertex_connectivity(g: CommGraph) -> int:
    """Smallest removal set that leaves >= 2 nodes not strongly connected; m-1 if none."""
    for k in range(g.m - 1):
        for cut in itertools.combinations(g.nodes, k):
            if not g.is_strongly_connected(removed=cut):
                return k
    return g.m - 1


def brute_min_vertex_cut(g: CommGraph, X, Y) -> int:
    """Smallest node set (may include X or Y nodes) meeting every X-Y path."""
    X, Y = set(X), set(Y)
    adj = {v: g.out_neighbors(v) for v in g.nodes}
    for k in range(g.m + 1):
        for cut in itertools.combinations(g.nodes, k):
            cut = set(cut)
            frontier = [x for x in X if x not in cut]
            seen = set(frontier)
            while frontier:
                v = frontier.pop()
                for u in adj[v]:
                    if u not in cut and u not in seen:
                        seen.add(u)
                        frontier.append(u)
            if not seen & Y:
                return k
    raise AssertionError("unreachable")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
