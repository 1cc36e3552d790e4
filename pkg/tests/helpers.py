"""Shared test fixtures: random networks and random feasible distortions."""

from __future__ import annotations

import numpy as np

from gausstree.network import TreeNetwork, directed_edges


def random_tree(
    rng: np.random.Generator,
    n_sources: int,
    mode: str = "aggregation",
    weight_range: tuple[float, float] = (0.2, 3.0),
) -> TreeNetwork:
    """Uniform random recursive tree with weights drawn from ``weight_range``.

    ``aggregation`` gives ``n_sources`` weighted nodes under an unweighted
    sink 0; ``consensus`` gives ``n_sources`` nodes that are all weighted
    (node 0 included).
    """
    lo, hi = weight_range
    if mode == "aggregation":
        parents = {i: int(rng.integers(0, i)) for i in range(1, n_sources + 1)}
        weights = {i: float(rng.uniform(lo, hi)) for i in range(1, n_sources + 1)}
    elif mode == "consensus":
        parents = {i: int(rng.integers(0, i)) for i in range(1, n_sources)}
        weights = {i: float(rng.uniform(lo, hi)) for i in range(n_sources)}
    else:
        raise ValueError(mode)
    return TreeNetwork(root=0, parents=parents, weights=weights)


def random_feasible_d(
    rng: np.random.Generator,
    net: TreeNetwork,
    fractions: tuple[float, float] = (0.05, 0.7),
) -> dict[int, float]:
    """Per-link distortions that are feasible by construction: each node
    describes a random fraction of its own test-channel variance."""
    d: dict[int, float] = {}
    sigma_hat: dict[int, float] = {}
    for node in net.leaves_first:
        if node == net.root:
            continue
        var = net.weight(node) ** 2 + sum(
            sigma_hat[c] - d[c] for c in net.children_of(node)
        )
        sigma_hat[node] = var
        d[node] = float(rng.uniform(*fractions)) * var
    return d


def random_feasible_consensus_d(
    rng: np.random.Generator,
    net: TreeNetwork,
    fractions: tuple[float, float] = (0.05, 0.7),
) -> dict:
    d: dict = {}
    sigma_hat: dict = {}
    for e in net.directed_edge_order:
        var = net.weight(e.src) ** 2 + sum(
            sigma_hat[(k, e.src)] - d[(k, e.src)]
            for k in net.neighbors[e.src]
            if k != e.dst
        )
        sigma_hat[e] = var
        d[e] = float(rng.uniform(*fractions)) * var
    return d


def equal_split(net: TreeNetwork, total: float) -> dict[int, float]:
    n = len(net.sources)
    return {i: total / n for i in net.sources}


def uniform_edge_d(net: TreeNetwork, value: float) -> dict:
    return {e: value for e in directed_edges(net)}
