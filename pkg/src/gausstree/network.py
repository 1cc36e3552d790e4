"""Rooted weighted tree networks and their structural quantities.

A :class:`TreeNetwork` is the universe every bound, allocator and
simulator runs over: a rooted tree whose nodes observe independent unit
Gaussians scaled by per-node weights.  Two flavours exist:

* aggregation mode -- the root is an unweighted sink that collects the
  weighted sum of every other node's data, and
* consensus mode -- every node (the root included) carries a weight and
  wants the full weighted sum, so every node acts as the root of its own
  directed tree.

All derived quantities (subtree member sets, subtree variances, directed
trees, oriented subtrees, edge multiplicities) are computed here so that
the bound/allocation modules stay purely arithmetic.

Tree documents are UTF-8 JSON::

    {"root": 0, "nodes": [{"id": 1, "weight": 1.0, "parent": 0}, ...]}

The root appears in ``nodes`` only when it carries a weight (consensus
mode); an aggregation sink is listed only under ``"root"``.  Weights must
be finite decimal literals; ``NaN``/``Infinity`` literals are rejected.
"""

from __future__ import annotations

import json
import math
import operator
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from math import fsum
from typing import Mapping, NamedTuple, Sequence

from .errors import InputError

__all__ = [
    "MAX_NODES",
    "DirectedEdge",
    "SubtreeStats",
    "TreeError",
    "TreeNetwork",
    "directed_edges",
    "directed_tree",
    "edge_multiplicity",
    "make_consensus_line",
    "make_line",
    "oriented_subtree_stats",
    "parse_tree",
    "subtree_stats",
]

#: Hard cap on network size; everything here is O(n^2) worst case.
MAX_NODES = 10_000


class TreeError(InputError):
    """Invalid tree structure or tree document."""


class DirectedEdge(NamedTuple):
    """An orientation ``src -> dst`` of an existing tree edge."""

    src: int
    dst: int

    def reversed(self) -> "DirectedEdge":
        return DirectedEdge(self.dst, self.src)

    def __str__(self) -> str:  # used in diagnostics and CSV link labels
        return f"{self.src}->{self.dst}"


@dataclass(frozen=True)
class SubtreeStats:
    """A node set together with the per-entry variance of its partial sum.

    ``variance`` is the sum of squared weights over ``members``; it is the
    variance of each entry of the weighted partial sum carried by the set.
    """

    members: frozenset[int]
    variance: float


def _check_node_id(value: object, what: str) -> int:
    if isinstance(value, bool):
        raise TreeError(f"{what} must be an integer, got {value!r}")
    try:
        node = operator.index(value)  # accepts int and numpy integers
    except TypeError:
        raise TreeError(f"{what} must be an integer, got {value!r}") from None
    if node < 0:
        raise TreeError(f"{what} must be non-negative, got {node}")
    return node


def _check_weight(node: int, value: object) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TreeError(f"node {node}: weight must be a number, got {value!r}")
    w = float(value)
    if not math.isfinite(w):
        raise TreeError(f"node {node}: weight must be finite, got {w!r}")
    if w == 0.0:
        raise TreeError(f"node {node}: weight must be nonzero")
    return w


@dataclass(frozen=True)
class TreeNetwork:
    """Immutable rooted weighted tree.

    Parameters
    ----------
    root : int
        The designated root.  In aggregation mode this is the sink and
        carries no weight; in consensus mode it is weighted like every
        other node.
    parents : mapping int -> int
        Parent of every non-root node.  Must induce a connected acyclic
        graph reaching ``root``.
    weights : mapping int -> float
        Weight of every node that observes data.  Must cover all non-root
        nodes; the root entry is optional (absent = aggregation sink).

    Node ids must be dense integers ``0 .. n_nodes-1``.  Instances are
    immutable after construction and safe to share across threads.
    """

    root: int
    parents: Mapping[int, int]
    weights: Mapping[int, float]

    def __post_init__(self) -> None:
        parents = {
            _check_node_id(k, "node id"): _check_node_id(v, f"parent of node {k}")
            for k, v in self.parents.items()
        }
        weights = {
            _check_node_id(k, "node id"): _check_weight(k, v)
            for k, v in self.weights.items()
        }
        root = _check_node_id(self.root, "root id")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "weights", weights)

        nodes = {root} | set(parents)
        if root in parents:
            raise TreeError(f"root {root} must not have a parent")
        n = len(nodes)
        if n > MAX_NODES:
            raise TreeError(f"network has {n} nodes, maximum supported is {MAX_NODES}")
        if nodes != set(range(n)):
            missing = sorted(set(range(n)) - nodes)
            extra = sorted(nodes - set(range(n)))
            raise TreeError(
                f"node ids must be dense 0..{n - 1}; missing {missing}, unexpected {extra}"
            )
        for child, parent in parents.items():
            if parent not in nodes:
                raise TreeError(f"node {child}: parent {parent} is not a node")

        # Every node must reach the root without revisiting anything.
        state: dict[int, int] = {root: 2}  # 1 = on current path, 2 = resolved
        for start in sorted(parents):
            path = []
            node = start
            while state.get(node, 0) == 0:
                state[node] = 1
                path.append(node)
                node = parents[node]
            if state[node] == 1:
                raise TreeError(f"cycle detected through node {node}")
            for visited in path:
                state[visited] = 2

        for node in sorted(nodes):
            if node != root and node not in weights:
                raise TreeError(f"node {node}: missing weight")
        for node in weights:
            if node not in nodes:
                raise TreeError(f"weight given for unknown node {node}")

    # -- basic structure ------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.parents) + 1

    @cached_property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(range(self.n_nodes))

    @cached_property
    def sources(self) -> tuple[int, ...]:
        """Non-root nodes in ascending order; one per tree link."""
        return tuple(i for i in self.node_ids if i != self.root)

    @cached_property
    def children(self) -> dict[int, tuple[int, ...]]:
        table: dict[int, list[int]] = {i: [] for i in self.node_ids}
        for child in sorted(self.parents):
            table[self.parents[child]].append(child)
        return {i: tuple(kids) for i, kids in table.items()}

    def children_of(self, i: int) -> tuple[int, ...]:
        self._require_node(i)
        return self.children[i]

    def parent_of(self, i: int) -> int | None:
        self._require_node(i)
        return self.parents.get(i)

    @cached_property
    def neighbors(self) -> dict[int, tuple[int, ...]]:
        table: dict[int, set[int]] = {i: set() for i in self.node_ids}
        for child, parent in self.parents.items():
            table[child].add(parent)
            table[parent].add(child)
        return {i: tuple(sorted(adj)) for i, adj in table.items()}

    def is_leaf(self, i: int) -> bool:
        return not self.children_of(i)

    def has_weight(self, i: int) -> bool:
        self._require_node(i)
        return i in self.weights

    @cached_property
    def fully_weighted(self) -> bool:
        return self.root in self.weights

    def weight(self, i: int) -> float:
        """Weight of node ``i``; an unweighted aggregation sink reads as 0."""
        self._require_node(i)
        return self.weights.get(i, 0.0)

    def _require_node(self, i: int) -> None:
        node = _check_node_id(i, "node id")
        if node >= self.n_nodes:
            raise TreeError(f"unknown node id {node}")

    @cached_property
    def leaves_first(self) -> tuple[int, ...]:
        """Node order with every child before its parent (root last)."""
        order: list[int] = []
        seen = [False] * self.n_nodes
        stack = [self.root]
        while stack:
            node = stack[-1]
            if not seen[node]:
                seen[node] = True
                stack.extend(reversed(self.children[node]))
            else:
                stack.pop()
                order.append(node)
        return tuple(order)

    # -- subtrees and variances ------------------------------------------

    def subtree_members(self, i: int) -> frozenset[int]:
        self._require_node(i)
        out = set()
        queue = deque([i])
        while queue:
            node = queue.popleft()
            out.add(node)
            queue.extend(self.children[node])
        return frozenset(out)

    @cached_property
    def subtree_variances(self) -> dict[int, float]:
        # w_i^2 plus children subtree variances, evaluated leaves-first so
        # the recursion is a single pass; fsum keeps the sums exact.
        var: dict[int, float] = {}
        for node in self.leaves_first:
            terms = [self.weight(node) ** 2]
            terms.extend(var[c] for c in self.children[node])
            var[node] = fsum(terms)
        return var

    def _require_adjacent(self, edge: tuple[int, int]) -> DirectedEdge:
        try:
            src, dst = edge
        except (TypeError, ValueError):
            raise TreeError(f"expected a (src, dst) pair, got {edge!r}") from None
        e = DirectedEdge(_check_node_id(src, "edge source"), _check_node_id(dst, "edge target"))
        self._require_node(e.src)
        self._require_node(e.dst)
        if e.dst not in self.neighbors[e.src]:
            raise TreeError(f"nodes {e.src} and {e.dst} are not adjacent")
        return e

    def oriented_members(self, edge: tuple[int, int]) -> frozenset[int]:
        """Component of ``src`` once the undirected edge {src, dst} is cut."""
        e = self._require_adjacent(edge)
        out = set()
        queue = deque([e.src])
        while queue:
            node = queue.popleft()
            out.add(node)
            queue.extend(
                nb for nb in self.neighbors[node] if nb not in out and nb != e.dst
            )
        return frozenset(out)

    @cached_property
    def oriented_variances(self) -> dict[DirectedEdge, float]:
        var: dict[DirectedEdge, float] = {}
        for e in self.directed_edge_order:
            terms = [self.weight(e.src) ** 2]
            terms.extend(
                var[DirectedEdge(k, e.src)]
                for k in self.neighbors[e.src]
                if k != e.dst
            )
            var[e] = fsum(terms)
        return var

    @cached_property
    def directed_edge_order(self) -> tuple[DirectedEdge, ...]:
        """All 2(n-1) directed edges, every edge after its feeding edges.

        Edge ``b -> a`` depends on ``k -> b`` for the other neighbours
        ``k`` of ``b``, whose oriented subtrees are strictly smaller, so
        ordering by oriented-subtree size gives a valid evaluation order.
        """
        edges = []
        for child in sorted(self.parents):
            edges.append(DirectedEdge(child, self.parents[child]))
            edges.append(DirectedEdge(self.parents[child], child))
        sizes = {e: len(self.oriented_members(e)) for e in edges}
        return tuple(sorted(edges, key=lambda e: (sizes[e], e)))

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        nodes = []
        for i in self.node_ids:
            if i == self.root and not self.fully_weighted:
                continue
            entry: dict[str, object] = {"id": i, "weight": self.weights[i]}
            if i != self.root:
                entry["parent"] = self.parents[i]
            nodes.append(entry)
        return {"root": self.root, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_parents(
        cls,
        parents: Mapping[int, int],
        weights: Mapping[int, float],
        root: int = 0,
    ) -> "TreeNetwork":
        return cls(root=root, parents=dict(parents), weights=dict(weights))


def parse_tree(text: str) -> TreeNetwork:
    """Parse a tree document (see the module docstring for the format).

    Raises
    ------
    TreeError
        Malformed document, cycle, disconnected node, duplicate id,
        zero/non-finite weight, or non-finite JSON literal; each message
        carries the offending node id and reason.
    """

    def reject_constant(value: str) -> float:
        raise TreeError(f"non-finite literal {value!r} in tree document")

    try:
        doc = json.loads(text, parse_constant=reject_constant)
    except json.JSONDecodeError as exc:
        raise TreeError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise TreeError("tree document must be a JSON object")
    if "root" not in doc or "nodes" not in doc:
        raise TreeError('tree document requires "root" and "nodes" keys')
    root = _check_node_id(doc["root"], "root id")
    entries = doc["nodes"]
    if not isinstance(entries, list):
        raise TreeError('"nodes" must be a list')

    parents: dict[int, int] = {}
    weights: dict[int, float] = {}
    for entry in entries:
        if not isinstance(entry, dict) or "id" not in entry:
            raise TreeError(f"node entry {entry!r} must be an object with an 'id'")
        node = _check_node_id(entry["id"], "node id")
        if node in weights:
            raise TreeError(f"node {node}: duplicate id")
        if "weight" not in entry:
            raise TreeError(f"node {node}: missing weight")
        weights[node] = _check_weight(node, entry["weight"])
        parent = entry.get("parent")
        if node == root:
            if parent is not None:
                raise TreeError(f"node {node}: the root must not declare a parent")
        else:
            if parent is None:
                raise TreeError(f"node {node}: missing parent")
            parents[node] = _check_node_id(parent, f"parent of node {node}")
    return TreeNetwork(root=root, parents=parents, weights=weights)


def make_line(n: int, weights: Sequence[float]) -> TreeNetwork:
    """Aggregation line network ``v0 <- v1 <- ... <- vn``.

    ``n`` is the number of weighted nodes; the sink ``v0`` is unweighted
    and ``parent(i) = i - 1``.
    """
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise TreeError(f"line length must be a positive integer, got {n!r}")
    if len(weights) != n:
        raise TreeError(f"expected {n} weights, got {len(weights)}")
    parents = {i: i - 1 for i in range(1, n + 1)}
    wmap = {i + 1: _check_weight(i + 1, w) for i, w in enumerate(weights)}
    return TreeNetwork(root=0, parents=parents, weights=wmap)


def make_consensus_line(weights: Sequence[float]) -> TreeNetwork:
    """Fully weighted line network on ``len(weights)`` nodes, rooted at 0."""
    if len(weights) < 1:
        raise TreeError("a consensus line needs at least one node")
    parents = {i: i - 1 for i in range(1, len(weights))}
    wmap = {i: _check_weight(i, w) for i, w in enumerate(weights)}
    return TreeNetwork(root=0, parents=parents, weights=wmap)


def subtree_stats(net: TreeNetwork, i: int) -> SubtreeStats:
    """Members and partial-sum variance of node ``i`` plus its descendants."""
    net._require_node(i)
    return SubtreeStats(net.subtree_members(i), net.subtree_variances[i])


def directed_tree(net: TreeNetwork, k: int) -> tuple[DirectedEdge, ...]:
    """Edges of the tree oriented towards root ``k``.

    Exactly ``n_nodes - 1`` edges; ``(i -> j)`` is present iff ``j`` is
    the parent of ``i`` once the tree is re-rooted at ``k``.
    """
    net._require_node(k)
    edges = []
    seen = {k}
    queue = deque([k])
    while queue:
        node = queue.popleft()
        for nb in net.neighbors[node]:
            if nb not in seen:
                seen.add(nb)
                edges.append(DirectedEdge(nb, node))
                queue.append(nb)
    return tuple(sorted(edges))


def oriented_subtree_stats(net: TreeNetwork, edge: tuple[int, int]) -> SubtreeStats:
    """Members and variance on the ``src`` side of directed edge ``src -> dst``.

    The member set is the component of ``src`` in the tree with the
    undirected edge removed.  An unweighted aggregation sink contributes
    zero variance; consensus computations require fully weighted networks
    and enforce that separately.
    """
    e = net._require_adjacent(edge)
    return SubtreeStats(net.oriented_members(e), net.oriented_variances[e])


def edge_multiplicity(net: TreeNetwork, edge: tuple[int, int]) -> int:
    """Number of roots ``k`` whose directed tree uses ``src -> dst``.

    Equals the number of nodes on the ``dst`` side of the cut.
    """
    e = net._require_adjacent(edge)
    return net.n_nodes - len(net.oriented_members(e))


def directed_edges(net: TreeNetwork) -> tuple[DirectedEdge, ...]:
    """All 2(n-1) directed edges in ascending ``(src, dst)`` order."""
    return tuple(sorted(net.directed_edge_order))


def normalize_edge_map(
    net: TreeNetwork, values: Mapping[tuple[int, int], float], what: str
) -> dict[DirectedEdge, float]:
    """Validate a per-directed-edge map: full coverage, positive entries."""
    table: dict[DirectedEdge, float] = {}
    for key, value in values.items():
        e = net._require_adjacent(key)
        table[e] = float(value)
    missing = [e for e in directed_edges(net) if e not in table]
    if missing:
        raise InputError(f"{what}: missing entries for edges {[str(e) for e in missing]}")
    for e, v in table.items():
        if not math.isfinite(v) or v <= 0.0:
            raise InputError(f"{what}: edge {e} must be positive and finite, got {v!r}")
    return table


def normalize_link_map(
    net: TreeNetwork, values: Mapping[int, float], what: str
) -> dict[int, float]:
    """Validate a per-link (per non-root node) map: coverage, positivity."""
    table: dict[int, float] = {}
    for key, value in values.items():
        net._require_node(key)
        if key == net.root:
            raise InputError(f"{what}: the root has no uplink")
        table[int(key)] = float(value)
    missing = [i for i in net.sources if i not in table]
    if missing:
        raise InputError(f"{what}: missing entries for nodes {missing}")
    for i, v in table.items():
        if not math.isfinite(v) or v <= 0.0:
            raise InputError(f"{what}: node {i} must be positive and finite, got {v!r}")
    return table


