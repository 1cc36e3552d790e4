"""Rate bounds and distortion identities on Gaussian tree networks.

Aggregation mode works per uplink (one per non-root node): the exact
distortion-accumulation recursions, the incremental-distortion outer
bound with its square-root entropy penalty, the classical cut-set outer
bound, the Gaussian-codebook inner bound driven by the test-channel
variance recursion, and the gap between the two outer bounds together
with its line-network asymptote ``0.5 * log2(n!)``.

Consensus mode repeats the same structure once per directed edge, with
oriented subtrees replacing rooted subtrees and per-root distortions
summing the incremental distortions along each directed tree.

All bound values are reported raw -- they may go negative once
incremental distortions approach the subtree variances.  Callers that
want the information-theoretically meaningful value clip at zero via
:meth:`BoundsReport.effective`; reports flag the degenerate regime
explicitly instead of hiding it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import fsum, log2
from typing import Mapping

from .errors import ConsistencyError, InfeasibleError, InputError
from .infomeasures import LOG2E
from .network import (
    DirectedEdge,
    TreeNetwork,
    directed_edges,
    directed_tree,
    normalize_edge_map,
    normalize_link_map,
)

__all__ = [
    "BoundsReport",
    "ConsensusProfile",
    "DistortionProfile",
    "GapReport",
    "InnerBound",
    "OuterBound",
    "classical_consensus_comparator_bits",
    "consensus_derive",
    "consensus_inner",
    "consensus_outer",
    "consensus_penalty",
    "consensus_report",
    "consensus_test_channel_variances",
    "cutset_bound",
    "derive_distortions",
    "full_report",
    "gap_report",
    "inner_bound",
    "inner_bound_minimized",
    "line_gap_asymptote",
    "outer_bound_closed_form",
    "outer_bound_incremental",
    "outer_bound_penalty",
    "test_channel_variances",
]

#: Slack allowed before the test-channel variance recursion is declared
#: inconsistent with the subtree variances it can never exceed.
_RECURSION_TOL = 1e-9


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class DistortionProfile:
    """Per-link incremental distortions with their derived companions.

    ``inc[i]`` is the incremental distortion on the uplink of node ``i``;
    ``tx[i]`` sums the incremental distortions strictly inside the
    subtree of ``i`` (zero at leaves), ``rx[i] = tx[i] + inc[i]`` exactly,
    and ``total`` is the end-to-end distortion ``sum(inc)``.
    """

    inc: dict[int, float]
    tx: dict[int, float]
    rx: dict[int, float]
    total: float


@dataclass(frozen=True)
class ConsensusProfile:
    """Per-directed-edge incremental distortions and per-root totals.

    ``per_root[k]`` sums ``inc`` over the directed tree towards ``k``;
    ``total`` sums the per-root values (each edge counted once per root
    that uses it).
    """

    inc: dict[DirectedEdge, float]
    tx: dict[DirectedEdge, float]
    rx: dict[DirectedEdge, float]
    per_root: dict[int, float]
    total: float


def derive_distortions(net: TreeNetwork, inc: Mapping[int, float]) -> DistortionProfile:
    """Fill the exact distortion-accumulation recursions for ``inc``.

    Parameters
    ----------
    net : TreeNetwork
    inc : mapping node -> float
        Strictly positive incremental distortion per non-root node.

    Returns
    -------
    DistortionProfile
        With ``rx = tx + inc`` per link and ``total = sum(inc)``, all
        exact; deriving twice is idempotent.
    """
    inc = normalize_link_map(net, inc, "incremental distortions")
    # Direct correctly-rounded sums over the strict subtree rather than a
    # cascaded recursion, so tx equals the member-enumeration sum exactly.
    tx = {
        i: fsum(inc[j] for j in net.subtree_members(i) if j != i)
        for i in net.sources
    }
    rx = {i: tx[i] + inc[i] for i in net.sources}
    return DistortionProfile(inc=inc, tx=tx, rx=rx, total=fsum(inc.values()))


def consensus_derive(
    net: TreeNetwork, inc: Mapping[tuple[int, int], float]
) -> ConsensusProfile:
    """Derived distortions for consensus: one recursion per directed edge.

    ``tx[b -> a]`` sums ``inc`` over the edges strictly below ``b -> a``
    in the directed tree towards ``a``; ``per_root[k]`` sums ``inc`` over
    the full directed tree towards ``k``.
    """
    _require_consensus(net)
    inc = normalize_edge_map(net, inc, "incremental distortions")
    tx: dict[DirectedEdge, float] = {}
    for e in net.directed_edge_order:
        members = net.oriented_members(e)
        tx[e] = fsum(
            inc[f] for f in directed_tree(net, e.dst) if f != e and f.src in members
        )
    rx = {e: tx[e] + inc[e] for e in inc}
    per_root = {
        k: fsum(inc[e] for e in directed_tree(net, k)) for k in net.node_ids
    }
    return ConsensusProfile(
        inc=inc,
        tx=tx,
        rx=rx,
        per_root=per_root,
        total=fsum(per_root[k] for k in sorted(per_root)),
    )


def _require_consensus(net: TreeNetwork) -> None:
    if not net.fully_weighted:
        raise InputError(
            "consensus computations need a weight on every node, including the root"
        )
    if net.n_nodes < 2:
        raise InputError("consensus needs at least two nodes")


# ---------------------------------------------------------------------------
# outer bounds


def outer_bound_penalty(net: TreeNetwork, i: int, x: float) -> float:
    """Square-root penalty discounted from the per-link outer bound.

    ``x / (2 w_i^2) + log2(e) / (2 s2) * sqrt(2 x (4 s2 + x))`` with
    ``s2`` the subtree variance of node ``i``.  Zero at ``x = 0``,
    strictly increasing, and of order ``sqrt(x)`` for small ``x``.
    """
    net._require_node(i)
    if i == net.root:
        raise InputError("the root has no uplink, so no penalty term")
    if not (x >= 0.0 and math.isfinite(x)):
        raise InputError(f"penalty argument must be non-negative, got {x!r}")
    s2 = net.subtree_variances[i]
    w2 = net.weight(i) ** 2
    return x / (2.0 * w2) + LOG2E / (2.0 * s2) * math.sqrt(2.0 * x * (4.0 * s2 + x))


def consensus_penalty(net: TreeNetwork, edge: tuple[int, int], x: float) -> float:
    """Directed-edge analog of :func:`outer_bound_penalty`: uses the
    transmitting node's weight and the oriented-subtree variance."""
    e = net._require_adjacent(edge)
    if not (x >= 0.0 and math.isfinite(x)):
        raise InputError(f"penalty argument must be non-negative, got {x!r}")
    s2 = net.oriented_variances[e]
    w2 = net.weight(e.src) ** 2
    if w2 == 0.0:
        raise InputError(f"edge {e}: transmitting node carries no weight")
    return x / (2.0 * w2) + LOG2E / (2.0 * s2) * math.sqrt(2.0 * x * (4.0 * s2 + x))


@dataclass(frozen=True)
class OuterBound:
    """A summed lower bound on the sum rate plus its per-link pieces."""

    total_bits: float
    per_link_bits: dict


def outer_bound_incremental(net: TreeNetwork, profile: DistortionProfile) -> OuterBound:
    """Incremental-distortion outer bound on the aggregation sum rate.

    Per link: ``0.5 * (log2(s2_i / inc_i) - penalty_i(tx_i))``, reported
    raw (no clipping).
    """
    per_link = {}
    for i in net.sources:
        s2 = net.subtree_variances[i]
        per_link[i] = 0.5 * (
            log2(s2 / profile.inc[i]) - outer_bound_penalty(net, i, profile.tx[i])
        )
    return OuterBound(fsum(per_link[i] for i in net.sources), per_link)


def outer_bound_closed_form(net: TreeNetwork, total_distortion: float) -> float:
    """Scheme-independent closed-form lower bound at total distortion ``D``:
    ``0.5 * log2(prod(s2_i) / (D/n)^n) - 0.5 * sum_i penalty_i(D)``."""
    if not (total_distortion > 0.0 and math.isfinite(total_distortion)):
        raise InfeasibleError(f"total distortion must be positive, got {total_distortion!r}")
    n = len(net.sources)
    log_product = fsum(log2(net.subtree_variances[i]) for i in net.sources)
    penalty = fsum(outer_bound_penalty(net, i, total_distortion) for i in net.sources)
    return 0.5 * (log_product - n * log2(total_distortion / n)) - 0.5 * penalty


def cutset_bound(net: TreeNetwork, profile: DistortionProfile) -> float:
    """Cut-set outer bound ``0.5 * sum_i log2(s2_i / rx_i)``."""
    return fsum(
        0.5 * log2(net.subtree_variances[i] / profile.rx[i]) for i in net.sources
    )


@dataclass(frozen=True)
class GapReport:
    """Difference between the incremental and cut-set outer bounds."""

    delta_r_bits: float
    per_link_bits: dict


def gap_report(net: TreeNetwork, profile: DistortionProfile) -> GapReport:
    """Per-link and total gap ``incremental bound - cut-set bound``.

    Each link contributes ``0.5 * log2(rx_i / inc_i) - 0.5 * penalty_i(tx_i)``;
    leaves contribute exactly zero.
    """
    per_link = {}
    for i in net.sources:
        per_link[i] = 0.5 * (
            log2(profile.rx[i] / profile.inc[i])
            - outer_bound_penalty(net, i, profile.tx[i])
        )
    return GapReport(fsum(per_link[i] for i in net.sources), per_link)


def line_gap_asymptote(n: int) -> float:
    """Small-distortion gap ``0.5 * log2(n!)`` on an equal-weight line,
    computed as a log sum so large ``n`` cannot overflow."""
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InputError(f"line length must be a positive integer, got {n!r}")
    return 0.5 * fsum(log2(k) for k in range(1, n + 1))


def consensus_outer(net: TreeNetwork, profile: ConsensusProfile) -> OuterBound:
    """Incremental-distortion outer bound on the consensus sum rate,
    summed over all directed edges with oriented-subtree variances."""
    _require_consensus(net)
    per_edge = {}
    for e in directed_edges(net):
        s2 = net.oriented_variances[e]
        per_edge[e] = 0.5 * (
            log2(s2 / profile.inc[e]) - consensus_penalty(net, e, profile.tx[e])
        )
    return OuterBound(fsum(per_edge[e] for e in directed_edges(net)), per_edge)


def classical_consensus_comparator_bits(n: int, total_distortion: float) -> float:
    """Order-level classical comparator ``max(0, n/2 * log2(1/(n^1.5 D)))``
    for the consensus sum rate.  Display only: the constants are
    order-level, not sharpened, so nothing is asserted against it."""
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InputError(f"node count must be a positive integer, got {n!r}")
    if not (total_distortion > 0.0 and math.isfinite(total_distortion)):
        raise InfeasibleError(f"total distortion must be positive, got {total_distortion!r}")
    return max(0.0, 0.5 * n * log2(1.0 / (n**1.5 * total_distortion)))


# ---------------------------------------------------------------------------
# inner bounds (test-channel recursions)


def test_channel_variances(net: TreeNetwork, d: Mapping[int, float]) -> dict[int, float]:
    """Estimate variances of the aggregation test-channel cascade.

    Leaves start at ``w^2``; an inner node adds its own ``w^2`` to the
    description variances ``sigma_hat^2 - d`` of its children.  Raises
    :class:`~gausstree.errors.InfeasibleError` when some ``d_i`` exceeds
    the variance the channel at ``i`` would have to describe.  The result
    never exceeds the subtree variances; a violation beyond round-off is
    reported as an internal-consistency failure.
    """
    d = normalize_link_map(net, d, "distortion parameters")
    sigma_hat: dict[int, float] = {}
    for node in net.leaves_first:
        if node == net.root:
            continue
        terms = [net.weight(node) ** 2]
        terms.extend(sigma_hat[c] - d[c] for c in net.children_of(node))
        var = fsum(terms)
        if d[node] > var:
            raise InfeasibleError(
                f"node {node}: distortion {d[node]:g} exceeds test-channel variance {var:g}"
            )
        s2 = net.subtree_variances[node]
        if var > s2 * (1.0 + _RECURSION_TOL):
            raise ConsistencyError(
                f"node {node}: test-channel variance {var:g} exceeds subtree variance {s2:g}"
            )
        sigma_hat[node] = var
    return sigma_hat


@dataclass(frozen=True)
class InnerBound:
    """Achievable (rate, distortion) pair in the infinite-blocklength limit."""

    rate_bits: float
    distortion: float
    sigma_hat: dict = field(repr=False)
    per_link_rate_bits: dict = field(repr=False)


def inner_bound(net: TreeNetwork, d: Mapping[int, float]) -> InnerBound:
    """Gaussian-codebook inner bound for aggregation.

    Rate ``0.5 * sum_i log2(s2_i / d_i)`` (subtree variances upper-bound
    the test-channel variances, so this is achievable) and distortion
    ``sum_i d_i``; validates the test-channel variance recursion.
    """
    sigma_hat = test_channel_variances(net, d)
    d = normalize_link_map(net, d, "distortion parameters")
    per_link = {
        i: 0.5 * log2(net.subtree_variances[i] / d[i]) for i in net.sources
    }
    return InnerBound(
        rate_bits=fsum(per_link[i] for i in net.sources),
        distortion=fsum(d[i] for i in net.sources),
        sigma_hat=sigma_hat,
        per_link_rate_bits=per_link,
    )


def inner_bound_minimized(net: TreeNetwork, total_distortion: float) -> float:
    """Inner-bound sum rate at the equal split ``d_i = D/n``:
    ``0.5 * log2(prod(s2_i) / (D/n)^n)``."""
    if not (total_distortion > 0.0 and math.isfinite(total_distortion)):
        raise InfeasibleError(f"total distortion must be positive, got {total_distortion!r}")
    n = len(net.sources)
    share = total_distortion / n
    test_channel_variances(net, {i: share for i in net.sources})
    log_product = fsum(log2(net.subtree_variances[i]) for i in net.sources)
    return 0.5 * (log_product - n * log2(share))


def consensus_test_channel_variances(
    net: TreeNetwork, d: Mapping[tuple[int, int], float]
) -> dict[DirectedEdge, float]:
    """Directed test-channel variance recursion for consensus."""
    _require_consensus(net)
    d = normalize_edge_map(net, d, "distortion parameters")
    sigma_hat: dict[DirectedEdge, float] = {}
    for e in net.directed_edge_order:
        terms = [net.weight(e.src) ** 2]
        terms.extend(
            sigma_hat[DirectedEdge(k, e.src)] - d[DirectedEdge(k, e.src)]
            for k in net.neighbors[e.src]
            if k != e.dst
        )
        var = fsum(terms)
        if d[e] > var:
            raise InfeasibleError(
                f"edge {e}: distortion {d[e]:g} exceeds test-channel variance {var:g}"
            )
        s2 = net.oriented_variances[e]
        if var > s2 * (1.0 + _RECURSION_TOL):
            raise ConsistencyError(
                f"edge {e}: test-channel variance {var:g} exceeds oriented variance {s2:g}"
            )
        sigma_hat[e] = var
    return sigma_hat


def consensus_inner(net: TreeNetwork, d: Mapping[tuple[int, int], float]) -> InnerBound:
    """Gaussian-codebook inner bound for consensus: rate summed over all
    directed edges, distortion summed per root over its directed tree."""
    sigma_hat = consensus_test_channel_variances(net, d)
    d = normalize_edge_map(net, d, "distortion parameters")
    per_edge = {
        e: 0.5 * log2(net.oriented_variances[e] / d[e]) for e in directed_edges(net)
    }
    distortion = fsum(
        fsum(d[e] for e in directed_tree(net, k)) for k in net.node_ids
    )
    return InnerBound(
        rate_bits=fsum(per_edge[e] for e in directed_edges(net)),
        distortion=distortion,
        sigma_hat=sigma_hat,
        per_link_rate_bits=per_edge,
    )


# ---------------------------------------------------------------------------
# assembled reports


@dataclass(frozen=True)
class BoundsReport:
    """Every bound evaluated for one network at one distortion budget.

    Aggregation-only fields are ``None`` in consensus mode.  Values are
    raw; :meth:`effective` clips at zero.  ``regime_warnings`` lists the
    links whose incremental distortion reaches the variance they carry,
    where the log terms stop being meaningful.
    """

    mode: str
    total_distortion: float
    outer_incremental_bits: float
    cutset_bits: float | None
    outer_closed_form_bits: float | None
    inner_bits: float
    inner_minimized_bits: float | None
    gap_inner_outer_bits: float
    gap_incremental_cutset_bits: float | None
    per_link_rates_bits: dict
    classical_comparator_bits: float | None = None
    regime_warnings: tuple[str, ...] = ()

    def effective(self) -> dict[str, float]:
        """Bound values clipped at zero (rates cannot be negative)."""
        out = {}
        for name in (
            "outer_incremental_bits",
            "cutset_bits",
            "outer_closed_form_bits",
            "inner_bits",
            "inner_minimized_bits",
        ):
            value = getattr(self, name)
            if value is not None:
                out[name] = max(0.0, value)
        return out

    def to_json_dict(self) -> dict:
        links = [
            {"link": _link_label(key), "rate_bits": rate}
            for key, rate in sorted(self.per_link_rates_bits.items())
        ]
        out: dict[str, object] = {
            "mode": self.mode,
            "total_distortion": self.total_distortion,
            "outer_incremental_bits": self.outer_incremental_bits,
            "inner_bits": self.inner_bits,
            "gap_inner_outer_bits": self.gap_inner_outer_bits,
            "per_link_rates_bits": links,
            "regime_warnings": list(self.regime_warnings),
        }
        if self.cutset_bits is not None:
            out["cutset_bits"] = self.cutset_bits
            out["delta_r_bits"] = self.gap_incremental_cutset_bits
        if self.outer_closed_form_bits is not None:
            out["outer_closed_form_bits"] = self.outer_closed_form_bits
        if self.inner_minimized_bits is not None:
            out["inner_minimized_bits"] = self.inner_minimized_bits
        if self.classical_comparator_bits is not None:
            out["classical_comparator_bits"] = self.classical_comparator_bits
        for name, value in self.effective().items():
            out["effective_" + name] = value
        return out

    def to_csv_rows(self) -> list[list]:
        header = [
            "link",
            "rate_bits",
            "outer_incremental_bits",
            "cutset_bits",
            "inner_bits",
            "delta_r_bits",
        ]
        rows: list[list] = [header]
        for key, rate in sorted(self.per_link_rates_bits.items()):
            rows.append([_link_label(key), rate, "", "", "", ""])
        rows.append(
            [
                "total",
                "",
                self.outer_incremental_bits,
                self.cutset_bits if self.cutset_bits is not None else "",
                self.inner_bits,
                self.gap_incremental_cutset_bits
                if self.gap_incremental_cutset_bits is not None
                else "",
            ]
        )
        return rows


def _link_label(key) -> str:
    if isinstance(key, DirectedEdge):
        return str(key)
    return str(int(key))


def _regime_warnings(net: TreeNetwork, inc: Mapping, variances: Mapping) -> tuple[str, ...]:
    warnings = []
    for key in sorted(inc):
        if inc[key] >= variances[key]:
            warnings.append(
                f"link {_link_label(key)}: incremental distortion {inc[key]:g} reaches "
                f"the carried variance {variances[key]:g}; bound terms are non-positive"
            )
    return tuple(warnings)


def full_report(
    net: TreeNetwork,
    total_distortion: float | None = None,
    inc: Mapping[int, float] | None = None,
) -> BoundsReport:
    """Aggregation :class:`BoundsReport`.

    Either pass ``total_distortion`` (profiled as the equal split
    ``d = D/n``) or an explicit per-link map ``inc`` (whose sum becomes
    the budget the closed-form bounds are evaluated at).
    """
    if inc is not None:
        inc = normalize_link_map(net, inc, "incremental distortions")
        total_distortion = fsum(inc.values())
    else:
        if total_distortion is None:
            raise InputError("either a total distortion or a per-link map is required")
        if not (total_distortion > 0.0 and math.isfinite(total_distortion)):
            raise InfeasibleError(
                f"total distortion must be positive, got {total_distortion!r}"
            )
        n = len(net.sources)
        inc = {i: total_distortion / n for i in net.sources}
    profile = derive_distortions(net, inc)
    outer = outer_bound_incremental(net, profile)
    cut = cutset_bound(net, profile)
    closed = outer_bound_closed_form(net, total_distortion)
    inner = inner_bound(net, inc)
    minimized = inner_bound_minimized(net, total_distortion)
    gap = gap_report(net, profile)
    return BoundsReport(
        mode="aggregation",
        total_distortion=total_distortion,
        outer_incremental_bits=outer.total_bits,
        cutset_bits=cut,
        outer_closed_form_bits=closed,
        inner_bits=inner.rate_bits,
        inner_minimized_bits=minimized,
        gap_inner_outer_bits=inner.rate_bits - outer.total_bits,
        gap_incremental_cutset_bits=gap.delta_r_bits,
        per_link_rates_bits=inner.per_link_rate_bits,
        regime_warnings=_regime_warnings(net, inc, net.subtree_variances),
    )


def consensus_report(
    net: TreeNetwork, inc: Mapping[tuple[int, int], float], total_distortion: float
) -> BoundsReport:
    """Consensus :class:`BoundsReport` for an explicit per-edge profile."""
    profile = consensus_derive(net, inc)
    outer = consensus_outer(net, profile)
    inner = consensus_inner(net, profile.inc)
    return BoundsReport(
        mode="consensus",
        total_distortion=total_distortion,
        outer_incremental_bits=outer.total_bits,
        cutset_bits=None,
        outer_closed_form_bits=None,
        inner_bits=inner.rate_bits,
        inner_minimized_bits=None,
        gap_inner_outer_bits=inner.rate_bits - outer.total_bits,
        gap_incremental_cutset_bits=None,
        per_link_rates_bits=inner.per_link_rate_bits,
        classical_comparator_bits=classical_consensus_comparator_bits(
            net.n_nodes, total_distortion
        ),
        regime_warnings=_regime_warnings(net, profile.inc, net.oriented_variances),
    )
