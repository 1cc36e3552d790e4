"""Numerical validation of the distortion-accumulation theory.

Two layers:

* an exact analytic oracle (:func:`analytic_mmse_check`) that expresses
  the whole test-channel cascade as scalar variables that are linear in a
  set of independent Gaussian primitives, evaluates every MMSE distortion
  by linear conditioning (Schur complements) on the induced joint
  covariance, and asserts the accumulation identities to 1e-10 relative;

* a Monte-Carlo simulator of the test-channel scheme (plus a dithered
  scalar-quantizer baseline) that reproduces the achieved distortions
  empirically with 3-sigma confidence intervals.

Joint-typicality encoding is replaced by exact sampling from the
test-channel conditional law of the description given the estimate: at
infinite blocklength the two coincide, and the conditional law preserves
every distortion identity checked here.

Randomness is counter-based: each (seed, trial, role, entity) tuple keys
an independent Philox stream, so per-node streams are reproducible and
insensitive to evaluation order.
"""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field
from math import fsum
from typing import Mapping

import numpy as np
from numpy.random import Generator, Philox

from . import bounds
from .allocation import RateAllocation
from .bounds import DistortionProfile
from .errors import ConsistencyError, InputError
from .infomeasures import test_channel_law
from .network import DirectedEdge, TreeNetwork, directed_edges, directed_tree

__all__ = [
    "AnalyticModel",
    "SimulationConfig",
    "SimulationResult",
    "analytic_mmse_check",
    "matched_test_channel_distortions",
    "simulate_aggregation",
    "simulate_consensus",
    "simulate_dithered_baseline",
]

_IDENTITY_TOL = 1e-10
_PSD_TOL = 1e-10

#: Clipping range of the dithered quantizer, in design standard deviations.
_DITHER_CLIP_SIGMAS = 4.0

_ROLE_SOURCE = 0
_ROLE_CHANNEL = 1
_ROLE_DITHER = 2


@dataclass(frozen=True)
class SimulationConfig:
    """Monte-Carlo run parameters.

    ``blocklength`` samples per node vector, ``trials`` independent
    repetitions, a 64-bit root ``seed``, the coding ``scheme``
    (``test-channel`` or ``dithered-quantizer``) and the network ``mode``
    (``aggregation`` or ``consensus``).
    """

    blocklength: int
    trials: int
    seed: int
    scheme: str = "test-channel"
    mode: str = "aggregation"

    def __post_init__(self) -> None:
        if not isinstance(self.blocklength, int) or self.blocklength < 1:
            raise InputError(f"blocklength must be a positive integer, got {self.blocklength!r}")
        if not isinstance(self.trials, int) or self.trials < 2:
            raise InputError(f"trials must be an integer >= 2, got {self.trials!r}")
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise InputError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.scheme not in ("test-channel", "dithered-quantizer"):
            raise InputError(f"unknown scheme {self.scheme!r}")
        if self.mode not in ("aggregation", "consensus"):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.blocklength * self.trials < 1000:
            _warnings.warn(
                "fewer than 1000 total samples; confidence intervals will be wide",
                stacklevel=3,
            )


def _stream(seed: int, trial: int, role: int, index: int) -> Generator:
    # One Philox stream per (seed, trial, role, entity); streams can never
    # collide because they start in distinct 2^64-sized counter blocks.
    counter = np.array([0, role, index, trial], dtype=np.uint64)
    key = np.array([seed, 0], dtype=np.uint64)
    return Generator(Philox(counter=counter, key=key))


# ---------------------------------------------------------------------------
# exact analytic oracle


@dataclass(frozen=True, eq=False)
class AnalyticModel:
    """Exact joint Gaussian law of the scalar test-channel cascade.

    ``joint_covariance`` stacks all sources, all descriptions and all
    estimates (ordering in ``labels``).  The distortion dictionaries are
    computed by conditioning, not by the accumulation recursions, so they
    double as an independent check of those recursions.
    """

    mode: str
    labels: tuple[str, ...]
    joint_covariance: np.ndarray = field(repr=False)
    inc: dict
    tx: dict
    rx: dict
    total: float
    per_root: dict | None = None
    link_order: tuple = ()
    incremental_error_cov: np.ndarray = field(default=None, repr=False)
    receiver_gains: dict = field(default_factory=dict, repr=False)
    receiver_info: dict = field(default_factory=dict, repr=False)


class _LinearGaussian:
    """Zero-mean variables as linear combinations of independent primitives."""

    def __init__(self, primitive_variances: list[float]):
        self.prim_var = np.asarray(primitive_variances, dtype=float)
        self.rows: dict[object, np.ndarray] = {}

    def basis(self, index: int) -> np.ndarray:
        row = np.zeros(self.prim_var.size)
        row[index] = 1.0
        return row

    def variance(self, row: np.ndarray) -> float:
        return float(row @ (self.prim_var * row))

    def covariance_matrix(self, keys: list) -> np.ndarray:
        stack = np.vstack([self.rows[k] for k in keys])
        return stack @ (self.prim_var[:, None] * stack.T)

    def condition(self, target: np.ndarray, info_keys: list):
        """MMSE of ``target`` given the listed variables.

        Returns ``(gain, estimate_row, error_variance)``; the minimal-norm
        gain is used when the information covariance is singular (which
        happens only for rate-0 descriptions).
        """
        info = np.vstack([self.rows[k] for k in info_keys])
        cov_ii = info @ (self.prim_var[:, None] * info.T)
        cov_it = info @ (self.prim_var * target)
        gain, *_ = np.linalg.lstsq(cov_ii, cov_it, rcond=None)
        estimate = gain @ info
        return gain, estimate, self.variance(target) - float(gain @ cov_it)


def _relative_check(name: str, got: float, want: float, scale: float) -> None:
    if abs(got - want) > _IDENTITY_TOL * max(abs(scale), 1e-300) + 1e-14:
        raise ConsistencyError(f"{name}: got {got!r}, expected {want!r}")


def _check_psd(cov: np.ndarray) -> None:
    eigs = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    scale = max(float(eigs[-1]), 1.0)
    if eigs[0] < -_PSD_TOL * scale:
        raise ConsistencyError(
            f"analytic joint covariance is not PSD (min eigenvalue {eigs[0]:g})"
        )


def analytic_mmse_check(
    net: TreeNetwork, d: Mapping, mode: str = "aggregation"
) -> AnalyticModel:
    """Build the exact scalar model and verify distortion accumulation.

    Every estimate is a linear function of the independent primitives
    (unit-variance sources and the conditional test-channel noises), so
    all MMSE quantities are exact.  Verifies, per link: the incremental
    distortion equals the tuning parameter, the transmit distortion sums
    the strictly-downstream parameters, and receive = transmit +
    incremental; end-to-end, the total distortion equals the parameter
    sum.  Violations raise :class:`~gausstree.errors.ConsistencyError`.
    """
    if mode == "aggregation":
        return _analytic_aggregation(net, d)
    if mode == "consensus":
        return _analytic_consensus(net, d)
    raise InputError(f"unknown mode {mode!r}")


def _analytic_aggregation(net: TreeNetwork, d: Mapping[int, float]) -> AnalyticModel:
    sigma_hat = bounds.test_channel_variances(net, d)
    d = {i: float(d[i]) for i in net.sources}
    laws = {i: test_channel_law(sigma_hat[i], d[i]) for i in net.sources}

    sources = net.sources
    x_index = {i: k for k, i in enumerate(sources)}
    w_index = {i: len(sources) + k for k, i in enumerate(sources)}
    system = _LinearGaussian(
        [1.0] * len(sources) + [laws[i].conditional_variance for i in sources]
    )
    for i in sources:
        system.rows[("x", i)] = system.basis(x_index[i])
    for node in net.leaves_first:
        if node == net.root:
            continue
        row = net.weight(node) * system.rows[("x", node)]
        for c in net.children_of(node):
            row = row + system.rows[("V", c)]
        system.rows[("U", node)] = row
        system.rows[("V", node)] = laws[node].gain * row + system.basis(w_index[node])

    def partial_sum_row(members) -> np.ndarray:
        row = np.zeros(system.prim_var.size)
        for j in sorted(members):
            if j != net.root:
                row += net.weight(j) * system.rows[("x", j)]
        return row

    def info_at(node: int) -> list:
        keys: list = [("V", c) for c in net.children_of(node)]
        if node != net.root:
            keys.append(("x", node))
        return keys

    inc: dict[int, float] = {}
    tx: dict[int, float] = {}
    rx: dict[int, float] = {}
    receiver_gains: dict[int, np.ndarray] = {}
    receiver_info: dict[int, tuple] = {}
    error_rows = []
    for i in sources:
        target = partial_sum_row(net.subtree_members(i))
        _, est_tx, tx[i] = system.condition(target, info_at(i))
        parent_info = info_at(net.parents[i])
        gain, est_rx, rx[i] = system.condition(target, parent_info)
        receiver_gains[i] = gain
        receiver_info[i] = tuple(parent_info)
        diff = est_rx - est_tx
        inc[i] = system.variance(diff)
        error_rows.append(diff)

        _relative_check(f"link {i}: incremental distortion", inc[i], d[i], d[i])
        downstream = fsum(d[j] for j in net.subtree_members(i) if j != i)
        _relative_check(f"link {i}: transmit distortion", tx[i], downstream, rx[i])
        _relative_check(f"link {i}: receive distortion", rx[i], tx[i] + inc[i], rx[i])

    total_row = partial_sum_row(net.subtree_members(net.root))
    root_gain, root_estimate, total = system.condition(total_row, info_at(net.root))
    description_sum = np.sum(
        [system.rows[("V", c)] for c in net.children_of(net.root)], axis=0
    )
    # The sink's MMSE estimate must literally be the sum of the received
    # descriptions, which is what the coding scheme outputs.
    if system.variance(root_estimate - description_sum) > _IDENTITY_TOL:
        raise ConsistencyError("sink estimate differs from the description sum")
    expected_total = fsum(d[i] for i in sources)
    _relative_check("total distortion", total, expected_total, expected_total)

    error_stack = np.vstack(error_rows)
    labels = (
        [f"x{i}" for i in sources]
        + [f"V{i}" for i in sources]
        + [f"U{i}" for i in sources]
    )
    keys = [("x", i) for i in sources] + [("V", i) for i in sources] + [
        ("U", i) for i in sources
    ]
    joint = system.covariance_matrix(keys)
    _check_psd(joint)
    return AnalyticModel(
        mode="aggregation",
        labels=tuple(labels),
        joint_covariance=joint,
        inc=inc,
        tx=tx,
        rx=rx,
        total=total,
        link_order=tuple(sources),
        incremental_error_cov=error_stack @ (system.prim_var[:, None] * error_stack.T),
        receiver_gains=receiver_gains,
        receiver_info=receiver_info,
    )


def _analytic_consensus(net: TreeNetwork, d: Mapping) -> AnalyticModel:
    sigma_hat = bounds.consensus_test_channel_variances(net, d)
    edges = directed_edges(net)
    d = {e: float(d[e]) for e in edges}
    laws = {e: test_channel_law(sigma_hat[e], d[e]) for e in edges}

    nodes = net.node_ids
    x_index = {i: k for k, i in enumerate(nodes)}
    w_index = {e: len(nodes) + k for k, e in enumerate(edges)}
    system = _LinearGaussian(
        [1.0] * len(nodes) + [laws[e].conditional_variance for e in edges]
    )
    for i in nodes:
        system.rows[("x", i)] = system.basis(x_index[i])
    for e in net.directed_edge_order:
        row = net.weight(e.src) * system.rows[("x", e.src)]
        for k in net.neighbors[e.src]:
            if k != e.dst:
                row = row + system.rows[("V", DirectedEdge(k, e.src))]
        system.rows[("U", e)] = row
        system.rows[("V", e)] = laws[e].gain * row + system.basis(w_index[e])

    def partial_sum_row(members) -> np.ndarray:
        row = np.zeros(system.prim_var.size)
        for j in sorted(members):
            row += net.weight(j) * system.rows[("x", j)]
        return row

    def info_at(node: int, excluding: int | None) -> list:
        keys: list = [
            ("V", DirectedEdge(k, node))
            for k in net.neighbors[node]
            if k != excluding
        ]
        keys.append(("x", node))
        return keys

    inc: dict[DirectedEdge, float] = {}
    tx: dict[DirectedEdge, float] = {}
    rx: dict[DirectedEdge, float] = {}
    receiver_gains: dict[DirectedEdge, np.ndarray] = {}
    receiver_info: dict[DirectedEdge, tuple] = {}
    error_rows = []
    for e in edges:
        target = partial_sum_row(net.oriented_members(e))
        _, est_tx, tx[e] = system.condition(target, info_at(e.src, e.dst))
        dst_info = info_at(e.dst, None)
        gain, est_rx, rx[e] = system.condition(target, dst_info)
        receiver_gains[e] = gain
        receiver_info[e] = tuple(dst_info)
        diff = est_rx - est_tx
        inc[e] = system.variance(diff)
        error_rows.append(diff)

        _relative_check(f"edge {e}: incremental distortion", inc[e], d[e], d[e])
        below = [
            f
            for f in directed_tree(net, e.dst)
            if f != e and f.src in net.oriented_members(e)
        ]
        downstream = fsum(d[f] for f in below)
        _relative_check(f"edge {e}: transmit distortion", tx[e], downstream, rx[e])
        _relative_check(f"edge {e}: receive distortion", rx[e], tx[e] + inc[e], rx[e])

    full_row = partial_sum_row(nodes)
    per_root: dict[int, float] = {}
    for k in nodes:
        _, est, per_root[k] = system.condition(full_row, info_at(k, None))
        node_output = net.weight(k) * system.rows[("x", k)]
        for j in net.neighbors[k]:
            node_output = node_output + system.rows[("V", DirectedEdge(j, k))]
        if system.variance(est - node_output) > _IDENTITY_TOL:
            raise ConsistencyError(
                f"node {k}: MMSE estimate differs from the description sum"
            )
        expected = fsum(d[e] for e in directed_tree(net, k))
        _relative_check(f"node {k}: consensus distortion", per_root[k], expected, expected)

    error_stack = np.vstack(error_rows)
    labels = (
        [f"x{i}" for i in nodes]
        + [f"V{e}" for e in edges]
        + [f"U{e}" for e in edges]
    )
    keys = [("x", i) for i in nodes] + [("V", e) for e in edges] + [
        ("U", e) for e in edges
    ]
    joint = system.covariance_matrix(keys)
    _check_psd(joint)
    return AnalyticModel(
        mode="consensus",
        labels=tuple(labels),
        joint_covariance=joint,
        inc=inc,
        tx=tx,
        rx=rx,
        total=fsum(per_root[k] for k in nodes),
        per_root=per_root,
        link_order=edges,
        incremental_error_cov=error_stack @ (system.prim_var[:, None] * error_stack.T),
        receiver_gains=receiver_gains,
        receiver_info=receiver_info,
    )


# ---------------------------------------------------------------------------
# Monte-Carlo simulation


@dataclass(frozen=True)
class SimulationResult:
    """Empirical distortions with 3-sigma confidence half-widths.

    ``empirical_total`` is a float in aggregation mode and a per-node map
    in consensus mode.  ``ci_halfwidth`` mirrors the structure of every
    reported mean; ``references`` carries the analytic values each mean
    is expected to match.
    """

    mode: str
    scheme: str
    empirical_total: float | dict[int, float]
    per_link_incremental: dict
    per_link_estimate_variance: dict
    ci_halfwidth: dict
    references: dict
    saturation_rate: dict | None = None

    def to_json_dict(self) -> dict:
        def keyed(mapping: Mapping) -> dict:
            return {str(k): v for k, v in sorted(mapping.items(), key=lambda kv: str(kv[0]))}

        out: dict[str, object] = {
            "mode": self.mode,
            "scheme": self.scheme,
            "per_link_incremental": keyed(self.per_link_incremental),
            "per_link_estimate_variance": keyed(self.per_link_estimate_variance),
            "ci_halfwidth": {
                name: keyed(v) if isinstance(v, dict) else v
                for name, v in sorted(self.ci_halfwidth.items())
            },
            "references": {
                name: keyed(v) if isinstance(v, dict) else v
                for name, v in sorted(self.references.items())
            },
        }
        if isinstance(self.empirical_total, dict):
            out["empirical_total"] = keyed(self.empirical_total)
        else:
            out["empirical_total"] = self.empirical_total
        if self.saturation_rate is not None:
            out["saturation_rate"] = keyed(self.saturation_rate)
        return out

    def to_csv_rows(self) -> list[list]:
        rows: list[list] = [["link_from", "link_to", "empirical_inc", "ci", "reference_inc"]]
        ci_inc = self.ci_halfwidth.get("inc", {})
        ref_inc = self.references.get("inc", {})
        for key in sorted(self.per_link_incremental, key=str):
            src, dst = (key.src, key.dst) if isinstance(key, DirectedEdge) else (key, "")
            rows.append(
                [src, dst, self.per_link_incremental[key], ci_inc.get(key, ""), ref_inc.get(key, "")]
            )
        if isinstance(self.empirical_total, dict):
            ci_nodes = self.ci_halfwidth.get("per_node", {})
            ref_nodes = self.references.get("per_node", {})
            for k in sorted(self.empirical_total):
                rows.append(
                    ["node", k, self.empirical_total[k], ci_nodes.get(k, ""), ref_nodes.get(k, "")]
                )
            rows.append(
                [
                    "total",
                    "",
                    fsum(self.empirical_total.values()),
                    "",
                    self.references.get("total", ""),
                ]
            )
        else:
            rows.append(
                [
                    "total",
                    "",
                    self.empirical_total,
                    self.ci_halfwidth.get("total", ""),
                    self.references.get("total", ""),
                ]
            )
        return rows


def _mean_and_ci(samples: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1)) / math.sqrt(samples.size)
    return mean, 3.0 * stderr


def simulate_aggregation(
    net: TreeNetwork, d: Mapping[int, float], cfg: SimulationConfig
) -> SimulationResult:
    """Monte-Carlo run of the test-channel aggregation scheme.

    Each non-root node forms its estimate as the sum of its children's
    descriptions plus its own weighted data, then draws its description
    from the exact conditional law; the sink sums the descriptions it
    receives.  Per-link incremental distortions, per-link estimate
    variances and the end-to-end distortion are averaged over trials.
    """
    sigma_hat = bounds.test_channel_variances(net, d)
    laws = {i: test_channel_law(sigma_hat[i], float(d[i])) for i in net.sources}
    n_samples = cfg.blocklength

    totals = np.empty(cfg.trials)
    inc_samples = {i: np.empty(cfg.trials) for i in net.sources}
    var_samples = {i: np.empty(cfg.trials) for i in net.sources}
    for trial in range(cfg.trials):
        data = {
            i: _stream(cfg.seed, trial, _ROLE_SOURCE, i).standard_normal(n_samples)
            for i in net.sources
        }
        descriptions: dict[int, np.ndarray] = {}
        for node in net.leaves_first:
            if node == net.root:
                continue
            estimate = net.weight(node) * data[node]
            for c in net.children_of(node):
                estimate = estimate + descriptions[c]
            law = laws[node]
            noise = _stream(cfg.seed, trial, _ROLE_CHANNEL, node).standard_normal(
                n_samples
            ) * math.sqrt(law.conditional_variance)
            descriptions[node] = law.gain * estimate + noise
            inc_samples[node][trial] = float(np.mean((estimate - descriptions[node]) ** 2))
            var_samples[node][trial] = float(np.mean(estimate**2))
        target = sum(net.weight(i) * data[i] for i in net.sources)
        sink = sum(descriptions[c] for c in net.children_of(net.root))
        totals[trial] = float(np.mean((target - sink) ** 2))

    total_mean, total_ci = _mean_and_ci(totals)
    inc_stats = {i: _mean_and_ci(inc_samples[i]) for i in net.sources}
    var_stats = {i: _mean_and_ci(var_samples[i]) for i in net.sources}
    return SimulationResult(
        mode="aggregation",
        scheme="test-channel",
        empirical_total=total_mean,
        per_link_incremental={i: inc_stats[i][0] for i in net.sources},
        per_link_estimate_variance={i: var_stats[i][0] for i in net.sources},
        ci_halfwidth={
            "total": total_ci,
            "inc": {i: inc_stats[i][1] for i in net.sources},
            "estimate_variance": {i: var_stats[i][1] for i in net.sources},
        },
        references={
            "total": fsum(float(d[i]) for i in net.sources),
            "inc": {i: float(d[i]) for i in net.sources},
            "estimate_variance": sigma_hat,
        },
    )


def simulate_consensus(
    net: TreeNetwork, d: Mapping, cfg: SimulationConfig
) -> SimulationResult:
    """Monte-Carlo run of the test-channel consensus scheme.

    One description flows per directed edge; every node's final estimate
    sums the descriptions it received from all neighbours plus its own
    weighted data.  Per-node distortions are reported against the sums of
    the distortion parameters along each node's directed tree.
    """
    sigma_hat = bounds.consensus_test_channel_variances(net, d)
    edges = directed_edges(net)
    edge_index = {e: k for k, e in enumerate(edges)}
    laws = {e: test_channel_law(sigma_hat[e], float(d[e])) for e in edges}
    n_samples = cfg.blocklength

    node_sq = {k: np.empty(cfg.trials) for k in net.node_ids}
    inc_samples = {e: np.empty(cfg.trials) for e in edges}
    var_samples = {e: np.empty(cfg.trials) for e in edges}
    for trial in range(cfg.trials):
        data = {
            i: _stream(cfg.seed, trial, _ROLE_SOURCE, i).standard_normal(n_samples)
            for i in net.node_ids
        }
        descriptions: dict[DirectedEdge, np.ndarray] = {}
        for e in net.directed_edge_order:
            estimate = net.weight(e.src) * data[e.src]
            for k in net.neighbors[e.src]:
                if k != e.dst:
                    estimate = estimate + descriptions[DirectedEdge(k, e.src)]
            law = laws[e]
            noise = _stream(
                cfg.seed, trial, _ROLE_CHANNEL, edge_index[e]
            ).standard_normal(n_samples) * math.sqrt(law.conditional_variance)
            descriptions[e] = law.gain * estimate + noise
            inc_samples[e][trial] = float(np.mean((estimate - descriptions[e]) ** 2))
            var_samples[e][trial] = float(np.mean(estimate**2))
        target = sum(net.weight(i) * data[i] for i in net.node_ids)
        for k in net.node_ids:
            estimate = net.weight(k) * data[k]
            for j in net.neighbors[k]:
                estimate = estimate + descriptions[DirectedEdge(j, k)]
            node_sq[k][trial] = float(np.mean((target - estimate) ** 2))

    node_stats = {k: _mean_and_ci(node_sq[k]) for k in net.node_ids}
    inc_stats = {e: _mean_and_ci(inc_samples[e]) for e in edges}
    var_stats = {e: _mean_and_ci(var_samples[e]) for e in edges}
    per_root_ref = {
        k: fsum(float(d[e]) for e in directed_tree(net, k)) for k in net.node_ids
    }
    return SimulationResult(
        mode="consensus",
        scheme="test-channel",
        empirical_total={k: node_stats[k][0] for k in net.node_ids},
        per_link_incremental={e: inc_stats[e][0] for e in edges},
        per_link_estimate_variance={e: var_stats[e][0] for e in edges},
        ci_halfwidth={
            "per_node": {k: node_stats[k][1] for k in net.node_ids},
            "inc": {e: inc_stats[e][1] for e in edges},
            "estimate_variance": {e: var_stats[e][1] for e in edges},
        },
        references={
            "per_node": per_root_ref,
            "total": fsum(per_root_ref.values()),
            "inc": {e: float(d[e]) for e in edges},
            "estimate_variance": sigma_hat,
        },
    )


def _dither_design(net: TreeNetwork, rates: Mapping[int, float]):
    """Design variances, steps and clip ranges of the quantizer chain.

    Quantization noise adds ``step^2/12`` per described link, so the
    design variance recursion grows (rather than shrinks) downstream.
    """
    variance: dict[int, float] = {}
    step: dict[int, float] = {}
    clip: dict[int, float] = {}
    for node in net.leaves_first:
        if node == net.root:
            continue
        rate = float(rates[node])
        if not (rate >= 0.0 and math.isfinite(rate)):
            raise InputError(f"link {node}: rate must be non-negative, got {rate!r}")
        terms = [net.weight(node) ** 2]
        for c in net.children_of(node):
            if float(rates[c]) > 0.0:
                terms.append(variance[c] + step[c] ** 2 / 12.0)
        variance[node] = fsum(terms)
        sigma = math.sqrt(variance[node])
        clip[node] = _DITHER_CLIP_SIGMAS * sigma
        step[node] = 2.0 * clip[node] / 2.0**rate if rate > 0.0 else 0.0
    return variance, step, clip


def matched_test_channel_distortions(
    net: TreeNetwork, rates: Mapping[int, float]
) -> dict[int, float]:
    """Distortions the test-channel scheme achieves at the given rates:
    ``d_i = sigma_hat_i^2 * 4**(-R_i)`` along the variance recursion."""
    d: dict[int, float] = {}
    sigma_hat: dict[int, float] = {}
    for node in net.leaves_first:
        if node == net.root:
            continue
        terms = [net.weight(node) ** 2]
        terms.extend(sigma_hat[c] - d[c] for c in net.children_of(node))
        sigma_hat[node] = fsum(terms)
        d[node] = sigma_hat[node] * 4.0 ** (-float(rates[node]))
    return d


def simulate_dithered_baseline(
    net: TreeNetwork, rates: RateAllocation, cfg: SimulationConfig
) -> SimulationResult:
    """Subtractive-dither uniform-quantizer baseline at the given rates.

    Each link quantizes its estimate entry-wise with step
    ``2 * 4 * sigma / 2**R`` (clipping at 4 design standard deviations,
    saturation counted), using a per-link uniform dither known to both
    ends.  Rate-0 links send nothing.  The contract is property-based:
    distortion is non-increasing in rate and dominated from below by the
    test channel at matched rates.
    """
    if not isinstance(rates.profile, DistortionProfile):
        raise InputError("the dithered baseline runs on aggregation allocations")
    rate_map = {i: float(rates.per_link_rate_bits[i]) for i in net.sources}
    variance, step, clip = _dither_design(net, rate_map)
    n_samples = cfg.blocklength

    totals = np.empty(cfg.trials)
    inc_samples = {i: np.empty(cfg.trials) for i in net.sources}
    var_samples = {i: np.empty(cfg.trials) for i in net.sources}
    sat_samples = {i: np.empty(cfg.trials) for i in net.sources}
    for trial in range(cfg.trials):
        data = {
            i: _stream(cfg.seed, trial, _ROLE_SOURCE, i).standard_normal(n_samples)
            for i in net.sources
        }
        descriptions: dict[int, np.ndarray] = {}
        for node in net.leaves_first:
            if node == net.root:
                continue
            estimate = net.weight(node) * data[node]
            for c in net.children_of(node):
                estimate = estimate + descriptions[c]
            if rate_map[node] > 0.0:
                dither = _stream(cfg.seed, trial, _ROLE_DITHER, node).uniform(
                    -0.5 * step[node], 0.5 * step[node], n_samples
                )
                shifted = estimate + dither
                sat_samples[node][trial] = float(np.mean(np.abs(shifted) > clip[node]))
                clipped = np.clip(shifted, -clip[node], clip[node])
                descriptions[node] = step[node] * np.round(clipped / step[node]) - dither
            else:
                descriptions[node] = np.zeros(n_samples)
                sat_samples[node][trial] = 0.0
            inc_samples[node][trial] = float(
                np.mean((estimate - descriptions[node]) ** 2)
            )
            var_samples[node][trial] = float(np.mean(estimate**2))
        target = sum(net.weight(i) * data[i] for i in net.sources)
        sink = sum(descriptions[c] for c in net.children_of(net.root))
        totals[trial] = float(np.mean((target - sink) ** 2))

    total_mean, total_ci = _mean_and_ci(totals)
    inc_stats = {i: _mean_and_ci(inc_samples[i]) for i in net.sources}
    var_stats = {i: _mean_and_ci(var_samples[i]) for i in net.sources}
    nominal = {
        i: step[i] ** 2 / 12.0 if rate_map[i] > 0.0 else variance[i]
        for i in net.sources
    }
    return SimulationResult(
        mode="aggregation",
        scheme="dithered-quantizer",
        empirical_total=total_mean,
        per_link_incremental={i: inc_stats[i][0] for i in net.sources},
        per_link_estimate_variance={i: var_stats[i][0] for i in net.sources},
        ci_halfwidth={
            "total": total_ci,
            "inc": {i: inc_stats[i][1] for i in net.sources},
            "estimate_variance": {i: var_stats[i][1] for i in net.sources},
        },
        references={
            "total": fsum(nominal[i] for i in net.sources),
            "inc": nominal,
            "estimate_variance": variance,
        },
        saturation_rate={
            i: float(np.mean(sat_samples[i])) for i in net.sources
        },
    )
