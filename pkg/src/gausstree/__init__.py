"""Planning, bounding and simulating lossy in-network linear computation
on Gaussian tree networks: distortion-accumulation identities, outer and
inner bounds on the sum rate, rate allocation, and exact/Monte-Carlo
validation, for both single-sink aggregation and all-node consensus."""

from .allocation import (
    RateAllocation,
    allocate_consensus,
    allocate_consensus_numeric,
    allocate_equal_incremental,
    allocate_numeric_penalized,
    rates_for_profile,
)
from .bounds import (
    BoundsReport,
    ConsensusProfile,
    DistortionProfile,
    consensus_derive,
    consensus_inner,
    consensus_outer,
    cutset_bound,
    derive_distortions,
    full_report,
    gap_report,
    inner_bound,
    inner_bound_minimized,
    line_gap_asymptote,
    outer_bound_closed_form,
    outer_bound_incremental,
    outer_bound_penalty,
)
from .errors import ConsistencyError, InfeasibleError, InputError
from .infomeasures import (
    GaussianSpec,
    TestChannelLaw,
    gaussian_entropy_bits,
    gaussian_kl_nats,
    test_channel_law,
    test_channel_rate_bits,
    verify_smoothing_inequality,
)
from .network import (
    DirectedEdge,
    SubtreeStats,
    TreeError,
    TreeNetwork,
    directed_tree,
    edge_multiplicity,
    make_consensus_line,
    make_line,
    oriented_subtree_stats,
    parse_tree,
    subtree_stats,
)
from .simulator import (
    AnalyticModel,
    SimulationConfig,
    SimulationResult,
    analytic_mmse_check,
    simulate_aggregation,
    simulate_consensus,
    simulate_dithered_baseline,
)

__version__ = "0.1.0"
