"""Bounded-resource probabilistic inference.

Exact and anytime inference over belief networks, plus a metalevel
controller that picks the strategy and stopping time with the highest
comprehensive value of computation.
"""

from .engines import (
    BoundPropagator,
    CompletenessModulator,
    DefaultEntry,
    DefaultPolicy,
    DefaultPolicyTable,
    Estimate,
    LogicSampler,
    current_estimate,
    make_bound_propagator,
    make_completeness_modulator,
    make_default_policy,
    make_logic_sampler,
    step,
)
from .errors import (
    BoundInferError,
    InconsistentEvidenceError,
    NetworkParseError,
    NetworkValidationError,
    OracleCapExceeded,
)
from .exact import (
    Posterior,
    ResourceLedger,
    joint_enumeration,
    measure_complete_resources,
    variable_elimination,
)
from .meta import (
    MetaDecision,
    PrecisionProfile,
    ValueCurve,
    check_bounded_discontinuity,
    check_endpoint_convergence,
    dominance_intervals,
    eval_profile,
    execute_with_monitoring,
    peak,
    profile_strategy,
    select_strategy,
    value_curve,
)
from .network import (
    ChanceNode,
    Evidence,
    Network,
    NoisyOrSpec,
    Query,
    Variable,
    is_multiply_connected,
    make_network,
    noisy_or_cpt,
    parse_network,
    serialize_network,
    validate,
)
from .transforms import impose_global_independence, prune_arcs
from .value import (
    DiscountFunction,
    UtilityTable,
    ValueContext,
    comprehensive_value,
    discount,
    object_value,
    optimal_object_value,
    treatment_threshold,
    validate_tradeoff,
)

__version__ = "0.1.0"
