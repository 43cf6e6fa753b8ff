"""Neyman-Pearson-like testing for zero-rate multiterminal hypothesis testing."""

__version__ = "0.1.0"

from .asymptotics import (
    ExponentPoint,
    SecondOrderStats,
    fixed_lambda_curve,
    normal_cdf,
    normal_quantile,
    np_threshold_for_eps,
    optimal_exponent_curve,
    projected_entropy_gradient_check,
    second_order_beta_approx,
    second_order_stats,
    taylor_residual,
)
from .distributions import (
    JointDistribution,
    JointType,
    enumerate_joint_types,
    from_expectation,
    from_natural,
    kl_divergence,
    load_distribution,
    log_type_probability,
    to_expectation,
    to_natural,
)
from .errors import ConvergenceError, DomainError, ResourceCapError, ValidationError, ZeroRateError
from .exact import ExactEvaluator, McEstimate, exact_tradeoff, monte_carlo_tradeoff, ppv_beta_bound
from .geometry import (
    project_onto_marginals,
    projected_relative_entropy,
    projected_relative_entropy_over_types,
    pythagorean_residual,
    type_restriction_gap,
)
from .lambda_solver import (
    LambdaSolution,
    LambdaSolver,
    ProxyLLR,
    exponent_F,
    inverse_tilt,
    lambda_of_r,
    solve_lambda_pair,
)
from .schemes import (
    ErrorPoint,
    Hypothesis,
    SchemeSpec,
    hk_decide,
    np_like_decide,
    oracle_marginal_type_llr,
    oracle_tradeoff,
)
