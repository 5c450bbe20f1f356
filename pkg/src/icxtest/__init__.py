"""Exact conditional tests of two multinomials against the increasing convex order.

Given a 2xC table with both margins fixed, this package enumerates the exact
conditional ensemble, evaluates either a directed chi-square statistic (a
cone-restricted weighted projection) or an order-restricted likelihood-ratio
statistic on every table, and derives exact p-values, randomized size-alpha
rules, and exact power against tilted alternatives.
"""

from .cone import (
    ConeSpec,
    ProbPair,
    Weights,
    all_delta_stars,
    all_deltas,
    build_cone,
    construct_p_from_nu,
    delta_r,
    delta_star,
    find_icx_alternative,
    is_practical_direction,
    log_odds_ratios,
    sample_cone_directions,
)
from .errors import (
    AlternativeError,
    ConvergenceError,
    FeasibilityError,
    IcxError,
    MarginError,
    NoAlternativeError,
    WeightError,
)
from .inference import (
    AlternativeSpec,
    PowerReport,
    RandomizedRule,
    TestReport,
    build_rule,
    evaluate_statistic,
    exact_power,
    exact_pvalue,
    power_study,
    rejection_probs,
)
from .qp import QpProblem, QpSolution, brute_force_qp, kkt_residuals, solve_qp
from .statistics import (
    DirectedChisqEngine,
    LrtEngine,
    StatisticValue,
    directed_chisq,
    icx_constrained_mle,
    log_likelihood,
    lrt_statistic,
    mle_kkt_residual,
    null_mle,
)
from .tables import (
    Margins,
    NullEnsemble,
    Table2xC,
    alt_log_weight,
    enumerate_tables,
    null_log_prob,
    null_prob_exact,
)

__version__ = "0.1.0"
