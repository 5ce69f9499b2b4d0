"""Sharp bounds on treatment-effect variance for completely randomized experiments."""

from .bounds import (
    BoundPair,
    aronow_bounds,
    brute_force_extremes,
    ding_bounds,
    extremal_population,
    phi2_tau,
    phi2_tau_tilde,
    sharp_bounds_cov,
    sharp_bounds_late,
)
from .errors import (
    AssumptionViolation,
    DegenerateDesignError,
    DomainError,
    InputError,
    RegressionError,
    SharpBoundsError,
    WeakInstrumentError,
)
from .estimate import (
    analyze_ate,
    bound_estimates_cov,
    confidence_interval,
    diff_in_means,
    merge_sparse_strata,
    sigma_hat2,
)
from .late import analyze_late, ci_late, f_check, lambda_hats, late_bound_estimates, pi_c_hat, wald
from .population import FinitePopulation, ObservedSample, ate, late_truth, reveal, stratify_numeric
from .simulate import (
    StudyConfig,
    StudyReport,
    attain_lower_bound,
    complete_randomization,
    dgp_noncompliance,
    dgp_perfect,
    run_study,
)
from .transport import (
    SignedStepFunction,
    StepCDF,
    generalized_inverse,
    monotone_envelope,
    quantile_l2_antimonotone,
    quantile_l2_comonotone,
    representation_check,
)

__version__ = "0.1.0"
