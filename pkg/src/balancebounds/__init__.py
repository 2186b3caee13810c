"""Covariate-balance bias bounds for linear regression treatment effects:
imbalance metrics, misspecification magnitudes, design-phase subsample
construction, and misspecification-robust inference.
"""

__version__ = "0.1.0"

from .bounds import BoundReport, assemble_bounds, bias_exact, verdict
from .design import BalanceTable, MatchSpec, balance_compare, nn_match, trim_by_score
from .errors import BalanceBoundsError, DomainError, NumericError, ValidationError
from .imbalance import (
    ImbalanceVector,
    SummarySet,
    compute_imbalance,
    density_ratio_l2,
    ks_distance,
    lp_sandwich,
    mean_differences,
    total_variation_l1,
    wasserstein1,
)
from .inference import (
    RobustCI,
    VarianceEstimate,
    m_value,
    matched_pair_variance,
    norm_ppf,
    robust_ci,
    t_stat,
)
from .misspec import (
    MisspecVector,
    Perturbation,
    compute_misspec,
    m_l2_g0,
    m_lipschitz,
    m_sup,
    m_total_variation,
)
from .regression import (
    ConstantOnlyMap,
    CovariateMap,
    DGPSpec,
    IdentityMap,
    IndexMap,
    LinearPropensityMap,
    RegressionFit,
    StrataMap,
    att_parameter,
    conditional_estimand,
    extended_parameters,
    fit_ols,
    induced_index_refit,
)
from .sample import (
    CsvSchema,
    EmpiricalCond,
    Sample,
    SubsampleHandle,
    Unit,
    empirical_cond,
    empirical_joint,
    load_csv,
)
from .separation import SeparationSolution, m_md, solve_separation

__all__ = [name for name in dir() if not name.startswith("_")]
