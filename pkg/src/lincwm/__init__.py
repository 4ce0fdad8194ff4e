"""Linear cluster-weighted models: EM fitting, hierarchical initialization,
and BIC/ICL model selection for the twelve-member normal/t family."""

from .errors import CwmError
from .types import (
    MODEL_NAMES,
    Constraint,
    Dataset,
    Dist,
    FitResult,
    LatentState,
    ModelSpec,
    ParameterSet,
    all_model_specs,
    make_model_spec,
    spec_from_name,
)
from .densities import (
    CholeskyCache,
    cholesky_cache,
    cwm_log_density,
    digamma,
    log_mvn,
    log_mvt,
    log_n_reg,
    log_t_reg,
    mahalanobis_sq,
)
from .em import (
    EmConfig,
    aitken_converged,
    e_step,
    em_fit,
    m_step_marginal,
    m_step_regression,
    m_step_weights,
    observed_loglik,
    posterior_tau,
    update_df,
)
from .initialization import (
    HierarchyResult,
    hierarchical_fit,
    multistart_fit,
    random_partition,
)
from .selection import (
    SelectionRecord,
    adjusted_rand_index,
    bic,
    count_parameters,
    icl,
    map_classify,
    rand_index,
)
from .cli import RunConfig, load_csv, run_sweep

__version__ = "0.1.0"

__all__ = [
    "CwmError",
    "MODEL_NAMES",
    "Constraint",
    "Dataset",
    "Dist",
    "FitResult",
    "LatentState",
    "ModelSpec",
    "ParameterSet",
    "all_model_specs",
    "make_model_spec",
    "spec_from_name",
    "CholeskyCache",
    "cholesky_cache",
    "cwm_log_density",
    "digamma",
    "log_mvn",
    "log_mvt",
    "log_n_reg",
    "log_t_reg",
    "mahalanobis_sq",
    "EmConfig",
    "aitken_converged",
    "e_step",
    "em_fit",
    "m_step_marginal",
    "m_step_regression",
    "m_step_weights",
    "observed_loglik",
    "posterior_tau",
    "update_df",
    "HierarchyResult",
    "hierarchical_fit",
    "multistart_fit",
    "random_partition",
    "SelectionRecord",
    "adjusted_rand_index",
    "bic",
    "count_parameters",
    "icl",
    "map_classify",
    "rand_index",
    "RunConfig",
    "load_csv",
    "run_sweep",
    "__version__",
]
