"""Off-policy evaluation with LSTDQ on tabular MDPs and its coverage diagnostics."""

from .coverage import (CoverageReport, FeatureDynamics, abstract_model,
                       aggregated_concentrability, burn_in_estimate, chi2_tabular,
                       coverage_report, cvrg_empirical, cvrg_fn, cvrg_lin, cvrg_population,
                       feature_dynamics, onpolicy_check, perdomo_comparison)
from .estimators import (LossMinConfig, LstdqSolution, MomentSet, brm_objective,
                         empirical_moments, estimate_return, function_error, lossmin_solve,
                         lstdq_solve, mwl_weight, population_moments, return_error)
from .experiments import (ConfigurationError, SweepConfig, SweepResult, counterexample_instance,
                          fit_rate_slope, run_sweep, verify_propositions)
from .features import (AbstractionSpec, FeatureMap, abstraction_features,
                       check_bellman_completeness, check_realizability, phi0, phi_pi,
                       realizable_random_features, tabular_features)
from .mdp import (Policy, StateActionDist, TabularMDP, exact_q, exact_return, occupancy,
                  transition_kernel_pi)
from .sampling import Dataset, Transition, onpolicy_mu_d, sample_dataset, substream_seed
from ._linalg import SingularMatrixError

__version__ = "0.1.0"

__all__ = [
    "CoverageReport",
    "FeatureDynamics",
    "abstract_model",
    "aggregated_concentrability",
    "burn_in_estimate",
    "chi2_tabular",
    "coverage_report",
    "cvrg_empirical",
    "cvrg_fn",
    "cvrg_lin",
    "cvrg_population",
    "feature_dynamics",
    "onpolicy_check",
    "perdomo_comparison",
    "LossMinConfig",
    "LstdqSolution",
    "MomentSet",
    "brm_objective",
    "empirical_moments",
    "estimate_return",
    "function_error",
    "lossmin_solve",
    "lstdq_solve",
    "mwl_weight",
    "population_moments",
    "return_error",
    "ConfigurationError",
    "SweepConfig",
    "SweepResult",
    "counterexample_instance",
    "fit_rate_slope",
    "run_sweep",
    "verify_propositions",
    "AbstractionSpec",
    "FeatureMap",
    "abstraction_features",
    "check_bellman_completeness",
    "check_realizability",
    "phi0",
    "phi_pi",
    "realizable_random_features",
    "tabular_features",
    "Policy",
    "StateActionDist",
    "TabularMDP",
    "exact_q",
    "exact_return",
    "occupancy",
    "transition_kernel_pi",
    "Dataset",
    "Transition",
    "onpolicy_mu_d",
    "sample_dataset",
    "substream_seed",
    "SingularMatrixError",
]
