"""Binary sensor-selection OED via Bernoulli policies and projected SGD.

The package optimizes which sensors to activate for a linear Gaussian
inverse problem.  The binary design criterion is rewritten as an
expectation over a product Bernoulli policy and minimized with projected
stochastic gradient descent, optionally with a variance-reducing optimal
baseline.  Exact enumeration oracles validate every estimator at desk
scale.
"""

from oedpg.bayes import (
    InverseProblem,
    PosteriorSummary,
    load_problem,
    posterior_covariance,
    posterior_mean,
    relaxed_precision,
    save_problem,
    spd_logdet,
    spd_trace_inverse,
    weighted_precision,
)
from oedpg.bernoulli import (
    DesignVector,
    PolicyParameter,
    pmf,
    pmf_gradient,
    pmf_second_derivative,
    sample,
    score,
    score_total_variance,
)
from oedpg.enumeration import (
    EnumerationGuardError,
    EnumerationResult,
    all_design_bits,
    brute_force,
    exact_gradient,
    exact_stochastic_objective,
)
from oedpg.models import (
    ADConfig,
    ADSimulator,
    VelocityKind,
    assemble_ad_problem,
    default_sensor_lattice,
    gaussian_bump,
    noise_sigma_from_truth,
    toy_problem,
)
from oedpg.objective import (
    Criterion,
    EvaluationCache,
    ObjectiveSpec,
    Penalty,
    criterion_value,
    evaluate,
    penalty_value,
    relaxed_criterion_value,
)
from oedpg.optimizer import (
    BaselineMode,
    IterationRecord,
    OptimizerConfig,
    ProjectionMode,
    RunRecord,
    StepSchedule,
    empirical_baseline,
    optimal_baseline,
    optimize,
    stochastic_gradient,
    write_samples,
    write_summary,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "ADConfig",
    "ADSimulator",
    "BaselineMode",
    "Criterion",
    "DesignVector",
    "EnumerationGuardError",
    "EnumerationResult",
    "EvaluationCache",
    "InverseProblem",
    "IterationRecord",
    "ObjectiveSpec",
    "OptimizerConfig",
    "Penalty",
    "PolicyParameter",
    "PosteriorSummary",
    "ProjectionMode",
    "RunRecord",
    "StepSchedule",
    "VelocityKind",
    "all_design_bits",
    "assemble_ad_problem",
    "brute_force",
    "criterion_value",
    "default_sensor_lattice",
    "empirical_baseline",
    "evaluate",
    "exact_gradient",
    "exact_stochastic_objective",
    "gaussian_bump",
    "load_problem",
    "noise_sigma_from_truth",
    "optimal_baseline",
    "optimize",
    "penalty_value",
    "pmf",
    "pmf_gradient",
    "pmf_second_derivative",
    "posterior_covariance",
    "posterior_mean",
    "relaxed_criterion_value",
    "relaxed_precision",
    "sample",
    "save_problem",
    "score",
    "score_total_variance",
    "spd_logdet",
    "spd_trace_inverse",
    "stochastic_gradient",
    "toy_problem",
    "weighted_precision",
    "write_samples",
    "write_summary",
    "write_trace",
    "__version__",
]
