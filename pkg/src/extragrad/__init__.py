"""Extrapolated gradient descent, its stochastic and stagewise variants, and
a numerical verification layer for their convergence guarantees."""

from .errors import (ConfigError, ConvergenceError, DivergenceError,
                     EvaluationError)
from .numkit import (RngStream, Vector, as_vector, bregman_euclid,
                     default_fd_step, finite_diff_grad, project_ball)
from .problems import (GradCheckReport, ObjectiveSpec, StochasticOracle,
                       build_problem, check_grad, deterministic_oracle, eval_f,
                       eval_grad, finite_sum_oracle, gaussian_oracle,
                       prox_shifted, sigmoid_components, stoch_grad)
from .optimizers import (AveragedRun, GdeConfig, SgdeConfig, StageRecord,
                         StagewiseConfig, StagewiseResult, Trajectory, run_gd,
                         run_gde, run_minibatch_sgde, run_sgde_avg, run_stagewise,
                         sample_stage_index, stage_probabilities, stage_schedule)
from .theory import (BoundReport, Lemma31Report, MoreauConfig, MoreauReport,
                     ProxResult, bound_thm1, bound_thm2, bound_thm3,
                     check_lemma31, check_moreau_relations, mirror_step_gap,
                     prox_moreau)
from .harness import (ExperimentConfig, ExperimentResult, RunRecord, execute,
                      parse_config, run_experiment, schedule_table, summarize,
                      summarize_csv_rows)

__version__ = "0.1.0"

__all__ = [
    "AveragedRun", "BoundReport", "ConfigError", "ConvergenceError",
    "DivergenceError", "EvaluationError", "ExperimentConfig", "ExperimentResult",
    "GdeConfig", "GradCheckReport", "Lemma31Report", "MoreauConfig",
    "MoreauReport", "ObjectiveSpec", "ProxResult", "RngStream", "RunRecord",
    "SgdeConfig", "StageRecord", "StagewiseConfig", "StagewiseResult",
    "StochasticOracle", "Trajectory", "Vector", "as_vector", "bregman_euclid",
    "bound_thm1", "bound_thm2", "bound_thm3", "build_problem", "check_grad",
    "check_lemma31", "check_moreau_relations", "default_fd_step",
    "deterministic_oracle", "eval_f", "eval_grad", "execute",
    "finite_diff_grad", "finite_sum_oracle", "gaussian_oracle",
    "mirror_step_gap", "parse_config", "project_ball", "prox_moreau",
    "prox_shifted", "run_experiment", "run_gd", "run_gde",
    "run_minibatch_sgde", "run_sgde_avg", "run_stagewise",
    "sample_stage_index", "schedule_table", "sigmoid_components",
    "stage_probabilities", "stage_schedule", "stoch_grad", "summarize",
    "summarize_csv_rows",
]
