"""sispce: rare-event probability estimation for expensive black-box models.

Combines sequential importance sampling over smoothed-indicator densities
with dimension-reducing PCE surrogates whose subspace and coefficients are
actively learned from a growing design of experiments.
"""

from .probspace import InputModel, LimitStateHandle, Marginal, mc_estimate, transformed_handle
from .plspce import PlsConfig, PlsPceModel
from .sis import Ensemble, SisConfig, SisResult, run_sis
from .alearn import LearnConfig, active_learn
from .orchestrator import OrchestratorConfig, RunResult, run_assis, run_ssis, surrogate_restart
from .problems import BenchmarkProblem, get_problem, registry
from .bench import ExperimentReport, emit_outputs, oracle_check, run_experiment

__version__ = "0.1.0"

__all__ = [
    "InputModel",
    "LimitStateHandle",
    "Marginal",
    "mc_estimate",
    "transformed_handle",
    "PlsConfig",
    "PlsPceModel",
    "Ensemble",
    "SisConfig",
    "SisResult",
    "run_sis",
    "LearnConfig",
    "active_learn",
    "OrchestratorConfig",
    "RunResult",
    "run_assis",
    "run_ssis",
    "surrogate_restart",
    "BenchmarkProblem",
    "get_problem",
    "registry",
    "ExperimentReport",
    "emit_outputs",
    "oracle_check",
    "run_experiment",
    "__version__",
]
