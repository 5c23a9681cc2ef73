"""Days-off scheduling for reserve transit staff as a two-stage stochastic integer program."""

from .core import (FirstStageSolution, InfeasibleFirstStageError, InfeasibleInstanceError, Instance,
                   SecondStageSolution, build_duty_catalog, build_pattern_catalog, duty_cost, read_instance,
                   save_instance, validate_instance)
from .datagen import GeneratorConfig, generate_eval_scenarios, generate_instance
from .evaluation import (EvaluationConfig, EvaluationReport, compute_evpi, compute_vss, evaluate_first_stage,
                         percentage_deltas, scenario_count_study)
from .formulation import FormulationConfig, build_extensive_form, build_second_stage, ceiling_identity_check
from .milp import SolveParams, solve_milp
from .recourse import enumerate_first_stage, solve_recourse_exact
from .solve import SolveResult, solve_first_stage

__version__ = "0.1.0"

__all__ = [
    "EvaluationConfig", "EvaluationReport", "FirstStageSolution", "FormulationConfig", "GeneratorConfig",
    "InfeasibleFirstStageError", "InfeasibleInstanceError", "Instance", "SecondStageSolution", "SolveParams",
    "SolveResult", "build_duty_catalog", "build_extensive_form", "build_pattern_catalog", "build_second_stage",
    "ceiling_identity_check", "compute_evpi", "compute_vss", "duty_cost", "enumerate_first_stage",
    "evaluate_first_stage", "generate_eval_scenarios", "generate_instance", "percentage_deltas",
    "read_instance", "save_instance", "scenario_count_study", "solve_first_stage", "solve_milp",
    "solve_recourse_exact", "validate_instance",
]
