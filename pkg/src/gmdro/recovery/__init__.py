"""AC-feasible operation recovery and out-of-sample evaluation."""

from .harness import (EvaluationReport, OperatingPoint, RecoveryError,
                      check_sample_sufficiency, evaluate_approach,
                      generation_cost, out_of_sample_cost, recover_operations,
                      run_experiment_grid)
from .newton import NewtonResult, PowerFlowError, branch_flow, newton_ac_power_flow

__all__ = [
    "OperatingPoint", "EvaluationReport", "RecoveryError",
    "recover_operations", "check_sample_sufficiency", "out_of_sample_cost",
    "evaluate_approach", "run_experiment_grid", "generation_cost",
    "newton_ac_power_flow", "branch_flow", "NewtonResult", "PowerFlowError",
]
