from otfsbl.harness.channels import generate_channel
from otfsbl.harness.metrics import Efficiency, efficiency, nmse, nmse_by_iteration, ser
from otfsbl.harness.sweep import (
    SweepRow,
    aggregate,
    collect_trials,
    run_sweep,
    sweep,
    write_csv,
)
from otfsbl.harness.trial import Trial, TrialResult, run_trial, trial_rng

__all__ = [
    "Efficiency",
    "SweepRow",
    "Trial",
    "TrialResult",
    "aggregate",
    "collect_trials",
    "efficiency",
    "generate_channel",
    "nmse",
    "nmse_by_iteration",
    "run_sweep",
    "run_trial",
    "ser",
    "sweep",
    "trial_rng",
    "write_csv",
]
