"""Rare-event pricing of binary options by adaptive multilevel splitting."""

from .ams import AMSConfig, AMSResult, Termination, kill_and_clone, run_ams, select_level
from .baselines import (
    McConfig,
    MlmcConfig,
    required_mc_samples,
    run_antithetic_mc,
    run_crude_mc,
    run_mlmc,
)
from .bench import ExperimentSpec, ReportRow, emit_report, relative_accuracy, run_experiment
from .contracts import (
    ContractKind,
    ContractSpec,
    bs_digital_closed_form,
    payoff_indicator,
    payoff_indicators,
    price_from_prob,
)
from .importance import Family, ImportanceSpec, default_l_max, score_paths, trajectory_score
from .models import (
    BsParams,
    HestonParams,
    MultiGbmParams,
    TimeGrid,
    Trajectory,
    simulate_batch,
    simulate_path,
)
from .rng import RngStream

__version__ = "0.1.0"
