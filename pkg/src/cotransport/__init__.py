"""Safe cooperative transport: constrained sequential policy optimization.

Two velocity-commanded robots carry a rigid payload through cluttered 2D
scenes. Training couples per-agent trust-region updates with a decomposed
advantage estimate, Lagrangian cost enforcement, and a Gaussian-process
allocator that splits the shared cost budget between the agents.
"""

from .scenario import EnvParams, ScenarioSpec, make_scenario, load_scenario
from .env import BatchEnv, EnvError, EnvState, StepOutcome, TransportEnv
from .config import Config, ConfigError, default_config, parse_config
from .trainer import MODES, Trainer, TrainerConfig, TrainerError, load_policies, train
from .evalmetrics import EvalError, EvalReport, run_eval, straightness, time_consumption
from .selfcheck import format_table, run_selfcheck

__version__ = "0.1.0"

__all__ = [
    "BatchEnv",
    "Config",
    "ConfigError",
    "EnvError",
    "EnvParams",
    "EnvState",
    "EvalError",
    "EvalReport",
    "MODES",
    "ScenarioSpec",
    "StepOutcome",
    "Trainer",
    "TrainerConfig",
    "TrainerError",
    "TransportEnv",
    "default_config",
    "format_table",
    "load_policies",
    "load_scenario",
    "make_scenario",
    "parse_config",
    "run_eval",
    "run_selfcheck",
    "straightness",
    "time_consumption",
    "train",
    "__version__",
]
