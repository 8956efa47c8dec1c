"""Energy-function safety filters and a benchmark harness for humanoid collision avoidance.

Typical use::

    from safeguard import robots, get_task, run_batch, EpisodeJob, Algorithm
    cfg = get_task("G1FixedBase_D1_AG_SO_v0")
    logs = run_batch([EpisodeJob(cfg, Algorithm.SSA, 0.2, seed) for seed in range(10)])
"""
from . import bench, config_io, dynamics, env_task, geom, kinematics, policy, robots, safe_control, safety_index, sim
from .bench import compute_metrics, parameter_sweep, score, success_stats, upper_right_hull
from .config_io import load_bundle
from .env_task import BENCHMARK_TASKS, BUILTIN_TASKS, TaskConfig, generate_task, get_task
from .errors import ConfigError, ParseError, SafeguardError, ValidationError
from .geom import ObstacleSet, Volume, signed_distance
from .kinematics import build_model, evaluate
from .safe_control import Algorithm, FilterParams, QPProblem, apply_filter, solve_qp
from .safety_index import IndexOrder, SafetyIndexSpec, constraint_batch
from .sim import EpisodeJob, run_batch, run_episode

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "BENCHMARK_TASKS", "BUILTIN_TASKS", "ConfigError", "EpisodeJob", "FilterParams", "IndexOrder",
    "ObstacleSet", "ParseError", "QPProblem", "SafeguardError", "SafetyIndexSpec", "TaskConfig",
    "ValidationError", "Volume", "apply_filter", "bench", "build_model", "compute_metrics", "config_io",
    "constraint_batch", "dynamics", "env_task", "evaluate", "generate_task", "geom", "get_task", "kinematics",
    "load_bundle", "parameter_sweep", "policy", "robots", "run_batch", "run_episode", "safe_control",
    "safety_index", "score", "signed_distance", "sim", "solve_qp", "success_stats", "upper_right_hull",
]
