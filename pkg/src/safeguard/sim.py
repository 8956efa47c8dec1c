"""Episode runner: task -> nominal policy -> safety filter -> integrator.

Each step evaluates FK and Jacobians, all pair distances, the safety
constraints, the nominal control and the selected filter, then integrates
the dynamics and advances obstacles and goals.  Everything is a function of
the task config and the seed; only the wall-clock timing fields vary
between runs.
"""
from __future__ import annotations

import enum
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import DynamicsModel, step_info
from .env_task import Environment, TaskConfig, generate_task, step_goals, step_obstacles, streams
from .errors import ConfigError, SafeguardError
from .geom import PairCategory, pair_batch
from .kinematics import RobotModel, evaluate
from .policy import PolicyConfig, nominal_control
from .safe_control import Algorithm, FilterParams, apply_filter
from .safety_index import IndexOrder, SafetyIndexSpec, constraint_batch

ARM_TOL = 0.02
BASE_TOL = 0.05
DWELL = 10
TRACE_SCHEMA = 1


class Termination(enum.Enum):
    GOAL_REACHED = "GoalReached"
    MAX_STEPS = "MaxSteps"
    COLLISION = "Collision"
    ERROR = "Error"


@dataclass
class StepRecord:
    t: int
    x: np.ndarray
    u_ref: np.ndarray
    u_safe: np.ndarray
    min_env_d: Optional[float]  # None when there are no environment pairs
    min_self_d: Optional[float]
    phi_max: Optional[float]
    arm_goal_dists: tuple
    base_goal_dist: Optional[float]
    filter_status: str
    loop_time: float = 0.0
    filter_time: float = 0.0
    active: int = 0

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "t": self.t,
            "x": self.x.tolist(),
            "u_ref": self.u_ref.tolist(),
            "u_safe": self.u_safe.tolist(),
            "min_env_d": self.min_env_d,
            "min_self_d": self.min_self_d,
            "phi_max": self.phi_max,
            "arm_goal_dists": list(self.arm_goal_dists),
            "base_goal_dist": self.base_goal_dist,
            "filter_status": self.filter_status,
            "active": self.active,
        }
        if timings:
            out["loop_time"] = self.loop_time
            out["filter_time"] = self.filter_time
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(
            int(d["t"]), np.array(d["x"], float), np.array(d["u_ref"], float), np.array(d["u_safe"], float),
            d["min_env_d"], d["min_self_d"], d["phi_max"], tuple(d["arm_goal_dists"]), d["base_goal_dist"],
            d["filter_status"], d.get("loop_time", 0.0), d.get("filter_time", 0.0), d.get("active", 0),
        )


@dataclass
class EpisodeLog:
    task: str
    algorithm: str
    param: float
    seed: int
    dt: float
    records: list = field(default_factory=list)
    termination: Termination = Termination.MAX_STEPS
    diagnostic: str = ""

    @property
    def success(self) -> bool:
        return self.termination is Termination.GOAL_REACHED

    def header(self) -> dict:
        return {"schema_version": TRACE_SCHEMA, "kind": "episode", "task": self.task,
                "algorithm": self.algorithm, "param": self.param, "seed": self.seed, "dt": self.dt}

    def to_dict(self, timings: bool = True) -> dict:
        out = self.header()
        out["termination"] = self.termination.value
        out["diagnostic"] = self.diagnostic
        out["records"] = [r.to_dict(timings) for r in self.records]
        return out


def goal_reached(records, arm_tol: float = ARM_TOL, base_tol: float = BASE_TOL, dwell: int = DWELL) -> bool:
    """True when the last ``dwell`` records all have every goal distance below threshold."""
    tail = list(records)[-dwell:]
    if len(tail) < dwell:
        return False
    for r in tail:
        if r.arm_goal_dists and max(r.arm_goal_dists) >= arm_tol:
            return False
        if r.base_goal_dist is not None and r.base_goal_dist >= base_tol:
            return False
    return True


def activation_band(model: RobotModel, dyn: DynamicsModel, dt: float, theta=None) -> float:
    """One-step reach bound ``dt * max_i ||J_i|| * ||u_max||`` at ``theta`` (home by default).

    Used as the SSA activation tolerance, it makes the boundary band at least
    as wide as one step of travel, so a constraint cannot jump from inactive
    to violated between two control updates.  Exact for a point robot with
    single-integrator dynamics; an estimate at ``theta`` elsewhere.
    """
    if dyn.order != 1:
        raise ValueError("the reach band is defined for first-order (velocity-controlled) models")
    theta = model.home if theta is None else np.asarray(theta, float)
    J = evaluate(model, theta).J.reshape(-1, 3, model.n)
    frames = model.env_frames if len(model.env_frames) else range(J.shape[0])
    gain = max(np.linalg.norm(J[i], 2) for i in frames)
    u_max = float(np.linalg.norm(np.maximum(np.abs(dyn.control_lo), np.abs(dyn.control_hi))))
    return float(dt * gain * u_max)


def _min_or_none(values) -> Optional[float]:
    return float(values.min()) if len(values) else None


def run_episode(cfg: TaskConfig, model: RobotModel, dyn: DynamicsModel, policy_cfg: PolicyConfig,
                filt: FilterParams, spec: SafetyIndexSpec, seed: int, env: Optional[Environment] = None,
                max_steps: Optional[int] = None) -> EpisodeLog:
    dt = cfg.dt
    steps = cfg.max_steps if max_steps is None else int(max_steps)
    log = EpisodeLog(cfg.name, filt.algorithm.value, float(filt.param), int(seed), dt)
    order2 = spec.order is IndexOrder.ORDER2
    names = model.frame_names
    try:
        if env is None:
            env = generate_task(cfg, model, seed, spec.d_min_env, spec.d_min_self, dyn.order)
        _, obs_rng, goal_rng = streams(seed)
        x = env.x0.copy()
        goals = env.goals
        hands = model.hand_frames
        for t in range(steps):
            t0 = time.perf_counter()
            theta, theta_dot = dyn.split(x)
            kin = evaluate(model, theta, theta_dot, need_jdot=order2)
            pairs = pair_batch(kin.pos, model.radii, kin.vel, model.env_frames, env.obstacles,
                               model.self_pair_array, need_hessian=order2, names=names)
            batch = constraint_batch(model, dyn, spec, x, kin, pairs)
            u_ref = nominal_control(model, dyn, x, goals, policy_cfg, kin)
            t1 = time.perf_counter()
            res = apply_filter(u_ref, batch, filt, dyn)
            t2 = time.perf_counter()

            env_d = pairs.d[pairs.category == PairCategory.ENV]
            self_d = pairs.d[pairs.category == PairCategory.SELF]
            arm_d = ()
            if goals.arm_goals is not None:
                arm_d = tuple(float(v) for v in np.linalg.norm(kin.pos[hands] - goals.arm_goals, axis=1))
            base_d = None
            if goals.base_goal is not None:
                base_d = float(np.linalg.norm(theta[:2] - goals.base_goal))
            rec = StepRecord(
                t, x.copy(), u_ref, np.asarray(res.u_safe, float).copy(), _min_or_none(env_d),
                _min_or_none(self_d), _min_or_none(batch.phi), arm_d, base_d, res.status.value,
                t2 - t0, t2 - t1, len(res.active_set),
            )
            log.records.append(rec)
            if len(pairs) and float(pairs.d.min()) < 0.0:
                log.termination = Termination.COLLISION
                k = int(np.argmin(pairs.d))
                log.diagnostic = f"interpenetration on pair {k} (d = {pairs.d[k]:.4g} m)"
                return log
            if goal_reached(log.records):
                log.termination = Termination.GOAL_REACHED
                return log
            x = step_info(dyn, x, res.u_safe, dt).x
            env = step_obstacles(env, cfg, obs_rng)
            goals = step_goals(goals, cfg, t, goal_rng)
        log.termination = Termination.MAX_STEPS
    except (SafeguardError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        log.termination = Termination.ERROR
        log.diagnostic = f"{type(exc).__name__}: {exc}"
    return log


# ---------------------------------------------------------------------------
# batch execution


@dataclass(frozen=True)
class EpisodeJob:
    task: TaskConfig
    algorithm: Algorithm
    param: float
    seed: int
    spec: SafetyIndexSpec = SafetyIndexSpec()
    policy: PolicyConfig = PolicyConfig()
    filter_options: tuple = ()  # extra FilterParams keyword arguments as (key, value) pairs
    max_steps: Optional[int] = None

    @property
    def key(self) -> tuple:
        return (self.task.name, self.algorithm.value, float(self.param), int(self.seed))


def run_job(job: EpisodeJob) -> EpisodeLog:
    from . import robots

    rc = robots.get(job.task.robot_config)
    filt = FilterParams(job.algorithm, job.param, **dict(job.filter_options))
    return run_episode(job.task, rc.model, rc.dynamics, job.policy, filt, job.spec, job.seed,
                       max_steps=job.max_steps)


def threads() -> int:
    """Worker count from SAFEGUARD_THREADS (default: CPU count)."""
    raw = os.environ.get("SAFEGUARD_THREADS")
    if raw is None or raw == "":
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SAFEGUARD_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"SAFEGUARD_THREADS must be a positive integer, got {raw!r}")
    return n


def run_batch(jobs, workers: Optional[int] = None) -> list:
    """Run jobs on a bounded process pool; results come back sorted by job key."""
    jobs = list(jobs)
    workers = threads() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        logs = [run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            logs = list(pool.map(run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    order = sorted(range(len(jobs)), key=lambda i: jobs[i].key)
    return [logs[i] for i in order]


# ---------------------------------------------------------------------------
# trace files (one JSON object per line)


def write_trace(log: EpisodeLog, path, timings: bool = True) -> Path:
    path = Path(path)
    try:
        with path.open("w") as fh:
            head = log.header()
            head["records"] = len(log.records)
            fh.write(json.dumps(head) + "\n")
            for r in log.records:
                fh.write(json.dumps(r.to_dict(timings)) + "\n")
            fh.write(json.dumps({"termination": log.termination.value, "diagnostic": log.diagnostic}) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc.strerror}") from exc
    return path


def read_trace(path) -> EpisodeLog:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise ValueError(f"{path}: truncated trace")
    head = json.loads(lines[0])
    if head.get("kind") != "episode" or head.get("schema_version") != TRACE_SCHEMA:
        raise ValueError(f"{path}: not an episode trace (schema {TRACE_SCHEMA})")
    tail = json.loads(lines[-1])
    records = [StepRecord.from_dict(json.loads(s)) for s in lines[1:-1]]
    return EpisodeLog(head["task"], head["algorithm"], head["param"], head["seed"], head["dt"], records,
                      Termination(tail["termination"]), tail.get("diagnostic", ""))
