"""Benchmark scenarios: obstacle sets, goals, and their motion.

Task names follow ``<robot config>_<goal kind>_<obstacle motion>_<variant>``:
goal kind AG (arm goals) or WG (arm + base goals), SO/DO for static or
dynamic obstacles, v0/v1 for 10 or 50 obstacles.

All randomness flows from one seed through :class:`numpy.random.SeedSequence`,
split into independent streams for scenario generation, obstacle motion and
goal motion.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InfeasibleScenario, ValidationError
from .geom import ObstacleSet, pair_batch
from .kinematics import BaseKind, RobotModel

MAX_ATTEMPTS = 1000
START_MARGIN = 0.02  # extra clearance beyond d_min_env at t = 0
SHELL = (0.15, 0.45)  # hand-to-shoulder distance of sampled arm goals (m)
PATH_SPREAD = 0.05  # std of path-placed obstacle centers around the hand path (m)


class GoalKind(enum.Enum):
    AG = "AG"
    WG = "WG"


class Motion(enum.Enum):
    STATIC = "static"
    CIRCULAR = "circular"
    BROWNIAN = "brownian"


@dataclass(frozen=True)
class TaskConfig:
    name: str
    robot_config: str
    num_obstacles: int
    obstacle_velocity: float = 0.0  # Brownian displacement scale per step (m)
    arm_goal_velocity: float = 0.0
    base_goal_velocity: Optional[float] = None
    max_steps: int = 200
    dt: float = 0.01
    workspace: tuple = ((-0.5, -0.6, 0.35), (0.7, 0.6, 1.55))
    obstacle_radius_range: tuple = (0.03, 0.08)
    goal_kind: GoalKind = GoalKind.AG
    box_fraction: float = 0.0  # share of obstacles sampled as boxes
    goal_motion: Motion = Motion.STATIC
    goal_motion_radius: float = 0.1
    goal_motion_rate: float = 1.0  # rad/s for circular goals
    # base goal annulus around the start, and the forward half-angle of the cone
    base_goal_range: tuple = (0.4, 0.8)
    base_goal_cone: float = np.pi / 4
    arm_goal_spread: float = 0.6  # rad, joint perturbation used to sample arm goals
    # "uniform" over the workspace, or "path": scattered around the straight start-goal hand paths
    obstacle_placement: str = "uniform"
    hyperparameters: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "goal_kind", GoalKind(self.goal_kind))
        set_(self, "goal_motion", Motion(self.goal_motion))
        lo, hi = (tuple(float(v) for v in c) for c in self.workspace)
        set_(self, "workspace", (lo, hi))
        set_(self, "obstacle_radius_range", tuple(float(v) for v in self.obstacle_radius_range))
        set_(self, "hyperparameters", dict(self.hyperparameters))
        if self.num_obstacles < 0:
            raise ValidationError("num_obstacles", "must be >= 0")
        if self.obstacle_velocity < 0:
            raise ValidationError("obstacle_velocity", "must be >= 0")
        if self.max_steps < 1:
            raise ValidationError("max_steps", "must be >= 1")
        if not self.dt > 0:
            raise ValidationError("dt", "must be positive")
        if self.obstacle_placement not in ("uniform", "path"):
            raise ValidationError("obstacle_placement", "must be 'uniform' or 'path'")
        if len(lo) != 3 or len(hi) != 3 or not all(a <= b for a, b in zip(lo, hi)):
            raise ValidationError("workspace", "must be [[xlo,ylo,zlo],[xhi,yhi,zhi]] with lo <= hi")
        r0, r1 = self.obstacle_radius_range
        if not 0 < r0 <= r1:
            raise ValidationError("obstacle_radius_range", "must satisfy 0 < lo <= hi")
        if self.goal_kind is GoalKind.WG and self.base_goal_velocity is None:
            raise ValidationError("base_goal_velocity", "WG tasks need a base goal velocity")
        if not 0.0 <= self.box_fraction <= 1.0:
            raise ValidationError("box_fraction", "must lie in [0, 1]")

    @property
    def dynamic(self) -> bool:
        return self.obstacle_velocity > 0


@dataclass(frozen=True)
class GoalSpec:
    arm_goals: Optional[np.ndarray] = None  # (H, 3), one row per hand frame
    base_goal: Optional[np.ndarray] = None  # (2,)
    base_yaw: Optional[float] = None
    motion: Motion = Motion.STATIC
    radius: float = 0.0
    rate: float = 0.0
    scale: float = 0.0
    # initial positions, anchor of the circular motion
    arm_origin: Optional[np.ndarray] = None
    base_origin: Optional[np.ndarray] = None
    # goal configuration the goals were generated from (used by the nominal policy)
    theta_goal: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Environment:
    obstacles: ObstacleSet
    goals: GoalSpec
    rng_seed: int
    step_count: int = 0
    x0: Optional[np.ndarray] = None

    @property
    def volumes(self) -> list:
        return self.obstacles.volumes()


def streams(seed: int):
    """Independent generators for (generation, obstacle motion, goal motion)."""
    ss = np.random.SeedSequence(int(seed))
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


# ---------------------------------------------------------------------------
# built-in tasks

_FIXED_WS = ((-0.5, -0.6, 0.35), (0.7, 0.6, 1.55))
_MOBILE_WS = ((-2.0, -2.0, 0.0), (2.0, 2.0, 1.5))
_POINT_WS = ((-1.0, -1.0, 0.0), (1.0, 1.0, 0.0))

# (SSA eta, SSS lambda, CBF lambda, PFM c, SMA c)
_HYPER = {
    "G1FixedBase_D1_AG_SO_v0": (0.2, 10.0, 20.0, 0.1, 40.0),
    "G1FixedBase_D1_AG_SO_v1": (0.01, 0.4, 6.0, 1.0, 7.0),
    "G1FixedBase_D1_AG_DO_v0": (0.01, 0.7, 0.5, 0.4, 6.0),
    "G1FixedBase_D1_AG_DO_v1": (0.01, 0.01, 1.0, 0.01, 6.0),
    "G1MobileBase_D1_WG_SO_v0": (0.8, 60.0, 80.0, 0.9, 6.0),
    "G1MobileBase_D1_WG_SO_v1": (0.2, 60.0, 100.0, 0.8, 9.0),
    "G1MobileBase_D1_WG_DO_v0": (0.9, 200.0, 3.0, 2.0, 7.0),
    "G1MobileBase_D1_WG_DO_v1": (0.4, 100.0, 100.0, 0.7, 0.1),
}


def _hyper(values) -> dict:
    return dict(zip(("ssa", "sss", "cbf", "pfm", "sma"), values))


def _builtin() -> dict:
    out = {}
    for name, values in _HYPER.items():
        robot, kind, motion, variant = name.rsplit("_", 3)
        mobile = robot.startswith("G1MobileBase")
        out[name] = TaskConfig(
            name=name,
            robot_config=robot,
            num_obstacles=10 if variant == "v0" else 50,
            obstacle_velocity=0.0 if motion == "SO" else 0.005,
            arm_goal_velocity=0.0,
            base_goal_velocity=0.0 if kind == "WG" else None,
            workspace=_MOBILE_WS if mobile else _FIXED_WS,
            goal_kind=kind,
            hyperparameters=_hyper(values),
        )
    # extra scenarios used by the forward-invariance checks
    out["Point2D_D1_AG_SO_v0"] = TaskConfig(
        name="Point2D_D1_AG_SO_v0", robot_config="Point2D_D1", num_obstacles=10,
        workspace=_POINT_WS, max_steps=1000, hyperparameters=_hyper(_HYPER["G1FixedBase_D1_AG_SO_v0"]),
        obstacle_placement="path", description="planar point robot, static spheres scattered along its path",
    )
    out["G1RightArm_D1_AG_SO_v0"] = TaskConfig(
        name="G1RightArm_D1_AG_SO_v0", robot_config="G1RightArm_D1", num_obstacles=10,
        workspace=_FIXED_WS, max_steps=1000, hyperparameters=_hyper(_HYPER["G1FixedBase_D1_AG_SO_v0"]),
        obstacle_placement="path", description="7-DoF right arm, static spheres scattered along the hand path",
    )
    return out


BUILTIN_TASKS = _builtin()
BENCHMARK_TASKS = tuple(_HYPER)


def get_task(name: str) -> TaskConfig:
    try:
        return BUILTIN_TASKS[name]
    except KeyError:
        raise ValidationError("task", f"unknown task {name!r}; valid: {', '.join(BUILTIN_TASKS)}") from None


# ---------------------------------------------------------------------------
# generation


def _clearance(model: RobotModel, theta, obstacles: ObstacleSet) -> float:
    """Smallest robot-obstacle signed distance at configuration ``theta``."""
    if len(obstacles) == 0 or len(model.env_frames) == 0:
        return np.inf
    pos = model.fk_full(theta)[0]
    pb = pair_batch(pos, model.radii, np.zeros_like(pos), model.env_frames, obstacles, np.zeros((0, 2)))
    return float(pb.d.min())


def _self_clearance(model: RobotModel, theta) -> float:
    if not model.self_pairs:
        return np.inf
    pos = model.fk_full(theta)[0]
    i, j = model.self_pair_array.T
    return float(np.min(np.linalg.norm(pos[i] - pos[j], axis=1) - model.radii[i] - model.radii[j]))


def _shoulder(model: RobotModel, hand: int) -> int:
    """Root of the run of 'Shoulder' frames above ``hand`` (the hand itself if there is none)."""
    best = hand
    k = model.frames[hand].parent
    while k >= 0:
        if "Shoulder" in model.frames[k].name:
            best = k
        elif best != hand:
            break
        k = model.frames[k].parent
    return best


def _sample_goal_config(cfg: TaskConfig, model: RobotModel, rng, d_min_self: float):
    home = model.home.copy()
    lo, hi = model.limits[:, 0], model.limits[:, 1]
    mobile = model.base_kind is BaseKind.MOBILE
    start = 3 if mobile else 0
    hands = model.hand_frames
    shoulders = [_shoulder(model, h) for h in hands]
    for _ in range(MAX_ATTEMPTS):
        theta = home.copy()
        if model.name == "Point2D":
            theta[:2] = rng.uniform(cfg.workspace[0][:2], cfg.workspace[1][:2])
            if np.linalg.norm(theta[:2] - home[:2]) < 0.5:
                continue
        else:
            theta[start:] += rng.uniform(-cfg.arm_goal_spread, cfg.arm_goal_spread, model.n - start)
            theta[start:] = np.clip(theta[start:], lo[start:], hi[start:])
            if cfg.goal_kind is GoalKind.WG and mobile:
                r = rng.uniform(*cfg.base_goal_range)
                heading = rng.uniform(-cfg.base_goal_cone, cfg.base_goal_cone)
                theta[0] = home[0] + r * np.cos(home[2] + heading)
                theta[1] = home[1] + r * np.sin(home[2] + heading)
                theta[2] = home[2] + heading
            pos = model.fk_full(theta)[0]
            reach = [np.linalg.norm(pos[h] - pos[s]) for h, s in zip(hands, shoulders)]
            if not all(SHELL[0] <= r <= SHELL[1] for r in reach):
                continue
            if _self_clearance(model, theta) <= d_min_self + START_MARGIN:
                continue
        return theta
    raise InfeasibleScenario(f"{cfg.name}: no admissible goal configuration after {MAX_ATTEMPTS} attempts")


def _sample_obstacles(cfg: TaskConfig, model: RobotModel, rng, d_min_env: float, keep_clear: list):
    lo, hi = np.array(cfg.workspace[0]), np.array(cfg.workspace[1])
    r0, r1 = cfg.obstacle_radius_range
    if cfg.obstacle_placement == "path":
        ends = [model.fk_full(th)[0][model.hand_frames] for th in keep_clear[:2]]
    centers, radii, boxes, half = [], [], [], []
    for k in range(cfg.num_obstacles):
        for attempt in range(MAX_ATTEMPTS):
            if cfg.obstacle_placement == "path":
                # the spread widens with rejections so crowded paths still admit obstacles
                h = rng.integers(len(model.hand_frames))
                a, b = ends[0][h], ends[1][h]
                spread = PATH_SPREAD * (1.0 + attempt / 50.0)
                c = np.clip(a + rng.uniform(0.2, 0.8) * (b - a) + rng.normal(0.0, spread, 3), lo, hi)
            else:
                c = rng.uniform(lo, hi)
            r = rng.uniform(r0, r1)
            is_box = bool(rng.random() < cfg.box_fraction)
            h = np.full(3, r) if is_box else np.zeros(3)
            trial = ObstacleSet(
                c[None], np.zeros((1, 3)), np.array([is_box]), np.array([r]), h[None], np.eye(3)[None],
            )
            if all(_clearance(model, th, trial) > d_min_env + START_MARGIN for th in keep_clear):
                break
        else:
            raise InfeasibleScenario(
                f"{cfg.name}: obstacle {k} rejected {MAX_ATTEMPTS} times by the feasible-start check")
        centers.append(c)
        radii.append(r)
        boxes.append(is_box)
        half.append(h)
    n = len(centers)
    return ObstacleSet(
        np.array(centers).reshape(n, 3), np.zeros((n, 3)), np.array(boxes, dtype=bool),
        np.array(radii, dtype=float), np.array(half).reshape(n, 3), np.tile(np.eye(3), (n, 1, 1)),
    )


def generate_task(cfg: TaskConfig, model: RobotModel, seed: int, d_min_env: float = 0.05,
                  d_min_self: float = 0.03, order: int = 1) -> Environment:
    """Sample a feasible scenario for ``cfg`` deterministically from ``seed``.

    The robot starts at its home configuration at rest.  Goals are the hand
    (and base) positions of a sampled goal configuration, so they are
    reachable and self-collision free.  Obstacles are rejected when they
    come within ``d_min_env + 0.02`` of the robot at the start or at the
    goal configuration.
    """
    gen, _, _ = streams(seed)
    home = model.home.copy()
    theta_goal = _sample_goal_config(cfg, model, gen, d_min_self)
    pos = model.fk_full(theta_goal)[0]
    arm = pos[model.hand_frames].copy()
    base = None
    yaw = None
    if cfg.goal_kind is GoalKind.WG:
        base = theta_goal[:2].copy()
        yaw = float(theta_goal[2])
    obstacles = _sample_obstacles(cfg, model, gen, d_min_env, [home, theta_goal])
    goals = GoalSpec(
        arm_goals=arm, base_goal=base, base_yaw=yaw, motion=cfg.goal_motion,
        radius=cfg.goal_motion_radius, rate=cfg.goal_motion_rate,
        scale=cfg.arm_goal_velocity, arm_origin=arm.copy(),
        base_origin=None if base is None else base.copy(), theta_goal=theta_goal,
    )
    x0 = home if order == 1 else np.concatenate([home, np.zeros(model.n)])
    env = Environment(obstacles, goals, int(seed), 0, x0)
    assert _clearance(model, home, obstacles) > d_min_env + START_MARGIN
    return env


# ---------------------------------------------------------------------------
# motion


def _reflect(c, lo, hi):
    """Mirror coordinates that left [lo, hi] back inside (repeatedly for large jumps)."""
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    t = np.mod(c - lo, 2 * safe)
    mirrored = lo + np.where(t > safe, 2 * safe - t, t)
    return np.where(span > 0, mirrored, lo)


def step_obstacles(env: Environment, cfg: TaskConfig, rng) -> Environment:
    """Brownian step: displacement ``obstacle_velocity * z`` with ``|z| <= 3``, reflected at the bounds."""
    if cfg.obstacle_velocity == 0.0 or len(env.obstacles) == 0:
        obs = env.obstacles
        if np.any(obs.velocities):
            obs = replace(obs.copy(), velocities=np.zeros_like(obs.velocities))
        return replace(env, obstacles=obs, step_count=env.step_count + 1)
    obs = env.obstacles.copy()
    z = rng.standard_normal(obs.centers.shape)
    norm = np.linalg.norm(z, axis=1, keepdims=True)
    z = np.where(norm > 3.0, z * (3.0 / np.maximum(norm, 1e-300)), z)
    lo, hi = np.array(cfg.workspace[0]), np.array(cfg.workspace[1])
    new = _reflect(obs.centers + cfg.obstacle_velocity * z, lo, hi)
    obs.velocities = (new - obs.centers) / cfg.dt
    obs.centers = new
    return replace(env, obstacles=obs, step_count=env.step_count + 1)


def step_goals(goals: GoalSpec, cfg: TaskConfig, t: int, rng=None) -> GoalSpec:
    """Goals at step ``t + 1`` given those at step ``t``."""
    if goals.motion is Motion.STATIC:
        return goals
    if goals.motion is Motion.CIRCULAR:
        # orbit passing through the initial point: g0 + r (cos wt - 1, sin wt, 0)
        phase = goals.rate * (t + 1) * cfg.dt
        off = goals.radius * np.array([np.cos(phase) - 1.0, np.sin(phase), 0.0])
        arm = None if goals.arm_origin is None else goals.arm_origin + off
        base = None if goals.base_origin is None else goals.base_origin + off[:2]
        return replace(goals, arm_goals=arm, base_goal=base)
    if rng is None:
        raise ValueError("Brownian goals need a random generator")
    arm = goals.arm_goals
    base = goals.base_goal
    if arm is not None:
        arm = arm + goals.scale * rng.standard_normal(arm.shape)
    if base is not None:
        base = base + goals.scale * rng.standard_normal(2)
    return replace(goals, arm_goals=arm, base_goal=base)
