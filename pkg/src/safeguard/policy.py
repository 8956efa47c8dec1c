"""Nominal (safety-unaware) reference controller: P base tracking + differential IK.

Arm channels follow a damped least-squares IK on the hand position errors;
base channels use a P law on the body-frame position error and the yaw
error.  Second-order models wrap the velocity command in a D law,
``u = kd (theta'_des - theta')``.  No integral term is used.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import DynamicsModel
from .errors import DimensionMismatch
from .kinematics import BaseKind, KinematicState, RobotModel, evaluate


@dataclass(frozen=True)
class PolicyConfig:
    kp_arm: float = 2.0
    kp_base_lin: float = 3.0
    kp_base_yaw: float = 1.5
    kd: float = 5.0
    ik_damping: float = 0.05
    clamp: Optional[tuple] = None  # (lo, hi) per channel; the dynamics limits when None

    def __post_init__(self):
        for name in ("kp_arm", "kp_base_lin", "kp_base_yaw", "kd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.ik_damping > 0:
            raise ValueError("ik_damping must be positive")


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def dls(Jh: np.ndarray, v: np.ndarray, damping: float) -> np.ndarray:
    """Damped least squares ``J^T (J J^T + damping^2 I)^-1 v``."""
    gram = Jh @ Jh.T + damping ** 2 * np.eye(len(Jh))
    return Jh.T @ np.linalg.solve(gram, v)


def _rz(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def arm_targets(model: RobotModel, theta, goals) -> np.ndarray:
    """World-frame hand targets for the current step.

    With a base goal the hand goals are tracked relative to the base: the
    goal posture is expressed in the goal base frame and re-anchored at the
    current base pose, so arm and base motion do not fight each other.
    """
    arm = np.asarray(goals.arm_goals, float).reshape(-1, 3)
    if goals.base_goal is None or model.base_kind is not BaseKind.MOBILE:
        return arm
    yaw_goal = goals.base_yaw if goals.base_yaw is not None else theta[2]
    origin_goal = np.array([goals.base_goal[0], goals.base_goal[1], 0.0])
    local = (arm - origin_goal) @ _rz(yaw_goal)  # rows R^T (p - o)
    origin = np.array([theta[0], theta[1], 0.0])
    return origin + local @ _rz(theta[2]).T


def nominal_control(model: RobotModel, dyn: DynamicsModel, x, goals, cfg: PolicyConfig = PolicyConfig(),
                    kin: Optional[KinematicState] = None) -> np.ndarray:
    theta, theta_dot = dyn.split(x)
    if kin is None:
        kin = evaluate(model, theta)
    n = model.n
    mobile = dyn.mobile
    start = 3 if mobile else 0
    des = np.zeros(n)  # body-frame base command + joint velocities

    if goals.arm_goals is not None and len(model.hand_frames):
        targets = arm_targets(model, theta, goals)
        if targets.shape[0] != len(model.hand_frames):
            raise DimensionMismatch(f"{targets.shape[0]} arm goals for {len(model.hand_frames)} hands")
        hands = model.hand_frames
        err = (targets - kin.pos[hands]).reshape(-1)
        rows = (3 * np.asarray(hands)[:, None] + np.arange(3)).reshape(-1)
        Jh = kin.J[np.ix_(rows, np.arange(start, n))]
        des[start:] = dls(Jh, cfg.kp_arm * err, cfg.ik_damping)

    if mobile and goals.base_goal is not None:
        psi = theta[2]
        e_world = np.asarray(goals.base_goal, float) - theta[:2]
        c, s = np.cos(psi), np.sin(psi)
        e_body = np.array([c * e_world[0] + s * e_world[1], -s * e_world[0] + c * e_world[1]])
        des[:2] = cfg.kp_base_lin * e_body
        if goals.base_yaw is not None:
            des[2] = cfg.kp_base_yaw * _wrap(goals.base_yaw - psi)
        elif np.hypot(*e_world) > 0.1:
            des[2] = cfg.kp_base_yaw * _wrap(np.arctan2(e_world[1], e_world[0]) - psi)

    if dyn.order == 1:
        u = des
    else:
        vel = theta_dot.copy()
        if mobile:
            c, s = np.cos(theta[2]), np.sin(theta[2])
            vel[0] = c * theta_dot[0] + s * theta_dot[1]
            vel[1] = -s * theta_dot[0] + c * theta_dot[1]
        u = cfg.kd * (des - vel)
    lo, hi = (dyn.control_lo, dyn.control_hi) if cfg.clamp is None else cfg.clamp
    return np.clip(u, lo, hi)
