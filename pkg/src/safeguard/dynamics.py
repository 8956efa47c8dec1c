"""Control-affine joint-space dynamics  x' = f(x) + g(x) u.

First order: x = theta, u = theta'.  Second order: x = (theta, theta'),
u = theta''.  For mobile bases the first three DoFs are the planar pose
(p_x, p_y, psi) while the matching control channels are body-frame
velocities (first order) or accelerations (second order).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteState
from .kinematics import BaseKind

DEFAULT_LIMITS = {
    1: {"joint": 3.0, "base_linear": 1.0, "base_yaw": 1.0},
    2: {"joint": 20.0, "base_linear": 3.0, "base_yaw": 3.0},
}


@dataclass(frozen=True, eq=False)
class DynamicsModel:
    order: int
    base_kind: BaseKind
    n: int
    control_lo: np.ndarray
    control_hi: np.ndarray
    position_limits: np.ndarray  # (n, 2)

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("dynamics order must be 1 or 2")
        for name in ("control_lo", "control_hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.n,):
                raise DimensionMismatch(f"{name} must have {self.n} entries")
            object.__setattr__(self, name, arr)
        if np.any(self.control_lo >= self.control_hi):
            raise ValueError("control limits must satisfy lo < hi")

    @property
    def state_dim(self) -> int:
        return self.n * self.order

    @property
    def control_dim(self) -> int:
        return self.n

    @property
    def mobile(self) -> bool:
        return self.base_kind is BaseKind.MOBILE

    @classmethod
    def for_model(cls, model, order: int, limits: dict | None = None) -> "DynamicsModel":
        lim = dict(DEFAULT_LIMITS[order])
        lim.update(limits or {})
        hi = np.full(model.n, float(lim["joint"]))
        if model.base_kind is BaseKind.MOBILE:
            hi[:3] = [lim["base_linear"], lim["base_linear"], lim["base_yaw"]]
        return cls(order, model.base_kind, model.n, -hi, hi, model.limits.copy())

    def split(self, x):
        x = self.check_state(x)
        if self.order == 1:
            return x, None
        return x[: self.n], x[self.n:]

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.state_dim,):
            raise DimensionMismatch(f"expected state of dim {self.state_dim}, got shape {x.shape}")
        return x

    def clamp_control(self, u):
        """Clip ``u`` into the control box; returns ``(u_clipped, was_clipped)``."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise DimensionMismatch(f"expected control of dim {self.n}, got shape {u.shape}")
        clipped = np.clip(u, self.control_lo, self.control_hi)
        return clipped, bool(np.any(clipped != u))


def _yaw_block(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def input_map(model: DynamicsModel, theta) -> np.ndarray:
    """Configuration-space map from control to theta' (1st) or theta'' (2nd)."""
    G = np.eye(model.n)
    if model.mobile:
        G[:3, :3] = _yaw_block(theta[2])
    return G


def drift_acceleration(model: DynamicsModel, theta, theta_dot) -> np.ndarray:
    """theta'' at zero control: nonzero only for mobile bases.

    With body-frame control channels, keeping the body velocity constant
    while the base yaws rotates the world-frame velocity.
    """
    acc = np.zeros(model.n)
    if model.mobile:
        psi, psi_dot = theta[2], theta_dot[2]
        c, s = np.cos(psi), np.sin(psi)
        vx = theta_dot[0] * c + theta_dot[1] * s
        vy = -theta_dot[0] * s + theta_dot[1] * c
        acc[0] = -vx * psi_dot * s - vy * psi_dot * c
        acc[1] = vx * psi_dot * c - vy * psi_dot * s
    return acc


def eval_fg(model: DynamicsModel, x):
    """Return ``(f, g)`` with shapes (state_dim,) and (state_dim, control_dim)."""
    theta, theta_dot = model.split(x)
    n = model.n
    G = input_map(model, theta)
    if model.order == 1:
        return np.zeros(n), G
    f = np.concatenate([theta_dot, drift_acceleration(model, theta, theta_dot)])
    g = np.vstack([np.zeros((n, n)), G])
    return f, g


@dataclass
class StepInfo:
    x: np.ndarray
    u_applied: np.ndarray
    control_clamped: bool
    position_clamped: np.ndarray


def step_info(model: DynamicsModel, x, u, dt: float) -> StepInfo:
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = model.check_state(x)
    u, clamped = model.clamp_control(u)
    f, g = eval_fg(model, x)
    x_next = x + (f + g @ u) * dt
    n = model.n
    lo, hi = model.position_limits[:, 0], model.position_limits[:, 1]
    theta = x_next[:n]
    hit = (theta < lo) | (theta > hi)
    if hit.any():
        x_next[:n] = np.clip(theta, lo, hi)
        if model.order == 2:
            x_next[n:][hit] = 0.0
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteState("integration produced non-finite state")
    return StepInfo(x_next, u, clamped, hit)


def step(model: DynamicsModel, x, u, dt: float) -> np.ndarray:
    """Explicit Euler step with control clipping and joint-limit clamping."""
    return step_info(model, x, u, dt).x
