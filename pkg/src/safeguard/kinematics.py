"""Kinematic-chain robot models, forward kinematics and positional Jacobians.

A model is a topologically ordered list of frames.  Each frame has a parent
(or the world), a fixed origin transform and optionally one actuated joint
applied after the origin.  Frames may carry a collision sphere.  Only frame
positions matter to the safety indices, so only positional Jacobians are
built.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .geom import Volume, quat_to_matrix, matrix_to_quat


class JointType(enum.Enum):
    REVOLUTE_X = "revolute_x"
    REVOLUTE_Y = "revolute_y"
    REVOLUTE_Z = "revolute_z"
    PLANAR_X = "planar_x"
    PLANAR_Y = "planar_y"
    PLANAR_YAW = "planar_yaw"

    @property
    def code(self) -> int:
        return _JOINT_CODES[self]

    @property
    def is_revolute(self) -> bool:
        return self.code < 3


# kernel codes: 0-2 revolute about local x/y/z, 3-5 prismatic along local x/y/z
_JOINT_CODES = {
    JointType.REVOLUTE_X: 0,
    JointType.REVOLUTE_Y: 1,
    JointType.REVOLUTE_Z: 2,
    JointType.PLANAR_YAW: 2,
    JointType.PLANAR_X: 3,
    JointType.PLANAR_Y: 4,
}


class BaseKind(enum.Enum):
    FIXED = "fixed"
    MOBILE = "mobile"


@dataclass(frozen=True)
class JointSpec:
    name: str
    joint_type: JointType
    limits: tuple = (-np.inf, np.inf)
    home: float = 0.0

    def __post_init__(self):
        lo, hi = self.limits
        if not lo < hi:
            raise ValueError(f"joint {self.name}: lower limit must be below upper limit")


@dataclass(frozen=True)
class FrameSpec:
    name: str
    parent: int  # frame index, -1 for the world
    xyz: tuple = (0.0, 0.0, 0.0)
    quat: tuple = (1.0, 0.0, 0.0, 0.0)
    joint: Optional[JointSpec] = None
    radius: Optional[float] = None
    env_collision: bool = False
    self_collision: bool = False

    def __post_init__(self):
        if abs(np.linalg.norm(self.quat) - 1.0) > 1e-9:
            raise ValueError(f"frame {self.name}: origin quaternion must have unit norm")
        if self.radius is not None and not self.radius > 0:
            raise ValueError(f"frame {self.name}: radius must be positive")
        if (self.env_collision or self.self_collision) and self.radius is None:
            raise ValueError(f"frame {self.name}: collision flags need a volume")


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    frames: tuple
    self_pairs: tuple = ()
    base_kind: BaseKind = BaseKind.FIXED
    hands: tuple = ()  # frame names of the end effectors, (left, right) order
    base_frame: Optional[str] = None  # frame whose xy is tracked as the base position

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "self_pairs", tuple(tuple(p) for p in self.self_pairs))
        object.__setattr__(self, "hands", tuple(self.hands))
        for k, f in enumerate(self.frames):
            if not -1 <= f.parent < k:
                raise ValueError(f"frame {f.name}: parent must precede it (acyclic ordering)")
        names = [f.name for f in self.frames]
        if len(set(names)) != len(names):
            raise ValueError("frame names must be unique")
        for i, j in self.self_pairs:
            if not (self.frames[i].self_collision and self.frames[j].self_collision):
                raise ValueError(
                    f"self pair ({names[i]}, {names[j]}) references a frame without SelfCollision")
        if self.base_kind is BaseKind.MOBILE:
            types = [j.joint_type for j in self.joints[:3]]
            if types != [JointType.PLANAR_X, JointType.PLANAR_Y, JointType.PLANAR_YAW]:
                raise ValueError("mobile models must start with planar_x, planar_y, planar_yaw DoFs")
        self._arrays  # build eagerly so invalid models fail at load

    # -- structure -----------------------------------------------------------
    @property
    def joints(self) -> list:
        return [f.joint for f in self.frames if f.joint is not None]

    @property
    def n(self) -> int:
        return sum(f.joint is not None for f in self.frames)

    @property
    def m(self) -> int:
        return len(self.frames)

    @property
    def frame_names(self) -> list:
        return [f.name for f in self.frames]

    def frame_index(self, name: str) -> int:
        try:
            return self.frame_names.index(name)
        except ValueError:
            raise KeyError(f"{self.name}: no frame named {name!r}") from None

    @cached_property
    def joint_names(self) -> list:
        return [j.name for j in self.joints]

    @cached_property
    def limits(self) -> np.ndarray:
        return np.array([j.limits for j in self.joints], dtype=float).reshape(-1, 2)

    @cached_property
    def home(self) -> np.ndarray:
        return np.array([j.home for j in self.joints], dtype=float)

    @cached_property
    def radii(self) -> np.ndarray:
        return np.array([f.radius or 0.0 for f in self.frames])

    @cached_property
    def env_frames(self) -> np.ndarray:
        return np.array([k for k, f in enumerate(self.frames) if f.env_collision], dtype=np.intp)

    @cached_property
    def self_frames(self) -> np.ndarray:
        return np.array([k for k, f in enumerate(self.frames) if f.self_collision], dtype=np.intp)

    @cached_property
    def self_pair_array(self) -> np.ndarray:
        return np.array(self.self_pairs, dtype=np.intp).reshape(-1, 2)

    @cached_property
    def hand_frames(self) -> list:
        return [self.frame_index(h) for h in self.hands]

    @cached_property
    def ancestors(self) -> np.ndarray:
        """(m, n) mask: joint j lies on the path from the world to frame k."""
        mask = np.zeros((self.m, self.n), dtype=bool)
        dof = self._arrays[4]
        for k, f in enumerate(self.frames):
            if f.parent >= 0:
                mask[k] = mask[f.parent]
            if f.joint is not None:
                mask[k, dof[k]] = True
        return mask

    @cached_property
    def _arrays(self):
        parent = np.array([f.parent for f in self.frames], dtype=np.int64)
        opos = np.ascontiguousarray([f.xyz for f in self.frames], dtype=float).reshape(-1, 3)
        orot = np.ascontiguousarray([quat_to_matrix(f.quat) for f in self.frames]).reshape(-1, 3, 3)
        jtype = np.array([-1 if f.joint is None else f.joint.joint_type.code for f in self.frames],
                         dtype=np.int64)
        dof = np.full(len(self.frames), -1, dtype=np.int64)
        dof[jtype >= 0] = np.arange(int(np.count_nonzero(jtype >= 0)))
        revolute = np.array([j.joint_type.is_revolute for j in self.joints], dtype=bool)
        return parent, opos, orot, jtype, dof, revolute

    # -- evaluation ------------------------------------------------------------
    def _check(self, theta) -> np.ndarray:
        theta = np.ascontiguousarray(theta, dtype=float)
        if theta.shape != (self.n,):
            raise DimensionMismatch(f"{self.name}: expected {self.n} joint values, got shape {theta.shape}")
        return theta

    def fk_full(self, theta):
        """World ``(positions (m,3), rotations (m,3,3), joint axes (n,3), pivots (n,3))``."""
        parent, opos, orot, jtype, dof, _ = self._arrays
        return _kernels.fk_chain(parent, opos, orot, jtype, dof, self._check(theta))

    def jacobian_from(self, pos, axis, pivot) -> np.ndarray:
        revolute = self._arrays[5]
        cols = np.where(
            revolute[None, :, None],
            np.cross(axis[None, :, :], pos[:, None, :] - pivot[None, :, :]),
            axis[None, :, :],
        )
        cols *= self.ancestors[:, :, None]
        return np.ascontiguousarray(cols.transpose(0, 2, 1).reshape(3 * self.m, self.n))

    def out_of_limits(self, theta) -> np.ndarray:
        theta = self._check(theta)
        return (theta < self.limits[:, 0]) | (theta > self.limits[:, 1])

    def volumes(self, theta, theta_dot=None) -> list:
        """Robot collision spheres placed at the frame positions."""
        pos, _, axis, pivot = self.fk_full(theta)
        vel = np.zeros_like(pos)
        if theta_dot is not None:
            vel = (self.jacobian_from(pos, axis, pivot) @ np.asarray(theta_dot, float)).reshape(-1, 3)
        out = []
        for k, f in enumerate(self.frames):
            if f.radius is None:
                continue
            out.append(Volume.sphere(f.name, pos[k], f.radius, linear_velocity=vel[k], frame=k,
                                     env_collision=f.env_collision, self_collision=f.self_collision))
        return out

    def volume_self_pairs(self) -> list:
        """``self_pairs`` re-indexed into the list returned by :meth:`volumes`."""
        vol_index = {}
        for k, f in enumerate(self.frames):
            if f.radius is not None:
                vol_index[k] = len(vol_index)
        return [(vol_index[i], vol_index[j]) for i, j in self.self_pairs]


def forward_kinematics(model: RobotModel, theta):
    """Frame positions (flattened, 3m) and orientations (list of (w,x,y,z))."""
    pos, rot, _, _ = model.fk_full(theta)
    return pos.reshape(-1), [matrix_to_quat(r) for r in rot]


def jacobian(model: RobotModel, theta) -> np.ndarray:
    """Positional Jacobian of all frames, shape (3m, n)."""
    pos, _, axis, pivot = model.fk_full(theta)
    return model.jacobian_from(pos, axis, pivot)


JDOT_STEP = 1e-6


def jacobian_dot_qdot(model: RobotModel, theta, theta_dot, h: float = JDOT_STEP) -> np.ndarray:
    """J'(theta, theta_dot) theta_dot by a directional central difference of J."""
    theta = model._check(theta)
    theta_dot = model._check(theta_dot)
    if not np.any(theta_dot):
        return np.zeros(3 * model.m)
    jp = jacobian(model, theta + h * theta_dot)
    jm = jacobian(model, theta - h * theta_dot)
    return (jp - jm) @ theta_dot / (2.0 * h)


@dataclass
class KinematicState:
    """Everything the control loop needs from one FK evaluation."""

    pos: np.ndarray  # (m, 3)
    J: np.ndarray  # (3m, n)
    vel: np.ndarray  # (m, 3)
    jdot_qdot: Optional[np.ndarray] = None  # (3m,)


def evaluate(model: RobotModel, theta, theta_dot=None, need_jdot=False) -> KinematicState:
    pos, _, axis, pivot = model.fk_full(theta)
    J = model.jacobian_from(pos, axis, pivot)
    if theta_dot is None:
        vel = np.zeros_like(pos)
    else:
        vel = (J @ theta_dot).reshape(-1, 3)
    jdq = None
    if need_jdot:
        jdq = jacobian_dot_qdot(model, theta, theta_dot if theta_dot is not None else np.zeros(model.n))
    return KinematicState(pos, J, vel, jdq)


def build_model(name, frames: Sequence[dict], self_pairs=(), base_kind="fixed", hands=(),
                base_frame=None) -> RobotModel:
    """Construct a model from plain dictionaries using frame *names* for parents/pairs."""
    index = {}
    specs = []
    for k, f in enumerate(frames):
        parent = f.get("parent", "world")
        if parent in (None, "world"):
            pidx = -1
        elif parent in index:
            pidx = index[parent]
        else:
            raise ValueError(f"frame {f['name']}: unknown parent {parent!r} (parents must come first)")
        joint = f.get("joint")
        jspec = None
        if joint:
            jspec = JointSpec(
                f["name"], JointType(joint["type"]),
                tuple(float(v) for v in joint.get("limits", (-np.inf, np.inf))),
                float(joint.get("home", 0.0)),
            )
        specs.append(FrameSpec(
            f["name"], pidx, tuple(float(v) for v in f.get("xyz", (0, 0, 0))),
            tuple(float(v) for v in f.get("quat", (1, 0, 0, 0))), jspec,
            None if f.get("sphere") is None else float(f["sphere"]),
            bool(f.get("env_collision", False)), bool(f.get("self_collision", False)),
        ))
        index[f["name"]] = k
    pairs = []
    for a, b in self_pairs:
        if a not in index or b not in index:
            raise ValueError(f"self pair ({a}, {b}) references an unknown frame")
        pairs.append((index[a], index[b]))
    return RobotModel(name, tuple(specs), tuple(pairs), BaseKind(base_kind), tuple(hands), base_frame)


def point_robot_2d(radius: float = 0.05, height: float = 0.0) -> RobotModel:
    """A planar point robot: two prismatic DoFs carrying one sphere."""
    return build_model(
        "Point2D",
        [
            {"name": "LinearX", "joint": {"type": "planar_x", "limits": [-10, 10]}},
            {"name": "LinearY", "parent": "LinearX", "joint": {"type": "planar_y", "limits": [-10, 10]}},
            {"name": "Body", "parent": "LinearY", "xyz": [0, 0, height], "sphere": radius,
             "env_collision": True},
        ],
        hands=("Body",),
    )
