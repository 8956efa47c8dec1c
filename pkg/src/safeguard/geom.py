"""Analytic collision primitives and signed distances.

Two primitives are supported, spheres and (optionally rotated) boxes.  Every
distance comes with its analytic gradient with respect to both centers and a
distance rate computed from the stored linear velocities.  Box-box pairs are
not supported: robot collision volumes are always spheres.

Two entry points exist: the object level :func:`signed_distance` /
:func:`all_pairs` working on :class:`Volume` values, and the array level
:func:`pair_batch` used by the simulator's control loop.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateConfiguration, UnsupportedPair


class VolumeKind(enum.Enum):
    SPHERE = "sphere"
    BOX = "box"


class PairCategory(enum.IntEnum):
    ENV = 0
    SELF = 1


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    w, x, y, z = (float(c) for c in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """(w, x, y, z) quaternion of a rotation matrix, w >= 0."""
    from scipy.spatial.transform import Rotation

    x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    return -q if w < 0 else q


_IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class Volume:
    """A sphere or box with a pose and a linear velocity.

    ``size`` is the radius for spheres and the edge lengths ``(w_x, w_y, w_z)``
    for boxes.  ``frame`` is the robot frame the volume is attached to, or
    ``None`` for world-fixed (environment) volumes.
    """

    id: str
    kind: VolumeKind
    center: np.ndarray
    size: object
    orientation: np.ndarray = field(default_factory=lambda: _IDENTITY_QUAT.copy())
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frame: Optional[int] = None
    env_collision: bool = True
    self_collision: bool = False

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        set_(self, "linear_velocity", np.asarray(self.linear_velocity, dtype=float).reshape(3))
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"volume {self.id}: orientation must be a unit quaternion")
        if self.kind is VolumeKind.SPHERE:
            r = float(self.size)
            if not r > 0:
                raise ValueError(f"volume {self.id}: radius must be positive")
            if not np.allclose(q, _IDENTITY_QUAT) and not np.allclose(q, -_IDENTITY_QUAT):
                raise ValueError(f"volume {self.id}: spheres carry the identity orientation")
            set_(self, "size", r)
        else:
            w = np.asarray(self.size, dtype=float).reshape(3)
            if not np.all(w > 0):
                raise ValueError(f"volume {self.id}: box edge lengths must be positive")
            set_(self, "size", w)
        set_(self, "orientation", q)
        set_(self, "_rot", quat_to_matrix(q))

    @property
    def rotation(self) -> np.ndarray:
        return self._rot

    @classmethod
    def sphere(cls, id, center, radius, **kw) -> "Volume":
        return cls(id, VolumeKind.SPHERE, center, radius, **kw)

    @classmethod
    def box(cls, id, center, edges, **kw) -> "Volume":
        return cls(id, VolumeKind.BOX, center, edges, **kw)


@dataclass(frozen=True)
class PairDistance:
    pair_id: tuple
    d: float
    grad_a: np.ndarray
    grad_b: np.ndarray
    d_dot: float
    category: PairCategory = PairCategory.ENV
    # attachment/motion data carried along for the Lie-derivative stage
    frame_a: Optional[int] = None
    frame_b: Optional[int] = None
    vel_a: Optional[np.ndarray] = None
    vel_b: Optional[np.ndarray] = None
    hess: Optional[np.ndarray] = None  # d^2 d / dp_a^2 (= d^2 d / dp_b^2)


def signed_distance(a: Volume, b: Volume) -> PairDistance:
    """Surface-to-surface signed distance between two volumes.

    Negative when interpenetrating.  For a sphere center inside a box the
    distance continues as ``-(depth to the nearest face) - r``.
    """
    pair_id = (a.id, b.id)
    if a.kind is VolumeKind.BOX and b.kind is VolumeKind.BOX:
        raise UnsupportedPair(f"box-box distance is not supported: {pair_id}")
    if a.kind is VolumeKind.BOX:
        f = signed_distance(b, a)
        return PairDistance(pair_id, f.d, f.grad_b, f.grad_a, f.d_dot, f.category,
                            f.frame_b, f.frame_a, f.vel_b, f.vel_a, f.hess)

    if b.kind is VolumeKind.SPHERE:
        d, n, rho = _kernels.sphere_sphere(
            a.center[None], np.array([a.size]), b.center[None], np.array([b.size])
        )
        mask = None
    else:
        d, n, rho, mask = _kernels.sphere_box(
            a.center[None], np.array([a.size]), b.center[None],
            np.ascontiguousarray(b.rotation[None]), (b.size / 2.0)[None],
        )
        # center exactly on the box's center: every face is tied and the
        # in-box gradient sign is arbitrary
        if rho[0] == 0.0 and np.allclose(a.center, b.center, rtol=0, atol=0):
            raise DegenerateConfiguration("sphere center coincides with box center", pair_id)
    if b.kind is VolumeKind.SPHERE and rho[0] == 0.0:
        raise DegenerateConfiguration("coincident sphere centers", pair_id)
    grad_a = n[0]
    grad_b = -grad_a
    d_dot = float(grad_a @ a.linear_velocity + grad_b @ b.linear_velocity)
    if mask is None:
        hess = _sphere_hessian(n, rho)[0]
    elif rho[0] > 0:
        R = b.rotation
        hess = (R @ np.diag(mask[0]) @ R.T - np.outer(grad_a, grad_a)) / rho[0]
    else:
        hess = np.zeros((3, 3))
    return PairDistance(pair_id, float(d[0]), grad_a, grad_b, d_dot, PairCategory.ENV,
                        a.frame, b.frame, a.linear_velocity, b.linear_velocity, hess)


def all_pairs(
    robot_volumes: Sequence[Volume],
    env_volumes: Sequence[Volume],
    self_pairs: Sequence[tuple] = (),
) -> list:
    """Evaluate every environment pair and every listed self pair.

    Environment pairs combine each ``env_collision`` robot volume with every
    environment volume.  ``self_pairs`` index into ``robot_volumes`` and must
    reference ``self_collision`` volumes.  Output is ordered Env first, then
    Self, each lexicographically by (id_a, id_b).
    """
    out = []
    for a in robot_volumes:
        if not a.env_collision:
            continue
        for b in env_volumes:
            out.append(_tagged(a, b, PairCategory.ENV))
    for i, j in self_pairs:
        a, b = robot_volumes[i], robot_volumes[j]
        if not (a.self_collision and b.self_collision):
            raise ValueError(f"self pair ({a.id}, {b.id}) references a volume without SelfCollision")
        out.append(_tagged(a, b, PairCategory.SELF))
    out.sort(key=lambda p: (int(p.category), p.pair_id))
    return out


def _tagged(a, b, category):
    try:
        p = signed_distance(a, b)
    except DegenerateConfiguration as exc:
        raise DegenerateConfiguration("degenerate pair", (a.id, b.id)) from exc
    return replace(p, category=category)


# ---------------------------------------------------------------------------
# array level


@dataclass
class ObstacleSet:
    """Environment volumes as parallel arrays (spheres and boxes mixed)."""

    centers: np.ndarray  # (N, 3)
    velocities: np.ndarray  # (N, 3)
    is_box: np.ndarray  # (N,) bool
    radii: np.ndarray  # (N,) sphere radius, 0 for boxes
    half: np.ndarray  # (N, 3) box half extents, 0 for spheres
    rotations: np.ndarray  # (N, 3, 3)

    def __len__(self):
        return len(self.centers)

    @classmethod
    def empty(cls) -> "ObstacleSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, bool), np.zeros(0),
                   np.zeros((0, 3)), np.zeros((0, 3, 3)))

    @classmethod
    def from_volumes(cls, volumes: Sequence[Volume]) -> "ObstacleSet":
        if not volumes:
            return cls.empty()
        is_box = np.array([v.kind is VolumeKind.BOX for v in volumes])
        return cls(
            np.array([v.center for v in volumes]),
            np.array([v.linear_velocity for v in volumes]),
            is_box,
            np.array([0.0 if b else v.size for v, b in zip(volumes, is_box)]),
            np.array([v.size / 2.0 if b else np.zeros(3) for v, b in zip(volumes, is_box)]),
            np.array([v.rotation for v in volumes]),
        )

    def volumes(self, prefix="obs") -> list:
        out = []
        for j in range(len(self)):
            kw = dict(linear_velocity=self.velocities[j])
            if self.is_box[j]:
                out.append(Volume.box(f"{prefix}{j:03d}", self.centers[j], 2.0 * self.half[j],
                                      orientation=matrix_to_quat(self.rotations[j]), **kw))
            else:
                out.append(Volume.sphere(f"{prefix}{j:03d}", self.centers[j], self.radii[j], **kw))
        return out

    def copy(self) -> "ObstacleSet":
        return ObstacleSet(*(np.array(a, copy=True) for a in
                             (self.centers, self.velocities, self.is_box, self.radii,
                              self.half, self.rotations)))


@dataclass
class PairBatch:
    """Distances for all constraint pairs of one control step.

    Volume ``a`` is always a robot sphere (``frame_a``); ``b`` is either an
    obstacle (``obstacle >= 0``, ``frame_b == -1``) or a robot sphere.  ``hess``
    is ``d^2 d / dp_a^2`` (the distance depends on ``p_a - p_b`` only, so
    ``H_ab = -H`` and ``H_bb = H``).
    """

    d: np.ndarray
    grad_a: np.ndarray
    grad_b: np.ndarray
    d_dot: np.ndarray
    category: np.ndarray
    frame_a: np.ndarray
    frame_b: np.ndarray
    obstacle: np.ndarray
    vel_a: np.ndarray
    vel_b: np.ndarray
    hess: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.d)

    @property
    def n_env(self) -> int:
        return int(np.count_nonzero(self.category == PairCategory.ENV))

    def min_distance(self, category: PairCategory) -> float:
        sel = self.d[self.category == category]
        return float(sel.min()) if len(sel) else float("inf")


def pair_batch(
    robot_pos: np.ndarray,
    robot_rad: np.ndarray,
    robot_vel: np.ndarray,
    env_frames: np.ndarray,
    obstacles: ObstacleSet,
    self_pairs: np.ndarray,
    need_hessian: bool = False,
    names: Optional[Sequence[str]] = None,
) -> PairBatch:
    """Vectorised all-pairs evaluation.

    Env pairs come first, ordered by (robot frame, obstacle index), followed by
    the self pairs in the given order.
    """
    env_frames = np.asarray(env_frames, dtype=np.intp)
    self_pairs = np.asarray(self_pairs, dtype=np.intp).reshape(-1, 2)
    n_obs = len(obstacles)
    fa_env = np.repeat(env_frames, n_obs)
    ob_env = np.tile(np.arange(n_obs, dtype=np.intp), len(env_frames))
    k_env = len(fa_env)
    k = k_env + len(self_pairs)

    d = np.empty(k)
    grad = np.empty((k, 3))
    hess = np.zeros((k, 3, 3)) if need_hessian else None

    if k_env:
        box = obstacles.is_box[ob_env]
        sph = ~box
        if sph.any():
            rows = np.nonzero(sph)[0]
            ob = ob_env[rows]
            dd, nn, rr = _kernels.sphere_sphere(
                np.ascontiguousarray(robot_pos[fa_env[rows]]), np.ascontiguousarray(robot_rad[fa_env[rows]]),
                np.ascontiguousarray(obstacles.centers[ob]), np.ascontiguousarray(obstacles.radii[ob]),
            )
            d[rows], grad[rows] = dd, nn
            _check_rho(rr, lambda i: (_frame_label(names, fa_env[rows[i]]), f"obs{ob[i]:03d}"))
            if need_hessian:
                hess[rows] = _sphere_hessian(nn, rr)
        if box.any():
            rows = np.nonzero(box)[0]
            ob = ob_env[rows]
            rot = np.ascontiguousarray(obstacles.rotations[ob])
            dd, nn, rr, mask = _kernels.sphere_box(
                np.ascontiguousarray(robot_pos[fa_env[rows]]), np.ascontiguousarray(robot_rad[fa_env[rows]]),
                np.ascontiguousarray(obstacles.centers[ob]), rot, np.ascontiguousarray(obstacles.half[ob]),
            )
            d[rows], grad[rows] = dd, nn
            same = np.all(robot_pos[fa_env[rows]] == obstacles.centers[ob], axis=1)
            _check_rho(np.where(same, 0.0, 1.0),
                       lambda i: (_frame_label(names, fa_env[rows[i]]), f"obs{ob[i]:03d}"))
            if need_hessian:
                out = rr > 0
                if out.any():
                    r_o = rot[out]
                    proj = np.einsum("kij,kj,klj->kil", r_o, mask[out], r_o)
                    nq = nn[out]
                    hess[rows[out]] = (proj - nq[:, :, None] * nq[:, None, :]) / rr[out, None, None]
    if len(self_pairs):
        rows = np.arange(k_env, k)
        ia, ib = self_pairs[:, 0], self_pairs[:, 1]
        dd, nn, rr = _kernels.sphere_sphere(
            np.ascontiguousarray(robot_pos[ia]), np.ascontiguousarray(robot_rad[ia]),
            np.ascontiguousarray(robot_pos[ib]), np.ascontiguousarray(robot_rad[ib]),
        )
        d[rows], grad[rows] = dd, nn
        _check_rho(rr, lambda i: (_frame_label(names, ia[i]), _frame_label(names, ib[i])))
        if need_hessian:
            hess[rows] = _sphere_hessian(nn, rr)

    frame_a = np.concatenate([fa_env, self_pairs[:, 0]])
    frame_b = np.concatenate([np.full(k_env, -1, np.intp), self_pairs[:, 1]])
    obstacle = np.concatenate([ob_env, np.full(len(self_pairs), -1, np.intp)])
    vel_a = robot_vel[frame_a]
    vel_b = np.empty((k, 3))
    vel_b[:k_env] = obstacles.velocities[ob_env]
    vel_b[k_env:] = robot_vel[self_pairs[:, 1]]
    d_dot = np.einsum("ij,ij->i", grad, vel_a - vel_b)
    category = np.concatenate([np.zeros(k_env, np.int8), np.ones(len(self_pairs), np.int8)])
    return PairBatch(d, grad, -grad, d_dot, category, frame_a, frame_b, obstacle, vel_a, vel_b, hess)


def _sphere_hessian(n, rho):
    eye = np.eye(3)[None]
    return (eye - n[:, :, None] * n[:, None, :]) / rho[:, None, None]


def _check_rho(rho, label):
    bad = np.nonzero(rho == 0.0)[0]
    if len(bad):
        raise DegenerateConfiguration("coincident centers", label(int(bad[0])))


def _frame_label(names, f):
    return names[f] if names is not None else f"frame{f}"
