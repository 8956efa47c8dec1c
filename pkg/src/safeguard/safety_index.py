"""Safety indices over pairwise distances and their Lie derivatives.

Sign convention: phi > 0 means the margin is violated.

    order 1:  phi = d_min - d
    order 2:  phi = d_min^n - sign(d)|d|^n - k * d'

The time derivative is affine in the control, phi' = Lf + Lg u.  Cartesian
gradients are pushed into configuration space through the frame Jacobians
and the input map of the dynamics model.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import DynamicsModel, drift_acceleration, input_map
from .errors import DegenerateGradient, DimensionMismatch
from .geom import PairBatch, PairCategory, PairDistance


class IndexOrder(enum.IntEnum):
    ORDER1 = 1
    ORDER2 = 2


@dataclass(frozen=True)
class SafetyIndexSpec:
    order: IndexOrder = IndexOrder.ORDER1
    d_min_env: float = 0.05
    d_min_self: float = 0.03
    n: float = 2.0
    k: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "order", IndexOrder(int(self.order)))
        if not (self.d_min_env > 0 and self.d_min_self > 0):
            raise ValueError("d_min_env and d_min_self must be positive")
        if self.order is IndexOrder.ORDER2 and not (self.n > 0 and self.k > 0):
            raise ValueError("order-2 indices need n > 0 and k > 0")

    def d_min(self, category) -> float:
        return self.d_min_self if int(category) == PairCategory.SELF else self.d_min_env

    def d_min_array(self, category: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(category) == PairCategory.SELF, self.d_min_self, self.d_min_env)


def _phi(spec: SafetyIndexSpec, d, d_dot, d_min):
    if spec.order is IndexOrder.ORDER1:
        return d_min - d
    return d_min ** spec.n - np.sign(d) * np.abs(d) ** spec.n - spec.k * d_dot


def phi(spec: SafetyIndexSpec, pair: PairDistance) -> float:
    return float(_phi(spec, pair.d, pair.d_dot, spec.d_min(pair.category)))


@dataclass
class ConstraintEval:
    constraint_id: tuple  # (pair id, category)
    phi: float
    Lf_phi: float
    Lg_phi: np.ndarray
    # Cartesian gradient at each involved robot frame: {frame index: 3-vector}
    grad_cart: dict


@dataclass
class ConstraintBatch:
    """All constraints of one control step as stacked arrays.

    ``grad_cart`` holds, per row and per side (a, b), the gradient of phi
    with respect to the Cartesian quantity the control acts on: position
    for order 1, velocity for order 2.  ``frames`` is -1 for the non-robot
    side of environment pairs.
    """

    phi: np.ndarray  # (M,)
    Lf: np.ndarray  # (M,)
    Lg: np.ndarray  # (M, nu)
    grad_cart: np.ndarray  # (M, 2, 3)
    frames: np.ndarray  # (M, 2)
    category: np.ndarray  # (M,)
    d: np.ndarray  # (M,)
    ids: Optional[list] = None
    # J g_q (3m x nu), needed for the Cartesian filters
    JG: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.phi)

    @classmethod
    def empty(cls, nu: int) -> "ConstraintBatch":
        return cls(np.zeros(0), np.zeros(0), np.zeros((0, nu)), np.zeros((0, 2, 3)),
                   np.zeros((0, 2), np.intp), np.zeros(0, np.int8), np.zeros(0))

    @classmethod
    def from_evals(cls, evals, nu: Optional[int] = None, JG=None) -> "ConstraintBatch":
        evals = list(evals)
        if not evals:
            if nu is None:
                raise ValueError("control dimension needed for an empty constraint list")
            return cls.empty(nu)
        M = len(evals)
        grad = np.zeros((M, 2, 3))
        frames = np.full((M, 2), -1, np.intp)
        for i, e in enumerate(evals):
            for side, (f, g) in enumerate(list(e.grad_cart.items())[:2]):
                frames[i, side] = f
                grad[i, side] = g
        cat = np.array([int(e.constraint_id[1]) if len(e.constraint_id) > 1 else 0 for e in evals], np.int8)
        return cls(
            np.array([e.phi for e in evals], float),
            np.array([e.Lf_phi for e in evals], float),
            np.array([np.asarray(e.Lg_phi, float) for e in evals]),
            grad, frames, cat, np.full(M, np.nan), [e.constraint_id for e in evals], JG,
        )

    def evals(self) -> list:
        out = []
        for i in range(len(self)):
            gc = {int(f): self.grad_cart[i, s].copy() for s, f in enumerate(self.frames[i]) if f >= 0}
            cid = self.ids[i] if self.ids is not None else (i, PairCategory(int(self.category[i])))
            out.append(ConstraintEval(cid, float(self.phi[i]), float(self.Lf[i]), self.Lg[i].copy(), gc))
        return out


def _padded(block: np.ndarray, m: int, width: int) -> np.ndarray:
    """Reshape a stacked (3m, width) block to (m+1, 3, width) with a zero frame last.

    Index -1 then addresses the zero frame, standing in for non-robot volumes.
    """
    out = np.zeros((m + 1, 3, width))
    out[:m] = block.reshape(m, 3, width)
    return out


def _lie_core(model, dyn: DynamicsModel, spec: SafetyIndexSpec, theta, theta_dot, J, jdot_qdot,
              d, grad, d_dot, d_min, frame_a, frame_b, vel_a, vel_b, hess):
    if int(spec.order) != dyn.order:
        raise ValueError(f"safety index order {int(spec.order)} needs dynamics of the same order")
    if not np.all(np.isfinite(grad)):
        bad = int(np.nonzero(~np.all(np.isfinite(grad), axis=1))[0][0])
        raise DegenerateGradient("pair gradient undefined", bad)
    m, nu = model.m, dyn.control_dim
    G = input_map(dyn, theta)
    JG = J if not dyn.mobile else J @ G
    JG3 = _padded(JG, m, nu)
    on_a = frame_a >= 0
    on_b = frame_b >= 0
    dJG = JG3[frame_a] - JG3[frame_b]  # (M, 3, nu)
    phi_v = _phi(spec, d, d_dot, d_min)

    if spec.order is IndexOrder.ORDER1:
        # phi' = -grad . (v_a - v_b); drift only from non-robot volumes
        free = np.where(on_a[:, None], 0.0, vel_a) - np.where(on_b[:, None], 0.0, vel_b)
        Lf = -np.einsum("ki,ki->k", grad, free)
        Lg = -np.einsum("ki,kin->kn", grad, dJG)
        gcart = np.stack([-grad, grad], axis=1)
    else:
        k, n = spec.k, spec.n
        w = vel_a - vel_b
        acc = jdot_qdot.reshape(m, 3)
        drift = drift_acceleration(dyn, theta, theta_dot)
        if np.any(drift):
            acc = acc + (J @ drift).reshape(m, 3)
        acc3 = np.zeros((m + 1, 3))
        acc3[:m] = acc
        dacc = acc3[frame_a] - acc3[frame_b]
        s_prime = n * np.abs(d) ** (n - 1)
        curv = np.einsum("ki,kij,kj->k", w, hess, w)
        Lf = -s_prime * d_dot - k * curv - k * np.einsum("ki,ki->k", grad, dacc)
        Lg = -k * np.einsum("ki,kin->kn", grad, dJG)
        gcart = np.stack([-k * grad, k * grad], axis=1)
    gcart = gcart * np.stack([on_a, on_b], axis=1)[:, :, None]
    return phi_v, Lf, Lg, gcart, JG


def constraint_batch(model, dyn: DynamicsModel, spec: SafetyIndexSpec, x, kin, pairs: PairBatch,
                     ids: Optional[list] = None) -> ConstraintBatch:
    """Safety constraints for every pair of a :class:`PairBatch`."""
    theta, theta_dot = dyn.split(x)
    if theta_dot is None:
        theta_dot = np.zeros(dyn.n)
    if spec.order is IndexOrder.ORDER2 and (pairs.hess is None or kin.jdot_qdot is None) and len(pairs):
        raise ValueError("order-2 constraints need pair Hessians and J'theta'")
    d_min = spec.d_min_array(pairs.category)
    hess = pairs.hess if pairs.hess is not None else np.zeros((len(pairs), 3, 3))
    phi_v, Lf, Lg, gcart, JG = _lie_core(
        model, dyn, spec, theta, theta_dot, kin.J, kin.jdot_qdot, pairs.d, pairs.grad_a, pairs.d_dot,
        d_min, pairs.frame_a, pairs.frame_b, pairs.vel_a, pairs.vel_b, hess,
    )
    frames = np.stack([pairs.frame_a, pairs.frame_b], axis=1)
    return ConstraintBatch(phi_v, Lf, Lg, gcart, frames, pairs.category, pairs.d, ids, JG)


def lie_derivatives(model, dyn: DynamicsModel, spec: SafetyIndexSpec, x, pair: PairDistance, J,
                    jdot_qdot=None) -> ConstraintEval:
    """Single-pair version of :func:`constraint_batch`.

    ``pair`` must carry its frame attachments (as produced by
    :func:`~safeguard.geom.signed_distance` on robot volumes); the
    velocities stored with the pair are used for the distance rate.
    """
    theta, theta_dot = dyn.split(x)
    if theta_dot is None:
        theta_dot = np.zeros(dyn.n)
    J = np.asarray(J, float)
    if J.shape != (3 * model.m, dyn.n):
        raise DimensionMismatch(f"expected Jacobian of shape {(3 * model.m, dyn.n)}, got {J.shape}")
    if jdot_qdot is None:
        jdot_qdot = np.zeros(3 * model.m)
    fa = -1 if pair.frame_a is None else int(pair.frame_a)
    fb = -1 if pair.frame_b is None else int(pair.frame_b)
    va = np.zeros(3) if pair.vel_a is None else pair.vel_a
    vb = np.zeros(3) if pair.vel_b is None else pair.vel_b
    hess = np.zeros((3, 3)) if pair.hess is None else pair.hess
    try:
        phi_v, Lf, Lg, gcart, _ = _lie_core(
            model, dyn, spec, theta, theta_dot, J, np.asarray(jdot_qdot, float),
            np.array([pair.d]), pair.grad_a[None], np.array([pair.d_dot]),
            np.array([spec.d_min(pair.category)]), np.array([fa]), np.array([fb]),
            va[None], vb[None], hess[None],
        )
    except DegenerateGradient:
        raise DegenerateGradient("pair gradient undefined", pair.pair_id) from None
    grad_cart = {f: gcart[0, s] for s, f in enumerate((fa, fb)) if f >= 0}
    return ConstraintEval((pair.pair_id, pair.category), float(phi_v[0]), float(Lf[0]), Lg[0], grad_cart)
