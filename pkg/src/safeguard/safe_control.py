"""Safety filters: map a reference control to a safe control.

SSA, CBF and SSS build linear constraints on ``u`` from the safety index
Lie derivatives and solve a box-constrained QP with slack relaxation; PFM
and SMA correct the reference directly.  The QP is solved by Hildreth's
dual coordinate ascent, which is exact and cheap here because the Hessian
is diagonal.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .errors import DimensionMismatch, NonFiniteProblem
from .safety_index import ConstraintBatch, ConstraintEval

DEFAULT_SLACK_PENALTY = 1e6
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 5000
# sweep budget of the slack-free phase
HARD_PHASE_ITER = 200
# sweeps between exact active-set refinement attempts
CHUNK = 50
SLACK_ZERO = 1e-9
# over-relaxation of the multiplier sweeps
OMEGA = 1.5
FEASIBILITY_TOL = 1e-7


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    SLACK_RELAXED = "SlackRelaxed"
    MAX_ITERATIONS = "MaxIterations"


class Algorithm(enum.Enum):
    SSA = "ssa"
    CBF = "cbf"
    SSS = "sss"
    PFM = "pfm"
    SMA = "sma"

    @property
    def param_name(self) -> str:
        return {"ssa": "eta_ssa", "cbf": "lambda_cbf", "sss": "lambda_sss",
                "pfm": "c_pfm", "sma": "c_sma"}[self.value]


@dataclass(frozen=True)
class FilterParams:
    """One algorithm and its single tuning parameter.

    ``param`` is interpreted as eta_ssa, lambda_cbf, lambda_sss, c_pfm or
    c_sma depending on ``algorithm``.
    """

    algorithm: Algorithm
    param: float
    activation_tolerance: float = 1e-6
    q_weights: Optional[tuple] = None  # diagonal of Q_u, identity when None
    slack_penalty: float = DEFAULT_SLACK_PENALTY
    dls_damping: float = 1e-3
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not (np.isfinite(self.param) and self.param >= 0):
            raise ValueError(f"{self.algorithm.param_name} must be a finite number >= 0")
        if not self.activation_tolerance >= 0:
            raise ValueError("activation tolerance must be >= 0")
        if not self.slack_penalty > 0:
            raise ValueError("slack penalty must be positive")
        if self.q_weights is not None:
            object.__setattr__(self, "q_weights", tuple(float(q) for q in self.q_weights))
            if min(self.q_weights) <= 0:
                raise ValueError("Q_u weights must be positive")

    def weights(self, nu: int) -> np.ndarray:
        if self.q_weights is None:
            return np.ones(nu)
        if len(self.q_weights) != nu:
            raise DimensionMismatch(f"Q_u has {len(self.q_weights)} weights, control has {nu} channels")
        return np.array(self.q_weights)


@dataclass
class QPProblem:
    """min ||u - u_ref||^2_Q + rho ||s||^2  s.t.  A u <= b + s, s >= 0, lo <= u <= hi."""

    u_ref: np.ndarray
    A: np.ndarray
    b: np.ndarray
    Q: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    slack_penalty: float = DEFAULT_SLACK_PENALTY
    ids: Optional[list] = None

    def __post_init__(self):
        self.u_ref = np.asarray(self.u_ref, dtype=float).reshape(-1)
        n = len(self.u_ref)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if len(self.b) != len(self.A):
            raise DimensionMismatch(f"{len(self.A)} constraint rows but {len(self.b)} bounds")
        self.Q = np.ones(n) if self.Q is None else np.asarray(self.Q, dtype=float).reshape(n)
        self.lo = np.full(n, -np.inf) if self.lo is None else np.asarray(self.lo, dtype=float).reshape(n)
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).reshape(n)
        if np.any(self.Q <= 0):
            raise ValueError("Q_u entries must be positive")
        if not self.slack_penalty > 0:
            raise ValueError("slack penalty must be positive")
        if np.any(self.lo > self.hi):
            raise ValueError("box limits must satisfy lo <= hi")
        for name in ("u_ref", "A", "b", "Q"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteProblem(f"QP {name} contains non-finite values")

    @property
    def m(self) -> int:
        return len(self.b)

    def objective(self, u, s=None) -> float:
        e = np.asarray(u) - self.u_ref
        val = float(e @ (self.Q * e))
        if s is not None:
            val += self.slack_penalty * float(np.dot(s, s))
        return val


@dataclass
class SafeControlResult:
    u_safe: np.ndarray
    status: Status
    active_set: list = field(default_factory=list)
    slack_used: np.ndarray = field(default_factory=lambda: np.zeros(0))
    correction_norm: float = 0.0
    kkt_residual: float = 0.0
    iterations: int = 0
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # the rows a u <= b that were handed to the solver (empty for PFM/SMA)
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    triggered: bool = False
    note: str = ""


def _kkt(p: QPProblem, u, lam, nu, s) -> float:
    r = p.A @ u - p.b - s if p.m else np.zeros(0)
    primal = float(np.max(r, initial=0.0))
    comp = float(np.max(np.abs(lam * r), initial=0.0))
    stat = 2.0 * p.Q * (u - p.u_ref) + p.A.T @ lam + nu
    gap_hi = np.where(nu > 0, p.hi - u, 0.0)
    gap_lo = np.where(nu < 0, u - p.lo, 0.0)
    box_comp = np.abs(nu) * (gap_hi + gap_lo)
    return max(primal, comp, float(np.max(np.abs(stat), initial=0.0)), float(np.max(box_comp, initial=0.0)))


def _run(p, u, lam, nu, slack_c, tol, max_iter):
    q2inv = 0.5 / p.Q
    it, ok = _kernels.hildreth(
        np.ascontiguousarray(p.A), np.ascontiguousarray(p.b), q2inv, u, lam, nu,
        p.lo, p.hi, float(slack_c), float(tol), int(max_iter), OMEGA,
    )
    return int(it), bool(ok)


def _refine(p: QPProblem, lam, u, slack_c: float, rounds: int = 25):
    """Primal-dual active-set refinement started from an approximate iterate.

    Each round solves the KKT equations exactly on the current guess of
    active rows and bound-clamped channels, then adds violated rows, drops
    negative multipliers and frees channels whose bound multiplier has the
    wrong sign.  Returns the exact ``(u, lam, nu)`` once the guess is
    self-consistent, else ``None``.
    """
    q2inv = 0.5 / p.Q
    S = lam > 0
    at_hi = u >= p.hi
    at_lo = (u <= p.lo) & ~at_hi
    tol = 1e-12 * (1.0 + float(np.max(np.abs(p.b), initial=0.0)))
    for _ in range(rounds):
        fixed = at_hi | at_lo
        F = np.nonzero(~fixed)[0]
        u_new = p.u_ref.copy()
        u_new[at_hi] = p.hi[at_hi]
        u_new[at_lo] = p.lo[at_lo]
        lam_new = np.zeros(p.m)
        rows = np.nonzero(S)[0]
        if len(rows):
            AF = p.A[np.ix_(rows, F)]
            K = (AF * q2inv[F]) @ AF.T
            rhs = p.A[rows] @ u_new - p.b[rows]
            if slack_c > 0:
                # positive definite with the slack term
                K[np.diag_indices_from(K)] += slack_c
                sol = cho_solve(cho_factor(K), rhs)
            else:
                if len(rows) > len(F):
                    # more equalities than free channels: give up unless they are consistent
                    step, *_ = np.linalg.lstsq(AF, -rhs, rcond=None)
                    if np.max(np.abs(AF @ step + rhs), initial=0.0) > 1e3 * tol:
                        return None
                sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            lam_new[rows] = sol
            u_new[F] = p.u_ref[F] - q2inv[F] * (AF.T @ sol)
        nu = -2.0 * p.Q * (u_new - p.u_ref) - p.A.T @ lam_new
        nu[F] = 0.0
        resid = p.A @ u_new - p.b - slack_c * lam_new
        lam_scale = tol * (1.0 + float(np.max(np.abs(lam_new), initial=0.0)))
        new_S = (S & (lam_new >= -lam_scale)) | (~S & (resid > tol))
        new_hi = (at_hi & (nu >= 0)) | (~fixed & (u_new > p.hi))
        new_lo = (at_lo & (nu <= 0)) | (~fixed & (u_new < p.lo))
        if np.array_equal(new_S, S) and np.array_equal(new_hi, at_hi) and np.array_equal(new_lo, at_lo):
            if np.all(np.isfinite(u_new)):
                return u_new, np.maximum(lam_new, 0.0), nu
            return None
        S, at_hi, at_lo = new_S, new_hi, new_lo & ~new_hi
    return None


def solve_qp(p: QPProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SafeControlResult:
    """Solve the slack-relaxed QP.

    The relaxed problem is solved by dual coordinate ascent, with an exact
    active-set refinement tried every ``CHUNK`` sweeps.  When its slacks
    are not all zero, the slack-free problem is attempted from the relaxed
    solution; if it is feasible its exact solution is reported as Optimal,
    otherwise the relaxed solution is kept and flagged SlackRelaxed.

    Rows that every u in the box satisfies are dropped before solving
    (multiplier and slack exactly zero).  A zero row with b < 0 cannot be
    met by any u; it gets slack -b in closed form and forces SlackRelaxed.
    """
    if p.m == 0:
        u, lam, nu, slack_c, status, iters = _solve(p, tol, max_iter)
        return _result(p, u, lam, nu, slack_c * lam, status, iters)
    # rows every box point satisfies are inactive; rows with a zero coefficient
    # vector and b < 0 are unsatisfiable and decouple from u (slack = -b)
    zero = ~p.A.any(axis=1)
    with np.errstate(invalid="ignore"):  # 0 * inf on unbounded channels, masked out below
        worst = np.where(p.A > 0, p.A * p.hi, np.where(p.A < 0, p.A * p.lo, 0.0)).sum(axis=1)
    dead = zero & (p.b < 0)
    keep = np.nonzero(~(worst <= p.b) & ~zero)[0]
    sub = p if len(keep) == p.m else QPProblem(p.u_ref, p.A[keep], p.b[keep], p.Q, p.lo, p.hi, p.slack_penalty)
    u, lam_sub, nu, slack_c, status, iters = _solve(sub, tol, max_iter)
    lam = np.zeros(p.m)
    lam[keep] = lam_sub
    slack = np.zeros(p.m)
    slack[keep] = slack_c * lam_sub
    if dead.any():
        slack[dead] = -p.b[dead]
        lam[dead] = 2.0 * p.slack_penalty * slack[dead]
        if status is Status.OPTIMAL:
            status = Status.SLACK_RELAXED
    return _result(p, u, lam, nu, slack, status, iters)


def _solve(p: QPProblem, tol, max_iter):
    """Two-phase solve; returns ``(u, lam, nu, slack_c, status, iters)``."""
    n = len(p.u_ref)
    u = p.u_ref.copy()
    lam = np.zeros(p.m)
    nu = np.zeros(n)
    if p.m == 0:
        u = np.clip(u, p.lo, p.hi)
        nu = 2.0 * p.Q * (p.u_ref - u)
        return (u, lam, nu, 0.0, Status.OPTIMAL, 0)
    slack_c = 0.5 / p.slack_penalty
    state, iters, ok = _ascend(p, u, lam, nu, slack_c, tol, max_iter)
    if not ok:
        return (np.clip(u, p.lo, p.hi), lam, nu, slack_c, Status.MAX_ITERATIONS, iters)
    u, lam, nu = state
    if float(np.max(slack_c * lam)) <= SLACK_ZERO:
        hard = _refine(p, lam, u, 0.0) if np.any(lam > 0) else None
        if hard is not None:
            return (*hard, 0.0, Status.OPTIMAL, iters)
        return (u, lam, nu, slack_c, Status.OPTIMAL, iters)
    hard = _refine(p, lam, u, 0.0)
    if hard is None:
        u2, lam2, nu2 = u.copy(), lam.copy(), nu.copy()
        state2, it2, ok2 = _ascend(p, u2, lam2, nu2, 0.0, tol, min(HARD_PHASE_ITER, max_iter))
        iters += it2
        if ok2 and float(np.max(p.A @ state2[0] - p.b)) <= FEASIBILITY_TOL:
            hard = state2
    if hard is not None:
        return (*hard, 0.0, Status.OPTIMAL, iters)
    return (u, lam, nu, slack_c, Status.SLACK_RELAXED, iters)


def _ascend(p, u, lam, nu, slack_c, tol, max_iter):
    """Sweep in chunks, refining exactly between chunks; returns ``((u, lam, nu), iters, ok)``."""
    done = 0
    while done < max_iter:
        it, ok = _run(p, u, lam, nu, slack_c, tol, min(CHUNK, max_iter - done))
        done += it
        if ok:
            exact = _refine(p, lam, u, slack_c) if np.any(lam > 0) else None
            return (exact or (u, lam, nu)), done, True
        exact = _refine(p, lam, u, slack_c)
        if exact is not None:
            return exact, done, True
    return (u, lam, nu), done, False


def _result(p, u, lam, nu, s, status, iters):
    slack = s if status is not Status.OPTIMAL else np.zeros(p.m)
    e = u - p.u_ref
    active = np.nonzero(lam > 0)[0]
    ids = [p.ids[i] for i in active] if p.ids is not None else [int(i) for i in active]
    return SafeControlResult(
        u, status, ids, slack, float(np.sqrt(e @ (p.Q * e))), _kkt(p, u, lam, nu, s),
        iters, lam, p.A, p.b, bool(p.m),
    )


# ---------------------------------------------------------------------------
# filters


def _as_batch(constraints, nu) -> ConstraintBatch:
    if isinstance(constraints, ConstraintBatch):
        return constraints
    return ConstraintBatch.from_evals(constraints, nu)


def _box(box, nu):
    if box is None:
        return np.full(nu, -np.inf), np.full(nu, np.inf)
    if hasattr(box, "control_lo"):
        return box.control_lo, box.control_hi
    lo, hi = box
    return np.broadcast_to(np.asarray(lo, float), (nu,)), np.broadcast_to(np.asarray(hi, float), (nu,))


def _identity(u_ref, box=None) -> SafeControlResult:
    """Pass-through; a reference outside the box is still clipped into it."""
    if box is not None:
        lo, hi = _box(box, len(u_ref))
        if np.any(u_ref < lo) or np.any(u_ref > hi):
            u = np.clip(u_ref, lo, hi)
            return SafeControlResult(u, Status.OPTIMAL, correction_norm=float(np.linalg.norm(u - u_ref)),
                                     note="clipped to the control box")
    return SafeControlResult(u_ref, Status.OPTIMAL)


def _qp_filter(u_ref, batch, rows, bound, params, box):
    nu = len(u_ref)
    lo, hi = _box(box, nu)
    ids = None
    if batch.ids is not None:
        ids = [batch.ids[i] for i in rows]
    else:
        ids = [int(i) for i in rows]
    p = QPProblem(u_ref, batch.Lg[rows], bound, params.weights(nu), lo, hi, params.slack_penalty, ids)
    return solve_qp(p, params.tol, params.max_iter)


def _check(u_ref, batch, nu=None):
    u_ref = np.asarray(u_ref, dtype=float)
    if batch.Lg.shape[1:] != u_ref.shape:
        raise DimensionMismatch(f"constraints have {batch.Lg.shape[1]} control columns, u_ref has {u_ref.shape}")
    return u_ref


def ssa_filter(u_ref, constraints, params: FilterParams, box=None) -> SafeControlResult:
    """phi' <= -eta where phi > eps, phi' <= 0 on the boundary band |phi| <= eps."""
    u_ref = np.asarray(u_ref, dtype=float)
    batch = _as_batch(constraints, len(u_ref))
    u_ref = _check(u_ref, batch)
    eps = params.activation_tolerance
    unsafe = batch.phi > eps
    hold = np.abs(batch.phi) <= eps
    rows = np.nonzero(unsafe | hold)[0]
    if len(rows) == 0:
        return _identity(u_ref, box)
    bound = -batch.Lf[rows] - np.where(unsafe[rows], params.param, 0.0)
    return _qp_filter(u_ref, batch, rows, bound, params, box)


def cbf_filter(u_ref, constraints, params: FilterParams, box=None) -> SafeControlResult:
    """phi' <= -lambda phi on every constraint."""
    u_ref = np.asarray(u_ref, dtype=float)
    batch = _as_batch(constraints, len(u_ref))
    u_ref = _check(u_ref, batch)
    rows = np.arange(len(batch))
    bound = -params.param * batch.phi - batch.Lf
    return _qp_filter(u_ref, batch, rows, bound, params, box)


def sss_filter(u_ref, constraints, params: FilterParams, box=None) -> SafeControlResult:
    """phi' <= -lambda phi where phi >= -eps."""
    u_ref = np.asarray(u_ref, dtype=float)
    batch = _as_batch(constraints, len(u_ref))
    u_ref = _check(u_ref, batch)
    rows = np.nonzero(batch.phi >= -params.activation_tolerance)[0]
    if len(rows) == 0:
        return _identity(u_ref, box)
    bound = -params.param * batch.phi[rows] - batch.Lf[rows]
    return _qp_filter(u_ref, batch, rows, bound, params, box)


def _clamped_result(u_ref, u, lo, hi, note="") -> SafeControlResult:
    u = np.clip(u, lo, hi)
    return SafeControlResult(u, Status.OPTIMAL, correction_norm=float(np.linalg.norm(u - u_ref)),
                             triggered=True, note=note)


def pfm_filter(u_ref, constraints, params: FilterParams, JG=None, box=None) -> SafeControlResult:
    """Cartesian repulsion at the involved robot frames, mapped back by damped least squares.

    ``JG`` is the stacked frame Jacobian times the input map (3m x nu).  It
    defaults to the one stored on a :class:`ConstraintBatch`.
    """
    u_ref = np.asarray(u_ref, dtype=float)
    nu = len(u_ref)
    batch = _as_batch(constraints, nu)
    u_ref = _check(u_ref, batch)
    rows = np.nonzero(batch.phi >= 0.0)[0]
    if len(rows) == 0:
        return _identity(u_ref, box)
    JG = batch.JG if JG is None else np.asarray(JG, float)
    if JG is None:
        raise ValueError("PFM needs the frame Jacobian (J g_q)")
    lo, hi = _box(box, nu)
    # summed repulsion per involved frame
    frames = batch.frames[rows].reshape(-1)
    grads = batch.grad_cart[rows].reshape(-1, 3)
    keep = frames >= 0
    frames, grads = frames[keep], grads[keep]
    involved = np.unique(frames)
    force = np.zeros((len(involved), 3))
    np.add.at(force, np.searchsorted(involved, frames), -params.param * grads)
    Jf = JG.reshape(-1, 3, nu)[involved].reshape(-1, nu)
    lam2 = params.dls_damping ** 2
    gram = Jf @ Jf.T + lam2 * np.eye(len(Jf))
    du = Jf.T @ np.linalg.solve(gram, force.reshape(-1))
    return _clamped_result(u_ref, u_ref + du, lo, hi)


def sma_filter(u_ref, constraints, params: FilterParams, box=None) -> SafeControlResult:
    """u = u_ref - c Lg_max^T when the largest phi is >= 0."""
    u_ref = np.asarray(u_ref, dtype=float)
    nu = len(u_ref)
    batch = _as_batch(constraints, nu)
    u_ref = _check(u_ref, batch)
    if len(batch) == 0:
        return _identity(u_ref, box)
    i = int(np.argmax(batch.phi))
    if batch.phi[i] < 0.0:
        return _identity(u_ref, box)
    lo, hi = _box(box, nu)
    res = _clamped_result(u_ref, u_ref - params.param * batch.Lg[i], lo, hi)
    # a-posteriori check of the "c large enough" condition
    rate = float(batch.Lf[i] + batch.Lg[i] @ res.u_safe)
    res.note = "descent" if rate < 0 else "insufficient gain"
    res.active_set = [batch.ids[i] if batch.ids is not None else i]
    return res


FILTERS = {
    Algorithm.SSA: ssa_filter,
    Algorithm.CBF: cbf_filter,
    Algorithm.SSS: sss_filter,
    Algorithm.PFM: pfm_filter,
    Algorithm.SMA: sma_filter,
}


def apply_filter(u_ref, batch: ConstraintBatch, params: FilterParams, box=None) -> SafeControlResult:
    """Dispatch on ``params.algorithm``."""
    if params.algorithm is Algorithm.PFM:
        return pfm_filter(u_ref, batch, params, None, box)
    return FILTERS[params.algorithm](u_ref, batch, params, box)
