"""Pure numpy implementations of the hot kernels.

Signatures and semantics mirror ``_core.pyx`` exactly; the test-suite runs
both backends against the same expectations.
"""
import numpy as np

BACKEND = "python"


def sphere_sphere(pa, ra, pb, rb):
    """Batched sphere-sphere distances.

    Returns ``(d, n, rho)`` where ``n`` is the unit vector from b's center to
    a's center (the gradient of d w.r.t. a's center) and ``rho`` the center
    distance.  Rows with ``rho == 0`` get ``n = nan``.
    """
    diff = pa - pb
    rho = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    d = rho - ra - rb
    with np.errstate(invalid="ignore", divide="ignore"):
        n = diff / rho[:, None]
    return d, n, rho


def sphere_box(ps, rs, pc, rot, half):
    """Batched sphere-box distances, boxes given by center, rotation, half extents.

    Returns ``(d, n, rho, mask)``: ``n`` is the world-frame gradient of d
    w.r.t. the sphere center, ``rho`` the center-to-box distance (0 when the
    center lies inside or on the box) and ``mask`` flags the box-frame axes
    along which the center was clamped.
    """
    q = np.einsum("kji,kj->ki", rot, ps - pc)
    clamped = np.clip(q, -half, half)
    diff = q - clamped
    rho = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    outside = rho > 0.0
    mask = (np.abs(q) > half).astype(np.float64)

    n_local = np.zeros_like(q)
    d = np.empty_like(rs)
    if outside.any():
        n_local[outside] = diff[outside] / rho[outside, None]
        d[outside] = rho[outside] - rs[outside]
    inside = ~outside
    if inside.any():
        depth = half[inside] - np.abs(q[inside])
        axis = np.argmin(depth, axis=1)
        rows = np.nonzero(inside)[0]
        sgn = np.where(q[rows, axis] < 0.0, -1.0, 1.0)
        n_local[rows, axis] = sgn
        d[inside] = -depth[np.arange(len(rows)), axis] - rs[inside]
        mask[inside] = 0.0
    n = np.einsum("kij,kj->ki", rot, n_local)
    return d, n, rho, mask


def hildreth(A, b, q2inv, u, lam, nu, lo, hi, slack_c, tol, max_iter, omega=1.0):
    """Dual coordinate ascent for a diagonal-Hessian QP with bounds.

    Solves ``min (u-u0)' Q (u-u0) + rho |s|^2`` s.t. ``A u <= b + s`` and
    ``lo <= u <= hi`` where ``q2inv = 1/(2 Q)`` and ``slack_c = 1/(2 rho)``
    (0 disables the slack).  ``omega`` in (0, 2) over-relaxes the
    multiplier updates.  ``u``, ``lam`` and ``nu`` carry the warm start
    in and the solution out; the primal iterate is kept consistent with the
    multipliers through ``u = u0 - q2inv * (A' lam + nu)``.

    Returns ``(iterations, converged)``.
    """
    m = A.shape[0]
    n = u.shape[0]
    curv = np.einsum("ij,j,ij->i", A, q2inv, A) + slack_c
    for it in range(1, max_iter + 1):
        max_step = 0.0
        for i in range(m):
            if curv[i] <= 0.0:
                continue
            ai = A[i]
            r = float(ai @ u) - b[i] - slack_c * lam[i]
            new = lam[i] + omega * r / curv[i]
            if new < 0.0:
                new = 0.0
            step = new - lam[i]
            if step != 0.0:
                u -= (q2inv * ai) * step
                lam[i] = new
                if abs(step) > max_step:
                    max_step = abs(step)
        for j in range(n):
            free = u[j] + q2inv[j] * nu[j]
            if free > hi[j]:
                uj = hi[j]
            elif free < lo[j]:
                uj = lo[j]
            else:
                uj = free
            new = (free - uj) / q2inv[j]
            step = new - nu[j]
            if step != 0.0:
                u[j] = uj
                nu[j] = new
                if abs(step) > max_step:
                    max_step = abs(step)
        if max_step < tol:
            return it, True
    return max_iter, False


def _axis_rotation(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == 0:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == 1:
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def fk_chain(parent, opos, orot, jtype, jdof, theta):
    """Forward kinematics over a topologically ordered frame list.

    ``jtype`` codes: -1 fixed, 0/1/2 revolute about local x/y/z, 3/4/5
    prismatic along local x/y/z.  Returns world ``(pos, rot, axis, pivot)``
    where ``axis``/``pivot`` are indexed by DoF.
    """
    m = len(parent)
    n = len(theta)
    pos = np.empty((m, 3))
    rot = np.empty((m, 3, 3))
    axis = np.zeros((n, 3))
    pivot = np.zeros((n, 3))
    for k in range(m):
        p = parent[k]
        if p < 0:
            rb = orot[k]
            pb = opos[k].copy()
        else:
            rb = rot[p] @ orot[k]
            pb = pos[p] + rot[p] @ opos[k]
        t = jtype[k]
        if t < 0:
            rot[k] = rb
            pos[k] = pb
            continue
        j = jdof[k]
        ax = rb[:, t % 3]
        axis[j] = ax
        pivot[j] = pb
        if t < 3:
            rot[k] = rb @ _axis_rotation(t, theta[j])
            pos[k] = pb
        else:
            rot[k] = rb
            pos[k] = pb + ax * theta[j]
    return pos, rot, axis, pivot
