# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. See ``_fallback.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, cos, sin, NAN

cnp.import_array()

BACKEND = "cython"


def sphere_sphere(double[:, ::1] pa, double[::1] ra, double[:, ::1] pb, double[::1] rb):
    cdef Py_ssize_t k, K = pa.shape[0]
    d_arr = np.empty(K)
    n_arr = np.empty((K, 3))
    rho_arr = np.empty(K)
    cdef double[::1] d = d_arr
    cdef double[:, ::1] n = n_arr
    cdef double[::1] rho = rho_arr
    cdef double dx, dy, dz, r
    for k in range(K):
        dx = pa[k, 0] - pb[k, 0]
        dy = pa[k, 1] - pb[k, 1]
        dz = pa[k, 2] - pb[k, 2]
        r = sqrt(dx * dx + dy * dy + dz * dz)
        rho[k] = r
        d[k] = r - ra[k] - rb[k]
        if r > 0.0:
            n[k, 0] = dx / r
            n[k, 1] = dy / r
            n[k, 2] = dz / r
        else:
            n[k, 0] = NAN
            n[k, 1] = NAN
            n[k, 2] = NAN
    return d_arr, n_arr, rho_arr


def sphere_box(double[:, ::1] ps, double[::1] rs, double[:, ::1] pc,
               double[:, :, ::1] rot, double[:, ::1] half):
    cdef Py_ssize_t k, i, j, best, K = ps.shape[0]
    d_arr = np.empty(K)
    n_arr = np.empty((K, 3))
    rho_arr = np.empty(K)
    mask_arr = np.zeros((K, 3))
    cdef double[::1] d = d_arr
    cdef double[:, ::1] n = n_arr
    cdef double[::1] rho = rho_arr
    cdef double[:, ::1] mask = mask_arr
    cdef double w[3]
    cdef double q[3]
    cdef double diff[3]
    cdef double nl[3]
    cdef double r, c, depth, best_depth
    for k in range(K):
        for j in range(3):
            w[j] = ps[k, j] - pc[k, j]
        for i in range(3):
            q[i] = rot[k, 0, i] * w[0] + rot[k, 1, i] * w[1] + rot[k, 2, i] * w[2]
        r = 0.0
        for i in range(3):
            c = q[i]
            if c > half[k, i]:
                c = half[k, i]
                mask[k, i] = 1.0
            elif c < -half[k, i]:
                c = -half[k, i]
                mask[k, i] = 1.0
            diff[i] = q[i] - c
            r += diff[i] * diff[i]
        r = sqrt(r)
        rho[k] = r
        if r > 0.0:
            for i in range(3):
                nl[i] = diff[i] / r
            d[k] = r - rs[k]
        else:
            best = 0
            best_depth = half[k, 0] - fabs(q[0])
            for i in range(1, 3):
                depth = half[k, i] - fabs(q[i])
                if depth < best_depth:
                    best_depth = depth
                    best = i
            for i in range(3):
                nl[i] = 0.0
                mask[k, i] = 0.0
            nl[best] = -1.0 if q[best] < 0.0 else 1.0
            d[k] = -best_depth - rs[k]
        for i in range(3):
            n[k, i] = rot[k, i, 0] * nl[0] + rot[k, i, 1] * nl[1] + rot[k, i, 2] * nl[2]
    return d_arr, n_arr, rho_arr, mask_arr


def hildreth(double[:, ::1] A, double[::1] b, double[::1] q2inv, double[::1] u,
             double[::1] lam, double[::1] nu, double[::1] lo, double[::1] hi,
             double slack_c, double tol, int max_iter, double omega=1.0):
    cdef Py_ssize_t i, j, M = A.shape[0], N = u.shape[0]
    cdef int it
    cdef double r, new, step, max_step, free, uj, acc
    curv_arr = np.empty(M)
    cdef double[::1] curv = curv_arr
    for i in range(M):
        acc = 0.0
        for j in range(N):
            acc += A[i, j] * A[i, j] * q2inv[j]
        curv[i] = acc + slack_c
    for it in range(1, max_iter + 1):
        max_step = 0.0
        for i in range(M):
            if curv[i] <= 0.0:
                continue
            r = 0.0
            for j in range(N):
                r += A[i, j] * u[j]
            r = r - b[i] - slack_c * lam[i]
            new = lam[i] + omega * r / curv[i]
            if new < 0.0:
                new = 0.0
            step = new - lam[i]
            if step != 0.0:
                for j in range(N):
                    u[j] -= q2inv[j] * A[i, j] * step
                lam[i] = new
                if fabs(step) > max_step:
                    max_step = fabs(step)
        for j in range(N):
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
                if fabs(step) > max_step:
                    max_step = fabs(step)
        if max_step < tol:
            return it, True
    return max_iter, False


def fk_chain(long[::1] parent, double[:, ::1] opos, double[:, :, ::1] orot,
             long[::1] jtype, long[::1] jdof, double[::1] theta):
    cdef Py_ssize_t k, i, j, l, p, m = parent.shape[0], n = theta.shape[0]
    cdef long t
    pos_arr = np.empty((m, 3))
    rot_arr = np.empty((m, 3, 3))
    axis_arr = np.zeros((n, 3))
    pivot_arr = np.zeros((n, 3))
    cdef double[:, ::1] pos = pos_arr
    cdef double[:, :, ::1] rot = rot_arr
    cdef double[:, ::1] axis = axis_arr
    cdef double[:, ::1] pivot = pivot_arr
    cdef double rb[3][3]
    cdef double pb[3]
    cdef double jr[3][3]
    cdef double c, s, acc
    for k in range(m):
        p = parent[k]
        if p < 0:
            for i in range(3):
                pb[i] = opos[k, i]
                for j in range(3):
                    rb[i][j] = orot[k, i, j]
        else:
            for i in range(3):
                acc = pos[p, i]
                for l in range(3):
                    acc += rot[p, i, l] * opos[k, l]
                pb[i] = acc
                for j in range(3):
                    acc = 0.0
                    for l in range(3):
                        acc += rot[p, i, l] * orot[k, l, j]
                    rb[i][j] = acc
        t = jtype[k]
        if t < 0:
            for i in range(3):
                pos[k, i] = pb[i]
                for j in range(3):
                    rot[k, i, j] = rb[i][j]
            continue
        j = jdof[k]
        for i in range(3):
            axis[j, i] = rb[i][t % 3]
            pivot[j, i] = pb[i]
        if t < 3:
            c = cos(theta[j])
            s = sin(theta[j])
            if t == 0:
                jr[0][0] = 1.0; jr[0][1] = 0.0; jr[0][2] = 0.0
                jr[1][0] = 0.0; jr[1][1] = c; jr[1][2] = -s
                jr[2][0] = 0.0; jr[2][1] = s; jr[2][2] = c
            elif t == 1:
                jr[0][0] = c; jr[0][1] = 0.0; jr[0][2] = s
                jr[1][0] = 0.0; jr[1][1] = 1.0; jr[1][2] = 0.0
                jr[2][0] = -s; jr[2][1] = 0.0; jr[2][2] = c
            else:
                jr[0][0] = c; jr[0][1] = -s; jr[0][2] = 0.0
                jr[1][0] = s; jr[1][1] = c; jr[1][2] = 0.0
                jr[2][0] = 0.0; jr[2][1] = 0.0; jr[2][2] = 1.0
            for i in range(3):
                pos[k, i] = pb[i]
                for l in range(3):
                    acc = 0.0
                    for j in range(3):
                        acc += rb[i][j] * jr[j][l]
                    rot[k, i, l] = acc
        else:
            for i in range(3):
                pos[k, i] = pb[i] + rb[i][t % 3] * theta[jdof[k]]
                for l in range(3):
                    rot[k, i, l] = rb[i][l]
    return pos_arr, rot_arr, axis_arr, pivot_arr
