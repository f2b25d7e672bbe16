# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled spectrum-estimation kernels for the built-in models.

One fused loop per call: burn-in integration, then augmented RK4 steps of
(state, tangent frame) with periodic Gram-Schmidt re-orthonormalization and
log-growth accumulation.  Only the four zoo vector fields are compiled here;
arbitrary models take the generic Python path in :mod:`qualdyn.lyapunov`.
"""

from libc.math cimport exp, pow, log, sqrt, isfinite

import numpy as np

# kernel ids, kept in sync with qualdyn.models
DEF KID_LORENZ = 1
DEF KID_CIRCUIT = 2
DEF KID_HES1 = 3
DEF KID_HYPER4D = 4

DEF MAXN = 4
DEF MAXK = 4

KERNEL_IDS = (KID_LORENZ, KID_CIRCUIT, KID_HES1, KID_HYPER4D)


cdef inline void _rhs(int kid, const double* c, const double* p,
                      const double* y, double* out) nogil:
    if kid == KID_LORENZ:
        out[0] = p[0] * (y[1] - y[0])
        out[1] = y[0] * (p[1] - y[2]) - y[1]
        out[2] = y[0] * y[1] - p[2] * y[2]
    elif kid == KID_CIRCUIT:
        # c = (epsilon, b, c)
        out[0] = y[1]
        out[1] = p[0] * y[1] - y[0] - y[2]
        out[2] = (c[1] + y[1] - c[2] * (exp(y[2]) - 1.0)) / c[0]
    elif kid == KID_HES1:
        # c = (k_deg,), p = (P0, nu, k1, h)
        out[0] = -c[0] * y[0] + 1.0 / (1.0 + pow(y[2] / p[0], p[3]))
        out[1] = -c[0] * y[1] + p[1] * y[0] - p[2] * y[1]
        out[2] = -c[0] * y[2] + p[2] * y[1]
    else:
        out[0] = p[0] * (y[1] - y[0]) + y[1] * y[2]
        out[1] = p[1] * (y[0] + y[1]) - y[0] * y[2]
        out[2] = -p[2] * y[2] - p[4] * y[3] + y[0] * y[1]
        out[3] = -p[3] * y[3] + p[5] * y[2] + y[0] * y[1]


cdef inline void _jac(int kid, const double* c, const double* p,
                      const double* y, double* J, int n) nogil:
    cdef double u, dhill
    if kid == KID_LORENZ:
        J[0] = -p[0]; J[1] = p[0];       J[2] = 0.0
        J[3] = p[1] - y[2]; J[4] = -1.0; J[5] = -y[0]
        J[6] = y[1]; J[7] = y[0];        J[8] = -p[2]
    elif kid == KID_CIRCUIT:
        J[0] = 0.0;  J[1] = 1.0;          J[2] = 0.0
        J[3] = -1.0; J[4] = p[0];         J[5] = -1.0
        J[6] = 0.0;  J[7] = 1.0 / c[0];   J[8] = -c[2] * exp(y[2]) / c[0]
    elif kid == KID_HES1:
        u = pow(y[2] / p[0], p[3])
        dhill = -(p[3] / p[0]) * pow(y[2] / p[0], p[3] - 1.0) \
            / ((1.0 + u) * (1.0 + u))
        J[0] = -c[0]; J[1] = 0.0;           J[2] = dhill
        J[3] = p[1];  J[4] = -c[0] - p[2];  J[5] = 0.0
        J[6] = 0.0;   J[7] = p[2];          J[8] = -c[0]
    else:
        J[0] = -p[0];        J[1] = p[0] + y[2]; J[2] = y[1];  J[3] = 0.0
        J[4] = p[1] - y[2];  J[5] = p[1];        J[6] = -y[0]; J[7] = 0.0
        J[8] = y[1];         J[9] = y[0];        J[10] = -p[2]; J[11] = -p[4]
        J[12] = y[1];        J[13] = y[0];       J[14] = p[5];  J[15] = -p[3]


cdef inline void _jac_mul(const double* J, const double* F, double* out,
                          int n, int k) nogil:
    cdef int i, j, m
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for m in range(n):
                acc += J[i * n + m] * F[m * k + j]
            out[i * k + j] = acc


cdef inline void _rk4_augmented(int kid, const double* c, const double* p,
                                double* y, double* F, double dt,
                                int n, int k) nogil:
    cdef double k1y[MAXN], k2y[MAXN], k3y[MAXN], k4y[MAXN]
    cdef double k1f[MAXN * MAXK], k2f[MAXN * MAXK]
    cdef double k3f[MAXN * MAXK], k4f[MAXN * MAXK]
    cdef double ys[MAXN], Fs[MAXN * MAXK], J[MAXN * MAXN]
    cdef int i, nk = n * k

    _rhs(kid, c, p, y, k1y)
    _jac(kid, c, p, y, J, n)
    _jac_mul(J, F, k1f, n, k)

    for i in range(n):
        ys[i] = y[i] + (0.5 * dt) * k1y[i]
    for i in range(nk):
        Fs[i] = F[i] + (0.5 * dt) * k1f[i]
    _rhs(kid, c, p, ys, k2y)
    _jac(kid, c, p, ys, J, n)
    _jac_mul(J, Fs, k2f, n, k)

    for i in range(n):
        ys[i] = y[i] + (0.5 * dt) * k2y[i]
    for i in range(nk):
        Fs[i] = F[i] + (0.5 * dt) * k2f[i]
    _rhs(kid, c, p, ys, k3y)
    _jac(kid, c, p, ys, J, n)
    _jac_mul(J, Fs, k3f, n, k)

    for i in range(n):
        ys[i] = y[i] + dt * k3y[i]
    for i in range(nk):
        Fs[i] = F[i] + dt * k3f[i]
    _rhs(kid, c, p, ys, k4y)
    _jac(kid, c, p, ys, J, n)
    _jac_mul(J, Fs, k4f, n, k)

    for i in range(n):
        y[i] = y[i] + (dt / 6.0) * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i]
                                    + k4y[i])
    for i in range(nk):
        F[i] = F[i] + (dt / 6.0) * (k1f[i] + 2.0 * k2f[i] + 2.0 * k3f[i]
                                    + k4f[i])


cdef inline int _gsr(double* F, double* norms, int n, int k) nogil:
    """Modified Gram-Schmidt on columns of F (n x k, row-major).

    Returns 0 on success, 2 on rank collapse / non-finite norm.
    """
    cdef int i, j, m
    cdef double dot, norm, inv
    for j in range(k):
        for m in range(j):
            dot = 0.0
            for i in range(n):
                dot += F[i * k + j] * F[i * k + m]
            for i in range(n):
                F[i * k + j] -= dot * F[i * k + m]
        norm = 0.0
        for i in range(n):
            norm += F[i * k + j] * F[i * k + j]
        norm = sqrt(norm)
        if not isfinite(norm) or norm < 1e-300:
            return 2
        norms[j] = norm
        inv = 1.0 / norm
        for i in range(n):
            F[i * k + j] *= inv
    return 0


def lyapunov_sums(int kid, double[::1] params, double[::1] consts,
                  double[::1] y0, double dt, long burn_in, long steps,
                  long renorm_interval, double[:, ::1] frame0):
    """Run burn-in plus tangent evolution; return (log-growth sums, status).

    status: 0 finished, 1 orbit diverged, 2 tangent frame degenerated.
    The caller converts sums into exponents via division by steps*dt.
    """
    cdef int n = y0.shape[0]
    cdef int k = frame0.shape[1]
    if n > MAXN or k > MAXK or k < 1 or frame0.shape[0] != n:
        raise ValueError("kernel supports n,k in 1..4 with frame n x k")
    if kid not in KERNEL_IDS:
        raise ValueError(f"unknown kernel id {kid}")

    cdef double y[MAXN]
    cdef double F[MAXN * MAXK]
    cdef double norms[MAXK]
    cdef double csums[MAXK]
    cdef const double* p = &params[0] if params.shape[0] > 0 else NULL
    cdef const double* c = &consts[0] if consts.shape[0] > 0 else NULL
    cdef int i, j, status = 0
    cdef long s, since_renorm = 0

    for i in range(n):
        y[i] = y0[i]
    for i in range(n):
        for j in range(k):
            F[i * k + j] = frame0[i, j]
    for j in range(k):
        csums[j] = 0.0

    with nogil:
        # burn-in passes orbit transients and lets the frame align with the
        # dominant tangent directions; growth is not yet accumulated
        for s in range(burn_in):
            _rk4_augmented(kid, c, p, y, F, dt, n, k)
            for i in range(n):
                if not isfinite(y[i]):
                    status = 1
                    break
            if status == 0:
                status = _gsr(F, norms, n, k)
            if status:
                break
        if status == 0:
            since_renorm = 0
            for s in range(steps):
                _rk4_augmented(kid, c, p, y, F, dt, n, k)
                for i in range(n):
                    if not isfinite(y[i]):
                        status = 1
                        break
                if status:
                    break
                since_renorm += 1
                if since_renorm == renorm_interval:
                    status = _gsr(F, norms, n, k)
                    if status:
                        break
                    for j in range(k):
                        csums[j] += log(norms[j])
                    since_renorm = 0
            if status == 0 and since_renorm > 0:
                status = _gsr(F, norms, n, k)
                if status == 0:
                    for j in range(k):
                        csums[j] += log(norms[j])

    sums = np.empty(k)
    for j in range(k):
        sums[j] = csums[j]
    return sums, status
