# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network kernel; same contract as ``_fallback.run_network``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef enum:
    DRLS = 0
    RDRLS = 1
    RDRLS_DNC = 2
    SELMS = 3


cdef double _trimmed_mean(double[:] row, double[:] tmp, int keep) noexcept nogil:
    # insertion sort into tmp; windows are a few dozen samples
    cdef int n = row.shape[0]
    cdef int a, b
    cdef double x, s = 0.0
    for a in range(n):
        x = row[a]
        b = a - 1
        while b >= 0 and tmp[b] > x:
            tmp[b + 1] = tmp[b]
            b -= 1
        tmp[b + 1] = x
    for a in range(keep):
        s += tmp[a]
    return s / keep


def run_network(int kind, const double[:, ::1] inputs, const double[:, ::1] measurements,
                const double[:, ::1] truth, const double[:, ::1] C, double forgetting,
                double regularization, double beta, const double[::1] xi0,
                const double[::1] step_size, int period, int trim, double threshold,
                bint record):
    cdef Py_ssize_t N = inputs.shape[0]
    cdef Py_ssize_t T = inputs.shape[1]
    cdef Py_ssize_t M = truth.shape[1]
    cdef Py_ssize_t t, k, m, a, b
    cdef int keep = period - trim
    cdef int it
    cdef double lam = forgetting
    cdef double p0 = 1.0 / regularization
    cdef double e, den, energy, size, scale, s, pw, growth, c, sgn

    X_arr = np.zeros((N, M))
    W_arr = np.zeros((N, M))
    Wn_arr = np.zeros((N, M))
    psi_arr = np.zeros((N, M))
    P_arr = np.zeros((N, M, M))
    Pu_arr = np.zeros(M)
    g_arr = np.zeros(M)
    xi_arr = np.array(xi0, dtype=np.float64)
    zeta_arr = np.zeros(N)
    theta_old_arr = np.zeros(N)
    theta_new_arr = np.zeros(N)
    means_arr = np.zeros(N)
    buf_arr = np.zeros((N, period))
    tmp_arr = np.zeros(period)
    sqdev_arr = np.empty((T, N))
    est_arr = np.empty((T if record else 0, N, M))

    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] W = W_arr
    cdef double[:, ::1] Wn = Wn_arr
    cdef double[:, ::1] psi = psi_arr
    cdef double[:, :, ::1] P = P_arr
    cdef double[::1] Pu = Pu_arr
    cdef double[::1] g = g_arr
    cdef double[::1] xi = xi_arr
    cdef double[::1] zeta = zeta_arr
    cdef double[::1] theta_old = theta_old_arr
    cdef double[::1] theta_new = theta_new_arr
    cdef double[::1] means = means_arr
    cdef double[:, ::1] buf = buf_arr
    cdef double[::1] tmp = tmp_arr
    cdef double[:, ::1] sqdev = sqdev_arr
    cdef double[:, :, ::1] est = est_arr
    cdef long violations = 0
    cdef long resets = 0
    cdef bint robust = kind == RDRLS or kind == RDRLS_DNC

    for k in range(N):
        for a in range(M):
            P[k, a, a] = p0

    with nogil:
        for t in range(T):
            it = <int>(t + 1)
            # phase 1: local adaptation
            for k in range(N):
                for a in range(M - 1, 0, -1):
                    X[k, a] = X[k, a - 1]
                X[k, 0] = inputs[k, t]
                s = 0.0
                for a in range(M):
                    s += X[k, a] * W[k, a]
                e = measurements[k, t] - s

                if kind == SELMS:
                    sgn = 1.0 if e > 0.0 else (-1.0 if e < 0.0 else 0.0)
                    for a in range(M):
                        psi[k, a] = W[k, a] + step_size[k] * sgn * X[k, a]
                    continue

                den = 0.0
                for a in range(M):
                    s = 0.0
                    for b in range(M):
                        s += P[k, a, b] * X[k, b]
                    Pu[a] = s
                    den += X[k, a] * s
                den += lam
                for a in range(M):
                    for b in range(a, M):
                        s = (P[k, a, b] - Pu[a] * Pu[b] / den) / lam
                        P[k, a, b] = s
                        P[k, b, a] = s
                energy = 0.0
                for a in range(M):
                    s = 0.0
                    for b in range(M):
                        s += P[k, a, b] * X[k, b]
                    g[a] = s
                    energy += s * s

                if not robust:
                    for a in range(M):
                        psi[k, a] = W[k, a] + g[a] * e
                    continue

                energy = energy * e * e
                size = sqrt(energy)
                scale = 1.0
                if size > 0.0:
                    scale = sqrt(xi[k]) / size
                    if scale > 1.0:
                        scale = 1.0
                s = 0.0
                for a in range(M):
                    c = scale * e * g[a]
                    s += c * c
                    psi[k, a] = W[k, a] + c
                if s > xi[k] * (1.0 + 1e-12):
                    violations += 1
                zeta[k] = beta * xi[k] + (1.0 - beta) * (energy if energy < xi[k] else xi[k])

                if kind == RDRLS_DNC:
                    pw = 0.0
                    for a in range(M):
                        pw += X[k, a] * X[k, a]
                    buf[k, t % period] = e * e / pw if pw > 0.0 else 0.0
                    if it % period == 0:
                        means[k] = _trimmed_mean(buf[k], tmp, keep)

            # phase 2: detector decisions (checkpoints only)
            if kind == RDRLS_DNC and it % period == 0:
                for k in range(N):
                    s = 0.0
                    for m in range(N):
                        s += C[m, k] * means[m]
                    theta_new[k] = s
                for k in range(N):
                    growth = theta_new[k] - theta_old[k]
                    if growth / xi[k] > threshold:
                        zeta[k] = xi0[k]
                        resets += 1
                        for a in range(M):
                            for b in range(M):
                                P[k, a, b] = p0 if a == b else 0.0
                    elif growth > 0.0:
                        zeta[k] = xi[k] + growth
                    theta_old[k] = theta_new[k]

            # phase 3: combination
            for k in range(N):
                for a in range(M):
                    s = 0.0
                    for m in range(N):
                        s += C[m, k] * psi[m, a]
                    Wn[k, a] = s
                if robust:
                    s = 0.0
                    for m in range(N):
                        s += C[m, k] * zeta[m]
                    xi[k] = s
            for k in range(N):
                s = 0.0
                for a in range(M):
                    W[k, a] = Wn[k, a]
                    c = truth[t, a] - Wn[k, a]
                    s += c * c
                    if record:
                        est[t, k, a] = Wn[k, a]
                sqdev[t, k] = s

    return sqdev_arr, int(violations), int(resets), (est_arr if record else None)
