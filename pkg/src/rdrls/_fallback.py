"""Pure numpy network kernel, vectorized across nodes.

Mirrors ``_kernels.pyx`` exactly in semantics; used when the compiled
extension is unavailable.
"""

import numpy as np

DRLS, RDRLS, RDRLS_DNC, SELMS = 0, 1, 2, 3


def run_network(kind, inputs, measurements, truth, C, forgetting, regularization,
                beta, xi0, step_size, period, trim, threshold, record):
    N, T = inputs.shape
    M = truth.shape[1]
    Ct = np.ascontiguousarray(C.T)
    lam = forgetting
    P0 = np.eye(M) / regularization

    X = np.zeros((N, M))
    W = np.zeros((N, M))
    P = np.tile(P0, (N, 1, 1))
    xi = xi0.copy()
    theta_old = np.zeros(N)
    buf = np.zeros((N, period))
    keep = period - trim

    sqdev = np.empty((T, N))
    estimates = np.empty((T, N, M)) if record else None
    violations = 0
    resets = 0
    robust = kind in (RDRLS, RDRLS_DNC)

    for t in range(T):
        it = t + 1
        X[:, 1:] = X[:, :-1]
        X[:, 0] = inputs[:, t]
        e = measurements[:, t] - np.einsum("ka,ka->k", X, W)

        if kind == SELMS:
            psi = W + (step_size * np.sign(e))[:, None] * X
        else:
            Pu = np.einsum("kab,kb->ka", P, X)
            den = lam + np.einsum("ka,ka->k", X, Pu)
            P = (P - Pu[:, :, None] * Pu[:, None, :] / den[:, None, None]) / lam
            P = 0.5 * (P + P.transpose(0, 2, 1))
            g = np.einsum("kab,kb->ka", P, X)
            if robust:
                energy = np.einsum("ka,ka->k", g, g) * e * e
                size = np.sqrt(energy)
                scale = np.ones(N)
                clamp = size > 0.0
                scale[clamp] = np.minimum(np.sqrt(xi[clamp]) / size[clamp], 1.0)
                step = (scale * e)[:, None] * g
                violations += int(np.count_nonzero(
                    np.einsum("ka,ka->k", step, step) > xi * (1.0 + 1e-12)))
                psi = W + step
                zeta = beta * xi + (1.0 - beta) * np.minimum(energy, xi)
                if kind == RDRLS_DNC:
                    power = np.einsum("ka,ka->k", X, X)
                    safe = np.where(power > 0.0, power, 1.0)
                    buf[:, t % period] = np.where(power > 0.0, e * e / safe, 0.0)
                    if it % period == 0:
                        means = np.sort(buf, axis=1)[:, :keep].sum(axis=1) / keep
                        theta_new = Ct @ means
                        growth = theta_new - theta_old
                        reset = growth / xi > threshold
                        zeta = np.where(reset, xi0, np.where(growth > 0.0, xi + growth, zeta))
                        if reset.any():
                            P[reset] = P0
                            resets += int(np.count_nonzero(reset))
                        theta_old = theta_new
                xi = Ct @ zeta
            else:
                psi = W + g * e[:, None]

        W = Ct @ psi
        diff = truth[t] - W
        sqdev[t] = np.einsum("ka,ka->k", diff, diff)
        if record:
            estimates[t] = W

    return sqdev, violations, resets, estimates
