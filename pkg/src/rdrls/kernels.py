"""Network simulation kernel with compiled and pure-numpy backends.

The compiled Cython extension is used when it can be imported; otherwise the
numpy implementation takes over. Setting ``RDRLS_PURE_PYTHON=1`` forces the
fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _fallback

__all__ = [
    "DRLS",
    "RDRLS",
    "RDRLS_DNC",
    "SELMS",
    "KIND_NAMES",
    "BACKEND",
    "KernelResult",
    "available_backends",
    "run_network",
]

DRLS, RDRLS, RDRLS_DNC, SELMS = _fallback.DRLS, _fallback.RDRLS, _fallback.RDRLS_DNC, _fallback.SELMS
KIND_NAMES = {"drls": DRLS, "rdrls": RDRLS, "rdrls_dnc": RDRLS_DNC, "selms": SELMS}

_BACKENDS = {"python": _fallback.run_network}
try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None
else:
    _BACKENDS["compiled"] = _kernels.run_network

if _kernels is not None and os.environ.get("RDRLS_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "compiled"
else:
    BACKEND = "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@dataclass
class KernelResult:
    sqdev: np.ndarray                   # (iterations, nodes) |w_true - w_k|^2
    violations: int                     # robust updates exceeding their bound
    resets: int                         # detector resets, summed over nodes
    estimates: Optional[np.ndarray] = None   # (iterations, nodes, M) if recorded


def run_network(kind: int, inputs, measurements, truth, weights, *,
                forgetting: float = 0.995, regularization: float = 0.01,
                bound_forgetting: float = 0.98, initial_bounds=None,
                step_size=0.015, dnc_period: int = 48, dnc_trim: int = 36,
                dnc_threshold: float = 25.0, record_estimates: bool = False,
                backend: Optional[str] = None) -> KernelResult:
    """Run one algorithm over a whole trial.

    Parameters
    ----------
    kind : int
        One of ``DRLS``, ``RDRLS``, ``RDRLS_DNC``, ``SELMS``.
    inputs : ndarray, shape (N, T)
        Scalar input samples ``u_k(i)`` feeding each node's delay line.
    measurements : ndarray, shape (N, T)
        Noisy measurements ``d_k(i)``.
    truth : ndarray, shape (T, M)
        Parameter vector in force at each iteration.
    weights : ndarray, shape (N, N)
        Column-stochastic combination matrix.
    initial_bounds : array_like, shape (N,)
        Starting update bounds; required for the robust kinds.
    step_size : float or array_like
        Sign-error LMS step size, scalar or per node.
    backend : {"compiled", "python"}, optional
        Defaults to :data:`BACKEND`.
    """
    inputs = np.ascontiguousarray(inputs, dtype=float)
    measurements = np.ascontiguousarray(measurements, dtype=float)
    truth = np.ascontiguousarray(truth, dtype=float)
    C = np.ascontiguousarray(weights, dtype=float)
    N, T = inputs.shape
    if measurements.shape != (N, T):
        raise ValueError(f"measurements shape {measurements.shape} != inputs shape {(N, T)}")
    if truth.ndim != 2 or truth.shape[0] != T:
        raise ValueError(f"truth must have shape ({T}, M)")
    if C.shape != (N, N):
        raise ValueError(f"weights must have shape ({N}, {N})")
    if kind not in (DRLS, RDRLS, RDRLS_DNC, SELMS):
        raise ValueError(f"unknown algorithm kind {kind!r}")
    if initial_bounds is None:
        if kind in (RDRLS, RDRLS_DNC):
            raise ValueError("robust algorithms need initial_bounds")
        initial_bounds = np.ones(N)
    xi0 = np.array(np.broadcast_to(initial_bounds, (N,)), dtype=float)
    mu = np.array(np.broadcast_to(step_size, (N,)), dtype=float)
    if kind == RDRLS_DNC and not 1 <= dnc_trim < dnc_period:
        raise ValueError("detector trim must satisfy 1 <= trim < period")

    backend = backend or BACKEND
    if backend not in _BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; available: {available_backends()}")
    fn = _BACKENDS[backend]
    sqdev, violations, resets, est = fn(
        kind, inputs, measurements, truth, C, float(forgetting), float(regularization),
        float(bound_forgetting), xi0, mu, int(dnc_period), int(dnc_trim),
        float(dnc_threshold), bool(record_estimates))
    return KernelResult(np.asarray(sqdev), violations, resets,
                        None if est is None else np.asarray(est))
