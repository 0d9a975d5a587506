"""Per-node adaptation rules for diffusion estimation.

These functions are the readable, one-node-at-a-time form of the algorithms.
The simulation kernels in :mod:`rdrls.kernels` run the same arithmetic for a
whole network at once; the test-suite checks the two against each other.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RlsCoreState",
    "RobustBoundState",
    "DncState",
    "SignErrorLmsState",
    "initial_bound",
    "dnc_sizes",
    "rls_gain_update",
    "rdrls_adapt",
    "drls_adapt",
    "bound_local_update",
    "dnc_record",
    "dnc_trimmed_mean",
    "dnc_step",
    "selms_adapt",
    "combine",
]


@dataclass
class RlsCoreState:
    """Estimate ``w`` and inverse correlation ``P`` of one RLS node."""

    length: int
    forgetting: float = 0.995
    regularization: float = 0.01
    w: np.ndarray = None
    P: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if not self.regularization > 0.0:
            raise ValueError("regularization must be positive")
        if self.w is None:
            self.w = np.zeros(self.length)
        if self.P is None:
            self.P = self.initial_inverse()

    def initial_inverse(self) -> np.ndarray:
        return np.eye(self.length) / self.regularization


@dataclass
class RobustBoundState:
    """Update-norm bound of one robust node.

    ``xi`` is the combined bound used by the next adaptation, ``zeta`` the
    local value before combination and ``xi0`` the value restored on reset.
    """

    xi0: float
    beta: float = 0.98
    xi: float = None
    zeta: float = None

    def __post_init__(self):
        if not self.xi0 > 0.0:
            raise ValueError("initial bound must be positive")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("bound forgetting factor must lie in (0, 1]")
        if self.xi is None:
            self.xi = self.xi0
        if self.zeta is None:
            self.zeta = self.xi0


def initial_bound(scale: float, power_d: float, power_u: float, length: int) -> float:
    """Starting bound ``scale * power_d / (length * power_u)``."""
    return scale * power_d / (length * power_u)


def dnc_sizes(window_factor: float, length: int) -> tuple[int, int]:
    """Checkpoint period and trim count for a filter of ``length`` taps.

    The trim count is 0.75 of the period rounded half-up, capped so at least
    one sample survives trimming.
    """
    period = int(round(window_factor * length))
    if period < 2:
        raise ValueError("detector period must be at least 2")
    trim = int(math.floor(0.75 * period + 0.5))
    trim = min(max(trim, 1), period - 1)
    return period, trim


@dataclass
class DncState:
    """Change detector that resets the bound when the error level jumps."""

    period: int
    trim: int
    threshold: float = 25.0
    theta_old: float = 0.0
    theta_new: float = 0.0
    buffer: deque = field(default=None, repr=False)

    def __post_init__(self):
        if not 1 <= self.trim < self.period:
            raise ValueError("trim count must satisfy 1 <= trim < period")
        if self.buffer is None:
            self.buffer = deque(maxlen=self.period)

    @classmethod
    def for_length(cls, length: int, window_factor: float = 3,
                   threshold: float = 25.0) -> "DncState":
        period, trim = dnc_sizes(window_factor, length)
        return cls(period, trim, threshold)

    def is_checkpoint(self, iteration: int) -> bool:
        return iteration > 0 and iteration % self.period == 0


@dataclass
class SignErrorLmsState:
    length: int
    step_size: float = 0.015
    w: np.ndarray = None

    def __post_init__(self):
        if self.w is None:
            self.w = np.zeros(self.length)


def rls_gain_update(state: RlsCoreState, u) -> tuple[np.ndarray, np.ndarray]:
    """Rank-one update of ``P`` via the matrix inversion lemma.

    Returns the updated ``P`` and the gain ``g = P u`` computed with it.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite regressor")
    lam = state.forgetting
    Pu = state.P @ u
    P = (state.P - np.outer(Pu, Pu) / (lam + u @ Pu)) / lam
    P = 0.5 * (P + P.T)
    state.P = P
    return P, P @ u


def drls_adapt(state: RlsCoreState, u, d: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Unconstrained RLS adaptation; returns ``(psi, g, e)``."""
    u = np.asarray(u, dtype=float)
    e = d - u @ state.w
    _, g = rls_gain_update(state, u)
    return state.w + g * e, g, e


def rdrls_adapt(state: RlsCoreState, bound: RobustBoundState, u,
                d: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Norm-constrained RLS adaptation; returns ``(psi, g, e)``.

    The RLS correction ``g e`` is scaled by ``min(sqrt(xi) / (|g| |e|), 1)``,
    so ``|psi - w|^2 <= xi`` holds for any measurement. A zero correction
    keeps scale 1.
    """
    u = np.asarray(u, dtype=float)
    e = d - u @ state.w
    _, g = rls_gain_update(state, u)
    size = np.linalg.norm(g) * abs(e)
    scale = 1.0
    if size > 0.0:
        scale = min(math.sqrt(bound.xi) / size, 1.0)
    return state.w + scale * g * e, g, e


def bound_local_update(bound: RobustBoundState, g, e: float) -> float:
    """Local bound recursion; stores and returns the new ``zeta``."""
    g = np.asarray(g, dtype=float)
    energy = float(g @ g) * e * e
    bound.zeta = bound.beta * bound.xi + (1.0 - bound.beta) * min(energy, bound.xi)
    return bound.zeta


def dnc_record(dnc: DncState, e: float, u) -> None:
    """Push the normalized squared error ``e^2 / |u|^2`` into the window."""
    u = np.asarray(u, dtype=float)
    power = float(u @ u)
    dnc.buffer.append(e * e / power if power > 0.0 else 0.0)


def dnc_trimmed_mean(dnc: DncState) -> float:
    """Mean of the ``period - trim`` smallest buffered errors."""
    if len(dnc.buffer) < dnc.period:
        raise ValueError("detector window not full yet")
    keep = dnc.period - dnc.trim
    ordered = np.sort(np.fromiter(dnc.buffer, float, dnc.period))
    return float(ordered[:keep].sum() / keep)


def dnc_step(dnc: DncState, bound: RobustBoundState, rls: RlsCoreState,
             iteration: int, neighbor_means, weights) -> tuple[float, bool]:
    """Checkpoint decision of the change detector.

    ``neighbor_means`` and ``weights`` cover the neighborhood of this node.
    ``bound.zeta`` must already hold the regular local update; it is replaced
    on reset (together with ``P``) or increased when the error level grew.
    ``bound.xi`` is still the previous combined bound here.
    Returns the resulting ``zeta`` and whether a reset happened.
    """
    if not dnc.is_checkpoint(iteration):
        raise ValueError(f"iteration {iteration} is not a detector checkpoint")
    dnc.theta_new = combine(neighbor_means, weights)
    growth = dnc.theta_new - dnc.theta_old
    reset = growth / bound.xi > dnc.threshold
    if reset:
        bound.zeta = bound.xi0
        rls.P = rls.initial_inverse()
    elif growth > 0.0:
        bound.zeta = bound.xi + growth
    dnc.theta_old = dnc.theta_new
    return bound.zeta, reset


def selms_adapt(state: SignErrorLmsState, u, d: float) -> np.ndarray:
    """Sign-error LMS adaptation ``psi = w + mu u sign(e)``."""
    u = np.asarray(u, dtype=float)
    e = d - u @ state.w
    return state.w + state.step_size * u * np.sign(e)


def combine(values, weights):
    """Convex combination ``sum_m weights[m] * values[m]``."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape[0] != weights.shape[0]:
        raise ValueError(f"{weights.shape[0]} weights for {values.shape[0]} values")
    out = np.tensordot(weights, values, axes=1)
    return float(out) if out.ndim == 0 else out
