"""Regressor, measurement and noise generators for network simulations.

Each node observes ``d_k(i) = u_{k,i}^T w + v_k(i)`` where ``u_{k,i}`` is a
tapped-delay-line window over a colored AR(2) input and ``v_k(i)`` is Gaussian
background noise plus an optional impulsive component.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import toeplitz
from scipy.signal import lfilter

__all__ = [
    "BernoulliGaussian",
    "SymmetricAlphaStable",
    "NodeSignalProfile",
    "RegressorWindow",
    "GroundTruth",
    "ar2_next",
    "ar2_is_stable",
    "ar2_autocovariance",
    "sample_bernoulli_gaussian",
    "sample_alpha_stable",
    "measurement",
    "nominal_powers",
    "derive_rng",
    "generate_input",
    "generate_noise",
    "regressor_matrix",
    "SEED_TOPOLOGY",
    "SEED_PROFILES",
    "SEED_TRUTH",
    "SEED_STREAMS",
]

# spawn-key tags for derive_rng
SEED_TOPOLOGY = 0
SEED_PROFILES = 1
SEED_TRUTH = 2
SEED_STREAMS = 3


@dataclass(frozen=True)
class BernoulliGaussian:
    """Gaussian impulses of variance ``variance`` occurring with probability ``probability``."""

    probability: float
    variance: float

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("impulse probability must lie in [0, 1]")
        if not self.variance > 0.0:
            raise ValueError("impulse variance must be positive")


@dataclass(frozen=True)
class SymmetricAlphaStable:
    """Symmetric alpha-stable noise with characteristic function exp(-dispersion |t|^alpha)."""

    alpha: float
    dispersion: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError("alpha must lie in (0, 2]")
        if not self.dispersion > 0.0:
            raise ValueError("dispersion must be positive")


ImpulseModel = Optional[Union[BernoulliGaussian, SymmetricAlphaStable]]


@dataclass(frozen=True)
class NodeSignalProfile:
    innovation_variance: float
    background_variance: float
    impulse: ImpulseModel = None
    ar_coefficients: tuple[float, float] = (1.6, -0.81)

    def __post_init__(self):
        if not self.innovation_variance > 0.0:
            raise ValueError("innovation variance must be positive")
        if not self.background_variance > 0.0:
            raise ValueError("background variance must be positive")
        a1, a2 = self.ar_coefficients
        if not ar2_is_stable(a1, a2):
            raise ValueError(f"AR(2) coefficients ({a1}, {a2}) are not stable")
        object.__setattr__(self, "ar_coefficients", (float(a1), float(a2)))


class RegressorWindow:
    """Shift register holding ``[u(i), u(i-1), ..., u(i-M+1)]``, newest first."""

    def __init__(self, length: int):
        if length < 1:
            raise ValueError("filter length must be positive")
        self.values = np.zeros(length)

    def __len__(self):
        return self.values.size

    def push(self, sample: float) -> np.ndarray:
        self.values[1:] = self.values[:-1]
        self.values[0] = sample
        return self.values


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Unknown parameter vector, optionally flipping sign from iteration ``change_at`` on."""

    vector: np.ndarray
    change_at: Optional[int] = None

    @classmethod
    def random(cls, length: int, rng: np.random.Generator,
               change_at: Optional[int] = None) -> "GroundTruth":
        w = rng.uniform(-1.0, 1.0, size=length)
        return cls(w / np.linalg.norm(w), change_at)

    def at(self, iteration: int) -> np.ndarray:
        if self.change_at is not None and iteration >= self.change_at:
            return -self.vector
        return self.vector

    def trajectory(self, iterations: int) -> np.ndarray:
        """``(iterations, M)`` array of the vector in force at iterations 1..iterations."""
        out = np.tile(self.vector, (iterations, 1))
        if self.change_at is not None:
            out[max(self.change_at - 1, 0):] *= -1.0
        return out


def ar2_next(coefficients, state, innovation: float) -> float:
    """One AR(2) step; ``state`` is ``(u(i-1), u(i-2))``."""
    a1, a2 = coefficients
    return a1 * state[0] + a2 * state[1] + innovation


def ar2_is_stable(a1: float, a2: float) -> bool:
    roots = np.roots([1.0, -a1, -a2])
    return bool(np.all(np.abs(roots) < 1.0))


def ar2_autocovariance(a1: float, a2: float, innovation_variance: float,
                       max_lag: int) -> np.ndarray:
    """Stationary autocovariance r(0..max_lag) from the Yule-Walker equations."""
    if not ar2_is_stable(a1, a2):
        raise ValueError(f"AR(2) coefficients ({a1}, {a2}) are not stable")
    r = np.empty(max_lag + 1)
    r[0] = innovation_variance * (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) ** 2 - a1 ** 2))
    if max_lag >= 1:
        r[1] = a1 * r[0] / (1.0 - a2)
    for lag in range(2, max_lag + 1):
        r[lag] = a1 * r[lag - 1] + a2 * r[lag - 2]
    return r


def sample_bernoulli_gaussian(probability: float, variance: float,
                              rng: np.random.Generator, size=None):
    gate = rng.random(size) < probability
    return gate * rng.normal(0.0, np.sqrt(variance), size)


def sample_alpha_stable(alpha: float, dispersion: float,
                        rng: np.random.Generator, size=None):
    """Symmetric alpha-stable variates (Chambers-Mallows-Stuck transform).

    The standard variate has characteristic function exp(-|t|^alpha); it is
    scaled by ``dispersion ** (1/alpha)``.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    if not dispersion > 0.0:
        raise ValueError("dispersion must be positive")
    angle = rng.uniform(-np.pi / 2, np.pi / 2, size)
    expo = rng.standard_exponential(size)
    if alpha == 1.0:
        x = np.tan(angle)
    else:
        x = (np.sin(alpha * angle) / np.cos(angle) ** (1.0 / alpha)
             * (np.cos((1.0 - alpha) * angle) / expo) ** ((1.0 - alpha) / alpha))
    return dispersion ** (1.0 / alpha) * x


def measurement(truth, regressor, noise: float) -> float:
    w = np.asarray(truth, dtype=float)
    u = np.asarray(regressor, dtype=float)
    if w.shape != u.shape:
        raise ValueError(f"regressor shape {u.shape} does not match parameter shape {w.shape}")
    return float(u @ w) + noise


def nominal_powers(profile: NodeSignalProfile, truth) -> tuple[float, float, float]:
    """Analytic ``(input power, measurement power, clean output power)``.

    Impulsive noise is excluded from the measurement power.
    """
    w = np.asarray(truth, dtype=float)
    a1, a2 = profile.ar_coefficients
    r = ar2_autocovariance(a1, a2, profile.innovation_variance, w.size - 1)
    power_u = float(r[0])
    power_y = float(w @ toeplitz(r) @ w)
    return power_u, power_y + profile.background_variance, power_y


def derive_rng(master_seed: int, tag: int, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by ``(master_seed, tag, *keys)``.

    Uses ``SeedSequence`` spawn keys, so distinct key tuples give independent
    streams and the same tuple always gives the same stream.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(tag, *keys))
    return np.random.default_rng(ss)


def generate_input(profile: NodeSignalProfile, iterations: int,
                   rng: np.random.Generator) -> np.ndarray:
    """AR(2) input samples u(1..iterations), zero state before the start."""
    a1, a2 = profile.ar_coefficients
    eps = rng.normal(0.0, np.sqrt(profile.innovation_variance), iterations)
    return lfilter([1.0], [1.0, -a1, -a2], eps)


def generate_noise(profile: NodeSignalProfile, iterations: int,
                   rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(0.0, np.sqrt(profile.background_variance), iterations)
    imp = profile.impulse
    if isinstance(imp, BernoulliGaussian):
        v += sample_bernoulli_gaussian(imp.probability, imp.variance, rng, iterations)
    elif isinstance(imp, SymmetricAlphaStable):
        v += sample_alpha_stable(imp.alpha, imp.dispersion, rng, iterations)
    return v


def regressor_matrix(samples: np.ndarray, length: int) -> np.ndarray:
    """Row ``t`` is the regressor ``[u(t), u(t-1), ..., u(t-M+1)]``."""
    padded = np.concatenate([np.zeros(length - 1), samples])
    return sliding_window_view(padded, length)[:, ::-1]
