"""Synchronous adapt-then-combine rounds, Monte-Carlo trials and MSD metrics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .node import (
    DncState,
    RlsCoreState,
    RobustBoundState,
    SignErrorLmsState,
    bound_local_update,
    combine,
    dnc_record,
    dnc_sizes,
    dnc_step,
    dnc_trimmed_mean,
    drls_adapt,
    initial_bound,
    rdrls_adapt,
    selms_adapt,
)
from .signals import (
    SEED_STREAMS,
    GroundTruth,
    NodeSignalProfile,
    RegressorWindow,
    derive_rng,
    generate_input,
    generate_noise,
    nominal_powers,
    regressor_matrix,
)
from .topology import Topology, check_combination_matrix, identity_weights, metropolis_weights

log = logging.getLogger(__name__)

__all__ = [
    "MSD_FLOOR_DB",
    "AlgorithmSpec",
    "AlgorithmParams",
    "Scenario",
    "ReferenceNetwork",
    "simulate_reference",
    "trial_streams",
    "run_trial",
    "run_experiment",
    "ExperimentResult",
    "to_db",
    "msd_net",
    "steady_state_msd",
    "steady_state_window",
    "iterations_to_reach",
]

MSD_FLOOR_DB = -120.0
ALGORITHM_KINDS = tuple(kernels.KIND_NAMES)


@dataclass(frozen=True)
class AlgorithmSpec:
    """One compared algorithm: a column label, its kind and whether nodes cooperate."""

    name: str
    kind: str
    cooperative: bool = True

    def __post_init__(self):
        if self.kind not in kernels.KIND_NAMES:
            raise ValueError(f"unknown algorithm kind {self.kind!r}; expected one of {ALGORITHM_KINDS}")

    @property
    def robust(self) -> bool:
        return self.kind != "drls"


@dataclass(frozen=True)
class AlgorithmParams:
    forgetting: float = 0.995
    regularization: float = 0.01
    bound_forgetting: float = 0.98
    bound_scale: float = 1.0
    dnc_window_factor: float = 3.0
    dnc_threshold: float = 25.0
    step_size: float = 0.015


@dataclass
class Scenario:
    topology: Topology
    profiles: list[NodeSignalProfile]
    truth: GroundTruth
    algorithms: list[AlgorithmSpec]
    params: AlgorithmParams = field(default_factory=AlgorithmParams)
    iterations: int = 6000
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iteration count must be positive")
        if self.trials <= 0:
            raise ValueError("trial count must be positive")
        if len(self.profiles) != self.topology.node_count:
            raise ValueError("need one signal profile per node")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError("algorithm names must be unique")

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    @property
    def filter_length(self) -> int:
        return self.truth.vector.size

    def weights(self, cooperative: bool = True) -> np.ndarray:
        if cooperative:
            return metropolis_weights(self.topology)
        return identity_weights(self.node_count)

    def initial_bounds(self) -> np.ndarray:
        M = self.filter_length
        out = []
        for profile in self.profiles:
            power_u, power_d, _ = nominal_powers(profile, self.truth.vector)
            out.append(initial_bound(self.params.bound_scale, power_d, power_u, M))
        return np.array(out)

    def dnc_sizes(self) -> tuple[int, int]:
        return dnc_sizes(self.params.dnc_window_factor, self.filter_length)


# -- reference round-by-round network ----------------------------------------

@dataclass
class _Message:
    """What a node publishes to its neighbors at the end of phase 1."""

    round: int
    psi: np.ndarray
    zeta: float = 0.0
    mean: Optional[float] = None


class ReferenceNetwork:
    """Network of per-node state objects advanced one synchronous round at a time.

    Every round has an adaptation phase, after which each node publishes a
    message stamped with the round index, and a combination phase that only
    reads messages carrying the current stamp.
    """

    def __init__(self, kind: str, weights: np.ndarray, length: int,
                 params: AlgorithmParams = AlgorithmParams(), initial_bounds=None):
        if kind not in kernels.KIND_NAMES:
            raise ValueError(f"unknown algorithm kind {kind!r}")
        check_combination_matrix(weights)
        self.kind = kind
        self.C = np.asarray(weights, dtype=float)
        N = self.C.shape[0]
        self.neighbors = [np.flatnonzero(self.C[:, k]) for k in range(N)]
        self.windows = [RegressorWindow(length) for _ in range(N)]
        self.round = 0
        self.resets = 0
        self.violations = 0
        self.outbox: list[Optional[_Message]] = [None] * N
        if kind == "selms":
            self.lms = [SignErrorLmsState(length, params.step_size) for _ in range(N)]
            return
        self.rls = [RlsCoreState(length, params.forgetting, params.regularization)
                    for _ in range(N)]
        if kind in ("rdrls", "rdrls_dnc"):
            if initial_bounds is None:
                raise ValueError("robust algorithms need initial_bounds")
            xi0 = np.broadcast_to(initial_bounds, (N,))
            self.bounds = [RobustBoundState(float(x), params.bound_forgetting) for x in xi0]
        if kind == "rdrls_dnc":
            self.dnc = [DncState.for_length(length, params.dnc_window_factor, params.dnc_threshold)
                        for _ in range(N)]

    @property
    def estimates(self) -> np.ndarray:
        states = self.lms if self.kind == "selms" else self.rls
        return np.array([s.w for s in states])

    def _adapt(self, k: int, iteration: int, sample: float, d: float) -> _Message:
        u = self.windows[k].push(sample)
        if self.kind == "selms":
            return _Message(iteration, selms_adapt(self.lms[k], u, d))
        if self.kind == "drls":
            psi, _, _ = drls_adapt(self.rls[k], u, d)
            return _Message(iteration, psi)
        bound = self.bounds[k]
        psi, g, e = rdrls_adapt(self.rls[k], bound, u, d)
        if np.sum((psi - self.rls[k].w) ** 2) > bound.xi * (1.0 + 1e-12):
            self.violations += 1
        zeta = bound_local_update(bound, g, e)
        mean = None
        if self.kind == "rdrls_dnc":
            dnc = self.dnc[k]
            dnc_record(dnc, e, u)
            if dnc.is_checkpoint(iteration):
                mean = dnc_trimmed_mean(dnc)
        return _Message(iteration, psi, zeta, mean)

    def _inbox(self, k: int, iteration: int) -> list[_Message]:
        msgs = [self.outbox[m] for m in self.neighbors[k]]
        for m, msg in zip(self.neighbors[k], msgs):
            if msg is None or msg.round != iteration:
                raise RuntimeError(f"node {k} read a stale message from node {m} in round {iteration}")
        return msgs

    def run_round(self, samples, measurements, iteration: int) -> np.ndarray:
        """Advance all nodes by one round and return the combined estimates."""
        N = self.C.shape[0]
        if len(samples) != N or len(measurements) != N:
            raise ValueError("need one sample and one measurement per node")
        if iteration != self.round + 1:
            raise ValueError(f"expected round {self.round + 1}, got {iteration}")

        # phase 1: adaptation, all outputs published before anyone combines
        self.outbox = [self._adapt(k, iteration, samples[k], measurements[k]) for k in range(N)]

        # phase 2: combination
        inboxes = [self._inbox(k, iteration) for k in range(N)]
        cols = [self.C[self.neighbors[k], k] for k in range(N)]
        new_w = [combine([m.psi for m in inboxes[k]], cols[k]) for k in range(N)]
        if self.kind in ("rdrls", "rdrls_dnc"):
            if self.kind == "rdrls_dnc" and self.dnc[0].is_checkpoint(iteration):
                for k in range(N):
                    _, reset = dnc_step(self.dnc[k], self.bounds[k], self.rls[k], iteration,
                                        [m.mean for m in inboxes[k]], cols[k])
                    self.resets += reset
                    # zeta may have changed; republish before the bound exchange
                    self.outbox[k].zeta = self.bounds[k].zeta
            new_xi = [combine([m.zeta for m in self._inbox(k, iteration)], cols[k])
                      for k in range(N)]
            for bound, xi in zip(self.bounds, new_xi):
                bound.xi = xi
        states = self.lms if self.kind == "selms" else self.rls
        for state, w in zip(states, new_w):
            state.w = w
        self.round = iteration
        return self.estimates


def simulate_reference(kind: str, inputs, measurements, truth, weights,
                       params: AlgorithmParams = AlgorithmParams(),
                       initial_bounds=None) -> kernels.KernelResult:
    """Round-by-round counterpart of :func:`rdrls.kernels.run_network` (slow)."""
    inputs = np.asarray(inputs, dtype=float)
    measurements = np.asarray(measurements, dtype=float)
    truth = np.asarray(truth, dtype=float)
    N, T = inputs.shape
    net = ReferenceNetwork(kind, weights, truth.shape[1], params, initial_bounds)
    sqdev = np.empty((T, N))
    est = np.empty((T, N, truth.shape[1]))
    for t in range(T):
        W = net.run_round(inputs[:, t], measurements[:, t], t + 1)
        est[t] = W
        sqdev[t] = np.sum((truth[t] - W) ** 2, axis=1)
    return kernels.KernelResult(sqdev, net.violations, net.resets, est)


# -- trials -------------------------------------------------------------------

def trial_streams(scenario: Scenario, trial: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inputs ``(N, T)``, measurements ``(N, T)`` and truth ``(T, M)`` of one trial.

    Node ``k`` of trial ``r`` draws from ``derive_rng(seed, SEED_STREAMS, r, k)``,
    so every algorithm in the trial sees the same data.
    """
    T, N, M = scenario.iterations, scenario.node_count, scenario.filter_length
    truth = scenario.truth.trajectory(T)
    inputs = np.empty((N, T))
    meas = np.empty((N, T))
    for k, profile in enumerate(scenario.profiles):
        rng = derive_rng(scenario.seed, SEED_STREAMS, trial, k)
        inputs[k] = generate_input(profile, T, rng)
        noise = generate_noise(profile, T, rng)
        meas[k] = np.einsum("ta,ta->t", regressor_matrix(inputs[k], M), truth) + noise
    return inputs, meas, truth


def run_trial(scenario: Scenario, trial: int, backend: Optional[str] = None,
              record_estimates: bool = False) -> dict[str, kernels.KernelResult]:
    """Run every algorithm of the scenario on the streams of one trial."""
    inputs, meas, truth = trial_streams(scenario, trial)
    p = scenario.params
    xi0 = scenario.initial_bounds()
    period, trim = scenario.dnc_sizes()
    out = {}
    for alg in scenario.algorithms:
        res = kernels.run_network(
            kernels.KIND_NAMES[alg.kind], inputs, meas, truth, scenario.weights(alg.cooperative),
            forgetting=p.forgetting, regularization=p.regularization,
            bound_forgetting=p.bound_forgetting, initial_bounds=xi0, step_size=p.step_size,
            dnc_period=period, dnc_trim=trim, dnc_threshold=p.dnc_threshold,
            record_estimates=record_estimates, backend=backend)
        if not np.all(np.isfinite(res.sqdev)):
            log.warning("%s diverged in trial %d", alg.name, trial)
        out[alg.name] = res
    return out


@dataclass
class ExperimentResult:
    """Trial-averaged squared deviations, ``(iterations, nodes)`` per algorithm."""

    sqdev: dict[str, np.ndarray]
    violations: dict[str, int]
    resets: dict[str, int]
    trials: int

    def msd_db(self, name: str) -> np.ndarray:
        return msd_net(self.sqdev[name])


def _trial_job(args):
    scenario, trial, backend = args
    res = run_trial(scenario, trial, backend)
    return {name: (r.sqdev, r.violations, r.resets) for name, r in res.items()}


def run_experiment(scenario: Scenario, workers: int = 1,
                   backend: Optional[str] = None) -> ExperimentResult:
    """Average all trials of ``scenario``.

    Trials run in a process pool when ``workers > 1``; results are summed in
    trial order either way, so the output does not depend on ``workers``.
    """
    jobs = [(scenario, r, backend) for r in range(scenario.trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = map(_trial_job, jobs)
    names = [a.name for a in scenario.algorithms]
    total = {n: np.zeros((scenario.iterations, scenario.node_count)) for n in names}
    violations = dict.fromkeys(names, 0)
    resets = dict.fromkeys(names, 0)
    for trial, res in enumerate(results):
        log.debug("trial %d done", trial)
        for n in names:
            sq, v, r = res[n]
            total[n] += sq
            violations[n] += v
            resets[n] += r
    sqdev = {n: total[n] / scenario.trials for n in names}
    return ExperimentResult(sqdev, violations, resets, scenario.trials)


# -- metrics ------------------------------------------------------------------

def to_db(x, floor: float = MSD_FLOOR_DB):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10.0 * np.log10(x)
    db = np.where(x == 0.0, floor, db)
    return float(db) if db.ndim == 0 else db


def msd_net(sqdev) -> np.ndarray:
    """Network MSD in dB per iteration.

    ``sqdev`` holds squared deviations shaped ``(iterations, nodes)`` or
    ``(trials, iterations, nodes)``; trials and nodes are averaged.
    """
    sqdev = np.asarray(sqdev, dtype=float)
    if sqdev.ndim == 3:
        sqdev = sqdev.mean(axis=0)
    return to_db(sqdev.mean(axis=-1))


def steady_state_msd(trace, window: int, end: Optional[int] = None):
    """Tail average of a linear-scale trace, in dB.

    ``trace`` is ``(iterations,)`` or ``(iterations, nodes)``; the average
    covers the ``window`` rows before row ``end`` (default: the last row).
    """
    trace = np.asarray(trace, dtype=float)
    end = trace.shape[0] if end is None else end
    if window < 1:
        raise ValueError("window must be positive")
    if not 0 < end <= trace.shape[0] or window > end:
        raise ValueError(f"window of {window} does not fit before row {end}")
    return to_db(trace[end - window:end].mean(axis=0))


def steady_state_window(segment_length: int, nominal: int = 500,
                        reference_segment: int = 3000) -> int:
    """Tail length for steady-state averages, scaled to shorter segments."""
    if segment_length >= reference_segment:
        return nominal
    return max(1, int(round(nominal * segment_length / reference_segment)))


def iterations_to_reach(curve_db: Sequence[float], level_db: float, start: int = 0) -> Optional[int]:
    """Number of iterations from ``start`` until the curve first drops to ``level_db``."""
    curve_db = np.asarray(curve_db)
    hits = np.flatnonzero(curve_db[start:] <= level_db)
    return int(hits[0]) + 1 if hits.size else None
