import numpy as np
import pytest

from rdrls import kernels
from rdrls.engine import AlgorithmParams, AlgorithmSpec, Scenario
from rdrls.signals import BernoulliGaussian, GroundTruth, NodeSignalProfile, SymmetricAlphaStable
from rdrls.topology import build_random_connected_topology

BACKENDS = kernels.available_backends()


def small_scenario(noise="bg", nodes=6, length=4, iterations=240, trials=2, seed=11,
                   change_at=121, algorithms=None, params=None):
    rng = np.random.default_rng(seed)
    profiles = []
    for _ in range(nodes):
        if noise == "bg":
            imp = BernoulliGaussian(rng.uniform(0.01, 0.05), 100.0)
        elif noise == "alpha":
            imp = SymmetricAlphaStable(1.15, 1 / 15)
        else:
            imp = None
        profiles.append(NodeSignalProfile(rng.uniform(0.2, 1.0), rng.uniform(0.01, 0.1), imp))
    if algorithms is None:
        algorithms = [AlgorithmSpec("drls", "drls"), AlgorithmSpec("selms", "selms"),
                      AlgorithmSpec("rdrls_nocoop", "rdrls", False),
                      AlgorithmSpec("rdrls", "rdrls"), AlgorithmSpec("rdrls_dnc", "rdrls_dnc")]
    return Scenario(
        topology=build_random_connected_topology(nodes, 0.4, seed),
        profiles=profiles,
        truth=GroundTruth.random(length, rng, change_at),
        algorithms=algorithms,
        params=params or AlgorithmParams(dnc_window_factor=2.0, dnc_threshold=25.0),
        iterations=iterations,
        trials=trials,
        seed=seed,
    )


@pytest.fixture
def scenario():
    return small_scenario()


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, grouped over its clauses."""
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if getattr(rep, "when", "call") != "call" and status == "passed":
                continue
            if "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            label = rep.nodeid.split("test_criterion_", 1)[1]
            number, clause = label.split("_", 1)
            detail = dict(rep.user_properties).get("detail", "")
            outcomes.setdefault(int(number.rstrip("abc")), []).append(
                (number, clause, status == "passed", detail))
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(outcomes):
        parts = outcomes[number]
        ok = all(p[2] for p in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}")
        for num, clause, passed, detail in parts:
            tail = f"  [{detail}]" if detail else ""
            terminalreporter.write_line(
                f"    {num:>3s} {clause.replace('_', ' ')}: {'pass' if passed else 'FAIL'}{tail}")
