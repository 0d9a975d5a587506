import numpy as np
import pytest

from rdrls import kernels
from rdrls.engine import (
    MSD_FLOOR_DB,
    AlgorithmParams,
    ReferenceNetwork,
    iterations_to_reach,
    msd_net,
    run_experiment,
    run_trial,
    simulate_reference,
    steady_state_msd,
    steady_state_window,
    trial_streams,
)
from rdrls.topology import identity_weights

from conftest import BACKENDS, small_scenario

KINDS = ["drls", "rdrls", "rdrls_dnc", "selms"]


def kernel_kwargs(sc):
    p = sc.params
    period, trim = sc.dnc_sizes()
    return dict(forgetting=p.forgetting, regularization=p.regularization,
                bound_forgetting=p.bound_forgetting, initial_bounds=sc.initial_bounds(),
                step_size=p.step_size, dnc_period=period, dnc_trim=trim,
                dnc_threshold=p.dnc_threshold)


@pytest.mark.parametrize("noise", ["bg", "alpha"])
@pytest.mark.parametrize("kind", KINDS)
def test_kernels_match_reference_rounds(kind, noise):
    sc = small_scenario(noise)
    inputs, meas, truth = trial_streams(sc, 0)
    C = sc.weights()
    ref = simulate_reference(kind, inputs, meas, truth, C, sc.params, sc.initial_bounds())
    for backend in BACKENDS:
        res = kernels.run_network(kernels.KIND_NAMES[kind], inputs, meas, truth, C,
                                  record_estimates=True, backend=backend, **kernel_kwargs(sc))
        np.testing.assert_allclose(res.estimates, ref.estimates, rtol=1e-9, atol=1e-11)
        np.testing.assert_allclose(res.sqdev, ref.sqdev, rtol=1e-8, atol=1e-12)
        assert res.resets == ref.resets
        assert res.violations == ref.violations == 0


def test_detector_fires_on_change():
    sc = small_scenario("none", iterations=480, change_at=241)
    inputs, meas, truth = trial_streams(sc, 0)
    res = kernels.run_network(kernels.RDRLS_DNC, inputs, meas, truth, sc.weights(),
                              **kernel_kwargs(sc))
    assert res.resets >= 1


def test_backends_agree_on_larger_network():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    sc = small_scenario("bg", nodes=12, length=8, iterations=1500, change_at=751)
    inputs, meas, truth = trial_streams(sc, 1)
    for kind in KINDS:
        a, b = (kernels.run_network(kernels.KIND_NAMES[kind], inputs, meas, truth, sc.weights(),
                                    backend=be, **kernel_kwargs(sc)) for be in BACKENDS)
        np.testing.assert_allclose(a.sqdev, b.sqdev, rtol=1e-7, atol=1e-14)
        assert a.resets == b.resets


def test_hand_computed_two_node_round():
    # M = 1, lam = 1, delta = 1, beta = 0.5, c = 1/2 everywhere
    C = np.full((2, 2), 0.5)
    params = AlgorithmParams(forgetting=1.0, regularization=1.0, bound_forgetting=0.5)
    net = ReferenceNetwork("rdrls", C, 1, params, initial_bounds=[0.04, 1.0])
    W = net.run_round([1.0, 2.0], [2.0, 1.0], 1)
    # node 1: P = 1/2, g = 1/2, e = 2, clamp 0.2 -> psi = 0.2, zeta = 0.04
    # node 2: P = 1/5, g = 2/5, e = 1, no clamp -> psi = 0.4, zeta = 0.5 + 0.08 = 0.58
    np.testing.assert_allclose(W, [[0.3], [0.3]])
    assert [b.zeta for b in net.bounds] == pytest.approx([0.04, 0.58])
    assert [b.xi for b in net.bounds] == pytest.approx([0.31, 0.31])
    assert net.rls[0].P[0, 0] == pytest.approx(0.5)
    assert net.rls[1].P[0, 0] == pytest.approx(0.2)
    for backend in BACKENDS:
        res = kernels.run_network(kernels.RDRLS, [[1.0], [2.0]], [[2.0], [1.0]], [[1.0]], C,
                                  forgetting=1.0, regularization=1.0, bound_forgetting=0.5,
                                  initial_bounds=[0.04, 1.0], record_estimates=True,
                                  backend=backend)
        np.testing.assert_allclose(res.estimates[0], [[0.3], [0.3]])
        np.testing.assert_allclose(res.sqdev[0], [0.49, 0.49])


@pytest.mark.parametrize("kind", KINDS)
def test_identity_weights_decouple_nodes(kind):
    sc = small_scenario("bg", nodes=4)
    inputs, meas, truth = trial_streams(sc, 0)
    kw = kernel_kwargs(sc)
    xi0 = kw.pop("initial_bounds")
    joint = kernels.run_network(kernels.KIND_NAMES[kind], inputs, meas, truth, identity_weights(4),
                                initial_bounds=xi0, **kw)
    for k in range(4):
        alone = kernels.run_network(kernels.KIND_NAMES[kind], inputs[k:k + 1], meas[k:k + 1],
                                    truth, np.eye(1), initial_bounds=xi0[k:k + 1], **kw)
        np.testing.assert_allclose(joint.sqdev[:, k], alone.sqdev[:, 0], rtol=1e-12)


def test_fixed_point_without_noise():
    rng = np.random.default_rng(0)
    w = rng.normal(size=3)
    C = np.full((2, 2), 0.5)
    for kind in KINDS:
        net = ReferenceNetwork(kind, C, 3, AlgorithmParams(), initial_bounds=[0.1, 0.1])
        for s in (net.lms if kind == "selms" else net.rls):
            s.w = w.copy()
        for it in range(1, 30):
            u = rng.normal(size=2)
            # measurements consistent with w for the current delay lines
            d = [measurement_for(net, k, u[k], w) for k in range(2)]
            W = net.run_round(u, d, it)
            np.testing.assert_allclose(W, [w, w], rtol=0, atol=1e-14)


def measurement_for(net, k, sample, w):
    window = np.concatenate([[sample], net.windows[k].values[:-1]])
    return float(window @ w)


def test_stale_message_detected():
    net = ReferenceNetwork("rdrls", np.full((2, 2), 0.5), 2, initial_bounds=[1.0, 1.0])
    net.run_round([1.0, 1.0], [0.0, 0.0], 1)
    with pytest.raises(ValueError):
        net.run_round([1.0, 1.0], [0.0, 0.0], 3)
    net.outbox[1].round = 0
    with pytest.raises(RuntimeError, match="stale"):
        net._inbox(0, 1)


def test_rounds_publish_before_combining():
    """Every node's inputs of round i come from round i, never earlier or later."""
    sc = small_scenario("bg", nodes=5)
    inputs, meas, truth = trial_streams(sc, 0)
    net = ReferenceNetwork("rdrls_dnc", sc.weights(), sc.filter_length, sc.params,
                           sc.initial_bounds())
    for t in range(sc.iterations):
        net.run_round(inputs[:, t], meas[:, t], t + 1)
        assert {m.round for m in net.outbox} == {t + 1}
        assert net.round == t + 1


def test_bound_monotone_and_convex():
    sc = small_scenario("bg", nodes=6)
    inputs, meas, truth = trial_streams(sc, 0)
    xi0 = np.full(6, 0.05)
    C = sc.weights()
    net = ReferenceNetwork("rdrls", C, sc.filter_length, sc.params, xi0)
    prev_max = xi0.max()
    for t in range(sc.iterations):
        net.run_round(inputs[:, t], meas[:, t], t + 1)
        xi = np.array([b.xi for b in net.bounds])
        zeta = np.array([b.zeta for b in net.bounds])
        assert xi.max() <= prev_max * (1 + 1e-12)
        prev_max = xi.max()
        for k in range(6):
            nb = net.neighbors[k]
            assert zeta[nb].min() * (1 - 1e-12) <= xi[k] <= zeta[nb].max() * (1 + 1e-12)


def test_drls_reduction_on_clean_data():
    sc = small_scenario("none", iterations=300, change_at=None)
    inputs, meas, truth = trial_streams(sc, 0)
    kw = kernel_kwargs(sc)
    kw.update(bound_forgetting=1.0, initial_bounds=np.full(sc.node_count, 1e6),
              record_estimates=True)
    for backend in BACKENDS:
        a = kernels.run_network(kernels.DRLS, inputs, meas, truth, sc.weights(), backend=backend, **kw)
        b = kernels.run_network(kernels.RDRLS, inputs, meas, truth, sc.weights(), backend=backend, **kw)
        np.testing.assert_allclose(a.estimates, b.estimates, rtol=0, atol=1e-10)


def test_trial_determinism_and_common_streams(scenario):
    a = trial_streams(scenario, 0)
    b = trial_streams(scenario, 0)
    c = trial_streams(scenario, 1)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a[0], c[0])
    r1 = run_trial(scenario, 0)
    r2 = run_trial(scenario, 0)
    for name in r1:
        np.testing.assert_array_equal(r1[name].sqdev, r2[name].sqdev)


def test_no_change_keeps_truth_constant():
    sc = small_scenario("bg", change_at=None)
    _, _, truth = trial_streams(sc, 0)
    assert np.all(truth == truth[0])


def test_experiment_independent_of_workers():
    sc = small_scenario("bg", trials=3, iterations=120, change_at=None)
    a = run_experiment(sc, workers=1)
    b = run_experiment(sc, workers=2)
    for name in a.sqdev:
        np.testing.assert_allclose(a.sqdev[name], b.sqdev[name], rtol=1e-9)
        assert a.resets[name] == b.resets[name]


def test_experiment_average_is_trial_mean():
    sc = small_scenario("bg", trials=3, iterations=80, change_at=None)
    res = run_experiment(sc)
    manual = np.mean([run_trial(sc, r)["rdrls"].sqdev for r in range(3)], axis=0)
    np.testing.assert_allclose(res.sqdev["rdrls"], manual, rtol=1e-12)


class TestMetrics:
    def test_exact_estimate_hits_floor(self):
        assert np.all(msd_net(np.zeros((3, 4))) == MSD_FLOOR_DB)

    def test_unit_deviation(self):
        np.testing.assert_allclose(msd_net(np.ones((5, 4))), 0.0)

    def test_two_node_average(self):
        assert msd_net(np.array([[1.0, 4.0]]))[0] == pytest.approx(3.979400, abs=1e-6)

    def test_trial_axis(self):
        sq = np.array([[[1.0, 1.0]], [[3.0, 3.0]]])
        assert msd_net(sq)[0] == pytest.approx(10 * np.log10(2.0))

    def test_steady_state_constant(self):
        trace = np.full((10, 3), 0.01)
        np.testing.assert_allclose(steady_state_msd(trace, 4), -20.0)
        np.testing.assert_allclose(steady_state_msd(trace, 10), -20.0)

    def test_steady_state_tail(self):
        assert steady_state_msd(np.array([9.0, 9.0, 2.0, 4.0]), 2) == pytest.approx(4.771213, abs=1e-6)
        assert steady_state_msd(np.array([2.0, 4.0, 9.0, 9.0]), 2, end=2) == pytest.approx(4.771213, abs=1e-6)

    def test_steady_state_window_errors(self):
        with pytest.raises(ValueError):
            steady_state_msd(np.ones(5), 6)
        with pytest.raises(ValueError):
            steady_state_msd(np.ones(5), 3, end=2)

    def test_window_scaling(self):
        assert steady_state_window(3000) == 500
        assert steady_state_window(6000) == 500
        assert steady_state_window(300) == 50

    def test_iterations_to_reach(self):
        assert iterations_to_reach([0.0, -5.0, -10.0, -12.0], -9.0) == 3
        assert iterations_to_reach([0.0, -1.0], -9.0) is None


def test_kernel_validation():
    x = np.zeros((2, 5))
    with pytest.raises(ValueError):
        kernels.run_network(kernels.RDRLS, x, x, np.zeros((5, 3)), np.eye(2))
    with pytest.raises(ValueError):
        kernels.run_network(7, x, x, np.zeros((5, 3)), np.eye(2))
    with pytest.raises(ValueError):
        kernels.run_network(kernels.DRLS, x, np.zeros((2, 4)), np.zeros((5, 3)), np.eye(2))


def test_backend_selection_env(tmp_path):
    import subprocess
    import sys
    code = "from rdrls import kernels; print(kernels.BACKEND)"
    env = dict(__import__("os").environ, RDRLS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True, cwd=tmp_path)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in BACKENDS
    with pytest.raises(ValueError):
        kernels.run_network(kernels.DRLS, np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((3, 1)),
                            np.eye(1), backend="fortran")
