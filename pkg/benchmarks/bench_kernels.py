"""Wall-clock comparison of the compiled and pure-Python network kernels.

Runs one Monte-Carlo trial of the ``fig2-bg`` preset per algorithm and
backend, checks the two backends agree, and prints per-trial timings.

    python3 benchmarks/bench_kernels.py [--iterations 6000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from rdrls import kernels
from rdrls.config import build_scenario, resolve_config
from rdrls.engine import trial_streams


def time_backend(backend, kind, args, kwargs, repeat):
    best, result = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = kernels.run_network(kind, *args, backend=backend, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--iterations", type=int, default=6000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    opts = p.parse_args(argv)

    cfg = resolve_config({"preset": "fig2-bg", "seed": opts.seed},
                         {"iterations": opts.iterations, "trials": 1})
    sc = build_scenario(cfg)
    inputs, meas, truth = trial_streams(sc, 0)
    period, trim = sc.dnc_sizes()
    prm = sc.params
    kwargs = dict(forgetting=prm.forgetting, regularization=prm.regularization,
                  bound_forgetting=prm.bound_forgetting, initial_bounds=sc.initial_bounds(),
                  step_size=prm.step_size, dnc_period=period, dnc_trim=trim,
                  dnc_threshold=prm.dnc_threshold)

    backends = kernels.available_backends()
    print(f"N={sc.node_count} M={sc.filter_length} T={opts.iterations}, best of {opts.repeat}")
    print(f"{'algorithm':<12}" + "".join(f"{b:>12}" for b in backends) + "   speedup   max rel diff")
    for name, kind in kernels.KIND_NAMES.items():
        times, results = [], []
        for backend in backends:
            t, r = time_backend(backend, kind, (inputs, meas, truth, sc.weights()), kwargs, opts.repeat)
            times.append(t)
            results.append(r)
        row = f"{name:<12}" + "".join(f"{t:>11.3f}s" for t in times)
        if len(results) == 2:
            a, b = results[0].sqdev, results[1].sqdev
            diff = np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))
            row += f"   {times[1] / times[0]:>6.1f}x   {diff:.1e}"
        print(row)
    if len(backends) == 1:
        print("compiled kernel unavailable; only the Python backend was timed")


if __name__ == "__main__":
    main()
