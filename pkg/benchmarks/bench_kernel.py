"""Benchmark the compiled simulation kernel against the numpy fallback.

Run after building the extension in place:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernel.py
"""

import time

import numpy as np

from celloed import model
from celloed._kernel import available_backends
from celloed.params import default_cell_parameters


def _backend(name):
    if name == "compiled":
        from celloed._kernel import _core

        return _core
    from celloed._kernel import pure

    return pure


def run_once(backend, dm, x0, currents, outs):
    states, v, sp, sn = outs
    return backend.simulate(
        dm.Ad, dm.Bd, x0, currents, dm.pack,
        dm.ocp_xp, dm.ocp_cp, dm.ocp_xn, dm.ocp_cn, states, v, sp, sn,
    )


def bench(n_steps=1800, repeats=30):
    params = default_cell_parameters()
    dm = model.discrete_model(params, 1.0, 298.15)
    x0 = model.init_state(0.9, params).to_vector()
    rng = np.random.default_rng(0)
    currents = np.ascontiguousarray(rng.uniform(-120, 120, n_steps))
    outs = (np.empty((n_steps, model.N_STATES)), np.empty(n_steps),
            np.empty(n_steps), np.empty(n_steps))

    names = available_backends()
    print(f"profile of {n_steps} ZOH steps, best of {repeats} runs")
    times = {}
    for name in names:
        backend = _backend(name)
        run_once(backend, dm, x0, currents, outs)
        best = min(
            (lambda t0: (run_once(backend, dm, x0, currents, outs), time.perf_counter() - t0)[1])(
                time.perf_counter()
            )
            for _ in range(repeats)
        )
        times[name] = best
        print(f"  {name:9s} {best * 1e3:8.3f} ms  ({best / n_steps * 1e9:7.1f} ns/step)")
    if len(times) == 2:
        print(f"  speedup: {times['pure'] / times['compiled']:.1f}x")
    return times


if __name__ == "__main__":
    bench()
