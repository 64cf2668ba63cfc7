#!/usr/bin/env python3
"""Benchmark the compiled path kernel against the pure-numpy fallback.

Runs the same workloads through both implementations and reports throughput
(paths/s), wall time, and the agreement of the results.  Usage:

    python benchmarks/benchmark_backends.py [--paths 20000] [--threads 4]
"""

import argparse
import time

import numpy as np

from measurefk import _pathcore_py
from measurefk._packing import cell_grid_for, pack_domain, pack_process
from measurefk.backend import HAVE_COMPILED
from measurefk.domains import FullSpace, Interval
from measurefk.operators import (DivergenceForm, FractionalLaplacian,
                                 OrnsteinUhlenbeck)

if HAVE_COMPILED:
    from measurefk import _pathcore
else:
    _pathcore = None


def workload_cases(n_paths):
    dom_i = Interval(0.0, 1.0)
    dom_s = Interval(-1.0, 1.0)
    dom_f = FullSpace(1)
    cases = [
        ("diffusion dt=1e-3", DivergenceForm(a=1.0), dom_i, [0.5], 1e-3, 10.0),
        ("diffusion dt=1e-4", DivergenceForm(a=1.0), dom_i, [0.5], 1e-4, 3.0),
        ("stable alpha=1", FractionalLaplacian(alpha=1.0), dom_s, [0.0], 1e-3, 60.0),
        ("ou lam=1", OrnsteinUhlenbeck(A=[[-1.0]], Q=[[1.0]], lam=1.0), dom_f,
         [0.0], 1e-2, 40.0),
    ]
    for name, spec, dom, x0, dt, horizon in cases:
        yield name, spec, dom, np.asarray(x0, float), dt, horizon, n_paths


def run_case(impl, spec, dom, x0, dt, horizon, n_paths, seed=2024):
    proc = pack_process(spec, dom, dt)
    pd = pack_domain(dom)
    if isinstance(dom, FullSpace):
        cells = cell_grid_for(dom, 512, box=(np.array([-6.0]), np.array([6.0])))
    else:
        cells = cell_grid_for(dom, 512)
    wg = np.ones(cells.n_cells)
    cap = max(1, int(round(horizon / dt)))
    t0 = time.perf_counter()
    res, _ = impl.run_block(proc, pd, x0, n_paths, 0, seed, cap,
                            cells=cells, wg=wg, want_occ=True)
    elapsed = time.perf_counter() - t0
    return res, elapsed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20000)
    args = ap.parse_args()

    if not HAVE_COMPILED:
        print("compiled kernel not available; showing numpy fallback only")
    print(f"{'case':24s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s} "
          f"{'paths/s':>12s}  agreement")
    for name, spec, dom, x0, dt, horizon, n_paths in workload_cases(args.paths):
        res_py, t_py = run_case(_pathcore_py, spec, dom, x0, dt, horizon, n_paths)
        if _pathcore is None:
            print(f"{name:24s} {t_py:9.2f}s {'-':>10s} {'-':>8s} "
                  f"{n_paths / t_py:12.0f}")
            continue
        res_c, t_c = run_case(_pathcore, spec, dom, x0, dt, horizon, n_paths)
        agree = np.allclose(res_c.lifetime, res_py.lifetime, rtol=1e-10,
                            atol=1e-12) and np.allclose(
            res_c.acc_g, res_py.acc_g, rtol=1e-10, atol=1e-12)
        mean_match = abs(res_c.lifetime.mean() - res_py.lifetime.mean())
        print(f"{name:24s} {t_py:9.2f}s {t_c:9.2f}s {t_py / t_c:7.1f}x "
              f"{n_paths / t_c:12.0f}  allclose={agree} "
              f"(mean lifetime diff {mean_match:.2e})")


if __name__ == "__main__":
    main()
