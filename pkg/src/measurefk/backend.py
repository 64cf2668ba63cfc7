"""Backend selection and deterministic batch orchestration.

The compiled kernel is used when it imported cleanly and the process has
constant coefficients; callable coefficients always run through the numpy
implementation.  Set ``MEASUREFK_BACKEND=python`` to force the fallback.

Paths are partitioned into fixed-size blocks regardless of the worker count;
every block writes its own result slots and block aggregates are reduced in
block order, so outputs are byte-identical for any ``threads`` value.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _pathcore_py
from ._packing import (BatchResult, EXIT_CENSORED, PackedProcess, cell_grid_for,
                       pack_domain, pack_process)

BLOCK_SIZE = 4096

try:  # pragma: no cover - exercised via the compiled build
    if os.environ.get("MEASUREFK_BACKEND", "").lower() == "python":
        raise ImportError("backend forced to python")
    from . import _pathcore as _compiled
    HAVE_COMPILED = True
except ImportError:
    _compiled = None
    HAVE_COMPILED = False


def active_backend_name(proc: PackedProcess = None) -> str:
    if not HAVE_COMPILED:
        return "numpy"
    if proc is not None and proc.needs_python:
        return "numpy"
    return "compiled"


def _impl_for(proc: PackedProcess):
    if HAVE_COMPILED and not proc.needs_python:
        return _compiled
    return _pathcore_py


@dataclass
class Batch:
    """Merged per-path results of one ensemble."""

    result: BatchResult
    n_paths: int
    dt: float
    cap_steps: int

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.result.exit_kind == EXIT_CENSORED))

    def mean_occupation(self) -> np.ndarray:
        return self.result.occ / self.n_paths


def snap_checkpoints(times, dt: float, cap_steps: int) -> np.ndarray:
    """Round checkpoint times to step indices (ascending, within the cap)."""
    steps = np.rint(np.asarray(times, dtype=np.float64) / dt).astype(np.int64)
    steps = np.clip(steps, 0, cap_steps)
    return np.sort(steps)


def simulate(spec, domain, x0, *, dt: float, seed: int, n_paths: int,
             max_horizon: float, path0: int = 0, cap: float = None,
             cells=None, wg=None, wmu=None, want_occ: bool = False,
             checkpoints=None, threads: int = 1, proc: PackedProcess = None) -> Batch:
    """Run an ensemble from a common start point with per-path streams
    ``seed x [path0, path0 + n_paths)``."""
    if proc is None:
        proc = pack_process(spec, domain, dt)
    dom = pack_domain(domain)
    horizon = max_horizon if cap is None else min(cap, max_horizon)
    cap_steps = max(1, int(round(horizon / dt)))
    chk_steps = None
    if checkpoints is not None:
        chk_steps = snap_checkpoints(checkpoints, dt, cap_steps)
    impl = _impl_for(proc)

    wg = None if wg is None else np.array(wg, dtype=np.float64, order="C")
    wmu = None if wmu is None else np.array(wmu, dtype=np.float64, order="C")

    starts = list(range(0, n_paths, BLOCK_SIZE))
    results = [None] * len(starts)

    def run_one(i: int):
        s = starts[i]
        cnt = min(BLOCK_SIZE, n_paths - s)
        res, _ = impl.run_block(proc, dom, np.asarray(x0, float), cnt,
                                path0 + s, seed, cap_steps, cells=cells,
                                wg=wg, wmu=wmu, want_occ=want_occ,
                                chk_steps=chk_steps)
        results[i] = res

    if threads > 1 and impl is not _pathcore_py and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_one, range(len(starts))))
    else:
        for i in range(len(starts)):
            run_one(i)

    merged = BatchResult(
        lifetime=np.concatenate([r.lifetime for r in results]),
        exit_kind=np.concatenate([r.exit_kind for r in results]),
        acc_g=np.concatenate([r.acc_g for r in results]),
        acc_mu=np.concatenate([r.acc_mu for r in results]),
    )
    if want_occ and cells is not None:
        merged.occ = np.sum(np.stack([r.occ for r in results]), axis=0)
    if chk_steps is not None:
        merged.chk_state = np.concatenate([r.chk_state for r in results])
        merged.chk_alive = np.concatenate([r.chk_alive for r in results])
        merged.chk_acc_g = np.concatenate([r.chk_acc_g for r in results])
        merged.chk_acc_mu = np.concatenate([r.chk_acc_mu for r in results])
        merged.chk_times = chk_steps * dt
    return Batch(result=merged, n_paths=n_paths, dt=dt, cap_steps=cap_steps)
