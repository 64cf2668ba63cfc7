"""Killed-process sampling API: single trajectories and batch statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _pathcore_py, backend
from ._packing import (EXIT_CENSORED, EXIT_NAMES, cell_grid_for, pack_domain,
                       pack_process)
from .domains import is_bounded
from .measures import MeasureData, MeasureError, mollify


class CensoringError(RuntimeError):
    """Raised when too much path mass survives to the horizon cap."""


@dataclass(frozen=True)
class SimConfig:
    dt: float
    max_horizon: float = 50.0
    seed: int = 0
    paths: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.max_horizon <= 0:
            raise ValueError("dt and max_horizon must be positive")
        if self.dt > self.max_horizon:
            raise ValueError("dt must not exceed the horizon")
        if self.paths < 1:
            raise ValueError("need at least one path")


@dataclass
class PathSample:
    """One trajectory up to its lifetime; states stay inside the open domain."""

    times: np.ndarray
    states: np.ndarray
    lifetime: float
    exit_kind: str

    @property
    def censored(self) -> bool:
        return self.exit_kind == "horizon-cap"


def sample_path(spec, domain, x0, cfg: SimConfig, path_index: int) -> PathSample:
    """Trajectory of the killed process; a pure function of (seed, path_index)."""
    from .operators import validate
    validate(spec, domain).raise_if_invalid()
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if is_bounded(domain) and not bool(domain.contains(x0.reshape(1, -1))[0]):
        raise ValueError("the start point must lie in the open domain")
    proc = pack_process(spec, domain, cfg.dt)
    dom = pack_domain(domain)
    cap_steps = max(1, int(round(cfg.max_horizon / cfg.dt)))
    res, trajs = _pathcore_py.run_block(proc, dom, x0, 1, path_index, cfg.seed,
                                        cap_steps, record=True)
    states = np.asarray(trajs[0])
    times = np.arange(states.shape[0]) * cfg.dt
    return PathSample(times=times, states=states,
                      lifetime=float(res.lifetime[0]),
                      exit_kind=EXIT_NAMES[int(res.exit_kind[0])])


def additive_functional(path: PathSample, mu_mollified: MeasureData) -> float:
    """Left-endpoint integral of the density along the path, up to the lifetime."""
    if mu_mollified.has_atoms():
        raise MeasureError("the measure still carries atoms; mollify it before "
                           "pathwise evaluation")
    if mu_mollified.density is None:
        return 0.0
    dens = mu_mollified.density_values(path.states)
    t = path.times
    end = np.minimum(np.append(t[1:], path.lifetime), path.lifetime)
    dur = np.maximum(end - t, 0.0)
    return float(np.sum(dens * dur))


@dataclass
class ExitTimeEstimate:
    estimate: float
    stderr: float
    censored_fraction: float
    n_paths: int


def mean_exit_time(spec, domain, x0, cfg: SimConfig, threads: int = 1) -> ExitTimeEstimate:
    """Sample mean and standard error of the lifetime over uncensored paths."""
    from .operators import validate
    validate(spec, domain).raise_if_invalid()
    batch = backend.simulate(spec, domain, np.atleast_1d(x0), dt=cfg.dt,
                             seed=cfg.seed, n_paths=cfg.paths,
                             max_horizon=cfg.max_horizon, threads=threads)
    frac = batch.censored_fraction
    if frac >= 1e-3:
        raise CensoringError(
            f"horizon too small: {frac:.2%} of paths were still alive at "
            f"t = {cfg.max_horizon}")
    ok = batch.result.exit_kind != EXIT_CENSORED
    zeta = batch.result.lifetime[ok]
    est = float(np.mean(zeta))
    se = float(np.std(zeta, ddof=1) / np.sqrt(zeta.size))
    return ExitTimeEstimate(estimate=est, stderr=se, censored_fraction=frac,
                            n_paths=int(zeta.size))


def mc_potential_probe(spec, domain, x0, mu_abs: MeasureData, cfg: SimConfig,
                       n_cells: int = 1024):
    """Monte Carlo potential R|mu|(x0) at the full and at half the horizon."""
    measure = mu_abs
    if measure.has_atoms():
        measure = mollify(measure, 2.0 * np.sqrt(cfg.dt), domain)
    box = None
    if not is_bounded(domain):
        half = 8.0 * np.ones(domain.dim)
        box = (-half, half)
    cells = cell_grid_for(domain, n_cells, box=box)
    wmu = measure.density_values(cells.centers())
    full = backend.simulate(spec, domain, np.atleast_1d(x0), dt=cfg.dt,
                            seed=cfg.seed, n_paths=cfg.paths,
                            max_horizon=cfg.max_horizon, cells=cells, wmu=wmu)
    half_h = backend.simulate(spec, domain, np.atleast_1d(x0), dt=cfg.dt,
                              seed=cfg.seed, n_paths=cfg.paths,
                              max_horizon=cfg.max_horizon / 2.0, cells=cells,
                              wmu=wmu)
    return (float(np.mean(full.result.acc_mu)),
            float(np.mean(half_h.result.acc_mu)))
