"""Backward-equation verification: martingale drift of the compensated
process, horizon truncation of the random terminal time, and driver L1 bounds.

The representation is checked in its Markovian projection: for the true
solution, Z_t = u(X_(t^zeta)) + int_0^(t^zeta) f(X, u(X)) ds + A_mu(t^zeta)
has constant expectation u(x0), so the ensemble mean drift over checkpoint
times is the test statistic.  Nested conditional expectations are never
constructed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .fields import SolutionField
from .measures import MeasureData, Nonlinearity
from .paths import SimConfig
from .solver import PicardConfig, _Workspace, picard_solve


@dataclass
class MartingaleReport:
    checkpoint_times: np.ndarray
    ensemble_means: np.ndarray
    stderr: np.ndarray
    max_drift: float
    passed: bool
    start_value: float
    n_paths: int


def _pathwise_config(pic: PicardConfig = None) -> PicardConfig:
    pic = pic or PicardConfig()
    if pic.measure_mode != "pathwise":
        pic = PicardConfig(**{**pic.__dict__, "measure_mode": "pathwise"})
    return pic


def default_checkpoints(spec, domain, x0, sim: SimConfig, count: int = 8,
                        pilot_paths: int = 2000):
    """Geometric checkpoint grid up to the 95th lifetime percentile."""
    pilot = backend.simulate(spec, domain, np.atleast_1d(x0), dt=sim.dt,
                             seed=sim.seed, n_paths=min(pilot_paths, sim.paths),
                             max_horizon=sim.max_horizon, path0=1 << 40)
    q95 = float(np.quantile(pilot.result.lifetime, 0.95))
    top = max(q95, sim.dt * count)
    return np.geomspace(top / 2 ** (count - 1), top, count)


def martingale_residual(u: SolutionField, spec, domain, x0, f: Nonlinearity,
                        mu: MeasureData, sim: SimConfig,
                        pic: PicardConfig = None, checkpoints=None,
                        threads: int = 1,
                        base_stderr: float = 0.0) -> MartingaleReport:
    """Ensemble means of Z at checkpoints; pass iff every drift is within
    3 standard errors of Z_0 = u(x0).

    ``base_stderr`` is the uncertainty of u(x0) itself when u came out of a
    Monte Carlo solve; it widens the drift allowance in quadrature.  Leave it
    at 0 when testing analytic fields.
    """
    pic = _pathwise_config(pic)
    ws = _Workspace(spec, domain, mu, sim, pic, u.n,
                    grid_box=(u.grid_lo, u.grid_hi) if u.clamp else None)
    if checkpoints is None:
        checkpoints = default_checkpoints(spec, domain, x0, sim)
    wg = np.asarray(f(ws.centers, u.evaluate(ws.centers)), dtype=np.float64)
    batch = backend.simulate(spec, domain, np.atleast_1d(x0), dt=sim.dt,
                             seed=sim.seed, n_paths=sim.paths,
                             max_horizon=sim.max_horizon, cells=ws.cells,
                             wg=wg, wmu=ws.wmu, checkpoints=checkpoints,
                             threads=threads)
    res = batch.result
    n_chk = res.chk_times.size
    means = np.empty(n_chk)
    ses = np.empty(n_chk)
    for j in range(n_chk):
        alive = res.chk_alive[:, j] == 1
        u_val = np.zeros(sim.paths)
        if np.any(alive):
            u_val[alive] = u.evaluate(res.chk_state[alive, j, :])
        z = u_val + res.chk_acc_g[:, j] + res.chk_acc_mu[:, j]
        means[j] = float(np.mean(z))
        ses[j] = float(np.std(z, ddof=1) / np.sqrt(sim.paths))
    z0 = float(u.evaluate(np.atleast_1d(x0).reshape(1, -1))[0])
    drift = np.abs(means - z0)
    allowance = 3.0 * np.hypot(ses, base_stderr)
    passed = bool(np.all(drift <= allowance))
    return MartingaleReport(checkpoint_times=res.chk_times,
                            ensemble_means=means, stderr=ses,
                            max_drift=float(np.max(drift)), passed=passed,
                            start_value=z0, n_paths=sim.paths)


@dataclass
class HorizonRung:
    horizon: float
    value: float
    stderr: float


@dataclass
class HorizonReport:
    rungs: list
    stabilized: bool
    probe: tuple


def horizon_truncation(spec, domain, x0, f: Nonlinearity, mu: MeasureData,
                       horizons, sim: SimConfig, pic: PicardConfig = None,
                       grid_n: int = 21, threads: int = 1) -> HorizonReport:
    """Full solves with the integral capped at each horizon (zero value for
    the censored remainder); the last two rungs must agree within 3 combined
    standard errors."""
    pic = _pathwise_config(pic)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    rungs = []
    for h in horizons:
        u_h, rep = picard_solve(spec, domain, f, mu, sim, pic, grid_n=grid_n,
                                threads=threads, cap=float(h),
                                allow_censoring=True)
        value = float(u_h.evaluate(x0.reshape(1, -1))[0])
        se_field = u_h.copy_with(rep.stderr)
        rungs.append(HorizonRung(horizon=float(h), value=value,
                                 stderr=float(se_field.evaluate(x0.reshape(1, -1))[0])))
    stab = True
    if len(rungs) >= 2:
        a, b = rungs[-2], rungs[-1]
        stab = abs(b.value - a.value) <= 3.0 * np.hypot(a.stderr, b.stderr) + 1e-12
    return HorizonReport(rungs=rungs, stabilized=bool(stab), probe=tuple(x0))


@dataclass
class DriverBoundReport:
    lhs: float
    rhs: float
    diff_stderr: float
    inequality_pass: bool
    u_at_start: float
    majorant: float
    majorant_stderr: float
    majorant_pass: bool


def driver_l1_bound_check(u: SolutionField, spec, domain, x0, f: Nonlinearity,
                          mu: MeasureData, sim: SimConfig,
                          pic: PicardConfig = None,
                          threads: int = 1) -> DriverBoundReport:
    """One ensemble from x0 estimating both sides of the driver L1 bound
    E int |f(X, u)| dt <= E [int |f(X, 0)| dt + |A_mu|(zeta)], and the
    start-point majorant |u(x0)| <= right side."""
    pic = _pathwise_config(pic)
    ws = _Workspace(spec, domain, mu, sim, pic, u.n,
                    grid_box=(u.grid_lo, u.grid_hi) if u.clamp else None)
    u_cells = u.evaluate(ws.centers)
    wg = np.abs(np.asarray(f(ws.centers, u_cells), dtype=np.float64))
    rhs_w = np.abs(np.asarray(f(ws.centers, np.zeros(len(ws.centers))), dtype=np.float64))
    if ws.wmu_abs is not None:
        rhs_w = rhs_w + ws.wmu_abs
    batch = backend.simulate(spec, domain, np.atleast_1d(x0), dt=sim.dt,
                             seed=sim.seed, n_paths=sim.paths,
                             max_horizon=sim.max_horizon, cells=ws.cells,
                             wg=wg, wmu=rhs_w, threads=threads)
    res = batch.result
    lhs = float(np.mean(res.acc_g))
    rhs = float(np.mean(res.acc_mu))
    diff = res.acc_mu - res.acc_g
    diff_se = float(np.std(diff, ddof=1) / np.sqrt(sim.paths))
    rhs_se = float(np.std(res.acc_mu, ddof=1) / np.sqrt(sim.paths))
    u0 = float(u.evaluate(np.atleast_1d(x0).reshape(1, -1))[0])
    return DriverBoundReport(
        lhs=lhs, rhs=rhs, diff_stderr=diff_se,
        inequality_pass=bool(lhs <= rhs + 3.0 * diff_se + 1e-12),
        u_at_start=u0, majorant=rhs, majorant_stderr=rhs_se,
        majorant_pass=bool(abs(u0) <= rhs + 3.0 * rhs_se + 1e-12))
