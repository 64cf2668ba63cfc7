"""Probabilistic solution engine: Monte Carlo Feynman-Kac map and damped
Picard iteration.

One ensemble of killed paths per grid node is simulated once and reduced to
mean occupation times on a fine cell grid; every Picard sweep then reuses the
same empirical kernel (common random numbers), so the iteration is a
deterministic map whose fixed point the tolerance refers to.  A second pass
with the converged driver recovers per-path variances for the error bars.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import backend, kernels
from ._packing import cell_grid_for, pack_process
from .domains import FullSpace, is_bounded
from .fields import SolutionField
from .measures import (MeasureData, Nonlinearity, check_monotone, mollify,
                       total_variation, truncate)
from .operators import (GaussianReference, OperatorError, ou_stationary_cov,
                        reference_measure, validate)
from .paths import CensoringError, SimConfig


class MonotonicityError(RuntimeError):
    """The declared driver failed the statistical monotonicity check."""


class PicardNonConvergenceError(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class PicardConfig:
    tolerance: float = 5e-4
    max_iterations: int = 60
    damping: float = 0.5
    crn: bool = True
    measure_mode: str = "auto"       # auto | kernel | pathwise
    cells_per_axis: int = 2000
    epsilon: float = None            # mollification bandwidth, default 2*sqrt(dt)
    clip_factor: float = 4.0
    check_monotonicity: bool = True
    check_potential: bool = True     # probe R|mu| finiteness before solving

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.measure_mode not in ("auto", "kernel", "pathwise"):
            raise ValueError(f"unknown measure mode {self.measure_mode!r}")


@dataclass
class SolveReport:
    iterations: int
    sup_residuals: list
    stderr: np.ndarray
    l1_f_u: float
    tv_mu: float
    measure_mode: str
    clip_bound: float
    max_censored_fraction: float
    warnings: list = dc_field(default_factory=list)


def default_grid_box(spec, domain, sigmas: float = 6.0):
    """Grid box for full-space (OU) runs: +-sigmas stationary deviations."""
    if is_bounded(domain):
        return None
    sd = np.sqrt(np.diag(ou_stationary_cov(spec)))
    half = sigmas * sd
    return (-half, half)


class _Workspace:
    """Per-solve geometry: field grid, sim nodes, cells, measure weights."""

    def __init__(self, spec, domain, mu, sim: SimConfig, pic: PicardConfig,
                 grid_n: int, grid_box=None):
        self.spec = spec
        self.domain = domain
        self.sim = sim
        self.pic = pic
        self.ref = reference_measure(spec)
        self.grid_box = grid_box if grid_box is not None else default_grid_box(spec, domain)
        self.field = SolutionField(domain, grid_n, box=self.grid_box)
        mask = self.field.interior_mask().ravel()
        self.sim_idx = np.nonzero(mask)[0]
        self.nodes = self.field.node_points()[self.sim_idx]
        self.cells = cell_grid_for(domain, pic.cells_per_axis,
                                   box=self.grid_box if not is_bounded(domain) else None)
        self.centers = self.cells.centers()

        self.kernel = kernels.exact_kernel_for(spec, domain)
        mode = pic.measure_mode
        if mode == "auto":
            mode = "kernel" if self.kernel is not None and not mu.is_zero() else "pathwise"
        if mode == "kernel" and self.kernel is None:
            raise kernels.KernelError("no exact kernel for this operator/domain "
                                      "pair; use the pathwise measure mode")
        self.measure_mode = mode

        self.mu = mu
        eps = pic.epsilon if pic.epsilon is not None else 2.0 * np.sqrt(sim.dt)
        self.epsilon = eps
        if mode == "pathwise" and not mu.is_zero():
            mu_eff = mollify(mu, eps, domain) if mu.has_atoms() else mu
            self.wmu = mu_eff.density_values(self.centers)
            self.wmu_abs = np.abs(
                mollify(mu.abs(), eps, domain).density_values(self.centers)
                if mu.has_atoms() else mu.abs().density_values(self.centers))
        else:
            self.wmu = None
            self.wmu_abs = None

    def measure_term(self):
        """Deterministic (kernel) or ensemble (pathwise) measure contribution."""
        if self.measure_mode == "kernel":
            vals = np.array([kernels.potential_Rmu(self.kernel, self.mu, x)
                             for x in self.nodes])
            vals_abs = np.array([kernels.potential_Rmu(self.kernel, self.mu.abs(), x)
                                 for x in self.nodes])
            return vals, vals_abs
        return None, None

    def run_nodes(self, *, wg=None, path_base=0, cap=None,
                  allow_censoring=False, want_occ=False, threads=1,
                  checkpoints=None):
        """One ensemble per node; path streams are (seed, base + i*paths + p)."""
        batches = []
        for i, x0 in enumerate(self.nodes):
            batch = backend.simulate(
                self.spec, self.domain, x0, dt=self.sim.dt, seed=self.sim.seed,
                n_paths=self.sim.paths, max_horizon=self.sim.max_horizon,
                path0=path_base + i * self.sim.paths, cap=cap,
                cells=self.cells, wg=wg, wmu=self.wmu, want_occ=want_occ,
                checkpoints=checkpoints, threads=threads)
            if not allow_censoring and batch.censored_fraction >= 1e-3:
                raise CensoringError(
                    f"horizon too small: {batch.censored_fraction:.2%} of paths "
                    f"from node {tuple(x0)} were censored")
            batches.append(batch)
        return batches


def _field_l1(ws: _Workspace, values_on_nodes: np.ndarray) -> float:
    """L1 norm over the grid w.r.t. the operator's reference measure."""
    w = ws.field.quadrature_weights().ravel()
    dens = ws.ref.density(ws.field.node_points())
    return float(np.sum(w * dens * np.abs(values_on_nodes)))


def feynman_kac_map(spec, domain, f: Nonlinearity, u_k: SolutionField,
                    mu: MeasureData, sim: SimConfig, pic: PicardConfig = None,
                    threads: int = 1, path_base: int = 0, cap: float = None,
                    allow_censoring: bool = False, workspace: _Workspace = None):
    """One application of the map u -> E[int f(X, u(X)) dt + A_mu]; returns
    (field, stderr field on the same grid)."""
    pic = pic or PicardConfig()
    ws = workspace or _Workspace(spec, domain, mu, sim, pic, u_k.n,
                                 grid_box=(u_k.grid_lo, u_k.grid_hi)
                                 if isinstance(domain, FullSpace) else None)
    _check_preconditions(spec, domain, f, pic)
    wg = np.asarray(f(ws.centers, u_k.evaluate(ws.centers)), dtype=np.float64)
    batches = ws.run_nodes(wg=wg, path_base=path_base, cap=cap,
                           allow_censoring=allow_censoring, threads=threads)
    meas, _ = ws.measure_term()
    values = np.zeros(ws.field.values.size)
    stderr = np.zeros(ws.field.values.size)
    for i, b in enumerate(batches):
        tot = b.result.acc_g + b.result.acc_mu
        values[ws.sim_idx[i]] = float(np.mean(tot)) + (meas[i] if meas is not None else 0.0)
        stderr[ws.sim_idx[i]] = float(np.std(tot, ddof=1) / np.sqrt(tot.size))
    out = ws.field.copy_with(values.reshape(ws.field.values.shape))
    return out, stderr.reshape(ws.field.values.shape)


def _check_preconditions(spec, domain, f: Nonlinearity, pic: PicardConfig):
    validate(spec, domain).raise_if_invalid()
    if pic.check_monotonicity and not check_monotone(f, domain):
        raise MonotonicityError(
            "the driver failed the monotonicity check: f(x, y) must be "
            "nonincreasing in y ((f(x,y1)-f(x,y2))(y1-y2) <= 0)")


def _probe_class_R(ws: _Workspace, mu: MeasureData):
    """Light admissibility probe: R|mu| must be finite at a few nodes."""
    from .measures import is_class_R
    picks = [0, len(ws.nodes) // 2, len(ws.nodes) - 1]
    probes = [ws.nodes[i] for i in sorted(set(picks))]
    probe_sim = SimConfig(dt=ws.sim.dt, max_horizon=ws.sim.max_horizon,
                          seed=ws.sim.seed, paths=min(512, ws.sim.paths))
    box = None if is_bounded(ws.domain) else (ws.field.grid_lo, ws.field.grid_hi)
    report = is_class_R(mu, ws.spec, ws.domain, probes,
                        kernel=ws.kernel if ws.measure_mode == "kernel" else None,
                        sim=None if ws.measure_mode == "kernel" else probe_sim,
                        box=box)
    if not report.in_class:
        raise OperatorError(
            "the measure potential R|mu| looks divergent at probe points "
            f"{report.probe_points}: {report.notes}")


def picard_solve(spec, domain, f: Nonlinearity, mu: MeasureData,
                 sim: SimConfig, pic: PicardConfig = None, grid_n: int = 21,
                 threads: int = 1, grid_box=None, cap: float = None,
                 allow_censoring: bool = False):
    """Damped fixed-point iteration from u = 0; returns (field, report)."""
    pic = pic or PicardConfig()
    _check_preconditions(spec, domain, f, pic)
    ws = _Workspace(spec, domain, mu, sim, pic, grid_n, grid_box=grid_box)
    n_sim = len(ws.nodes)
    if n_sim == 0:
        raise OperatorError("no interior grid nodes to solve on")
    if pic.check_potential and not mu.is_zero():
        _probe_class_R(ws, mu)

    meas, meas_abs = ws.measure_term()

    def build_K(path_base):
        batches = ws.run_nodes(path_base=path_base, cap=cap,
                               allow_censoring=allow_censoring,
                               want_occ=True, threads=threads)
        K = np.stack([b.mean_occupation() for b in batches])
        frac = max(b.censored_fraction for b in batches)
        return K, frac, batches

    K, max_frac, k_batches = build_K(0)

    # measure contribution and driver-clipping majorant
    if ws.measure_mode == "pathwise":
        if ws.wmu is not None:
            meas = K @ ws.wmu
            meas_abs = K @ ws.wmu_abs
        else:
            meas = np.zeros(n_sim)
            meas_abs = np.zeros(n_sim)
    f0_abs = np.abs(np.asarray(f(ws.centers, np.zeros(len(ws.centers))), dtype=np.float64))
    majorant = K @ f0_abs + meas_abs
    clip_bound = pic.clip_factor * float(np.max(majorant))
    if clip_bound == 0.0:
        clip_bound = 1.0

    shape = ws.field.values.shape
    u_flat = np.zeros(ws.field.values.size)
    residuals = []
    theta = pic.damping
    converged = False
    iterations = 0
    for it in range(pic.max_iterations):
        if not pic.crn and it > 0:
            K, frac, k_batches = build_K(it * n_sim * sim.paths)
            max_frac = max(max_frac, frac)
            if ws.measure_mode == "pathwise" and ws.wmu is not None:
                meas = K @ ws.wmu
        u_field = ws.field.copy_with(u_flat.reshape(shape))
        u_cells = truncate(clip_bound, u_field.evaluate(ws.centers))
        fv = np.asarray(f(ws.centers, u_cells), dtype=np.float64)
        phi = K @ fv + meas
        new_flat = u_flat.copy()
        new_flat[ws.sim_idx] = (1.0 - theta) * u_flat[ws.sim_idx] + theta * phi
        res = float(np.max(np.abs(new_flat - u_flat)))
        residuals.append(res)
        u_flat = new_flat
        iterations = it + 1
        if res < pic.tolerance:
            converged = True
            break
    if not converged:
        raise PicardNonConvergenceError(
            f"Picard iteration did not reach {pic.tolerance} in "
            f"{pic.max_iterations} sweeps (last update {residuals[-1]:.3g})",
            residuals)

    u_out = ws.field.copy_with(u_flat.reshape(shape))

    # error-bar pass on the converged driver, same streams as the last kernel;
    # with a vanishing driver the kernel-build ensembles already carry the
    # per-path totals (wg = 0 contributes exactly nothing), so reuse them
    wg_final = np.asarray(
        f(ws.centers, truncate(clip_bound, u_out.evaluate(ws.centers))),
        dtype=np.float64)
    if np.any(wg_final):
        err_base = 0 if pic.crn else (iterations - 1) * n_sim * sim.paths
        batches = ws.run_nodes(wg=wg_final, path_base=err_base, cap=cap,
                               allow_censoring=allow_censoring, threads=threads)
    else:
        batches = k_batches
    stderr = np.zeros(ws.field.values.size)
    for i, b in enumerate(batches):
        tot = b.result.acc_g + b.result.acc_mu
        stderr[ws.sim_idx[i]] = float(np.std(tot, ddof=1) / np.sqrt(tot.size))

    l1_f_u = _field_l1(ws, np.asarray(
        f(ws.field.node_points(), u_out.values.ravel()), dtype=np.float64))
    box = None if is_bounded(domain) else (ws.field.grid_lo, ws.field.grid_hi)
    tv_mu = total_variation(mu, domain, ref=ws.ref, box=box)

    report = SolveReport(iterations=iterations, sup_residuals=residuals,
                         stderr=stderr.reshape(shape), l1_f_u=l1_f_u,
                         tv_mu=tv_mu, measure_mode=ws.measure_mode,
                         clip_bound=clip_bound,
                         max_censored_fraction=max_frac)
    if max_frac > 0 and allow_censoring:
        report.warnings.append(
            f"{max_frac:.2%} of paths hit the horizon cap (truncation mode)")
    return u_out, report


@dataclass
class ResidualReport:
    node_lhs: np.ndarray
    node_rhs: np.ndarray
    node_stderr: np.ndarray
    nodewise_pass: bool
    l1_f_u: float
    l1_f0: float
    tv_mu: float
    l1_allowance: float
    l1_pass: bool


def residual_report(u: SolutionField, spec, domain, f: Nonlinearity,
                    mu: MeasureData, sim: SimConfig, pic: PicardConfig = None,
                    threads: int = 1) -> ResidualReport:
    """Checks the pathwise L1 bound nodewise on one ensemble, and the global
    L1 inequality |f_u|_(L1) <= |f(.,0)|_(L1) + |mu|_TV with a propagated
    statistical allowance."""
    pic = pic or PicardConfig(measure_mode="pathwise")
    if pic.measure_mode == "kernel":
        pic = PicardConfig(**{**pic.__dict__, "measure_mode": "pathwise"})
    ws = _Workspace(spec, domain, mu, sim, pic, u.n,
                    grid_box=(u.grid_lo, u.grid_hi)
                    if isinstance(domain, FullSpace) else None)
    u_cells = u.evaluate(ws.centers)
    wg = np.abs(np.asarray(f(ws.centers, u_cells), dtype=np.float64))
    f0 = np.abs(np.asarray(f(ws.centers, np.zeros(len(ws.centers))), dtype=np.float64))
    if ws.wmu_abs is not None:
        f0 = f0 + ws.wmu_abs
    saved_wmu = ws.wmu
    ws.wmu = f0  # second accumulator carries the right-hand side
    batches = ws.run_nodes(wg=wg, threads=threads)
    ws.wmu = saved_wmu
    lhs = np.array([float(np.mean(b.result.acc_g)) for b in batches])
    rhs = np.array([float(np.mean(b.result.acc_mu)) for b in batches])
    diff_se = np.array([float(np.std(b.result.acc_mu - b.result.acc_g, ddof=1)
                              / np.sqrt(b.n_paths)) for b in batches])
    nodewise = bool(np.all(lhs <= rhs + 3.0 * diff_se + 1e-12))

    nodes = u.node_points()
    l1_f_u = _field_l1(ws, np.asarray(f(nodes, u.values.ravel()), dtype=np.float64))
    l1_f0 = _field_l1(ws, np.asarray(f(nodes, np.zeros(nodes.shape[0])), dtype=np.float64))
    box = None if is_bounded(domain) else (u.grid_lo, u.grid_hi)
    tv_mu = total_variation(mu, domain, ref=ws.ref, box=box)
    # statistical allowance: 3-sigma perturbation of u propagated through f
    se_field = np.zeros(nodes.shape[0])
    for i, b in enumerate(batches):
        tot = b.result.acc_g
        se_field[ws.sim_idx[i]] = float(np.std(tot, ddof=1) / np.sqrt(b.n_paths))
    pert = np.abs(np.asarray(f(nodes, u.values.ravel() + 3.0 * se_field), dtype=np.float64)
                  - np.asarray(f(nodes, u.values.ravel()), dtype=np.float64))
    allowance = _field_l1(ws, pert) + 1e-9
    l1_pass = bool(l1_f_u <= l1_f0 + tv_mu + allowance)
    return ResidualReport(node_lhs=lhs, node_rhs=rhs, node_stderr=diff_se,
                          nodewise_pass=nodewise, l1_f_u=l1_f_u, l1_f0=l1_f0,
                          tv_mu=tv_mu, l1_allowance=allowance, l1_pass=l1_pass)
