"""Config-driven batch front door: solve, verify, convergence.

Exit codes: 0 success, 1 config/input error, 2 solver non-convergence or
censoring, 3 verification failure.  Reruns with the same config and seed
write byte-identical CSVs regardless of --threads.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import backend, bsde, kernels, regularity
from .domains import Ball, Box, FullSpace, Interval
from .expressions import ExpressionError, compile_driver, compile_scalar_field
from .fields import SolutionField
from .measures import MeasureData, MeasureError, Nonlinearity, total_variation
from .operators import (DivergenceForm, FractionalLaplacian, OperatorError,
                        OrnsteinUhlenbeck, validate)
from .paths import CensoringError, SimConfig, sample_path
from .solver import (MonotonicityError, PicardConfig,
                     PicardNonConvergenceError, picard_solve)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "operator": {"preset", "a", "b", "c", "d_field", "alpha", "scale", "drift",
                 "A", "Q", "lambda"},
    "domain": {"kind", "a", "b", "lo", "hi", "center", "radius", "dim"},
    "measure": {"density", "atoms"},
    "nonlinearity": {"f", "declared_monotone"},
    "sim": {"dt", "paths", "seed", "max_horizon"},
    "picard": {"tolerance", "max_iterations", "damping", "crn", "measure_mode",
               "cells", "epsilon", "clip_factor"},
    "grid": {"n", "box_halfwidth"},
    "probe": {"x"},
    "verify": {"horizons", "k_values", "checkpoints", "energy_tolerance",
               "duality_tolerance"},
    "output": {"dir"},
}


def load_config(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}")
    for section, table in cfg.items():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(table) - _KNOWN_KEYS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cfg


@dataclass
class Run:
    spec: object
    domain: object
    mu: MeasureData
    f: Nonlinearity
    sim: SimConfig
    pic: PicardConfig
    grid_n: int
    grid_box: object
    probe: np.ndarray
    out_dir: Path
    verify_cfg: dict


def _build_domain(cfg: dict):
    table = cfg.get("domain", {})
    kind = table.get("kind", "interval")
    if kind == "interval":
        return Interval(float(table.get("a", 0.0)), float(table.get("b", 1.0)))
    if kind == "box":
        return Box(tuple(table["lo"]), tuple(table["hi"]))
    if kind == "ball":
        return Ball(tuple(table["center"]), float(table["radius"]))
    if kind == "fullspace":
        return FullSpace(int(table.get("dim", 1)))
    raise ConfigError(f"unknown domain kind {kind!r}")


def _field_or_const(value, dim, what):
    if value is None:
        return None
    if isinstance(value, str):
        try:
            return compile_scalar_field(value, dim)
        except ExpressionError as exc:
            raise ConfigError(f"bad {what} expression: {exc}")
    return value


def _vector_or_expr(value, dim, what):
    if value is None:
        return None
    if isinstance(value, list) and value and isinstance(value[0], str):
        comps = [compile_scalar_field(v, dim) for v in value]

        def vec(pts):
            return np.stack([c(pts) for c in comps], axis=-1)

        return vec
    if isinstance(value, str):
        raise ConfigError(f"{what} must be a numeric vector or a list of "
                          "component expressions")
    return np.asarray(value, dtype=np.float64)


def _build_operator(cfg: dict, domain):
    table = cfg.get("operator", {})
    preset = table.get("preset", "divergence")
    dim = domain.dim
    if preset == "divergence":
        a = table.get("a", 1.0)
        if isinstance(a, list):
            a = np.asarray(a, dtype=np.float64)
        elif isinstance(a, str):
            a_expr = compile_scalar_field(a, dim)

            def a_fn(pts, _e=a_expr):
                vals = _e(pts)
                eye = np.eye(dim)
                return vals[:, None, None] * eye

            a = a_fn
        return DivergenceForm(a=a,
                              b=_vector_or_expr(table.get("b"), dim, "b"),
                              c=_field_or_const(table.get("c"), dim, "c"),
                              d_field=_vector_or_expr(table.get("d_field"), dim, "d_field"))
    if preset == "fractional":
        return FractionalLaplacian(alpha=float(table.get("alpha", 1.0)),
                                   scale=float(table.get("scale", 1.0)),
                                   drift=_vector_or_expr(table.get("drift"), dim, "drift"))
    if preset == "ou":
        return OrnsteinUhlenbeck(A=np.asarray(table.get("A", [[-1.0]]), dtype=np.float64),
                                 Q=np.asarray(table.get("Q", [[1.0]]), dtype=np.float64),
                                 lam=float(table.get("lambda", 1.0)))
    raise ConfigError(f"unknown operator preset {preset!r}")


def _build_measure(cfg: dict, dim: int) -> MeasureData:
    table = cfg.get("measure", {})
    dens = table.get("density")
    density = None
    if dens is not None:
        density = compile_scalar_field(str(dens), dim)
    atoms = tuple((tuple(np.atleast_1d(np.asarray(entry[:-1], dtype=np.float64))), float(entry[-1]))
                  for entry in table.get("atoms", []))
    return MeasureData(density=density, atoms=atoms)


def _build_driver(cfg: dict, dim: int) -> Nonlinearity:
    table = cfg.get("nonlinearity", {})
    expr = table.get("f")
    declared = bool(table.get("declared_monotone", True))
    if expr is None:
        return Nonlinearity(f=lambda pts, y: np.zeros(
            np.broadcast_shapes(pts.shape[:-1], np.shape(y))),
            declared_monotone=True)
    try:
        fn = compile_driver(str(expr), dim)
    except ExpressionError as exc:
        raise ConfigError(f"bad nonlinearity expression: {exc}")
    return Nonlinearity(f=fn, declared_monotone=declared)


def build_run(cfg: dict, overrides: argparse.Namespace) -> Run:
    domain = _build_domain(cfg)
    spec = _build_operator(cfg, domain)
    mu = _build_measure(cfg, domain.dim)
    f = _build_driver(cfg, domain.dim)

    sim_t = cfg.get("sim", {})
    sim = SimConfig(dt=float(sim_t.get("dt", 1e-3)),
                    max_horizon=float(sim_t.get("max_horizon", 50.0)),
                    seed=int(sim_t.get("seed", 0)),
                    paths=int(sim_t.get("paths", 10000)))
    pic_t = cfg.get("picard", {})
    pic = PicardConfig(tolerance=float(pic_t.get("tolerance", 5e-4)),
                       max_iterations=int(pic_t.get("max_iterations", 60)),
                       damping=float(pic_t.get("damping", 0.5)),
                       crn=bool(pic_t.get("crn", True)),
                       measure_mode=str(pic_t.get("measure_mode", "auto")),
                       cells_per_axis=int(pic_t.get("cells", 2000)),
                       epsilon=(float(pic_t["epsilon"]) if "epsilon" in pic_t else None),
                       clip_factor=float(pic_t.get("clip_factor", 4.0)))
    grid_t = cfg.get("grid", {})
    grid_n = int(grid_t.get("n", 21))
    grid_box = None
    if "box_halfwidth" in grid_t:
        half = np.broadcast_to(np.asarray(grid_t["box_halfwidth"], dtype=np.float64),
                               (domain.dim,)).astype(np.float64)
        grid_box = (-half, half)
    probe_t = cfg.get("probe", {})
    probe = np.atleast_1d(np.asarray(probe_t.get("x", _default_probe(domain)),
                                     dtype=np.float64))
    out_dir = Path(cfg.get("output", {}).get("dir", "out"))

    # command-line overrides
    if overrides.seed is not None:
        sim = replace(sim, seed=overrides.seed)
    if overrides.paths is not None:
        sim = replace(sim, paths=overrides.paths)
    if overrides.dt is not None:
        sim = replace(sim, dt=overrides.dt)
    if overrides.grid is not None:
        grid_n = overrides.grid
    if overrides.out is not None:
        out_dir = Path(overrides.out)
    return Run(spec=spec, domain=domain, mu=mu, f=f, sim=sim, pic=pic,
               grid_n=grid_n, grid_box=grid_box, probe=probe, out_dir=out_dir,
               verify_cfg=cfg.get("verify", {}))


def _default_probe(domain):
    if isinstance(domain, Interval):
        return [0.5 * (domain.a + domain.b)]
    if isinstance(domain, (Box, Ball)):
        return list(0.5 * (np.asarray(domain.lo) + np.asarray(domain.hi)))
    return [0.0] * domain.dim


def _fmt(v) -> str:
    return repr(float(v))


def write_solution_csv(path: Path, field: SolutionField, stderr: np.ndarray):
    nodes = field.node_points()
    dim = nodes.shape[1]
    header = ",".join(f"x{k+1}" for k in range(dim)) + ",u,stderr"
    lines = [header]
    uu = field.values.ravel()
    ss = np.asarray(stderr).ravel()
    for i in range(nodes.shape[0]):
        coords = ",".join(_fmt(c) for c in nodes[i])
        lines.append(f"{coords},{_fmt(uu[i])},{_fmt(ss[i])}")
    path.write_text("\n".join(lines) + "\n")


def read_solution_csv(path: Path, run: Run) -> tuple:
    if not path.exists():
        raise ConfigError(f"missing solution artifact {path}; run solve first "
                          "or pass --solve-inline")
    rows = path.read_text().strip().splitlines()
    dim = run.domain.dim
    data = np.array([[float(v) for v in line.split(",")] for line in rows[1:]])
    if data.shape[0] != run.grid_n ** dim:
        raise ConfigError(f"solution artifact has {data.shape[0]} rows but the "
                          f"config grid wants {run.grid_n ** dim}")
    field = SolutionField(run.domain, run.grid_n, data[:, dim], box=run.grid_box)
    stderr = data[:, dim + 1].reshape(field.values.shape)
    return field, stderr


def _dump_paths(run: Run, out: Path, count: int = 25):
    lines = ["path_index,t," + ",".join(f"x{k+1}" for k in range(run.domain.dim))]
    for p in range(count):
        ps = sample_path(run.spec, run.domain, run.probe, run.sim, p)
        for t, state in zip(ps.times, ps.states):
            coords = ",".join(_fmt(c) for c in np.atleast_1d(state))
            lines.append(f"{p},{_fmt(t)},{coords}")
    (out / "paths.csv").write_text("\n".join(lines) + "\n")


def run_solve(args) -> int:
    try:
        cfg = load_config(Path(args.config))
        run = build_run(cfg, args)
    except (ConfigError, OperatorError, MeasureError, ExpressionError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        field, report = picard_solve(run.spec, run.domain, run.f, run.mu,
                                     run.sim, run.pic, grid_n=run.grid_n,
                                     threads=args.threads,
                                     grid_box=run.grid_box)
    except (MonotonicityError, OperatorError, kernels.KernelError, MeasureError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PicardNonConvergenceError, CensoringError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_solution_csv(run.out_dir / "solution.csv", field, report.stderr)
    u_probe = float(field.evaluate(run.probe.reshape(1, -1))[0])
    payload = {
        "backend": backend.active_backend_name(),
        "clip_bound": report.clip_bound,
        "grid_n": run.grid_n,
        "iterations": report.iterations,
        "l1_f_u": report.l1_f_u,
        "max_censored_fraction": report.max_censored_fraction,
        "measure_mode": report.measure_mode,
        "probe": [float(v) for v in run.probe],
        "seed": run.sim.seed,
        "sup_residuals": report.sup_residuals,
        "tv_mu": report.tv_mu,
        "u_probe": u_probe,
        "warnings": report.warnings,
    }
    (run.out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.dump_paths:
        _dump_paths(run, run.out_dir)
    print(f"solved in {report.iterations} iterations; "
          f"u(probe) = {u_probe:.6g}; artifacts in {run.out_dir}")
    return EXIT_OK


_ALL_CHECKS = ("l1", "energy", "duality", "martingale", "horizon")


def run_verify(args) -> int:
    try:
        cfg = load_config(Path(args.config))
        run = build_run(cfg, args)
        checks = [c for c in (args.checks.split(",") if args.checks else [])
                  if c]
        unknown = set(checks) - set(_ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
    except (ConfigError, OperatorError, MeasureError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not checks:
        print("warning: no checks selected; nothing to do")
        return EXIT_OK
    run.out_dir.mkdir(parents=True, exist_ok=True)
    if args.solve_inline:
        rc = run_solve(args)
        if rc != EXIT_OK:
            return rc
    try:
        field, stderr = read_solution_csv(run.out_dir / "solution.csv", run)
    except ConfigError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    failures = []
    summary = {}
    vcfg = run.verify_cfg
    try:
        if "l1" in checks:
            rep = regularity.l1_estimate_check(field, run.f, run.mu, run.domain,
                                               spec=run.spec, stderr=stderr)
            summary["l1"] = {"l1_f_u": rep.l1_f_u, "l1_f0": rep.l1_f0,
                             "tv_mu": rep.tv_mu, "allowance": rep.allowance,
                             "pass": rep.passed}
            if not rep.passed:
                failures.append("l1")
        if "energy" in checks:
            kmax = field.max_abs()
            k_values = vcfg.get("k_values") or [kmax, kmax / 2.0, kmax / 4.0]
            rep = regularity.energy_estimate_check(
                field, run.spec, run.domain, run.f, run.mu, k_values,
                tolerance=float(vcfg.get("energy_tolerance", 0.05)))
            lines = ["k,energy,bound,pass"]
            for k, e, b in zip(rep.k_values, rep.energies, rep.bounds):
                ok = e <= b * (1 + rep.tolerance) + 1e-14
                lines.append(f"{_fmt(k)},{_fmt(e)},{_fmt(b)},{int(ok)}")
            (run.out_dir / "energy.csv").write_text("\n".join(lines) + "\n")
            summary["energy"] = {"pass": rep.passed, "alt_pass": rep.alt_passed}
            if not rep.passed:
                failures.append("energy")
        if "duality" in checks:
            kern = kernels.exact_kernel_for(run.spec, run.domain)
            if kern is None:
                raise kernels.KernelError("duality check needs an exact kernel "
                                          "(interval divergence preset)")
            rep = regularity.duality_check(
                field, run.f, run.mu, kern,
                tolerance=float(vcfg.get("duality_tolerance", 1e-2)))
            lines = ["nu_id,lhs,rhs,residual"]
            for r in rep.rows:
                lines.append(f"{r.nu_id},{_fmt(r.lhs)},{_fmt(r.rhs)},{_fmt(r.residual)}")
            (run.out_dir / "duality.csv").write_text("\n".join(lines) + "\n")
            summary["duality"] = {"pass": rep.passed,
                                  "max_residual": max((r.residual for r in rep.rows),
                                                      default=float("nan"))}
            if not rep.passed:
                failures.append("duality")
        if "martingale" in checks:
            base_se = float(SolutionField(run.domain, run.grid_n, stderr,
                                          box=run.grid_box).evaluate(
                run.probe.reshape(1, -1))[0])
            rep = bsde.martingale_residual(field, run.spec, run.domain,
                                           run.probe, run.f, run.mu, run.sim,
                                           run.pic, threads=args.threads,
                                           base_stderr=base_se)
            lines = ["t,mean,stderr"]
            for t, m, s in zip(rep.checkpoint_times, rep.ensemble_means, rep.stderr):
                lines.append(f"{_fmt(t)},{_fmt(m)},{_fmt(s)}")
            (run.out_dir / "martingale.csv").write_text("\n".join(lines) + "\n")
            summary["martingale"] = {"pass": rep.passed,
                                     "max_drift": rep.max_drift}
            if not rep.passed:
                failures.append("martingale")
        if "horizon" in checks:
            horizons = vcfg.get("horizons") or [0.05, 0.1, 0.2, 0.4, 0.8]
            rep = bsde.horizon_truncation(run.spec, run.domain, run.probe,
                                          run.f, run.mu, horizons, run.sim,
                                          run.pic, grid_n=run.grid_n,
                                          threads=args.threads)
            lines = ["horizon,estimate,stderr"]
            for r in rep.rungs:
                lines.append(f"{_fmt(r.horizon)},{_fmt(r.value)},{_fmt(r.stderr)}")
            (run.out_dir / "horizon.csv").write_text("\n".join(lines) + "\n")
            summary["horizon"] = {"stabilized": rep.stabilized}
            if not rep.stabilized:
                failures.append("horizon")
    except (OperatorError, kernels.KernelError, MeasureError, CensoringError,
            PicardNonConvergenceError, MonotonicityError) as exc:
        print(f"verification aborted: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    (run.out_dir / "verify_report.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name in checks:
        state = "FAIL" if name in failures else "PASS"
        print(f"[{state}] {name}")
    return EXIT_VERIFY if failures else EXIT_OK


def run_convergence(args) -> int:
    try:
        cfg = load_config(Path(args.config))
        run = build_run(cfg, args)
        ladder = [float(v) for v in args.ladder.split(",") if v]
        if len(ladder) < 2:
            raise ConfigError("a convergence ladder needs at least two rungs")
        diffs = np.diff(ladder)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError("ladder must be strictly monotone")
    except (ConfigError, OperatorError, MeasureError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    try:
        for rung in ladder:
            sim, pic, grid_n, cap = run.sim, run.pic, run.grid_n, None
            allow = False
            if args.axis == "dt":
                sim = replace(sim, dt=rung)
            elif args.axis == "paths":
                sim = replace(sim, paths=int(rung))
            elif args.axis == "grid":
                grid_n = int(rung)
            elif args.axis == "horizon":
                cap = rung
                allow = True
                pic = replace(pic, measure_mode="pathwise")
            elif args.axis == "epsilon":
                # bandwidth policy: eps = 2 sqrt(dt) <=> dt = (eps/2)^2
                sim = replace(sim, dt=(rung / 2.0) ** 2)
                pic = replace(pic, epsilon=rung, measure_mode="pathwise")
            else:
                raise ConfigError(f"unknown axis {args.axis!r}")
            field, report = picard_solve(run.spec, run.domain, run.f, run.mu,
                                         sim, pic, grid_n=grid_n,
                                         threads=args.threads,
                                         grid_box=run.grid_box, cap=cap,
                                         allow_censoring=allow)
            est = float(field.evaluate(run.probe.reshape(1, -1))[0])
            se = float(field.copy_with(report.stderr).evaluate(
                run.probe.reshape(1, -1))[0])
            rows.append((rung, est, se))
            print(f"{args.axis}={rung:g}: estimate={est:.6g} stderr={se:.3g}")
    except (MonotonicityError, OperatorError, kernels.KernelError, MeasureError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PicardNonConvergenceError, CensoringError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    lines = ["axis_value,estimate,stderr"]
    for rung, est, se in rows:
        lines.append(f"{_fmt(rung)},{_fmt(est)},{_fmt(se)}")
    (run.out_dir / "convergence.csv").write_text("\n".join(lines) + "\n")
    (_, e1, s1), (_, e2, s2) = rows[-2], rows[-1]
    agree = abs(e2 - e1) <= 3.0 * float(np.hypot(s1, s2)) + 1e-12
    print(f"final rungs agree within 3 combined stderr: {agree}")
    return EXIT_OK if agree else EXIT_VERIFY


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="measurefk",
        description="Monte Carlo solver and estimate checker for semilinear "
                    "elliptic equations with measure data")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--grid", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default=None)
        p.add_argument("--dump-paths", action="store_true")

    p_solve = sub.add_parser("solve", help="run the Picard solver")
    common(p_solve)
    p_verify = sub.add_parser("verify", help="check estimates on a solution")
    common(p_verify)
    p_verify.add_argument("--checks", default="",
                          help=f"comma list from {','.join(_ALL_CHECKS)}")
    p_verify.add_argument("--solve-inline", action="store_true")
    p_conv = sub.add_parser("convergence", help="sweep a resolution axis")
    common(p_conv)
    p_conv.add_argument("--axis", required=True,
                        choices=["dt", "paths", "grid", "horizon", "epsilon"])
    p_conv.add_argument("--ladder", required=True,
                        help="comma-separated strictly monotone values")

    args = parser.parse_args(argv)
    if args.command == "solve":
        return run_solve(args)
    if args.command == "verify":
        return run_verify(args)
    return run_convergence(args)


if __name__ == "__main__":
    sys.exit(main())
