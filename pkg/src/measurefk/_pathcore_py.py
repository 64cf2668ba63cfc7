"""Pure-numpy path kernel: reference implementation and import-time fallback.

Paths evolve in lockstep (all alive paths share the step index), so the
Philox counter of every draw is a pure function of (seed, path, step) and the
batch is embarrassingly vectorizable.  The compiled kernel in
``_pathcore.pyx`` walks the same arithmetic per path; both fill per-path
result slots, so aggregation order never depends on scheduling.
"""

from __future__ import annotations

import numpy as np

from . import rng
from ._packing import (BatchResult, CellGrid, DIFFUSION, DOM_BALL, DOM_BOX,
                       DOM_FULL, EXIT_BOUNDARY, EXIT_CENSORED, EXIT_CLOCK,
                       EXIT_JUMP, OU, PackedDomain, PackedProcess, STABLE)
from .operators import eval_matrix, eval_scalar, eval_vector

BACKEND_NAME = "numpy"


def _step_uniforms(seed: int, ids: np.ndarray, step: int, n_draws: int) -> np.ndarray:
    """Uniform draws [step*U, step*U + U) for every path id; one Philox call
    per distinct 4-word block."""
    first = step * n_draws
    out = np.empty((ids.shape[0], n_draws))
    blocks = {}
    for j in range(n_draws):
        dj = first + j
        b = dj >> 2
        if b not in blocks:
            blocks[b] = rng.philox4x64(np.uint64(b), np.uint64(rng.SUB_MAIN),
                                       ids, np.uint64(0), np.uint64(seed),
                                       np.uint64(0))
        w = blocks[b][dj & 3]
        out[:, j] = (w >> np.uint64(11)).astype(np.float64) * (2.0 ** -53) + 2.0 ** -54
    return out


def _clock_thresholds(seed: int, ids: np.ndarray) -> np.ndarray:
    u = rng.uniform_draw(seed, ids, 0, substream=rng.SUB_CLOCK)
    return -np.log(u)


def _symmetric_stable(alpha: float, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Chambers-Mallows-Stuck draw with characteristic function exp(-|xi|^alpha)."""
    theta = np.pi * (u1 - 0.5)
    w = -np.log(u2)
    if alpha == 1.0:
        return np.tan(theta)
    return (np.sin(alpha * theta) / np.cos(theta) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha))


def _positive_stable(rho: float, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """One-sided rho-stable with Laplace transform exp(-lambda^rho) (Zolotarev)."""
    theta = np.pi * u1
    w = -np.log(u2)
    a = (np.sin(rho * theta) ** rho * np.sin((1.0 - rho) * theta) ** (1.0 - rho)
         / np.sin(theta)) ** (1.0 / (1.0 - rho))
    return (a / w) ** ((1.0 - rho) / rho)


def _variable_drift(fields: dict, pts: np.ndarray, dim: int, h: float = 1e-6) -> np.ndarray:
    """First-order generator coefficients: sum_i d_i a_ij + (d_field - b)."""
    drift = eval_vector(fields.get("d_field"), pts, dim) - eval_vector(fields.get("b"), pts, dim)
    a = fields.get("a")
    if callable(a):
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = h
            drift += (eval_matrix(a, pts + e, dim)[:, i, :]
                      - eval_matrix(a, pts - e, dim)[:, i, :]) / (2.0 * h)
    return drift


def _variable_kill(fields: dict, pts: np.ndarray, dim: int, h: float = 1e-6) -> np.ndarray:
    kill = eval_scalar(fields.get("c"), pts)
    dfield = fields.get("d_field")
    if callable(dfield):
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = h
            kill -= (eval_vector(dfield, pts + e, dim)[:, i]
                     - eval_vector(dfield, pts - e, dim)[:, i]) / (2.0 * h)
    return np.maximum(kill, 0.0)


def run_block(proc: PackedProcess, dom: PackedDomain, x0: np.ndarray,
              n_paths: int, path0: int, seed: int, n_steps_cap: int,
              cells: CellGrid = None, wg: np.ndarray = None,
              wmu: np.ndarray = None, want_occ: bool = False,
              chk_steps: np.ndarray = None, record: bool = False):
    """Simulate paths [path0, path0 + n_paths) from x0 and accumulate
    cell-weighted functionals.  Returns (BatchResult, trajectories|None)."""
    d = proc.dim
    dt = proc.dt
    x0 = np.asarray(x0, float).reshape(d)

    lifetime = np.full(n_paths, n_steps_cap * dt)
    exit_kind = np.full(n_paths, EXIT_CENSORED, dtype=np.int8)
    acc_g = np.zeros(n_paths)
    acc_mu = np.zeros(n_paths)
    occ = np.zeros(cells.n_cells) if want_occ and cells is not None else None
    n_chk = 0 if chk_steps is None else len(chk_steps)
    if n_chk:
        chk_state = np.full((n_paths, n_chk, d), np.nan)
        chk_alive = np.zeros((n_paths, n_chk), dtype=np.int8)
        chk_acc_g = np.zeros((n_paths, n_chk))
        chk_acc_mu = np.zeros((n_paths, n_chk))
    trajs = [[x0.copy()] for _ in range(n_paths)] if record else None

    var = proc.var_fields or {}
    has_clock = proc.kind == OU or proc.kill_rate > 0.0 or ("c" in var and var.get("c") is not None)
    slots = np.arange(n_paths, dtype=np.int64)
    ids_all = (np.uint64(path0) + slots.astype(np.uint64))
    thresh = _clock_thresholds(seed, ids_all) if has_clock else None
    rate_acc = np.zeros(n_paths)

    x = np.tile(x0, (n_paths, 1))
    chk_ptr = 0
    k = 0
    use_weights = cells is not None and (wg is not None or wmu is not None or want_occ)

    while slots.size > 0 and k < n_steps_cap:
        while chk_ptr < n_chk and chk_steps[chk_ptr] == k:
            chk_state[slots, chk_ptr, :] = x
            chk_alive[slots, chk_ptr] = 1
            chk_acc_g[slots, chk_ptr] = acc_g[slots]
            chk_acc_mu[slots, chk_ptr] = acc_mu[slots]
            chk_ptr += 1
        m = slots.size
        ids = ids_all[slots]
        un = _step_uniforms(seed, ids, k, proc.draws_per_step)

        event_dt = np.full(m, np.inf)
        event_kind = np.full(m, -1, dtype=np.int8)

        if proc.kind == DIFFUSION:
            z = rng.normal_inv_cdf(un[:, :d])
            if proc.var_fields is None:
                xn = np.empty_like(x)
                for j in range(d):
                    acc = x[:, j] + proc.drift_dt[j]
                    for kk in range(d):
                        acc = acc + proc.step_b[j, kk] * z[:, kk]
                    xn[:, j] = acc
                atil_old = None
                rate_now = np.full(m, proc.kill_rate) if has_clock else None
            else:
                atil_old = var["atil"](x)
                bmat = np.linalg.cholesky(2.0 * atil_old) * np.sqrt(dt)
                drift = _variable_drift(var, x, d)
                xn = np.empty_like(x)
                for j in range(d):
                    acc = x[:, j] + drift[:, j] * dt
                    for kk in range(d):
                        acc = acc + bmat[:, j, kk] * z[:, kk]
                    xn[:, j] = acc
                rate_now = _variable_kill(var, x, d) if has_clock else None
            ub = un[:, d]
            if dom.kind != DOM_FULL:
                crossed, p_return = _boundary_events(proc, dom, x, xn, atil_old, dt)
                exit_mask = crossed | (ub < p_return)
                event_dt = np.where(exit_mask, dt / 2.0, event_dt)
                event_kind = np.where(exit_mask, EXIT_BOUNDARY, event_kind)
        elif proc.kind == STABLE:
            if d == 1:
                s = _symmetric_stable(proc.alpha, un[:, 0], un[:, 1])
                jump = (proc.jump_scale * s)[:, None]
            else:
                v = _positive_stable(proc.alpha / 2.0, un[:, 0], un[:, 1])
                z = rng.normal_inv_cdf(un[:, 2:2 + d])
                jump = proc.jump_scale * np.sqrt(2.0 * v)[:, None] * z
            if proc.var_fields is not None:
                half = 0.5 * dt * np.asarray(var["drift"](x), float).reshape(m, d)
                xn = x + half + jump
                xn = xn + 0.5 * dt * np.asarray(var["drift"](xn), float).reshape(m, d)
            elif proc.drift_half_dt is not None:
                xn = x + proc.drift_half_dt + jump + proc.drift_half_dt
            else:
                xn = x + jump
            rate_now = None
            if dom.kind != DOM_FULL:
                outside = ~_inside(dom, xn)
                event_dt = np.where(outside, dt / 2.0, event_dt)
                event_kind = np.where(outside, EXIT_JUMP, event_kind)
        else:  # OU
            z = rng.normal_inv_cdf(un[:, :d])
            xn = np.empty_like(x)
            for j in range(d):
                acc = np.zeros(m)
                for kk in range(d):
                    acc = acc + proc.ou_e[j, kk] * x[:, kk]
                for kk in range(d):
                    acc = acc + proc.ou_c[j, kk] * z[:, kk]
                xn[:, j] = acc
            rate_now = np.full(m, proc.lam)

        if has_clock and rate_now is not None:
            need = thresh[slots] - rate_acc[slots]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_kill = np.where(rate_now > 0.0, need / rate_now, np.inf)
            clock_hits = t_kill <= np.minimum(event_dt, dt)
            event_dt = np.where(clock_hits, t_kill, event_dt)
            event_kind = np.where(clock_hits, EXIT_CLOCK, event_kind)

        dying = np.isfinite(event_dt)
        dur = np.where(dying, event_dt, dt)

        if use_weights:
            cell = cells.index(x)
            if want_occ:
                np.add.at(occ, cell, dur)
            if wg is not None:
                acc_g[slots] += wg[cell] * dur
            if wmu is not None:
                acc_mu[slots] += wmu[cell] * dur
        if has_clock and rate_now is not None:
            rate_acc[slots] += rate_now * dur

        if np.any(dying):
            dead_slots = slots[dying]
            lifetime[dead_slots] = k * dt + event_dt[dying]
            exit_kind[dead_slots] = event_kind[dying]
            if n_chk and chk_ptr < n_chk:
                chk_acc_g[dead_slots, chk_ptr:] = acc_g[dead_slots, None]
                chk_acc_mu[dead_slots, chk_ptr:] = acc_mu[dead_slots, None]
        keep = ~dying
        slots = slots[keep]
        x = xn[keep]
        if record:
            for slot, pos in zip(slots, x):
                trajs[slot].append(pos.copy())
        k += 1

    # checkpoints at or beyond the cap record censored paths as still alive
    while chk_ptr < n_chk:
        chk_state[slots, chk_ptr, :] = x
        chk_alive[slots, chk_ptr] = 1
        chk_acc_g[slots, chk_ptr] = acc_g[slots]
        chk_acc_mu[slots, chk_ptr] = acc_mu[slots]
        chk_ptr += 1

    res = BatchResult(lifetime=lifetime, exit_kind=exit_kind, acc_g=acc_g,
                      acc_mu=acc_mu, occ=occ)
    if n_chk:
        res.chk_state = chk_state
        res.chk_alive = chk_alive
        res.chk_acc_g = chk_acc_g
        res.chk_acc_mu = chk_acc_mu
    return res, trajs


def _inside(dom: PackedDomain, pts: np.ndarray) -> np.ndarray:
    if dom.kind == DOM_BOX:
        return np.all((pts > dom.lo) & (pts < dom.hi), axis=1)
    if dom.kind == DOM_BALL:
        return np.sum((pts - dom.center) ** 2, axis=1) < dom.radius ** 2
    return np.ones(pts.shape[0], dtype=bool)


def _boundary_events(proc, dom, x, xn, atil_var, dt):
    """(crossed, p_return): position exits and the Brownian-bridge crossing
    probability of the nearest face for paths whose endpoint stayed inside."""
    m = x.shape[0]
    d = x.shape[1]
    crossed = ~_inside(dom, xn)
    if dom.kind == DOM_BOX:
        scores = np.empty((m, 2 * d))
        prods = np.empty((m, 2 * d))
        for j in range(d):
            ann = proc.atil[j, j] if atil_var is None else atil_var[:, j, j]
            d1 = x[:, j] - dom.lo[j]
            d2 = xn[:, j] - dom.lo[j]
            scores[:, 2 * j] = d1 + d2
            prods[:, 2 * j] = d1 * d2 / (ann * dt)
            e1 = dom.hi[j] - x[:, j]
            e2 = dom.hi[j] - xn[:, j]
            scores[:, 2 * j + 1] = e1 + e2
            prods[:, 2 * j + 1] = e1 * e2 / (ann * dt)
        nearest = np.argmin(scores, axis=1)
        rows = np.arange(m)
        with np.errstate(over="ignore"):
            p_return = np.exp(-prods[rows, nearest])
        return crossed, np.where(crossed, 2.0, p_return)
    if dom.kind == DOM_BALL:
        rx = np.sqrt(np.sum((x - dom.center) ** 2, axis=1))
        rn = np.sqrt(np.sum((xn - dom.center) ** 2, axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            normal = np.where(rx[:, None] > 0, (x - dom.center) / np.maximum(rx, 1e-300)[:, None], 0.0)
        normal[rx == 0.0, 0] = 1.0
        if atil_var is None:
            ann = np.einsum("mi,ij,mj->m", normal, proc.atil, normal)
        else:
            ann = np.einsum("mi,mij,mj->m", normal, atil_var, normal)
        d1 = dom.radius - rx
        d2 = dom.radius - rn
        with np.errstate(over="ignore"):
            p_return = np.exp(-d1 * d2 / (ann * dt))
        return crossed, np.where(crossed, 2.0, p_return)
    raise AssertionError("no boundary events on the full space")
