"""Packed, backend-neutral descriptions of processes, domains, and cell grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .domains import Ball, Box, FullSpace, Interval
from .operators import (DivergenceForm, FractionalLaplacian, OperatorError,
                        OrnsteinUhlenbeck, eval_matrix, eval_scalar,
                        eval_vector, generator_diffusion_matrix, ou_transition,
                        sym_part)

# process kinds
DIFFUSION = 0
STABLE = 1
OU = 2

# exit kinds
EXIT_BOUNDARY = 0
EXIT_JUMP = 1
EXIT_CLOCK = 2
EXIT_CENSORED = 3

EXIT_NAMES = {EXIT_BOUNDARY: "boundary-exit", EXIT_JUMP: "jump-overshoot",
              EXIT_CLOCK: "killing-clock", EXIT_CENSORED: "horizon-cap"}

# domain kinds
DOM_BOX = 0
DOM_BALL = 1
DOM_FULL = 2


@dataclass(frozen=True)
class PackedDomain:
    kind: int
    dim: int
    lo: np.ndarray
    hi: np.ndarray
    center: np.ndarray
    radius: float


def pack_domain(domain) -> PackedDomain:
    d = domain.dim
    if isinstance(domain, (Interval, Box)):
        return PackedDomain(DOM_BOX, d, np.asarray(domain.lo, float),
                            np.asarray(domain.hi, float), np.zeros(d), 0.0)
    if isinstance(domain, Ball):
        return PackedDomain(DOM_BALL, d, np.asarray(domain.lo, float),
                            np.asarray(domain.hi, float),
                            np.asarray(domain.center, float), float(domain.radius))
    if isinstance(domain, FullSpace):
        z = np.zeros(d)
        return PackedDomain(DOM_FULL, d, z, z, z, 0.0)
    raise OperatorError(f"unsupported domain {type(domain).__name__}")


@dataclass(frozen=True)
class CellGrid:
    """Uniform rectangular cells used for occupation-time accumulation."""

    lo: np.ndarray
    hi: np.ndarray
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, float)))

    @property
    def dim(self):
        return self.lo.size

    @property
    def n_cells(self):
        return int(np.prod(self.shape))

    @property
    def widths(self):
        return (self.hi - self.lo) / np.asarray(self.shape, float)

    @property
    def strides(self):
        s = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            s[k] = s[k + 1] * self.shape[k + 1]
        return s

    def index(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float).reshape(-1, self.dim)
        idx = np.floor((pts - self.lo) / self.widths).astype(np.int64)
        np.clip(idx, 0, np.asarray(self.shape, dtype=np.int64) - 1, out=idx)
        return idx @ self.strides

    def centers(self) -> np.ndarray:
        axes = [self.lo[k] + (np.arange(self.shape[k]) + 0.5) * self.widths[k]
                for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def cell_grid_for(domain, n_cells_per_axis: int, box=None) -> CellGrid:
    if box is not None:
        lo, hi = box
    else:
        if isinstance(domain, FullSpace):
            raise OperatorError("full-space runs need an explicit cell box")
        lo, hi = domain.lo, domain.hi
    dim = np.atleast_1d(np.asarray(lo, float)).size
    return CellGrid(lo, hi, (int(n_cells_per_axis),) * dim)


@dataclass(frozen=True)
class PackedProcess:
    kind: int
    dim: int
    dt: float
    draws_per_step: int
    # constant-coefficient diffusion
    step_b: Optional[np.ndarray] = None      # chol(2*atil) * sqrt(dt)
    drift_dt: Optional[np.ndarray] = None
    atil: Optional[np.ndarray] = None
    kill_rate: float = 0.0
    # stable jumps
    alpha: float = 0.0
    jump_scale: float = 0.0                  # (scale*dt)^(1/alpha)
    drift_half_dt: Optional[np.ndarray] = None
    # OU exact transition
    ou_e: Optional[np.ndarray] = None
    ou_c: Optional[np.ndarray] = None
    lam: float = 0.0
    # variable-coefficient callbacks (python backend only)
    var_fields: Optional[dict] = None

    @property
    def needs_python(self) -> bool:
        return self.var_fields is not None


def _chol_psd(mat: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(mat)
        w = np.clip(w, 0.0, None)
        return v @ np.diag(np.sqrt(w))


def pack_process(spec, domain, dt: float) -> PackedProcess:
    """Freeze a spec into per-step arrays; constant-coefficient cases are
    eligible for the compiled kernel, callable coefficients stay in python."""
    d = domain.dim
    if isinstance(spec, DivergenceForm):
        if spec.is_constant():
            pts = np.zeros((1, d))
            atil = generator_diffusion_matrix(spec, pts, d)[0]
            bvec = eval_vector(spec.b, pts, d)[0]
            dvec = eval_vector(spec.d_field, pts, d)[0]
            cval = float(eval_scalar(spec.c, pts)[0])
            drift = dvec - bvec
            step_b = _chol_psd(2.0 * atil) * np.sqrt(dt)
            return PackedProcess(DIFFUSION, d, dt, d + 1, step_b=step_b,
                                 drift_dt=drift * dt, atil=atil, kill_rate=cval)
        fields = {
            "atil": lambda pts, s=spec: generator_diffusion_matrix(s, pts, pts.shape[1]),
            "a": spec.a, "b": spec.b, "c": spec.c, "d_field": spec.d_field,
        }
        return PackedProcess(DIFFUSION, d, dt, d + 1, var_fields=fields)
    if isinstance(spec, FractionalLaplacian):
        jump = (spec.scale * dt) ** (1.0 / spec.alpha)
        draws = 2 if d == 1 else 2 + d
        if spec.drift is None:
            return PackedProcess(STABLE, d, dt, draws, alpha=spec.alpha,
                                 jump_scale=jump)
        if not callable(spec.drift):
            half = np.broadcast_to(np.asarray(spec.drift, float), (d,)) * (dt / 2.0)
            return PackedProcess(STABLE, d, dt, draws, alpha=spec.alpha,
                                 jump_scale=jump, drift_half_dt=half.copy())
        return PackedProcess(STABLE, d, dt, draws, alpha=spec.alpha,
                             jump_scale=jump, var_fields={"drift": spec.drift})
    if isinstance(spec, OrnsteinUhlenbeck):
        E, Qdt = ou_transition(spec, dt)
        return PackedProcess(OU, d, dt, d, ou_e=E, ou_c=_chol_psd(Qdt),
                             lam=float(spec.lam))
    raise OperatorError(f"unsupported operator {type(spec).__name__}")


@dataclass
class BatchResult:
    """Per-path outputs of one kernel call over a block of paths."""

    lifetime: np.ndarray
    exit_kind: np.ndarray
    acc_g: np.ndarray
    acc_mu: np.ndarray
    occ: Optional[np.ndarray] = None
    chk_state: Optional[np.ndarray] = None    # (n, n_chk, d)
    chk_alive: Optional[np.ndarray] = None    # (n, n_chk) int8
    chk_acc_g: Optional[np.ndarray] = None
    chk_acc_mu: Optional[np.ndarray] = None
    chk_times: Optional[np.ndarray] = None    # snapped checkpoint times
