"""Measure data, nonlinearities, mollification, and admissibility probes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .domains import FullSpace, bounding_box, is_bounded
from .operators import LebesgueReference, reference_measure


class MeasureError(ValueError):
    pass


class TVQuadratureError(MeasureError):
    """Raised when the total-variation quadrature does not settle."""


@dataclass(frozen=True)
class MeasureData:
    """Signed measure: density (w.r.t. the operator's reference measure) plus atoms.

    ``density`` is a vectorized callable (m, d) -> (m,) or None; ``atoms`` is a
    tuple of (point, signed weight).  ``knots`` are optional breakpoints of a
    piecewise-smooth density (mollified bumps record their kinks here), so
    quadratures can align panels with them.
    """

    density: Optional[Callable] = None
    atoms: tuple = ()
    knots: tuple = ()

    def __post_init__(self):
        fixed = []
        for p, w in self.atoms:
            fixed.append((tuple(np.atleast_1d(np.asarray(p, dtype=np.float64))), float(w)))
        object.__setattr__(self, "atoms", tuple(fixed))
        object.__setattr__(self, "knots", tuple(sorted(float(k) for k in self.knots)))

    def has_atoms(self) -> bool:
        return len(self.atoms) > 0

    def is_zero(self) -> bool:
        return self.density is None and not self.atoms

    def density_values(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if self.density is None:
            return np.zeros(pts.shape[0])
        return np.asarray(self.density(pts), dtype=np.float64).reshape(pts.shape[0])

    def abs(self) -> "MeasureData":
        dens = self.density
        new_dens = None if dens is None else (lambda pts: np.abs(dens(pts)))
        return MeasureData(density=new_dens,
                           atoms=tuple((p, abs(w)) for p, w in self.atoms),
                           knots=self.knots)

    def scaled(self, factor: float) -> "MeasureData":
        dens = self.density
        new_dens = None if dens is None else (lambda pts: factor * dens(pts))
        return MeasureData(density=new_dens,
                           atoms=tuple((p, factor * w) for p, w in self.atoms),
                           knots=self.knots)

    def __add__(self, other: "MeasureData") -> "MeasureData":
        da, db = self.density, other.density
        if da is None:
            dens = db
        elif db is None:
            dens = da
        else:
            dens = lambda pts: da(pts) + db(pts)
        return MeasureData(density=dens, atoms=self.atoms + other.atoms,
                           knots=self.knots + other.knots)


@dataclass(frozen=True)
class Nonlinearity:
    """Driver f(x, y); monotone means nonincreasing in y."""

    f: Callable
    declared_monotone: bool = True

    def __call__(self, pts, y):
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        y = np.asarray(y, dtype=np.float64)
        out = np.asarray(self.f(pts, y), dtype=np.float64)
        shape = np.broadcast_shapes(pts.shape[:-1], y.shape)
        return np.ascontiguousarray(np.broadcast_to(out, shape))


ZERO_DRIVER = Nonlinearity(f=lambda pts, y: np.zeros(np.broadcast_shapes(pts.shape[:-1], np.shape(y))),
                           declared_monotone=True)


def truncate(c: float, y):
    """Clip to [-c, c]; the truncation operator behind the energy estimates."""
    if c < 0:
        raise MeasureError("truncation level must be nonnegative")
    return np.minimum(np.maximum(y, -c), c)


def _midpoint_grid(lo, hi, n_per_axis):
    dim = lo.size
    axes = [lo[k] + (np.arange(n_per_axis) + 0.5) * (hi[k] - lo[k]) / n_per_axis
            for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    cell = np.prod((hi - lo) / n_per_axis)
    return pts, cell


def _segments(lo: float, hi: float, knots) -> list:
    pts = [lo] + [k for k in knots if lo < k < hi] + [hi]
    return [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]


def _midpoint_1d(fn, ref, lo, hi, knots, n):
    """Composite midpoint with panels aligned to the knots (exact on the
    piecewise-linear parts, so mollified bumps integrate to machine precision)."""
    total = 0.0
    for seg_lo, seg_hi in _segments(lo, hi, knots):
        length = seg_hi - seg_lo
        if length <= 0:
            continue
        m = max(8, int(np.ceil(n * length / (hi - lo))))
        xs = seg_lo + (np.arange(m) + 0.5) * length / m
        pts = xs.reshape(-1, 1)
        vals = np.abs(np.asarray(fn(pts), dtype=np.float64).reshape(-1))
        total += float(np.sum(vals * ref.density(pts)) * length / m)
    return total


def density_l1_norm(fn: Callable, domain, ref=None, rtol: float = 1e-3,
                    box=None, knots=()) -> float:
    """Midpoint quadrature of |fn| d(ref), refined until the value settles."""
    if box is not None:
        lo, hi = np.atleast_1d(np.asarray(box[0], float)), np.atleast_1d(np.asarray(box[1], float))
    else:
        bb = bounding_box(domain)
        if bb is None:
            raise MeasureError("unbounded domain needs an explicit quadrature box")
        lo, hi = bb
    ref = ref if ref is not None else LebesgueReference()
    prev = None
    n = 256
    max_n = 65536 if lo.size == 1 else 1024
    while n <= max_n:
        if lo.size == 1:
            total = _midpoint_1d(fn, ref, float(lo[0]), float(hi[0]), knots, n)
        else:
            pts, cell = _midpoint_grid(lo, hi, n)
            vals = np.abs(np.asarray(fn(pts), dtype=np.float64).reshape(pts.shape[0]))
            total = float(np.sum(vals * ref.density(pts)) * cell)
        if prev is not None and abs(total - prev) <= rtol * max(abs(total), 1e-300):
            return total
        prev = total
        n *= 2
    raise TVQuadratureError("TV quadrature failed: no convergence under refinement "
                            f"(last values {prev:.6g} -> {total:.6g})")


def total_variation(mu: MeasureData, domain, ref=None, rtol: float = 1e-3,
                    box=None) -> float:
    """Integral of |density| d(ref) plus the summed atom magnitudes."""
    total = sum(abs(w) for _, w in mu.atoms)
    if mu.density is not None:
        total += density_l1_norm(mu.density, domain, ref=ref, rtol=rtol, box=box,
                                 knots=mu.knots)
    return float(total)


def _hat_mass(center, eps, lo, hi):
    """Exact integral of the unit hat of half-width eps clipped to [lo, hi]."""
    def ramp_area(lo_t, hi_t):
        # area under (1 - |t|) for t in [lo_t, hi_t] within [-1, 1]
        lo_t, hi_t = max(lo_t, -1.0), min(hi_t, 1.0)
        if hi_t <= lo_t:
            return 0.0
        def anti(t):
            return t - 0.5 * t * abs(t)
        return anti(hi_t) - anti(lo_t)
    return eps * ramp_area((lo - center) / eps, (hi - center) / eps)


def mollify(mu: MeasureData, epsilon: float, domain=None) -> MeasureData:
    """Replace atoms by triangular bumps of half-width epsilon, mass preserved.

    Bumps are clipped to the domain's bounding box and renormalized, so the
    total variation is conserved exactly for atoms of one sign per bump.
    """
    if epsilon <= 0:
        raise MeasureError("mollification bandwidth must be positive")
    if not mu.atoms:
        return mu
    bb = bounding_box(domain) if domain is not None else None
    bumps = []
    for p, w in mu.atoms:
        point = np.asarray(p, dtype=np.float64)
        dim = point.size
        masses = []
        for k in range(dim):
            lo_k = bb[0][k] if bb is not None else -np.inf
            hi_k = bb[1][k] if bb is not None else np.inf
            m = _hat_mass(point[k], epsilon, lo_k, hi_k)
            if m <= 0:
                raise MeasureError(f"atom at {tuple(point)} lies outside the mollification support")
            masses.append(m)
        scale = w / np.prod(masses)
        bumps.append((point, scale, dim))

    base = mu.density

    def bump_density(pts):
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        out = np.zeros(pts.shape[0]) if base is None else np.asarray(
            base(pts), dtype=np.float64).reshape(pts.shape[0]).copy()
        for point, scale, dim in bumps:
            hat = np.ones(pts.shape[0])
            for k in range(dim):
                hat = hat * np.maximum(0.0, 1.0 - np.abs(pts[:, k] - point[k]) / epsilon)
            out += scale * hat
        return out

    knots = list(mu.knots)
    for point, _, dim in bumps:
        if dim == 1:
            knots.extend((point[0] - epsilon, point[0], point[0] + epsilon))
    return MeasureData(density=bump_density, atoms=(), knots=tuple(knots))


def check_monotone(f: Nonlinearity, domain, n_samples: int = 256,
                   tol: float = 1e-12, y_range: float = 100.0) -> bool:
    """Statistical check of (f(x,y1)-f(x,y2))(y1-y2) <= 0 on quasi-random triples."""
    if n_samples < 100:
        raise MeasureError("monotonicity check needs at least 100 samples")
    bb = bounding_box(domain)
    if bb is None:
        lo = -5.0 * np.ones(domain.dim)
        hi = 5.0 * np.ones(domain.dim)
    else:
        lo, hi = bb
    dim = lo.size
    alphas = np.sqrt(np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29], dtype=np.float64))
    i = np.arange(1, n_samples + 1).reshape(-1, 1)
    seq = np.mod(0.5 + i * alphas[:dim + 2], 1.0)
    pts = lo + seq[:, :dim] * (hi - lo)
    y1 = (2.0 * seq[:, dim] - 1.0) * y_range
    y2 = (2.0 * seq[:, dim + 1] - 1.0) * y_range
    lhs = (f(pts, y1) - f(pts, y2)) * (y1 - y2)
    return bool(np.max(lhs) <= tol)


@dataclass
class ClassRReport:
    probe_points: list
    values: list
    tv: float
    in_class: bool
    notes: list = field(default_factory=list)


def is_class_R(mu: MeasureData, spec, domain, probe_points, kernel=None,
               sim=None, box=None) -> ClassRReport:
    """Finite-potential surrogate: evaluates R|mu| at probe points.

    Uses the exact kernel when one is supplied, otherwise a Monte Carlo
    additive-functional estimate with a doubled-horizon stability check.
    """
    from . import kernels as _kernels

    absmu = mu.abs()
    probes = [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in probe_points]
    notes = []
    try:
        tv = total_variation(mu, domain, ref=reference_measure(spec), box=box)
    except TVQuadratureError:
        tv = float("inf")
        notes.append("total variation quadrature diverges; measure has infinite mass")

    values = []
    diverged = False
    if kernel is not None:
        for p in probes:
            values.append(float(_kernels.potential_Rmu(kernel, absmu, float(p[0]))))
    else:
        if sim is None:
            raise MeasureError("no exact kernel: a SimConfig is needed for the "
                               "Monte Carlo potential probe")
        from .paths import mc_potential_probe
        for p in probes:
            est_full, est_half = mc_potential_probe(spec, domain, p, absmu, sim)
            values.append(est_full)
            if not np.isfinite(est_full) or est_full > 1.5 * est_half + 0.01:
                diverged = True
    finite = all(np.isfinite(v) for v in values)
    if not finite or diverged:
        notes.append("potential estimate grows under horizon extension")
    return ClassRReport(probe_points=[tuple(p) for p in probes], values=values,
                        tv=tv, in_class=finite and not diverged, notes=notes)
