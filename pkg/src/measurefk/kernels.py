"""Exact Green kernels and potentials: the deterministic oracle backbone.

Only two closed forms are shipped: the interval kernel of s*(d^2/dx^2) and
the exit-time moment of the isotropic stable process on a ball.  Everything
else (drift adjoints, higher dimensions) goes through dense finite-difference
inverses used purely as oracles, so the Monte Carlo code under test never
feeds its own verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domains import Interval
from .measures import MeasureData
from .operators import (DivergenceForm, FractionalLaplacian, OperatorError,
                        eval_matrix, eval_scalar, eval_vector)


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class IntervalLaplacian:
    """Green kernel of the generator s * d^2/dx^2 with Dirichlet ends."""

    a: float
    b: float
    diffusion_scale: float = 1.0

    def __post_init__(self):
        if self.diffusion_scale <= 0:
            raise KernelError("diffusion scale must be positive")
        if not self.a < self.b:
            raise KernelError("interval kernel requires a < b")


@dataclass(frozen=True)
class StableExitMoment:
    """Expected lifetime of the killed isotropic alpha-stable process on a ball."""

    alpha: float
    radius: float
    dim: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise KernelError("alpha must lie in (0, 2)")
        if self.radius <= 0:
            raise KernelError("radius must be positive")


def green_interval(kernel: IntervalLaplacian, x, y):
    """G(x, y) = ((x^y) - a)(b - (x|y)) / (s (b - a)) on the open interval."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(x <= kernel.a) or np.any(x >= kernel.b) \
            or np.any(y <= kernel.a) or np.any(y >= kernel.b):
        raise KernelError("kernel arguments must lie in the open interval")
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    val = (lo - kernel.a) * (kernel.b - hi) / (kernel.diffusion_scale * (kernel.b - kernel.a))
    return float(val) if val.ndim == 0 else val


def _split_quadrature(fn, a, b, splits, n=2048):
    """Composite Simpson with panels split at every kink in ``splits``;
    exact for piecewise-polynomial integrands aligned with the splits."""
    cuts = [a] + sorted(s for s in set(splits) if a < s < b) + [b]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0:
            continue
        m = max(16, int(np.ceil(n * (hi - lo) / (b - a))))
        xs = np.linspace(lo, hi, 2 * m + 1)
        w = np.ones(2 * m + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        total += (hi - lo) / (6.0 * m) * float(np.sum(w * fn(xs)))
    return total


def potential_Rmu(kernel, mu: MeasureData, x) -> float:
    """Potential of the measure: integral of G(x, .) against mu."""
    if isinstance(kernel, IntervalLaplacian):
        x = float(np.atleast_1d(x)[0])
        total = 0.0
        for p, w in mu.atoms:
            total += w * green_interval(kernel, x, float(p[0]))
        if mu.density is not None:
            total += _split_quadrature(
                lambda ys: green_interval(kernel, x, ys) * mu.density_values(ys.reshape(-1, 1)),
                kernel.a + 1e-12, kernel.b - 1e-12, x)
        return float(total)
    if isinstance(kernel, StableExitMoment):
        # only the constant-density potential (the exit moment) is exact here
        if mu.atoms or mu.density is None:
            raise KernelError("no kernel; use the Monte Carlo path estimator")
        probe = np.zeros((1, kernel.dim))
        vals = mu.density_values(probe)
        const = float(vals[0])
        check = mu.density_values(probe + 0.1 * kernel.radius)
        if abs(float(check[0]) - const) > 1e-12 * max(1.0, abs(const)):
            raise KernelError("no kernel; use the Monte Carlo path estimator")
        return const * stable_exit_moment(kernel.alpha, kernel.radius, kernel.dim, x)
    if isinstance(kernel, GridGreenOracle):
        return kernel.potential(mu, x)
    raise KernelError("no kernel; use the Monte Carlo path estimator")


def copotential(kernel, phi, x) -> float:
    """Co-potential: integral of G(., x) against phi(y) dy (transposed kernel)."""
    if isinstance(kernel, IntervalLaplacian):
        x = float(np.atleast_1d(x)[0])
        return _split_quadrature(
            lambda ys: green_interval(kernel, ys, x) * np.asarray(
                phi(ys.reshape(-1, 1)), dtype=np.float64).reshape(-1),
            kernel.a + 1e-12, kernel.b - 1e-12, x)
    if isinstance(kernel, GridGreenOracle):
        return kernel.copotential(phi, x)
    raise KernelError("no kernel; use the Monte Carlo path estimator")


def potential_field_interval(kernel: IntervalLaplacian, dens_values: np.ndarray,
                             nodes: np.ndarray) -> np.ndarray:
    """Potential of a gridded density at every node in O(n) via cumulative sums.

    Solves s u'' = -phi with zero ends:
    u(x) = [(b-x) * int_a^x (y-a) phi + (x-a) * int_x^b (b-y) phi] / (s (b-a)).
    """
    a, b, s = kernel.a, kernel.b, kernel.diffusion_scale
    phi = np.asarray(dens_values, dtype=np.float64)
    x = np.asarray(nodes, dtype=np.float64)
    h = np.diff(x)
    f1 = (x - a) * phi
    f2 = (b - x) * phi
    c1 = np.concatenate([[0.0], np.cumsum(0.5 * h * (f1[:-1] + f1[1:]))])
    i2 = np.concatenate([[0.0], np.cumsum(0.5 * h * (f2[:-1] + f2[1:]))])
    c2 = i2[-1] - i2
    return ((b - x) * c1 + (x - a) * c2) / (s * (b - a))


def stable_exit_moment(alpha: float, radius: float, dim: int, x) -> float:
    """E_x zeta for the isotropic stable process killed outside the ball."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    r2 = float(np.sum(x * x))
    if r2 >= radius ** 2:
        raise KernelError("x must lie inside the ball")
    c = math.gamma(dim / 2.0) / (2.0 ** alpha * math.gamma(1.0 + alpha / 2.0)
                                 * math.gamma((dim + alpha) / 2.0))
    return c * (radius ** 2 - r2) ** (alpha / 2.0)


class GridGreenOracle:
    """Dense finite-difference inverse of -L on an interval grid (oracle only).

    The adjoint potential is realized literally by transposing the
    discretized operator, so forward/adjoint asymmetry of drift operators is
    visible to the tests.
    """

    def __init__(self, spec: DivergenceForm, domain: Interval, n: int = 400):
        if not isinstance(domain, Interval) or not isinstance(spec, DivergenceForm):
            raise KernelError("the grid oracle covers divergence-form operators "
                              "on an interval")
        self.domain = domain
        self.n = n
        self.nodes = np.linspace(domain.a, domain.b, n)
        h = (domain.b - domain.a) / (n - 1)
        self.h = h
        pts = self.nodes.reshape(-1, 1)
        a_half = eval_matrix(spec.a, (pts[:-1] + pts[1:]) / 2.0, 1)[:, 0, 0]
        bvals = eval_vector(spec.b, pts, 1)[:, 0]
        dvals = eval_vector(spec.d_field, pts, 1)[:, 0]
        cvals = eval_scalar(spec.c, pts)
        m = n - 2
        L = np.zeros((m, m))
        for i in range(m):
            k = i + 1  # node index
            L[i, i] = -(a_half[k - 1] + a_half[k]) / h ** 2 - cvals[k]
            if i > 0:
                L[i, i - 1] = a_half[k - 1] / h ** 2 + bvals[k] / (2 * h) - dvals[k - 1] / (2 * h)
            if i < m - 1:
                L[i, i + 1] = a_half[k] / h ** 2 - bvals[k] / (2 * h) + dvals[k + 1] / (2 * h)
        self._minus_L = -L
        self._green = np.linalg.inv(self._minus_L)          # u = G_mat @ f
        self._green_adj = np.linalg.inv(self._minus_L.T)

    def _node_index(self, x) -> int:
        x = float(np.atleast_1d(x)[0])
        i = int(np.rint((x - self.domain.a) / self.h))
        if not 0 < i < self.n - 1 or abs(self.nodes[i] - x) > 1e-9:
            raise KernelError("oracle probes must be interior grid nodes")
        return i - 1

    def green(self, x, y) -> float:
        """Discrete Green function value G(x, y)."""
        return float(self._green[self._node_index(x), self._node_index(y)] / self.h)

    def potential(self, mu: MeasureData, x) -> float:
        rhs = mu.density_values(self.nodes[1:-1].reshape(-1, 1))
        u = self._green @ rhs
        total = float(u[self._node_index(x)])
        for p, w in mu.atoms:
            total += w * self.green(x, float(p[0]))
        return total

    def copotential(self, phi, x) -> float:
        rhs = np.asarray(phi(self.nodes[1:-1].reshape(-1, 1)), dtype=np.float64).reshape(-1)
        u = self._green_adj @ rhs
        return float(u[self._node_index(x)])


def exact_kernel_for(spec, domain):
    """Exact kernel for the pair, or None when only path estimators apply."""
    if isinstance(spec, DivergenceForm) and isinstance(domain, Interval):
        if not spec.is_constant() or spec.b is not None or spec.c is not None \
                or spec.d_field is not None:
            return None
        arr = np.asarray(spec.a if spec.a is not None else 1.0, dtype=np.float64)
        scale = float(arr) if arr.ndim == 0 else float(arr.reshape(1, 1)[0, 0])
        if scale <= 0:
            return None
        return IntervalLaplacian(domain.a, domain.b, diffusion_scale=scale)
    return None
