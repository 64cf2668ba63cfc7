"""Operator descriptions, structural validation, and discrete quadratic forms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from .domains import Ball, Box, FullSpace, Interval, bounding_box, is_bounded
from .fields import SolutionField

Coefficient = Union[None, float, np.ndarray, Callable]


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class DivergenceForm:
    """d_i(a_ij d_j u) - b_i d_i u + d_i(d_i u) - c u on a bounded domain.

    ``a`` may be a scalar (isotropic), a constant matrix, or a callable
    returning (m, d, d) matrices; ``b``/``d_field`` constant vectors or
    callables; ``c`` a constant or callable.  The generator's second-order
    part is the symmetric part of ``a``, so ``a = 0.5`` yields 0.5*Laplacian.
    """

    a: Coefficient = 1.0
    b: Coefficient = None
    c: Coefficient = None
    d_field: Coefficient = None

    def is_constant(self) -> bool:
        return not any(callable(v) for v in (self.a, self.b, self.c, self.d_field))


@dataclass(frozen=True)
class FractionalLaplacian:
    """-scale * (-Laplacian)^(alpha/2), optionally with a divergence-free drift."""

    alpha: float
    scale: float = 1.0
    drift: Coefficient = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise OperatorError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.scale <= 0:
            raise OperatorError("scale must be positive")

    def is_constant(self) -> bool:
        return not callable(self.drift)


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """0.5 tr(Q Hess u) + <x, A^T grad u>, killed at constant rate lam."""

    A: np.ndarray
    Q: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "A", np.atleast_2d(np.asarray(self.A, dtype=np.float64)))
        object.__setattr__(self, "Q", np.atleast_2d(np.asarray(self.Q, dtype=np.float64)))

    @property
    def dim(self):
        return self.A.shape[0]

    def is_constant(self) -> bool:
        return True


OperatorSpec = Union[DivergenceForm, FractionalLaplacian, OrnsteinUhlenbeck]


@dataclass
class ValidationReport:
    ok: bool
    violations: list
    ellipticity_lambda: Optional[float] = None

    def raise_if_invalid(self):
        if not self.ok:
            msgs = "; ".join(f"[{rid}] {msg}" for rid, msg in self.violations)
            raise OperatorError(f"operator failed validation: {msgs}")


def eval_matrix(a: Coefficient, pts: np.ndarray, dim: int) -> np.ndarray:
    """Coefficient matrix field at points, shape (m, d, d)."""
    m = pts.shape[0]
    if a is None:
        a = 1.0
    if callable(a):
        out = np.asarray(a(pts), dtype=np.float64)
        return out.reshape(m, dim, dim)
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(dim)
    return np.broadcast_to(arr, (m, dim, dim))


def eval_vector(v: Coefficient, pts: np.ndarray, dim: int) -> np.ndarray:
    m = pts.shape[0]
    if v is None:
        return np.zeros((m, dim))
    if callable(v):
        return np.asarray(v(pts), dtype=np.float64).reshape(m, dim)
    return np.broadcast_to(np.asarray(v, dtype=np.float64), (m, dim))


def eval_scalar(c: Coefficient, pts: np.ndarray) -> np.ndarray:
    m = pts.shape[0]
    if c is None:
        return np.zeros(m)
    if callable(c):
        return np.asarray(c(pts), dtype=np.float64).reshape(m)
    return np.full(m, float(c))


def sym_part(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def generator_diffusion_matrix(spec: DivergenceForm, pts: np.ndarray, dim: int) -> np.ndarray:
    """Symmetric part of ``a``: the matrix entering the generator and the energy."""
    return sym_part(eval_matrix(spec.a, pts, dim))


def _fd_divergence(vec: Coefficient, pts: np.ndarray, dim: int, h: float = 1e-6) -> np.ndarray:
    if vec is None or not callable(vec):
        return np.zeros(pts.shape[0])
    div = np.zeros(pts.shape[0])
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = h
        div += (eval_vector(vec, pts + e, dim)[:, k]
                - eval_vector(vec, pts - e, dim)[:, k]) / (2 * h)
    return div


def _sample_points(domain, count: int) -> np.ndarray:
    """Deterministic low-discrepancy points in the domain (or a default box)."""
    bb = bounding_box(domain)
    if bb is None:
        lo = -5.0 * np.ones(domain.dim)
        hi = 5.0 * np.ones(domain.dim)
    else:
        lo, hi = bb
    dim = lo.size
    # Kronecker sequence with square-root irrationals, shifted off the corner
    alphas = np.sqrt(np.array([2, 3, 5, 7, 11, 13, 17, 19], dtype=np.float64))[:dim]
    i = np.arange(1, count + 1).reshape(-1, 1)
    frac = np.mod(0.5 + i * alphas, 1.0)
    pts = lo + frac * (hi - lo)
    if isinstance(domain, Ball):
        pts = pts[domain.contains(pts)]
        if pts.shape[0] == 0:
            pts = np.asarray(domain.center, dtype=np.float64).reshape(1, -1)
    return pts


def _unit_directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.ones((1, 1))
    # deterministic directions from normal scores of a Kronecker sequence
    from .rng import normal_inv_cdf
    alphas = np.sqrt(np.array([2, 3, 5, 7, 11, 13, 17, 19], dtype=np.float64))[:dim]
    i = np.arange(1, count + 1).reshape(-1, 1)
    z = normal_inv_cdf(np.mod(0.5 + i * alphas, 1.0) * 0.999998 + 1e-6)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def validate(spec: OperatorSpec, domain) -> ValidationReport:
    """Check structural conditions; never raises, findings go to the report."""
    violations = []
    lam = None

    if isinstance(spec, DivergenceForm):
        pts = _sample_points(domain, 64)
        dim = domain.dim
        atil = generator_diffusion_matrix(spec, pts, dim)
        dirs = _unit_directions(dim, 16)
        quad = np.einsum("pi,mij,pj->mp", dirs, atil, dirs)
        lam = float(np.min(quad))
        if lam <= 0:
            violations.append(("ellipticity", f"symmetric part of a is not elliptic (min quadratic form {lam:.3g})"))
        kill_b = eval_scalar(spec.c, pts) - _fd_divergence(spec.b, pts, dim)
        kill_d = eval_scalar(spec.c, pts) - _fd_divergence(spec.d_field, pts, dim)
        if np.min(kill_b) < -1e-9:
            violations.append(("zero-order-b", "c - div b must be nonnegative"))
        if np.min(kill_d) < -1e-9:
            violations.append(("zero-order-d", "c - div d must be nonnegative"))
        if not is_bounded(domain):
            violations.append(("bounded-domain", "divergence-form operators need a bounded domain"))
    elif isinstance(spec, FractionalLaplacian):
        if spec.drift is not None:
            if spec.alpha <= 1.0:
                violations.append(("drift-alpha", "a drift term requires alpha > 1"))
            pts = _sample_points(domain, 64)
            div = _fd_divergence(spec.drift, pts, domain.dim)
            if np.max(np.abs(div)) > 1e-6:
                violations.append(("drift-divergence", "drift must be divergence-free"))
    elif isinstance(spec, OrnsteinUhlenbeck):
        eigA = np.linalg.eigvals(spec.A)
        omega = -float(np.max(eigA.real))
        if omega <= 0:
            violations.append(("spectrum", "A must have spectrum strictly in the left half-plane"))
        if not np.allclose(spec.Q, spec.Q.T, atol=1e-12):
            violations.append(("Q-symmetry", "Q must be symmetric"))
        else:
            eigQ = np.linalg.eigvalsh(spec.Q)
            if np.min(eigQ) <= 0:
                violations.append(("Q-positive", "Q must be positive definite"))
        if spec.lam <= 0:
            violations.append(("killing-rate", "the solver needs a positive killing rate lambda"))
        if not isinstance(domain, FullSpace):
            violations.append(("full-space", "the OU preset runs on the full space"))
    else:
        violations.append(("unknown-spec", f"unsupported operator {type(spec).__name__}"))

    return ValidationReport(ok=not violations, violations=violations,
                            ellipticity_lambda=lam)


# ---------------------------------------------------------------------------
# reference measures


@dataclass(frozen=True)
class LebesgueReference:
    kind = "lebesgue"

    def density(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        m = pts.shape[0] if pts.ndim > 1 else pts.reshape(-1, 1).shape[0]
        return np.ones(m)


@dataclass(frozen=True)
class GaussianReference:
    """Invariant Gaussian of the OU process; densities of measures are
    declared with respect to this measure."""

    cov: np.ndarray

    kind = "gaussian"

    def density(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.cov.shape[0])
        d = self.cov.shape[0]
        inv = np.linalg.inv(self.cov)
        det = np.linalg.det(self.cov)
        quad = np.einsum("mi,ij,mj->m", pts, inv, pts)
        return np.exp(-0.5 * quad) / np.sqrt((2 * np.pi) ** d * det)


def ou_stationary_cov(spec: OrnsteinUhlenbeck) -> np.ndarray:
    """Covariance of the invariant Gaussian: solves A X + X A^T = -Q."""
    return scipy.linalg.solve_lyapunov(spec.A, -spec.Q)


def ou_transition(spec: OrnsteinUhlenbeck, dt: float):
    """Exact transition mean matrix e^(dt A) and covariance integral Q_dt."""
    d = spec.dim
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = spec.A
    M[:d, d:] = spec.Q
    M[d:, d:] = -spec.A.T
    phi = scipy.linalg.expm(M * dt)
    E = phi[:d, :d]
    Qdt = phi[:d, d:] @ E.T
    return E, 0.5 * (Qdt + Qdt.T)


def reference_measure(spec: OperatorSpec):
    if isinstance(spec, OrnsteinUhlenbeck):
        return GaussianReference(ou_stationary_cov(spec))
    return LebesgueReference()


# ---------------------------------------------------------------------------
# discrete quadratic forms


def stable_energy_constant(dim: int, alpha: float) -> float:
    """Normalization of the fractional Dirichlet integral; checked against the
    stable exit-moment oracle in the test suite before it is trusted."""
    return (alpha * 2.0 ** (alpha - 1.0) * math.gamma((dim + alpha) / 2.0)
            / (math.pi ** (dim / 2.0) * math.gamma(1.0 - alpha / 2.0)))


def field_gradient(u: SolutionField) -> np.ndarray:
    """Nodewise gradient: central differences inside, one-sided at the rim.

    Returns shape values.shape + (d,).
    """
    vals = u.values
    grads = np.empty(vals.shape + (u.dim,))
    for k in range(u.dim):
        h = u.spacing[k]
        g = np.empty_like(vals)
        sl_in = [slice(None)] * u.dim
        sl_up = [slice(None)] * u.dim
        sl_dn = [slice(None)] * u.dim
        sl_in[k] = slice(1, -1)
        sl_up[k] = slice(2, None)
        sl_dn[k] = slice(None, -2)
        g[tuple(sl_in)] = (vals[tuple(sl_up)] - vals[tuple(sl_dn)]) / (2 * h)
        first, second = [slice(None)] * u.dim, [slice(None)] * u.dim
        first[k], second[k] = 0, 1
        g[tuple(first)] = (vals[tuple(second)] - vals[tuple(first)]) / h
        last, prev = [slice(None)] * u.dim, [slice(None)] * u.dim
        last[k], prev[k] = -1, -2
        g[tuple(last)] = (vals[tuple(last)] - vals[tuple(prev)]) / h
        grads[..., k] = g
    return grads


def dirichlet_energy(spec: OperatorSpec, u: SolutionField) -> float:
    """Discrete quadratic form E(u, u) of the operator's bilinear form."""
    if u.n < 5:
        raise OperatorError("grid too coarse for the discrete energy (< 3 interior nodes)")
    if not is_bounded(u.domain):
        raise OperatorError("the discrete energy needs a bounded domain")

    if isinstance(spec, DivergenceForm):
        pts = u.node_points()
        atil = generator_diffusion_matrix(spec, pts, u.dim)
        grads = field_gradient(u).reshape(-1, u.dim)
        cvals = eval_scalar(spec.c, pts)
        w = u.quadrature_weights().ravel()
        form = np.einsum("mi,mij,mj->m", grads, atil, grads)
        return float(np.sum(w * (form + cvals * u.values.ravel() ** 2)))

    if isinstance(spec, FractionalLaplacian):
        if u.dim != 1:
            raise NotImplementedError("nonlocal discrete energy is implemented in one dimension")
        a, b = u.grid_lo[0], u.grid_hi[0]
        h = float(u.spacing[0])
        x = u.axis_nodes(0)
        vals = u.values
        alpha = spec.alpha
        c = stable_energy_constant(1, alpha)
        diffs = vals[:, None] - vals[None, :]
        dist = np.abs(x[:, None] - x[None, :])
        np.fill_diagonal(dist, 1.0)
        kernel = dist ** (-(1.0 + alpha))
        np.fill_diagonal(kernel, 0.0)
        pair_sum = float(np.sum(diffs ** 2 * kernel)) * h * h
        # interactions with the zero extension beyond the interval, in closed form
        dist_lo = np.maximum(x - a, 1e-300)
        dist_hi = np.maximum(b - x, 1e-300)
        ext = (dist_lo ** (-alpha) + dist_hi ** (-alpha)) / alpha
        interior = slice(1, -1)  # boundary nodes carry u = 0
        ext_sum = 2.0 * float(np.sum(vals[interior] ** 2 * ext[interior])) * h
        return spec.scale * 0.5 * c * (pair_sum + ext_sum)

    raise OperatorError("discrete energy is defined for divergence-form and "
                        "fractional operators only")


def generator_apply(spec: OperatorSpec, u: SolutionField, x) -> float:
    """Second-order finite-difference value of Lu at an interior grid node."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    idx = np.rint((x - u.grid_lo) / u.spacing).astype(int)
    node = u.grid_lo + idx * u.spacing
    if np.max(np.abs(node - x)) > 1e-9 * np.max(u.spacing):
        raise OperatorError("x must be a grid node")
    if np.any(idx <= 0) or np.any(idx >= u.n - 1):
        raise OperatorError("x must be an interior grid node")

    dim = u.dim
    vals = u.values
    h = u.spacing

    def at(offset):
        return float(vals[tuple(idx + np.asarray(offset, dtype=int))])

    def grad_at(base_idx):
        g = np.zeros(dim)
        for k in range(dim):
            e = np.zeros(dim, dtype=int)
            e[k] = 1
            up = np.clip(base_idx + e, 0, u.n - 1)
            dn = np.clip(base_idx - e, 0, u.n - 1)
            g[k] = (float(vals[tuple(up)]) - float(vals[tuple(dn)])) / ((up - dn)[k] * h[k])
        return g

    if isinstance(spec, DivergenceForm):
        pt = node.reshape(1, -1)
        out = 0.0
        for i in range(dim):
            ei = np.zeros(dim)
            ei[i] = h[i]
            for j in range(dim):
                if i == j:
                    a_up = eval_matrix(spec.a, pt + ei[None, :] / 2, dim)[0, i, i]
                    a_dn = eval_matrix(spec.a, pt - ei[None, :] / 2, dim)[0, i, i]
                    e = np.zeros(dim, dtype=int)
                    e[i] = 1
                    out += (a_up * (at(e) - at(np.zeros(dim, dtype=int)))
                            - a_dn * (at(np.zeros(dim, dtype=int)) - at(-e))) / h[i] ** 2
                else:
                    a_up = eval_matrix(spec.a, pt + ei[None, :], dim)[0, i, j]
                    a_dn = eval_matrix(spec.a, pt - ei[None, :], dim)[0, i, j]
                    e = np.zeros(dim, dtype=int)
                    e[i] = 1
                    gj_up = grad_at(idx + e)[j]
                    gj_dn = grad_at(idx - e)[j]
                    out += (a_up * gj_up - a_dn * gj_dn) / (2 * h[i])
        bvec = eval_vector(spec.b, pt, dim)[0]
        grad = grad_at(idx)
        out -= float(bvec @ grad)
        if spec.d_field is not None:
            for i in range(dim):
                e = np.zeros(dim, dtype=int)
                e[i] = 1
                d_up = eval_vector(spec.d_field, pt + h[i] * np.eye(dim)[i][None, :], dim)[0, i]
                d_dn = eval_vector(spec.d_field, pt - h[i] * np.eye(dim)[i][None, :], dim)[0, i]
                out += (d_up * at(e) - d_dn * at(-e)) / (2 * h[i])
        out -= eval_scalar(spec.c, pt)[0] * at(np.zeros(dim, dtype=int))
        return float(out)

    if isinstance(spec, OrnsteinUhlenbeck):
        hess = np.zeros((dim, dim))
        for i in range(dim):
            e = np.zeros(dim, dtype=int)
            e[i] = 1
            hess[i, i] = (at(e) - 2 * at(np.zeros(dim, dtype=int)) + at(-e)) / h[i] ** 2
            for j in range(i + 1, dim):
                ej = np.zeros(dim, dtype=int)
                ej[j] = 1
                hess[i, j] = hess[j, i] = (at(e + ej) - at(e - ej) - at(-e + ej)
                                           + at(-e - ej)) / (4 * h[i] * h[j])
        grad = grad_at(idx)
        return float(0.5 * np.trace(spec.Q @ hess) + node @ (spec.A.T @ grad))

    raise OperatorError("finite-difference generator is available for local operators only")
