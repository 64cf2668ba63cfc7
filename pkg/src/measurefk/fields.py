"""Grid-sampled scalar fields with multilinear interpolation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import Ball, FullSpace, bounding_box, is_bounded


@dataclass
class SolutionField:
    """Values on a uniform tensor grid over a domain's bounding box.

    Evaluation is multilinear between nodes.  Outside a bounded domain the
    field is 0 (homogeneous Dirichlet exterior condition); for a full-space
    grid box the evaluation clamps to the nearest node instead, since the box
    is a numerical viewport, not a boundary.
    """

    domain: object
    n: int
    values: np.ndarray = field(default=None)
    box: tuple = None  # (lo, hi) override, required for FullSpace

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("grid needs at least 3 nodes per axis")
        if self.box is not None:
            lo, hi = self.box
            self._lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
            self._hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        else:
            bb = bounding_box(self.domain)
            if bb is None:
                raise ValueError("full-space fields need an explicit grid box")
            self._lo, self._hi = bb
        self.dim = self._lo.size
        self._h = (self._hi - self._lo) / (self.n - 1)
        shape = (self.n,) * self.dim
        if self.values is None:
            self.values = np.zeros(shape)
        else:
            self.values = np.asarray(self.values, dtype=np.float64).reshape(shape)
        self.clamp = isinstance(self.domain, FullSpace)

    @property
    def grid_lo(self):
        return self._lo

    @property
    def grid_hi(self):
        return self._hi

    @property
    def spacing(self):
        return self._h

    def axis_nodes(self, k=0):
        return np.linspace(self._lo[k], self._hi[k], self.n)

    def node_points(self):
        """All grid nodes as an (n^d, d) array, C-order."""
        axes = [self.axis_nodes(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def copy_with(self, values):
        return SolutionField(self.domain, self.n, np.array(values, dtype=np.float64),
                             box=(self._lo, self._hi))

    def __call__(self, points):
        return self.evaluate(points)

    def evaluate(self, points):
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1 and self.dim > 1 or pts.ndim == 0
        pts = pts.reshape(-1, self.dim)
        t = (pts - self._lo) / self._h
        if self.clamp:
            t = np.clip(t, 0.0, self.n - 1.0)
        i0 = np.clip(np.floor(t).astype(np.int64), 0, self.n - 2)
        w = t - i0
        out = np.zeros(pts.shape[0])
        # multilinear: sum over the 2^d cell corners
        for corner in range(1 << self.dim):
            weight = np.ones(pts.shape[0])
            idx = []
            for k in range(self.dim):
                bit = (corner >> k) & 1
                weight = weight * (w[:, k] if bit else (1.0 - w[:, k]))
                idx.append(i0[:, k] + bit)
            out += weight * self.values[tuple(idx)]
        if not self.clamp:
            inside = self.domain.contains(pts)
            out = np.where(inside, out, 0.0)
        return out[0] if single else out

    def max_abs(self):
        return float(np.max(np.abs(self.values)))

    def interior_mask(self):
        """Boolean mask over nodes: strictly inside the domain."""
        pts = self.node_points()
        if isinstance(self.domain, FullSpace):
            return np.ones(pts.shape[0], dtype=bool).reshape(self.values.shape)
        return self.domain.contains(pts).reshape(self.values.shape)

    def apply_dirichlet(self):
        """Zero the values on and outside the domain boundary (bounded domains)."""
        if is_bounded(self.domain):
            mask = self.interior_mask()
            if isinstance(self.domain, Ball):
                self.values[~mask] = 0.0
            else:
                # boundary nodes of the box grid coincide with the domain boundary
                self.values[~mask] = 0.0
        return self

    def quadrature_weights(self):
        """Trapezoid weights over the grid box (Lebesgue), same shape as values."""
        w1 = np.full(self.n, 1.0)
        w1[0] = w1[-1] = 0.5
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w * np.prod(self._h)


def field_from_function(domain, n, fn, box=None):
    f = SolutionField(domain, n, box=box)
    pts = f.node_points()
    f.values = np.asarray(fn(pts), dtype=np.float64).reshape(f.values.shape)
    return f
