"""Spatial domains for the killed processes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError(f"interval requires a < b, got ({self.a}, {self.b})")

    dim = 1

    @property
    def lo(self):
        return np.array([self.a])

    @property
    def hi(self):
        return np.array([self.b])

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        return (x[:, 0] > self.a) & (x[:, 0] < self.b)


@dataclass(frozen=True)
class Box:
    lo_corner: tuple
    hi_corner: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo_corner, dtype=np.float64)
        hi = np.asarray(self.hi_corner, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise DomainError("box corners must be equal-length vectors")
        if not np.all(lo < hi):
            raise DomainError("box requires lo < hi componentwise")
        object.__setattr__(self, "lo_corner", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi_corner", tuple(float(v) for v in hi))

    @property
    def dim(self):
        return len(self.lo_corner)

    @property
    def lo(self):
        return np.asarray(self.lo_corner, dtype=np.float64)

    @property
    def hi(self):
        return np.asarray(self.hi_corner, dtype=np.float64)

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        return np.all((x > self.lo) & (x < self.hi), axis=1)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    ndim: int = field(default=0)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        object.__setattr__(self, "ndim", c.size)
        if self.radius <= 0:
            raise DomainError("ball requires radius > 0")

    @property
    def dim(self):
        return self.ndim

    @property
    def lo(self):
        return np.asarray(self.center) - self.radius

    @property
    def hi(self):
        return np.asarray(self.center) + self.radius

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        d2 = np.sum((x - np.asarray(self.center)) ** 2, axis=1)
        return d2 < self.radius ** 2


@dataclass(frozen=True)
class FullSpace:
    ndim: int

    def __post_init__(self):
        if self.ndim < 1:
            raise DomainError("dimension must be >= 1")

    @property
    def dim(self):
        return self.ndim

    lo = None
    hi = None

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        return np.ones(x.shape[0], dtype=bool)


def is_bounded(domain) -> bool:
    return not isinstance(domain, FullSpace)


def bounding_box(domain):
    """(lo, hi) arrays of the domain's bounding box; None for full space."""
    if isinstance(domain, FullSpace):
        return None
    return np.asarray(domain.lo, dtype=np.float64), np.asarray(domain.hi, dtype=np.float64)
