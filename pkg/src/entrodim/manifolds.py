"""Model manifolds: flat tori, boxes, and the cylinder S^1 x [0,1].

Points are plain numpy arrays of shape (..., d).  Circle axes use
circumference 1 and canonical coordinates in [0, 1); interval axes keep
their raw coordinates.  The metric is the max over axes of the per-axis
distance (circle distance on circle axes, absolute difference otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Manifold:
    kind: str                       # "torus" | "cube" | "cylinder"
    dim: int
    bounds: tuple                   # per-axis (lo, hi)
    circle: tuple                   # per-axis bool, True = circular axis

    def __post_init__(self):
        if self.dim != len(self.bounds) or self.dim != len(self.circle):
            raise ValueError("bounds/circle length must match dim")

    # -- point handling ------------------------------------------------

    def canonicalize(self, x):
        """Map lift coordinates to canonical ones (mod 1 on circle axes,
        clipped to bounds on interval axes)."""
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for i in range(self.dim):
            if self.circle[i]:
                out[..., i] = np.mod(out[..., i], 1.0)
            else:
                lo, hi = self.bounds[i]
                out[..., i] = np.clip(out[..., i], lo, hi)
        return out

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for i in range(self.dim):
            lo, hi = self.bounds[i]
            if self.circle[i]:
                continue
            ok &= (x[..., i] >= lo - tol) & (x[..., i] <= hi + tol)
        return ok

    def axis_distance(self, a, b, axis):
        d = np.abs(np.asarray(a) - np.asarray(b))
        if self.circle[axis]:
            d = np.mod(d, 1.0)
            d = np.minimum(d, 1.0 - d)
        return d

    def distance(self, x, y):
        """Max-over-axes distance between canonical points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = np.abs(x - y)
        for i in range(self.dim):
            if self.circle[i]:
                di = np.mod(d[..., i], 1.0)
                d[..., i] = np.minimum(di, 1.0 - di)
        return d.max(axis=-1)

    def chart_coords(self, x, convention="zero"):
        """Chart coordinates of lift points.

        Circle axes are reduced to the fundamental domain [0,1) for the
        default convention and to [-1/2,1/2) for "centered"; interval axes
        are untouched.  Used by the C^r size (order-zero terms only).
        """
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for i in range(self.dim):
            if self.circle[i]:
                if convention == "zero":
                    out[..., i] = np.mod(out[..., i], 1.0)
                elif convention == "centered":
                    out[..., i] = np.mod(out[..., i] + 0.5, 1.0) - 0.5
                else:
                    raise ValueError(f"unknown chart convention {convention!r}")
        return out

    def grid(self, per_axis, endpoint=None):
        """Uniform product grid, shape (per_axis**dim, dim).

        Circle axes never include the (identified) endpoint; interval axes
        include both ends.
        """
        axes = []
        for i in range(self.dim):
            lo, hi = self.bounds[i]
            if self.circle[i]:
                axes.append(np.linspace(lo, hi, per_axis, endpoint=False))
            else:
                inc = True if endpoint is None else endpoint
                axes.append(np.linspace(lo, hi, per_axis, endpoint=inc))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def torus(d):
    return Manifold("torus", d, tuple((0.0, 1.0) for _ in range(d)),
                    tuple(True for _ in range(d)))


def cube(d, bounds=None):
    if bounds is None:
        bounds = tuple((0.0, 1.0) for _ in range(d))
    else:
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(bounds) != d:
            raise ValueError("need one (lo, hi) pair per axis")
    return Manifold("cube", d, bounds, tuple(False for _ in range(d)))


def cylinder():
    """S^1 x [0,1] with the circle axis first."""
    return Manifold("cylinder", 2, ((0.0, 1.0), (0.0, 1.0)), (True, False))
