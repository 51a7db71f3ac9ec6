"""Singular k-disks, C^r sizes, subdivision and Taylor approximation.

A singular k-disk is a smooth map from Q^k = [-1,1]^k into a model
manifold, carried here as a lift `param` into chart coordinates.  Disks
must be evaluable on a small collar around Q^k so central finite
differences work at the boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

H_FD_DEFAULT = 1e-4
# step per total derivative order; higher orders need larger steps to
# keep cancellation below the truncation error
_H_BY_ORDER = {1: None, 2: None, 3: 1e-3, 4: 3e-3}

# central difference stencils: order -> {offset: coeff}, error O(h^2)
_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
}


@dataclass(frozen=True)
class SingularDisk:
    k: int
    manifold: object
    param: object                 # (N, k) -> (N, d) lift coordinates
    deriv: object = None          # (T, s_tuple) -> (N, d), exact partials
    gridres: int = 33             # samples per axis for discretization
    h_fd: float = H_FD_DEFAULT
    label: str = ""

    @property
    def d(self):
        return self.manifold.dim

    def params_grid(self, per_axis=None):
        per_axis = per_axis or self.gridres
        if self.k == 0:
            return np.zeros((1, 0))
        axes = [np.linspace(-1.0, 1.0, per_axis) for _ in range(self.k)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def lift(self, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        return self.param(T)

    def points(self, T):
        """Canonical manifold points at parameters T."""
        return self.manifold.canonicalize(self.lift(T))

    def cloud(self, per_axis=None):
        return self.points(self.params_grid(per_axis))

    def partial(self, T, s):
        """Partial derivative with multi-index s of the lift at parameters T."""
        s = tuple(int(v) for v in s)
        if len(s) != self.k:
            raise ValueError("multi-index length must equal disk dimension")
        order = sum(s)
        if order == 0:
            return self.lift(T)
        if self.deriv is not None:
            return np.atleast_2d(self.deriv(np.atleast_2d(T), s))
        return self._fd_partial(np.atleast_2d(np.asarray(T, float)), s)

    def _fd_partial(self, T, s):
        order = sum(s)
        if max(s) > 4:
            raise ValueError("finite differences support per-axis order <= 4; "
                             "supply analytic derivatives beyond that")
        h = _H_BY_ORDER.get(order) or self.h_fd
        per_axis = [list(_STENCILS[si].items()) for si in s]
        out = None
        for combo in itertools.product(*per_axis):
            offs = np.array([c[0] for c in combo], dtype=float)
            coeff = math.prod(c[1] for c in combo)
            vals = self.lift(T + h * offs)
            out = coeff * vals if out is None else out + coeff * vals
        return out / h ** order


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def point_disk(manifold, point, label=""):
    p = np.asarray(point, dtype=float)

    def param(T):
        return np.broadcast_to(p, (T.shape[0], p.shape[0])).copy()

    def deriv(T, s):
        return np.zeros((T.shape[0], p.shape[0]))

    return SingularDisk(0, manifold, param, deriv=deriv, gridres=1,
                        label=label or "point")


def polynomial_disk(manifold, coeffs, k, gridres=33, label=""):
    """Disk with polynomial coordinates.

    coeffs: one dict per output coordinate mapping a multi-index tuple of
    length k to its coefficient.
    """
    coeffs = [dict((tuple(int(i) for i in s), float(c)) for s, c in comp.items())
              for comp in coeffs]
    if len(coeffs) != manifold.dim:
        raise ValueError("need one coefficient dict per ambient coordinate")

    def param(T):
        N = T.shape[0]
        out = np.zeros((N, len(coeffs)))
        for j, comp in enumerate(coeffs):
            for s, c in comp.items():
                term = np.full(N, c)
                for ax, p in enumerate(s):
                    if p:
                        term = term * T[:, ax] ** p
                out[:, j] += term
        return out

    def deriv(T, s):
        N = T.shape[0]
        out = np.zeros((N, len(coeffs)))
        for j, comp in enumerate(coeffs):
            for mono, c in comp.items():
                if any(mono[ax] < s[ax] for ax in range(k)):
                    continue
                coef = c
                for ax in range(k):
                    for step in range(s[ax]):
                        coef *= (mono[ax] - step)
                term = np.full(N, coef)
                for ax in range(k):
                    p = mono[ax] - s[ax]
                    if p:
                        term = term * T[:, ax] ** p
                out[:, j] += term
        return out

    return SingularDisk(k, manifold, param, deriv=deriv, gridres=gridres,
                        label=label or "polynomial")


def segment_disk(manifold, base, direction, length, gridres=257, label=""):
    """1-disk t -> base + (t+1)/2 * length * direction (unit direction)."""
    base = np.asarray(base, dtype=float)
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    coeffs = []
    for j in range(manifold.dim):
        half = 0.5 * length * v[j]
        coeffs.append({(0,): base[j] + half, (1,): half})
    return polynomial_disk(manifold, coeffs, 1, gridres=gridres,
                           label=label or f"segment(len={length:g})")


def chart_cube_disk(manifold, gridres=33, label=""):
    """The d-disk filling the whole chart cube of the manifold."""
    d = manifold.dim
    coeffs = []
    for j in range(d):
        lo, hi = manifold.bounds[j]
        if manifold.circle[j]:
            lo, hi = 0.0, 1.0
        s = tuple(1 if ax == j else 0 for ax in range(d))
        comp = {tuple(0 for _ in range(d)): (lo + hi) / 2.0, s: (hi - lo) / 2.0}
        coeffs.append(comp)
    return polynomial_disk(manifold, coeffs, d, gridres=gridres,
                           label=label or "chart-cube")


def image_disk(f, phi, iterations=1, label=""):
    """The disk f^m o phi, using the smooth lift of f.

    First-order partials come from the chain rule with the analytic
    Jacobian of f; higher orders fall back to finite differences of the
    composed lift.
    """
    m = int(iterations)

    def param(T):
        return f.iterate_raw(phi.lift(T), m)

    base = SingularDisk(phi.k, f.manifold, param, deriv=None,
                        gridres=phi.gridres, h_fd=phi.h_fd,
                        label=label or f"{f.name}^{m}o({phi.label})")

    def deriv(T, s, _base=base):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        if sum(s) != 1:
            return _base._fd_partial(T, s)
        D = phi.partial(T, s)
        x = phi.lift(T)
        for _ in range(m):
            J = f.jac(x)
            D = np.einsum("nij,nj->ni", J, D)
            x = f.raw(x)
        return D

    return replace(base, deriv=deriv)


def affine_restrict(phi, center, halfwidth, label=""):
    """Disk phi o L with L(t) = center + halfwidth * t (per-axis widths)."""
    c = np.asarray(center, dtype=float)
    w = np.broadcast_to(np.asarray(halfwidth, dtype=float), (phi.k,)).copy()

    def param(T):
        return phi.lift(c + T * w)

    def deriv(T, s):
        # chain rule through the affine reparameterization
        scale = math.prod(w[ax] ** s[ax] for ax in range(phi.k))
        return scale * phi.partial(c + np.atleast_2d(T) * w, s)

    return SingularDisk(phi.k, phi.manifold, param, deriv=deriv,
                        gridres=phi.gridres, h_fd=phi.h_fd,
                        label=label or f"{phi.label}|restr")


def subdivide(phi, pieces_per_axis):
    """Linear subdivision into pieces_per_axis^k congruent sub-disks."""
    p = int(pieces_per_axis)
    if p < 1:
        raise ValueError("pieces_per_axis must be >= 1")
    if p == 1 or phi.k == 0:
        return [phi]
    w = 1.0 / p
    centers_1d = np.linspace(-1.0 + w, 1.0 - w, p)
    out = []
    for combo in itertools.product(range(p), repeat=phi.k):
        c = np.array([centers_1d[i] for i in combo])
        out.append(affine_restrict(phi, c, w,
                                   label=f"{phi.label}/{p}^{phi.k}{combo}"))
    return out


def slice_disk(phi, axes, anchor, label=""):
    """Lower-dimensional slice: keep `axes`, freeze the rest at `anchor`."""
    axes = tuple(int(a) for a in axes)
    anchor = np.asarray(anchor, dtype=float)
    ell = len(axes)

    def embed(T):
        full = np.broadcast_to(anchor, (T.shape[0], phi.k)).copy()
        for j, ax in enumerate(axes):
            full[:, ax] = T[:, j]
        return full

    def param(T):
        return phi.lift(embed(np.atleast_2d(T)))

    def deriv(T, s):
        full_s = [0] * phi.k
        for j, ax in enumerate(axes):
            full_s[ax] = s[j]
        return phi.partial(embed(np.atleast_2d(np.asarray(T, float))),
                           tuple(full_s))

    return SingularDisk(ell, phi.manifold, param, deriv=deriv,
                        gridres=phi.gridres, h_fd=phi.h_fd,
                        label=label or f"{phi.label}|slice{axes}")


# ---------------------------------------------------------------------------
# C^r size
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrSize:
    r: int
    value: float
    by_order: tuple        # sup of |partials| per total order 0..r
    gridres: int
    convention: str = "zero"


def multi_indices(k, order):
    """All multi-indices of length k with total order exactly `order`."""
    if k == 0:
        return [()] if order == 0 else []
    out = []
    for head in range(order + 1):
        for tail in multi_indices(k - 1, order - head):
            out.append((head,) + tail)
    return out


def cr_size(phi, r, gridres=None, convention="zero"):
    """Grid-sup of the chart-coordinate partial derivatives of all total
    orders <= r.  Rejects r = infinity."""
    if math.isinf(r):
        raise ValueError("C^inf size is not a number; use per-r sizes")
    r = int(r)
    if r < 0:
        raise ValueError("order must be >= 0")
    T = phi.params_grid(gridres)
    by_order = []
    # order zero uses chart coordinates (bounded on circle axes)
    chart = phi.manifold.chart_coords(phi.lift(T), convention=convention)
    by_order.append(float(np.abs(chart).max()))
    for order in range(1, r + 1):
        worst = 0.0
        for s in multi_indices(phi.k, order):
            vals = phi.partial(T, s)
            worst = max(worst, float(np.abs(vals).max()))
        by_order.append(worst)
    return CrSize(r=r, value=max(by_order), by_order=tuple(by_order),
                  gridres=gridres or phi.gridres, convention=convention)


# ---------------------------------------------------------------------------
# Taylor approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaylorReport:
    disk: SingularDisk
    degree: int
    max_error: float
    bound_ok: bool
    max_ratio: float       # worst (error / bound) over the grid


def taylor_smooth(phi, r, t0, gridres=None):
    """Degree-(r-1) Taylor polynomial disk of phi at t0, with the a
    posteriori error bound d(phi_inf(t), phi(t)) <= |phi|_{C^r} |t-t0|^r
    checked on the sampling grid."""
    r = int(r)
    if r < 1:
        raise ValueError("order must be >= 1")
    t0 = np.atleast_2d(np.asarray(t0, dtype=float))
    k, d = phi.k, phi.d
    coeffs = [dict() for _ in range(d)]
    for order in range(r):
        for s in multi_indices(k, order):
            vals = phi.partial(t0, s)[0]
            fact = math.prod(math.factorial(si) for si in s)
            for j in range(d):
                coeffs[j][s] = vals[j] / fact
    # shift the expansion point: p(t) = sum_s c_s (t - t0)^s, re-expanded
    # around 0 by substituting u = t - t0 at evaluation time instead
    t0_flat = t0[0]

    def param(T):
        U = np.atleast_2d(T) - t0_flat
        out = np.zeros((U.shape[0], d))
        for j in range(d):
            for s, c in coeffs[j].items():
                term = np.full(U.shape[0], c)
                for ax in range(k):
                    if s[ax]:
                        term = term * U[:, ax] ** s[ax]
                out[:, j] += term
        return out

    def deriv(T, s):
        U = np.atleast_2d(np.asarray(T, float)) - t0_flat
        out = np.zeros((U.shape[0], d))
        for j in range(d):
            for mono, c in coeffs[j].items():
                if any(mono[ax] < s[ax] for ax in range(k)):
                    continue
                coef = c
                for ax in range(k):
                    for step in range(s[ax]):
                        coef *= (mono[ax] - step)
                term = np.full(U.shape[0], coef)
                for ax in range(k):
                    p = mono[ax] - s[ax]
                    if p:
                        term = term * U[:, ax] ** p
                out[:, j] += term
        return out

    poly = SingularDisk(k, phi.manifold, param, deriv=deriv,
                        gridres=phi.gridres, h_fd=phi.h_fd,
                        label=f"taylor[{r - 1}]({phi.label})")

    size = cr_size(phi, r, gridres=gridres).value
    T = phi.params_grid(gridres)
    err = phi.manifold.distance(poly.points(T), phi.points(T))
    radius = np.linalg.norm(np.atleast_2d(T) - t0_flat, axis=-1)
    bound = size * radius ** r
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, err / np.maximum(bound, 1e-300), 0.0)
        ratio = np.where((bound == 0) & (err > 1e-12), np.inf, ratio)
    max_ratio = float(ratio.max()) if ratio.size else 0.0
    return TaylorReport(disk=poly, degree=r - 1,
                        max_error=float(err.max()),
                        bound_ok=bool(max_ratio <= 1.0 + 1e-9),
                        max_ratio=max_ratio)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

@dataclass
class DiskFamily:
    generators: list
    subdivision_depth: int = 0
    scalings: tuple = ()
    size_bound: float | None = None
    size_order: int = 1
    label: str = ""

    @property
    def k(self):
        ks = {phi.k for phi in self.generators}
        if len(ks) != 1:
            raise ValueError("family generators must share one dimension")
        return ks.pop()

    def enumerate(self, budget=None):
        """Finite truncation of the family.

        Returns (disks, flags).  All suprema over the result are lower
        bounds for the suprema over the untruncated family.
        """
        members = []
        for gen in self.generators:
            members.append(gen)
            for lam in self.scalings:
                members.append(affine_restrict(gen, np.zeros(gen.k), lam,
                                               label=f"{gen.label}*{lam:g}"))
        out = []
        truncated = False
        for base in members:
            level = [base]
            out.append(base)
            for _ in range(self.subdivision_depth):
                nxt = []
                for piece in level:
                    nxt.extend(subdivide(piece, 2))
                level = nxt
                out.extend(level)
                if budget is not None and len(out) > budget:
                    truncated = True
                    break
            if truncated:
                break
        if budget is not None and len(out) > budget:
            out = out[:budget]
            truncated = True
        excluded = 0
        if self.size_bound is not None:
            kept = []
            for phi in out:
                if cr_size(phi, self.size_order).value <= self.size_bound + 1e-9:
                    kept.append(phi)
                else:
                    excluded += 1
            out = kept
        flags = {"enumeration_truncated": truncated,
                 "size_excluded": excluded,
                 "count": len(out)}
        return out, flags
