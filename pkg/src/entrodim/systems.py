"""Smooth self-maps of the model manifolds and the example catalog.

A SmoothMap carries a smooth lift (`raw`) acting on lift coordinates and
an analytic Jacobian.  `evaluate` canonicalizes the lift image.  Lifts of
torus maps are the integer-matrix / polynomial formulas without the mod,
so iterated compositions stay smooth and finite differences of composed
disks need no unwrapping.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np

from .manifolds import Manifold, cube, torus

LIPSCHITZ_SAFETY = 1.05
_LIP_GRID = 41


@dataclass(frozen=True)
class SmoothMap:
    name: str
    manifold: Manifold
    raw: object                     # lift evaluation, (..., d) -> (..., d)
    jac: object                     # (..., d) -> (..., d, d)
    smoothness: float = math.inf    # C^r order, math.inf for C-infinity
    inverse: "SmoothMap | None" = None
    lipschitz: float = 0.0          # inflated grid-sup of |Df|_inf
    constant_jacobian: bool = False
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.manifold.dim

    def evaluate(self, x):
        return self.manifold.canonicalize(self.raw(np.asarray(x, dtype=float)))

    def jacobian(self, x):
        return self.jac(np.asarray(x, dtype=float))

    def iterate_raw(self, x, n):
        """Apply the lift n times (no canonicalization)."""
        y = np.asarray(x, dtype=float)
        for _ in range(n):
            y = self.raw(y)
        return y


def _grid_lipschitz(manifold, jac, per_axis=_LIP_GRID):
    pts = manifold.grid(per_axis)
    J = jac(pts)
    # operator norm for the max metric: max absolute row sum
    op = np.abs(J).sum(axis=-1).max(axis=-1)
    return float(op.max()) * LIPSCHITZ_SAFETY


def _finish(name, manifold, raw, jac, smoothness=math.inf, inverse=None,
            constant_jacobian=False, params=None, lipschitz=None):
    lip = lipschitz if lipschitz is not None else _grid_lipschitz(manifold, jac)
    return SmoothMap(name=name, manifold=manifold, raw=raw, jac=jac,
                     smoothness=smoothness, inverse=inverse,
                     lipschitz=lip, constant_jacobian=constant_jacobian,
                     params=dict(params or {}))


# ---------------------------------------------------------------------------
# catalog families
# ---------------------------------------------------------------------------

def _logistic():
    man = cube(1, [(0.0, 1.0)])

    def raw(x):
        return 4.0 * x * (1.0 - x)

    def jac(x):
        return (4.0 - 8.0 * x)[..., None]

    return _finish("logistic", man, raw, jac, params={})


def _quadratic(a):
    if not 0.0 < a <= 2.0:
        raise ValueError(f"quadratic family needs 0 < a <= 2, got {a}")
    man = cube(1, [(-1.0, 1.0)])

    def raw(x):
        return 1.0 - a * x * x

    def jac(x):
        return (-2.0 * a * x)[..., None]

    return _finish("quadratic", man, raw, jac, params={"a": a})


def _toral(matrix):
    A = np.asarray(matrix)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("toral endomorphism needs a square matrix")
    if not np.all(A == np.round(A)):
        raise ValueError("toral endomorphism needs integer entries")
    A = A.astype(np.int64)
    det = int(round(np.linalg.det(A.astype(float))))
    if det == 0:
        raise ValueError("toral matrix must be nonsingular")
    d = A.shape[0]
    man = torus(d)
    Af = A.astype(float)

    def raw(x):
        return x @ Af.T

    def jac(x):
        shape = np.shape(x)[:-1] + (d, d)
        return np.broadcast_to(Af, shape).copy()

    inv = None
    if abs(det) == 1:
        # adjugate / det stays integer, so the inverse is again toral
        Ainv = np.round(np.linalg.inv(Af)).astype(np.int64)
        inv_f = Ainv.astype(float)

        def raw_inv(x, _M=inv_f):
            return x @ _M.T

        def jac_inv(x, _M=inv_f):
            shape = np.shape(x)[:-1] + (d, d)
            return np.broadcast_to(_M, shape).copy()

        inv = _finish("toral_inverse", man, raw_inv, jac_inv,
                      constant_jacobian=True,
                      params={"matrix": Ainv.tolist()})

    fwd = _finish("toral", man, raw, jac, inverse=inv,
                  constant_jacobian=True,
                  params={"matrix": A.tolist(), "det": det})
    if inv is not None:
        object.__setattr__(inv, "inverse", fwd)
    return fwd


def _coupled_quadratic(eps, eps_max=0.05):
    if abs(eps) > eps_max:
        raise ValueError(
            f"coupled quadratic requires |eps| <= {eps_max}, got {eps}")
    man = cube(2, [(-1.0, 1.0), (-1.0, 1.0)])

    def raw(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([1.0 - 1.8 * x * x - eps * y * y,
                         1.0 - 1.9 * y * y - eps * x * x], axis=-1)

    def jac(p):
        x, y = p[..., 0], p[..., 1]
        z = np.zeros_like(x)
        row0 = np.stack([-3.6 * x, -2.0 * eps * y + z], axis=-1)
        row1 = np.stack([-2.0 * eps * x + z, -3.8 * y], axis=-1)
        return np.stack([row0, row1], axis=-2)

    m = _finish("coupled_quadratic", man, raw, jac, params={"eps": eps})
    # invariance of the square, checked on the image of a sampling grid
    img = m.raw(man.grid(41))
    if not bool(np.all((img >= -1 - 1e-12) & (img <= 1 + 1e-12))):
        raise ValueError("coupled quadratic does not preserve [-1,1]^2")
    return m


def _flambda(lam, d=2):
    if d < 2:
        raise ValueError("semicontinuity family needs dimension >= 2")
    man = cube(d, [(0.0, 1.0)] * d)
    h = math.exp(-float(lam) ** 2)   # smooth bump, equals 1 iff lam == 0

    def raw(p):
        out = np.array(p, dtype=float, copy=True)
        x1 = p[..., 0]
        x2 = p[..., 1]
        out[..., 0] = h * x1
        out[..., 1] = 4.0 * x1 * x2 * (1.0 - x2)
        return out

    def jac(p):
        x1, x2 = p[..., 0], p[..., 1]
        shape = np.shape(x1) + (d, d)
        J = np.zeros(shape)
        J[..., 0, 0] = h
        J[..., 1, 0] = 4.0 * x2 * (1.0 - x2)
        J[..., 1, 1] = 4.0 * x1 * (1.0 - 2.0 * x2)
        for i in range(2, d):
            J[..., i, i] = 1.0
        return J

    return _finish("flambda", man, raw, jac, params={"lam": lam, "d": d})


def _rotation(angles):
    theta = np.atleast_1d(np.asarray(angles, dtype=float))
    d = theta.shape[0]
    man = torus(d)

    def raw(x):
        return x + theta

    def jac(x):
        shape = np.shape(x)[:-1] + (d, d)
        return np.broadcast_to(np.eye(d), shape).copy()

    inv = None

    def raw_inv(x):
        return x - theta

    inv = _finish("rotation_inverse", man, raw_inv, jac,
                  constant_jacobian=True, params={"angles": (-theta).tolist()})
    fwd = _finish("rotation", man, raw, jac, inverse=inv,
                  constant_jacobian=True, params={"angles": theta.tolist()})
    object.__setattr__(inv, "inverse", fwd)
    return fwd


def _identity(manifold=None):
    man = manifold if manifold is not None else torus(2)

    def raw(x):
        return np.array(x, dtype=float, copy=True)

    def jac(x):
        d = man.dim
        shape = np.shape(x)[:-1] + (d, d)
        return np.broadcast_to(np.eye(d), shape).copy()

    m = _finish("identity", man, raw, jac, constant_jacobian=True)
    object.__setattr__(m, "inverse", m)
    return m


_BUILDERS = {
    "logistic": lambda p: _logistic(),
    "quadratic": lambda p: _quadratic(p.get("a", 2.0)),
    "toral": lambda p: _toral(p["matrix"]),
    "cat": lambda p: _toral([[2, 1], [1, 1]]),
    "diag23": lambda p: _toral([[2, 0], [0, 3]]),
    "coupled_quadratic": lambda p: _coupled_quadratic(
        p.get("eps", 0.0), p.get("eps_max", 0.05)),
    "flambda": lambda p: _flambda(p.get("lam", 0.0), p.get("d", 2)),
    "rotation": lambda p: _rotation(p.get("angles", [(math.sqrt(5) - 1) / 2])),
    "identity": lambda p: _identity(
        torus(p["d"]) if p.get("manifold", "torus") == "torus"
        else cube(p["d"])),
}


def catalog_names():
    return sorted(_BUILDERS)


def load_manifest():
    with resources.files("entrodim.data").joinpath("catalog.json").open() as fh:
        return json.load(fh)


def build_system(name, params=None):
    """Instantiate a catalog map by name; unknown names and bad parameters
    are rejected with a descriptive error."""
    params = dict(params or {})
    if name == "skew_product":
        raise ValueError(
            "the skew product is driven digit-wise; use the skewlab module "
            "(entrodim.skewlab) instead of build_system")
    if name not in _BUILDERS:
        raise ValueError(
            f"unknown system {name!r}; available: {', '.join(catalog_names())}")
    try:
        return _BUILDERS[name](params)
    except KeyError as exc:
        raise ValueError(f"system {name!r} missing parameter {exc}") from exc


# ---------------------------------------------------------------------------
# orbits and periodic points
# ---------------------------------------------------------------------------

def iterate(f, x, n):
    """Orbit (x, f x, ..., f^n x) as an array of canonical points."""
    if n < 0:
        raise ValueError("orbit length must be >= 0")
    x = f.manifold.canonicalize(np.asarray(x, dtype=float))
    out = np.empty((n + 1,) + x.shape)
    out[0] = x
    for k in range(n):
        x = f.evaluate(x)
        out[k + 1] = x
    return out


def toral_eval_rational(f, point):
    """Exact matrix action mod 1 on rational points of a toral map."""
    if f.name not in ("toral", "toral_inverse"):
        raise ValueError("exact rational evaluation is for toral maps only")
    A = f.params["matrix"]
    pt = [Fraction(p) for p in point]
    out = []
    for row in A:
        s = sum(Fraction(a) * p for a, p in zip(row, pt))
        out.append(s - math.floor(s))
    return tuple(out)


def _toral_periodic_count(A, n):
    """|det(A^n - I)| with exact integer arithmetic."""
    d = len(A)
    M = [[Fraction(A[i][j]) for j in range(d)] for i in range(d)]
    # integer matrix power
    P = [[Fraction(1) if i == j else Fraction(0) for j in range(d)]
         for i in range(d)]
    B = M
    e = n
    while e:
        if e & 1:
            P = [[sum(P[i][k] * B[k][j] for k in range(d)) for j in range(d)]
                 for i in range(d)]
        B = [[sum(B[i][k] * B[k][j] for k in range(d)) for j in range(d)]
             for i in range(d)]
        e >>= 1
    for i in range(d):
        P[i][i] -= 1
    # Bareiss-free exact determinant via fraction Gaussian elimination
    det = Fraction(1)
    rows = [row[:] for row in P]
    for col in range(d):
        piv = None
        for r in range(col, d):
            if rows[r][col] != 0:
                piv = r
                break
        if piv is None:
            return 0
        if piv != col:
            rows[col], rows[piv] = rows[piv], rows[col]
            det = -det
        det *= rows[col][col]
        inv = rows[col][col]
        for r in range(col + 1, d):
            factor = rows[r][col] / inv
            for c in range(col, d):
                rows[r][c] -= factor * rows[col][c]
    assert det.denominator == 1
    return abs(int(det))


def count_periodic(f, n):
    """Exact number of solutions of f^n x = x for the supported families."""
    if n < 1:
        raise ValueError("period must be >= 1")
    if f.name == "logistic":
        # the n-fold map has 2^n full monotone laps, one diagonal crossing each
        return 2 ** n
    if f.name in ("toral", "toral_inverse"):
        return _toral_periodic_count(f.params["matrix"], n)
    if f.name in ("rotation", "rotation_inverse"):
        angles = f.params["angles"]
        for th in angles:
            frac = Fraction(th).limit_denominator(10 ** 12)
            if abs(float(frac) - th) < 1e-15 and (n * frac) % 1 == 0:
                raise ValueError(
                    "rational rotation has a continuum of period-n points")
        return 0
    raise ValueError(f"no analytic periodic count available for {f.name!r}")
