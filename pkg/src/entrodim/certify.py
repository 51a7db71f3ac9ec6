"""Upper-bound certificates from multilinear norms of the differential,
entropy-expansion / entropy-hyperbolicity verdicts, and periodic-point
lower-bound checks.

Certificates are conservative: grid-sup norms are inflated (except for
constant-Jacobian maps, where they are exact) and a verdict is downgraded
when grid refinement moves the norm.  The sufficient conditions here can
prove but never refute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import systems as sy
from .lyapunov import ANALYTIC, LAMBDA_NORM, RateValue

NORM_INFLATION = 1.05
MARGIN_FLOOR = 0.05
REFINE_DRIFT_LIMIT = 0.02

PROVED = "Proved"
INCONCLUSIVE = "Inconclusive"
REFUTED = "RefutedAtResolution"

ENTROPY_EXPANDING = "EntropyExpanding"
ENTROPY_HYPERBOLIC = "EntropyHyperbolic"


@dataclass(frozen=True)
class LambdaKNorm:
    k: int
    value: float                  # raw grid sup (exact for linear maps)
    inflated: float               # value * inflation factor
    inflation: float
    grid: int
    refined_value: float          # sup on the doubled grid
    stable: bool                  # refinement moved the sup by < 2%

    @property
    def log_value(self):
        return math.log(self.inflated) if self.inflated > 0 else float("-inf")


def _top_products_sup(f, k, per_axis):
    pts = f.manifold.grid(per_axis)
    J = f.jacobian(pts)
    sv = np.linalg.svd(J, compute_uv=False)       # (N, d) descending
    best = 1.0
    for ell in range(1, k + 1):
        prod = np.prod(sv[:, :ell], axis=1)
        best = max(best, float(prod.max()))
    return best


def lambda_k_norm(f, k, grid=64):
    """Grid sup over x of max_{1<=l<=k} (product of the top l singular
    values of Df(x)); k = 0 gives the empty product 1.

    Constant-Jacobian maps get the exact value with no inflation.
    """
    if k < 0 or k > f.dim:
        raise ValueError("k must lie in 0..d")
    if k == 0:
        return LambdaKNorm(k=0, value=1.0, inflated=1.0, inflation=1.0,
                           grid=0, refined_value=1.0, stable=True)
    if f.constant_jacobian:
        v = _top_products_sup(f, k, 2)
        return LambdaKNorm(k=k, value=v, inflated=v, inflation=1.0,
                           grid=2, refined_value=v, stable=True)
    v1 = _top_products_sup(f, k, grid)
    v2 = _top_products_sup(f, k, 2 * grid)
    stable = abs(v2 - v1) <= REFINE_DRIFT_LIMIT * max(v1, 1e-300)
    value = max(v1, v2)
    return LambdaKNorm(k=k, value=value, inflated=value * NORM_INFLATION,
                       inflation=NORM_INFLATION, grid=grid,
                       refined_value=v2, stable=stable)


@dataclass
class Certificate:
    kind: str
    verdict: str
    witnesses: dict = field(default_factory=dict)
    h_top_source: str = ""


def certify_entropy_expanding(f, h_top_lower, floor=MARGIN_FLOOR, grid=64):
    """Sufficient test: log |Lambda^{d-1} Df| < h_top.

    Inconclusive when the test fails (the condition is sufficient, not
    necessary).  The weaker (d-1) lip test is reported alongside.
    """
    d = f.dim
    norm = lambda_k_norm(f, d - 1, grid=grid)
    lhs = norm.log_value
    margin = h_top_lower.value - floor - lhs
    lip = max(math.log(f.lipschitz), 0.0)
    weaker = (d - 1) * lip < h_top_lower.value - floor
    verdict = PROVED if margin > 0 else INCONCLUSIVE
    if not norm.stable and verdict == PROVED:
        verdict = INCONCLUSIVE
    wit = {
        "log_lambda_norm_dminus1": lhs,
        "h_top_lower": h_top_lower.value,
        "margin": margin,
        "floor": floor,
        "norm_stable": norm.stable,
        "weaker_lip_test": weaker,
        "lip": lip,
        "estimated_h": h_top_lower.provenance == "covering_estimate",
    }
    return Certificate(kind=ENTROPY_EXPANDING, verdict=verdict,
                       witnesses=wit, h_top_source=h_top_lower.provenance)


def certify_entropy_hyperbolic(f, h_top_lower, d1, d2, floor=MARGIN_FLOOR,
                               grid=64):
    """Sufficient test for a diffeomorphism with a candidate split
    d1 + d2 = d: multilinear norms of order d1-1 (forward map) and d2-1
    (inverse map) both below h_top.

    Both the inverse-map reading and the forward-only reading of the
    second bound are computed; the verdict uses the inverse one.
    """
    if f.inverse is None:
        raise ValueError("entropy-hyperbolicity certificate needs a "
                         "diffeomorphism (entropy-expanding maps are "
                         "never diffeomorphisms)")
    if d1 + d2 != f.dim:
        raise ValueError("need d1 + d2 = d")
    n_fwd = lambda_k_norm(f, d1 - 1, grid=grid)
    n_inv = lambda_k_norm(f.inverse, d2 - 1, grid=grid)
    n_fwd_alt = lambda_k_norm(f, d2 - 1, grid=grid)
    h = h_top_lower.value
    ok = (n_fwd.log_value < h - floor) and (n_inv.log_value < h - floor)
    stable = n_fwd.stable and n_inv.stable
    verdict = PROVED if (ok and stable) else INCONCLUSIVE
    wit = {
        "log_norm_d1m1_fwd": n_fwd.log_value,
        "log_norm_d2m1_inv": n_inv.log_value,
        "log_norm_d2m1_fwd_reading": n_fwd_alt.log_value,
        "h_top_lower": h,
        "floor": floor,
        "d1": d1,
        "d2": d2,
        "norms_stable": stable,
    }
    return Certificate(kind=ENTROPY_HYPERBOLIC, verdict=verdict,
                       witnesses=wit, h_top_source=h_top_lower.provenance)


def refute_entropy_expanding(f, H_dminus1_lower, h_top_upper, margin=0.05):
    """Direct refutation: a disk family exhibiting H^{d-1} >= h_top with
    margin.  This is the only path to RefutedAtResolution."""
    if H_dminus1_lower >= h_top_upper + margin:
        return Certificate(kind=ENTROPY_EXPANDING, verdict=REFUTED,
                           witnesses={"H_dminus1_lower": H_dminus1_lower,
                                      "h_top_upper": h_top_upper})
    return Certificate(kind=ENTROPY_EXPANDING, verdict=INCONCLUSIVE,
                       witnesses={"H_dminus1_lower": H_dminus1_lower,
                                  "h_top_upper": h_top_upper})


MULTIPLICATIVE = "Multiplicative"
LOGARITHMIC = "Logarithmic"


def periodic_bound_check(f, h_value, horizons, mode=MULTIPLICATIVE,
                         period=1, tol=0.05):
    """Check periodic-point lower bounds against an entropy value.

    Multiplicative: e^{-n h} #Fix(f^n) stays positive (and does not trend
    to zero) along multiples of the period.  Logarithmic: the best
    (1/n) log #Fix across horizons reaches h - tol.
    """
    usable = [n for n in horizons if n % period == 0]
    if not usable:
        raise ValueError("no horizons compatible with the period")
    counts = {}
    for n in usable:
        counts[n] = sy.count_periodic(f, n)
    report = {"mode": mode, "h": h_value, "counts": counts,
              "period": period}
    if mode == MULTIPLICATIVE:
        ratios = {n: math.exp(-n * h_value) * counts[n] for n in usable}
        report["ratios"] = ratios
        vals = [ratios[n] for n in sorted(ratios)]
        positive = min(vals) > 0
        # non-vanishing trend: the tail does not collapse against the peak
        trend_ok = vals[-1] >= 0.2 * max(vals) if max(vals) > 0 else False
        report["passed"] = bool(positive and trend_ok)
        report["min_ratio"] = min(vals) if vals else 0.0
    elif mode == LOGARITHMIC:
        if all(counts[n] == 0 for n in usable):
            report["passed"] = h_value <= tol
            report["note"] = "zero periodic counts; vacuous at h = 0"
        else:
            best = max(math.log(max(counts[n], 1)) / n for n in usable)
            report["log_rate"] = best
            report["passed"] = bool(best >= h_value - tol)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return report


def rate_from_analytic(value, note=""):
    return RateValue(value=value, provenance=ANALYTIC, note=note)


def rate_from_lambda_norm(norm):
    return RateValue(value=norm.log_value, provenance=LAMBDA_NORM,
                     note=f"Lambda^{norm.k} grid sup (inflated "
                          f"x{norm.inflation:g})")
