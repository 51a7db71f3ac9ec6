"""Lyapunov spectra along orbits and the Ruelle-type inequality checks.

Spectra come from QR-reorthogonalized cocycle products.  The inequality
checks never estimate measure entropy from data: the h-value must carry
its provenance (analytic, branch-count oracle, or a flagged covering
estimate), and upper bounds for uniform dimensional entropies are only
accepted from the multilinear-norm certificate or analytic values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOG_CLAMP = -50.0
UNRELIABLE_HIT_FRACTION = 1e-3

ANALYTIC = "analytic"
BRANCH_COUNT = "branch_count"
COVERING_ESTIMATE = "covering_estimate"
LAMBDA_NORM = "lambda_norm"

_H_UPPER_OK = (ANALYTIC, LAMBDA_NORM)


@dataclass(frozen=True)
class RateValue:
    value: float
    provenance: str
    tol: float = 0.02
    note: str = ""


@dataclass
class LyapunovSpectrum:
    exponents: np.ndarray          # sorted descending
    orbit_length: int
    transient: int
    basepoint: np.ndarray
    convergence: np.ndarray        # last-quarter drift per exponent
    singular_hits: int = 0
    reliable: bool = True

    def positive_sum(self):
        return float(np.clip(self.exponents, 0.0, None).sum())


def _orbit_points(f, x0, total):
    x = f.manifold.canonicalize(np.asarray(x0, dtype=float))
    pts = np.empty((total, f.dim))
    for i in range(total):
        pts[i] = x
        x = f.evaluate(x)
    return pts


def lyapunov_spectrum(f, x0, n=100_000, transient=1_000):
    """QR-cocycle Lyapunov spectrum along the orbit of x0.

    Vanishing derivatives (the interval family hits them at the critical
    point) clamp the log at -50 and are counted; runs with too many hits
    are marked unreliable.
    """
    if n < 10 * transient:
        raise ValueError("orbit length must be >= 10x the transient")
    d = f.dim
    pts = _orbit_points(f, x0, transient + n)
    base = pts[0].copy()
    post = pts[transient:]
    mark = (3 * n) // 4
    if d == 1:
        derivs = np.abs(f.jacobian(post)[..., 0, 0])
        logs = np.where(derivs > 0, np.log(np.maximum(derivs, 1e-300)),
                        LOG_CLAMP)
        hits = int((logs <= LOG_CLAMP).sum())
        logs = np.maximum(logs, LOG_CLAMP)
        lam = np.array([logs.mean()])
        lam_3q = np.array([logs[:mark].mean()])
        drift = np.abs(lam - lam_3q)
    else:
        J = f.jacobian(post)             # (n, d, d) batched
        Q = np.eye(d)
        sums = np.zeros(d)
        sums_3q = np.zeros(d)
        hits = 0
        for step in range(n):
            B = J[step] @ Q
            Q, R = np.linalg.qr(B)
            diag = np.diag(R)
            sign = np.where(diag < 0, -1.0, 1.0)
            Q = Q * sign[None, :]
            adiag = np.abs(diag)
            logs = np.where(adiag > 0, np.log(np.maximum(adiag, 1e-300)),
                            LOG_CLAMP)
            small = logs <= LOG_CLAMP
            if small.any():
                hits += 1
                logs = np.maximum(logs, LOG_CLAMP)
            sums += logs
            if step < mark:
                sums_3q += logs
        lam = sums / n
        lam_3q = sums_3q / max(mark, 1)
        order = np.argsort(lam)[::-1]
        lam = lam[order]
        drift = np.abs(lam - lam_3q[order])
    order = np.argsort(lam)[::-1]
    lam = np.asarray(lam)[order]
    drift = np.asarray(drift)[order]
    frac = hits / n
    return LyapunovSpectrum(exponents=lam, orbit_length=n,
                            transient=transient, basepoint=base,
                            convergence=drift, singular_hits=hits,
                            reliable=frac <= UNRELIABLE_HIT_FRACTION)


def average_log_jacobian_det(f, x0, n=100_000, transient=1_000):
    """Orbit average of log |det Df| with clamping consistent with the
    spectrum; the QR telescoping identity ties it to the exponent sum."""
    pts = _orbit_points(f, x0, transient + n)
    dets = np.abs(np.linalg.det(f.jacobian(pts[transient:])))
    floor = math.exp(LOG_CLAMP)
    logs = np.where(dets > floor, np.log(np.maximum(dets, 1e-300)),
                    LOG_CLAMP)
    return float(logs.mean())


@dataclass
class MarginReport:
    name: str
    margin: float
    passed: bool
    tol: float
    terms: dict = field(default_factory=dict)
    status: str = "checked"


def ruelle_check(h_value, spectrum, tol=0.02):
    """Margin of the entropy-vs-positive-exponents inequality."""
    pos = spectrum.positive_sum()
    margin = pos - h_value.value
    return MarginReport(name="ruelle", margin=margin,
                        passed=margin >= -tol, tol=tol,
                        terms={"positive_exponent_sum": pos,
                               "h": h_value.value,
                               "h_provenance": h_value.provenance})


def ruelle_newhouse_check(h_value, H_upper, spectrum, k, tol=0.02):
    """Margin of h <= H^k_upper + sum of positive exponents beyond k.

    H_upper must be a genuine upper bound (multilinear-norm certificate or
    analytic); estimator lower bounds are rejected with a skipped status.
    At k = 0 this reduces to the plain Ruelle check.
    """
    if H_upper.provenance not in _H_UPPER_OK:
        return MarginReport(
            name=f"ruelle_newhouse_k{k}", margin=float("nan"), passed=False,
            tol=tol, status="no valid upper bound",
            terms={"H_provenance": H_upper.provenance})
    lam = spectrum.exponents
    tail = float(np.clip(lam[k:], 0.0, None).sum()) if k < lam.size else 0.0
    margin = H_upper.value + tail - h_value.value
    return MarginReport(
        name=f"ruelle_newhouse_k{k}", margin=margin, passed=margin >= -tol,
        tol=tol,
        terms={"H_upper": H_upper.value, "tail_positive_sum": tail,
               "h": h_value.value, "k": k,
               "h_provenance": h_value.provenance,
               "H_provenance": H_upper.provenance})


def seed_stability(f, seeds, n=20_000, transient=500):
    """Spectra from several seeds; reports the spread against the drift.

    Failures are informational (multi-attractor systems legitimately
    disagree across seeds).
    """
    spectra = [lyapunov_spectrum(f, s, n=n, transient=transient)
               for s in seeds]
    tops = np.array([sp.exponents for sp in spectra])
    spread = tops.max(axis=0) - tops.min(axis=0)
    drift = np.max([sp.convergence for sp in spectra], axis=0)
    return {
        "spread": spread,
        "allowed": 3.0 * np.maximum(drift, 1e-4),
        "agree": bool(np.all(spread <= 3.0 * np.maximum(drift, 1e-4))),
        "exponents": tops,
    }
