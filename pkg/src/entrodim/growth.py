"""Volume growth of singular disks under iteration.

Volumes are computed by midpoint quadrature of the k-dimensional Jacobian
of the iterated disk, with chain-rule frames along orbits and periodic QR
re-orthogonalization so long products neither overflow nor collapse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import covering as cov
from . import geometry as geo

REORTHO_EVERY = 10
TAIL_WINDOW = 5


@dataclass
class VolumeSeries:
    label: str
    ns: np.ndarray
    values: np.ndarray             # vol(f^n o phi)
    gamma: float                   # tail-window max of LS slopes
    window_slopes: list
    flags: dict = field(default_factory=dict)


def _midpoint_params(k, per_axis):
    if k == 0:
        return np.zeros((1, 0)), 1.0
    w = 2.0 / per_axis
    axes = [np.linspace(-1.0 + w / 2, 1.0 - w / 2, per_axis)
            for _ in range(k)]
    mesh = np.meshgrid(*axes, indexing="ij")
    T = np.stack([m.ravel() for m in mesh], axis=-1)
    return T, w ** k


def _frame(disk, T, weights=None):
    """d x k derivative matrix of the disk lift at each parameter node."""
    cols = []
    for ax in range(disk.k):
        s = tuple(1 if a == ax else 0 for a in range(disk.k))
        cols.append(disk.partial(T, s))
    J = np.stack(cols, axis=-1)            # (N, d, k)
    if weights is not None:
        J = J * np.asarray(weights, dtype=float)[None, :, None]
    return J


def _gram_volume_density(M):
    """sqrt(det(M^T M)) per node for (N, d, k) frames."""
    G = np.einsum("ndk,ndl->nkl", M, M)
    det = np.linalg.det(G)
    return np.sqrt(np.maximum(det, 0.0))


def disk_volume(phi, per_axis=None, weights=None):
    """k-volume of a disk by composite midpoint quadrature.

    Returns (volume, degenerate_flag); the flag marks a rank-deficient
    frame across the whole grid.
    """
    if phi.k == 0:
        return 0.0, True
    per_axis = per_axis or max(phi.gridres, 16)
    T, cell = _midpoint_params(phi.k, per_axis)
    dens = _gram_volume_density(_frame(phi, T, weights))
    vol = float(dens.sum() * cell)
    return vol, bool(dens.max() < 1e-14)


def _tail_gamma(ns, logs, window=TAIL_WINDOW):
    """Max over tail windows of LS slopes; a limsup surrogate that keeps
    oscillating growth visible."""
    slopes = []
    ns = np.asarray(ns, dtype=float)
    logs = np.asarray(logs, dtype=float)
    m = len(ns)
    w = min(window, m)
    if m < 2:
        return 0.0, []
    for start in range(0, m - w + 1):
        sl = np.polyfit(ns[start:start + w], logs[start:start + w], 1)[0]
        slopes.append(float(sl))
    if not slopes:
        slopes = [float(np.polyfit(ns, logs, 1)[0])]
    return max(slopes), slopes


def volume_growth(f, phi, horizon, per_axis=None, weights=None,
                  refine_tol=0.01, max_refine=2):
    """vol(f^n o phi) for n = 0..horizon with the fitted growth exponent.

    The quadrature grid is refined (doubled) until the horizon volume
    moves by less than refine_tol relatively, or the refinement budget is
    hit (then the series carries an uncertainty flag).
    """
    if phi.k == 0:
        ns = np.arange(horizon + 1)
        return VolumeSeries(label=phi.label, ns=ns,
                            values=np.zeros(horizon + 1), gamma=0.0,
                            window_slopes=[], flags={"degenerate": True})
    per_axis = per_axis or max(phi.gridres, 16)
    flags = {}
    prev = None
    for attempt in range(max_refine + 1):
        vals = _volume_series_once(f, phi, horizon, per_axis, weights)
        if prev is not None:
            move = abs(vals[-1] - prev[-1]) / max(abs(prev[-1]), 1e-300)
            if move < refine_tol:
                break
        prev = vals
        if attempt < max_refine:
            per_axis *= 2
    else:
        flags["quadrature_unconverged"] = True
    ns = np.arange(horizon + 1)
    pos = vals > 0
    if not pos.all():
        flags["degenerate"] = True
        gamma, slopes = 0.0, []
    else:
        gamma, slopes = _tail_gamma(ns, np.log(vals))
    return VolumeSeries(label=phi.label, ns=ns, values=vals, gamma=gamma,
                        window_slopes=slopes, flags=flags)


def _volume_series_once(f, phi, horizon, per_axis, weights):
    T, cell = _midpoint_params(phi.k, per_axis)
    M = _frame(phi, T)                    # frames evolve unweighted
    x = phi.lift(T)
    N, d, k = M.shape
    logfac = np.zeros(N)
    out = np.empty(horizon + 1)
    wvec = None if weights is None else np.asarray(weights, dtype=float)

    def record(n):
        Mw = M if wvec is None else M * wvec[None, :, None]
        dens = _gram_volume_density(Mw) * np.exp(logfac)
        out[n] = dens.sum() * cell

    record(0)
    for n in range(1, horizon + 1):
        J = f.jac(x)
        M = np.einsum("nij,njk->nik", J, M)
        x = f.raw(x)
        if k >= 2 and n % REORTHO_EVERY == 0:
            Q, R = np.linalg.qr(M)
            diag = np.abs(np.einsum("nkk->nk", R))
            good = (diag > 1e-290).all(axis=1)
            logdet = np.where(good, np.log(np.maximum(diag, 1e-300)).sum(axis=1), 0.0)
            logfac = logfac + logdet
            M = np.where(good[:, None, None], Q, M)
        elif k == 1:
            nrm = np.linalg.norm(M[:, :, 0], axis=1)
            big = nrm > 1e12
            if big.any():
                logfac = logfac + np.where(big, np.log(np.maximum(nrm, 1e-300)), 0.0)
                M[big] = M[big] / nrm[big, None, None]
        record(n)
    return out


# ---------------------------------------------------------------------------
# curve covering vs volume inequality
# ---------------------------------------------------------------------------

def length_vs_covering_check(f, phi, eps, horizon, schedule=None, tol=0.5,
                             rng=None):
    """Check eps * r_f(eps, n, phi) <= max_{k<n} vol(f^k o phi) + 1 + tol
    for a unit-length curve, every n up to the horizon.

    A violation indicates an estimator bug (the inequality is a theorem
    for curves), so the report carries the witnessing horizon.
    """
    if phi.k != 1:
        raise ValueError("curve inequality needs a 1-disk")
    vol0, degenerate = disk_volume(phi)
    if degenerate or abs(vol0 - 1.0) > 0.05:
        raise ValueError(f"curve must have unit length, got {vol0:.4f}")
    series = volume_growth(f, phi, horizon)
    schedule = schedule or cov.Schedule()
    T, pts, desc = cov.disk_cloud(f, phi, schedule)
    caps, _ = cov.resolvable_horizons(f, T, phi, [eps], horizon,
                                      factor=schedule.resolution_factor)
    n_hi = min(horizon, caps[eps])
    orb = cov.orbit_tensor(f, pts, n_hi)
    rows = []
    ok = True
    witness = None
    for n in range(1, n_hi + 1):
        cnt, _ = cov._count_net(orb[:, :n, :], f.manifold, eps, n,
                                schedule.method, rng=rng)
        lhs = eps * cnt
        rhs = float(series.values[:n].max()) + 1.0 + tol
        good = lhs <= rhs
        rows.append({"n": n, "count": cnt, "lhs": lhs, "rhs": rhs,
                     "ok": good})
        if not good and witness is None:
            witness = n
            ok = False
    return {"eps": eps, "rows": rows, "ok": ok, "witness_n": witness,
            "horizon_used": n_hi, "volumes": series.values[:n_hi + 1].tolist()}


def metric_invariance_check(f, phi, horizon, weights=(0.7, 1.6),
                            tol=0.02):
    """Growth exponents under a reweighted product metric should move by
    less than tol."""
    base = volume_growth(f, phi, horizon)
    d = f.dim
    w = np.resize(np.asarray(weights, dtype=float), d)
    alt = volume_growth(f, phi, horizon, weights=w)
    return {
        "gamma": base.gamma,
        "gamma_weighted": alt.gamma,
        "delta": abs(base.gamma - alt.gamma),
        "ok": abs(base.gamma - alt.gamma) < tol,
        "weights": w.tolist(),
    }
