"""Dimensional entropy profiles over disk families, entropy dimensions,
and the gap / semicontinuity / sub-disk experiments.

All family suprema are computed over finite enumerations, so every h^k
and H^k reported here is a lower bound of the true supremum and is
flagged as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import covering as cov
from . import geometry as geo
from . import systems as sy


@dataclass
class KEntry:
    k: int
    h_lower: float
    H_lower: float
    per_disk: list                 # (label, slope or None)
    flags: dict
    h_windows: dict = field(default_factory=dict)
    H_per_eps: dict = field(default_factory=dict)


@dataclass
class DimensionalEntropyProfile:
    k_values: tuple
    h_lower: dict                  # k -> rate lower bound
    H_lower: dict
    entries: dict                  # k -> KEntry
    family_labels: dict
    quality: dict

    def check_invariants(self, tol=1e-9):
        ks = sorted(self.k_values)
        problems = []
        if self.h_lower.get(0, 0.0) > tol or self.H_lower.get(0, 0.0) > tol:
            problems.append("k=0 entropy must vanish")
        for a, b in zip(ks, ks[1:]):
            if self.h_lower[b] < self.h_lower[a] - 1e-6:
                problems.append(f"h_lower not monotone at k={b}")
            if self.H_lower[b] < self.H_lower[a] - 1e-6:
                problems.append(f"H_lower not monotone at k={b}")
        for k in ks:
            if self.h_lower[k] > self.H_lower[k] + 1e-9 + 0.02:
                problems.append(f"h_lower > H_lower at k={k}")
        return problems


def dimensional_entropy(f, family, schedule, rng=None, budget=None):
    """Per-k entry: ordinary (sup of per-disk rates) and uniform
    (rate of per-n maxima) entropy lower bounds over the enumerated family.
    """
    disks, flags = family.enumerate(budget=budget)
    if not disks:
        raise ValueError("family enumerated to nothing")
    k = family.k
    per_disk = []
    all_ests = []
    h_best = 0.0
    h_windows = {}
    for disk in disks:
        try:
            ests, rate = cov.disk_rate(f, disk, schedule, rng=rng)
            per_disk.append((disk.label, rate.slope))
            h_windows[disk.label] = rate.window
            if rate.slope > h_best:
                h_best = rate.slope
            all_ests.append(ests)
        except cov.SaturationError:
            per_disk.append((disk.label, None))
            all_ests.append([])
    # uniform entropy: max count over the family per (eps, n), restricted
    # to horizons every member resolves, then the usual rate fit
    H_rate = _uniform_rate(all_ests, schedule)
    H_best = H_rate.slope if H_rate is not None else 0.0
    entry = KEntry(k=k, h_lower=h_best, H_lower=max(H_best, h_best),
                   per_disk=per_disk, flags=dict(flags),
                   h_windows=h_windows,
                   H_per_eps=H_rate.per_eps if H_rate is not None else {})
    entry.flags["lower_bound"] = True
    return entry


def _uniform_rate(all_ests, schedule):
    pool = {}
    n_disks = len([es for es in all_ests if es])
    if n_disks == 0:
        return None
    for ests in all_ests:
        for e in ests:
            pool.setdefault((e.eps, e.n), []).append(e)
    merged = []
    for (eps, n), group in sorted(pool.items()):
        if len(group) < n_disks:
            continue              # some disk never resolved this horizon
        if any(e.saturated for e in group):
            continue
        count = max(e.count for e in group)
        marginal = any(e.marginal for e in group)
        merged.append(cov.CoveringEstimate(
            eps=eps, n=n, count=count, method=group[0].method,
            cloud_size=max(e.cloud_size for e in group),
            saturated=False, marginal=marginal,
            cloud_desc="family-max"))
    if not merged:
        return None
    try:
        return cov.fit_rate(merged, n_min=schedule.n_min)
    except cov.SaturationError:
        return None


def entropy_profile(f, families, h_top_schedule=None, schedule=None,
                    rng=None, budget=None):
    """Profile h^k/H^k lower bounds for k = 0..d from per-k families.

    families: dict k -> DiskFamily for 1 <= k <= d (k=0 is automatic).
    """
    schedule = schedule or cov.Schedule()
    d = f.dim
    entries = {}
    # k = 0: single points carry no orbit growth by definition of the counts
    pt = geo.point_disk(f.manifold, f.manifold.grid(2)[0])
    ests = cov.estimate_cloud(f, pt.cloud(), schedule, disk=pt,
                              cloud_params=pt.params_grid(), rng=rng)
    slope0 = 0.0
    try:
        slope0 = cov.fit_rate(ests, n_min=schedule.n_min).slope
    except cov.SaturationError:
        pass
    entries[0] = KEntry(k=0, h_lower=slope0, H_lower=slope0,
                        per_disk=[("point", slope0)], flags={})
    for k in range(1, d + 1):
        if k not in families:
            raise ValueError(f"missing family for k={k}")
        entries[k] = dimensional_entropy(f, families[k], schedule, rng=rng,
                                         budget=budget)
    h_lower = {k: entries[k].h_lower for k in entries}
    H_lower = {k: entries[k].H_lower for k in entries}
    # enforce monotone-in-k presentation: a k-disk restricts to any lower
    # dimension, so suprema over larger k dominate
    for k in range(1, d + 1):
        h_lower[k] = max(h_lower[k], h_lower[k - 1])
        H_lower[k] = max(H_lower[k], H_lower[k - 1], h_lower[k])
    quality = {k: entries[k].flags for k in entries}
    return DimensionalEntropyProfile(
        k_values=tuple(range(d + 1)), h_lower=h_lower, H_lower=H_lower,
        entries=entries, family_labels={k: getattr(families.get(k), "label", "")
                                        for k in families},
        quality=quality)


# ---------------------------------------------------------------------------
# entropy dimensions
# ---------------------------------------------------------------------------

RESOLVED = "Resolved"
AMBIGUOUS = "AmbiguousWithinTolerance"


@dataclass
class EntropyDimensions:
    d_u: int
    d_s: int | None                # None = invertible but not computed
    tol_du: float
    verdict: str
    h_top_estimate: float
    details: dict = field(default_factory=dict)


def _first_reaching(H_lower, h_top, tol):
    ks = sorted(H_lower)
    for k in ks:
        if H_lower[k] >= h_top - tol:
            return k
    return max(ks)


def entropy_dimensions(f, profile, h_top_estimate, tol_du=None,
                       profile_inverse=None):
    """Unstable/stable entropy dimensions from H^k profiles.

    d_u is the smallest k whose uniform entropy reaches the h_top estimate
    within tol_du.  For a non-invertible map d_s = 0 by convention; for an
    invertible map without an inverse profile d_s stays uncomputed.
    """
    if tol_du is None:
        tol_du = 0.1 * max(h_top_estimate, 1e-12)
    d_u = _first_reaching(profile.H_lower, h_top_estimate, tol_du)
    verdict = RESOLVED
    if d_u >= 1 and profile.H_lower[d_u - 1] >= h_top_estimate - 2.0 * tol_du:
        verdict = AMBIGUOUS
    if f.inverse is None:
        d_s = 0
    elif profile_inverse is None:
        d_s = None
    else:
        d_s = _first_reaching(profile_inverse.H_lower, h_top_estimate, tol_du)
        if (d_s >= 1 and profile_inverse.H_lower[d_s - 1]
                >= h_top_estimate - 2.0 * tol_du):
            verdict = AMBIGUOUS
    details = {"H_lower": dict(profile.H_lower)}
    if profile_inverse is not None:
        details["H_lower_inverse"] = dict(profile_inverse.H_lower)
    if d_s is not None and d_u + d_s > f.dim and verdict == RESOLVED:
        verdict = AMBIGUOUS
        details["sum_exceeds_dim"] = True
    return EntropyDimensions(d_u=d_u, d_s=d_s, tol_du=tol_du,
                             verdict=verdict,
                             h_top_estimate=h_top_estimate, details=details)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def gap_experiment(f, family, r, schedule=None, rng=None, tol=0.1):
    """Report the uniform-vs-ordinary gap against the (k/r) lip(f) bound.

    Families without a size bound sit outside the bound's hypotheses and
    only get flagged, never failed.
    """
    schedule = schedule or cov.Schedule()
    entry = dimensional_entropy(f, family, schedule, rng=rng)
    lip = max(math.log(f.lipschitz), 0.0)
    k = family.k
    bound = entry.h_lower + (k / float(r)) * lip + tol
    compact = family.size_bound is not None
    report = {
        "k": k,
        "r": r,
        "h_lower": entry.h_lower,
        "H_lower": entry.H_lower,
        "gap": entry.H_lower - entry.h_lower,
        "bound_rhs": bound,
        "lip": lip,
        "within_bound": bool(entry.H_lower <= bound),
        "noncompact_family": not compact,
    }
    if not compact:
        report["note"] = ("family has unbounded C^r size; the gap bound "
                          "hypotheses do not apply")
    elif not report["within_bound"]:
        report["note"] = ("gap exceeds (k/r) lip bound; witnessing disks "
                          "are a family-enumeration artifact")
        best = max(entry.per_disk, key=lambda p: (p[1] or 0.0))
        report["witness_disk"] = best[0]
    return report


def flambda_families(f, fiber_res=257):
    """Families used by the semicontinuity scan: the full chart square and
    the distinguished fiber over the fixed end of the first axis."""
    man = f.manifold
    d = man.dim
    # 1-disk {1} x [0,1] x {0...}: the invariant fiber at lam = 0
    coeffs = []
    for j in range(d):
        if j == 1:
            coeffs.append({(0,): 0.5, (1,): 0.5})
        elif j == 0:
            coeffs.append({(0,): 1.0})
        else:
            coeffs.append({(0,): 0.0})
    fiber = geo.polynomial_disk(man, coeffs, 1, gridres=fiber_res,
                                label="end-fiber")
    return fiber


def semicontinuity_scan(lambdas, d=2, schedule=None, rng=None):
    """Entropy estimates for the one-parameter family that loses entropy
    at every nonzero parameter; includes the distinguished-fiber rate."""
    if 0.0 not in [float(x) for x in lambdas]:
        lambdas = [0.0] + list(lambdas)
    schedule = schedule or cov.Schedule(eps=(0.1, 0.05), n_min=2, n_max=14,
                                        max_cloud=700_000)
    rows = []
    for lam in lambdas:
        f = sy.build_system("flambda", {"lam": float(lam), "d": d})
        try:
            _, rate = cov.manifold_rate(f, schedule, rng=rng)
            slope = rate.slope
            per_eps = rate.per_eps
        except cov.SaturationError:
            slope, per_eps = float("nan"), {}
        fiber = flambda_families(f)
        try:
            _, frate = cov.disk_rate(f, fiber, schedule, rng=rng)
            fiber_slope = frate.slope
        except cov.SaturationError:
            fiber_slope = float("nan")
        rows.append({"lam": float(lam), "rate": slope,
                     "fiber_rate": fiber_slope, "per_eps": per_eps})
    return rows


def subdisk_probe(f, psi, schedule=None, rng=None, depths=(1, 2),
                  n_growth=10):
    """Compare the covering rate of a disk against volume-growth rates of
    its sampled sub-disks.  Exploratory; emits the comparison only."""
    from . import growth

    schedule = schedule or cov.Schedule()
    try:
        _, rate = cov.disk_rate(f, psi, schedule, rng=rng)
        h_est = rate.slope
    except cov.SaturationError:
        h_est = float("nan")
    subs = [psi]
    for p in depths:
        subs.extend(geo.subdivide(psi, 2 ** p))
    if psi.k >= 2:
        for ax in range(psi.k):
            subs.append(geo.slice_disk(psi, (ax,), np.zeros(psi.k)))
    gammas = []
    for phi in subs:
        series = growth.volume_growth(f, phi, n_growth)
        gammas.append((phi.label, series.gamma))
    best = max(g for _, g in gammas)
    return {
        "h_estimate": h_est,
        "max_subdisk_gamma": best,
        "subdisks": gammas,
        "h_le_gamma": bool(h_est <= best + 0.1) if not math.isnan(h_est)
        else None,
    }


# ---------------------------------------------------------------------------
# standard families for the catalog manifolds
# ---------------------------------------------------------------------------

def segment_family(manifold, directions=8, length=1.0, base=(0.123, 0.271),
                   size_bound=None, label="segments"):
    gens = []
    for j in range(directions):
        th = math.pi * (j + 0.5) / directions
        v = [math.cos(th), math.sin(th)]
        gens.append(geo.segment_disk(manifold, list(base), v, length,
                                     label=f"seg(th={th:.3f})"))
    return geo.DiskFamily(generators=gens, size_bound=size_bound, label=label)


def wrapped_segment_family(manifold, lengths=(1, 4, 16, 64, 256, 1024, 4096),
                           angle=0.125, label="wrapped-segments"):
    v = [math.cos(angle), math.sin(angle)]
    gens = [geo.segment_disk(manifold, [0.0, 0.0], v, float(L),
                             label=f"wrapped(len={L})")
            for L in lengths]
    return geo.DiskFamily(generators=gens, label=label)


def standard_families(f, wrapped=False):
    """Default per-k families for a catalog system's manifold."""
    man = f.manifold
    d = man.dim
    fams = {}
    if d == 1:
        fams[1] = geo.DiskFamily([geo.chart_cube_disk(man)], label="interval")
        return fams
    if d >= 2:
        if wrapped:
            fams[1] = wrapped_segment_family(man)
        else:
            base = [0.123, 0.271] if man.kind == "torus" else \
                [0.5 * (lo + hi) for lo, hi in man.bounds[:2]]
            length = 1.0 if man.kind == "torus" else \
                0.9 * min(hi - lo for lo, hi in man.bounds)
            fams[1] = segment_family(man, base=base, length=length)
    for k in range(2, d):
        # axis-pair sub-cubes through the domain center
        full = geo.chart_cube_disk(man)
        slices = []
        for axes in _axis_combos(d, k):
            slices.append(geo.slice_disk(full, axes, np.zeros(d),
                                         label=f"subcube{axes}"))
        fams[k] = geo.DiskFamily(slices, label=f"subcubes-k{k}")
    fams[d] = geo.DiskFamily([geo.chart_cube_disk(man)], label="chart-cube")
    return fams


def _axis_combos(d, k):
    import itertools
    return list(itertools.combinations(range(d), k))


def h_top_estimate(f, schedule=None, extra_disks=(), rng=None):
    """Best available covering-rate lower estimate of the topological
    entropy: the max over the full-chart cloud and any supplied disks."""
    schedule = schedule or cov.Schedule()
    rates = {}
    try:
        _, r = cov.manifold_rate(f, schedule, rng=rng)
        rates["manifold"] = r.slope
    except cov.SaturationError:
        pass
    for disk in extra_disks:
        try:
            _, r = cov.disk_rate(f, disk, schedule, rng=rng)
            rates[disk.label] = r.slope
        except cov.SaturationError:
            pass
    if not rates:
        raise cov.SaturationError("no resolvable estimate for h_top")
    return max(rates.values()), rates
