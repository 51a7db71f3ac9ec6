"""Dynamic balls, (eps,n) covering / separated nets, and rate fitting.

Counts are computed on finite point clouds.  Both net algorithms return
maximal eps-separated subsets of the cloud (which are also eps-covers),
so each count is sandwiched between the true minimal covering number at
eps and the one at eps/2.  Rates, not constants, are the target.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .systems import SmoothMap

GREEDY_COVER = "GreedyCover"
MAX_SEPARATED = "MaximalSeparated"
SHUFFLED_NET = "ShuffledNet"     # seeded random insertion order; the default
                                 # for rate fits (no raster-order artifacts)

SATURATION_FRACTION = 0.5
RESOLUTION_FACTOR = 0.5          # neighbor pairs must stay below this * eps
FARTHEST_MAX_CLOUD = 120_000     # beyond this the separated net uses
                                 # shuffled insertion instead of farthest-first


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _net_kernel(orb, circ, eps, n, order, cellco, cstart, cpts, live, pos,
                cellid, ncells, strides, offsets, cap):
    """Maximal eps-separated net in pick order; returns its size.

    Picking the first unmarked point and marking its eps-ball is both the
    greedy cover and a maximal separated set; the `order` array selects
    the pick sequence.  Candidate points come from the 3^d neighborhood
    of the pick's time-zero cell (d_n >= d_1 makes this exhaustive), and
    marked points are swap-removed from their cell so saturated horizons
    stay cheap.  cpts/live/pos are mutated.
    """
    N = orb.shape[0]
    d = orb.shape[2]
    noff = offsets.shape[0]
    removed = np.zeros(N, np.uint8)
    count = 0
    for oi in range(N):
        i = order[oi]
        if removed[i]:
            continue
        count += 1
        if count >= cap:
            return count, True
        # swap-remove the pick itself
        ci = cellid[i]
        p = pos[i]
        last = cstart[ci] + live[ci] - 1
        w = cpts[last]
        cpts[p] = w
        pos[w] = p
        cpts[last] = i
        pos[i] = last
        live[ci] -= 1
        removed[i] = 1
        for r in range(noff):
            ok = True
            cid = 0
            for a in range(d):
                c = cellco[i, a] + offsets[r, a]
                if circ[a]:
                    if c < 0:
                        c += ncells[a]
                    elif c >= ncells[a]:
                        c -= ncells[a]
                else:
                    if c < 0 or c >= ncells[a]:
                        ok = False
                        break
                cid += c * strides[a]
            if not ok:
                continue
            q = cstart[cid]
            end = cstart[cid] + live[cid]
            while q < end:
                j = cpts[q]
                inside = True
                for tt in range(n):
                    t = n - 1 - tt
                    for a in range(d):
                        delta = abs(orb[i, t, a] - orb[j, t, a])
                        if circ[a] and delta > 0.5:
                            delta = 1.0 - delta
                        if delta >= eps:
                            inside = False
                            break
                    if not inside:
                        break
                if inside:
                    end -= 1
                    w = cpts[end]
                    cpts[q] = w
                    pos[w] = q
                    cpts[end] = j
                    pos[j] = end
                    live[cid] -= 1
                    removed[j] = 1
                else:
                    q += 1
    return count, False


@njit(cache=True)
def _farthest_kernel(orb, circ, eps, n, cap):
    """Farthest-first eps-packing; returns the packing size."""
    N = orb.shape[0]
    d = orb.shape[2]
    mindist = np.full(N, np.float32(1e18), np.float32)
    current = 0
    mindist[0] = 0.0
    chosen = 1
    while chosen < cap:
        best = -1
        bestd = np.float32(-1.0)
        for j in range(N):
            mj = mindist[j]
            if mj > 0.0:
                dmax = np.float32(0.0)
                done = False
                for tt in range(n):
                    t = n - 1 - tt
                    for a in range(d):
                        delta = abs(orb[current, t, a] - orb[j, t, a])
                        if circ[a] and delta > 0.5:
                            delta = np.float32(1.0) - delta
                        if delta > dmax:
                            dmax = delta
                            if dmax >= mj:
                                done = True
                                break
                    if done:
                        break
                if dmax < mj:
                    mindist[j] = dmax
                    mj = dmax
            if mj > bestd:
                bestd = mj
                best = j
        if bestd < eps:
            break
        current = best
        mindist[best] = 0.0
        chosen += 1
    return chosen


# ---------------------------------------------------------------------------
# cloud and orbit helpers
# ---------------------------------------------------------------------------

def orbit_tensor(f, cloud, n_slices, dtype=np.float32):
    """Orbit cache (N, n_slices, d): slice t holds f^t of the cloud."""
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    N, d = cloud.shape
    out = np.empty((N, n_slices, d), dtype=dtype)
    x = f.manifold.canonicalize(cloud)
    out[:, 0, :] = x
    for t in range(1, n_slices):
        x = f.evaluate(x)
        out[:, t, :] = x
    return out


def _cells(orb0, manifold, eps):
    """Time-zero bucket structure: cell coords, CSR point lists, shapes."""
    N, d = orb0.shape
    ncells = np.empty(d, np.int64)
    lo = np.empty(d)
    width = np.empty(d)
    for a in range(d):
        if manifold.circle[a]:
            lo[a], rng = 0.0, 1.0
        else:
            b0, b1 = manifold.bounds[a]
            lo[a], rng = b0, b1 - b0
        ncells[a] = max(1, int(math.floor(rng / eps)))
        width[a] = rng / ncells[a]
    cellco = np.clip(((orb0 - lo) / width).astype(np.int64), 0,
                     ncells - 1).astype(np.int32)
    strides = np.empty(d, np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        strides[a] = s
        s *= ncells[a]
    ids = (cellco * strides).sum(axis=1)
    orderp = np.argsort(ids, kind="stable").astype(np.int64)
    counts = np.bincount(ids, minlength=s)
    cstart = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    pos = np.empty(N, np.int64)
    pos[orderp] = np.arange(N)
    live = counts.astype(np.int64)
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)),
                       dtype=np.int64)
    return {"cellco": cellco, "cstart": cstart, "cpts": orderp,
            "live": live, "pos": pos, "cellid": ids.astype(np.int64),
            "ncells": ncells, "strides": strides, "offsets": offsets}


@dataclass(frozen=True)
class CoveringEstimate:
    eps: float
    n: int
    count: int
    method: str
    cloud_size: int
    saturated: bool
    truncated: bool = False
    marginal: bool = False      # neighbor divergence within 0.25 eps of eps
    cloud_desc: str = ""


class SaturationError(RuntimeError):
    """Raised when every window is saturated; increase cloud resolution."""

    def __init__(self, msg, saturation_n=None):
        super().__init__(msg)
        self.saturation_n = saturation_n


def _count_net(orb, manifold, eps, n, method, rng=None, sat_cap=None,
               cells=None, order=None):
    N = orb.shape[0]
    circ = np.array(manifold.circle, dtype=np.uint8)
    cap = sat_cap if sat_cap is not None else N + 1
    if order is not None:
        pass
    elif method == GREEDY_COVER:
        order = np.arange(N, dtype=np.int64)
    elif method == SHUFFLED_NET:
        gen = rng if rng is not None else np.random.default_rng(0)
        order = gen.permutation(N).astype(np.int64)
    elif method == MAX_SEPARATED:
        if N <= FARTHEST_MAX_CLOUD:
            cnt = _farthest_kernel(orb, circ, np.float32(eps), n, cap)
            return int(cnt), bool(cnt >= cap)
        # index-shuffled sequential insertion is still a maximal separated
        # net; farthest-first is quadratic and reserved for smaller clouds
        gen = rng if rng is not None else np.random.default_rng(0)
        order = gen.permutation(N).astype(np.int64)
    else:
        raise ValueError(f"unknown net method {method!r}")
    if cells is None:
        cells = _cells(orb[:, 0, :].astype(float), manifold, eps)
    cnt, trunc = _net_kernel(orb, circ, np.float32(eps), n, order,
                             cells["cellco"], cells["cstart"],
                             cells["cpts"].copy(), cells["live"].copy(),
                             cells["pos"].copy(), cells["cellid"],
                             cells["ncells"], cells["strides"],
                             cells["offsets"], cap)
    return int(cnt), bool(trunc)


def dynamic_distance(f, x, y, n):
    """max_{0 <= k < n} d(f^k x, f^k y) on canonical points."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    x = f.manifold.canonicalize(np.asarray(x, dtype=float))
    y = f.manifold.canonicalize(np.asarray(y, dtype=float))
    best = f.manifold.distance(x, y)
    for _ in range(n - 1):
        x = f.evaluate(x)
        y = f.evaluate(y)
        best = np.maximum(best, f.manifold.distance(x, y))
    return best


def covering_number(f, cloud, eps, n, method=GREEDY_COVER, rng=None,
                    cloud_desc=""):
    """Single (eps, n) net count on a cloud."""
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.shape[0] == 0:
        raise ValueError("cloud must be nonempty")
    if eps <= 0:
        raise ValueError("eps must be positive")
    orb = orbit_tensor(f, cloud, n)
    cnt, trunc = _count_net(orb, f.manifold, eps, n, method, rng=rng)
    N = cloud.shape[0]
    return CoveringEstimate(eps=eps, n=n, count=cnt, method=method,
                            cloud_size=N,
                            saturated=cnt >= SATURATION_FRACTION * N,
                            truncated=trunc, cloud_desc=cloud_desc)


# ---------------------------------------------------------------------------
# schedules and rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    eps: tuple = (0.1, 0.05, 0.02)
    n_min: int = 1
    n_max: int = 14
    method: str = SHUFFLED_NET
    max_cloud: int = 200_000
    min_cloud: int = 400
    saturation: float = SATURATION_FRACTION
    resolution_factor: float = RESOLUTION_FACTOR
    count_budget: int = 30_000    # stop extending horizons past this count
    seed: int = 0                 # pick-order seed for the shuffled net


@dataclass
class RateEstimate:
    pairs: list                   # (n, log count) used for the headline slope
    slope: float
    window: tuple                 # (n_lo, n_hi)
    eps_schedule: tuple
    per_eps: dict = field(default_factory=dict)   # eps -> slope or None
    diagnostics: dict = field(default_factory=dict)


def _ls_slope(ns, logs):
    ns = np.asarray(ns, dtype=float)
    logs = np.asarray(logs, dtype=float)
    A = np.stack([ns, np.ones_like(ns)], axis=-1)
    sol, res, _, _ = np.linalg.lstsq(A, logs, rcond=None)
    resid = float(res[0]) if res.size else 0.0
    return float(sol[0]), resid


def fit_rate(estimates, n_min=1):
    """Least-squares growth rate of log counts across horizons.

    estimates: iterable of CoveringEstimate covering >= 2 eps values.
    The headline slope is the one at the smallest eps; per-eps slopes are
    kept in the diagnostics so the eps->0 trend stays visible.
    """
    by_eps = {}
    for est in estimates:
        by_eps.setdefault(est.eps, []).append(est)
    if not by_eps:
        raise ValueError("no estimates supplied")
    per_eps = {}
    windows = {}
    pairs_by_eps = {}
    resid_by_eps = {}
    saturation_n = None
    for eps, group in by_eps.items():
        group = sorted(group, key=lambda e: e.n)
        # drop horizons where the cloud is both marginally resolved and the
        # count is still climbing (those counts are biased low); flat counts
        # at marginal resolution are fine and keep contraction windows long
        usable = []
        prev_count = None
        for e in group:
            if e.saturated or e.n < n_min:
                if not e.saturated and e.n < n_min:
                    prev_count = e.count
                continue
            growing = prev_count is not None and e.count >= 1.5 * prev_count
            if e.marginal and (growing or prev_count is None):
                prev_count = e.count
                continue
            usable.append(e)
            prev_count = e.count
        sat = [e.n for e in group if e.saturated]
        if sat:
            saturation_n = min(sat) if saturation_n is None else min(
                saturation_n, min(sat))
        if len(usable) < 2:
            per_eps[eps] = None
            continue
        ns = [e.n for e in usable]
        logs = [math.log(max(e.count, 1)) for e in usable]
        slope, resid = _ls_slope(ns, logs)
        per_eps[eps] = slope
        windows[eps] = (min(ns), max(ns))
        pairs_by_eps[eps] = list(zip(ns, logs))
        resid_by_eps[eps] = resid
    valid = [eps for eps, s in per_eps.items() if s is not None]
    if not valid:
        raise SaturationError(
            "all fit windows saturated; increase cloud resolution",
            saturation_n=saturation_n)
    eps_star = min(valid)
    slope = per_eps[eps_star]
    if slope < -1e-9:
        slope = max(slope, -1e-9)   # counts never shrink; clamp fit noise
    eps_sorted = sorted(by_eps)
    diag = {
        "per_eps_slopes": {e: per_eps.get(e) for e in eps_sorted},
        "residual": resid_by_eps.get(eps_star, 0.0),
        "saturation_n": saturation_n,
        "monotone_in_eps": _eps_trend(per_eps),
    }
    return RateEstimate(pairs=pairs_by_eps[eps_star], slope=slope,
                        window=windows[eps_star],
                        eps_schedule=tuple(eps_sorted),
                        per_eps=per_eps, diagnostics=diag)


def _eps_trend(per_eps):
    vals = [per_eps[e] for e in sorted(per_eps, reverse=True)
            if per_eps[e] is not None]
    if len(vals) < 2:
        return "single-eps"
    diffs = np.diff(vals)
    if np.all(diffs >= -0.05):
        return "nondecreasing"
    return "mixed"


# ---------------------------------------------------------------------------
# cloud construction and the per-disk estimation pipeline
# ---------------------------------------------------------------------------

def stretch_profile(f, seeds, n_max):
    """Cumulative max |D f^n|_inf along sample orbits, n = 0..n_max."""
    x = np.atleast_2d(np.asarray(seeds, dtype=float))
    d = f.dim
    M = np.broadcast_to(np.eye(d), (x.shape[0], d, d)).copy()
    out = [1.0]
    for _ in range(n_max):
        J = f.jacobian(x)
        M = np.einsum("nij,njk->nik", J, M)
        out.append(float(np.abs(M).sum(axis=2).max()))
        x = f.evaluate(x)
    return np.array(out)


def disk_cloud(f, disk, schedule, n_target=None, rng=None):
    """Jittered parameter-grid cloud sized so the smallest eps stays
    resolvable as long as possible within the budget.  The jitter breaks
    lattice alignment with the dynamics (stabilizes net constants across
    horizons) while keeping grid-neighbor locality."""
    if disk.k == 0:
        T = disk.params_grid()
        return T, disk.points(T), "point"
    n_target = n_target or schedule.n_max
    eps_min = min(schedule.eps)
    T0 = disk.params_grid(9)
    extent = 0.0
    for ax in range(disk.k):
        s = tuple(1 if a == ax else 0 for a in range(disk.k))
        extent = max(extent, 2.0 * float(np.abs(disk.partial(T0, s)).max()))
    stretch = stretch_profile(f, disk.points(T0), max(0, n_target - 1))
    need = extent * stretch[-1] / (eps_min * schedule.resolution_factor)
    per_axis = int(np.ceil(need ** (1.0 / disk.k))) + 1
    cap = int(schedule.max_cloud ** (1.0 / disk.k))
    lo = max(2, int(np.ceil(schedule.min_cloud ** (1.0 / disk.k))))
    capped = per_axis > cap
    per_axis = min(max(per_axis, lo), cap)
    T = disk.params_grid(per_axis)
    jittered = disk.k >= 2    # 1-d grids lie along the disk, no alignment
    if jittered:
        gen = rng if rng is not None else np.random.default_rng(0)
        spacing = 2.0 / max(per_axis - 1, 1)
        T = np.clip(T + gen.uniform(-0.5, 0.5, T.shape) * spacing, -1.0, 1.0)
    desc = f"disk-grid(per_axis={per_axis}, capped={capped}, jittered={jittered})"
    return T, disk.points(T), desc


def manifold_cloud(f, schedule, n_target=None, rng=None):
    man = f.manifold
    n_target = n_target or schedule.n_max
    eps_min = min(schedule.eps)
    seeds = man.grid(7)
    stretch = stretch_profile(f, seeds, max(0, n_target - 1))
    rng_max = max(hi - lo for lo, hi in man.bounds)
    need = rng_max * stretch[-1] / (eps_min * schedule.resolution_factor)
    per_axis = int(np.ceil(need)) + 1
    cap = int(schedule.max_cloud ** (1.0 / man.dim))
    capped = per_axis > cap
    per_axis = min(max(per_axis, 8), cap)
    pts = man.grid(per_axis)
    gen = rng if rng is not None else np.random.default_rng(0)
    widths = np.array([(hi - lo) / per_axis for lo, hi in man.bounds])
    pts = man.canonicalize(pts + gen.uniform(-0.5, 0.5, pts.shape) * widths)
    return pts, f"manifold-grid(per_axis={per_axis}, capped={capped}, jittered)"


def _grid_neighbor_pairs(N, ndim, sample):
    """Index pairs of grid neighbors along every axis of a raveled uniform
    grid of N = per_axis**ndim points; falls back to consecutive indices
    when N is not a perfect power."""
    per_axis = int(round(N ** (1.0 / ndim)))
    pairs = []
    if per_axis ** ndim == N and per_axis >= 2:
        for ax in range(ndim):
            stride = per_axis ** (ndim - 1 - ax)
            i = np.arange(N)
            keep = (i // stride) % per_axis < per_axis - 1
            left = i[keep]
            if left.size > sample:
                left = left[np.linspace(0, left.size - 1, sample).astype(int)]
            pairs.append(np.stack([left, left + stride], axis=1))
        return np.concatenate(pairs, axis=0)
    left = np.arange(N - 1)
    if left.size > sample:
        left = left[np.linspace(0, left.size - 1, sample).astype(int)]
    return np.stack([left, left + 1], axis=1)


def resolvable_horizons(f, cloud_params, disk, eps_list, n_max,
                        factor=RESOLUTION_FACTOR, sample=512):
    """Per-eps horizon caps measured from adjacent-pair orbit divergence.

    A horizon counts as resolvable while the worst neighbor-pair dynamic
    distance stays below factor * eps, so counts are not cloud-limited.
    """
    if disk is not None and disk.k == 0:
        return {eps: n_max for eps in eps_list}
    T = np.atleast_2d(cloud_params)
    N = T.shape[0]
    if N < 2:
        return {eps: n_max for eps in eps_list}
    ndim = disk.k if disk is not None else f.manifold.dim
    pairs = _grid_neighbor_pairs(N, ndim, sample)
    if disk is not None:
        a = disk.points(T[pairs[:, 0]])
        b = disk.points(T[pairs[:, 1]])
    else:
        a = T[pairs[:, 0]].copy()
        b = T[pairs[:, 1]].copy()
    # drop spurious pairs (wrap-around rows of imperfect grids)
    d0 = f.manifold.distance(a, b)
    med = np.median(d0)
    keep = d0 <= max(3.0 * med, 1e-12)
    a, b = a[keep], b[keep]
    worst = np.zeros(a.shape[0])
    x, y = a, b
    worst_by_n = []
    for n in range(1, n_max + 1):
        if n > 1:
            x = f.evaluate(x)
            y = f.evaluate(y)
        worst = np.maximum(worst, f.manifold.distance(x, y))
        worst_by_n.append(float(worst.max()) if worst.size else 0.0)
    caps = {}
    for eps in eps_list:
        cap = 0
        for n in range(1, n_max + 1):
            if worst_by_n[n - 1] <= eps * factor:
                cap = n
            else:
                break
        caps[eps] = max(cap, 1)
    return caps, worst_by_n


def estimate_cloud(f, cloud, schedule, disk=None, cloud_params=None,
                   rng=None, cloud_desc=""):
    """All (eps, n) net counts for one cloud under a schedule.

    Horizons stop at the measured resolution cap of the cloud and at the
    first saturated count per eps.
    """
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    N = cloud.shape[0]
    caps, worst_by_n = resolvable_horizons(
        f, cloud_params if cloud_params is not None else cloud, disk,
        schedule.eps, schedule.n_max, factor=schedule.resolution_factor)
    n_top = max(caps.values())
    orb = orbit_tensor(f, cloud, n_top)
    stop_cap = min(int(schedule.saturation * N) + 1,
                   schedule.count_budget)
    order = None
    if schedule.method == SHUFFLED_NET:
        gen = rng if rng is not None else np.random.default_rng(schedule.seed)
        order = gen.permutation(N).astype(np.int64)
    out = []
    for eps in schedule.eps:
        cells = _cells(orb[:, 0, :].astype(float), f.manifold, eps)
        for n in range(1, caps[eps] + 1):
            cnt, trunc = _count_net(orb[:, :n, :], f.manifold, eps, n,
                                    schedule.method, rng=rng,
                                    sat_cap=max(stop_cap + 1, 8),
                                    cells=cells, order=order)
            sat = cnt >= schedule.saturation * N
            marginal = (worst_by_n[n - 1] >= 0.25 * eps
                        if n - 1 < len(worst_by_n) else False)
            out.append(CoveringEstimate(
                eps=eps, n=n, count=cnt, method=schedule.method,
                cloud_size=N, saturated=sat or trunc, truncated=trunc,
                marginal=marginal, cloud_desc=cloud_desc))
            if sat or trunc or cnt >= schedule.count_budget:
                break
    return out


def disk_rate(f, disk, schedule, rng=None):
    """Covering estimates and fitted rate for a single disk."""
    T, pts, desc = disk_cloud(f, disk, schedule)
    ests = estimate_cloud(f, pts, schedule, disk=disk, cloud_params=T,
                          rng=rng, cloud_desc=desc)
    rate = fit_rate(ests, n_min=schedule.n_min)
    return ests, rate


def manifold_rate(f, schedule, rng=None):
    """Full-manifold covering estimates and fitted rate (h_top proxy)."""
    pts, desc = manifold_cloud(f, schedule)
    ests = estimate_cloud(f, pts, schedule, disk=None, rng=rng,
                          cloud_desc=desc)
    rate = fit_rate(ests, n_min=schedule.n_min)
    return ests, rate
