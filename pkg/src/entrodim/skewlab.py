"""Skew-product lab: separation of covering growth from volume growth.

A quadrupling circle base drives two interval maps on the fiber: an
expanding two-branch map applied on one angular sector and a contraction
applied on another.  The base angle is chosen with a base-4 digit word
over {0, 2} so the fiber sees prescribed blocks of expansion and
contraction; the base is never iterated in floating point (the digit
word IS the driver, a digit shift being exact).

Measurements on the fiber disk:
  * exact lap bookkeeping (branch count and common image interval) - the
    composed fiber map keeps one image interval shared by all monotone
    laps, so branch combinatorics are exact integers;
  * quadrature volumes on a streaming grid (independent of bookkeeping);
  * dynamic covering counts, direct on a grid while the lap structure is
    resolvable, otherwise the structural product (laps x per-lap window
    count) cross-validated against the direct method at early times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import covering as cov
from .manifolds import cube

FOLD = 0.5
FOLD_TOL = 1e-12


# ---------------------------------------------------------------------------
# quintic joins
# ---------------------------------------------------------------------------

def _hermite_quintic(p0, m0, s0, p1, m1, s1):
    """Quintic on [0,1] matching value/slope/curvature at both ends."""
    a0, a1, a2 = p0, m0, s0 / 2.0
    r0 = p1 - a0 - a1 - a2
    r1 = m1 - a1 - 2 * a2
    r2 = s1 - 2 * a2
    a3 = 10 * r0 - 4 * r1 + r2 / 2.0
    a4 = -15 * r0 + 7 * r1 - r2
    a5 = 6 * r0 - 3 * r1 + r2 / 2.0
    return np.array([a0, a1, a2, a3, a4, a5])


def _polyval(c, u):
    out = np.zeros_like(u)
    for k in range(len(c) - 1, -1, -1):
        out = out * u + c[k]
    return out


def _polyder(c):
    return np.array([k * c[k] for k in range(1, len(c))])


# ---------------------------------------------------------------------------
# fiber maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiberMaps:
    alpha: float
    f: object
    f_prime: object
    g: object
    g_prime: object
    cap_coeffs: np.ndarray
    join_coeffs: np.ndarray


def preimage_table(alpha, n_max):
    """Leftmost-preimage chain: x_0 = 1, x_{-1} = 1/2, then each further
    preimage divides by 2(1+alpha)."""
    xs = [1.0, 0.5]
    for _ in range(2, n_max + 1):
        xs.append(xs[-1] / (2.0 * (1.0 + alpha)))
    return np.array(xs)


def build_fiber_maps(alpha):
    """The expanding fiber map (slope 2(1+alpha) off the fold collar,
    quintic caps into the fold) and the contracting companion (linear
    below 1/2, quintic join above), with every defining constraint
    re-verified numerically after construction."""
    if not 0.0 <= alpha <= 0.25:
        raise ValueError("alpha must lie in [0, 0.25]")
    s = 2.0 * (1.0 + alpha)

    if alpha == 0.0:
        # degenerate control: tent map fiber, no cap region
        def f(x):
            x = np.asarray(x, dtype=float)
            return np.where(x <= FOLD, s * x, s * (1.0 - x))

        def f_prime(x):
            x = np.asarray(x, dtype=float)
            return np.where(x <= FOLD, s, -s)

        cap = np.zeros(6)
    else:
        a_val = s * (FOLD - alpha)          # f at the cap entry
        cap = _hermite_quintic(a_val, s * alpha, 0.0, 1.0, 0.0, 0.0)
        capd = _polyder(cap)

        def f(x):
            x = np.asarray(x, dtype=float)
            xm = np.minimum(x, 1.0 - x)     # mirror symmetry about 1/2
            lin = s * xm
            u = (xm - (FOLD - alpha)) / alpha
            capv = _polyval(cap, np.clip(u, 0.0, 1.0))
            return np.where(xm <= FOLD - alpha, lin, capv)

        def f_prime(x):
            x = np.asarray(x, dtype=float)
            right = x > FOLD
            xm = np.where(right, 1.0 - x, x)
            u = (xm - (FOLD - alpha)) / alpha
            dcap = _polyval(capd, np.clip(u, 0.0, 1.0)) / alpha
            mag = np.where(xm <= FOLD - alpha, s, dcap)
            return np.where(right, -mag, mag)

    # contraction: linear x/s below 1/2, quintic join up to g(1) = 1/2
    x2 = 1.0 / (4.0 * (1.0 + alpha))        # g(1/2), the next preimage
    join = _hermite_quintic(x2, 0.5 / s, 0.0, 0.5, 0.5 / s, 0.0)
    joind = _polyder(join)

    def g(x):
        x = np.asarray(x, dtype=float)
        u = np.clip((x - FOLD) * 2.0, 0.0, 1.0)
        return np.where(x <= FOLD, x / s, _polyval(join, u))

    def g_prime(x):
        x = np.asarray(x, dtype=float)
        u = np.clip((x - FOLD) * 2.0, 0.0, 1.0)
        return np.where(x <= FOLD, 1.0 / s, _polyval(joind, u) * 2.0)

    fm = FiberMaps(alpha=alpha, f=f, f_prime=f_prime, g=g, g_prime=g_prime,
                   cap_coeffs=cap, join_coeffs=join)
    _verify_fiber_maps(fm)
    return fm


def _verify_fiber_maps(fm, n_table=30):
    alpha = fm.alpha
    s = 2.0 * (1.0 + alpha)
    f, g = fm.f, fm.g
    checks = []

    def req(ok, what):
        if not ok:
            checks.append(what)

    req(abs(float(f(0.0))) < 1e-12, "f(0) = 0")
    req(abs(float(f(1.0))) < 1e-12, "f(1) = 0")
    req(abs(float(f(0.5)) - 1.0) < 1e-12, "f(1/2) = 1")
    if alpha > 0:
        xs = np.linspace(0.0, FOLD - alpha, 50)
        req(np.allclose(fm.f_prime(xs), s, atol=1e-10),
            "f' on the left linear branch")
        xs = np.linspace(FOLD + alpha, 1.0, 50)
        req(np.allclose(fm.f_prime(xs), -s, atol=1e-10),
            "f' on the right linear branch")
    grid = np.linspace(0.0, FOLD, 4001)
    req(bool((np.diff(f(grid)) >= -1e-12).all()), "f increasing on [0,1/2]")
    grid = np.linspace(FOLD, 1.0, 4001)
    req(bool((np.diff(f(grid)) <= 1e-12).all()), "f decreasing on [1/2,1]")
    req(abs(float(g(0.0))) < 1e-14, "g(0) = 0")
    grid = np.linspace(0.0, 1.0, 4001)
    gp = fm.g_prime(grid)
    req(bool((gp > 0).all() and (gp < 1).all()), "0 < g' < 1")
    xs = preimage_table(alpha, n_table)
    for n in range(n_table):
        req(abs(float(g(xs[n])) - xs[n + 1]) < 1e-10,
            f"g maps preimage {n} to preimage {n + 1}")
    for n in range(1, n_table):
        req(abs(float(f(xs[n + 1])) - xs[n]) < 1e-10,
            f"f maps preimage {n + 1} back to preimage {n}")
    if checks:
        raise ValueError("fiber map construction violates: "
                         + "; ".join(checks))


# ---------------------------------------------------------------------------
# digit word and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DigitSequence:
    digits: str                    # base-4 word over {0, 2}

    def __post_init__(self):
        if set(self.digits) - {"0", "2"}:
            raise ValueError("digit word must use the {0,2} alphabet")

    def map_at_step(self, j):
        """Fiber map applied at time step j (0-based): 0 -> expanding,
        2 -> contracting."""
        return self.digits[j]

    def theta_float(self):
        th = 0.0
        for k, c in enumerate(self.digits[:26], start=1):
            th += int(c) * 4.0 ** (-k)
        return th

    def sector_at_step(self, j):
        """Sector of the base point after j quadruplings: digit 0 puts the
        angle in [0, 1/6], digit 2 in [1/2, 2/3]."""
        return "expand" if self.digits[j] == "0" else "contract"


def schedule_word(n_schedule):
    """Block word 0^{n1} 2^{n1} 0^{n1+n2} 2^{n2} ... with the closing
    expansion run of the last block appended."""
    n = list(n_schedule)
    parts = ["0" * n[0], "2" * n[0]]
    for i in range(1, len(n)):
        parts.append("0" * (n[i - 1] + n[i]))
        parts.append("2" * n[i])
    parts.append("0" * n[-1])
    return "".join(parts)


@dataclass
class SkewConfig:
    alpha: float = 0.2
    n_schedule: tuple = (1, 2, 6, 24)
    eps: float = 0.02
    vol_grid: int = 2_000_000
    direct_grid: int = 400_000
    direct_time_cap: int = 24      # longest horizon stored for direct counts
    lap_window_grid: int = 20_000

    def __post_init__(self):
        self.n_schedule = tuple(int(v) for v in self.n_schedule)
        if any(v < 1 for v in self.n_schedule) or len(self.n_schedule) < 2:
            raise ValueError("need at least two positive block lengths")
        self.N = tuple(3 * sum(self.n_schedule[:i + 1])
                       for i in range(len(self.n_schedule)))
        self.t = tuple(self.N[i] + 2 * self.n_schedule[i + 1]
                       for i in range(len(self.n_schedule) - 1))
        self.word = schedule_word(self.n_schedule)
        self.digits = DigitSequence(self.word)
        self.x_table = preimage_table(self.alpha,
                                      max(self.n_schedule) + 2)
        self.fiber = build_fiber_maps(self.alpha)

    # closed-form predictions for the scheduled times
    def predicted_log_r(self, i):
        return (self.N[i] / 3.0 + self.n_schedule[i + 1]) * math.log(2.0)

    def predicted_log_vol(self, i):
        return (self.N[i] / 3.0) * math.log(2.0) \
            - (self.n_schedule[i + 1] - 1) * math.log(1.0 + self.alpha)


# ---------------------------------------------------------------------------
# exact lap bookkeeping
# ---------------------------------------------------------------------------

def lap_bookkeeping(config, t_max=None):
    """Exact (laps, image-endpoint) per time step.

    Every monotone lap of the composed fiber map shares one image
    interval [0, b]; an expansion step doubles the lap count exactly when
    the fold lies inside and resets b to 1.  Returns arrays laps[t], b[t]
    for t = 0..t_max.
    """
    word = config.word
    t_max = t_max if t_max is not None else len(word)
    t_max = min(t_max, len(word))
    fm = config.fiber
    laps = np.empty(t_max + 1, dtype=np.int64)
    b = np.empty(t_max + 1)
    laps[0], b[0] = 1, 1.0
    for j in range(t_max):
        if word[j] == "0":
            if b[j] > FOLD + FOLD_TOL:
                laps[j + 1] = laps[j] * 2
                b[j + 1] = 1.0
            else:
                laps[j + 1] = laps[j]
                b[j + 1] = float(fm.f(b[j]))
        else:
            laps[j + 1] = laps[j]
            b[j + 1] = float(fm.g(b[j]))
    return laps, b


def grid_branch_count(config, t, grid=1 << 21, max_grid=1 << 23):
    """Monotone-branch count of the composed fiber map at time t, by sign
    changes of the chain-rule derivative along a fiber grid; the grid
    doubles until two consecutive densities agree."""
    word = config.word
    fm = config.fiber
    prev = None
    while True:
        x = np.linspace(0.0, 1.0, grid)
        sign = np.ones(grid, dtype=np.int8)
        for j in range(t):
            if word[j] == "0":
                d = fm.f_prime(x)
                x = fm.f(x)
            else:
                d = fm.g_prime(x)
                x = fm.g(x)
            sign = sign * np.sign(d).astype(np.int8)
        flips = int((sign[1:] != sign[:-1]).sum())
        count = flips + 1
        if prev == count or grid >= max_grid:
            return count, grid, prev == count
        prev = count
        grid *= 2


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------

def volume_series(config, t_max=None, grid=None):
    """Quadrature of |d/dx composition| over the fiber for every time,
    streaming (no orbit history)."""
    word = config.word
    t_max = min(t_max if t_max is not None else len(word), len(word))
    fm = config.fiber
    N = grid or config.vol_grid
    x = (np.arange(N) + 0.5) / N
    logd = np.zeros(N)
    out = np.empty(t_max + 1)
    out[0] = 1.0
    for j in range(t_max):
        if word[j] == "0":
            d = np.abs(fm.f_prime(x))
            x = fm.f(x)
        else:
            d = np.abs(fm.g_prime(x))
            x = fm.g(x)
        logd = logd + np.log(np.maximum(d, 1e-300))
        out[j + 1] = float(np.exp(logd).mean())
    return out


def _fiber_orbit_history(config, x0, t_max):
    word = config.word
    fm = config.fiber
    out = np.empty((x0.shape[0], t_max + 1, 1), dtype=np.float32)
    x = x0.astype(float)
    out[:, 0, 0] = x
    for j in range(t_max):
        x = fm.f(x) if word[j] == "0" else fm.g(x)
        out[:, j + 1, 0] = x
    return out


_FIBER_MANIFOLD = cube(1, [(0.0, 1.0)])


def _count_1d(orb, eps, n):
    cnt, _ = cov._count_net(orb[:, :n, :], _FIBER_MANIFOLD, eps, n,
                            cov.SHUFFLED_NET,
                            rng=np.random.default_rng(1))
    return cnt


def direct_counts(config, times, eps=None):
    """Dynamic net counts of the fiber disk at the requested times, plus
    the static count used for normalization.  Feasible only while the lap
    structure fits the grid; infeasible times return None."""
    eps = eps if eps is not None else config.eps
    laps, _ = lap_bookkeeping(config)
    t_ok = [t for t in times if t <= config.direct_time_cap]
    if not t_ok:
        return {}, None
    t_hi = max(t_ok)
    x0 = (np.arange(config.direct_grid) + 0.5) / config.direct_grid
    orb = _fiber_orbit_history(config, x0, t_hi)
    out = {}
    count0 = _count_1d(orb, eps, 1)
    for t in times:
        if t > config.direct_time_cap:
            out[t] = None
            continue
        peak_laps = int(laps[: t + 1].max())
        # need a few grid points per separated element
        if peak_laps * max(1.0 / (2 * eps), 1.0) * 8 > config.direct_grid:
            out[t] = None
            continue
        cnt = _count_1d(orb, eps, t + 1)
        sat = cnt >= 0.5 * config.direct_grid
        out[t] = None if sat else cnt
    return out, count0


def structural_counts(config, times, eps=None):
    """Hybrid covering estimate: exact lap count at the in-block peak
    times the measured per-lap window count from the peak onward."""
    eps = eps if eps is not None else config.eps
    laps, b = lap_bookkeeping(config)
    word = config.word
    fm = config.fiber
    out = {}
    for t in times:
        peak = int(np.argmax(laps[: t + 1]))
        n_laps = int(laps[peak])
        # window orbit of the common image interval from the peak to t
        y0 = np.linspace(0.0, b[peak], config.lap_window_grid)
        steps = word[peak:t]
        orb = np.empty((y0.shape[0], len(steps) + 1, 1), dtype=np.float32)
        y = y0.copy()
        orb[:, 0, 0] = y
        for j, c in enumerate(steps):
            y = fm.f(y) if c == "0" else fm.g(y)
            orb[:, j + 1, 0] = y
        per_lap = _count_1d(orb, eps, len(steps) + 1)
        out[t] = n_laps * per_lap
    return out


@dataclass
class SkewRow:
    t: int
    laps: int
    log_r: float                   # normalized measured log covering count
    log_r_method: str
    log_r_pred: float
    log_vol: float                 # quadrature measurement
    log_vol_exact: float           # lap bookkeeping
    log_vol_pred: float
    flags: dict = field(default_factory=dict)


def run_schedule(config=None, eps=None, vol_grid=None):
    """Covering and volume series at the scheduled times.

    Covering counts are normalized by the static fiber count so the
    numbers compare against the digit-count predictions; the method
    column records whether a time was measured directly on the fiber
    grid or through the structural lap product.
    """
    config = config or SkewConfig()
    eps = eps if eps is not None else config.eps
    times = list(config.t)
    vols = volume_series(config, t_max=max(times), grid=vol_grid)
    laps, b = lap_bookkeeping(config)
    direct, count0 = direct_counts(config, times, eps=eps)
    struct = structural_counts(config, times, eps=eps)
    if count0 is None:
        x0 = (np.arange(config.lap_window_grid) + 0.5) / config.lap_window_grid
        orb = _fiber_orbit_history(config, x0, 1)
        count0 = _count_1d(orb, eps, 1)
    rows = []
    for i, t in enumerate(times):
        flags = {}
        d_cnt = direct.get(t)
        s_cnt = struct.get(t)
        if d_cnt is not None:
            log_r = math.log(d_cnt / count0)
            method = "direct"
            if s_cnt:
                ratio = (s_cnt / count0) / max(d_cnt / count0, 1e-300)
                flags["structural_vs_direct"] = ratio
        elif s_cnt is not None:
            log_r = math.log(s_cnt / count0)
            method = "structural"
            flags["direct_infeasible"] = True
        else:
            log_r = float("nan")
            method = "unresolved"
            flags["branch_resolution_failure"] = True
        vol_exact = laps[t] * b[t]
        rows.append(SkewRow(
            t=t, laps=int(laps[t]), log_r=log_r, log_r_method=method,
            log_r_pred=config.predicted_log_r(i),
            log_vol=math.log(max(vols[t], 1e-300)),
            log_vol_exact=math.log(max(vol_exact, 1e-300)),
            log_vol_pred=config.predicted_log_vol(i),
            flags=flags))
    return rows, vols


def verify_separation(rows, rel_tol=0.10, rate_gap=0.2):
    """Check measured values against the closed-form predictions and the
    covering-rate vs volume-rate separation at the last schedule point."""
    if len(rows) < 2:
        raise ValueError("need at least two scheduled times")
    checks = []
    for row in rows:
        ok_r = (not math.isnan(row.log_r)
                and abs(row.log_r - row.log_r_pred)
                <= rel_tol * abs(row.log_r_pred))
        ok_v = abs(row.log_vol - row.log_vol_pred) \
            <= rel_tol * max(abs(row.log_vol_pred), 0.2)
        checks.append({"t": row.t, "log_r_ok": bool(ok_r),
                       "log_vol_ok": bool(ok_v),
                       "log_r": row.log_r, "log_r_pred": row.log_r_pred,
                       "log_vol": row.log_vol,
                       "log_vol_pred": row.log_vol_pred,
                       "method": row.log_r_method})
    last = rows[-1]
    cov_rate = last.log_r / last.t
    vol_rate = last.log_vol / last.t
    gap = cov_rate - vol_rate
    return {
        "per_time": checks,
        "all_within_tolerance": all(c["log_r_ok"] and c["log_vol_ok"]
                                    for c in checks),
        "covering_rate": cov_rate,
        "volume_rate": vol_rate,
        "rate_gap": gap,
        "separated": bool(gap > rate_gap),
    }
