"""Bootstrap confidence intervals for an edge position.

Resampling is nonparametric and split at the original estimate: positions
left of the estimate are drawn with replacement from the left part of the
strip, positions to the right from the right part.  Resamples are carried as
index arrays into the original strip, so nested bootstraps compose indices
instead of copying pixels.

A ``detector`` follows the small protocol of :mod:`edgeci.detectors`:
``estimate(strip)``, ``split_range(N)``, ``prepare(strip)`` and
``resampled(strip, idx, table)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detectors import PixelStrip, _values

BBM = "bbm"
PERC = "perc"
FULL_T = "full-t"
ST1 = "st1"
ST2 = "st2"
METHODS = (PERC, BBM, ST1, ST2, FULL_T)

_CHUNK = 100  # outer replicates per inner-bootstrap batch
_FRESH_CHUNK = 16


@dataclass(frozen=True)
class BootstrapConfig:
    """Replication counts and interval options.

    ``B_prime`` is the subset (or inner bootstrap) size used for per-replicate
    variances, ``B_double_prime`` the retry cap of the ST schemes and ``B_x``
    the auxiliary pool size of ST2.  With ``clamp=False`` the reflected BBM
    and studentized endpoints may fall outside the valid split range.
    """

    B: int = 1000
    B_prime: int = 50
    B_double_prime: int = 200
    B_x: int = 200
    level: float = 0.95
    method: str = PERC
    clamp: bool = True

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be positive")
        if self.B_prime < 1 or self.B_double_prime < 1 or self.B_x < 1:
            raise ValueError("B_prime, B_double_prime and B_x must be positive")
        if not 0 < self.level < 1:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.method == ST2 and not self.B_prime < self.B_x:
            raise ValueError("ST2 needs B_prime < B_x")
        if self.method in (FULL_T, ST1, ST2) and self.B_prime < 2:
            raise ValueError("studentized methods need B_prime >= 2")


@dataclass(frozen=True)
class BootstrapDistribution:
    estimates: np.ndarray  # sorted
    center: int
    split_min: int
    split_max: int

    @property
    def B(self) -> int:
        return self.estimates.size

    def cdf(self, j) -> float:
        return float(np.searchsorted(self.estimates, j, side="right")) / self.B

    def order_stat(self, q: float) -> int:
        return int(self.estimates[quantile_index(self.B, q) - 1])


@dataclass(frozen=True)
class ConfidenceInterval:
    method: str
    level: float
    lower: int
    upper: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def length(self) -> int:
        return self.upper - self.lower

    def contains(self, j) -> bool:
        return self.lower <= j <= self.upper


def quantile_index(B: int, q: float) -> int:
    """1-based order-statistic index ``ceil(B q)`` clamped to ``[1, B]``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    # B*q can land a hair above an integer, e.g. 1000 * 0.025
    k = math.ceil(round(B * q, 9))
    return min(max(k, 1), B)


def _resample_idx(n: int, j_hat: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return np.concatenate([rng.integers(0, j_hat, size=(m, j_hat)),
                           rng.integers(j_hat, n, size=(m, n - j_hat))], axis=1)


def resample_strip(strip, j_hat: int, rng: np.random.Generator):
    """One split-preserving bootstrap pseudo-strip."""
    x = _values(strip)
    if not 1 <= j_hat <= len(x) - 1:
        raise ValueError(f"split {j_hat} outside 1..{len(x) - 1}")
    out = x[_resample_idx(len(x), j_hat, 1, rng)[0]]
    if isinstance(strip, PixelStrip):
        return PixelStrip(out, strip.origin)
    return out


class _Resampler:
    """Original strip, its estimate, and a detector bound to its rank table."""

    def __init__(self, strip, detector):
        self.x = _values(strip)
        self.n = len(self.x)
        self.detector = detector
        self.table = detector.prepare(self.x)
        self.j_hat = int(detector.estimate(self.x).j_hat)
        self.split_min, self.split_max = detector.split_range(self.n)

    def estimates(self, idx) -> np.ndarray:
        return np.asarray(self.detector.resampled(self.x, idx, self.table), dtype=int)

    def outer(self, B, rng):
        idx = _resample_idx(self.n, self.j_hat, B, rng)
        return idx, self.estimates(idx)

    def fresh(self, rng, base_idx=None, cut=None):
        """Callable drawing ``k`` new resample estimates.

        With ``base_idx`` the resamples are of the pseudo-strip ``x[base_idx]``
        split at ``cut``; otherwise of the original strip at its estimate.
        """
        cut = self.j_hat if cut is None else cut

        def draw(k):
            idx = _resample_idx(self.n, cut, k, rng)
            if base_idx is not None:
                idx = base_idx[idx]
            return self.estimates(idx)

        return draw


def bootstrap_distribution(strip, detector, config: BootstrapConfig,
                           rng: np.random.Generator) -> BootstrapDistribution:
    rs = _Resampler(strip, detector)
    _, est = rs.outer(config.B, rng)
    return BootstrapDistribution(np.sort(est), rs.j_hat, rs.split_min, rs.split_max)


def _clamp(v, lo, hi):
    return int(min(max(v, lo), hi))


def ci_basic(dist: BootstrapDistribution, level: float, clamp: bool = True) -> ConfidenceInterval:
    """Basic (reflected) interval ``[2j - q_hi, 2j - q_lo]``."""
    a = 1 - level
    j = dist.center
    lower = 2 * j - dist.order_stat(1 - a / 2)
    upper = 2 * j - dist.order_stat(a / 2)
    if clamp:
        lower = _clamp(lower, dist.split_min, dist.split_max)
        upper = _clamp(upper, dist.split_min, dist.split_max)
    return ConfidenceInterval(BBM, level, lower, upper)


def ci_percentile(dist: BootstrapDistribution, level: float) -> ConfidenceInterval:
    a = 1 - level
    return ConfidenceInterval(PERC, level, dist.order_stat(a / 2), dist.order_stat(1 - a / 2))


def _studentized_interval(method, level, j_hat, outer, v_star, lo, hi, clamp, diagnostics):
    a = 1 - level
    B = outer.size
    same = outer == j_hat
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(same, 0.0, (outer - j_hat) / np.sqrt(v_star))
    z = np.sort(z)
    t_hi = z[quantile_index(B, 1 - a / 2) - 1]
    t_lo = z[quantile_index(B, a / 2) - 1]
    sd = float(np.std(outer, ddof=1)) if B > 1 else 0.0
    # outward rounding; the epsilon stops exact integers drifting by one
    lower = math.floor(j_hat - sd * t_hi + 1e-9)
    upper = math.ceil(j_hat - sd * t_lo - 1e-9)
    if clamp:
        lower, upper = _clamp(lower, lo, hi), _clamp(upper, lo, hi)
    return ConfidenceInterval(method, level, lower, upper, diagnostics)


def _first_different(first, fresh, limit):
    """Draw up to ``limit`` fresh estimates until one differs from ``first``.

    Returns the value found, or ``first + 1`` with ``forced=True``.
    """
    drawn = 0
    while drawn < limit:
        k = min(_FRESH_CHUNK, limit - drawn)
        vals = fresh(k)
        hit = np.flatnonzero(vals != first)
        if hit.size:
            return int(vals[hit[0]]), False
        drawn += k
    return int(first) + 1, True


def _subset_variances(pool, B_prime, B_dd, count, rng, diag):
    """Variances of ``count`` size-``B_prime`` draws from ``pool``.

    A draw with zero variance is repeated, at most ``B_dd`` draws in all; rows
    still at zero take the variance of the whole pool.
    """
    v = np.empty(count)
    pending = np.arange(count)
    for attempt in range(B_dd):
        draws = pool[rng.integers(0, pool.size, size=(pending.size, B_prime))]
        var = draws.var(axis=1, ddof=1)
        ok = var > 0
        v[pending[ok]] = var[ok]
        if attempt > 0:
            diag["step2c_retries"] += int(pending.size)
        pending = pending[~ok]
        if not pending.size:
            break
    if pending.size:
        v[pending] = pool.var(ddof=1)
        diag["step2d_fallback"] += int(pending.size)
    return v


def _new_diag():
    return {"step1_zero": 0, "step2_direct": 0, "step2c_retries": 0,
            "step2d_fallback": 0, "step3a_found": 0, "step3b_forced": 0}


def _approx_variances(outer, j_hat, pool, fresh, B_prime, B_dd, rng):
    diag = _new_diag()
    v = np.full(outer.size, np.nan)
    active = np.flatnonzero(outer != j_hat)
    diag["step1_zero"] = int(outer.size - active.size)
    if not active.size:
        return v, diag
    if pool.size > 1 and pool.var(ddof=1) > 0:
        v[active] = _subset_variances(pool, B_prime, B_dd, active.size, rng, diag)
        diag["step2_direct"] = int(active.size - diag["step2d_fallback"])
        return v, diag
    first = int(pool[0])
    base = pool[:B_prime - 1]
    for b in active:
        new, forced = _first_different(first, fresh, B_dd)
        diag["step3b_forced" if forced else "step3a_found"] += 1
        v[b] = np.append(base, new).var(ddof=1)
    return v, diag


def st1_variances(outer, j_hat, B_prime, B_double_prime, rng, fresh):
    """Per-replicate variances of the ST1 scheme.

    Parameters
    ----------
    outer : array of int
        The B outer bootstrap estimates.
    j_hat : int
        Estimate on the original strip; replicates equal to it get NaN
        (their studentized value is 0 and no variance is needed).
    fresh : callable
        ``fresh(k)`` returns k estimates from new resamples of the original
        strip.  Only used when the outer estimates are all equal.

    Returns
    -------
    v : ndarray
    diagnostics : dict
        How many replicates went through each branch.
    """
    outer = np.asarray(outer)
    return _approx_variances(outer, j_hat, outer, fresh, B_prime, B_double_prime, rng)


def st2_variances(outer, j_hat, aux, B_prime, B_double_prime, rng, fresh):
    """As :func:`st1_variances`, but subsets are drawn from the auxiliary pool ``aux``."""
    return _approx_variances(np.asarray(outer), j_hat, np.asarray(aux), fresh,
                             B_prime, B_double_prime, rng)


def ci_st1(strip, detector, config: BootstrapConfig, rng: np.random.Generator) -> ConfidenceInterval:
    rs = _Resampler(strip, detector)
    _, outer = rs.outer(config.B, rng)
    v, diag = st1_variances(outer, rs.j_hat, config.B_prime, config.B_double_prime, rng,
                            rs.fresh(rng))
    return _studentized_interval(ST1, config.level, rs.j_hat, outer, v,
                                 rs.split_min, rs.split_max, config.clamp, diag)


def ci_st2(strip, detector, config: BootstrapConfig, rng: np.random.Generator) -> ConfidenceInterval:
    if not config.B_prime < config.B_x:
        raise ValueError("ST2 needs B_prime < B_x")
    rs = _Resampler(strip, detector)
    _, outer = rs.outer(config.B, rng)
    fresh = rs.fresh(rng)
    aux = fresh(config.B_x)
    v, diag = st2_variances(outer, rs.j_hat, aux, config.B_prime, config.B_double_prime,
                            rng, fresh)
    return _studentized_interval(ST2, config.level, rs.j_hat, outer, v,
                                 rs.split_min, rs.split_max, config.clamp, diag)


def ci_studentized_full(strip, detector, config: BootstrapConfig,
                        rng: np.random.Generator) -> ConfidenceInterval:
    """Bootstrap-t with a second-level bootstrap of size B' per replicate.

    Each outer pseudo-strip is resampled again around its own estimate.  An
    inner set with zero variance is patched the way ST1 patches a degenerate
    outer set: fresh inner draws until one differs, else first value + 1.
    """
    if config.B_prime < 2:
        raise ValueError("the inner bootstrap needs B_prime >= 2")
    rs = _Resampler(strip, detector)
    n, Bp = rs.n, config.B_prime
    outer_idx, outer = rs.outer(config.B, rng)
    v = np.full(outer.size, np.nan)
    diag = _new_diag()
    active = np.flatnonzero(outer != rs.j_hat)
    diag["step1_zero"] = int(outer.size - active.size)
    pos = np.arange(n)
    for start in range(0, active.size, _CHUNK):
        rows = active[start:start + _CHUNK]
        m = rows.size
        cut = outer[rows][:, None, None]
        u = rng.random((m, Bp, n))
        inner = np.where(pos < cut, np.floor(u * cut), cut + np.floor(u * (n - cut))).astype(int)
        composed = np.take_along_axis(outer_idx[rows][:, None, :], inner, axis=2)
        est = rs.estimates(composed.reshape(m * Bp, n)).reshape(m, Bp)
        v[rows] = est.var(axis=1, ddof=1)
        for k in np.flatnonzero(v[rows] == 0):
            b = rows[k]
            fresh = rs.fresh(rng, base_idx=outer_idx[b], cut=int(outer[b]))
            new, forced = _first_different(int(est[k, 0]), fresh, config.B_double_prime)
            diag["step3b_forced" if forced else "step3a_found"] += 1
            v[b] = np.append(est[k, :Bp - 1], new).var(ddof=1)
    return _studentized_interval(FULL_T, config.level, rs.j_hat, outer, v,
                                 rs.split_min, rs.split_max, config.clamp, diag)


def confidence_interval(strip, detector, config: BootstrapConfig,
                        rng: np.random.Generator) -> ConfidenceInterval:
    """Run the interval method named by ``config.method``."""
    if config.method in (BBM, PERC):
        dist = bootstrap_distribution(strip, detector, config, rng)
        if config.method == BBM:
            return ci_basic(dist, config.level, config.clamp)
        return ci_percentile(dist, config.level)
    if config.method == ST1:
        return ci_st1(strip, detector, config, rng)
    if config.method == ST2:
        return ci_st2(strip, detector, config, rng)
    return ci_studentized_full(strip, detector, config, rng)
