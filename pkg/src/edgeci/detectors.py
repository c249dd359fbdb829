"""Point estimators of the edge index along a strip of pixels.

A split ``j`` means ``values[:j]`` lie on the left of the edge and
``values[j:]`` on the right, so valid splits run from 1 to N - 1.

A strip is either one-dimensional (one observation per position) or a
window of shape ``(N, h)`` holding ``h`` transverse pixels per position; in
the latter case both detectors pool every pixel on each side of the split.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .g0i import G0IParams, fit_moments, log_density

KRUSKAL_WALLIS = "kruskal_wallis"
GAMBINI = "gambini"

_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class StripOrigin:
    """Image position (row, col) of strip element 0 and the step per element."""

    row: int
    col: int
    drow: int = 0
    dcol: int = 1

    def to_image(self, k):
        return self.row + k * self.drow, self.col + k * self.dcol

    def to_index(self, row, col):
        if self.drow:
            return (row - self.row) // self.drow
        return (col - self.col) // self.dcol


@dataclass
class PixelStrip:
    values: np.ndarray
    origin: Optional[StripOrigin] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (1, 2):
            raise ValueError("strip values must be (N,) or (N, h)")
        if len(self.values) < 4:
            raise ValueError("a strip needs at least 4 positions")
        if np.any(self.values <= 0):
            raise ValueError("strip values must be strictly positive")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SplitSearchConfig:
    """Range of candidate splits and the argmax tie rule.

    Negative bounds count back from N, so the default ``(2, -2)`` means
    ``2..N-2`` and ``(1, -1)`` is the full range ``1..N-1``.
    """

    j_min: int = 2
    j_max: int = -2
    tie_break: str = "lowest"

    def __post_init__(self):
        if self.tie_break not in ("lowest", "highest"):
            raise ValueError("tie_break must be 'lowest' or 'highest'")

    @classmethod
    def full(cls, tie_break: str = "lowest") -> "SplitSearchConfig":
        return cls(1, -1, tie_break)

    def resolve(self, n: int) -> tuple[int, int]:
        lo = self.j_min if self.j_min > 0 else n + self.j_min
        hi = self.j_max if self.j_max > 0 else n + self.j_max
        if not 1 <= lo <= hi <= n - 1:
            raise ValueError(f"invalid split range [{lo}, {hi}] for N={n}")
        return lo, hi


@dataclass(frozen=True)
class EdgeEstimate:
    detector: str
    j_hat: int
    objective: float


def _values(strip) -> np.ndarray:
    if isinstance(strip, PixelStrip):
        return strip.values
    return np.asarray(strip, dtype=float)


def _as_window(x: np.ndarray) -> np.ndarray:
    return x[:, None] if x.ndim == 1 else x


def _pick(objective: np.ndarray, tie_break: str) -> np.ndarray:
    """Row-wise argmax treating values within a relative 1e-12 as tied."""
    best = objective.max(axis=-1, keepdims=True)
    tol = _TIE_RTOL * np.maximum(1.0, np.abs(best))
    hit = objective >= best - tol
    if tie_break == "lowest":
        return hit.argmax(axis=-1)
    return hit.shape[-1] - 1 - hit[..., ::-1].argmax(axis=-1)


def _kw_from_rank_sums(col_sums, sq_total, h, n):
    """KW statistic at every split from per-position rank sums.

    ``col_sums`` is ``(m, n)``; ``sq_total`` the ``(m, 1)`` sum of squared ranks.
    """
    total_n = n * h
    left = np.cumsum(col_sums, axis=1)[:, :-1]
    total = total_n * (total_n + 1) / 2.0
    j = np.arange(1, n)
    between = left**2 / (h * j) + (total - left) ** 2 / (h * (n - j))
    center = total_n * (total_n + 1) ** 2 / 4.0
    s2 = (sq_total - center) / (total_n - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s2 > 1e-12 * center, (between - center) / s2, 0.0)


def kw_profile(strips) -> np.ndarray:
    """Tie-corrected Kruskal-Wallis statistic at every split 1..N-1.

    ``strips`` is a stack ``(m, N)`` of 1-D strips or ``(m, N, h)`` of windows;
    the result has shape ``(m, N - 1)``.  Strips without rank variation give 0.
    """
    x = np.asarray(strips, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    m, n, h = x.shape
    ranks = rankdata(x.reshape(m, n * h), axis=1)
    col_sums = ranks.reshape(m, n, h).sum(axis=2)
    return _kw_from_rank_sums(col_sums, (ranks**2).sum(axis=1, keepdims=True), h, n)


def kw_statistic(strip, j: int) -> float:
    """Kruskal-Wallis statistic for the two-sample split at ``j``.

    Uses the classical ``12/(N(N+1)) sum R_i^2/n_i - 3(N+1)`` form on tie-free
    data and the variance-normalised form when ranks are tied.
    """
    x = _as_window(_values(strip))
    n, h = x.shape
    if not 1 <= j <= n - 1:
        raise ValueError(f"split {j} outside 1..{n - 1}")
    flat = x.ravel()
    total_n = flat.size
    ranks = rankdata(flat).reshape(n, h)
    r1 = ranks[:j].sum()
    r2 = ranks[j:].sum()
    between = r1**2 / (j * h) + r2**2 / ((n - j) * h)
    if np.unique(flat).size == total_n:
        return float(12.0 / (total_n * (total_n + 1)) * between - 3 * (total_n + 1))
    center = total_n * (total_n + 1) ** 2 / 4.0
    s2 = ((ranks**2).sum() - center) / (total_n - 1)
    if s2 <= 1e-12 * center:
        return 0.0
    return float((between - center) / s2)


class _RankTable:
    """Global ordering of a strip's pixels, reused to rank any resample of it.

    A resample that takes position ``k`` of the strip ``c_k`` times gives every
    pixel of that position weight ``c_k``; midranks then follow from cumulative
    weights along the sorted order, tie groups included.
    """

    def __init__(self, x: np.ndarray):
        w = _as_window(x)
        self.n, self.h = w.shape
        flat = w.ravel()
        self.order = np.argsort(flat, kind="stable")
        self.pos = self.order // self.h
        s = flat[self.order]
        starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
        self.starts = None if starts.size == s.size else starts
        if self.starts is not None:
            self.group_of = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, s.size]))

    def profile(self, idx: np.ndarray) -> np.ndarray:
        """KW profile of the resamples ``x[idx]`` for an ``(m, N)`` index array."""
        m, n = idx.shape
        flat_idx = (np.arange(m)[:, None] * self.n + idx).ravel()
        counts = np.bincount(flat_idx, minlength=m * self.n).reshape(m, self.n)
        ws = counts[:, self.pos].astype(float)
        if self.starts is None:
            before = np.cumsum(ws, axis=1) - ws
            rank = before + (ws + 1) / 2
        else:
            gw = np.add.reduceat(ws, self.starts, axis=1)
            gbefore = np.cumsum(gw, axis=1) - gw
            rank = (gbefore + (gw + 1) / 2)[:, self.group_of]
        # per original position: sum of its pixels' midranks (one copy)
        unsorted = np.empty_like(rank)
        unsorted[:, self.order] = rank
        pos_sums = unsorted.reshape(m, self.n, self.h).sum(axis=2)
        sq_total = (ws * rank**2).sum(axis=1, keepdims=True)
        col_sums = np.take_along_axis(pos_sums, idx, axis=1)
        return _kw_from_rank_sums(col_sums, sq_total, self.h, n)


def detect_kw(strip, config: SplitSearchConfig = SplitSearchConfig()) -> EdgeEstimate:
    x = _values(strip)
    lo, hi = config.resolve(len(x))
    prof = kw_profile(x[None])[0, lo - 1:hi]
    k = int(_pick(prof, config.tie_break))
    return EdgeEstimate(KRUSKAL_WALLIS, lo + k, float(prof[k]))


def profile_loglik(strip, j: int, looks: float = 1.0) -> float:
    """Two-sided G0I log-likelihood at split ``j`` with moment-fitted sides.

    Returns ``-inf`` when either side has fewer than two pixels or its moment
    fit does not converge.
    """
    x = _values(strip)
    if not 1 <= j <= len(x) - 1:
        raise ValueError(f"split {j} outside 1..{len(x) - 1}")
    total = 0.0
    for side in (x[:j].ravel(), x[j:].ravel()):
        if side.size < 2:
            return -math.inf
        fit = fit_moments(side, looks)
        if not fit.converged:
            return -math.inf
        params = G0IParams(fit.alpha_hat, fit.gamma_hat, looks)
        total += float(log_density(side, params).sum())
    return total


def detect_gambini(strip, looks: float = 1.0,
                   config: SplitSearchConfig = SplitSearchConfig()) -> EdgeEstimate:
    x = _values(strip)
    lo, hi = config.resolve(len(x))
    prof = np.array([profile_loglik(x, j, looks) for j in range(lo, hi + 1)])
    if lo == hi:
        return EdgeEstimate(GAMBINI, lo, float(prof[0]))
    if not np.any(np.isfinite(prof)):
        raise RuntimeError("every candidate split failed the moment fit")
    k = int(_pick(prof, config.tie_break))
    return EdgeEstimate(GAMBINI, lo + k, float(prof[k]))


@dataclass(frozen=True)
class KruskalWallisDetector:
    """Batched KW edge estimator used by the bootstrap machinery."""

    config: SplitSearchConfig = field(default_factory=SplitSearchConfig)
    name: str = KRUSKAL_WALLIS

    def split_range(self, n: int) -> tuple[int, int]:
        return self.config.resolve(n)

    def estimate(self, strip) -> EdgeEstimate:
        return detect_kw(strip, self.config)

    def __call__(self, strips) -> np.ndarray:
        """Estimates for a stack of strips, ``(m, N)`` or ``(m, N, h)``."""
        x = np.asarray(strips, dtype=float)
        lo, hi = self.split_range(x.shape[1])
        return lo + _pick(kw_profile(x)[:, lo - 1:hi], self.config.tie_break)

    def prepare(self, strip):
        return _RankTable(_values(strip))

    def resampled(self, strip, idx, table=None) -> np.ndarray:
        """Estimates for ``strip[idx]`` without materialising the resamples."""
        table = table if table is not None else self.prepare(strip)
        if table.h == 1:
            # direct ranking is cheaper than the weight trick for 1-D strips
            return self(_values(strip)[idx])
        lo, hi = self.split_range(idx.shape[1])
        return lo + _pick(table.profile(idx)[:, lo - 1:hi], self.config.tie_break)


@dataclass(frozen=True)
class GambiniDetector:
    looks: float = 1.0
    config: SplitSearchConfig = field(default_factory=SplitSearchConfig)
    name: str = GAMBINI

    def split_range(self, n: int) -> tuple[int, int]:
        return self.config.resolve(n)

    def estimate(self, strip) -> EdgeEstimate:
        return detect_gambini(strip, self.looks, self.config)

    def __call__(self, strips) -> np.ndarray:
        return np.array([self.estimate(s).j_hat for s in np.asarray(strips, dtype=float)])

    def prepare(self, strip):
        return None

    def resampled(self, strip, idx, table=None) -> np.ndarray:
        return self(_values(strip)[idx])
