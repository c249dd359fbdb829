"""The G0I intensity law for textured speckle.

Z = X * Y with speckle Y ~ Gamma(shape=L, rate=L) (unit mean) and backscatter
X ~ InverseGamma(shape=-alpha, scale=gamma).  Sampling uses the reciprocal
identity 1/X ~ Gamma(shape=-alpha, rate=gamma), i.e. numpy scale ``1/gamma``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln

ALPHA_MIN = -50.0
ALPHA_EPS = 1e-6
_XTOL = 1e-8
_MAXITER = 200


class TextureClass(enum.Enum):
    EXTREMELY_HETEROGENEOUS = "extremely_heterogeneous"
    HETEROGENEOUS = "heterogeneous"
    HOMOGENEOUS = "homogeneous"

    @classmethod
    def from_alpha(cls, alpha: float) -> "TextureClass":
        # boundaries -4 and -10 go to the rougher class
        if alpha >= -4:
            return cls.EXTREMELY_HETEROGENEOUS
        if alpha >= -10:
            return cls.HETEROGENEOUS
        return cls.HOMOGENEOUS


@dataclass(frozen=True)
class G0IParams:
    """Parameters of the G0I law.

    alpha : roughness, strictly negative
    gamma : scale, strictly positive
    looks : number of looks, at least 1
    """

    alpha: float
    gamma: float
    looks: float = 1.0

    def __post_init__(self):
        if not self.alpha < 0:
            raise ValueError(f"alpha must be negative, got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.looks >= 1:
            raise ValueError(f"looks must be >= 1, got {self.looks}")

    @classmethod
    def unit_mean(cls, alpha: float, looks: float = 1.0) -> "G0IParams":
        return cls(alpha, gamma_for_unit_mean(alpha, looks), looks)

    @property
    def texture(self) -> TextureClass:
        return TextureClass.from_alpha(self.alpha)


@dataclass(frozen=True)
class MomentEstimate:
    alpha_hat: float
    gamma_hat: float
    converged: bool
    iterations: int


def log_density(z, params: G0IParams):
    """Elementwise log of the G0I density, computed with log-gamma terms."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("density is defined for z > 0 only")
    a, g, L = params.alpha, params.gamma, params.looks
    const = (L * math.log(L) + gammaln(L - a) - a * math.log(g)
             - gammaln(L) - gammaln(-a))
    return const + (L - 1) * np.log(z) - (L - a) * np.log(g + L * z)


def density(z, params: G0IParams):
    """G0I probability density at ``z`` (scalar or array)."""
    out = np.exp(log_density(z, params))
    return float(out) if np.ndim(out) == 0 else out


def noncentral_moment(r: float, params: G0IParams) -> float:
    """E[Z**r]; ``math.inf`` when the moment does not exist (-alpha <= r)."""
    if not r > 0:
        raise ValueError("r must be positive")
    a, L = params.alpha, params.looks
    if not -a > r:
        return math.inf
    log_ratio = gammaln(-a - r) + gammaln(L + r) - gammaln(-a) - gammaln(L)
    return float((params.gamma / L) ** r * math.exp(log_ratio))


def gamma_for_unit_mean(alpha: float, looks: float = 1.0) -> float:
    """Scale giving E[Z] = 1.

    The gamma-function ratio collapses to ``-alpha - 1`` for every L, but it is
    evaluated in full so the closure with :func:`noncentral_moment` is exact
    to round-off.
    """
    if not alpha < -1:
        raise ValueError(f"unit mean requires alpha < -1, got {alpha}")
    L = looks
    return float(math.exp(gammaln(-alpha) + gammaln(L) - gammaln(-alpha - 1)
                          - gammaln(L + 1)) * L)


def sample(params: G0IParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` G0I variates as speckle / Gamma(-alpha, rate gamma)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    L = params.looks
    speckle = rng.gamma(shape=L, scale=1.0 / L, size=n)
    inv_backscatter = rng.gamma(shape=-params.alpha, scale=1.0 / params.gamma, size=n)
    return speckle / inv_backscatter


def _log_moment_ratio(alpha, looks):
    # log of E[Z] / E[Z^(1/2)]^2, which does not depend on gamma
    a, L = alpha, looks
    return (gammaln(-a - 1) + gammaln(L + 1) - gammaln(-a) - gammaln(L)
            - 2 * (gammaln(-a - 0.5) + gammaln(L + 0.5) - gammaln(-a) - gammaln(L)))


def fit_moments(data, looks: float = 1.0) -> MomentEstimate:
    """Method-of-moments estimate of (alpha, gamma) with ``looks`` known.

    Uses the sample moments of order 1 and 1/2.  Eliminating gamma leaves a
    one-dimensional equation in alpha, solved by bisection on
    ``[ALPHA_MIN, -1 - ALPHA_EPS]``.  When the sample admits no root in that
    bracket the estimate is returned with ``converged=False`` rather than
    raising, since edge detectors call this at every split point.
    """
    z = np.asarray(data, dtype=float)
    if z.size < 2:
        return MomentEstimate(math.nan, math.nan, False, 0)
    if np.any(z <= 0):
        raise ValueError("moment fitting needs strictly positive data")
    m1 = z.mean()
    m_half = np.sqrt(z).mean()
    target = math.log(m1) - 2 * math.log(m_half)

    def g(alpha):
        return _log_moment_ratio(alpha, looks) - target

    lo, hi = ALPHA_MIN, -1 - ALPHA_EPS
    g_lo, g_hi = g(lo), g(hi)
    if not (np.isfinite(g_lo) and np.isfinite(g_hi)) or g_lo * g_hi > 0:
        return MomentEstimate(math.nan, math.nan, False, 0)
    alpha_hat, info = optimize.bisect(g, lo, hi, xtol=_XTOL, maxiter=_MAXITER,
                                      full_output=True, disp=False)
    if not info.converged:
        return MomentEstimate(alpha_hat, math.nan, False, info.iterations)
    gamma_hat = m1 * math.exp(gammaln(-alpha_hat) + gammaln(looks)
                              - gammaln(-alpha_hat - 1) - gammaln(looks + 1)) * looks
    return MomentEstimate(float(alpha_hat), float(gamma_hat), True, info.iterations)
