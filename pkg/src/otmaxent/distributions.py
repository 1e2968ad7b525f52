"""Continuous target families: normal and skew-normal.

Both families expose the same surface (``pdf``, ``cdf``, ``quantile``,
``moments``) and accept scalars or arrays. The skew-normal uses the
location/scale/shape parameterization: with z = (x - loc)/scale,

    pdf(x) = (2 / scale) * phi(z) * Phi(shape * z)

whose cdf is Phi(z) - 2 * T(z, shape) with T Owen's T function. Moments in
terms of delta = shape / sqrt(1 + shape^2):

    mean      = loc + scale * delta * sqrt(2/pi)
    variance  = scale^2 * (1 - 2 delta^2 / pi)
    skewness  = (4 - pi)/2 * (delta sqrt(2/pi))^3 / (1 - 2 delta^2/pi)^(3/2)

Positive shape gives positive skewness; the skewness magnitude is bounded by
``MAX_SKEWNESS`` (the delta -> 1 limit).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import special

# Supremum of |skewness| over the skew-normal family (value of the skewness
# formula at delta = 1); moment matching is only feasible strictly below it.
MAX_SKEWNESS = 0.9952717464311565

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _std_normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def _check_probability(q):
    q_arr = np.asarray(q, dtype=float)
    if np.any(~np.isfinite(q_arr)) or np.any(q_arr <= 0.0) or np.any(q_arr >= 1.0):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    return q_arr


def _scalar_like(result, template):
    if np.isscalar(template) or np.ndim(template) == 0:
        return float(result)
    return result


@dataclasses.dataclass(frozen=True)
class Normal:
    """Normal family parameterized by mean and variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)):
            raise ValueError("normal parameters must be finite")
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    @property
    def sd(self):
        return math.sqrt(self.variance)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return _scalar_like(_std_normal_pdf(z) / self.sd, x)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return _scalar_like(special.ndtr(z), x)

    def quantile(self, q):
        q_arr = _check_probability(q)
        return _scalar_like(self.mean + self.sd * special.ndtri(q_arr), q)

    def moments(self):
        return (self.mean, self.variance, 0.0)


@dataclasses.dataclass(frozen=True)
class SkewNormal:
    """Skew-normal family with location ``loc``, scale ``scale``, shape ``shape``."""

    loc: float
    scale: float
    shape: float

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.loc, self.scale, self.shape)):
            raise ValueError("skew-normal parameters must be finite")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def _std_pdf(self, z):
        return 2.0 * _std_normal_pdf(z) * special.ndtr(self.shape * z)

    def _std_cdf(self, z):
        return special.ndtr(z) - 2.0 * special.owens_t(z, self.shape)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return _scalar_like(self._std_pdf(z) / self.scale, x)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return _scalar_like(self._std_cdf(z), x)

    def quantile(self, q):
        """Inverse cdf by bracketed Newton iteration on the standardized cdf.

        The root is bracketed by the normal quantile +/- 10 standard units;
        Newton steps that leave the bracket fall back to bisection. With
        ``shape == 0`` the normal quantile is returned directly so the two
        families agree exactly.
        """
        q_arr = _check_probability(q)
        if self.shape == 0.0:
            return _scalar_like(self.loc + self.scale * special.ndtri(q_arr), q)
        q_flat = np.atleast_1d(q_arr).astype(float).ravel()
        z = special.ndtri(q_flat)
        lo, hi = z - 10.0, z + 10.0
        active = np.arange(q_flat.size)
        # drive the residual to the floating-point floor of the cdf so the
        # quantile is a smooth function of q at the 1e-15 level; converged
        # entries drop out of the working set
        for _ in range(120):
            za, qa = z[active], q_flat[active]
            f = self._std_cdf(za) - qa
            done = np.abs(f) <= 2e-16 * (1.0 + np.abs(za)) + 1e-13 * qa
            if done.any():
                keep = ~done
                active = active[keep]
                if active.size == 0:
                    break
                za, qa, f = za[keep], qa[keep], f[keep]
            hi[active] = np.where(f > 0, za, hi[active])
            lo[active] = np.where(f > 0, lo[active], za)
            dens = self._std_pdf(za)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(dens > 0, f / dens, np.inf)
            z_new = za - step
            bad = (
                ~np.isfinite(z_new)
                | (z_new <= lo[active])
                | (z_new >= hi[active])
                | (np.abs(z_new - za) < 1e-16 * np.abs(za))
            )
            z[active] = np.where(bad, 0.5 * (lo[active] + hi[active]), z_new)
        out = self.loc + self.scale * z.reshape(np.shape(q_arr))
        return _scalar_like(out, q)

    def moments(self):
        delta = self.shape / math.sqrt(1.0 + self.shape**2)
        mu_z = delta * _SQRT_2_OVER_PI
        mean = self.loc + self.scale * mu_z
        variance = self.scale**2 * (1.0 - mu_z**2)
        skewness = (4.0 - math.pi) / 2.0 * mu_z**3 / (1.0 - mu_z**2) ** 1.5
        return (mean, variance, skewness)


ParametricFamily = Normal | SkewNormal


def skew_normal_from_moments(mean, variance, skewness):
    """Skew-normal family whose first three moments match the targets.

    The skewness equation is inverted in closed form for delta, then scale
    and location follow. Raises if ``abs(skewness)`` reaches the family's
    supremum ``MAX_SKEWNESS``.
    """
    if not all(np.isfinite(v) for v in (mean, variance, skewness)):
        raise ValueError("target moments must be finite")
    if variance <= 0:
        raise ValueError("target variance must be positive")
    if abs(skewness) >= MAX_SKEWNESS:
        raise ValueError(
            "target skewness magnitude "
            f"{abs(skewness):.6g} is not attainable by a skew-normal "
            f"distribution (|skewness| must be < {MAX_SKEWNESS})"
        )
    b = (4.0 - math.pi) / 2.0
    g23 = abs(skewness) ** (2.0 / 3.0)
    t = g23 / (g23 + b ** (2.0 / 3.0))
    delta = math.copysign(math.sqrt(math.pi * t / 2.0), skewness)
    shape = delta / math.sqrt(1.0 - delta**2) if abs(delta) < 1.0 else math.inf
    mu_z = delta * _SQRT_2_OVER_PI
    scale = math.sqrt(variance / (1.0 - mu_z**2))
    loc = mean - scale * mu_z
    return SkewNormal(loc=loc, scale=scale, shape=shape)
