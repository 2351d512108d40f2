"""Generalized propensity score models, linear-Gaussian imputation, and weight clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import Dataset
from .errors import FitError

# Densities below this are treated as a violated common-support assumption
# when clipping is disabled.
ZERO_DENSITY = 1e-12


@dataclass(frozen=True)
class UniformGps:
    """Known logging policy: treatment uniform on [lo, hi], independent of x."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise FitError(f"degenerate uniform interval [{self.lo}, {self.hi}]")

    def density(self, t, x=None):
        t = np.asarray(t, dtype=float)
        out = np.where((t >= self.lo) & (t <= self.hi), 1.0 / (self.hi - self.lo), 0.0)
        return out if out.ndim else float(out)

    def bin_probability(self, lo, hi, x=None):
        lo_c = np.clip(lo, self.lo, self.hi)
        hi_c = np.clip(hi, self.lo, self.hi)
        return max(hi_c - lo_c, 0.0) / (self.hi - self.lo)


@dataclass(frozen=True)
class LinearNormalGps:
    """Gaussian treatment model T | x ~ N(intercept + coefs @ x, variance).

    Used both for known logging policies and for models imputed from data
    (``kind`` distinguishes the two in reports).
    """

    intercept: float
    coefs: tuple[float, ...]
    variance: float
    kind: str = "known_normal"

    def __post_init__(self):
        if self.variance <= 0:
            raise FitError(f"variance must be positive, got {self.variance}")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))

    def mean(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        m = (x[None, :] if single else x) @ np.asarray(self.coefs, dtype=float) + self.intercept
        return float(m[0]) if single else m

    def density(self, t, x):
        t = np.asarray(t, dtype=float)
        z = (t - self.mean(x)) / self.sigma
        out = np.exp(-0.5 * z * z) / (self.sigma * np.sqrt(2.0 * np.pi))
        return float(out) if np.ndim(out) == 0 else out

    def bin_probability(self, lo, hi, x):
        m = self.mean(x)
        p = ndtr((hi - m) / self.sigma) - ndtr((lo - m) / self.sigma)
        return float(p) if np.ndim(p) == 0 else p


GpsModel = UniformGps | LinearNormalGps


def gps_density(model: GpsModel, t, x):
    """Density f(t | x) of the logging policy at treatment t."""
    return model.density(t, x)


def impute_gps_linear(dataset: Dataset) -> LinearNormalGps:
    """Fit T | x ~ N(b0 + b @ x, sigma^2) by OLS with homoscedastic residuals.

    Raises on rank-deficient designs (naming the collinear columns) and on
    (near-)zero residual variance, which would make inverse weights blow up.
    """
    n, d = len(dataset), dataset.d
    if n <= d + 1:
        raise FitError(f"need n > d + 1 to impute the GPS, got n={n}, d={d}")
    design = np.column_stack([np.ones(n), dataset.x])
    rank = np.linalg.matrix_rank(design)
    if rank < d + 1:
        # QR with column pivoting: trailing pivots carry the dependent columns.
        from scipy.linalg import qr

        _, _, piv = qr(design, mode="economic", pivoting=True)
        dependent = sorted(piv[rank:])
        names = ["intercept" if j == 0 else f"x{j - 1}" for j in dependent]
        raise FitError(f"rank-deficient design: columns {names} are collinear")
    coef, _, _, _ = np.linalg.lstsq(design, dataset.t, rcond=None)
    resid = dataset.t - design @ coef
    residual_variance = float(resid @ resid) / (n - d - 1)
    if residual_variance < ZERO_DENSITY:
        raise FitError(
            "degenerate logging policy: residual variance of the treatment "
            f"regression is {residual_variance:.3e}"
        )
    return LinearNormalGps(
        intercept=float(coef[0]),
        coefs=tuple(float(c) for c in coef[1:]),
        variance=residual_variance,
        kind="imputed_linear",
    )


def clip_weight(q, theta: float):
    """Clip a propensity density from below at theta (theta = 0 disables)."""
    if theta < 0:
        raise FitError(f"clip threshold must be nonnegative, got {theta}")
    if theta == 0:
        return q
    out = np.maximum(np.asarray(q, dtype=float), theta)
    return out if out.ndim else float(out)
