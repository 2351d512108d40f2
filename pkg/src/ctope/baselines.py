"""Comparison methods: direct method (plug-in polynomial regression) and
discretized off-policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.preprocessing import PolynomialFeatures

from .data import Dataset
from .errors import ConfigError, FitError
from .propensity import GpsModel, clip_weight


class PolynomialRegressor:
    """Least-squares polynomial model of the outcome on the joined (x, t)
    vector, with all interaction terms up to ``degree``.

    Inputs are standardized internally (polynomial designs on raw clinical
    scales are numerically singular); predictions are on the original scale.
    Exposes ``predict(t, x)`` and the analytic treatment-derivative
    ``grad_t(t, x)`` used by doubly robust policy search.
    """

    def __init__(self, degree: int = 3):
        if degree < 1:
            raise ConfigError(f"polynomial degree must be >= 1, got {degree}")
        self.degree = degree
        self._poly = PolynomialFeatures(degree=degree, include_bias=True)
        self.coef_: np.ndarray | None = None
        self._center: np.ndarray | None = None
        self._scale: np.ndarray | None = None

    def fit(self, dataset: Dataset) -> "PolynomialRegressor":
        raw = np.column_stack([dataset.x, dataset.t])
        self._center = raw.mean(axis=0)
        spread = raw.std(axis=0)
        self._scale = np.where(spread > 0, spread, 1.0)
        features = self._poly.fit_transform((raw - self._center) / self._scale)
        n, n_terms = features.shape
        if n <= n_terms:
            raise FitError(
                f"need more records than polynomial terms: n={n}, terms={n_terms}"
            )
        if np.linalg.matrix_rank(features) < n_terms:
            raise FitError("rank-deficient polynomial design matrix")
        self.coef_, _, _, _ = np.linalg.lstsq(features, dataset.y, rcond=None)
        return self

    def _standardized(self, t, x):
        t = np.asarray(t, dtype=float).ravel()
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = np.broadcast_to(x, (t.size, x.size))
        return (np.column_stack([x, t]) - self._center) / self._scale

    def predict(self, t, x):
        if self.coef_ is None:
            raise FitError("regressor is not fitted")
        out = self._poly.transform(self._standardized(t, x)) @ self.coef_
        return float(out[0]) if np.ndim(t) == 0 else out

    def grad_t(self, t, x):
        """d prediction / d t, assembled from the term exponents."""
        if self.coef_ is None:
            raise FitError("regressor is not fitted")
        powers = self._poly.powers_  # (n_terms, d + 1); last column is t
        t_pow = powers[:, -1].astype(float)
        z = self._standardized(t, x)
        x_part = np.prod(z[:, None, :-1] ** powers[None, :, :-1], axis=2)
        # d/dt t^p = p t^(p-1); max(p-1, 0) keeps p = 0 terms finite (they get
        # multiplied by p = 0 anyway).
        t_part = t_pow * z[:, None, -1] ** np.maximum(t_pow - 1.0, 0.0)
        out = (x_part * t_part) @ self.coef_ / self._scale[-1]
        return float(out[0]) if np.ndim(t) == 0 else out


def dm_fit(dataset: Dataset, degree: int = 3) -> PolynomialRegressor:
    """Fit the direct-method outcome model."""
    return PolynomialRegressor(degree=degree).fit(dataset)


def dm_evaluate(regressor: PolynomialRegressor, dataset: Dataset, policy) -> float:
    """Plug-in value estimate (1/n) sum r(tau(x_i), x_i)."""
    tau = np.asarray(policy.apply(dataset.x), dtype=float)
    return float(np.mean(regressor.predict(tau, dataset.x)))


@dataclass(frozen=True)
class Discretization:
    """Equal-width binning of the observed treatment range."""

    edges: np.ndarray = field(repr=False)

    @classmethod
    def from_dataset(cls, dataset: Dataset, n_bins: int) -> "Discretization":
        if n_bins < 2:
            raise ConfigError(f"need at least 2 bins, got {n_bins}")
        lo, hi = float(np.min(dataset.t)), float(np.max(dataset.t))
        if not lo < hi:
            raise ConfigError("cannot discretize a constant treatment column")
        return cls(edges=np.linspace(lo, hi, n_bins + 1))

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def bin_index(self, t):
        """Half-open bins [lo, hi) with the last bin closed; -1 outside range."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.edges, t, side="right") - 1
        idx = np.where(t == self.edges[-1], self.n_bins - 1, idx)
        idx = np.where((t < self.edges[0]) | (t > self.edges[-1]), -1, idx)
        return idx


def discretized_evaluate(
    dataset: Dataset,
    policy,
    gps: GpsModel,
    n_bins: int = 10,
    clip_theta: float = 0.1,
) -> float:
    """Discrete-treatment clipped-IPW evaluation after binning the treatments.

    The per-record discrete propensity is the logging density integrated over
    the record's bin; records match only when the policy dose falls in the
    same bin as the logged dose.
    """
    disc = Discretization.from_dataset(dataset, n_bins)
    t_bins = disc.bin_index(dataset.t)
    tau = np.asarray(policy.apply(dataset.x), dtype=float)
    tau_bins = disc.bin_index(tau)
    lo = disc.edges[t_bins]
    hi = disc.edges[t_bins + 1]
    p = np.array(
        [gps.bin_probability(l, h, xi) for l, h, xi in zip(lo, hi, dataset.x)]
    )
    p = np.asarray(clip_weight(p, clip_theta), dtype=float)
    match = (tau_bins == t_bins) & (tau_bins >= 0)
    return float(np.mean(np.where(match, dataset.y / p, 0.0)))
