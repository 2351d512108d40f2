"""Plug-in bandwidth selection and the n^(-1/5) rescaling rule.

The mean-squared-error-optimal smoothing scale is

    h* = ( c3 / (4 * c1^2 * n) )^(1/5)

where c1 is the bias constant (kernel second moment times the mean curvature
of the conditional outcome density in the treatment direction, integrated
against y/2) and c3 is the variance constant (kernel roughness times the mean
of E[Y^2 | tau(X), X] over the logging density at the policy dose).  Both are
estimated from the data: the conditional outcome density by a product-Gaussian
KDE, its second treatment-derivative by central differencing, and the
y-integrals by trapezoidal quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, FitError, SupportError
from .kernels import Kernel

# KDE is only trusted in low dimension; beyond this the CLI demands an
# explicit bandwidth or a pilot-rescale.
MAX_PLUGIN_DIM = 3
DENSITY_FLOOR = 1e-10


@dataclass(frozen=True)
class PluginEstimate:
    """Estimated constants and the resulting plug-in bandwidth."""

    c1: float
    c3: float
    h_star: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c3": self.c3,
            "h_star": self.h_star,
            "diagnostics": self.diagnostics,
        }


class ConditionalDensityKde:
    """Product-Gaussian KDE for the conditional outcome density f(y | t, x).

    The joint density over (y, t, x) and the marginal over (t, x) share the
    same per-dimension bandwidths (rule-of-thumb 1.06 * std * m^(-1/(4+dims))
    with dims = d + 2), so the estimated conditional integrates to one in y by
    construction.
    """

    def __init__(self, dataset: Dataset):
        if len(dataset) < 10:
            raise FitError(f"KDE needs at least 10 records, got {len(dataset)}")
        self._y = dataset.y
        self._t = dataset.t
        self._x = dataset.x
        dims = dataset.d + 2
        m = len(dataset)
        factor = 1.06 * m ** (-1.0 / (4 + dims))
        sds = [np.std(col, ddof=1) for col in (self._y, self._t, *self._x.T)]
        if any(sd <= 0 for sd in sds):
            raise FitError("a data column is constant; KDE bandwidth undefined")
        self.h_y, self.h_t, *self.h_x = (factor * sd for sd in sds)

    def _tx_weights(self, t_values, x):
        """Unnormalized (t, x)-kernel weights, shape (len(t_values), n)."""
        x = np.asarray(x, dtype=float).ravel()
        zx = (x[None, :] - self._x) / np.asarray(self.h_x)
        wx = np.exp(-0.5 * np.sum(zx * zx, axis=1)) / (
            np.prod(self.h_x) * (2 * np.pi) ** (len(self.h_x) / 2)
        )
        t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
        zt = (t_values[:, None] - self._t[None, :]) / self.h_t
        wt = np.exp(-0.5 * zt * zt) / (self.h_t * np.sqrt(2 * np.pi))
        return wt * wx[None, :]

    def conditional_on_grid(self, y_grid, t_values, x):
        """f(y | t, x) for a grid of y and several t at one covariate vector.

        Returns an array of shape (len(y_grid), len(t_values)).  Raises
        SupportError when the (t, x)-marginal underflows at any t.
        """
        w = self._tx_weights(t_values, x)
        marginal = np.mean(w, axis=1)
        if np.any(marginal < DENSITY_FLOOR):
            raise SupportError(
                "(t, x) query lies outside the support of the logged data"
            )
        zy = (np.asarray(y_grid, dtype=float)[:, None] - self._y[None, :]) / self.h_y
        phi_y = np.exp(-0.5 * zy * zy) / (self.h_y * np.sqrt(2 * np.pi))
        joint = phi_y @ w.T / w.shape[1]
        return joint / marginal[None, :]

    def density(self, y, t, x) -> float:
        return float(self.conditional_on_grid([y], [t], x)[0, 0])


def kde_conditional_density(dataset: Dataset, y: float, t: float, x) -> float:
    """Conditional outcome density estimate f(y | t, x) at a single point."""
    return ConditionalDensityKde(dataset).density(y, t, x)


def second_derivative_t(evaluator, y, t, x, step: float) -> float:
    """Central second difference of ``evaluator(y, t, x)`` in t."""
    if step <= 0:
        raise ConfigError(f"finite-difference step must be positive, got {step}")
    f_plus = evaluator(y, t + step, x)
    f_mid = evaluator(y, t, x)
    f_minus = evaluator(y, t - step, x)
    return (f_plus - 2.0 * f_mid + f_minus) / step**2


def plugin_bandwidth(
    dataset: Dataset,
    policy,
    kernel: Kernel,
    gps,
    y_grid_size: int = 201,
    fd_step: float | None = None,
) -> PluginEstimate:
    """Estimate the MSE-optimal bandwidth for evaluating ``policy`` on data
    logged under ``gps``.

    The expectation over covariates is the empirical average over records.
    Deterministic given (dataset, policy, kernel, gps).
    """
    n = len(dataset)
    if n < 50:
        raise FitError(f"plug-in bandwidth needs n >= 50, got {n}")
    if dataset.d > MAX_PLUGIN_DIM:
        raise ConfigError(
            f"plug-in bandwidth supports covariate dimension <= {MAX_PLUGIN_DIM} "
            f"(got d={dataset.d}); supply a bandwidth explicitly or rescale a "
            "pilot value"
        )
    kde = ConditionalDensityKde(dataset)
    sd_y = np.std(dataset.y, ddof=1)
    sd_t = np.std(dataset.t, ddof=1)
    if fd_step is None:
        fd_step = float(np.clip(0.5 * sd_t * n ** (-1.0 / 6.0), 1e-3 * sd_t, sd_t))
    y_grid = np.linspace(dataset.y.min() - 3 * sd_y, dataset.y.max() + 3 * sd_y, y_grid_size)

    tau = np.asarray(policy.apply(dataset.x), dtype=float)
    curvature_terms = np.empty(n)
    variance_terms = np.empty(n)
    for i in range(n):
        cond = kde.conditional_on_grid(
            y_grid, [tau[i] - fd_step, tau[i], tau[i] + fd_step], dataset.x[i]
        )
        d2 = (cond[:, 2] - 2.0 * cond[:, 1] + cond[:, 0]) / fd_step**2
        curvature_terms[i] = np.trapezoid(0.5 * y_grid * d2, y_grid)
        ey2 = np.trapezoid(y_grid**2 * cond[:, 1], y_grid)
        variance_terms[i] = ey2 / gps.density(tau[i], dataset.x[i])

    c1 = kernel.moment2() * float(np.mean(curvature_terms))
    c3 = kernel.roughness() * float(np.mean(variance_terms))
    if c1**2 < 1e-12:
        raise FitError(
            "flat curvature: plug-in bandwidth is undefined, supply a bandwidth manually"
        )
    h_star = float((c3 / (4.0 * c1**2 * n)) ** 0.2)
    return PluginEstimate(
        c1=c1,
        c3=c3,
        h_star=h_star,
        diagnostics={
            "n": n,
            "y_grid_size": y_grid_size,
            "fd_step": fd_step,
            "kde_bandwidths": {
                "y": kde.h_y,
                "t": kde.h_t,
                "x": list(np.atleast_1d(kde.h_x)),
            },
        },
    )


def rescale_bandwidth(h0: float, n0: int, n: int) -> float:
    """Carry a pilot bandwidth h0 computed at sample size n0 to sample size n
    via the optimal-order rule h0 * (n0 / n)^(1/5)."""
    if h0 <= 0:
        raise ConfigError(f"pilot bandwidth must be positive, got {h0}")
    if n0 < 1 or n < 1:
        raise ConfigError(f"sample sizes must be >= 1, got n0={n0}, n={n}")
    return float(h0 * (n0 / n) ** 0.2)
