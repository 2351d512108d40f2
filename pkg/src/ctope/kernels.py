"""Smoothing kernels: densities, derivatives, moments, CDFs, and boundary truncation."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, OverlapError

# Quadrature window (in standardized units) used for the infinite-support Gaussian.
GAUSSIAN_WINDOW = 8.0


class Kernel:
    """A symmetric, nonnegative smoothing kernel integrating to one.

    Subclasses provide the density ``K(u)``, its derivative, the CDF, the
    second moment ``kappa2 = int u^2 K(u) du`` and roughness
    ``R = int K(u)^2 du`` in closed form.  Finite-support kernels vanish
    outside ``[-1, 1]``.
    """

    name: str = ""
    support: tuple[float, float] | None = None  # None means infinite support
    kinks: tuple[float, ...] = ()

    def __call__(self, u):
        raise NotImplementedError

    def grad(self, u):
        """dK/du; at kink points returns the one-sided value from the interior."""
        raise NotImplementedError

    def cdf(self, u):
        raise NotImplementedError

    def moment2(self) -> float:
        raise NotImplementedError

    def roughness(self) -> float:
        raise NotImplementedError

    def kink_mask(self, u):
        """Boolean mask marking points where K is not differentiable."""
        u = np.asarray(u, dtype=float)
        mask = np.zeros(u.shape, dtype=bool)
        for k in self.kinks:
            mask |= u == k
        return mask

    def __repr__(self):
        return f"{type(self).__name__}()"


class GaussianKernel(Kernel):
    name = "gaussian"
    support = None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)

    def grad(self, u):
        u = np.asarray(u, dtype=float)
        return -u * self(u)

    def cdf(self, u):
        return ndtr(np.asarray(u, dtype=float))

    def moment2(self) -> float:
        return 1.0

    def roughness(self) -> float:
        return 1.0 / (2.0 * np.sqrt(np.pi))


class EpanechnikovKernel(Kernel):
    name = "epanechnikov"
    support = (-1.0, 1.0)
    kinks = (-1.0, 1.0)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)

    def grad(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, -1.5 * u, 0.0)

    def cdf(self, u):
        v = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        return 0.75 * (v - v**3 / 3.0 + 2.0 / 3.0)

    def moment2(self) -> float:
        return 0.2

    def roughness(self) -> float:
        return 0.6


class TriangularKernel(Kernel):
    name = "triangular"
    support = (-1.0, 1.0)
    kinks = (-1.0, 0.0, 1.0)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, 1.0 - np.abs(u), 0.0)

    def grad(self, u):
        # sign(0) = 0, so the center kink reports the midpoint subgradient.
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, -np.sign(u), 0.0)

    def cdf(self, u):
        v = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        return np.where(v <= 0.0, 0.5 * (1.0 + v) ** 2, 1.0 - 0.5 * (1.0 - v) ** 2)

    def moment2(self) -> float:
        return 1.0 / 6.0

    def roughness(self) -> float:
        return 2.0 / 3.0


GAUSSIAN = GaussianKernel()
EPANECHNIKOV = EpanechnikovKernel()
TRIANGULAR = TriangularKernel()

KERNELS = {k.name: k for k in (GAUSSIAN, EPANECHNIKOV, TRIANGULAR)}


def get_kernel(name: str) -> Kernel:
    try:
        return KERNELS[name]
    except KeyError:
        raise ConfigError(
            f"unknown kernel {name!r}; choose one of {sorted(KERNELS)}"
        ) from None


def boundary_mass(kernel: Kernel, center, h: float, bounds: tuple[float, float]):
    """Fraction of kernel mass that a kernel centered at ``center`` with scale
    ``h`` places inside the treatment interval ``bounds``.

    Returns ``(1/h) * int_{lo}^{hi} K((center - t) / h) dt``, which is 1 when
    the kernel lies fully inside the interval.  ``center`` may be a scalar or
    an array.
    """
    if h <= 0:
        raise ConfigError(f"bandwidth must be positive, got {h}")
    lo, hi = bounds
    if not lo < hi:
        raise ConfigError(f"treatment bounds must satisfy lo < hi, got {bounds}")
    center = np.asarray(center, dtype=float)
    mass = kernel.cdf((center - lo) / h) - kernel.cdf((center - hi) / h)
    if np.any(mass < 1e-12):
        raise OverlapError(
            "policy places (numerically) all kernel mass outside the treatment bounds"
        )
    return mass if mass.ndim else float(mass)


def boundary_mass_grad(kernel: Kernel, center, h: float, bounds: tuple[float, float]):
    """Derivative of :func:`boundary_mass` with respect to ``center``."""
    lo, hi = bounds
    center = np.asarray(center, dtype=float)
    return (kernel((center - lo) / h) - kernel((center - hi) / h)) / h


def triangular_hinge_decomposition(u):
    """Rewrite of the triangular kernel as a combination of three hinges
    ``max(a, u)``; used as an independent oracle in tests."""
    u = np.asarray(u, dtype=float)
    val = np.maximum(-1.0, u) - 2.0 * np.maximum(0.0, u) + np.maximum(1.0, u)
    return val if val.ndim else float(val)
