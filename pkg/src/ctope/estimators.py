"""Kernelized off-policy value estimators for continuous treatments.

Three estimator kinds share one weighting scheme: each logged treatment is
compared to the policy's treatment through a kernel at scale h, outcomes are
inverse-weighted by the (clipped) logging density, and optionally each term is
renormalized by the kernel mass falling inside the treatment bounds to remove
boundary bias.

Per-record ``terms`` are kept on the scale of the estimate itself (the 1/h
factor included) so that ``estimate == mean(terms)`` holds for every kind and
the dispersion statistic measures the actual summands.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, EvalResult
from .errors import ConfigError, OverlapError
from .kernels import Kernel, boundary_mass
from .propensity import ZERO_DENSITY, clip_weight

LOW_OVERLAP_N = 5


@dataclass(frozen=True)
class EstimatorConfig:
    """Configuration of an off-policy value estimator.

    kind : {"ipw", "self_normalized", "doubly_robust"}
    kernel : Kernel
    bandwidth : float > 0
    clip_theta : float >= 0, clipping threshold for the logging density
        (0 disables clipping).
    boundary_correction : bool, renormalize each kernel term by its mass
        inside the dataset's treatment bounds.
    regressor : fitted outcome model with ``predict(t, x)``; required iff
        kind == "doubly_robust".
    """

    kind: str
    kernel: Kernel
    bandwidth: float
    clip_theta: float = 0.1
    boundary_correction: bool = False
    regressor: object | None = None

    def __post_init__(self):
        if self.kind not in ("ipw", "self_normalized", "doubly_robust"):
            raise ConfigError(f"unknown estimator kind {self.kind!r}")
        if not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.clip_theta < 0:
            raise ConfigError(f"clip_theta must be nonnegative, got {self.clip_theta}")
        if self.kind == "doubly_robust" and self.regressor is None:
            raise ConfigError("doubly_robust estimation requires a fitted regressor")


@dataclass(frozen=True)
class KernelWeights:
    """Per-record pieces shared by the estimators and the optimizer."""

    tau: np.ndarray  # policy treatments tau(x_i)
    u: np.ndarray  # standardized distances (tau_i - t_i) / h
    k: np.ndarray  # kernel values K(u_i)
    q: np.ndarray  # clipped logging densities
    bm: np.ndarray  # boundary masses (all ones when correction is off)

    @property
    def s(self) -> np.ndarray:
        """Combined weight K(u_i) / (q_i * bm_i)."""
        return self.k / (self.q * self.bm)


def kernel_weights(dataset: Dataset, policy, config: EstimatorConfig) -> KernelWeights:
    if len(dataset) == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    if dataset.q is None:
        raise ConfigError(
            "dataset has no propensity column; supply one or impute a GPS model"
        )
    tau = np.asarray(policy.apply(dataset.x), dtype=float)
    u = (tau - dataset.t) / config.bandwidth
    k = config.kernel(u)
    if config.clip_theta == 0 and np.any((dataset.q < ZERO_DENSITY)):
        idx = int(np.argmax(dataset.q < ZERO_DENSITY))
        raise OverlapError(
            f"record {idx} has propensity {dataset.q[idx]:.3e} < {ZERO_DENSITY} and "
            "clipping is disabled: the logging policy violates common support"
        )
    q = np.asarray(clip_weight(dataset.q, config.clip_theta), dtype=float)
    if config.boundary_correction:
        if dataset.treatment_bounds is None:
            raise ConfigError(
                "boundary correction requires explicit treatment_bounds on the dataset"
            )
        bm = np.asarray(
            boundary_mass(config.kernel, tau, config.bandwidth, dataset.treatment_bounds)
        )
    else:
        bm = np.ones_like(u)
    return KernelWeights(tau=tau, u=u, k=k, q=q, bm=bm)


def _result(terms: np.ndarray, w: KernelWeights, config: EstimatorConfig, **extra) -> EvalResult:
    estimate = float(np.mean(terms))
    std = float(np.sqrt(np.sum((terms - estimate) ** 2)) / len(terms))
    n_eff = int(np.count_nonzero(w.k))
    return EvalResult(
        estimate=estimate,
        terms=terms,
        std=std,
        n_eff=n_eff,
        bandwidth=config.bandwidth,
        low_overlap=n_eff < LOW_OVERLAP_N,
        **extra,
    )


def ipw_evaluate(dataset: Dataset, policy, config: EstimatorConfig) -> EvalResult:
    """Inverse-propensity-weighted estimate (1/nh) sum K(u_i) y_i / q_i."""
    if config.kind != "ipw":
        raise ConfigError(f"ipw_evaluate called with kind={config.kind!r}")
    w = kernel_weights(dataset, policy, config)
    terms = w.s * dataset.y / config.bandwidth
    return _result(terms, w, config)


def sn_evaluate(dataset: Dataset, policy, config: EstimatorConfig) -> EvalResult:
    """Self-normalized estimate: kernel-IPW numerator over the sum of weights.

    Invariant to rescaling all propensities by a common factor; always lies in
    the range of outcomes that receive nonzero kernel weight.
    """
    if config.kind != "self_normalized":
        raise ConfigError(f"sn_evaluate called with kind={config.kind!r}")
    w = kernel_weights(dataset, policy, config)
    denom = float(np.sum(w.s))
    if denom <= ZERO_DENSITY:
        raise OverlapError(
            "self-normalization denominator is numerically zero: the policy "
            "assigns treatments too far from every logged treatment"
        )
    n = len(dataset)
    terms = n * w.s * dataset.y / denom
    sn_denominator = denom / (n * config.bandwidth)
    return _result(terms, w, config, sn_denominator=sn_denominator)


def dr_evaluate(dataset: Dataset, policy, config: EstimatorConfig) -> EvalResult:
    """Doubly robust estimate: outcome-model prediction at the policy dose plus
    kernel-IPW-weighted model residuals."""
    if config.kind != "doubly_robust":
        raise ConfigError(f"dr_evaluate called with kind={config.kind!r}")
    w = kernel_weights(dataset, policy, config)
    r_tau = np.asarray(config.regressor.predict(w.tau, dataset.x), dtype=float)
    r_log = np.asarray(config.regressor.predict(dataset.t, dataset.x), dtype=float)
    terms = r_tau + w.s * (dataset.y - r_log) / config.bandwidth
    return _result(terms, w, config)


_DISPATCH = {
    "ipw": ipw_evaluate,
    "self_normalized": sn_evaluate,
    "doubly_robust": dr_evaluate,
}


def evaluate(dataset: Dataset, policy, config: EstimatorConfig) -> EvalResult:
    """Evaluate a policy with the configured estimator kind."""
    return _DISPATCH[config.kind](dataset, policy, config)


def reg_std(result: EvalResult) -> float:
    """Dispersion of the per-record terms: (1/n) sqrt(sum (z_i - v)^2).

    This is the statistic added (scaled by a regularization weight) to the
    policy-search objective to penalize estimates supported by few records.
    """
    if result.terms is None or len(result.terms) == 0:
        raise ConfigError("result carries no per-record terms")
    n = len(result.terms)
    return float(np.sqrt(np.sum((result.terms - result.estimate) ** 2)) / n)


def with_bandwidth(config: EstimatorConfig, h: float) -> EstimatorConfig:
    return replace(config, bandwidth=h)
