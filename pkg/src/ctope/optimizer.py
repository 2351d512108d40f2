"""Policy search: minimize a configured off-policy estimate over linear policies.

The objective is nonconvex (and piecewise smooth for finite-support kernels),
so the solver is projected gradient descent with Armijo backtracking and
multiple seeded restarts; the best restart wins.  Gradients are analytic,
derived from the estimator definitions: the self-normalized kind uses the
quotient rule, boundary correction contributes a product-rule term through the
truncation mass, and the variance regularizer is differentiated by chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, FitError, OverlapError
from .estimators import EstimatorConfig, evaluate, kernel_weights
from .kernels import boundary_mass_grad
from .policies import ConstraintSet, L2Ball, Box, LinearPolicy, project


@dataclass(frozen=True)
class LinearPolicyClass:
    """Search space: linear policies with optional intercept and constraints.

    Constraints apply to the coefficient block; the intercept, when enabled,
    is clamped to ``intercept_bounds`` if given.
    """

    constraints: ConstraintSet = None
    use_intercept: bool = False
    intercept_bounds: tuple[float, float] | None = None


@dataclass(frozen=True)
class OptimizeConfig:
    """Search settings.  ``min_n_eff`` declares candidates infeasible when
    fewer records receive nonzero kernel weight: estimates that would carry
    the low-overlap warning are not trustworthy objective values (a policy
    touching a handful of zero-loss records would otherwise win with an
    overfit score of zero)."""

    estimator: EstimatorConfig
    restarts: int = 20
    max_iters: int = 200
    step_init: float = 1.0
    backtrack: float = 0.5
    armijo_c: float = 1e-4
    min_step: float = 1e-12
    lambda_reg: float = 0.0
    seed: int = 0
    tolerance: float = 1e-6
    min_n_eff: int = 5
    method: str = "pgd"  # or "lbfgs"

    def __post_init__(self):
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.lambda_reg < 0:
            raise ConfigError(f"lambda_reg must be nonnegative, got {self.lambda_reg}")
        if self.min_n_eff < 0:
            raise ConfigError(f"min_n_eff must be nonnegative, got {self.min_n_eff}")
        if self.method not in ("pgd", "lbfgs"):
            raise ConfigError(f"unknown optimizer method {self.method!r}")


@dataclass(frozen=True)
class RestartSummary:
    index: int
    initial_params: tuple[float, ...]
    final_params: tuple[float, ...]
    objective: float
    iterations: int
    converged: bool
    feasible: bool

    def to_dict(self):
        return {
            "index": self.index,
            "initial_params": list(self.initial_params),
            "final_params": list(self.final_params),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "feasible": self.feasible,
        }


@dataclass(frozen=True)
class OptimizeReport:
    best_policy: LinearPolicy
    best_objective: float
    restarts: list[RestartSummary] = field(repr=False)

    def to_dict(self):
        return {
            "best_policy": self.best_policy.to_dict(),
            "best_objective": self.best_objective,
            "restarts": [r.to_dict() for r in self.restarts],
        }


def _policy_from_params(params, d) -> LinearPolicy:
    params = np.asarray(params, dtype=float)
    if params.shape[0] == d:
        return LinearPolicy(beta=tuple(params), intercept=0.0)
    if params.shape[0] == d + 1:
        return LinearPolicy(beta=tuple(params[:-1]), intercept=float(params[-1]))
    raise ConfigError(
        f"params must have length d={d} or d+1 for an intercept, got {params.shape[0]}"
    )


def objective(dataset: Dataset, params, config: OptimizeConfig) -> float:
    """Estimator value at the linear policy defined by ``params`` plus
    ``lambda_reg`` times the term-dispersion statistic.

    Policies with no overlap score +inf rather than raising, so line searches
    can step over infeasible regions.
    """
    policy = _policy_from_params(params, dataset.d)
    try:
        result = evaluate(dataset, policy, config.estimator)
    except OverlapError:
        return float("inf")
    if result.n_eff < min(config.min_n_eff, len(dataset)):
        return float("inf")
    return result.estimate + config.lambda_reg * result.std


def gradient(dataset: Dataset, params, config: OptimizeConfig) -> np.ndarray:
    """Analytic gradient of :func:`objective` with respect to ``params``."""
    params = np.asarray(params, dtype=float)
    d = dataset.d
    with_intercept = params.shape[0] == d + 1
    policy = _policy_from_params(params, d)
    est = config.estimator
    h = est.bandwidth
    w = kernel_weights(dataset, policy, est)
    design = (
        np.column_stack([dataset.x, np.ones(len(dataset))]) if with_intercept else dataset.x
    )

    s = w.s
    ds = est.kernel.grad(w.u) / (h * w.q * w.bm)
    if est.boundary_correction:
        bmp = boundary_mass_grad(est.kernel, w.tau, h, dataset.treatment_bounds)
        ds = ds - w.k * bmp / (w.q * w.bm**2)

    y = dataset.y
    n = len(dataset)
    if est.kind == "ipw":
        z = y * s / h
        dz = y * ds / h
        grad_v = design.T @ dz / n
        v = float(np.mean(z))
    elif est.kind == "self_normalized":
        denom = float(np.sum(s))
        if denom <= 1e-300:
            raise OverlapError("self-normalization denominator is zero at this policy")
        v = float(np.sum(s * y) / denom)
        z = n * y * s / denom
        grad_v = design.T @ (ds * (y - v)) / denom
    elif est.kind == "doubly_robust":
        r_tau = np.asarray(est.regressor.predict(w.tau, dataset.x), dtype=float)
        r_log = np.asarray(est.regressor.predict(dataset.t, dataset.x), dtype=float)
        rt_tau = np.asarray(est.regressor.grad_t(w.tau, dataset.x), dtype=float)
        z = r_tau + s * (y - r_log) / h
        dz = rt_tau + ds * (y - r_log) / h
        grad_v = design.T @ dz / n
        v = float(np.mean(z))
    else:  # pragma: no cover - guarded by EstimatorConfig
        raise ConfigError(f"unknown estimator kind {est.kind!r}")

    if config.lambda_reg == 0:
        return grad_v

    spread = np.sum((z - v) ** 2)
    if spread < 1e-300:
        return grad_v
    root = np.sqrt(spread)
    if est.kind == "self_normalized":
        grad_reg = design.T @ (ds * ((z - v) * y - spread / n)) / (root * denom)
    else:
        grad_reg = design.T @ ((z - v) * dz) / (n * root)
    return grad_v + config.lambda_reg * grad_reg


def _draw_initial(policy_class: LinearPolicyClass, d: int, dataset: Dataset, rng) -> np.ndarray:
    c = policy_class.constraints
    if isinstance(c, Box):
        beta = rng.uniform(np.asarray(c.lower), np.asarray(c.upper))
    elif isinstance(c, L2Ball):
        direction = rng.standard_normal(d)
        direction /= max(np.linalg.norm(direction), 1e-300)
        beta = direction * c.w2 * rng.uniform() ** (1.0 / d)
    else:
        beta = rng.standard_normal(d)
    if not policy_class.use_intercept:
        return beta
    if policy_class.intercept_bounds is not None:
        b = rng.uniform(*policy_class.intercept_bounds)
    else:
        b = rng.uniform(float(np.min(dataset.t)), float(np.max(dataset.t)))
    return np.append(beta, b)


def _project_params(params: np.ndarray, policy_class: LinearPolicyClass, d: int) -> np.ndarray:
    out = params.copy()
    out[:d] = project(params[:d], policy_class.constraints)
    if params.shape[0] == d + 1 and policy_class.intercept_bounds is not None:
        out[d] = np.clip(out[d], *policy_class.intercept_bounds)
    return out


def _run_pgd(dataset, policy_class, config, params0):
    d = dataset.d
    params = _project_params(params0, policy_class, d)
    f = objective(dataset, params, config)
    iters = 0
    converged = False
    step = config.step_init
    for iters in range(1, config.max_iters + 1):
        g = gradient(dataset, params, config)
        stationarity = np.linalg.norm(
            params - _project_params(params - g, policy_class, d)
        )
        if stationarity < config.tolerance:
            converged = True
            iters -= 1
            break
        step = min(config.step_init, step * 4.0)
        accepted = False
        while step >= config.min_step:
            cand = _project_params(params - step * g, policy_class, d)
            fc = objective(dataset, cand, config)
            decrease = float(g @ (cand - params))
            if np.isfinite(fc) and fc <= f + config.armijo_c * decrease and fc <= f:
                params, f = cand, fc
                accepted = True
                break
            step *= config.backtrack
        if not accepted:
            break  # no descent step found (kink or numerically stationary)
    return params, f, iters, converged


def _run_lbfgs(dataset, policy_class, config, params0):
    from scipy.optimize import minimize

    c = policy_class.constraints
    if isinstance(c, L2Ball):
        raise ConfigError("lbfgs mode supports box or unconstrained classes only")
    bounds = None
    if isinstance(c, Box) or (
        policy_class.use_intercept and policy_class.intercept_bounds is not None
    ):
        bounds = (
            list(zip(c.lower, c.upper)) if isinstance(c, Box) else [(None, None)] * dataset.d
        )
        if params0.shape[0] == dataset.d + 1:
            bounds.append(policy_class.intercept_bounds or (None, None))
    big = 1e50
    res = minimize(
        lambda p: min(objective(dataset, p, config), big),
        params0,
        jac=lambda p: gradient(dataset, p, config),
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": config.max_iters, "gtol": config.tolerance},
    )
    return res.x, float(res.fun), int(res.nit), bool(res.success)


def optimize(
    dataset: Dataset, policy_class: LinearPolicyClass, config: OptimizeConfig
) -> OptimizeReport:
    """Multi-restart policy search; deterministic given (dataset, config, seed).

    Restart j draws its starting point from a generator seeded by
    (config.seed, j).  The reported policy is the feasible restart with the
    lowest final objective, ties broken by the lowest restart index.
    """
    if len(dataset) == 0:
        raise ConfigError("cannot optimize on an empty dataset")
    d = dataset.d
    runner = _run_pgd if config.method == "pgd" else _run_lbfgs
    summaries: list[RestartSummary] = []
    for j in range(config.restarts):
        rng = np.random.default_rng([config.seed, j])
        params0 = None
        for _ in range(50):
            cand = _project_params(
                _draw_initial(policy_class, d, dataset, rng), policy_class, d
            )
            if np.isfinite(objective(dataset, cand, config)):
                params0 = cand
                break
        if params0 is None:
            start = _draw_initial(policy_class, d, dataset, rng)
            summaries.append(
                RestartSummary(
                    index=j,
                    initial_params=tuple(start),
                    final_params=tuple(start),
                    objective=float("inf"),
                    iterations=0,
                    converged=False,
                    feasible=False,
                )
            )
            continue
        params, f, iters, converged = runner(dataset, policy_class, config, params0)
        summaries.append(
            RestartSummary(
                index=j,
                initial_params=tuple(params0),
                final_params=tuple(params),
                objective=float(f),
                iterations=iters,
                converged=converged,
                feasible=np.isfinite(f),
            )
        )
    feasible = [s for s in summaries if s.feasible]
    if not feasible:
        detail = "; ".join(
            f"restart {s.index}: objective={s.objective}" for s in summaries
        )
        raise FitError(f"all restarts were infeasible or diverged ({detail})")
    best = min(feasible, key=lambda s: (s.objective, s.index))
    best_params = np.asarray(best.final_params)
    policy = LinearPolicy(
        beta=tuple(best_params[:d]),
        intercept=float(best_params[d]) if best_params.shape[0] == d + 1 else 0.0,
        constraints=policy_class.constraints,
    )
    return OptimizeReport(
        best_policy=policy, best_objective=best.objective, restarts=summaries
    )
