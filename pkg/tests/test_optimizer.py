import numpy as np
import pytest

from ctope.baselines import dm_fit
from ctope.data import Dataset
from ctope.errors import ConfigError, FitError
from ctope.estimators import EstimatorConfig
from ctope.experiments import Synthetic1dDesign, gen_1d
from ctope.kernels import EPANECHNIKOV, GAUSSIAN
from ctope.optimizer import (
    LinearPolicyClass,
    OptimizeConfig,
    OptimizeReport,
    gradient,
    objective,
    optimize,
)
from ctope.policies import Box, L2Ball


def random_instance(rng, n=30, d=3, kernel=EPANECHNIKOV):
    ds = Dataset(
        rng.normal(size=(n, d)),
        rng.normal(size=n),
        rng.normal(size=n),
        rng.uniform(0.2, 2.0, n),
        treatment_bounds=(-4.0, 4.0),
    )
    params = rng.normal(scale=0.4, size=d)
    return ds, params


def fd_gradient(ds, params, cfg, step=1e-6):
    g = np.empty_like(params, dtype=float)
    for j in range(len(params)):
        up = np.array(params, dtype=float)
        dn = np.array(params, dtype=float)
        up[j] += step
        dn[j] -= step
        g[j] = (objective(ds, up, cfg) - objective(ds, dn, cfg)) / (2 * step)
    return g


def near_kink(ds, params, cfg, margin=1e-4):
    from ctope.policies import LinearPolicy

    d = ds.d
    pol = LinearPolicy(beta=tuple(params[:d]), intercept=params[d] if len(params) > d else 0.0)
    u = (pol.apply(ds.x) - ds.t) / cfg.estimator.bandwidth
    return bool(np.any(np.abs(np.abs(u) - 1.0) < margin) or np.any(np.abs(u) < margin))


def opt_config(kind, h=0.7, lam=0.0, **est_kw):
    est = EstimatorConfig(kind=kind, kernel=est_kw.pop("kernel", EPANECHNIKOV), bandwidth=h, clip_theta=0.1, **est_kw)
    return OptimizeConfig(estimator=est, lambda_reg=lam, seed=0)


class TestGradient:
    @pytest.mark.parametrize("kind", ["ipw", "self_normalized"])
    @pytest.mark.parametrize("lam", [0.0, 0.5])
    def test_matches_finite_differences_random_instances(self, kind, lam):
        rng = np.random.default_rng(100)
        checked = 0
        while checked < 100:
            ds, params = random_instance(rng, d=int(rng.integers(1, 6)))
            cfg = opt_config(kind, lam=lam)
            if near_kink(ds, params, cfg):
                continue
            f = objective(ds, params, cfg)
            if not np.isfinite(f):
                continue
            analytic = gradient(ds, params, cfg)
            fd = fd_gradient(ds, params, cfg)
            scale = max(np.linalg.norm(fd), 1e-6)
            assert np.linalg.norm(analytic - fd) / scale < 1e-5
            checked += 1

    def test_single_record_fd(self):
        ds = Dataset([[0.7]], t=[0.3], y=[2.0], q=[0.8])
        params = np.array([0.2])
        cfg = opt_config("ipw", h=1.0)
        analytic = gradient(ds, params, cfg)
        fd = fd_gradient(ds, params, cfg)
        assert np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-5

    def test_all_outside_support_gives_zero(self):
        ds = Dataset([[1.0], [2.0]], t=[50.0, -50.0], y=[1.0, 1.0], q=[1.0, 1.0])
        g = gradient(ds, np.array([0.1]), opt_config("ipw"))
        np.testing.assert_array_equal(g, [0.0])

    def test_gaussian_kernel_and_intercept(self):
        rng = np.random.default_rng(200)
        for _ in range(20):
            ds, params = random_instance(rng, d=2, kernel=GAUSSIAN)
            params = np.append(params, rng.normal(scale=0.3))
            cfg = opt_config("self_normalized", kernel=GAUSSIAN, lam=0.3)
            analytic = gradient(ds, params, cfg)
            fd = fd_gradient(ds, params, cfg)
            scale = max(np.linalg.norm(fd), 1e-6)
            assert np.linalg.norm(analytic - fd) / scale < 1e-5

    def test_boundary_correction_gradient(self):
        rng = np.random.default_rng(300)
        checked = 0
        while checked < 20:
            ds, params = random_instance(rng, d=2, kernel=GAUSSIAN)
            cfg = opt_config("self_normalized", kernel=GAUSSIAN, boundary_correction=True)
            f = objective(ds, params, cfg)
            if not np.isfinite(f):
                continue
            analytic = gradient(ds, params, cfg)
            fd = fd_gradient(ds, params, cfg)
            scale = max(np.linalg.norm(fd), 1e-6)
            assert np.linalg.norm(analytic - fd) / scale < 1e-4
            checked += 1

    def test_doubly_robust_gradient(self):
        rng = np.random.default_rng(400)
        fit_ds = gen_1d(Synthetic1dDesign(), 300, seed=40)
        reg = dm_fit(fit_ds, degree=3)
        checked = 0
        while checked < 20:
            ds, params = random_instance(rng, d=1)
            cfg = opt_config("doubly_robust", regressor=reg)
            if near_kink(ds, params, cfg):
                continue
            analytic = gradient(ds, params, cfg)
            fd = fd_gradient(ds, params, cfg)
            scale = max(np.linalg.norm(fd), 1e-6)
            assert np.linalg.norm(analytic - fd) / scale < 1e-5
            checked += 1


class TestObjective:
    def test_zero_lambda_equals_estimator_value(self):
        ds = gen_1d(Synthetic1dDesign(), 50, seed=41)
        cfg = opt_config("self_normalized", h=0.3)
        from ctope.estimators import sn_evaluate
        from ctope.policies import LinearPolicy

        val = objective(ds, np.array([1.0]), cfg)
        est = sn_evaluate(ds, LinearPolicy(beta=(1.0,)), cfg.estimator).estimate
        assert val == est

    def test_single_record_matching_policy(self):
        ds = Dataset([[1.0]], t=[0.6], y=[2.0], q=[0.5])
        cfg = opt_config("ipw", h=0.4, lam=1.0)
        # single term has zero dispersion: objective = y K(0) / (h q)
        assert objective(ds, np.array([0.6]), cfg) == pytest.approx(
            2.0 * 0.75 / (0.4 * 0.5)
        )

    def test_infeasible_policy_returns_inf(self):
        ds = Dataset([[1.0]], t=[0.0], y=[1.0], q=[1.0])
        cfg = opt_config("self_normalized", h=0.1)
        assert objective(ds, np.array([99.0]), cfg) == np.inf

    def test_grid_minimum_near_true_beta(self):
        # desk-scale replication: the mean objective over a beta grid dips
        # within 0.1 of the true optimum beta = 1
        design = Synthetic1dDesign()
        grid = np.linspace(0.0, 1.3, 27)
        cfg = opt_config("self_normalized", h=0.15)
        curves = []
        for rep in range(50):
            ds = gen_1d(design, 300, seed=5000 + rep)
            curves.append([objective(ds, np.array([b]), cfg) for b in grid])
        mean_curve = np.mean(curves, axis=0)
        assert abs(grid[int(np.argmin(mean_curve))] - 1.0) <= 0.1


class TestOptimize:
    def test_zero_outcomes_give_zero_objective(self):
        ds = gen_1d(Synthetic1dDesign(), 40, seed=42)
        zero = Dataset(ds.x, ds.t, np.zeros(len(ds)), ds.q)
        cfg = OptimizeConfig(estimator=opt_config("ipw", h=0.3).estimator, restarts=3, seed=1)
        report = optimize(zero, LinearPolicyClass(constraints=Box((0.0,), (1.3,))), cfg)
        assert report.best_objective == pytest.approx(0.0)

    def test_more_restarts_never_worse(self):
        ds = gen_1d(Synthetic1dDesign(), 120, seed=43)
        pc = LinearPolicyClass(constraints=Box((0.0,), (1.3,)))
        est = opt_config("self_normalized", h=0.2).estimator
        one = optimize(ds, pc, OptimizeConfig(estimator=est, restarts=1, seed=7))
        many = optimize(ds, pc, OptimizeConfig(estimator=est, restarts=20, seed=7))
        assert many.best_objective <= one.best_objective + 1e-12

    def test_deterministic(self):
        ds = gen_1d(Synthetic1dDesign(), 80, seed=44)
        pc = LinearPolicyClass(constraints=Box((0.0,), (1.3,)))
        cfg = OptimizeConfig(estimator=opt_config("self_normalized", h=0.2).estimator, restarts=5, seed=3)
        a = optimize(ds, pc, cfg)
        b = optimize(ds, pc, cfg)
        assert a.best_policy == b.best_policy
        assert a.best_objective == b.best_objective
        assert [r.to_dict() for r in a.restarts] == [r.to_dict() for r in b.restarts]

    def test_reported_policy_is_feasible(self):
        ds = gen_1d(Synthetic1dDesign(), 60, seed=45)
        for constraints in (Box((0.0,), (0.5,)), L2Ball(0.4)):
            report = optimize(
                ds,
                LinearPolicyClass(constraints=constraints),
                OptimizeConfig(estimator=opt_config("self_normalized", h=0.25).estimator, restarts=4, seed=5),
            )
            beta = np.asarray(report.best_policy.beta)
            if isinstance(constraints, Box):
                assert np.all(beta >= constraints.lower) and np.all(beta <= constraints.upper)
            else:
                assert np.linalg.norm(beta) <= constraints.w2 + 1e-12

    def test_regularization_keeps_overlap(self):
        # unconstrained class, positive regularization: the solver must not
        # return an escape policy with zero effective samples (an escaped
        # policy scores exactly 0 here, so the genuine dip must win)
        design = Synthetic1dDesign()
        h = 0.15 * (200 / 500) ** 0.2
        for seed in range(20):
            ds = gen_1d(design, 500, seed=600 + seed)
            cfg = OptimizeConfig(
                estimator=opt_config("ipw", h=h).estimator,
                restarts=10,
                seed=seed,
                lambda_reg=0.5,
            )
            report = optimize(ds, LinearPolicyClass(constraints=None), cfg)
            u = (report.best_policy.apply(ds.x) - ds.t) / h
            assert np.count_nonzero(EPANECHNIKOV(u)) > 0

    def test_recovers_true_beta_at_desk_scale(self):
        design = Synthetic1dDesign()
        hits = 0
        for seed in range(20):
            ds = gen_1d(design, 300, seed=900 + seed)
            report = optimize(
                ds,
                LinearPolicyClass(constraints=Box((0.0,), (1.3,))),
                OptimizeConfig(
                    estimator=opt_config("self_normalized", h=0.15).estimator,
                    restarts=20,
                    seed=seed,
                ),
            )
            if abs(report.best_policy.beta[0] - 1.0) <= 0.1:
                hits += 1
        assert hits >= 18  # >= 90% of runs

    def test_monotone_descent_within_restart(self):
        ds = gen_1d(Synthetic1dDesign(), 100, seed=46)
        cfg = OptimizeConfig(
            estimator=opt_config("self_normalized", h=0.2).estimator, restarts=1, seed=11
        )
        from ctope.optimizer import _draw_initial, _project_params, _run_pgd

        pc = LinearPolicyClass(constraints=Box((0.0,), (1.3,)))
        rng = np.random.default_rng([cfg.seed, 0])
        p0 = _project_params(_draw_initial(pc, 1, ds, rng), pc, 1)
        f0 = objective(ds, p0, cfg)
        _, f_final, _, _ = _run_pgd(ds, pc, cfg, p0)
        assert f_final <= f0 + 1e-12

    def test_lbfgs_mode_runs(self):
        ds = gen_1d(Synthetic1dDesign(), 150, seed=47)
        report = optimize(
            ds,
            LinearPolicyClass(constraints=Box((0.0,), (1.3,))),
            OptimizeConfig(
                estimator=opt_config("self_normalized", h=0.2).estimator,
                restarts=5,
                seed=13,
                method="lbfgs",
            ),
        )
        assert isinstance(report, OptimizeReport)
        assert 0.0 <= report.best_policy.beta[0] <= 1.3

    def test_lbfgs_rejects_l2_ball(self):
        ds = gen_1d(Synthetic1dDesign(), 30, seed=48)
        with pytest.raises(ConfigError):
            optimize(
                ds,
                LinearPolicyClass(constraints=L2Ball(1.0)),
                OptimizeConfig(
                    estimator=opt_config("self_normalized", h=0.2).estimator,
                    restarts=1,
                    method="lbfgs",
                ),
            )

    def test_all_infeasible_raises_with_diagnostics(self):
        ds = Dataset([[1.0]], t=[100.0], y=[1.0], q=[1.0])
        cfg = OptimizeConfig(
            estimator=opt_config("self_normalized", h=0.01).estimator, restarts=2, seed=1
        )
        with pytest.raises(FitError, match="restart"):
            optimize(ds, LinearPolicyClass(constraints=Box((0.0,), (1.0,))), cfg)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError):
            optimize(
                Dataset.from_records([]),
                LinearPolicyClass(),
                OptimizeConfig(estimator=opt_config("ipw").estimator, restarts=1),
            )

    def test_invalid_configs(self):
        est = opt_config("ipw").estimator
        with pytest.raises(ConfigError):
            OptimizeConfig(estimator=est, restarts=0)
        with pytest.raises(ConfigError):
            OptimizeConfig(estimator=est, tolerance=0.0)
        with pytest.raises(ConfigError):
            OptimizeConfig(estimator=est, method="newton")
