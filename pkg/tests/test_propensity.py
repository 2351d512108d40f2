import numpy as np
import pytest
from scipy import integrate

from ctope.data import Dataset
from ctope.errors import FitError
from ctope.propensity import (
    LinearNormalGps,
    UniformGps,
    clip_weight,
    gps_density,
    impute_gps_linear,
)


class TestGpsDensity:
    def test_uniform_interval(self):
        gps = UniformGps(-0.5, 1.3)
        assert gps_density(gps, 0.0, None) == pytest.approx(1 / 1.8)
        assert gps_density(gps, 2.0, None) == 0.0

    def test_normal_at_mean(self):
        gps = LinearNormalGps(intercept=0.1, coefs=(1.0,), variance=0.5)
        x = np.array([0.4])
        expected = 1 / np.sqrt(2 * np.pi * 0.5)
        assert gps_density(gps, 0.5, x) == pytest.approx(expected)

    def test_vectorized(self):
        gps = LinearNormalGps(intercept=0.0, coefs=(2.0,), variance=1.0)
        x = np.array([[0.0], [1.0]])
        t = np.array([0.0, 2.0])
        out = gps_density(gps, t, x)
        assert out.shape == (2,)
        assert out[0] == pytest.approx(out[1])  # both at their conditional mean

    @pytest.mark.parametrize(
        "gps",
        [
            UniformGps(-0.5, 1.3),
            LinearNormalGps(intercept=0.1, coefs=(1.0,), variance=0.5),
            LinearNormalGps(intercept=-2.0, coefs=(0.3, -0.7), variance=2.0, kind="imputed_linear"),
        ],
        ids=["uniform", "normal", "imputed"],
    )
    def test_integrates_to_one(self, gps):
        d = len(getattr(gps, "coefs", (0.0,)))
        x = np.linspace(-1, 1, d)
        total, _ = integrate.quad(
            lambda t: float(np.atleast_1d(gps.density(t, x[None, :]))[0]), -60, 60, limit=200
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_bin_probabilities_telescope(self):
        gps = LinearNormalGps(intercept=0.0, coefs=(1.0,), variance=0.7)
        x = np.array([0.3])
        edges = np.linspace(-40, 40, 33)
        total = sum(gps.bin_probability(a, b, x) for a, b in zip(edges, edges[1:]))
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_degenerate_models_rejected(self):
        with pytest.raises(FitError):
            UniformGps(1.0, 1.0)
        with pytest.raises(FitError):
            LinearNormalGps(intercept=0.0, coefs=(1.0,), variance=0.0)


class TestImputeGps:
    def test_recovers_simple_linear_law(self):
        rng = np.random.default_rng(42)
        n = 10_000
        x = rng.uniform(-1, 1, (n, 1))
        t = 2.0 * x[:, 0] + rng.standard_normal(n)
        model = impute_gps_linear(Dataset(x, t, np.zeros(n)))
        assert model.kind == "imputed_linear"
        assert model.coefs[0] == pytest.approx(2.0, abs=0.05)
        assert model.variance == pytest.approx(1.0, abs=0.05)

    def test_constant_treatment_is_degenerate(self):
        x = np.random.default_rng(0).normal(size=(50, 1))
        with pytest.raises(FitError, match="degenerate"):
            impute_gps_linear(Dataset(x, np.full(50, 2.0), np.zeros(50)))

    def test_duplicated_column_reports_collinearity(self):
        rng = np.random.default_rng(3)
        base = rng.normal(size=(40, 1))
        x = np.hstack([base, base])
        t = base[:, 0] + rng.normal(size=40)
        with pytest.raises(FitError, match="collinear"):
            impute_gps_linear(Dataset(x, t, np.zeros(40)))

    def test_too_few_records(self):
        with pytest.raises(FitError, match="n > d"):
            impute_gps_linear(Dataset(np.zeros((3, 2)), [0, 1, 2], [0, 0, 0]))

    def test_shift_equivariance(self):
        rng = np.random.default_rng(9)
        n = 500
        x = rng.normal(size=(n, 2))
        t = 0.5 * x[:, 0] - x[:, 1] + rng.normal(size=n)
        base = impute_gps_linear(Dataset(x, t, np.zeros(n)))
        shifted = impute_gps_linear(Dataset(x, t + 3.25, np.zeros(n)))
        assert shifted.intercept == pytest.approx(base.intercept + 3.25, abs=1e-8)
        np.testing.assert_allclose(shifted.coefs, base.coefs, atol=1e-8)
        assert shifted.variance == pytest.approx(base.variance, abs=1e-8)


class TestClipWeight:
    def test_below_threshold_clipped(self):
        assert clip_weight(0.05, 0.1) == 0.1
        assert clip_weight(0.0, 0.1) == 0.1

    def test_above_threshold_unchanged(self):
        assert clip_weight(0.5, 0.1) == 0.5

    def test_zero_theta_disables(self):
        assert clip_weight(1e-20, 0.0) == 1e-20

    def test_monotone_and_bounded_below(self):
        rng = np.random.default_rng(11)
        q = np.sort(rng.uniform(0, 1, 200))
        clipped = clip_weight(q, 0.3)
        assert np.all(np.diff(clipped) >= 0)
        assert np.all(clipped >= 0.3)

    def test_negative_theta_rejected(self):
        with pytest.raises(FitError):
            clip_weight(0.5, -0.1)
