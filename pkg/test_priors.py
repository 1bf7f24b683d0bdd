import numpy as np
import pytest
from scipy.integrate import quad

from priors import (
    PriorSpec,
    PriorError,
    smooth_indicator,
    smooth_box_pdf,
    smooth_box_cdf,
    inverse_cdf_table,
    prior_variance,
    fim_gaussian,
    fim_smooth_box,
    fim_quadrature,
    density_normalization,
    bayesian_crb_from_fim,
    bayesian_crb_sum,
    bound_is_possibly_loose,
    separable_mdi_bound,
    prior_report,
)


class TestPriorSpec:
    def test_constructors(self):
        assert PriorSpec.gaussian(2.0).to_dict() == {"kind": "gaussian", "sigma": 2.0}
        assert PriorSpec.smooth_box(3.0, 1.0).to_dict() == {"kind": "smooth_box", "l": 3.0, "delta": 1.0}
        assert PriorSpec.point(0.5, -0.5).to_dict() == {"kind": "point", "alpha_x": 0.5, "alpha_p": -0.5}

    @pytest.mark.parametrize("kwargs", [
        {"kind": "gaussian", "sigma": 0.0},
        {"kind": "gaussian", "sigma": -1.0},
        {"kind": "gaussian", "sigma": np.inf},
        {"kind": "smooth_box", "l": 1.0, "delta": 2.0},
        {"kind": "smooth_box", "l": 1.0, "delta": 0.0},
        {"kind": "smooth_box", "l": 1.0},
        {"kind": "uniform"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(PriorError):
            PriorSpec(**kwargs)


class TestSmoothBox:
    def test_indicator_shape(self):
        l, d = 4.0, 1.0
        assert smooth_indicator(0.0, l, d) == 1.0
        assert smooth_indicator(1.5, l, d) == 1.0
        assert smooth_indicator(2.0, l, d) == pytest.approx(0.5)
        assert smooth_indicator(-2.0, l, d) == pytest.approx(0.5)
        assert smooth_indicator(2.5, l, d) == 0.0
        assert smooth_indicator(10.0, l, d) == 0.0

    @pytest.mark.parametrize("l,delta", [(1.0, 1.0), (2.0, 1.0), (np.pi, np.pi), (5.0, 0.3), (3.0, 1.5)])
    def test_density_normalized(self, l, delta):
        assert density_normalization(PriorSpec.smooth_box(l, delta)) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("l,delta", [(2.0, 1.0), (np.pi, np.pi), (5.0, 0.3)])
    def test_cdf_matches_integral(self, l, delta):
        for x in [-l, -l / 2, -0.3, 0.0, 0.7, l / 2 + delta / 4, l]:
            lower = -l / 2 - delta / 2
            expected = quad(lambda t: float(smooth_box_pdf(t, l, delta)), lower, x, limit=200)[0] if x > lower else 0.0
            assert float(smooth_box_cdf(x, l, delta)) == pytest.approx(expected, abs=1e-8)

    def test_inverse_cdf_table_monotone(self):
        cdf, support = inverse_cdf_table(2.0, 0.5)
        assert cdf[0] == 0.0 and cdf[-1] == 1.0
        assert np.all(np.diff(cdf) >= 0)
        assert support.shape == (2 ** 14,)

    @pytest.mark.parametrize("l,delta", [(1.0, 1.0), (2.0, 0.5), (4.0, 2.0)])
    def test_variance_matches_quadrature(self, l, delta):
        numeric = quad(lambda x: x * x * float(smooth_box_pdf(x, l, delta)), -l, l, limit=200)[0]
        assert prior_variance(PriorSpec.smooth_box(l, delta)) == pytest.approx(numeric, abs=1e-8)

    def test_variance_at_full_ramp(self):
        l = 2.0
        assert prior_variance(PriorSpec.smooth_box(l, l)) == pytest.approx(l ** 2 * (1 / 3 - 2 / np.pi ** 2))

    def test_gaussian_and_point_variance(self):
        assert PriorSpec.gaussian(3.0).variance() == pytest.approx(4.5)
        assert PriorSpec.point(1.0, 1.0).variance() == 0.0


class TestFisherInformation:
    def test_gaussian_closed_form(self):
        np.testing.assert_array_equal(fim_gaussian(1.0), np.diag([2.0, 2.0]))
        np.testing.assert_allclose(fim_gaussian(np.sqrt(2.0)), np.eye(2), atol=1e-15)
        with pytest.raises(PriorError):
            fim_gaussian(0.0)

    def test_smooth_box_closed_form(self):
        np.testing.assert_allclose(fim_smooth_box(np.pi, np.pi), np.eye(2), atol=1e-15)
        with pytest.raises(PriorError):
            fim_smooth_box(1.0, 2.0)
        with pytest.raises(PriorError):
            fim_smooth_box(1.0, 0.0)

    def test_smooth_box_diverges_for_sharp_edges(self):
        assert fim_smooth_box(1.0, 1e-6)[0, 0] > 1e6

    @pytest.mark.parametrize("l", [1.0, 2.0, np.pi, 5.0])
    def test_gaussian_equivalence(self, l):
        np.testing.assert_allclose(fim_smooth_box(l, l), fim_gaussian(np.sqrt(2) * l / np.pi), rtol=1e-12, atol=0)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
    def test_gaussian_quadrature(self, sigma):
        prior = PriorSpec.gaussian(sigma)
        np.testing.assert_allclose(fim_quadrature(prior), fim_gaussian(sigma), rtol=1e-8)

    @pytest.mark.parametrize("l,delta", [(np.pi, np.pi), (2.0, 1.0), (3.0, 0.5)])
    def test_smooth_box_quadrature(self, l, delta):
        prior = PriorSpec.smooth_box(l, delta)
        np.testing.assert_allclose(fim_quadrature(prior), fim_smooth_box(l, delta), atol=1e-6)

    def test_two_dimensional_quadrature(self):
        prior = PriorSpec.gaussian(1.0)
        np.testing.assert_allclose(fim_quadrature(prior, two_dimensional=True), np.diag([2.0, 2.0]), atol=1e-6)


class TestBounds:
    def test_crb_sum(self):
        assert bayesian_crb_sum(1.0) == pytest.approx(0.5)
        assert bayesian_crb_sum(np.inf) == 1.0
        values = [bayesian_crb_sum(s) for s in [0.5, 1.0, 2.0, 5.0]]
        assert values == sorted(values)
        with pytest.raises(PriorError):
            bayesian_crb_sum(0.0)

    @pytest.mark.parametrize("sigma", [0.3, 1.0, 2.0, 10.0])
    def test_crb_from_gaussian_fim(self, sigma):
        assert bayesian_crb_from_fim(fim_gaussian(sigma)) == pytest.approx(bayesian_crb_sum(sigma))

    def test_separable_bound_values(self):
        assert separable_mdi_bound(1.0, PriorSpec.gaussian(2.0)) == pytest.approx(0.8)
        assert separable_mdi_bound(1.0, PriorSpec.smooth_box(np.pi, np.pi)) == pytest.approx(2 / 3)
        assert separable_mdi_bound(1.0, PriorSpec.gaussian(np.sqrt(2))) == pytest.approx(2 / 3)
        assert separable_mdi_bound(2.0, PriorSpec.gaussian(1.0)) == pytest.approx(0.5 * 4.25 * 0.5)

    def test_sharp_box_bound_vanishes(self):
        assert separable_mdi_bound(1.0, PriorSpec.smooth_box(1.0, 1e-9)) < 1e-8

    def test_looseness_flag(self, caplog):
        assert not bound_is_possibly_loose(PriorSpec.smooth_box(2.0, 2.0))
        assert not bound_is_possibly_loose(PriorSpec.gaussian(1.0))
        assert bound_is_possibly_loose(PriorSpec.smooth_box(2.0, 1.0))
        with caplog.at_level("WARNING"):
            separable_mdi_bound(1.0, PriorSpec.smooth_box(2.0, 1.0))
        assert "possibly loose" in caplog.text

    def test_point_prior_has_no_bound(self):
        with pytest.raises(PriorError):
            separable_mdi_bound(1.0, PriorSpec.point())

    def test_report(self):
        report = prior_report(PriorSpec.smooth_box(np.pi, np.pi))
        assert report["separable_mdi_bound"] == pytest.approx(2 / 3)
        assert report["fim_max_abs_error"] < 1e-6
        assert report["normalization"] == pytest.approx(1.0, abs=1e-8)
        assert report["equivalent_gaussian_sigma"] == pytest.approx(np.sqrt(2))
        assert report["possibly_loose"] is False
