import numpy as np
import pandas as pd
import pytest

from gaussian_core import (
    LossChannel,
    vacuum,
    coherent,
    tensor,
    tmsv,
    apply_loss,
    ppt_min_eigenvalue,
    random_entangled_state,
    random_separable_state,
)
from priors import PriorSpec
from sampler import SAMPLE_COLUMNS
import witness
from witness import (
    VERDICT_CERTIFIED,
    VERDICT_INCONCLUSIVE,
    WitnessParameterError,
    WitnessSpec,
    NoiseParams,
    separable_bound_ew,
    mdi_bound,
    verdict,
    minimal_sigma,
    duan_ew,
    mdi_score_analytic,
    noisy_tmsv_ew,
    optimal_kappa,
    asymptotic_mdi_score,
    jackknife_mean,
    mdi_score_from_samples,
    contour_value,
    boundary_eta,
    boundary_r,
    contour_scan,
    optimize_witness,
    ew_quadratic_form,
    _best_log_kappa,
    LOG_KAPPA_RANGE,
)

SIGMAS = [1.0, 2.0, 3.0, 5.0, 10.0]


def _lossy_tmsv(r, eta_a, eta_b):
    return apply_loss(apply_loss(tmsv(r), LossChannel(0, eta_a)), LossChannel(1, eta_b))


class TestBounds:
    def test_separable_bound(self):
        assert separable_bound_ew(1.0) == 1.0
        assert separable_bound_ew(2.0) == pytest.approx(17 / 8)

    def test_mdi_bound_values(self):
        assert mdi_bound(1.0, None) == 1.0
        assert mdi_bound(1.0, np.inf) == 1.0
        assert mdi_bound(1.0, 2.0) == pytest.approx(0.8)
        assert mdi_bound(2.0, 1.0) == pytest.approx(17 / 16)

    @pytest.mark.parametrize("kappa,sigma", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0), (np.inf, 1.0)])
    def test_invalid_parameters(self, kappa, sigma):
        with pytest.raises(WitnessParameterError):
            mdi_bound(kappa, sigma)

    def test_verdict(self):
        assert verdict(0.5, 0.01, 0.8) == VERDICT_CERTIFIED
        assert verdict(0.77, 0.01, 0.8) == VERDICT_INCONCLUSIVE
        assert verdict(0.5, float("inf"), 0.8) == VERDICT_INCONCLUSIVE
        assert verdict(0.77, 0.01, 0.8, n_sigma=2.0) == VERDICT_CERTIFIED

    def test_minimal_sigma(self):
        assert minimal_sigma(0.8) == pytest.approx(2.0)
        assert minimal_sigma(1.0) == float("inf")
        assert minimal_sigma(0.0) == 0.0
        value = 0.5 * (1 + np.exp(-1.0))
        assert mdi_bound(1.0, minimal_sigma(value)) == pytest.approx(value)


class TestDuanWitness:
    def test_vacuum(self):
        assert duan_ew(vacuum(2), WitnessSpec(1.0)) == pytest.approx(1.0)

    def test_tmsv(self):
        assert duan_ew(tmsv(0.5), WitnessSpec(1.0)) == pytest.approx(np.exp(-1.0), abs=1e-6)
        assert duan_ew(tmsv(0.5), WitnessSpec(1.0)) == pytest.approx(0.367879, abs=1e-6)

    @pytest.mark.parametrize("kappa", [0.5, 1.0, 1.7])
    def test_coherent_products_sit_on_the_bound(self, kappa):
        state = tensor(coherent(0.4, -1.1), coherent(2.0, 0.3))
        assert duan_ew(state, WitnessSpec(kappa)) == pytest.approx(separable_bound_ew(kappa), abs=1e-12)

    def test_requires_two_modes(self):
        with pytest.raises(WitnessParameterError):
            duan_ew(vacuum(1), WitnessSpec(1.0))

    def test_invalid_orientation(self):
        with pytest.raises(WitnessParameterError):
            WitnessSpec(1.0, {0: np.diag([2.0, 2.0])})
        with pytest.raises(WitnessParameterError):
            WitnessSpec(1.0, {2: np.eye(2)})

    @pytest.mark.parametrize("r", [0.0, 0.5, 1.3])
    def test_analytic_mdi_score(self, r):
        spec = WitnessSpec(1.0)
        state = tmsv(r)
        assert mdi_score_analytic(state, spec) == pytest.approx(0.5 * (1 + np.exp(-2 * r)), abs=1e-12)
        assert 2 * mdi_score_analytic(state, spec) - duan_ew(state, spec) == pytest.approx(1.0, abs=1e-12)


class TestNoisyTmsv:
    @pytest.mark.parametrize("kappa", [0.6, 1.0, 1.4])
    def test_matches_loss_pipeline(self, kappa):
        grid = np.linspace(0.0, 1.0, 5)
        for r in np.linspace(0.0, 2.0, 5):
            for eta_a in grid:
                for eta_b in grid:
                    closed = noisy_tmsv_ew(NoiseParams(eta_a, eta_b, r), kappa)
                    direct = duan_ew(_lossy_tmsv(r, eta_a, eta_b), WitnessSpec(kappa))
                    assert closed == pytest.approx(direct, abs=1e-12)

    def test_full_loss_is_separable_bound(self):
        for kappa in [0.5, 1.0, 2.0]:
            assert noisy_tmsv_ew(NoiseParams(1.0, 1.0, 1.5), kappa) == pytest.approx(separable_bound_ew(kappa))

    @pytest.mark.parametrize("eta", [-0.01, 1.2, np.nan])
    def test_bad_loss(self, eta):
        with pytest.raises(WitnessParameterError):
            NoiseParams(eta, 0.0, 0.5)

    def test_optimal_kappa(self):
        assert optimal_kappa(0.0, 0.75) == pytest.approx(0.70711, abs=1e-5)
        assert optimal_kappa(0.3, 0.3) == pytest.approx(1.0)
        with pytest.raises(WitnessParameterError):
            optimal_kappa(1.0, 0.2)

    def test_optimal_kappa_minimizes_large_r_score(self):
        eta_a, eta_b, r = 0.1, 0.5, 3.0
        k_opt = optimal_kappa(eta_a, eta_b)
        best = noisy_tmsv_ew(NoiseParams(eta_a, eta_b, r), k_opt)
        for kappa in k_opt * np.array([0.8, 0.95, 1.05, 1.25]):
            assert noisy_tmsv_ew(NoiseParams(eta_a, eta_b, r), kappa) > best

    def test_asymptotic_score(self):
        eta_a, eta_b = 0.2, 0.4
        k = optimal_kappa(eta_a, eta_b)
        limit = asymptotic_mdi_score(eta_a, eta_b)
        ew = noisy_tmsv_ew(NoiseParams(eta_a, eta_b, 12.0), k)
        assert 0.5 * (separable_bound_ew(k) + ew) == pytest.approx(limit, abs=1e-9)
        assert asymptotic_mdi_score(eta_a, eta_b, kappa=1.0) == float("inf")


class TestSampleScore:
    def test_jackknife_constant_values(self):
        mean, se = jackknife_mean(np.full(1000, 2.5))
        assert mean == pytest.approx(2.5)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_jackknife_single_value(self):
        mean, se = jackknife_mean(np.array([1.0]))
        assert mean == 1.0
        assert se == float("inf")
        with pytest.raises(WitnessParameterError):
            jackknife_mean(np.array([]))

    def test_jackknife_matches_iid_error(self):
        values = np.random.default_rng(0).normal(size=200_000)
        _, se = jackknife_mean(values)
        assert se == pytest.approx(1.0 / np.sqrt(len(values)), rel=0.2)

    def test_zero_samples_score(self):
        samples = pd.DataFrame(np.zeros((10, len(SAMPLE_COLUMNS))), columns=SAMPLE_COLUMNS)
        report = mdi_score_from_samples(samples, WitnessSpec(1.0), sigma=2.0)
        assert report.score == 0.0
        assert report.std_error == 0.0
        assert report.bound == pytest.approx(0.8)
        assert report.verdict == VERDICT_CERTIFIED
        assert set(report.to_dict()) == {"score", "std_error", "bound", "kappa", "sigma", "verdict"}

    def test_prior_supplies_bound(self):
        samples = pd.DataFrame(np.zeros((4, len(SAMPLE_COLUMNS))), columns=SAMPLE_COLUMNS)
        report = mdi_score_from_samples(samples, WitnessSpec(1.0), prior=PriorSpec.smooth_box(np.pi, np.pi))
        assert report.bound == pytest.approx(2 / 3)
        assert report.sigma == float("inf")
        report = mdi_score_from_samples(samples, WitnessSpec(1.0), prior=PriorSpec.gaussian(2.0))
        assert report.sigma == 2.0

    def test_empty_samples_rejected(self):
        with pytest.raises(WitnessParameterError):
            mdi_score_from_samples(pd.DataFrame(columns=SAMPLE_COLUMNS), WitnessSpec(1.0))


class TestContours:
    def test_contour_value_matches_closed_form(self):
        for r in [0.0, 0.4, 2.0]:
            for eta in [0.0, 0.3, 1.0]:
                ew = noisy_tmsv_ew(NoiseParams(eta, eta, r), 1.0)
                assert contour_value(r, eta) == pytest.approx(0.5 * (1 + ew), abs=1e-12)

    @pytest.mark.parametrize("sigma", SIGMAS)
    def test_large_squeezing_boundary(self, sigma):
        expected = 2 * sigma ** 2 / (1 + sigma ** 2) - 1
        assert boundary_eta(sigma, 10.0) == pytest.approx(expected, abs=1e-3)

    def test_boundary_is_on_the_bound(self):
        for sigma in SIGMAS:
            eta = 0.2
            r_star = boundary_r(sigma, eta)
            if np.isfinite(r_star):
                assert contour_value(r_star, eta) == pytest.approx(mdi_bound(1.0, sigma), abs=1e-12)

    def test_narrow_prior_is_never_certified(self):
        assert boundary_r(1.0, 0.0) == float("inf")
        assert np.isnan(boundary_eta(2.0, 0.0))

    def test_contours_nest(self):
        for r in [0.5, 1.0, 2.0, 10.0]:
            etas = [boundary_eta(s, r) for s in SIGMAS]
            assert etas == sorted(etas)

    def test_scan(self):
        r_grid = np.linspace(0.0, 2.5, 11)
        eta_grid = np.linspace(0.0, 1.0, 6)
        values, boundaries = contour_scan(r_grid, eta_grid, SIGMAS)
        assert list(values.columns) == ["r", "eta", "mdiew_value"]
        assert len(values) == 66
        assert list(boundaries.columns) == ["sigma", "eta", "r_star"]
        row = values[(values.r == 0.5) & (values.eta == 0.0)].iloc[0]
        assert row.mdiew_value == pytest.approx(0.5 * (1 + np.exp(-1.0)))
        assert set(boundaries.sigma) <= set(SIGMAS)
        assert 1.0 not in set(boundaries.sigma)

    def test_scan_is_independent_of_jobs(self):
        r_grid = np.linspace(0.0, 1.0, 4)
        eta_grid = [0.0, 0.5]
        serial, _ = contour_scan(r_grid, eta_grid, [])
        parallel, empty = contour_scan(r_grid, eta_grid, [], n_jobs=2)
        pd.testing.assert_frame_equal(serial, parallel)
        assert empty.empty


class TestWitnessSearch:
    def test_tmsv_optimum(self):
        optimum = optimize_witness(tmsv(0.5))
        assert optimum.violated
        assert optimum.ppt_entangled
        assert optimum.score <= np.exp(-1.0) - 1 + 1e-8
        assert optimum.ew == pytest.approx(duan_ew(tmsv(0.5), optimum.spec()), abs=1e-8)

    def test_unbalanced_loss_picks_balancing_kappa(self):
        optimum = optimize_witness(_lossy_tmsv(2.0, 0.0, 0.75))
        assert optimum.kappa == pytest.approx(optimal_kappa(0.0, 0.75), rel=0.05)

    def test_random_entangled_states_are_detected(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            state = random_entangled_state(rng)
            if ppt_min_eigenvalue(state) < 0.25 - 1e-6:
                optimum = optimize_witness(state)
                assert optimum.violated
                assert not optimum.flagged

    def test_separable_states_never_violate(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            state = random_separable_state(rng)
            optimum = optimize_witness(state)
            assert optimum.score >= -1e-9
            assert not optimum.ppt_entangled
            for kappa in np.exp(np.linspace(-3, 3, 25)):
                assert duan_ew(state, WitnessSpec(kappa)) >= separable_bound_ew(kappa) - 1e-9

    def test_to_dict(self):
        data = optimize_witness(tmsv(0.3)).to_dict()
        assert data["violated"] is True
        assert set(data["orientation"]) == {"0", "1"}


class TestKappaSearch:
    def test_golden_section_finds_balancing_kappa(self):
        cov = _lossy_tmsv(0.5, 0.1, 0.6).cov
        P, Q, _ = ew_quadratic_form(cov)
        expected = 0.25 * np.log((Q - 0.5) / (P - 0.5))
        assert _best_log_kappa(cov, LOG_KAPPA_RANGE) == pytest.approx(expected, abs=1e-6)

    def test_uses_golden_method(self, monkeypatch):
        methods = []
        real = witness.minimize_scalar

        def spy(*args, **kwargs):
            methods.append(kwargs.get("method"))
            return real(*args, **kwargs)

        monkeypatch.setattr(witness, "minimize_scalar", spy)
        _best_log_kappa(_lossy_tmsv(0.5, 0.0, 0.5).cov, LOG_KAPPA_RANGE)
        assert methods == ["golden"]

    def test_minimum_beyond_range_returns_edge(self):
        cov = np.diag([0.25 + 5e-8, 0.25 + 5e-8, 0.3, 0.3])
        assert _best_log_kappa(cov, LOG_KAPPA_RANGE) == LOG_KAPPA_RANGE[1]
