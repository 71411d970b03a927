"""Spectral, cumulant, and relaxation-time detector tests.

Quadrature oracles check the closed-form eigenfunctions; finite differences
check the eigenvalue equation independently of the Laguerre reduction; Monte
Carlo ensembles check the cumulant formulas at parameter points where the
sampling noise is small against the tolerance.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from meanrev import (
    CumulantCurve,
    DomainError,
    EigenMode,
    HestonUnitParams,
    MeanRevertingParams,
    ParameterError,
    RelaxationConfig,
    RelaxationSample,
    SimConfig,
    eigenfunction_eval,
    eigenfunction_p1,
    eigenmode,
    empirical_cumulants,
    g_coefficient,
    ks_curve,
    ks_stat,
    measure_relaxation_time,
    ode_residual,
    relaxation_experiment,
    simulate_ensemble,
    theory_cumulant,
)
from meanrev.models import stationary_variance, steady_state_of
from meanrev.relaxation import _ks_expanding

UNIT = HestonUnitParams(gamma=0.1, kappa2=0.04)  # a = 5
FULL = MeanRevertingParams(gamma=0.1, theta=1e-4, kappa_h=3e-3)  # a = 20/9

GRID = np.linspace(0.01, 12.0, 6000)


def quad_tail(f, upper=60.0):
    return quad(f, 1e-12, upper, limit=300)[0]


class TestHestonUnitParams:
    def test_validation(self):
        with pytest.raises(ParameterError):
            HestonUnitParams(gamma=0.0, kappa2=0.01)
        with pytest.raises(ParameterError):
            HestonUnitParams(gamma=0.1, kappa2=0.0)
        with pytest.raises(ParameterError, match="origin condition"):
            HestonUnitParams(gamma=0.1, kappa2=0.25)

    def test_round_trip(self):
        unit = HestonUnitParams.from_heston(FULL)
        assert unit.gamma == FULL.gamma
        assert unit.kappa2 == pytest.approx(FULL.kappa_h**2 / FULL.theta, rel=1e-15)
        back = unit.to_heston()
        assert back.theta == 1.0
        assert back.kappa_h**2 == pytest.approx(unit.kappa2, rel=1e-15)

    def test_rejects_multiplicative_branch(self):
        params = MeanRevertingParams(gamma=0.1, theta=1e-4, kappa_m=0.2)
        with pytest.raises(ParameterError, match="square-root branch"):
            HestonUnitParams.from_heston(params)


class TestEigenfunctions:
    def test_p1_sign_change_at_theta(self):
        assert eigenfunction_p1(FULL, 0.9 * FULL.theta) < 0
        assert eigenfunction_p1(FULL, 1.1 * FULL.theta) > 0
        assert eigenfunction_p1(FULL, FULL.theta) == 0.0

    def test_p1_closed_form_matches_laguerre_route(self):
        x = np.linspace(0.05, 6.0, 400)
        assert np.allclose(
            eigenfunction_p1(UNIT, x), eigenfunction_eval(UNIT, 1, x), rtol=0, atol=1e-14
        )

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_normalization(self, n):
        p0 = steady_state_of(UNIT.to_heston())
        val = quad_tail(lambda v: eigenfunction_eval(UNIT, n, v) ** 2 / p0.pdf(v))
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_orthogonality_to_constant_and_between_modes(self):
        p0 = steady_state_of(UNIT.to_heston())
        for n in (1, 2, 3):
            assert abs(quad_tail(lambda v: eigenfunction_eval(UNIT, n, v))) < 1e-6
        cross = quad_tail(
            lambda v: eigenfunction_eval(UNIT, 1, v) * eigenfunction_eval(UNIT, 2, v) / p0.pdf(v)
        )
        assert abs(cross) < 1e-6

    def test_first_mode_overlap_is_g1(self):
        val = quad_tail(lambda v: v * eigenfunction_eval(UNIT, 1, v))
        assert val == pytest.approx(math.sqrt(UNIT.kappa2 / (2 * UNIT.gamma)), abs=1e-6)

    def test_higher_mode_overlaps_vanish(self):
        for n in (2, 3):
            assert abs(quad_tail(lambda v: v * eigenfunction_eval(UNIT, n, v))) < 1e-6

    def test_unnormalized_is_density_times_polynomial(self):
        x = np.array([0.3, 1.0, 2.5])
        p0 = steady_state_of(UNIT.to_heston()).pdf(x)
        raw = eigenfunction_eval(UNIT, 1, x, normalized=False)
        a = UNIT.a
        assert np.allclose(raw, p0 * (a - a * x), rtol=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            eigenfunction_eval(UNIT, 1, 0.0)
        with pytest.raises(DomainError):
            eigenfunction_p1(UNIT, -1.0)
        with pytest.raises(ParameterError):
            eigenfunction_eval(UNIT, 0, 1.0)


class TestEigenMode:
    def test_eigenvalue_is_integer_multiple_of_gamma(self):
        for n in (1, 2, 5):
            mode = eigenmode(FULL, n)
            assert mode.lam == pytest.approx(n * FULL.gamma, rel=1e-15)
            assert mode.lam / FULL.gamma == pytest.approx(n, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ParameterError):
            EigenMode(n=0, lam=0.1)
        with pytest.raises(ParameterError):
            EigenMode(n=1, lam=0.0)
        with pytest.raises(ParameterError):
            eigenmode(UNIT, -2)

    def test_mode_sum_correlation_collapses_to_first_mode(self):
        # only g_1 is nonzero, so the mode sum is a single exponential and
        # matches the analytic variance autocorrelation exactly
        from meanrev.models import variance_autocorr

        tau = np.array([1.0, 7.0, 30.0])
        mode_sum = np.exp(-eigenmode(FULL, 1).lam * tau)
        assert np.allclose(mode_sum, variance_autocorr(FULL, tau), rtol=1e-15)


class TestGCoefficient:
    def test_first_coefficient_value(self):
        got = g_coefficient(HestonUnitParams(gamma=0.1, kappa2=1e-2), 1)
        assert got == pytest.approx(math.sqrt(0.05), rel=1e-12)
        full = g_coefficient(FULL, 1)
        assert full == pytest.approx(
            math.sqrt(FULL.theta * FULL.kappa_h**2 / (2 * FULL.gamma)), rel=1e-12
        )

    def test_higher_coefficients_vanish_exactly(self):
        assert g_coefficient(UNIT, 2) == 0.0
        assert g_coefficient(UNIT, 3) == 0.0

    def test_g1_squared_is_stationary_variance(self):
        assert g_coefficient(FULL, 1) ** 2 == pytest.approx(
            stationary_variance(FULL), rel=1e-12
        )

    def test_validation(self):
        with pytest.raises(ParameterError):
            g_coefficient(UNIT, 0)


class TestOdeResidual:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_quantized_eigenvalues_solve_the_equation(self, n):
        assert ode_residual(UNIT, n * UNIT.gamma, GRID, n=n) < 1e-6

    def test_stationary_density_at_lambda_zero(self):
        assert ode_residual(UNIT, 0.0, GRID, n=0) < 1e-6

    def test_wrong_eigenvalue_fails(self):
        assert ode_residual(UNIT, 1.5 * UNIT.gamma, GRID, n=1) > 1e-3

    def test_values_argument_matches_mode_argument(self):
        p = eigenfunction_eval(UNIT, 2, GRID)
        a = ode_residual(UNIT, 2 * UNIT.gamma, GRID, values=p)
        b = ode_residual(UNIT, 2 * UNIT.gamma, GRID, n=2)
        assert a == pytest.approx(b, rel=1e-12)

    def test_grid_validation(self):
        with pytest.raises(ParameterError, match="coarse"):
            ode_residual(UNIT, 0.1, np.linspace(0.1, 5, 40), n=1)
        bad = GRID.copy()
        bad[100] += 1e-3
        with pytest.raises(ParameterError, match="uniform"):
            ode_residual(UNIT, 0.1, bad, n=1)
        with pytest.raises(DomainError):
            ode_residual(UNIT, 0.1, np.linspace(-1.0, 5.0, 600), n=1)
        with pytest.raises(ParameterError, match="trial function"):
            ode_residual(UNIT, 0.1, GRID)
        with pytest.raises(ParameterError, match="length"):
            ode_residual(UNIT, 0.1, GRID, values=np.ones(10))


class TestTheoryCumulant:
    def test_mean_start_has_no_initial_second_cumulant(self):
        assert theory_cumulant(2, 0.0, 1, UNIT) == 0.0

    def test_mean_start_variance_saturates(self):
        want = UNIT.kappa2 / (2 * UNIT.gamma)
        assert theory_cumulant(2, np.inf, 1, UNIT) == pytest.approx(want, rel=1e-12)
        t = np.linspace(0.0, 80.0, 41)
        got = theory_cumulant(2, t, 1, UNIT)
        assert np.allclose(got, want * (1.0 - np.exp(-2 * UNIT.gamma * t)), rtol=1e-12)

    def test_origin_start_third_cumulant(self):
        want = UNIT.kappa2**2 / (2 * UNIT.gamma**2)
        assert theory_cumulant(3, np.inf, 0, UNIT) == pytest.approx(want, rel=1e-12)
        t = np.linspace(0.0, 80.0, 41)
        q = np.exp(-UNIT.gamma * t)
        assert np.allclose(
            theory_cumulant(3, t, 0, UNIT),
            want * (1.0 - 3 * q + 3 * q**2 - q**3),
            rtol=1e-12,
            atol=1e-18,
        )

    def test_origin_start_mean(self):
        t = np.linspace(0.0, 50.0, 26)
        assert np.allclose(
            theory_cumulant(1, t, 0, UNIT), 1.0 - np.exp(-UNIT.gamma * t), rtol=1e-12
        )
        assert theory_cumulant(1, 17.0, 1, UNIT) == 1.0

    def test_full_params_scale_out_of_unit_model(self):
        theta = FULL.theta
        unit = HestonUnitParams.from_heston(FULL)
        for n in (1, 2, 3):
            full_val = theory_cumulant(n, 12.0, 1, FULL)
            unit_val = theory_cumulant(n, 12.0, 1, unit)
            assert full_val == pytest.approx(theta**n * unit_val, rel=1e-12)

    def test_saturated_variance_matches_model_core(self):
        assert theory_cumulant(2, np.inf, 1, FULL) == pytest.approx(
            stationary_variance(FULL), rel=1e-12
        )

    def test_validation(self):
        with pytest.raises(ParameterError):
            theory_cumulant(0, 1.0, 0, UNIT)
        with pytest.raises(ParameterError):
            theory_cumulant(2, 1.0, 0.5, UNIT)
        with pytest.raises(DomainError):
            theory_cumulant(2, -1.0, 0, UNIT)


class TestEmpiricalCumulants:
    TS = np.array([5.0, 10.0, 20.0, 50.0, 100.0])

    def test_monte_carlo_matches_theory(self):
        heston = UNIT.to_heston()
        for x0 in (0.0, 1.0):
            ens = simulate_ensemble(
                heston, SimConfig(steps=101, dt=1.0, x0=x0, seed=9), 2000, workers=2
            )
            c1, c2, c3 = empirical_cumulants(ens, times=self.TS)
            assert np.max(np.abs(c1.empirical - c1.theory) / np.abs(c1.theory)) < 0.03
            assert np.max(np.abs(c2.empirical - c2.theory) / c2.theory) < 0.12
            assert np.max(np.abs(c3.empirical - c3.theory) / c3.theory) < 0.40
            assert c1.x0 == int(x0)

    def test_bootstrap_errors_scale_like_the_sampling_noise(self):
        ens = simulate_ensemble(
            UNIT.to_heston(), SimConfig(steps=101, dt=1.0, x0=1.0, seed=9), 2000, workers=2
        )
        (c2,) = empirical_cumulants(ens, orders=(2,), times=self.TS)
        assert np.all(c2.se > 0)
        # k2 of a near-Gaussian cross-section has relative error ~ sqrt(2/n)
        rel = c2.se[-1] / c2.empirical[-1]
        assert 0.01 < rel < 0.10

    def test_error_shrinks_with_ensemble_size(self):
        # Pooled RMS relative error over 32 replications; with a 2.25x
        # size ratio the 1/sqrt(n) law predicts a ratio of 1.5.
        unit = HestonUnitParams(gamma=0.2, kappa2=2e-2)
        times = np.arange(3.0, 49.0, 3.0)

        def pooled_sq_err(n_paths, seeds):
            total, count = 0.0, 0
            for seed in seeds:
                ens = simulate_ensemble(
                    unit.to_heston(),
                    SimConfig(steps=51, dt=1.0, x0=1.0, seed=seed),
                    n_paths, workers=2,
                )
                for c in empirical_cumulants(ens, times=times, n_boot=0):
                    rel = (c.empirical - c.theory) / c.theory
                    total += float(rel @ rel)
                    count += rel.size
            return total / count

        small = pooled_sq_err(200, range(32))
        large = pooled_sq_err(450, range(1000, 1032))
        assert 1.2 < np.sqrt(small / large) < 1.8

    def test_near_deterministic_limit(self):
        det = MeanRevertingParams(gamma=0.1, theta=1.0, kappa_h=1e-8)
        ens = simulate_ensemble(det, SimConfig(steps=101, dt=1.0, x0=0.0, seed=1), 100)
        c1, c2, c3 = empirical_cumulants(ens, times=self.TS, n_boot=0)
        assert np.max(np.abs(c1.empirical - c1.theory) / c1.theory) < 0.01
        assert np.max(np.abs(c2.empirical)) < 1e-12
        assert np.max(np.abs(c3.empirical)) < 1e-18

    def test_refuses_small_ensembles(self):
        ens = simulate_ensemble(
            UNIT.to_heston(), SimConfig(steps=11, dt=1.0, x0=1.0, seed=0), 50
        )
        with pytest.raises(ParameterError, match="100 paths"):
            empirical_cumulants(ens)

    def test_requires_known_initial_condition(self):
        ens = simulate_ensemble(
            UNIT.to_heston(), SimConfig(steps=11, dt=1.0, x0="steady", seed=0), 120
        )
        with pytest.raises(ParameterError, match="x0"):
            empirical_cumulants(ens)

    def test_rejects_multiplicative_ensembles(self):
        mult = MeanRevertingParams(gamma=0.1, theta=1e-4, kappa_m=0.2)
        ens = simulate_ensemble(mult, SimConfig(steps=11, dt=1.0, x0=0.0, seed=0), 120)
        with pytest.raises(ParameterError, match="square-root branch"):
            empirical_cumulants(ens)

    def test_times_must_lie_on_grid(self):
        ens = simulate_ensemble(
            UNIT.to_heston(), SimConfig(steps=11, dt=1.0, x0=1.0, seed=0), 120
        )
        with pytest.raises(ParameterError, match="reporting grid"):
            empirical_cumulants(ens, times=[2.5])
        with pytest.raises(ParameterError, match="horizon"):
            empirical_cumulants(ens, times=[50.0])

    def test_curve_validation(self):
        t = np.arange(3.0)
        with pytest.raises(ParameterError):
            CumulantCurve(order=4, times=t, theory=t, empirical=t, se=t, x0=0)
        with pytest.raises(ParameterError):
            CumulantCurve(order=2, times=t, theory=t[:2], empirical=t, se=t, x0=0)


class TestKsCurve:
    def test_matches_per_prefix_ks_stat(self):
        rng = np.random.default_rng(3)
        steady = steady_state_of(UNIT.to_heston())
        v = steady.sample(rng, 150)
        curve = ks_curve(v, steady)
        u = steady.cdf(v)
        uniform = lambda w: np.clip(w, 0.0, 1.0)
        for m in (1, 2, 10, 75, 150):
            assert curve[m - 1] == pytest.approx(ks_stat(u[:m], uniform), abs=1e-14)

    def test_checkpoint_kernel_matches_full_kernel(self):
        rng = np.random.default_rng(4)
        u = rng.random(300)
        full = np.empty(300)
        _ks_expanding(u, np.empty(0, dtype=np.int64), True, full)
        chk = np.array([1, 7, 30, 144, 300], dtype=np.int64)
        sub = np.empty(chk.size)
        _ks_expanding(u, chk, False, sub)
        assert np.array_equal(sub, full[chk - 1])

    def test_truncated_zeros_are_tolerated(self):
        steady = steady_state_of(UNIT.to_heston())
        v = np.array([0.0, 0.5, 1.2, 0.0, 2.0])
        curve = ks_curve(v, steady)
        assert np.all(np.isfinite(curve))
        assert curve.shape == (5,)

    def test_validation(self):
        steady = steady_state_of(UNIT.to_heston())
        with pytest.raises(ParameterError):
            ks_curve(np.empty(0), steady)


class TestMeasureRelaxationTime:
    def test_typical_sample_is_deterministic(self):
        cfg = RelaxationConfig(seed=5)
        s = measure_relaxation_time(HestonUnitParams(0.1, 1e-2), cfg)
        assert s.flag == ""
        assert s.time == 73.0
        assert s.seed == 5
        assert 0 < s.ks_min <= s.ks_final
        assert s.ks_min <= s.ks_at_time
        again = measure_relaxation_time(HestonUnitParams(0.1, 1e-2), cfg)
        assert again == s

    def test_noiseless_limit_is_flagged(self):
        s = measure_relaxation_time(HestonUnitParams(0.1, 1e-60), RelaxationConfig(seed=5))
        assert s.flag == "degenerate trajectory"
        assert math.isnan(s.time)

    def test_sample_invariants(self):
        with pytest.raises(ParameterError):
            RelaxationSample(
                time=math.nan, seed=0, ks_min=0.1, ks_at_time=0.1, ks_final=0.1,
                n_checkpoints=10,
            )
        with pytest.raises(ParameterError):
            RelaxationSample(
                time=5.0, seed=0, ks_min=0.1, ks_at_time=0.1, ks_final=0.1,
                n_checkpoints=10, flag="no saturation",
            )

    def test_horizon_must_cover_persistence_window(self):
        with pytest.raises(ParameterError, match="horizon"):
            measure_relaxation_time(
                HestonUnitParams(0.1, 1e-2), RelaxationConfig(horizon_efolds=1.5)
            )

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            RelaxationConfig(floor_quantile=1.5)
        with pytest.raises(ParameterError):
            RelaxationConfig(n_calibration=4)
        with pytest.raises(ParameterError):
            RelaxationConfig(eps=-0.1)
        with pytest.raises(ParameterError):
            RelaxationConfig(workers=0)


@pytest.fixture(scope="module")
def fast_study():
    return relaxation_experiment(
        HestonUnitParams(0.5, 1e-2), 100, RelaxationConfig(seed=0, workers=2)
    )


class TestRelaxationExperiment:
    def test_structure_and_bookkeeping(self, fast_study):
        r = fast_study.results[0]
        assert r.n_samples == 100
        assert r.times.size + r.n_flagged == 100
        assert np.all(r.times > 0)
        assert np.all(r.times <= r.horizon)
        assert sum(r.flag_counts.values()) == r.n_flagged
        assert len(r.fits) == 6
        ks_values = [f.ks for f in r.fits]
        assert ks_values == sorted(ks_values)
        assert r.unreliable == (r.n_flagged > 5 or not r.fits)
        assert r.best_fit() is r.fits[0]
        assert fast_study.slopes is None

    def test_worker_count_does_not_change_results(self, fast_study):
        other = relaxation_experiment(
            HestonUnitParams(0.5, 1e-2), 100, RelaxationConfig(seed=0, workers=4)
        )
        assert other.results[0].samples == fast_study.results[0].samples

    def test_single_measurement_equals_experiment_sample(self, fast_study):
        samples = fast_study.results[0].samples
        i = next(idx for idx, s in enumerate(samples) if s.flag == "")
        cfg = RelaxationConfig(seed=i, calibration_seed=1_000_000, workers=2)
        alone = measure_relaxation_time(HestonUnitParams(0.5, 1e-2), cfg)
        assert alone == samples[i]

    def test_scaling_slopes_across_rates(self):
        grid = [HestonUnitParams(g, 1e-2) for g in (0.2, 0.35, 0.5)]
        study = relaxation_experiment(
            grid, 100, RelaxationConfig(seed=0, n_calibration=128, workers=2)
        )
        assert study.slopes is not None
        assert -1.6 < study.slopes["mean"] < -0.5
        table = study.scaling_table()
        assert [row["gamma"] for row in table] == [0.2, 0.35, 0.5]
        assert all(row["n_kept"] + row["n_flagged"] == 100 for row in table)

    def test_validation(self):
        with pytest.raises(ParameterError, match="100 samples"):
            relaxation_experiment(HestonUnitParams(0.5, 1e-2), 50)
        with pytest.raises(ParameterError, match="disjoint"):
            relaxation_experiment(HestonUnitParams(0.5, 1e-2), 2_000_000)
        with pytest.raises(ParameterError, match="empty"):
            relaxation_experiment([], 100)
