import dataclasses
import json

import numpy as np
import pytest

from mvcontract.experiments import (
    ExperimentConfig,
    InitialLaw,
    fit_rate,
    moment_ceiling,
    run_chaos,
    run_contraction,
    run_ergodicity,
    run_moment_bound,
)
from mvcontract.model import builtin_model
from mvcontract.simulate import CoupledEnsemble, ParticleEnsemble, StepPlan, run_coupled


def ou_config(**kw):
    base = dict(
        model_name="mean_field_ou",
        model_params={"dim": 1, "L1": 0.1},
        n=400, h=0.01, T=5.0, stride=50, seed=11, replicates=2,
        initial_x=InitialLaw(kind="point", value=[-2.0]),
        initial_y=InitialLaw(kind="point", value=[2.0]),
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestFitRate:
    def test_exact_exponential(self):
        t = np.linspace(0, 10, 40)
        fit = fit_rate(t, 7.0 * np.exp(-0.3 * t))
        assert fit.rate == pytest.approx(-0.3, abs=1e-9)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_series(self):
        t = np.linspace(0, 5, 20)
        fit = fit_rate(t, np.full(20, 2.5))
        assert fit.rate == pytest.approx(0.0, abs=1e-12)

    def test_noisy_exponential_within_ci(self):
        rng = np.random.default_rng(100)
        t = np.linspace(0, 10, 200)
        sigma = 0.05
        y = np.exp(-0.5 * t + sigma * rng.standard_normal(200))
        fit = fit_rate(t, y)
        # OLS standard error of the slope under iid log-noise
        se = sigma / np.sqrt(np.sum((t - t.mean()) ** 2))
        assert abs(fit.rate + 0.5) <= 4.0 * se

    def test_noise_floor_and_window_exclusion(self):
        t = np.linspace(0, 10, 50)
        y = np.exp(-t)
        fit = fit_rate(t, y, noise_floor=np.exp(-5.0), t_min=1.0)
        assert fit.window[0] >= 1.0
        assert np.exp(-fit.window[1]) > np.exp(-5.0) - 1e-12

    def test_insufficient_points(self):
        with pytest.raises(ValueError, match="at least"):
            fit_rate([0, 1, 2], [1.0, 0.5, 0.25])


class TestContraction:
    def test_bound_dominates_and_rate_reasonable(self):
        res = run_contraction(ou_config())
        assert res.bound_applicable
        assert res.dominated
        assert res.w1_mean[0] == pytest.approx(4.0, abs=1e-12)
        assert res.rate_fit is not None
        assert res.rate_fit.decay_rate >= 0.9 * res.gamma_or_c

    def test_identical_initial_laws_stay_at_noise_floor(self):
        cfg = ou_config(
            initial_x=InitialLaw(kind="gaussian", mean=[0.0], std=1.0),
            initial_y=InitialLaw(kind="gaussian", mean=[0.0], std=1.0),
            T=3.0, replicates=2,
        )
        res = run_contraction(cfg)
        # both clouds are iid draws from the same law: W1 ~ noise floor at
        # every time, here the initial sampling distance sets the scale
        floor = res.w1_mean[0]
        assert np.all(res.w1_mean <= 3.0 * floor + 1e-12)

    def test_noncontractive_flagged(self):
        cfg = ou_config(model_params={"dim": 1, "L1": 0.2}, T=2.0, replicates=1, record_rho=False)
        res = run_contraction(cfg)
        assert not res.bound_applicable and not res.dominated

    def test_delta_insensitivity(self):
        base = ou_config(T=4.0, replicates=4, record_rho=False, n=500)
        res_a = run_contraction(base)
        res_b = run_contraction(dataclasses.replace(base, delta=base.delta / 2.0))
        floor = 3.0 * np.maximum(res_a.w1_stderr, res_b.w1_stderr) + 5e-3
        assert np.all(np.abs(res_a.w1_mean - res_b.w1_mean) <= floor + 0.05 * res_a.w1_mean)

    def test_pipeline2_curves_recorded(self):
        cfg = ou_config(pipeline=2, T=2.0, replicates=1, n=200, record_rho=False)
        res = run_contraction(cfg)
        assert res.wrho1_mean is not None and len(res.wrho1_mean) == len(res.times)
        # L1 = 0.1 is far above the tiny L1*, so the local bound is not claimed
        assert not res.bound_applicable

    def test_pipeline2_bound_applicable_at_zero_L1(self):
        # L1 = 0 sits below any positive threshold L1*, so the local
        # contraction in rho_1 is claimed and must dominate
        cfg = ou_config(
            model_params={"dim": 1, "L1": 0.0},
            pipeline=2, T=4.0, replicates=2, n=300, record_rho=False,
        )
        res = run_contraction(cfg)
        assert res.bound_applicable
        assert res.dominated
        # the rate constant is positive but astronomically small here
        assert 0.0 < res.gamma_or_c < 1e-10

    def test_two_dimensional_contraction(self):
        # exercises the multi-d coupling (Householder reflection per pair)
        # and the exact-assignment W1 route inside the experiment loop
        cfg = ExperimentConfig(
            model_name="mean_field_ou", model_params={"dim": 2, "L1": 0.1},
            n=128, h=0.01, T=3.0, stride=100, seed=13, replicates=2,
            initial_x=InitialLaw(kind="point", value=[-2.0, 0.0]),
            initial_y=InitialLaw(kind="point", value=[2.0, 1.0]),
            record_rho=False,
        )
        res = run_contraction(cfg)
        assert res.bound_applicable and res.dominated
        assert res.w1_mean[0] == pytest.approx(np.hypot(4.0, 1.0), abs=1e-12)
        assert res.w1_mean[-1] < 0.5 * res.w1_mean[0]

    def test_csv_roundtrip_and_reproducibility(self, tmp_path):
        cfg = ou_config(T=2.0, replicates=1, n=200, record_rho=False)
        a, b = run_contraction(cfg), run_contraction(cfg)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_csv(pa)
        b.write_csv(pb)
        assert pa.read_bytes() == pb.read_bytes()


class TestSynchronousRate:
    def test_pairwise_distance_decays_at_unit_rate(self):
        # L2 = 0 and kappa = -1 with synchronous noise: Z' = -Z exactly
        model, _ = builtin_model("mean_field_ou", dim=1, L1=0.0)
        n = 256
        ce = CoupledEnsemble(
            ParticleEnsemble(np.full((n, 1), -2.0), model, stream=0),
            ParticleEnsemble(np.full((n, 1), 2.0), model, stream=1),
            delta=0.5, mode="synchronous", stream=0,
        )
        plan = StepPlan(h=0.01, steps=800, stride=40, seed=21)
        snaps = run_coupled(ce, plan, diagnostics_at_records=False)
        times = np.array([s.X.time for s in snaps])
        mean_r = np.array([
            np.linalg.norm(s.X.states - s.Y.states, axis=1).mean() for s in snaps
        ])
        fit = fit_rate(times, mean_r)
        assert fit.rate == pytest.approx(-1.0, abs=0.02)
        assert fit.r_squared >= 1.0 - 1e-9


class TestChaos:
    def test_slope_and_dominance_small_grid(self):
        cfg = ou_config(
            initial_x=InitialLaw(kind="gaussian", mean=[0.0], std=1.0),
            T=3.0, h=0.02, replicates=3, stride=1,
        )
        res = run_chaos(cfg, n_grid=[32, 64, 128, 256])
        assert res.slope <= -0.2
        assert np.all(res.w1_mean[1:] <= res.w1_mean[:-1] * 1.25)  # broadly decreasing
        assert np.all(res.wrho_mean <= res.bound + 1e-12)  # fitted-constant dominance
        assert res.n_ref == 1024

    def test_longer_horizon_keeps_plateau(self):
        # uniform-in-time: doubling T does not raise the distance beyond noise
        cfg = ou_config(
            initial_x=InitialLaw(kind="gaussian", mean=[0.0], std=1.0),
            T=2.0, h=0.02, replicates=3, stride=1,
        )
        short = run_chaos(cfg, n_grid=[64, 128])
        long = run_chaos(dataclasses.replace(cfg, T=4.0), n_grid=[64, 128])
        tol = 3.0 * np.sqrt(short.w1_stderr**2 + long.w1_stderr**2) + 0.02
        assert np.all(long.w1_mean <= short.w1_mean + tol)


class TestErgodicity:
    def test_ou_terminal_moments(self):
        cfg = ou_config(
            initial_y=InitialLaw(kind="gaussian", mean=[1.0], std=1.0),
            n=2000, T=15.0, stride=100, replicates=2,
        )
        res = run_ergodicity(cfg)
        assert res.analytic_var == 0.5
        assert res.moments_match
        assert abs(res.terminal_var - 0.5) <= 0.05 * 0.5

    def test_exact_ou_has_tighter_band(self):
        # L1 = 0 is a plain OU system: same stationary law, less coupling noise
        cfg = ou_config(
            model_params={"dim": 1, "L1": 0.0},
            initial_y=InitialLaw(kind="gaussian", mean=[1.0], std=1.0),
            n=4000, T=15.0, stride=100, replicates=2,
        )
        res = run_ergodicity(cfg)
        assert res.moments_match
        assert abs(res.terminal_var - 0.5) <= 0.03 * 0.5

    def test_cauchy_distances_fall_to_floor(self):
        cfg = ou_config(
            initial_y=InitialLaw(kind="gaussian", mean=[2.0], std=0.5),
            n=1000, T=12.0, stride=100, replicates=1,
        )
        res = run_ergodicity(cfg)
        # all pairwise distances from t = T/2 onward sit at the sampling floor
        floor = np.sqrt(0.5) / np.sqrt(cfg.n)  # ~ stderr of a N(0,1/2) cloud
        assert np.all(res.cauchy_w1 <= 12.0 * floor)

    def test_invariant_start_stays_put(self):
        cfg = ou_config(
            initial_y=InitialLaw(kind="gaussian", mean=[0.0], std=float(np.sqrt(0.5))),
            n=4000, T=6.0, stride=100, replicates=1,
        )
        res = run_ergodicity(cfg)
        assert np.all(res.cauchy_w1 <= 0.1)
        assert res.moments_match


class TestMomentBound:
    def test_ceiling_assembly_for_ou(self):
        model, bundle = builtin_model("mean_field_ou", dim=1, L1=0.1)
        ceiling, parts = moment_ceiling(model, bundle)
        # K0=1, kappa_1=1, b0=0 -> C1=2; C2=3; C3=3+1.0; C4=4+0.3375
        assert parts["C1"] == pytest.approx(2.0)
        assert parts["C2"] == pytest.approx(3.0)
        assert parts["C3"] == pytest.approx(4.0)
        assert parts["C4"] == pytest.approx(4.3375)
        assert ceiling == pytest.approx(1.0 + 4.3375 / 0.9)

    def test_missing_tail_declaration_refused(self):
        model, bundle = builtin_model("mean_field_ou", dim=1, L1=0.1)
        stripped = dataclasses.replace(bundle, kappa_tail_negative=None)
        with pytest.raises(ValueError, match="tail"):
            moment_ceiling(model, stripped)

    def test_larger_K_lowers_ceiling(self):
        model, bundle = builtin_model("mean_field_ou", dim=1, L1=0.1)
        lo = moment_ceiling(model, dataclasses.replace(bundle, kappa_tail_negative=(1.0, 0.5)))[0]
        hi = moment_ceiling(model, dataclasses.replace(bundle, kappa_tail_negative=(1.0, 0.9)))[0]
        assert hi < lo

    def test_curve_below_ceiling(self):
        res = run_moment_bound(ou_config(n=1000, T=6.0, replicates=2))
        assert res.below_ceiling
        assert res.sup_mean_abs < res.ceiling
        # half-normal mean of the stationary N(0, 1/2) law
        assert res.sup_mean_abs == pytest.approx(np.sqrt(1.0 / np.pi), rel=0.1)


class TestConfig:
    def test_json_roundtrip(self, tmp_path):
        cfg = ou_config()
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg.to_dict()))
        loaded = ExperimentConfig.from_json(path)
        assert loaded == cfg

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(replicates=0)
        with pytest.raises(ValueError):
            ExperimentConfig(pipeline=3)

    def test_initial_law_kinds(self, tmp_path):
        point = InitialLaw(kind="point", value=[1.5]).sample(4, 1, 0, 0, 0)
        np.testing.assert_allclose(point, 1.5)
        gauss = InitialLaw(kind="gaussian", mean=[3.0], std=0.0).sample(4, 1, 0, 0, 0)
        np.testing.assert_allclose(gauss, 3.0)
        cloud_path = tmp_path / "cloud.csv"
        np.savetxt(cloud_path, np.arange(6.0)[:, None], delimiter=",")
        cloud = InitialLaw(kind="file", path=str(cloud_path)).sample(6, 1, 0, 0, 0)
        np.testing.assert_allclose(np.sort(cloud[:, 0]), np.arange(6.0))
