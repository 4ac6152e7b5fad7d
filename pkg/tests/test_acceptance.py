"""Acceptance suite: one test per criterion, each printing a pass line with
its runtime.  Heavy experiment runs are shared through module-scoped
fixtures; the determinism criterion re-runs them and compares CSV bytes."""

import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from mvcontract.constants import build_pipeline1, build_pipeline2
from mvcontract.experiments import (
    ExperimentConfig,
    InitialLaw,
    fit_rate,
    run_chaos,
    run_contraction,
    run_ergodicity,
    run_moment_bound,
)
from mvcontract.model import builtin_model
from mvcontract.simulate import (
    CoupledEnsemble,
    ParticleEnsemble,
    StepPlan,
    coupling_deltas,
    reflection_matrix,
    run_coupled,
    transition_rc_sc,
)
from mvcontract.transport import EmpiricalMeasure, brute_force_transport, w1, w_cost

from helpers import tanh_sigma_model

R2_EXACT = (1.0 + np.sqrt(17.0)) / 2.0


def _ok(k, elapsed, limit, detail):
    line = f"[criterion {k:2d}] PASS in {elapsed:6.2f}s (limit {limit:.0f}s): {detail}"
    print(line)
    assert elapsed < limit, f"criterion {k} exceeded its runtime limit: {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# Shared experiment runs (criteria 6 and 8-10 reuse them for criterion 11)
# ---------------------------------------------------------------------------

CONTRACTION_CFG = ExperimentConfig(
    model_name="mean_field_ou", model_params={"dim": 1, "L1": 0.1},
    n=2000, h=0.01, T=20.0, stride=50, seed=2026, replicates=8,
    initial_x=InitialLaw(kind="point", value=[-2.0]),
    initial_y=InitialLaw(kind="point", value=[2.0]),
    record_rho=False,
)

ERGODIC_CFG = ExperimentConfig(
    model_name="mean_field_ou", model_params={"dim": 1, "L1": 0.1},
    n=4000, h=0.01, T=30.0, stride=100, seed=2027, replicates=1,
    initial_y=InitialLaw(kind="gaussian", mean=[1.5], std=1.0),
)

CHAOS_CFG = ExperimentConfig(
    model_name="mean_field_ou", model_params={"dim": 1, "L1": 0.1},
    n=64, h=0.01, T=5.0, stride=1, seed=2028, replicates=4,
    initial_x=InitialLaw(kind="gaussian", mean=[0.0], std=1.0),
)
CHAOS_GRID = [64, 128, 256, 512, 1024, 2048]

MOMENT_CFG = ExperimentConfig(
    model_name="mean_field_ou", model_params={"dim": 1, "L1": 0.1},
    n=4000, h=0.01, T=10.0, stride=25, seed=2029, replicates=2,
)


@pytest.fixture(scope="module")
def contraction_run():
    t0 = time.perf_counter()
    res = run_contraction(CONTRACTION_CFG)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ergodic_run():
    t0 = time.perf_counter()
    res = run_ergodicity(ERGODIC_CFG)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def chaos_run():
    t0 = time.perf_counter()
    res = run_chaos(CHAOS_CFG, CHAOS_GRID)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def moment_run():
    t0 = time.perf_counter()
    res = run_moment_bound(MOMENT_CFG)
    return res, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# 1. Constants oracle (exact closed forms of pipeline 1)
# ---------------------------------------------------------------------------


def test_criterion_01_constants_oracle():
    t0 = time.perf_counter()
    model, bundle = builtin_model("mean_field_ou", dim=1, L1=0.1)
    rep = build_pipeline1(model, bundle)
    elapsed = time.perf_counter() - t0
    c_exact = 2.0 / R2_EXACT**2
    assert abs(rep.R1 - 1.0) < 1e-6
    assert abs(rep.R2 - R2_EXACT) < 1e-6
    assert abs(rep.c - c_exact) < 1e-6
    assert abs(rep.gamma - (c_exact - 0.2)) < 1e-6
    assert abs(rep.C - 2.0) < 1e-6
    _ok(1, elapsed, 1.0,
        f"R1={rep.R1:.9f} R2={rep.R2:.9f} c={rep.c:.9f} gamma={rep.gamma:.9f} C={rep.C}")


# ---------------------------------------------------------------------------
# 2. Pipeline-2 quadrature against closed forms
# ---------------------------------------------------------------------------


def test_criterion_02_pipeline2_quadrature():
    t0 = time.perf_counter()
    model, bundle = builtin_model("mean_field_ou", dim=1, L1=0.1)
    rep = build_pipeline2(model, bundle)
    elapsed = time.perf_counter() - t0
    assert abs(rep.R3 - 4.0) < 1e-12
    assert abs(rep.R4 - np.sqrt(76.0)) < 1e-12
    xi_inv_exact = (np.exp(4.0 * rep.R3) - 1.0) / 16.0 - rep.R3 / 4.0
    rel = abs(1.0 / rep.xi - xi_inv_exact) / xi_inv_exact
    assert rel < 1e-8
    _ok(2, elapsed, 1.0, f"R3={rep.R3} R4={rep.R4:.12f} xi^-1 rel err={rel:.2e}")


# ---------------------------------------------------------------------------
# 3. Trace identity property suite
# ---------------------------------------------------------------------------


def test_criterion_03_trace_identity():
    t0 = time.perf_counter()
    dim = 3
    model, info = tanh_sigma_model(dim=dim, seed=303)
    rng = np.random.default_rng(304)
    worst_rel, worst_bound = 0.0, -np.inf
    n_done = 0
    while n_done < 10_000:
        x = 3.0 * rng.standard_normal(dim)
        y = 3.0 * rng.standard_normal(dim)
        z = x - y
        r = float(np.linalg.norm(z))
        if r < 1e-8:
            continue
        n_done += 1
        e = z / r
        dmat, amat, _ = coupling_deltas(model.diffusion(x), model.diffusion(y), z)
        lhs = float(np.sum(amat * amat) - np.dot(amat.T @ e, amat.T @ e))
        rhs = float(np.sum(dmat * dmat) - np.dot(dmat.T @ e, dmat.T @ e))
        worst_rel = max(worst_rel, abs(lhs - rhs) / max(1.0, abs(rhs)))
        worst_bound = max(worst_bound, abs(rhs) - 2.0 * dim * info["L2"] * r * r)
    elapsed = time.perf_counter() - t0
    assert worst_rel <= 1e-10
    assert worst_bound <= 1e-12
    _ok(3, elapsed, 5.0,
        f"10^4 probes, worst identity err={worst_rel:.2e}, worst bound margin={worst_bound:.2e}")


# ---------------------------------------------------------------------------
# 4. Metric and coupling invariants
# ---------------------------------------------------------------------------


def test_criterion_04_metric_coupling_invariants():
    t0 = time.perf_counter()
    model, bundle = builtin_model("mean_field_ou", dim=1, L1=0.1)
    rho = build_pipeline1(model, bundle).rho()

    # triangle inequality on 10^4 random triples (vectorized through f)
    rng = np.random.default_rng(404)
    X, Y, Z = 4.0 * rng.standard_normal((3, 10_000, 3))
    f = rho.f
    dxz = f(np.linalg.norm(X - Z, axis=1))
    dxy = f(np.linalg.norm(X - Y, axis=1))
    dyz = f(np.linalg.norm(Y - Z, axis=1))
    tri_slack = float(np.min(dxy + dyz - dxz))
    assert tri_slack >= -1e-10

    # rc^2 + sc^2 = 1 on a dense sweep
    rc, sc = transition_rc_sc(np.linspace(0, 2, 10_000), 0.37)
    pyth = float(np.max(np.abs(rc**2 + sc**2 - 1.0)))
    assert pyth <= 1e-10

    # reflection matrix invariants at 10^4 probes
    sig_model, _ = tanh_sigma_model(dim=3, seed=405)
    worst = 0.0
    eye = np.eye(3)
    for _ in range(10_000):
        y = 2.0 * rng.standard_normal(3)
        z = rng.standard_normal(3)
        if np.linalg.norm(z) < 1e-8:
            continue
        sy = sig_model.diffusion(y)
        H = reflection_matrix(sy, z)
        v = np.linalg.solve(sy, z)
        u = v / np.linalg.norm(v)
        worst = max(
            worst,
            float(np.max(np.abs(H @ H.T - eye))),
            float(np.max(np.abs(H - H.T))),
            float(np.max(np.abs(H @ u + u))),
        )
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-10
    _ok(4, elapsed, 5.0,
        f"triangle slack={tri_slack:.2e}, |rc^2+sc^2-1|={pyth:.2e}, H worst={worst:.2e}")


# ---------------------------------------------------------------------------
# 5. Transport oracle equivalence
# ---------------------------------------------------------------------------


def test_criterion_05_transport_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    worst_bf = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, 4))
        X = rng.standard_normal((n, d))
        Y = rng.standard_normal((n, d))
        bf = brute_force_transport(EmpiricalMeasure(X), EmpiricalMeasure(Y), 1.0)
        ws = w_cost(EmpiricalMeasure(X), EmpiricalMeasure(Y), 1.0).value
        worst_bf = max(worst_bf, abs(bf - ws))
    assert worst_bf <= 1e-12

    worst_sort = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 64))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        sorted_val = w1(EmpiricalMeasure(x[:, None]), EmpiricalMeasure(y[:, None])).value
        C = np.abs(x[:, None] - y[None, :])
        rows, cols = linear_sum_assignment(C)
        worst_sort = max(worst_sort, abs(float(C[rows, cols].mean()) - sorted_val))
    elapsed = time.perf_counter() - t0
    assert worst_sort <= 1e-12
    _ok(5, elapsed, 30.0,
        f"200 brute-force instances err={worst_bf:.2e}, 1000 sorted instances err={worst_sort:.2e}")


# ---------------------------------------------------------------------------
# 6. Contraction bound dominance (Monte Carlo)
# ---------------------------------------------------------------------------


def test_criterion_06_contraction_bound(contraction_run):
    res, elapsed = contraction_run
    assert res.bound_applicable and res.dominated
    # the criterion's literal bound, with the rounded rate 0.1048
    literal = 2.0 * np.exp(-0.1048 * res.times) * res.w1_mean[0]
    assert np.all(res.w1_mean <= literal + 3.0 * res.w1_stderr)
    assert res.rate_fit is not None
    assert res.rate_fit.decay_rate >= 0.9 * res.gamma_or_c
    _ok(6, elapsed, 300.0,
        f"dominated at all {len(res.times)} times, fitted decay "
        f"{res.rate_fit.decay_rate:.4f} >= 0.9*gamma={0.9 * res.gamma_or_c:.4f}")


# ---------------------------------------------------------------------------
# 7. Synchronous-coupling exact rate
# ---------------------------------------------------------------------------


def test_criterion_07_synchronous_exact_rate():
    t0 = time.perf_counter()
    model, _ = builtin_model("mean_field_ou", dim=1, L1=0.0)  # L2 = 0, kappa = -1
    n = 256
    ce = CoupledEnsemble(
        ParticleEnsemble(np.full((n, 1), -2.0), model, stream=0),
        ParticleEnsemble(np.full((n, 1), 2.0), model, stream=1),
        delta=0.5, mode="synchronous", stream=0,
    )
    snaps = run_coupled(ce, StepPlan(h=0.01, steps=800, stride=40, seed=707),
                        diagnostics_at_records=False)
    times = np.array([s.X.time for s in snaps])
    mean_r = np.array([np.linalg.norm(s.X.states - s.Y.states, axis=1).mean() for s in snaps])
    fit = fit_rate(times, mean_r)
    elapsed = time.perf_counter() - t0
    assert abs(fit.rate + 1.0) <= 0.02
    _ok(7, elapsed, 30.0, f"pairwise log-distance slope {fit.rate:.5f} within -1 +/- 0.02")


# ---------------------------------------------------------------------------
# 8. Ergodicity: stationary moments
# ---------------------------------------------------------------------------


def test_criterion_08_ergodicity(ergodic_run):
    res, elapsed = ergodic_run
    mean_norm = float(np.linalg.norm(res.terminal_mean))
    assert mean_norm <= 3.0 * res.terminal_mean_stderr
    assert abs(res.terminal_var - 0.5) <= 0.05 * 0.5
    assert res.moments_match
    _ok(8, elapsed, 180.0,
        f"terminal mean {mean_norm:.4f} (3se={3*res.terminal_mean_stderr:.4f}), "
        f"variance {res.terminal_var:.4f} in 0.5 +/- 5%")


# ---------------------------------------------------------------------------
# 9. Propagation of chaos
# ---------------------------------------------------------------------------


def test_criterion_09_chaos(chaos_run):
    res, elapsed = chaos_run
    assert res.slope <= -0.2
    assert np.all(res.wrho_mean <= res.bound + 1e-12)
    assert np.isfinite(res.fit_C)
    _ok(9, elapsed, 600.0,
        f"log-log slope {res.slope:.3f} <= -0.2 over n={[int(v) for v in res.n_grid]}, "
        f"dominance closed with fitted C={res.fit_C:.3f}")


# ---------------------------------------------------------------------------
# 10. Moment boundedness
# ---------------------------------------------------------------------------


def test_criterion_10_moment_bound(moment_run):
    res, elapsed = moment_run
    target = np.sqrt(1.0 / np.pi)
    assert abs(res.sup_mean_abs - target) <= 0.05 * target
    assert res.below_ceiling
    assert res.sup_mean_abs < res.ceiling
    _ok(10, elapsed, 120.0,
        f"sup E|X_t| = {res.sup_mean_abs:.4f} (target {target:.4f} +/- 5%), "
        f"ceiling {res.ceiling:.4f}")


# ---------------------------------------------------------------------------
# 11. Determinism of criteria 6-10
# ---------------------------------------------------------------------------


def test_criterion_11_determinism(
    tmp_path, contraction_run, ergodic_run, chaos_run, moment_run
):
    t0 = time.perf_counter()
    firsts = {
        "contract": contraction_run[0],
        "ergodic": ergodic_run[0],
        "chaos": chaos_run[0],
        "moments": moment_run[0],
    }
    seconds = {
        "contract": run_contraction(CONTRACTION_CFG),
        "ergodic": run_ergodicity(ERGODIC_CFG),
        "chaos": run_chaos(CHAOS_CFG, CHAOS_GRID),
        "moments": run_moment_bound(MOMENT_CFG),
    }
    for name in firsts:
        p1 = tmp_path / f"{name}_a.csv"
        p2 = tmp_path / f"{name}_b.csv"
        firsts[name].write_csv(p1)
        seconds[name].write_csv(p2)
        assert p1.read_bytes() == p2.read_bytes(), f"{name} output not bitwise identical"

    # the synchronous-rate run of criterion 7, repeated
    def sync_csv(path):
        model, _ = builtin_model("mean_field_ou", dim=1, L1=0.0)
        ce = CoupledEnsemble(
            ParticleEnsemble(np.full((64, 1), -2.0), model, stream=0),
            ParticleEnsemble(np.full((64, 1), 2.0), model, stream=1),
            delta=0.5, mode="synchronous", stream=0,
        )
        snaps = run_coupled(ce, StepPlan(h=0.01, steps=200, stride=20, seed=711),
                            diagnostics_at_records=False)
        with open(path, "w", encoding="utf-8") as fh:
            for s in snaps:
                fh.write(",".join(repr(float(v)) for v in s.X.states[:, 0]) + "\n")

    pa, pb = tmp_path / "sync_a.csv", tmp_path / "sync_b.csv"
    sync_csv(pa)
    sync_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()
    elapsed = time.perf_counter() - t0
    _ok(11, elapsed, 900.0, "criteria 6-10 reruns produced bitwise-identical CSV output")
