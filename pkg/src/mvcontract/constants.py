"""Explicit contraction constants and the metrics they induce.

Two pipelines, both built from the same ingredients (a clipped profile
kappa*, an exponential weight phi, its primitive Phi, and reciprocal
integrals of Phi/phi):

Pipeline 1 (contractivity at infinity).  With D = 2/Lambda - M and the
noise-perturbation constant A,

    R1 = 1 v inf{R : kappa(r) r < -A for all r >= R},
    R2 = inf{R > R1 : kappa(r) <= -(D^2/(R(R-R1)) + A/R) for all r >= R},
    kappa*(r) = kappa(r) if r kappa(r) >= -A else -A/r,
    phi(r) = exp(-(2/D^2) int_0^r (u kappa*(u) + A) du),  Phi = int phi,
    c = D^2 / (4 int_0^{R2} Phi/phi),
    g(r) = 1 - (2c/D^2) int_0^r Phi/phi,   f(r) = int_0^r phi(s) g(s ^ R2) ds,
    gamma = c - L1 D^2 / (2 phi(R1)),      C = D^2 / (2 phi(R1)),

giving W_rho(mu_t, nu_t) <= e^{-gamma t} W_rho(mu_0, nu_0) with
rho(x, y) = f(|x - y|), and W1 <= C e^{-gamma t} W1.

Pipeline 2 (dissipativity).  With D = 2/Lambda - sqrt(2) M,
Mt = 2M + ||sigma(0)||, kappa*(r) = kappa(r) v A, a Lyapunov constant L for
V(x) = 1 + |x|^2, and radii R3, R4 of the sublevel sets
{V(x)+V(y) <= 2L/lambda} and {<= 8L/lambda},

    h(r) = (2/D^2) int_0^r (s kappa*(s) + A) ds + (8 Mt / D) r,
    phi = e^{-h},  eta^-1 = int_0^{R4} Phi/phi,  xi^-1 = int_0^{R3} Phi/phi,
    g(r) = 1 - (eta/4) int_0^{r^R4} Phi/phi - (xi/4) int_0^{r^R3} Phi/phi,
    f(r) = int_0^{r^R4} phi g,   eps = xi D^2 / (16 L),
    c = (1/2) min{lambda/2, eta D^2 / 8},

giving the local contraction in the semi-metric
rho_1(x, y) = f(|x-y|)(1 + eps V(x) + eps V(y)), with threshold constants
K1, K3, K4, K5 and the admissible-L1 bounds L1* and L1**.

The Phi/phi integrands grow like e^h, so those integrals are evaluated in
log space; eta and xi are reported together with their logs since the linear
values can underflow for strongly dissipative models.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize

from .model import AssumptionBundle, CoefficientModel, MeasureSummary
from .numerics import (
    TabulatedConcave,
    cumulative_simpson_grid,
    cumulative_simpson_log_grid,
    monotone_threshold,
    sign_change_roots,
)

__all__ = [
    "AEstimate",
    "estimate_A",
    "kappa_star_p1",
    "kappa_star_p2",
    "compute_R1",
    "compute_R2",
    "compute_L",
    "compute_R3_R4",
    "Pipeline1Report",
    "Pipeline2Report",
    "MetricEvaluator",
    "build_pipeline1",
    "build_pipeline2",
    "report_json",
    "write_table_csv",
]

DEFAULT_QUAD_TOL = 1e-10
DEFAULT_NODES = 4096
_XTOL = 1e-8


# ---------------------------------------------------------------------------
# The noise-perturbation constant A
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AEstimate:
    value: float
    strategy: str
    argmax_x: Optional[np.ndarray] = None
    argmax_y: Optional[np.ndarray] = None
    n_samples: int = 0


def _a_objective_batch(sx, sy, z):
    d = sx.shape[-1]
    delta = sx - sy
    r = np.linalg.norm(z, axis=-1)
    spec = np.linalg.svd(delta, compute_uv=False)[..., 0]
    # (Delta^T z)_j = sum_i Delta_ij z_i
    dtz = np.einsum("nij,ni->nj", delta, z)
    num = d * spec**2 * r**2 - np.sum(dtz**2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = num / r**3
    vals[~np.isfinite(vals)] = -np.inf
    return vals


def estimate_A(
    model: CoefficientModel,
    *,
    override: Optional[float] = None,
    n_samples: int = 1_000_000,
    seed: int = 0,
    r_max: float = 100.0,
    base_scale: float = 5.0,
    polish: bool = True,
) -> AEstimate:
    """Bound the diffusion-difference perturbation constant

        A = sup_{x != y} (d ||sigma(x)-sigma(y)||^2 |x-y|^2
                          - |(sigma(x)-sigma(y))^T (x-y)|^2) / |x-y|^3.

    Constant sigma and d = 1 are exact zeros.  Otherwise the sup is sampled
    over pairs (x, x + r u) with base points x ~ N(0, base_scale^2 I),
    uniform directions u, and radii log-spaced in [1e-4, r_max], then
    polished by Nelder-Mead around the best sample; chunked counter-based
    seeding makes the result deterministic for a fixed seed at any worker
    count.
    """
    if override is not None:
        return AEstimate(max(0.0, float(override)), "analytic_override")
    if model.diffusion_constant is not None:
        return AEstimate(0.0, "exact_constant_sigma")
    if model.dim == 1:
        # d ||Delta||^2 z^2 == |Delta z|^2 identically in one dimension
        return AEstimate(0.0, "exact_one_dimensional")

    d = model.dim
    best_val, best_x, best_y = -np.inf, None, None
    chunk = 8192
    n_chunks = (n_samples + chunk - 1) // chunk
    for ci in range(n_chunks):
        n = min(chunk, n_samples - ci * chunk)
        bg = np.random.Philox(
            key=np.array([seed, 0x41], dtype=np.uint64),
            counter=np.array([0, 0, 0, ci], dtype=np.uint64),
        )
        rng = np.random.Generator(bg)
        x = base_scale * rng.standard_normal((n, d))
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        radii = np.exp(rng.uniform(np.log(1e-4), np.log(r_max), size=n))
        y = x + radii[:, None] * u
        sx = model.diffusion_many(x)
        sy = model.diffusion_many(y)
        if not (np.all(np.isfinite(sx)) and np.all(np.isfinite(sy))):
            raise ValueError("diffusion returned non-finite values while sampling A")
        vals = _a_objective_batch(sx, sy, x - y)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_x, best_y = float(vals[i]), x[i].copy(), y[i].copy()

    if polish and best_x is not None:
        def neg(p):
            xx, yy = p[:d], p[d:]
            z = xx - yy
            if np.linalg.norm(z) < 1e-9:
                return np.inf
            sx = np.asarray(model.diffusion(xx), dtype=float)[None]
            sy = np.asarray(model.diffusion(yy), dtype=float)[None]
            return -float(_a_objective_batch(sx, sy, z[None])[0])

        res = minimize(neg, np.concatenate([best_x, best_y]), method="Nelder-Mead",
                       options={"maxiter": 400 * d, "xatol": 1e-10, "fatol": 1e-12})
        if -res.fun > best_val:
            best_val = -float(res.fun)
            best_x, best_y = res.x[:d].copy(), res.x[d:].copy()

    return AEstimate(max(0.0, best_val), "sampled_sup", best_x, best_y, n_samples)


# ---------------------------------------------------------------------------
# Clipped profiles and threshold radii
# ---------------------------------------------------------------------------


def kappa_star_p1(r, kappa: Callable, A: float):
    """First-pipeline clipped profile: kappa(r) where r kappa(r) >= -A, else -A/r."""
    r = np.asarray(r, dtype=float)
    k = np.asarray(kappa(r), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        clipped = np.where(r > 0.0, -A / np.where(r > 0.0, r, 1.0), k)
    out = np.where(r * k >= -A, k, clipped)
    return out if out.ndim else float(out)


def kappa_star_p2(r, kappa: Callable, A: float):
    """Second-pipeline clipped profile: kappa(r) v A."""
    out = np.maximum(np.asarray(kappa(np.asarray(r, dtype=float)), dtype=float), A)
    return out if out.ndim else float(out)


def _require_tail(kappa, tail_negative, what):
    declared = tail_negative
    if declared is None:
        declared = getattr(kappa, "tail_negative", False)
    if not declared:
        raise ValueError(f"{what} undetermined: negative kappa tail not declared")


def _holds_beyond(cond_vec, R, scan_max, n=4096) -> bool:
    rs = np.linspace(R, scan_max, n)
    return bool(np.all(cond_vec(rs)))


def compute_R1(
    kappa: Callable,
    A: float,
    scan_max: float = 100.0,
    tail_negative: Optional[bool] = None,
    xtol: float = _XTOL,
) -> float:
    """1 v inf{R >= 0 : kappa(r) r < -A for all r >= R}.

    The condition is checked on a dense sample of [R, scan_max] and refined
    by bisection; beyond scan_max it is certified by the declared negative
    tail of kappa.
    """
    _require_tail(kappa, tail_negative, "R1")

    def pred(R):
        return _holds_beyond(lambda rs: np.asarray(kappa(rs)) * rs < -A, R, scan_max)

    if not pred(scan_max):
        raise ValueError("R1 undetermined: condition never satisfied up to scan_max")
    return max(1.0, monotone_threshold(pred, 0.0, scan_max, xtol))


def compute_R2(
    kappa: Callable,
    A: float,
    D: float,
    R1: float,
    scan_max: Optional[float] = None,
    tail_negative: Optional[bool] = None,
    xtol: float = _XTOL,
) -> float:
    """inf{R > R1 : kappa(r) <= -(D^2/(R(R-R1)) + A/R) for all r >= R}."""
    _require_tail(kappa, tail_negative, "R2")
    if scan_max is None:
        scan_max = 10.0 * max(R1, 1.0) + 100.0

    def pred(R):
        bound = -(D**2 / (R * (R - R1)) + A / R)
        return _holds_beyond(lambda rs: np.asarray(kappa(rs)) <= bound, R, scan_max)

    lo = R1 * (1.0 + 1e-12) + 1e-300
    if not pred(scan_max):
        raise ValueError("R2 undetermined: condition never satisfied up to scan_max")
    return monotone_threshold(pred, lo, scan_max, xtol)


def compute_L(model: CoefficientModel, assumptions: AssumptionBundle) -> float:
    """Lyapunov constant for V(x) = 1 + |x|^2 under dissipativity:

        L = K0 + kappa_R R^2 + R |b(0, delta_0)| + 2 lambda R^2 + lambda,

    with K0 = sup tr(sigma sigma^T) and kappa_R = sup_{[0,R]} |kappa|.
    """
    if assumptions.lambda_diss is None:
        raise ValueError("compute_L needs the dissipativity constants (lambda, L4, R)")
    lam, _, R = assumptions.lambda_diss
    kappa_R = assumptions.kappa.sup_abs(R)
    zero = np.zeros(model.dim)
    b0 = np.asarray(
        model.drift(zero, MeasureSummary.point_mass(zero, model.measure_features)),
        dtype=float,
    )
    return (
        assumptions.sigma_trace_sup
        + kappa_R * R**2
        + R * float(np.linalg.norm(b0))
        + 2.0 * lam * R**2
        + lam
    )


def compute_R3_R4(L: float, lam: float) -> tuple[float, float]:
    """Diameters of the sublevel sets {V(x)+V(y) <= 2L/lambda} and {<= 8L/lambda}.

    With V = 1 + |x|^2 the maximal |x-y| on {|x|^2+|y|^2 <= s} is sqrt(2s)
    (attained at y = -x), so both radii are closed-form.
    """
    s3 = 2.0 * L / lam
    if s3 < 2.0:
        raise ValueError("S3 is empty: need 2L/lambda >= 2")
    R3 = float(np.sqrt(2.0 * (s3 - 2.0)))
    R4 = float(np.sqrt(2.0 * (4.0 * s3 - 2.0)))
    return R3, R4


# ---------------------------------------------------------------------------
# Metric evaluators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricEvaluator:
    """rho(x,y) = f(|x-y|), or the semi-metric
    rho_1(x,y) = f(|x-y|)(1 + eps V(x) + eps V(y)) with V = 1 + |x|^2.

    rho inherits symmetry and the triangle inequality from concavity of f
    with f(0) = 0; rho_1 is symmetric and vanishes on the diagonal only.
    """

    kind: str  # "rho" | "rho1"
    f: TabulatedConcave
    epsilon: float = 0.0

    def __call__(self, x, y) -> float:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        base = float(self.f(np.linalg.norm(x - y)))
        if self.kind == "rho":
            return base
        vx = 1.0 + float(np.dot(x, x))
        vy = 1.0 + float(np.dot(y, y))
        return base * (1.0 + self.epsilon * vx + self.epsilon * vy)

    def cost_matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        Y = np.atleast_2d(Y)
        dist = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
        base = self.f(dist)
        if self.kind == "rho":
            return base
        vx = 1.0 + np.sum(X * X, axis=1)
        vy = 1.0 + np.sum(Y * Y, axis=1)
        return base * (1.0 + self.epsilon * (vx[:, None] + vy[None, :]))


# ---------------------------------------------------------------------------
# Tabulation machinery shared by both pipelines
# ---------------------------------------------------------------------------


def _node_grid(r_end: float, anchors, n_nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Dense grid on [0, r_end] with anchors included exactly and a small
    geometric cluster around each (kinks of the integrands live there)."""
    pieces = [np.linspace(0.0, r_end, n_nodes)]
    for anchor in anchors:
        if not (0.0 < anchor < r_end):
            continue
        offsets = anchor + r_end * np.array([-1e-6, -1e-9, 0.0, 1e-9, 1e-6])
        pieces.append(offsets[(offsets > 0.0) & (offsets < r_end)])
        pieces.append(np.array([anchor]))
    grid = np.unique(np.concatenate(pieces))
    return grid


@dataclass(frozen=True)
class _Tabulation:
    grid: np.ndarray
    exponent: np.ndarray  # h(r); phi = exp(-h)
    phi: np.ndarray
    Phi: np.ndarray
    logJ: np.ndarray  # log int_0^r Phi/phi

    def logJ_at(self, r: float) -> float:
        i = int(np.searchsorted(self.grid, r))
        if i < len(self.grid) and self.grid[i] == r:
            return float(self.logJ[i])
        raise KeyError(f"{r} is not a tabulation node")


def _tabulate(exponent_rate, grid: np.ndarray, quad_tol: float) -> _Tabulation:
    """Integrate the exponent, the weight phi = e^{-exponent}, its primitive
    Phi, and log of int Phi/phi on the node grid."""
    expo = cumulative_simpson_grid(exponent_rate, grid, quad_tol)
    e_interp = PchipInterpolator(grid, expo)
    phi_fn = lambda s: np.exp(-e_interp(s))
    Phi = cumulative_simpson_grid(phi_fn, grid, quad_tol)
    Phi_interp = PchipInterpolator(grid, Phi)

    def w(s):
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(Phi_interp(s), 0.0)) + e_interp(s)

    logJ = cumulative_simpson_log_grid(w, grid, quad_tol)
    return _Tabulation(grid, expo, np.exp(-expo), Phi, logJ)


def _tabulate_f(tab: _Tabulation, g_nodes: np.ndarray, quad_tol: float, tail_slope: float):
    g_interp = PchipInterpolator(tab.grid, g_nodes)
    e_interp = PchipInterpolator(tab.grid, tab.exponent)
    f_nodes = cumulative_simpson_grid(
        lambda s: np.exp(-e_interp(s)) * g_interp(s), tab.grid, quad_tol
    )
    f_prime = tab.phi * g_nodes
    metric_f = TabulatedConcave(
        grid=tab.grid,
        values=f_nodes,
        derivs=f_prime,
        cutoff=float(tab.grid[-1]),
        tail_slope=tail_slope,
    )
    return f_nodes, f_prime, metric_f


# ---------------------------------------------------------------------------
# Pipeline 1
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pipeline1Report:
    """Constants of the contractivity-at-infinity pipeline.

    ``gamma`` may come out nonpositive (the bound is then vacuous); it is
    reported and flagged, never rejected.
    """

    A: AEstimate
    D: float
    R1: float
    R2: float
    c: float
    gamma: float
    C: float
    phi_R1: float
    grid: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    g: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    f_metric: TabulatedConcave
    quad_tol: float

    @property
    def contractive(self) -> bool:
        return self.gamma > 0.0

    def rho(self) -> MetricEvaluator:
        return MetricEvaluator("rho", self.f_metric)


def build_pipeline1(
    model: CoefficientModel,
    assumptions: AssumptionBundle,
    quad_tol: float = DEFAULT_QUAD_TOL,
    A: Optional[float] = None,
    scan_max: Optional[float] = None,
    n_nodes: int = DEFAULT_NODES,
    a_samples: int = 1_000_000,
    seed: int = 0,
) -> Pipeline1Report:
    """Compute every constant of the first contraction theorem and tabulate
    phi, Phi, g, f on an anchored dense grid."""
    D = assumptions.D1
    if D <= 0:
        raise ValueError("pipeline 1 needs D = 2/Lambda - M > 0")
    kappa = assumptions.kappa
    a_est = estimate_A(model, override=A, n_samples=a_samples, seed=seed)
    Aval = a_est.value

    R1 = compute_R1(kappa, Aval, scan_max=scan_max or 100.0)
    R2 = compute_R2(kappa, Aval, D, R1, scan_max=scan_max)

    # kinks of u kappa*(u) + A: where r kappa(r) + A changes sign
    kinks = sign_change_roots(
        lambda r: np.asarray(kappa(r)) * r + Aval, 0.0, R2, n=2048
    )
    grid = _node_grid(R2, [R1] + kinks, n_nodes)

    rate = lambda u: (2.0 / D**2) * (u * kappa_star_p1(u, kappa, Aval) + Aval)
    tab = _tabulate(rate, grid, quad_tol)

    logJ_end = tab.logJ[-1]
    c = float(np.exp(np.log(D**2 / 4.0) - logJ_end))
    with np.errstate(invalid="ignore"):
        g_nodes = 1.0 - 0.5 * np.exp(tab.logJ - logJ_end)
    g_nodes[0] = 1.0

    i_R1 = int(np.searchsorted(grid, R1))
    phi_R1 = float(tab.phi[i_R1])
    gamma = c - assumptions.L1 * D**2 / (2.0 * phi_R1)
    C = D**2 / (2.0 * phi_R1)

    tail_slope = phi_R1 * float(g_nodes[-1])
    f_nodes, f_prime, metric_f = _tabulate_f(tab, g_nodes, quad_tol, tail_slope)

    return Pipeline1Report(
        A=a_est, D=D, R1=R1, R2=R2, c=c, gamma=gamma, C=C, phi_R1=phi_R1,
        grid=grid, phi=tab.phi, Phi=tab.Phi, g=g_nodes, f=f_nodes,
        f_prime=f_prime, f_metric=metric_f, quad_tol=quad_tol,
    )


# ---------------------------------------------------------------------------
# Pipeline 2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pipeline2Report:
    """Constants of the dissipativity pipeline.

    eta and xi can underflow to zero in linear scale for strongly
    dissipative models (their reciprocals are integrals of e^h); log_eta and
    log_xi stay finite and are the authoritative values.
    """

    A: AEstimate
    D: float
    M_tilde: float
    L: float
    lam: float
    R3: float
    R4: float
    eta: float
    xi: float
    log_eta: float
    log_xi: float
    epsilon: float
    c: float
    K1: float
    K3: float
    K4: float
    K5: float
    L1_star: float
    L1_star_star: float
    L1: float
    initial_moment_cap: float
    grid: np.ndarray
    h: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    g: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    f_metric: TabulatedConcave
    quad_tol: float

    @property
    def locally_contractive(self) -> bool:
        """L1 below the initial-law-dependent threshold L1*."""
        return self.L1 < self.L1_star

    @property
    def globally_contractive(self) -> bool:
        """L1 below the initial-law-free threshold L1**."""
        return self.L1 < self.L1_star_star

    def rho(self) -> MetricEvaluator:
        return MetricEvaluator("rho", self.f_metric)

    def rho1(self) -> MetricEvaluator:
        return MetricEvaluator("rho1", self.f_metric, epsilon=self.epsilon)


def build_pipeline2(
    model: CoefficientModel,
    assumptions: AssumptionBundle,
    quad_tol: float = DEFAULT_QUAD_TOL,
    initial_moment_cap: float = 1.0,
    A: Optional[float] = None,
    n_nodes: int = DEFAULT_NODES,
    a_samples: int = 1_000_000,
    seed: int = 0,
) -> Pipeline2Report:
    """Compute every constant of the dissipative contraction theorem.

    ``initial_moment_cap`` is the cap K on the V-moments of admissible
    initial laws, entering K5 = 2 eps K and the threshold L1*.
    """
    if assumptions.lambda_diss is None:
        raise ValueError("pipeline 2 needs the dissipativity constants (lambda, L4, R)")
    lam, L4, _ = assumptions.lambda_diss
    D = assumptions.D2
    if D <= 0:
        raise ValueError("pipeline 2 needs D = 2/Lambda - sqrt(2) M > 0")
    if not (L4 <= assumptions.L1 <= lam / 2.0):
        raise ValueError("pipeline 2 needs L4 <= L1 <= lambda/2")

    kappa = assumptions.kappa
    a_est = estimate_A(model, override=A, n_samples=a_samples, seed=seed)
    Aval = a_est.value
    M_tilde = assumptions.M_tilde
    L = compute_L(model, assumptions)
    R3, R4 = compute_R3_R4(L, lam)

    kinks = sign_change_roots(lambda r: np.asarray(kappa(r)) - Aval, 0.0, R4, n=2048)
    grid = _node_grid(R4, [R3] + kinks, n_nodes)

    rate = lambda u: (2.0 / D**2) * (u * kappa_star_p2(u, kappa, Aval) + Aval) + 8.0 * M_tilde / D
    tab = _tabulate(rate, grid, quad_tol)

    logJ4 = tab.logJ[-1]
    logJ3 = tab.logJ_at(R3)
    eta = float(np.exp(-logJ4))
    xi = float(np.exp(-logJ3))
    with np.errstate(invalid="ignore"):
        g_nodes = (
            1.0
            - 0.25 * np.exp(np.minimum(tab.logJ, logJ4) - logJ4)
            - 0.25 * np.exp(np.minimum(tab.logJ, logJ3) - logJ3)
        )
    g_nodes[0] = 1.0

    f_nodes, f_prime, metric_f = _tabulate_f(tab, g_nodes, quad_tol, tail_slope=0.0)
    f_R4 = float(f_nodes[-1])

    epsilon = xi * D**2 / (16.0 * L)
    c = 0.5 * min(lam / 2.0, eta * D**2 / 8.0)
    with np.errstate(over="ignore", divide="ignore"):
        phi_R4 = float(np.exp(-tab.exponent[-1]))
        K1 = max(
            2.0 / phi_R4 if phi_R4 > 0 else np.inf,
            1.0 / (2.0 * epsilon * f_R4) if epsilon > 0 and f_R4 > 0 else np.inf,
        )
        K3 = assumptions.L1 * K1 + 2.0 * assumptions.L1 / epsilon if epsilon > 0 else np.inf
        K4 = 1.0 + 2.0 * L * epsilon / lam
        K5 = 2.0 * epsilon * initial_moment_cap
        denom = K1 + (2.0 / epsilon if epsilon > 0 else np.inf)
        L1_star = c / (denom * (K4 + K5)) if np.isfinite(denom) else 0.0
        L1_star_star = c / (denom * K4) if np.isfinite(denom) else 0.0

    return Pipeline2Report(
        A=a_est, D=D, M_tilde=M_tilde, L=L, lam=lam, R3=R3, R4=R4,
        eta=eta, xi=xi, log_eta=float(-logJ4), log_xi=float(-logJ3),
        epsilon=epsilon, c=c, K1=K1, K3=K3, K4=K4, K5=K5,
        L1_star=float(L1_star), L1_star_star=float(L1_star_star),
        L1=assumptions.L1, initial_moment_cap=initial_moment_cap,
        grid=grid, h=tab.exponent, phi=tab.phi, Phi=tab.Phi, g=g_nodes,
        f=f_nodes, f_prime=f_prime, f_metric=metric_f, quad_tol=quad_tol,
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def report_json(report) -> str:
    """Scalar constants of a pipeline report as a JSON document."""
    if isinstance(report, Pipeline1Report):
        payload = {
            "pipeline": 1,
            "A": report.A.value,
            "A_strategy": report.A.strategy,
            "D": report.D,
            "R1": report.R1,
            "R2": report.R2,
            "c": report.c,
            "gamma": report.gamma,
            "C": report.C,
            "phi_R1": report.phi_R1,
            "contractive": report.contractive,
            "quad_tol": report.quad_tol,
        }
    elif isinstance(report, Pipeline2Report):
        payload = {
            "pipeline": 2,
            "A": report.A.value,
            "A_strategy": report.A.strategy,
            "D": report.D,
            "M_tilde": report.M_tilde,
            "L": report.L,
            "lambda": report.lam,
            "R3": report.R3,
            "R4": report.R4,
            "eta": report.eta,
            "xi": report.xi,
            "log_eta": report.log_eta,
            "log_xi": report.log_xi,
            "epsilon": report.epsilon,
            "c": report.c,
            "K1": report.K1,
            "K3": report.K3,
            "K4": report.K4,
            "K5": report.K5,
            "L1_star": report.L1_star,
            "L1_star_star": report.L1_star_star,
            "L1": report.L1,
            "initial_moment_cap": report.initial_moment_cap,
            "locally_contractive": report.locally_contractive,
            "globally_contractive": report.globally_contractive,
            "quad_tol": report.quad_tol,
        }
    else:
        raise TypeError("expected a pipeline report")
    return json.dumps(payload, indent=2, allow_nan=True)


def write_table_csv(report, path) -> None:
    """Tabulated (r, phi, Phi, g, f, f') columns of a pipeline report."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "phi", "Phi", "g", "f", "f_prime"])
        for row in zip(report.grid, report.phi, report.Phi, report.g, report.f, report.f_prime):
            writer.writerow([repr(float(v)) for v in row])
