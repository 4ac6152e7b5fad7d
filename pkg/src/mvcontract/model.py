"""Coefficient models for mean-field SDEs and their assumption bundles.

A model is the pair (drift b(x, mu), diffusion sigma(x)) for

    dX_t = b(X_t, mu_t) dt + sigma(X_t) dW_t,      mu_t = law(X_t),

where the drift reads the law only through declared summaries (mean, first
absolute moment, or the full point cloud).  The assumption bundle carries the
constants under which the contraction machinery is valid:

* a continuous bounded kappa with
  <x-y, b(x,mu)-b(y,nu)> <= kappa(|x-y|)|x-y|^2 + L1 * W1(mu,nu) * |x-y|,
* ||sigma(x)-sigma(y)||^2 <= L2 |x-y|^2 and ||sigma(x)-sigma(y)|| <= M,
* ||sigma(x)^-1|| <= Lambda with D1 = 2/Lambda - M > 0,
* |b(0,mu)| <= L3 (1 + mu(|.|)),
* optionally a dissipativity triple (lambda, L4, R) with
  <x, b(x,mu)> <= -lambda |x|^2 + L4 |x| mu(|.|) for |x| >= R,
* optionally a tail declaration (R0, K) with L1 + kappa(r) <= -K for r > R0.

None of this is proved symbolically; ``validate_bundle`` spot-checks every
inequality on randomized probes and reports the worst observed margin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .transport import EmpiricalMeasure, w1

__all__ = [
    "MeasureFeatures",
    "MeasureSummary",
    "KappaProfile",
    "CoefficientModel",
    "AssumptionBundle",
    "ProbePlan",
    "CheckResult",
    "ValidationReport",
    "ModelEvaluationError",
    "validate_bundle",
    "builtin_model",
    "load_model_config",
    "BUILTIN_MODELS",
]


class ModelEvaluationError(RuntimeError):
    """A coefficient evaluator produced a non-finite value."""


@dataclass(frozen=True)
class MeasureFeatures:
    """Which summaries of the measure argument the drift actually reads."""

    mean: bool = False
    abs_moment: bool = False
    points: bool = False


@dataclass(frozen=True)
class MeasureSummary:
    """Summaries of a probability measure handed to the drift.

    Only the fields declared in the model's ``measure_features`` are
    guaranteed to be populated; the rest may be ``None``.
    """

    mean: Optional[np.ndarray] = None
    abs_moment: Optional[float] = None
    points: Optional[np.ndarray] = None

    @staticmethod
    def from_points(points: np.ndarray, features: MeasureFeatures) -> "MeasureSummary":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mean = points.mean(axis=0) if features.mean else None
        abs_moment = (
            float(np.linalg.norm(points, axis=1).mean()) if features.abs_moment else None
        )
        return MeasureSummary(
            mean=mean,
            abs_moment=abs_moment,
            points=points if features.points else None,
        )

    @staticmethod
    def point_mass(x: np.ndarray, features: MeasureFeatures) -> "MeasureSummary":
        return MeasureSummary.from_points(np.atleast_2d(np.asarray(x, dtype=float)), features)


@dataclass(frozen=True)
class KappaProfile:
    """The one-sided Lipschitz profile kappa, clipped below at ``-kappa_max``.

    ``tail_negative`` declares the sign of ``limsup kappa(r)`` as r grows,
    which certifies tail conditions beyond any finite numeric scan.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    kappa_max: float
    tail_negative: bool = False

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.maximum(np.asarray(self.fn(r), dtype=float), -self.kappa_max)
        return out if out.ndim else float(out)

    def sup_abs(self, r: float, n: int = 4097) -> float:
        """sup of |kappa| over [0, r], sampled on a dense grid."""
        if r <= 0.0:
            return abs(self(0.0))
        return float(np.max(np.abs(self(np.linspace(0.0, r, n)))))


@dataclass(frozen=True)
class CoefficientModel:
    """Drift/diffusion evaluators plus optional vectorized fast paths.

    ``drift`` and ``diffusion`` are the single-point contract; the ``*_batch``
    callables (state arrays of shape (N, d)) exist so particle loops do not
    pay one Python call per particle, and fall back to loops when absent.
    ``diffusion_constant`` short-circuits everything when sigma does not
    depend on the state.
    """

    dim: int
    drift: Callable[[np.ndarray, MeasureSummary], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    measure_features: MeasureFeatures = field(default_factory=MeasureFeatures)
    diffusion_inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    drift_batch: Optional[Callable[[np.ndarray, MeasureSummary], np.ndarray]] = None
    diffusion_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    diffusion_constant: Optional[np.ndarray] = None
    label: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")

    def summarize(self, points: np.ndarray) -> MeasureSummary:
        return MeasureSummary.from_points(points, self.measure_features)

    def drift_many(self, states: np.ndarray, summary: MeasureSummary) -> np.ndarray:
        if self.drift_batch is not None:
            return self.drift_batch(states, summary)
        return np.stack([np.asarray(self.drift(x, summary), dtype=float) for x in states])

    def diffusion_many(self, states: np.ndarray) -> np.ndarray:
        if self.diffusion_constant is not None:
            return np.broadcast_to(
                self.diffusion_constant, (len(states), self.dim, self.dim)
            )
        if self.diffusion_batch is not None:
            return self.diffusion_batch(states)
        return np.stack([np.asarray(self.diffusion(x), dtype=float) for x in states])

    def diffusion_inverse_at(self, x: np.ndarray) -> np.ndarray:
        if self.diffusion_inverse is not None:
            return np.asarray(self.diffusion_inverse(x), dtype=float)
        return np.linalg.inv(np.asarray(self.diffusion(x), dtype=float))

    def diffusion_inverse_many(self, states: np.ndarray) -> np.ndarray:
        if self.diffusion_constant is not None:
            inv = np.linalg.inv(self.diffusion_constant)
            return np.broadcast_to(inv, (len(states), self.dim, self.dim))
        if self.diffusion_inverse is not None:
            return np.stack([np.asarray(self.diffusion_inverse(x), dtype=float) for x in states])
        return np.linalg.inv(self.diffusion_many(states))


@dataclass(frozen=True)
class AssumptionBundle:
    """All constants of the standing assumptions, plus optional extras.

    ``sigma_trace_sup`` is the user-supplied K0 = sup_x tr(sigma sigma^T); it
    cannot be derived from the Lipschitz constants alone yet the Lyapunov
    constant needs it, so it is an explicit input.  ``lambda_diss`` is the
    dissipativity triple (lambda, L4, R) and is required only by the second
    pipeline.  ``kappa_tail_negative`` is the (R0, K) pair certifying
    L1 + kappa(r) <= -K for r > R0 (moment-boundedness hypothesis).
    """

    kappa: KappaProfile
    L1: float
    L2: float
    L3: float
    M: float
    Lambda: float
    sigma_trace_sup: float
    sigma_at_zero_norm: float
    lambda_diss: Optional[tuple[float, float, float]] = None  # (lambda, L4, R)
    kappa_tail_negative: Optional[tuple[float, float]] = None  # (R0, K)

    def __post_init__(self):
        if self.Lambda <= 0 or self.L3 <= 0:
            raise ValueError("Lambda and L3 must be positive")
        if min(self.L1, self.L2, self.M, self.sigma_trace_sup) < 0:
            raise ValueError("L1, L2, M, sigma_trace_sup must be nonnegative")
        if self.lambda_diss is not None:
            lam, L4, R = self.lambda_diss
            if lam <= 0 or R <= 0 or L4 < 0:
                raise ValueError("dissipativity constants need lambda > 0, R > 0, L4 >= 0")

    @property
    def kappa_bound(self) -> float:
        return self.kappa.kappa_max

    @property
    def D1(self) -> float:
        """2/Lambda - M, the reflected-noise floor of the first pipeline."""
        return 2.0 / self.Lambda - self.M

    @property
    def D2(self) -> float:
        """2/Lambda - sqrt(2) M, the floor used by the second pipeline."""
        return 2.0 / self.Lambda - np.sqrt(2.0) * self.M

    @property
    def M_tilde(self) -> float:
        return 2.0 * self.M + self.sigma_at_zero_norm

    def with_L1(self, L1: float) -> "AssumptionBundle":
        return replace(self, L1=L1)


@dataclass(frozen=True)
class ProbePlan:
    """Randomized spot-check plan: states ~ N(0, scale^2 I), measures are
    empirical laws of ``cloud_size`` such points."""

    n_probes: int = 1000
    seed: int = 0
    state_scale: float = 5.0
    cloud_size: int = 32


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst_margin: float  # max over probes of (LHS - RHS); <= tol passes
    tolerance: float
    passed: bool
    worst_probe: int = -1

    def __str__(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: worst margin {self.worst_margin:.3e}"


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


_VIOLATION_TOL = 1e-9
_INVERSE_TOL = 1e-10


def _require_finite(value, what: str, probe: int):
    if not np.all(np.isfinite(value)):
        raise ModelEvaluationError(f"{what} returned a non-finite value at probe {probe}")


def _spectral_norm(mat: np.ndarray) -> float:
    return float(np.linalg.norm(mat, 2))


def validate_bundle(
    model: CoefficientModel,
    assumptions: AssumptionBundle,
    probes: ProbePlan = ProbePlan(),
) -> ValidationReport:
    """Spot-check every assumption inequality on randomized probes.

    Each check reports the worst observed violation margin (positive means
    the inequality was broken by that amount); margins above 1e-9 fail.
    Non-finite coefficient output is a hard error naming the probe.
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(probes.seed)))
    d = model.dim
    feats = model.measure_features
    all_feats = MeasureFeatures(mean=True, abs_moment=True, points=True)

    def margins():
        return {
            "drift_kappa_L1": (-np.inf, -1),
            "sigma_lipschitz": (-np.inf, -1),
            "drift_growth": (-np.inf, -1),
            "sigma_diff_bound": (-np.inf, -1),
            "sigma_inverse_bound": (-np.inf, -1),
            "sigma_inverse_consistency": (-np.inf, -1),
            "kappa_bounded": (-np.inf, -1),
            "sigma_trace_sup": (-np.inf, -1),
            "sigma_at_zero_norm": (-np.inf, -1),
        }

    worst = margins()
    if assumptions.lambda_diss is not None:
        worst["dissipativity"] = (-np.inf, -1)
    if assumptions.kappa_tail_negative is not None:
        worst["kappa_tail_negative"] = (-np.inf, -1)

    def update(name, margin, i):
        if margin > worst[name][0]:
            worst[name] = (margin, i)

    sigma0 = np.asarray(model.diffusion(np.zeros(d)), dtype=float)
    _require_finite(sigma0, "diffusion", -1)
    update("sigma_at_zero_norm", abs(_spectral_norm(sigma0) - assumptions.sigma_at_zero_norm), -1)

    eye = np.eye(d)
    for i in range(probes.n_probes):
        x = probes.state_scale * rng.standard_normal(d)
        y = probes.state_scale * rng.standard_normal(d)
        cloud_mu = probes.state_scale * rng.standard_normal((probes.cloud_size, d))
        cloud_nu = probes.state_scale * rng.standard_normal((probes.cloud_size, d))
        mu = MeasureSummary.from_points(cloud_mu, all_feats)
        nu = MeasureSummary.from_points(cloud_nu, all_feats)

        bx = np.asarray(model.drift(x, mu), dtype=float)
        by = np.asarray(model.drift(y, nu), dtype=float)
        sx = np.asarray(model.diffusion(x), dtype=float)
        sy = np.asarray(model.diffusion(y), dtype=float)
        _require_finite(bx, "drift", i)
        _require_finite(by, "drift", i)
        _require_finite(sx, "diffusion", i)
        _require_finite(sy, "diffusion", i)

        z = x - y
        r = float(np.linalg.norm(z))
        wass = w1(EmpiricalMeasure(cloud_mu), EmpiricalMeasure(cloud_nu)).value
        lhs = float(np.dot(z, bx - by))
        rhs = assumptions.kappa(r) * r * r + assumptions.L1 * wass * r
        update("drift_kappa_L1", lhs - rhs, i)

        sdiff = _spectral_norm(sx - sy)
        update("sigma_lipschitz", sdiff**2 - assumptions.L2 * r * r, i)
        update("sigma_diff_bound", sdiff - assumptions.M, i)

        b0 = np.asarray(model.drift(np.zeros(d), mu), dtype=float)
        _require_finite(b0, "drift", i)
        update(
            "drift_growth",
            float(np.linalg.norm(b0)) - assumptions.L3 * (1.0 + mu.abs_moment),
            i,
        )

        sx_inv = model.diffusion_inverse_at(x)
        _require_finite(sx_inv, "diffusion_inverse", i)
        update("sigma_inverse_bound", _spectral_norm(sx_inv) - assumptions.Lambda, i)
        update(
            "sigma_inverse_consistency",
            float(np.max(np.abs(sx @ sx_inv - eye))) - _INVERSE_TOL,
            i,
        )

        update("kappa_bounded", abs(assumptions.kappa(r)) - assumptions.kappa_bound, i)
        update("sigma_trace_sup", float(np.trace(sx @ sx.T)) - assumptions.sigma_trace_sup, i)

        if assumptions.lambda_diss is not None:
            lam, L4, R = assumptions.lambda_diss
            # rescale the probe onto {|x| >= R}, where dissipativity applies
            norm_x = float(np.linalg.norm(x))
            xr = x * ((R + abs(rng.standard_normal()) * probes.state_scale) / norm_x) if norm_x > 0 else np.full(d, R / np.sqrt(d))
            bxr = np.asarray(model.drift(xr, mu), dtype=float)
            _require_finite(bxr, "drift", i)
            nx = float(np.linalg.norm(xr))
            update(
                "dissipativity",
                float(np.dot(xr, bxr)) + lam * nx * nx - L4 * nx * mu.abs_moment,
                i,
            )

        if assumptions.kappa_tail_negative is not None:
            R0, K = assumptions.kappa_tail_negative
            rr = R0 + abs(rng.standard_normal()) * 10.0 * max(R0, 1.0)
            update("kappa_tail_negative", assumptions.L1 + assumptions.kappa(rr) + K, i)

    checks = []
    for name, (margin, idx) in worst.items():
        tol = _INVERSE_TOL if name == "sigma_inverse_consistency" else _VIOLATION_TOL
        # the consistency margin already subtracted its tolerance
        threshold = 0.0 if name == "sigma_inverse_consistency" else tol
        checks.append(
            CheckResult(name, float(margin), tol, passed=bool(margin <= threshold), worst_probe=idx)
        )

    # structural constants, independent of probes
    checks.append(
        CheckResult(
            "D1_positive",
            -assumptions.D1,
            0.0,
            passed=bool(assumptions.D1 > 0.0),
        )
    )
    if assumptions.lambda_diss is not None:
        lam, L4, _ = assumptions.lambda_diss
        checks.append(
            CheckResult("D2_positive", -assumptions.D2, 0.0, passed=bool(assumptions.D2 > 0.0))
        )
        ordering_ok = L4 <= assumptions.L1 <= lam / 2.0
        checks.append(
            CheckResult(
                "L4_le_L1_le_half_lambda",
                max(L4 - assumptions.L1, assumptions.L1 - lam / 2.0),
                0.0,
                passed=bool(ordering_ok),
            )
        )
    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------


def _mean_field_ou(dim: int = 1, L1: float = 0.1, R_diss: float = 1.0):
    """Linear attraction to the origin plus L1-weighted attraction to the mean.

    b(x, mu) = -x + L1 * mean(mu), sigma = I.  The profile is kappa = -1
    exactly, and for L1 = 0 the stationary law is N(0, 1/2) per coordinate.
    """
    if L1 < 0 or L1 >= 1.0:
        raise ValueError("mean_field_ou needs 0 <= L1 < 1")
    feats = MeasureFeatures(mean=True)
    eye = np.eye(dim)

    def drift(x, summary):
        return -x + L1 * summary.mean

    model = CoefficientModel(
        dim=dim,
        drift=drift,
        diffusion=lambda x: eye,
        measure_features=feats,
        drift_batch=lambda X, summary: -X + L1 * summary.mean,
        diffusion_constant=eye,
        label="mean_field_ou",
    )
    kappa = KappaProfile(fn=lambda r: np.full_like(np.asarray(r, dtype=float), -1.0), kappa_max=1.0, tail_negative=True)
    bundle = AssumptionBundle(
        kappa=kappa,
        L1=L1,
        L2=0.0,
        L3=max(L1, 1.0),
        M=0.0,
        Lambda=1.0,
        sigma_trace_sup=float(dim),
        sigma_at_zero_norm=1.0,
        lambda_diss=(1.0, L1, R_diss),
        kappa_tail_negative=(1.0, 1.0 - L1),
    )
    return model, bundle


def _double_well_attraction(
    dim: int = 1, L1: float = 0.0, kappa_max: float = 10.0, R_diss: float = 2.0
):
    """Double-well drift x - x|x|^2 with mean attraction.

    <x-y, x|x|^2 - y|y|^2> = (|x|^2+|y|^2)|x-y|^2/2 + (|x|^2-|y|^2)^2/2
    >= |x-y|^4/4, so kappa(r) = 1 - r^2/4 is a valid profile in every
    dimension; it is clipped at -kappa_max to keep it bounded.
    """
    if R_diss <= 1.0:
        raise ValueError("double_well_attraction needs R_diss > 1 for dissipativity")
    feats = MeasureFeatures(mean=True)
    eye = np.eye(dim)

    def drift(x, summary):
        return x - x * float(np.dot(x, x)) + L1 * summary.mean

    def drift_batch(X, summary):
        return X - X * np.sum(X * X, axis=1, keepdims=True) + L1 * summary.mean

    model = CoefficientModel(
        dim=dim,
        drift=drift,
        diffusion=lambda x: eye,
        measure_features=feats,
        drift_batch=drift_batch,
        diffusion_constant=eye,
        label="double_well_attraction",
    )
    kappa = KappaProfile(fn=lambda r: 1.0 - np.asarray(r, dtype=float) ** 2 / 4.0, kappa_max=kappa_max, tail_negative=True)
    lam = R_diss**2 - 1.0
    # clip floor activates at r = 2 sqrt(1+kappa_max); beyond it kappa = -kappa_max
    R0 = 2.0 * np.sqrt(1.0 + kappa_max)
    tail = (R0, kappa_max - L1) if kappa_max > L1 else None
    bundle = AssumptionBundle(
        kappa=kappa,
        L1=L1,
        L2=0.0,
        L3=max(L1, 1.0),
        M=0.0,
        Lambda=1.0,
        sigma_trace_sup=float(dim),
        sigma_at_zero_norm=1.0,
        lambda_diss=(lam, L1, R_diss),
        kappa_tail_negative=tail,
    )
    return model, bundle


def _const_diffusion_custom_kappa(
    dim: int = 1,
    theta: float = 1.0,
    amp: float = 0.0,
    freq: float = 1.0,
    sigma_scale: float = 1.0,
    L1: float = 0.0,
):
    """Constant diffusion s*I with drift -theta x + amp sin(freq x) + L1 mean.

    The bounded perturbation makes kappa genuinely r-dependent:
    kappa(r) = -theta + amp * min(freq, 2 sqrt(d)/r), still with a strictly
    negative tail.  Useful for exercising the pipelines away from the
    constant-kappa fast cases.
    """
    if theta <= 0 or sigma_scale <= 0 or amp < 0 or freq <= 0:
        raise ValueError("need theta > 0, sigma_scale > 0, amp >= 0, freq > 0")
    if L1 >= theta:
        raise ValueError("need L1 < theta for a negative kappa tail")
    feats = MeasureFeatures(mean=True)
    sqd = np.sqrt(float(dim))
    sigma = sigma_scale * np.eye(dim)

    def drift(x, summary):
        return -theta * x + amp * np.sin(freq * x) + L1 * summary.mean

    model = CoefficientModel(
        dim=dim,
        drift=drift,
        diffusion=lambda x: sigma,
        measure_features=feats,
        drift_batch=lambda X, summary: -theta * X + amp * np.sin(freq * X) + L1 * summary.mean,
        diffusion_constant=sigma,
        label="const_diffusion_custom_kappa",
    )

    def kappa_fn(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            ramp = np.where(r > 0.0, np.minimum(freq, 2.0 * sqd / np.where(r > 0, r, 1.0)), freq)
        return -theta + amp * ramp

    kappa = KappaProfile(fn=kappa_fn, kappa_max=theta + amp * freq, tail_negative=True)
    lam = theta / 2.0
    R_diss = max(1.0, 2.0 * amp * sqd / theta) if amp > 0 else 1.0
    R0 = max(1.0, 4.0 * amp * sqd / (theta - L1)) if amp > 0 else 1.0
    bundle = AssumptionBundle(
        kappa=kappa,
        L1=L1,
        L2=0.0,
        L3=max(L1, amp + 1e-12, 1.0),
        M=0.0,
        Lambda=1.0 / sigma_scale,
        sigma_trace_sup=float(dim) * sigma_scale**2,
        sigma_at_zero_norm=sigma_scale,
        lambda_diss=(lam, L1, R_diss),
        kappa_tail_negative=(R0, (theta - L1) / 2.0),
    )
    return model, bundle


BUILTIN_MODELS = {
    "mean_field_ou": _mean_field_ou,
    "double_well_attraction": _double_well_attraction,
    "const_diffusion_custom_kappa": _const_diffusion_custom_kappa,
}


def builtin_model(name: str, **params):
    """Construct a built-in (model, bundle) pair by name.

    Known names: ``mean_field_ou``, ``double_well_attraction``,
    ``const_diffusion_custom_kappa``.
    """
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown built-in model {name!r}; known: {sorted(BUILTIN_MODELS)}") from None
    return factory(**params)


def load_model_config(source) -> tuple[CoefficientModel, AssumptionBundle]:
    """Load a built-in model from a JSON file path, file object, or dict.

    Schema: ``{"name": "<builtin>", "params": {...numeric params...}}``.
    Custom drifts are supplied programmatically, not via config.
    """
    if isinstance(source, dict):
        cfg = source
    elif hasattr(source, "read"):
        cfg = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    return builtin_model(cfg["name"], **cfg.get("params", {}))
