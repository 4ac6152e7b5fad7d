"""Euler-Maruyama stepping for particle systems and coupled pairs.

The interacting particle system advances every particle with its own noise
and the ensemble's empirical measure in the drift.  The coupled stepper
advances two ensembles pairwise under a mixture of synchronous and
reflection coupling: with z = X_i - Y_i, r = |z|, bandwidth delta,

    rc = clamp((r - delta/2)/(delta/2), 0, 1),   sc = sqrt(1 - rc^2),
    u = sigma(Y_i)^-1 z / |sigma(Y_i)^-1 z|,     H = I - 2 u u^T,
    X_i += b(X_i, mu_x) h + sigma(X_i) (sc xi1 + rc xi2),
    Y_i += b(Y_i, mu_y) h + sigma(Y_i) (sc xi1 + rc H xi2),

with rc, sc, H frozen at the step's start state.  Pure synchronous,
pure reflection, and independent-noise modes force (rc, sc) = (0, 1),
(1, 0), and a fresh draw for Y respectively.  Pairs are never merged:
the two marginals follow different dynamics, so distances are measured,
not forced to zero.

Randomness is counter-based (Philox keyed by (seed, stream), counter
(step, slot)), so trajectories are bitwise reproducible at any worker
count and independent of scheduling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .model import CoefficientModel, MeasureSummary

__all__ = [
    "SimulationError",
    "StepPlan",
    "ParticleEnsemble",
    "CouplingDiagnostics",
    "CoupledEnsemble",
    "FrozenLaw",
    "noise_block",
    "transition_rc_sc",
    "reflection_matrix",
    "coupling_deltas",
    "radial_diagnostics",
    "step_particle_system",
    "run_particle_system",
    "step_coupled",
    "run_coupled",
    "lyapunov_trace",
    "LyapunovTrace",
    "write_ledger",
    "read_ledger",
    "write_trajectory_csv",
    "LEDGER_MAGIC",
]

LEDGER_MAGIC = b"MVC1"

# noise slots: 0 = shared/own draw, 1 = reflected draw, 2 = fresh draw
# (independent mode), 10/11 = initial-condition draws for the X/Y systems
SLOT_SHARED = 0
SLOT_REFLECTED = 1
SLOT_FRESH = 2


class SimulationError(RuntimeError):
    """A state became non-finite (explosion guard) or inputs are invalid."""


def noise_block(seed: int, stream: int, step: int, slot: int, n: int, d: int) -> np.ndarray:
    """Standard-normal block keyed by (seed, stream, step, slot).

    Position (i, j) in the block is particle i, coordinate j; the draw for a
    given key and position never depends on scheduling or worker count.
    """
    bg = np.random.Philox(
        key=np.array([seed, stream], dtype=np.uint64),
        counter=np.array([0, 0, step, slot], dtype=np.uint64),
    )
    return np.random.Generator(bg).standard_normal((n, d))


@dataclass(frozen=True)
class StepPlan:
    """Time stepping plan; h * steps is the horizon."""

    h: float
    steps: int
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.h <= 0 or self.steps < 0 or self.stride < 1:
            raise ValueError("need h > 0, steps >= 0, stride >= 1")

    @property
    def horizon(self) -> float:
        return self.h * self.steps


@dataclass(frozen=True)
class ParticleEnsemble:
    """N particle states with a time stamp and an RNG stream identity."""

    states: np.ndarray
    model: CoefficientModel
    time: float = 0.0
    step_index: int = 0
    stream: int = 0

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        object.__setattr__(self, "states", states)
        if states.shape[0] < 1 or states.shape[1] != self.model.dim:
            raise SimulationError("states must be (N, d) with N >= 1 matching the model dim")
        if not np.all(np.isfinite(states)):
            raise SimulationError("initial states must be finite")

    @property
    def n(self) -> int:
        return len(self.states)

    def summary(self) -> MeasureSummary:
        return self.model.summarize(self.states)


@dataclass(frozen=True)
class CouplingDiagnostics:
    """Per-pair radial diagnostics, evaluated at the step-start states."""

    r: np.ndarray
    rc: np.ndarray
    sc: np.ndarray
    drift: Optional[np.ndarray] = None  # nan where r = 0
    var_coeff: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CoupledEnsemble:
    """Paired ensembles advanced under a coupling mode.

    mode is one of mixed | synchronous | reflection | independent; delta is
    the coupling bandwidth in (0, 1).
    """

    X: ParticleEnsemble
    Y: ParticleEnsemble
    delta: float = 1e-3
    mode: str = "mixed"
    stream: int = 0
    diagnostics: Optional[CouplingDiagnostics] = None

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise SimulationError("delta must lie in (0, 1)")
        if self.mode not in ("mixed", "synchronous", "reflection", "independent"):
            raise SimulationError(f"unknown coupling mode {self.mode!r}")
        if self.X.n != self.Y.n or self.X.model.dim != self.Y.model.dim:
            raise SimulationError("X and Y ensembles must match in size and dimension")
        if self.X.time != self.Y.time:
            raise SimulationError("X and Y ensembles must share the time grid")

    @property
    def n(self) -> int:
        return self.X.n


@dataclass(frozen=True)
class FrozenLaw:
    """User-supplied measure summaries, constant or as callables of time."""

    for_x: Union[MeasureSummary, Callable[[float], MeasureSummary]]
    for_y: Union[MeasureSummary, Callable[[float], MeasureSummary]]

    def at(self, t: float):
        fx = self.for_x(t) if callable(self.for_x) else self.for_x
        fy = self.for_y(t) if callable(self.for_y) else self.for_y
        return fx, fy


def transition_rc_sc(r, delta: float):
    """Reflection/synchronous weights: rc ramps 0 -> 1 across [delta/2, delta].

    rc^2 + sc^2 = 1 exactly; rc is Lipschitz in r with constant 2/delta.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    r = np.asarray(r, dtype=float)
    rc = np.clip((r - delta / 2.0) / (delta / 2.0), 0.0, 1.0)
    sc = np.sqrt(1.0 - rc * rc)
    if rc.ndim:
        return rc, sc
    return float(rc), float(sc)


def reflection_matrix(sigma_y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Householder reflection H = I - 2 u u^T across the hyperplane normal to
    u = sigma_y^-1 z / |sigma_y^-1 z|."""
    sigma_y = np.asarray(sigma_y, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.linalg.norm(z) == 0.0:
        raise ValueError("z must be nonzero")
    v = np.linalg.solve(sigma_y, z)
    u = v / np.linalg.norm(v)
    return np.eye(len(z)) - 2.0 * np.outer(u, u)


def coupling_deltas(sigma_x: np.ndarray, sigma_y: np.ndarray, z: np.ndarray):
    """The matrices of the radial dynamics for one pair:
    Delta = sigma_x - sigma_y and alpha = sigma_x - sigma_y H."""
    H = reflection_matrix(sigma_y, z)
    delta = sigma_x - sigma_y
    alpha = sigma_x - sigma_y @ H
    return delta, alpha, H


def radial_diagnostics(
    x: np.ndarray,
    y: np.ndarray,
    b_x: np.ndarray,
    b_y: np.ndarray,
    model: CoefficientModel,
    delta: float,
):
    """Drift and variance coefficient of the radial process r = |x - y|:

        drift = <e, beta> + rc^2 (tr(a a^T) - |a^T e|^2)/(2r)
                          + sc^2 (tr(D D^T) - |D^T e|^2)/(2r),
        var   = rc^2 |a^T e|^2 + sc^2 |D^T e|^2,

    with beta the drift difference, D = sigma(x) - sigma(y),
    a = sigma(x) - sigma(y) H.  The caller must guard x != y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = x - y
    r = float(np.linalg.norm(z))
    if r == 0.0:
        raise ValueError("radial diagnostics are undefined at x = y")
    e = z / r
    rc, sc = transition_rc_sc(r, delta)
    sx = np.asarray(model.diffusion(x), dtype=float)
    sy = np.asarray(model.diffusion(y), dtype=float)
    dmat, amat, _ = coupling_deltas(sx, sy, z)
    tr_a = float(np.sum(amat * amat))
    tr_d = float(np.sum(dmat * dmat))
    ae = float(np.dot(amat.T @ e, amat.T @ e))
    de = float(np.dot(dmat.T @ e, dmat.T @ e))
    beta = np.asarray(b_x, dtype=float) - np.asarray(b_y, dtype=float)
    drift = float(np.dot(e, beta)) + rc**2 * (tr_a - ae) / (2 * r) + sc**2 * (tr_d - de) / (2 * r)
    var_coeff = rc**2 * ae + sc**2 * de
    return drift, var_coeff


def _apply_sigma(model: CoefficientModel, states: np.ndarray, noise: np.ndarray) -> np.ndarray:
    if model.diffusion_constant is not None:
        return noise @ model.diffusion_constant.T
    return np.einsum("nij,nj->ni", model.diffusion_many(states), noise)


def _guard(states: np.ndarray, step: int, label: str):
    if not np.all(np.isfinite(states)):
        bad = int(np.nonzero(~np.all(np.isfinite(states), axis=1))[0][0])
        raise SimulationError(f"explosion guard: non-finite state, {label} particle {bad} at step {step}")


def step_particle_system(pe: ParticleEnsemble, plan: StepPlan) -> ParticleEnsemble:
    """One Euler-Maruyama step of the interacting particle system."""
    summary = pe.summary()
    drift = pe.model.drift_many(pe.states, summary)
    xi = noise_block(plan.seed, pe.stream, pe.step_index, SLOT_SHARED, pe.n, pe.model.dim)
    states = pe.states + drift * plan.h + _apply_sigma(pe.model, pe.states, xi * np.sqrt(plan.h))
    _guard(states, pe.step_index, "system")
    return replace(pe, states=states, time=pe.time + plan.h, step_index=pe.step_index + 1)


def run_particle_system(pe: ParticleEnsemble, plan: StepPlan) -> list[ParticleEnsemble]:
    """Advance ``plan.steps`` steps, returning snapshots every ``plan.stride``
    steps (the initial state included)."""
    snaps = [pe]
    for k in range(plan.steps):
        pe = step_particle_system(pe, plan)
        if (k + 1) % plan.stride == 0 or k + 1 == plan.steps:
            snaps.append(pe)
    return snaps


def _pairwise_radial(ce: CoupledEnsemble, sx, sy, bx, by, z, r, rc, sc):
    """Vectorized radial diagnostics over all pairs; nan where r = 0."""
    n, d = ce.X.states.shape
    with np.errstate(invalid="ignore", divide="ignore"):
        e = z / r[:, None]
    sy_inv = ce.Y.model.diffusion_inverse_many(ce.Y.states)
    v = np.einsum("nij,nj->ni", sy_inv, z)
    vnorm = np.linalg.norm(v, axis=1)
    ok = (r > 0) & (vnorm > 0)
    u = np.where(ok[:, None], v / np.where(vnorm > 0, vnorm, 1.0)[:, None], 0.0)
    dmat = sx - sy
    sy_u = np.einsum("nij,nj->ni", sy, u)
    amat = dmat + 2.0 * np.einsum("ni,nj->nij", sy_u, u)
    tr_a = np.sum(amat * amat, axis=(1, 2))
    tr_d = np.sum(dmat * dmat, axis=(1, 2))
    ae = np.sum(np.einsum("nij,ni->nj", amat, e) ** 2, axis=1)
    de = np.sum(np.einsum("nij,ni->nj", dmat, e) ** 2, axis=1)
    beta = bx - by
    with np.errstate(invalid="ignore", divide="ignore"):
        drift = (
            np.einsum("ni,ni->n", e, beta)
            + rc**2 * (tr_a - ae) / (2.0 * r)
            + sc**2 * (tr_d - de) / (2.0 * r)
        )
        var = rc**2 * ae + sc**2 * de
    drift[~ok] = np.nan
    var[~ok] = np.nan
    return drift, var


def step_coupled(
    ce: CoupledEnsemble,
    plan: StepPlan,
    law_proxy: Union[str, FrozenLaw] = "empirical_self",
    diagnostics: bool = True,
) -> CoupledEnsemble:
    """One Euler-Maruyama step of the coupled pair of ensembles.

    ``law_proxy`` is "empirical_self" (each system reads its own empirical
    law, the particle-system pairing) or a :class:`FrozenLaw` supplying
    measure summaries directly.
    """
    model = ce.X.model
    n, d = ce.X.states.shape
    if law_proxy == "empirical_self":
        summary_x, summary_y = ce.X.summary(), ce.Y.summary()
    elif isinstance(law_proxy, FrozenLaw):
        summary_x, summary_y = law_proxy.at(ce.X.time)
    else:
        raise ValueError("law_proxy must be 'empirical_self' or a FrozenLaw")

    bx = model.drift_many(ce.X.states, summary_x)
    by = ce.Y.model.drift_many(ce.Y.states, summary_y)
    z = ce.X.states - ce.Y.states
    r = np.linalg.norm(z, axis=1)

    if ce.mode == "mixed":
        rc, sc = transition_rc_sc(r, ce.delta)
    elif ce.mode == "synchronous":
        rc, sc = np.zeros(n), np.ones(n)
    elif ce.mode == "reflection":
        rc, sc = np.ones(n), np.zeros(n)
    else:  # independent
        rc, sc = np.zeros(n), np.ones(n)

    sqrt_h = np.sqrt(plan.h)
    step = ce.X.step_index
    xi1 = noise_block(plan.seed, ce.stream, step, SLOT_SHARED, n, d) * sqrt_h

    sx = model.diffusion_many(ce.X.states)
    sy = ce.Y.model.diffusion_many(ce.Y.states)

    if ce.mode == "independent":
        xi3 = noise_block(plan.seed, ce.stream, step, SLOT_FRESH, n, d) * sqrt_h
        noise_x = _apply_sigma(model, ce.X.states, xi1)
        noise_y = _apply_sigma(ce.Y.model, ce.Y.states, xi3)
    else:
        xi2 = noise_block(plan.seed, ce.stream, step, SLOT_REFLECTED, n, d) * sqrt_h
        sy_inv = ce.Y.model.diffusion_inverse_many(ce.Y.states)
        v = np.einsum("nij,nj->ni", sy_inv, z)
        vnorm = np.linalg.norm(v, axis=1)
        # u is irrelevant where the pair has met (rc = 0 there); any unit
        # vector keeps the algebra finite
        fallback = np.zeros((n, d))
        fallback[:, 0] = 1.0
        ok = vnorm > 0
        u = np.where(ok[:, None], v / np.where(ok, vnorm, 1.0)[:, None], fallback)
        h_xi2 = xi2 - 2.0 * u * np.einsum("ni,ni->n", u, xi2)[:, None]
        mix_x = sc[:, None] * xi1 + rc[:, None] * xi2
        mix_y = sc[:, None] * xi1 + rc[:, None] * h_xi2
        noise_x = np.einsum("nij,nj->ni", sx, mix_x) if model.diffusion_constant is None else mix_x @ model.diffusion_constant.T
        noise_y = np.einsum("nij,nj->ni", sy, mix_y) if ce.Y.model.diffusion_constant is None else mix_y @ ce.Y.model.diffusion_constant.T

    new_x = ce.X.states + bx * plan.h + noise_x
    new_y = ce.Y.states + by * plan.h + noise_y
    _guard(new_x, step, "X")
    _guard(new_y, step, "Y")

    diag = None
    if diagnostics:
        drift, var = _pairwise_radial(ce, sx, sy, bx, by, z, r, rc, sc)
        diag = CouplingDiagnostics(r=r, rc=np.asarray(rc), sc=np.asarray(sc), drift=drift, var_coeff=var)

    return replace(
        ce,
        X=replace(ce.X, states=new_x, time=ce.X.time + plan.h, step_index=step + 1),
        Y=replace(ce.Y, states=new_y, time=ce.Y.time + plan.h, step_index=ce.Y.step_index + 1),
        diagnostics=diag,
    )


def run_coupled(
    ce: CoupledEnsemble,
    plan: StepPlan,
    law_proxy: Union[str, FrozenLaw] = "empirical_self",
    diagnostics_at_records: bool = True,
) -> list[CoupledEnsemble]:
    """Advance the coupled pair, returning snapshots every stride steps.

    Full radial diagnostics are computed only on recorded steps; the cheap
    quantities (r, rc, sc) ride along with every snapshot.
    """
    snaps = [ce]
    for k in range(plan.steps):
        record = (k + 1) % plan.stride == 0 or k + 1 == plan.steps
        ce = step_coupled(ce, plan, law_proxy, diagnostics=record and diagnostics_at_records)
        if record:
            snaps.append(ce)
    return snaps


@dataclass(frozen=True)
class LyapunovTrace:
    times: np.ndarray
    mean_v: np.ndarray
    stderr: np.ndarray
    bound: Optional[np.ndarray]
    applicable: bool


def lyapunov_trace(
    snapshots: list[ParticleEnsemble],
    L: Optional[float] = None,
    lam: Optional[float] = None,
) -> LyapunovTrace:
    """Empirical E[V(X_t)] for V = 1 + |x|^2 with Monte Carlo standard
    errors, against the bound L/lambda + e^{-lambda t} E[V(X_0)] when the
    dissipativity constants are supplied."""
    times = np.array([s.time for s in snapshots])
    mean_v = np.empty(len(snapshots))
    stderr = np.empty(len(snapshots))
    for i, s in enumerate(snapshots):
        v = 1.0 + np.sum(s.states**2, axis=1)
        mean_v[i] = v.mean()
        stderr[i] = v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0
    applicable = L is not None and lam is not None
    bound = None
    if applicable:
        bound = L / lam + np.exp(-lam * times) * mean_v[0]
    return LyapunovTrace(times, mean_v, stderr, bound, applicable)


# ---------------------------------------------------------------------------
# Trajectory output
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIId")


def write_ledger(path, snapshots: list[ParticleEnsemble], h: float) -> None:
    """Compact binary trajectory: magic "MVC1", u32 N, u32 d, f64 h, then one
    little-endian f64 state block (N*d values) per recorded snapshot."""
    n, d = snapshots[0].states.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(LEDGER_MAGIC, n, d, h))
        for s in snapshots:
            fh.write(np.ascontiguousarray(s.states, dtype="<f8").tobytes())


def read_ledger(path, stride: int = 1):
    """Read a binary ledger; returns (h, blocks) where blocks is a list of
    (N, d) arrays.  The stride is not stored in the file; pass the value the
    run used to recover snapshot times as k * stride * h."""
    with open(path, "rb") as fh:
        magic, n, d, h = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != LEDGER_MAGIC:
            raise ValueError("not a trajectory ledger (bad magic)")
        raw = fh.read()
    block = n * d * 8
    if len(raw) % block:
        raise ValueError("truncated trajectory ledger")
    blocks = [
        np.frombuffer(raw[i : i + block], dtype="<f8").reshape(n, d).copy()
        for i in range(0, len(raw), block)
    ]
    return h, blocks


def write_trajectory_csv(path, snapshots: list[ParticleEnsemble]) -> None:
    """CSV trajectory: one row per (snapshot, particle) with coordinates."""
    d = snapshots[0].states.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,time,particle," + ",".join(f"x{j}" for j in range(d)) + "\n")
        for s in snapshots:
            for i, row in enumerate(s.states):
                coords = ",".join(repr(float(v)) for v in row)
                fh.write(f"{s.step_index},{s.time!r},{i},{coords}\n")
