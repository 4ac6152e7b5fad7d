"""Low-level numerical kernels shared by the constants pipelines.

Everything downstream of the coefficient model reduces to four primitives:

* adaptive Simpson quadrature, in plain and in log space (the log variant
  integrates ``exp(w)`` for exponents ``w`` that would overflow ``float64``,
  returning the log of the integral),
* cumulative versions of both on a fixed node grid,
* bisection against a monotone boolean predicate (used to locate the radii
  where tail inequalities start to hold),
* a tabulated concave function with monotone-cubic interpolation inside the
  table and an exact affine extension beyond it (the contraction metrics are
  evaluated inside Monte Carlo loops, so this is the hot path).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "QuadratureError",
    "adaptive_simpson",
    "adaptive_simpson_log",
    "cumulative_simpson",
    "cumulative_simpson_log",
    "cumulative_simpson_grid",
    "cumulative_simpson_log_grid",
    "monotone_threshold",
    "sign_change_roots",
    "TabulatedConcave",
]

_MAX_DEPTH = 48


class QuadratureError(RuntimeError):
    """Quadrature failed to converge or met a non-finite integrand."""


def _simpson_recurse(f, a, fa, b, fb, m, fm, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    if not (np.isfinite(flm) and np.isfinite(frm)):
        raise QuadratureError(f"non-finite integrand near [{a}, {b}]")
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth >= _MAX_DEPTH:
        return left + right
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        # Richardson extrapolation of the two-panel estimate.
        return left + right + err / 15.0
    half = 0.5 * tol
    return _simpson_recurse(f, a, fa, m, fm, lm, flm, left, half, depth + 1) + _simpson_recurse(
        f, m, fm, b, fb, rm, frm, right, half, depth + 1
    )


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10) -> float:
    """Integrate ``f`` on ``[a, b]`` to absolute tolerance ``tol``."""
    if b == a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    if not (np.isfinite(fa) and np.isfinite(fb) and np.isfinite(fm)):
        raise QuadratureError(f"non-finite integrand on [{a}, {b}]")
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_recurse(f, a, fa, b, fb, m, fm, whole, tol, 0)


_LOG4 = np.log(4.0)


def _log_simpson_panel(h6, wa, wm, wb):
    return h6 + np.logaddexp(np.logaddexp(wa, _LOG4 + wm), wb)


def _log_simpson_recurse(w, a, wa, b, wb, m, wm, whole, rel_tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    wlm = w(lm)
    wrm = w(rm)
    if np.isnan(wlm) or np.isnan(wrm):
        raise QuadratureError(f"non-finite log-integrand near [{a}, {b}]")
    left = _log_simpson_panel(np.log((m - a) / 6.0), wa, wlm, wm)
    right = _log_simpson_panel(np.log((b - m) / 6.0), wm, wrm, wb)
    halves = np.logaddexp(left, right)
    if depth >= _MAX_DEPTH:
        return halves
    if halves == -np.inf and whole == -np.inf:
        return halves
    # |exp(whole - halves) - 1| is the relative discrepancy of the estimates.
    if abs(np.expm1(whole - halves)) <= 15.0 * rel_tol:
        return halves
    return np.logaddexp(
        _log_simpson_recurse(w, a, wa, m, wm, lm, wlm, left, rel_tol, depth + 1),
        _log_simpson_recurse(w, m, wm, b, wb, rm, wrm, right, rel_tol, depth + 1),
    )


def adaptive_simpson_log(
    w: Callable[[float], float], a: float, b: float, rel_tol: float = 1e-10
) -> float:
    """Return ``log(integral of exp(w))`` on ``[a, b]``.

    ``w`` may return ``-inf`` (integrand zero) but not ``nan``/``+inf``; the
    tolerance is relative because the integral itself may be astronomically
    large in linear scale.
    """
    if b == a:
        return -np.inf
    wa, wb = w(a), w(b)
    m = 0.5 * (a + b)
    wm = w(m)
    if np.isnan(wa) or np.isnan(wb) or np.isnan(wm):
        raise QuadratureError(f"non-finite log-integrand on [{a}, {b}]")
    whole = _log_simpson_panel(np.log((b - a) / 6.0), wa, wm, wb)
    return _log_simpson_recurse(w, a, wa, b, wb, m, wm, whole, rel_tol, 0)


def cumulative_simpson(f, grid: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Cumulative integral of ``f`` from ``grid[0]`` to every node of ``grid``.

    The absolute tolerance is distributed over cells by width so the total
    accumulated error stays near ``tol``.
    """
    span = grid[-1] - grid[0]
    cells = [
        adaptive_simpson(
            f, grid[i], grid[i + 1], tol * (grid[i + 1] - grid[i]) / span if span > 0 else tol
        )
        for i in range(len(grid) - 1)
    ]
    out = np.empty(len(grid))
    out[0] = 0.0
    np.cumsum(cells, out=out[1:])
    return out


def cumulative_simpson_log(w, grid: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Cumulative ``log(integral of exp(w))`` at every node of ``grid``."""
    out = np.empty(len(grid))
    out[0] = -np.inf
    acc = -np.inf
    for i in range(len(grid) - 1):
        acc = np.logaddexp(acc, adaptive_simpson_log(w, grid[i], grid[i + 1], rel_tol))
        out[i + 1] = acc
    return out


def cumulative_simpson_grid(f, grid: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Cumulative integral of a vectorized ``f`` at every node of ``grid``.

    Each cell gets a one-panel vs two-panel Simpson estimate; cells whose
    Richardson error exceeds their share of ``tol`` are re-done with the
    scalar adaptive routine.  For smooth integrands on a dense grid the
    vectorized pass alone is far inside tolerance.
    """
    a, b = grid[:-1], grid[1:]
    m = 0.5 * (a + b)
    lq, rq = 0.5 * (a + m), 0.5 * (m + b)
    pts = np.concatenate([grid, m, lq, rq])
    vals = np.asarray(f(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite integrand on grid")
    k = len(grid)
    fn, fm = vals[:k], vals[k : k + k - 1]
    flq, frq = vals[k + k - 1 : k + 2 * (k - 1)], vals[k + 2 * (k - 1) :]
    fa, fb = fn[:-1], fn[1:]
    s1 = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    s2 = (m - a) / 6.0 * (fa + 4.0 * flq + fm) + (b - m) / 6.0 * (fm + 4.0 * frq + fb)
    err = (s2 - s1) / 15.0
    cells = s2 + err
    span = grid[-1] - grid[0]
    tol_cell = tol * (b - a) / span if span > 0 else np.full_like(b, tol)
    for i in np.nonzero(np.abs(err) > tol_cell)[0]:
        cells[i] = adaptive_simpson(
            lambda x: float(np.asarray(f(np.array([x])))[0]), a[i], b[i], tol_cell[i]
        )
    out = np.empty(k)
    out[0] = 0.0
    np.cumsum(cells, out=out[1:])
    return out


def _logsumexp3(x, y, z):
    return np.logaddexp(np.logaddexp(x, y), z)


def cumulative_simpson_log_grid(w, grid: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Cumulative ``log(integral of exp(w))`` at every node, vectorized.

    Same refinement strategy as :func:`cumulative_simpson_grid`, with the
    per-cell discrepancy measured relatively (in log space).
    """
    a, b = grid[:-1], grid[1:]
    m = 0.5 * (a + b)
    lq, rq = 0.5 * (a + m), 0.5 * (m + b)
    pts = np.concatenate([grid, m, lq, rq])
    vals = np.asarray(w(pts), dtype=float)
    if np.any(np.isnan(vals)) or np.any(vals == np.inf):
        raise QuadratureError("non-finite log-integrand on grid")
    k = len(grid)
    wn, wm = vals[:k], vals[k : k + k - 1]
    wlq, wrq = vals[k + k - 1 : k + 2 * (k - 1)], vals[k + 2 * (k - 1) :]
    wa, wb = wn[:-1], wn[1:]
    with np.errstate(divide="ignore"):
        s1 = np.log((b - a) / 6.0) + _logsumexp3(wa, _LOG4 + wm, wb)
        left = np.log((m - a) / 6.0) + _logsumexp3(wa, _LOG4 + wlq, wm)
        right = np.log((b - m) / 6.0) + _logsumexp3(wm, _LOG4 + wrq, wb)
    s2 = np.logaddexp(left, right)
    with np.errstate(invalid="ignore"):
        disc = np.abs(np.expm1(s1 - s2))
    disc[np.isnan(disc)] = 0.0  # both estimates -inf: empty cell
    for i in np.nonzero(disc > 15.0 * rel_tol)[0]:
        s2[i] = adaptive_simpson_log(
            lambda x: float(np.asarray(w(np.array([x])))[0]), a[i], b[i], rel_tol
        )
    out = np.empty(k)
    out[0] = -np.inf
    np.logaddexp.accumulate(np.concatenate([[-np.inf], s2]), out=out)
    return out


def sign_change_roots(f, lo: float, hi: float, n: int = 2048, xtol: float = 1e-10) -> list[float]:
    """Roots of a vectorized scalar function located by scanning + bisection."""
    xs = np.linspace(lo, hi, n)
    ys = np.asarray(f(xs), dtype=float)
    roots = []
    sign = np.sign(ys)
    for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        a, b = xs[i], xs[i + 1]
        fa = ys[i]
        while b - a > xtol:
            m = 0.5 * (a + b)
            fm = float(np.asarray(f(np.array([m])))[0])
            if fa * fm <= 0:
                b = m
            else:
                a, fa = m, fm
        roots.append(0.5 * (a + b))
    return roots


def monotone_threshold(
    pred: Callable[[float], bool], lo: float, hi: float, xtol: float = 1e-8
) -> float:
    """Smallest ``x`` in ``[lo, hi]`` with ``pred(x)`` true.

    ``pred`` must be monotone (false below the threshold, true above).  Raises
    if ``pred(hi)`` is false.
    """
    if pred(lo):
        return lo
    if not pred(hi):
        raise ValueError("predicate never becomes true on the bracket")
    a, b = lo, hi
    while b - a > xtol:
        m = 0.5 * (a + b)
        if pred(m):
            b = m
        else:
            a = m
    return b


@dataclass(frozen=True)
class TabulatedConcave:
    """Concave increasing function tabulated on ``[0, cutoff]``.

    Inside the table, values come from monotone cubic (PCHIP) interpolation,
    which cannot overshoot and so preserves monotonicity of the tabulation.
    Beyond ``cutoff`` the function continues affinely with slope
    ``tail_slope`` (zero slope for functions that are constant past the
    cutoff).
    """

    grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    cutoff: float
    tail_slope: float

    def __post_init__(self):
        object.__setattr__(self, "_interp", PchipInterpolator(self.grid, self.values))
        object.__setattr__(self, "_dinterp", PchipInterpolator(self.grid, self.derivs))
        object.__setattr__(self, "_value_at_cut", float(self.values[-1]))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        # one interpolation pass; the affine tail is added where r > cutoff
        out = self._interp(np.minimum(r, self.cutoff))
        if self.tail_slope != 0.0:
            out += self.tail_slope * np.maximum(r - self.cutoff, 0.0)
        return out if out.ndim else float(out)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(r <= self.cutoff, self._dinterp(np.minimum(r, self.cutoff)), self.tail_slope)
        return out if out.ndim else float(out)
