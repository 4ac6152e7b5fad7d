"""Shared test fixtures: probe generators with analytically known constants,
and a fast 1-D two-sample energy-distance permutation test."""

import numpy as np

from mvcontract.model import CoefficientModel, MeasureFeatures


def tanh_sigma_model(dim: int, seed: int = 0, strength: float = 0.3):
    """sigma(v) = I + strength * tanh(<w, v>) * G with ||G|| <= 1.

    Pointwise sigma is I plus a contraction scaled by ``strength``, and the
    map has exact Lipschitz data: ||sigma(x)-sigma(y)|| <= strength*||w||*|x-y|,
    so L2 = (strength*||w||)^2, M = 2*strength, Lambda = 1/(1-strength).
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    G = rng.standard_normal((dim, dim))
    G /= np.linalg.norm(G, 2)

    def diffusion(v):
        return np.eye(dim) + strength * np.tanh(float(np.dot(w, v))) * G

    def diffusion_batch(V):
        scal = strength * np.tanh(V @ w)
        return np.eye(dim)[None] + scal[:, None, None] * G[None]

    model = CoefficientModel(
        dim=dim,
        drift=lambda x, s: -x,
        diffusion=diffusion,
        measure_features=MeasureFeatures(),
        drift_batch=lambda X, s: -X,
        diffusion_batch=diffusion_batch,
        label="tanh_sigma",
    )
    L2 = (strength * float(np.linalg.norm(w))) ** 2
    M = 2.0 * strength
    Lam = 1.0 / (1.0 - strength)
    return model, {"L2": L2, "M": M, "Lambda": Lam, "w": w, "G": G, "strength": strength}


def mean_abs_cross(x: np.ndarray, y: np.ndarray) -> float:
    """mean_{i,j} |x_i - y_j| in O((n+m) log(n+m)) via sorting."""
    x = np.sort(x)
    n, m = len(x), len(y)
    # for each y_j: sum_i |x_i - y_j| = y_j*(2k - n) - 2*cum_k + total
    cum = np.concatenate([[0.0], np.cumsum(x)])
    k = np.searchsorted(x, y, side="right")
    total = cum[-1]
    sums = y * (2 * k - n) - 2 * cum[k] + total
    return float(sums.sum() / (n * m))


def energy_distance_1d(x: np.ndarray, y: np.ndarray) -> float:
    return 2.0 * mean_abs_cross(x, y) - mean_abs_cross(x, x) - mean_abs_cross(y, y)


def energy_permutation_pvalue(x, y, n_perm: int = 199, seed: int = 0) -> float:
    """Two-sample permutation p-value for the 1-D energy distance."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    observed = energy_distance_1d(x, y)
    pooled = np.concatenate([x, y])
    rng = np.random.default_rng(seed)
    count = 0
    for _ in range(n_perm):
        perm = rng.permutation(len(pooled))
        px, py = pooled[perm[: len(x)]], pooled[perm[len(x) :]]
        if energy_distance_1d(px, py) >= observed:
            count += 1
    return (1.0 + count) / (1.0 + n_perm)
