"""Independent reference computations used as test oracles.

Nothing here imports the package under test.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def erf_series(x: float, terms: int = 200) -> float:
    """Maclaurin series of erf; accurate for |x| <= 4 with enough terms."""
    total, term = 0.0, x
    for n in range(terms):
        total += term / (2 * n + 1)
        term *= -x * x / (n + 1)
    return 2.0 / math.sqrt(math.pi) * total


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + erf_series(x / math.sqrt(2.0)))


def normal_quantile_bisect(p: float, lo: float = -8.0, hi: float = 8.0, iters: int = 100) -> float:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def star_discrepancy(P: np.ndarray) -> float:
    """Exact L-infinity star discrepancy by enumerating the critical grid (small n, d)."""
    P = np.atleast_2d(P)
    n, d = P.shape
    grids = [np.unique(np.concatenate([P[:, k], [1.0]])) for k in range(d)]
    worst = 0.0
    for corner in itertools.product(*grids):
        c = np.asarray(corner)
        vol = float(np.prod(c))
        open_count = np.sum(np.all(P < c, axis=1)) / n
        closed_count = np.sum(np.all(P <= c, axis=1)) / n
        worst = max(worst, vol - open_count, closed_count - vol)
    return worst


def u_statistic_bruteforce(x, D, F, rho) -> float:
    """2/(n(n-1)) sum_{a<b} D_a D_b [F(min) - F_a F_b] / (rho_a rho_b) by the O(n^2) double loop."""
    n = len(x)
    total = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            k = (F(min(x[a], x[b])) - F(x[a]) * F(x[b])) / (rho(x[a]) * rho(x[b]))
            total += D[a] * D[b] * k
    return 2.0 * total / (n * (n - 1))


def jackknife_bruteforce(x, D, F, rho) -> float:
    n = len(x)
    loo = np.array([
        u_statistic_bruteforce(np.delete(x, i), np.delete(D, i), F, rho) for i in range(n)
    ])
    return math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))


def gauss_legendre(fn, a: float, b: float, n: int = 64) -> float:
    t, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (b - a) * t + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.sum(w * fn(x)))


def first_order_index_quadrature(f, d: int, j: int, a: float, b: float, n: int = 64, panels: int = 1):
    """S_j = Var(E[f | x_j]) / Var(f) by tensor Gauss-Legendre (d <= 3), uniform inputs.

    ``panels`` splits each axis into equal sub-intervals (for kinked integrands).
    """
    t, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    nodes = np.concatenate([0.5 * (hi - lo) * t + 0.5 * (hi + lo) for lo, hi in zip(edges, edges[1:])])
    weights = np.concatenate([0.5 * (hi - lo) * w for lo, hi in zip(edges, edges[1:])]) / (b - a)
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.meshgrid(*([weights] * d), indexing="ij"), axis=0).ravel()
    y = f(X)
    mean = np.sum(W * y)
    var = np.sum(W * (y - mean) ** 2)
    Y = y.reshape((nodes.size,) * d)
    Wt = W.reshape((nodes.size,) * d)
    other = tuple(k for k in range(d) if k != j)
    cond = np.sum(Y * Wt, axis=other) / np.sum(Wt, axis=other)
    return float(np.sum(weights * (cond - mean) ** 2) / var)
