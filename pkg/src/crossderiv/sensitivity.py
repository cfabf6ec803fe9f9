"""Main indices and upper bounds of total indices from derivative estimates.

Two families of estimators are provided. The direct estimators consume raw
perturbed model runs from three run families that are shared by every input.
The plug-in estimators take per-point gradient estimates (or exact
gradients) and form a one-sample U-statistic for the main index and a plain
average for the upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .derivatives import ModelFunction, estimate_family_batch, normalize_subset
from .distributions import Marginal, ProductDistribution, RandomStream, sample_matrix
from .errors import DomainError, ParameterError
from .perturb import PerturbationConfig, perturbations_from_uniforms, require_a2
from .schemes import CoefficientSet


@dataclass(frozen=True)
class IndexEstimate:
    raw: float
    normalized: float
    std_error: float
    kind: str  # "main" | "upper_bound"
    subset: tuple
    estimator: str  # "direct" | "plugin"
    runs_used: int
    variance: float  # output variance used for normalization


def _density(m: Marginal, x) -> np.ndarray:
    r = m.pdf(x)
    if np.any(r <= 0):
        raise DomainError("kernel evaluated where the input density vanishes")
    return r


def main_kernel(m: Marginal, x, xp):
    """[F(min(x, x')) - F(x)F(x')] / (rho(x) rho(x'))."""
    x, xp = np.asarray(x, dtype=float), np.asarray(xp, dtype=float)
    num = m.cdf(np.minimum(x, xp)) - m.cdf(x) * m.cdf(xp)
    return num / (_density(m, x) * _density(m, xp))


def ub_kernel(m: Marginal, x):
    """F(x)[1 - F(x)] / rho(x)**2."""
    x = np.asarray(x, dtype=float)
    F = m.cdf(x)
    return F * (1.0 - F) / _density(m, x) ** 2


def _mean_se(terms: np.ndarray) -> tuple[float, float]:
    n = terms.size
    se = float(terms.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return float(terms.mean()), se


# -- direct estimators ------------------------------------------------------


@dataclass(frozen=True)
class _Runs:
    X: np.ndarray
    Xp: np.ndarray
    V: np.ndarray
    Vp: np.ndarray
    a: np.ndarray  # sum_l C_l M(X + beta_l h V)
    b: np.ndarray  # sum_l C_l M(X' + beta_l h V')
    c: np.ndarray  # sum_l C_l M(X + beta_l h V')
    variance: float
    runs_used: int


def _run_families(
    f: ModelFunction,
    dist: ProductDistribution,
    coeffs: CoefficientSet,
    cfg: PerturbationConfig,
    N: int,
    stream: RandomStream,
    threads: int = 1,
) -> _Runs:
    if dist.d != cfg.d or f.d != cfg.d:
        raise ParameterError("model, distribution and perturbation dimensions differ")
    require_a2(cfg, coeffs.nodes)
    # one joint 4d-dimensional draw: with the sobol kind, separately scrambled
    # copies of the same base points would make V_i a function of X_i
    d = cfg.d
    U = stream.substream(0).uniform(N, 4 * d)
    X = dist.quantile(U[:, :d])
    Xp = dist.quantile(U[:, d : 2 * d])
    V = perturbations_from_uniforms(cfg, U[:, 2 * d : 3 * d])
    Vp = perturbations_from_uniforms(cfg, U[:, 3 * d :])
    steps = np.asarray(coeffs.nodes)[:, None] * cfg.bandwidth
    w = coeffs.weights()
    L = coeffs.L

    def family(base, pert):
        pts = (base[:, None, :] + pert[:, None, :] * steps).reshape(-1, cfg.d)
        bad = f.outside(pts)
        if len(bad):
            raise DomainError(f"direct design row {int(bad[0])} lies outside the model domain")
        return f(pts, threads=threads).reshape(N, L)

    A, B, C = family(X, V), family(Xp, Vp), family(X, Vp)
    runs = 3 * L * N
    if 0.0 in coeffs.nodes:
        y = A[:, coeffs.nodes.index(0.0)]
    else:
        y = f(sample_matrix(dist, N, stream.substream(1)), threads=threads)
        runs += N
    variance = float(np.var(y, ddof=1)) if N > 1 else float("nan")
    return _Runs(X, Xp, V, Vp, A @ w, B @ w, C @ w, variance, runs)


def _direct_pair(runs: _Runs, dist, cfg, u, L) -> tuple[IndexEstimate, IndexEstimate]:
    weight = np.ones(runs.X.shape[0])
    k_main = np.ones_like(weight)
    k_ub = np.ones_like(weight)
    for k in u:
        m = dist.marginals[k]
        weight = weight * runs.V[:, k] * runs.Vp[:, k] / (cfg.h[k] ** 2 * cfg.sigma2**2)
        k_main = k_main * main_kernel(m, runs.X[:, k], runs.Xp[:, k])
        k_ub = k_ub * ub_kernel(m, runs.X[:, k])
    main_raw, main_se = _mean_se(runs.a * runs.b * weight * k_main)
    ub_raw, ub_se = _mean_se(runs.a * runs.c * weight * k_ub / 2.0 ** len(u))
    var = runs.variance
    return (
        IndexEstimate(main_raw, main_raw / var, main_se, "main", u, "direct", runs.runs_used, var),
        IndexEstimate(ub_raw, ub_raw / var, ub_se, "upper_bound", u, "direct", runs.runs_used, var),
    )


def direct_indices(
    f: ModelFunction,
    dist: ProductDistribution,
    coeffs: CoefficientSet,
    cfg: PerturbationConfig,
    N: int,
    stream: RandomStream,
    *,
    threads: int = 1,
) -> list[tuple[IndexEstimate, IndexEstimate]]:
    """(main, upper bound) for every input from 3*L*N shared runs.

    The output variance comes from the node-0 runs when the stencil has a
    zero node, otherwise from N extra runs (included in ``runs_used``).
    """
    if coeffs.order != 1:
        raise ParameterError("direct first-order indices need a stencil for |u| = 1")
    runs = _run_families(f, dist, coeffs, cfg, N, stream, threads)
    return [_direct_pair(runs, dist, cfg, (j,), coeffs.L) for j in range(dist.d)]


def generalized_sigma(
    f: ModelFunction,
    dist: ProductDistribution,
    u,
    coeffs: CoefficientSet,
    cfg: PerturbationConfig,
    N: int,
    stream: RandomStream,
    *,
    threads: int = 1,
) -> tuple[IndexEstimate, IndexEstimate]:
    """Sigma_u and its upper bound for a subset of any order, same sampling plan as the direct indices."""
    u = normalize_subset(u, dist.d)
    if coeffs.order != len(u) and coeffs.scheme.kind != "single":
        raise ParameterError(f"stencil targets order {coeffs.order}, subset has order {len(u)}")
    runs = _run_families(f, dist, coeffs, cfg, N, stream, threads)
    return _direct_pair(runs, dist, cfg, u, coeffs.L)


# -- plug-in estimators -----------------------------------------------------


@dataclass(frozen=True)
class GradientSample:
    points: np.ndarray  # (N1, d)
    gradients: np.ndarray  # (N1, d)
    std_errors: np.ndarray
    outputs: np.ndarray  # M at the points, for the output variance
    N0: int  # runs per gradient
    runs_used: int

    @property
    def N1(self) -> int:
        return self.points.shape[0]

    @classmethod
    def exact(cls, f: ModelFunction, gradient, points) -> "GradientSample":
        """Oracle mode: analytic gradients at the given points."""
        points = np.atleast_2d(points)
        y = f(points)
        g = np.asarray(gradient(points), dtype=float)
        return cls(points, g, np.zeros_like(g), y, 0, points.shape[0])


def plugin_gradients(
    f: ModelFunction,
    dist: ProductDistribution,
    N1: int,
    nodes,
    cfg: PerturbationConfig,
    N_inner: int,
    stream: RandomStream,
    *,
    threads: int = 1,
) -> GradientSample:
    """Gradient estimates at N1 points, each from L*N_inner runs on its own substream.

    M at the points themselves is read off node-0 runs if present, otherwise
    evaluated once per point (counted in ``runs_used``).
    """
    if N1 < 2:
        raise ParameterError("plug-in estimators need N1 >= 2")
    X = sample_matrix(dist, N1, stream.substream(0))
    singles = [(j,) for j in range(dist.d)]
    batch = estimate_family_batch(f, X, singles, nodes, cfg, N_inner, stream.substream(1), threads=threads)
    runs = batch.runs_used
    if batch.base_outputs is not None:
        y = batch.base_outputs
    else:
        y = f(X, threads=threads)
        runs += N1
    return GradientSample(X, batch.values, batch.std_errors, y, len(nodes) * N_inner, runs)


def u_statistic_main(x, D, m: Marginal) -> tuple[float, float]:
    """One-sample U-statistic of D(x_a) D(x_b) K(x_a, x_b) and its jackknife std error.

    O(n log n): after sorting by x the min() in the kernel resolves to the
    earlier point of each pair.
    """
    x, D = np.asarray(x, dtype=float), np.asarray(D, dtype=float)
    n = x.size
    if n < 2:
        raise ParameterError("the U-statistic needs at least two points")
    order = np.lexsort((D, x))
    x, D = x[order], D[order]
    w = D / _density(m, x)
    F = m.cdf(x)
    wF = w * F
    total_w = w.sum()
    total_wF = wF.sum()
    suf_w = total_w - np.cumsum(w)  # sum over later points
    pre_wF = np.cumsum(wF) - wF  # sum over earlier points
    rows = w * (F * suf_w + pre_wF - F * (total_wF - wF))
    s_total = rows.sum()
    u = s_total / (n * (n - 1))
    if n < 3:
        return float(u), float("nan")
    loo = (s_total - 2.0 * rows) / ((n - 1) * (n - 2))
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(u), se


def plugin_indices(g: GradientSample, dist: ProductDistribution) -> list[tuple[IndexEstimate, IndexEstimate]]:
    if g.N1 < 2:
        raise ParameterError("plug-in estimators need N1 >= 2")
    var = float(np.var(g.outputs, ddof=1))
    out = []
    for j, m in enumerate(dist.marginals):
        x, D = g.points[:, j], g.gradients[:, j]
        main_raw, main_se = u_statistic_main(x, D, m)
        order = np.lexsort((D, x))
        terms = D[order] ** 2 * ub_kernel(m, x[order]) / 2.0
        ub_raw, ub_se = _mean_se(terms)
        out.append(
            (
                IndexEstimate(main_raw, main_raw / var, main_se, "main", (j,), "plugin", g.runs_used, var),
                IndexEstimate(ub_raw, ub_raw / var, ub_se, "upper_bound", (j,), "plugin", g.runs_used, var),
            )
        )
    return out
