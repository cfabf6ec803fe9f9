"""Randomized estimators of cross-partial derivatives.

For a subset u of coordinates, a stencil (beta_l, C_l) and perturbations
V_1..V_N, the estimate of D^{|u|}M(x) is the mean over i of

    T_i = sum_l C_l M(x + beta_l h V_i) prod_{k in u} V_ik / (h_k sigma^2).

Runs are laid out i-major: design row i*L + l holds x + beta_l h V_i.
"""

from __future__ import annotations

import csv
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .distributions import RandomStream
from .errors import AlignmentError, DomainError, ParameterError
from .perturb import (
    PerturbationConfig,
    PerturbationSample,
    require_a2,
    sample_perturbation_batch,
    sample_perturbations,
)
from .schemes import (
    CoefficientSet,
    ConstraintScheme,
    check_nodes,
    family_coefficients,
)


@dataclass
class ModelFunction:
    """A scalar model evaluated row-wise on an (n, d) array.

    ``fn`` must accept an (n, d) array and return n values when
    ``vectorized``; otherwise it is called once per row. ``lower``/``upper``
    bound the open evaluation domain per coordinate. Every evaluated row is
    counted in ``n_evals``.
    """

    fn: Callable
    d: int
    lower: tuple | None = None
    upper: tuple | None = None
    pure: bool = True
    vectorized: bool = True
    name: str = "model"
    n_evals: int = field(default=0, init=False)

    def __post_init__(self):
        self._lock = threading.Lock()
        self.lower = tuple(np.broadcast_to(-np.inf if self.lower is None else self.lower, (self.d,)))
        self.upper = tuple(np.broadcast_to(np.inf if self.upper is None else self.upper, (self.d,)))

    def fresh(self) -> "ModelFunction":
        """Copy with a zeroed evaluation counter."""
        return ModelFunction(self.fn, self.d, self.lower, self.upper, self.pure, self.vectorized, self.name)

    def outside(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.flatnonzero(np.any((X <= lo) | (X >= hi), axis=1))

    def _eval(self, X):
        if self.vectorized:
            return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])
        return np.array([float(self.fn(row)) for row in X])

    def __call__(self, X, threads: int = 1) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ParameterError(f"{self.name} expects {self.d} inputs, got {X.shape[1]}")
        if threads > 1 and self.pure and X.shape[0] > threads:
            chunks = np.array_split(X, threads)
            with ThreadPoolExecutor(threads) as pool:
                y = np.concatenate(list(pool.map(self._eval, chunks)))
        else:
            y = self._eval(X)
        with self._lock:
            self.n_evals += X.shape[0]
        return y


def normalize_subset(u, d: int) -> tuple[int, ...]:
    """Sorted tuple of distinct 0-based coordinates; must be nonempty."""
    u = tuple(sorted({int(k) for k in u}))
    if not u:
        raise ParameterError("derivative subsets must be nonempty (|u| >= 1)")
    if u[0] < 0 or u[-1] >= d:
        raise ParameterError(f"subset {u} out of range for d = {d}")
    return u


@dataclass(frozen=True)
class EvaluationDesign:
    x: np.ndarray
    points: np.ndarray
    coeffs: CoefficientSet
    perturbation: PerturbationSample

    @property
    def N(self) -> int:
        return self.perturbation.N

    @property
    def L(self) -> int:
        return self.coeffs.L

    @property
    def config(self) -> PerturbationConfig:
        return self.perturbation.config

    def row(self, i: int, ell: int) -> int:
        return i * self.L + ell

    def index_map(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.arange(self.N * self.L)
        return rows // self.L, rows % self.L


@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    std_error: float
    N: int
    L: int
    subset: tuple
    scheme: str
    runs_used: int


def _design_points(x, nodes, h, V) -> np.ndarray:
    # (..., N, d) perturbations -> (..., N, L, d) points
    steps = np.asarray(nodes)[:, None] * h
    return x[..., None, None, :] + V[..., :, None, :] * steps


def build_design(
    x,
    u,
    coeffs: CoefficientSet,
    cfg: PerturbationConfig,
    N: int,
    stream: RandomStream,
    *,
    model: ModelFunction | None = None,
    shrink_h: bool = False,
) -> EvaluationDesign:
    x = np.asarray(x, dtype=float)
    if x.shape != (cfg.d,):
        raise ParameterError(f"point has {x.size} coordinates, config has {cfg.d}")
    u = normalize_subset(u, cfg.d)
    require_a2(cfg, coeffs.nodes)
    if not all(cfg.active[k] for k in u):
        raise ParameterError(f"subset {u} touches masked coordinates (h = 0)")
    sample = sample_perturbations(cfg, N, stream)
    while True:
        pts = _design_points(x, coeffs.nodes, cfg.bandwidth, sample.V).reshape(-1, cfg.d)
        bad = model.outside(pts) if model is not None else ()
        if len(bad) == 0:
            return EvaluationDesign(x, pts, coeffs, sample)
        if not shrink_h or cfg.bandwidth.max() < 1e-300:
            r = int(bad[0])
            raise DomainError(
                f"design row {r} (i={r // coeffs.L}, ell={r % coeffs.L}) lies outside the model domain"
            )
        cfg = cfg.with_bandwidth(cfg.bandwidth / 2.0)
        sample = PerturbationSample(sample.V, cfg)


def _weights(V: np.ndarray, u, cfg: PerturbationConfig) -> np.ndarray:
    w = np.ones(V.shape[:-1])
    for k in u:
        w = w * (V[..., k] / (cfg.h[k] * cfg.sigma2))
    return w


def _summaries(T: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    n = T.shape[axis]
    mean = T.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, T.std(axis=axis, ddof=1) / math.sqrt(n)


def estimate_from_runs(design: EvaluationDesign, outputs, u) -> DerivativeEstimate:
    y = np.asarray(outputs, dtype=float).ravel()
    if y.size != design.N * design.L:
        raise AlignmentError(f"expected {design.N * design.L} outputs, got {y.size}")
    u = normalize_subset(u, design.config.d)
    Y = y.reshape(design.N, design.L)
    T = (Y @ design.coeffs.weights()) * _weights(design.perturbation.V, u, design.config)
    value, se = _summaries(T)
    return DerivativeEstimate(
        float(value), float(se), design.N, design.L, u, design.coeffs.scheme.kind, y.size
    )


def estimate_cross_partial(
    f: ModelFunction,
    x,
    u,
    coeffs: CoefficientSet,
    cfg: PerturbationConfig,
    N: int,
    stream: RandomStream,
    *,
    shrink_h: bool = False,
    threads: int = 1,
) -> DerivativeEstimate:
    if len(coeffs.nodes) > 1 and coeffs.order != len(tuple(u)) and coeffs.scheme.kind != "single":
        raise ParameterError(f"coefficients target order {coeffs.order}, subset has {len(tuple(u))}")
    design = build_design(x, u, coeffs, cfg, N, stream, model=f, shrink_h=shrink_h)
    return estimate_from_runs(design, f(design.points, threads=threads), u)


def _family(nodes, subsets, cfg: PerturbationConfig):
    nodes = check_nodes(nodes)
    subsets = [normalize_subset(v, cfg.d) for v in subsets]
    if not subsets:
        raise ParameterError("no subsets requested")
    union = set().union(*subsets)
    if not all(cfg.active[k] for k in union):
        raise ParameterError("requested subsets touch masked coordinates (h = 0)")
    coeff_sets = family_coefficients(nodes, [len(v) for v in subsets])
    return nodes, subsets, coeff_sets


def estimate_family(
    f: ModelFunction,
    x,
    subsets,
    nodes,
    cfg: PerturbationConfig,
    N: int,
    stream: RandomStream,
    *,
    shrink_h: bool = False,
    threads: int = 1,
) -> dict[tuple, DerivativeEstimate]:
    """Estimate D^{|v|}M(x) for every subset v from one shared design of N*L runs."""
    nodes, subsets, coeff_sets = _family(nodes, subsets, cfg)
    top = coeff_sets[max(coeff_sets)]
    design = build_design(x, subsets[0], top, cfg, N, stream, model=f, shrink_h=shrink_h)
    y = f(design.points, threads=threads)
    out = {}
    for v in subsets:
        d_v = EvaluationDesign(design.x, design.points, coeff_sets[len(v)], design.perturbation)
        out[v] = estimate_from_runs(d_v, y, v)
    return out


@dataclass(frozen=True)
class FamilyBatch:
    """Per-point family estimates for many base points sharing one stencil."""

    subsets: list
    values: np.ndarray  # (n_points, n_subsets)
    std_errors: np.ndarray
    runs_used: int
    base_outputs: np.ndarray | None  # M at the base points when a node equals 0


def estimate_family_batch(
    f: ModelFunction,
    X,
    subsets,
    nodes,
    cfg: PerturbationConfig,
    N: int,
    stream: RandomStream,
    *,
    threads: int = 1,
) -> FamilyBatch:
    """Vectorized ``estimate_family`` at every row of X, point i using ``stream.substream(i)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    nodes, subsets, coeff_sets = _family(nodes, subsets, cfg)
    require_a2(cfg, nodes)
    n, L = X.shape[0], len(nodes)
    V = sample_perturbation_batch(cfg, n, N, stream)
    pts = _design_points(X, nodes, cfg.bandwidth, V)  # (n, N, L, d)
    flat = pts.reshape(-1, cfg.d)
    bad = f.outside(flat)
    if len(bad):
        r = int(bad[0])
        raise DomainError(f"design row {r} of point {r // (N * L)} lies outside the model domain")
    Y = f(flat, threads=threads).reshape(n, N, L)
    values = np.empty((n, len(subsets)))
    ses = np.empty_like(values)
    for s, v in enumerate(subsets):
        T = (Y @ coeff_sets[len(v)].weights()) * _weights(V, v, cfg)
        values[:, s], ses[:, s] = _summaries(T, axis=1)
    base = Y[:, 0, nodes.index(0.0)] if 0.0 in nodes else None
    return FamilyBatch(subsets, values, ses, n * N * L, base)


# -- design exchange with external simulators --------------------------------


def export_design(design: EvaluationDesign, path, u) -> Path:
    """Write ``row, i, ell, x_1..x_d`` CSV plus a JSON sidecar for re-import."""
    path = Path(path)
    d = design.config.d
    i_idx, l_idx = design.index_map()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "i", "ell"] + [f"x_{k + 1}" for k in range(d)])
        for r in range(design.points.shape[0]):
            w.writerow([r, int(i_idx[r]), int(l_idx[r])] + [repr(float(v)) for v in design.points[r]])
    cfg = design.config
    meta = {
        "version": 1,
        "x": design.x.tolist(),
        "subset": list(normalize_subset(u, d)),
        "nodes": list(design.coeffs.nodes),
        "coefficients": list(design.coeffs.coefficients),
        "exponents": list(design.coeffs.scheme.exponents),
        "order": design.coeffs.order,
        "kind": design.coeffs.scheme.kind,
        "law": cfg.law,
        "scale": cfg.scale,
        "h": list(cfg.h),
        "gamma": cfg.gamma,
        "c_h": cfg.c_h,
        "V": design.perturbation.V.tolist(),
    }
    path.with_suffix(".json").write_text(json.dumps(meta))
    return path


def import_design(path) -> tuple[EvaluationDesign, tuple]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    pts = np.array([[float(v) for v in r[3:]] for r in rows])
    scheme = ConstraintScheme(tuple(meta["exponents"]), meta["order"], meta["kind"])
    coeffs = CoefficientSet(tuple(meta["nodes"]), tuple(meta["coefficients"]), scheme)
    cfg = PerturbationConfig(meta["law"], meta["scale"], tuple(meta["h"]), meta["gamma"], meta["c_h"])
    sample = PerturbationSample(np.array(meta["V"], dtype=float).reshape(-1, cfg.d), cfg)
    design = EvaluationDesign(np.array(meta["x"]), pts, coeffs, sample)
    if pts.shape[0] != design.N * design.L:
        raise AlignmentError("design CSV and sidecar disagree on the number of runs")
    return design, tuple(meta["subset"])


def read_outputs(path, n_rows: int) -> np.ndarray:
    """Read ``row, y`` CSV (header optional) into an array aligned by row."""
    y = np.full(n_rows, np.nan)
    with Path(path).open(newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip().lstrip("-").isdigit():
                continue
            r = int(rec[0])
            if not 0 <= r < n_rows:
                raise AlignmentError(f"output row {r} outside design of {n_rows} rows")
            try:
                y[r] = float(rec[1])
            except (IndexError, ValueError) as exc:
                raise ParameterError(f"output row {r}: cannot read value from {rec!r}") from exc
    if np.isnan(y).any():
        raise AlignmentError(f"missing outputs for rows {np.flatnonzero(np.isnan(y))[:5].tolist()}")
    return y

