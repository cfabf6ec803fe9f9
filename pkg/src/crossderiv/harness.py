"""Replicated budget sweeps of the index estimators, written as CSV."""

from __future__ import annotations

import csv
import json
import math
from contextlib import nullcontext
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .distributions import RandomStream
from .errors import ParameterError
from .perturb import default_config
from .schemes import default_nodes, family_coefficients
from .sensitivity import direct_indices, plugin_gradients, plugin_indices
from .testbed import TestFunction, get_function

REFERENCE_BUDGETS = (500, 1000, 1500, 2000, 3000, 5000, 10000, 15000, 20000)
ESTIMATORS = ("direct", "plugin")
ROW_FIELDS = (
    "function", "estimator", "L", "budget", "replicate", "seed", "j",
    "quantity", "raw", "normalized", "stderr", "runs_used",
)
AGG_FIELDS = ("function", "estimator", "L", "budget", "quantity", "value", "n_replicates")
LAW_KINDS = {"uniform": "dimension_free_uniform", "gaussian": "gaussian_sqrt_d"}


@dataclass
class ExperimentPlan:
    function: str
    estimator: str = "plugin"
    L: int = 1
    budgets: tuple = (2000,)
    replicates: int = 30
    seed: int = 0
    out: str | None = None
    sampler: str = "pseudo"  # "pseudo" | "sobol"
    law: str = "uniform"
    gamma: float = 1.5
    c_h: float = 1.0
    budget_unit: str = "runs"  # "runs" | "points"
    n0: int | None = None  # plug-in runs per gradient; default 2d
    threads: int = 1  # replicates run concurrently on this many workers

    def __post_init__(self):
        self.budgets = tuple(int(b) for b in self.budgets)
        if self.estimator not in ESTIMATORS:
            raise ParameterError(f"estimator must be one of {ESTIMATORS}")
        if not self.budgets or any(b <= 0 for b in self.budgets):
            raise ParameterError("budgets must be positive")
        if any(b >= c for b, c in zip(self.budgets, self.budgets[1:])):
            raise ParameterError("budgets must be strictly increasing")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if self.L < 1:
            raise ParameterError("L must be >= 1")
        if self.budget_unit not in ("runs", "points"):
            raise ParameterError("budget_unit must be 'runs' or 'points'")
        if self.law not in LAW_KINDS:
            raise ParameterError(f"law must be one of {tuple(LAW_KINDS)}")


@dataclass(frozen=True)
class Allocation:
    """How one budget is spent: N for direct, (N1, N_inner) for plug-in."""

    N: int
    N_inner: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def allocate(plan: ExperimentPlan, d: int, budget: int) -> Allocation:
    L = plan.L
    if plan.estimator == "direct":
        N = budget if plan.budget_unit == "points" else budget // (3 * L)
        if N < 2:
            raise ParameterError(f"direct estimator needs budget >= {6 * L} runs (3L per point, N >= 2)")
        return Allocation(N)
    n0 = plan.n0 if plan.n0 is not None else 2 * d
    N_inner = n0 // L
    if N_inner < 1:
        raise ParameterError(f"N0 = {n0} is smaller than L = {L}")
    N1 = budget if plan.budget_unit == "points" else budget // (L * N_inner)
    if N1 < 2:
        raise ParameterError(f"plug-in estimator needs budget >= 2*N0 = {2 * L * N_inner} runs")
    return Allocation(N1, N_inner)


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    rows: list  # dicts with ROW_FIELDS
    evaluations: dict = field(default_factory=dict)  # (budget, replicate) -> model runs counted
    truth_main: np.ndarray | None = None
    truth_total: np.ndarray | None = None

    def values(self, budget: int, quantity: str, column: str = "normalized") -> np.ndarray:
        """(replicates, d) array of one column."""
        sel = [r for r in self.rows if r["budget"] == budget and r["quantity"] == quantity]
        reps = sorted({r["replicate"] for r in sel})
        d = max(r["j"] for r in sel)
        out = np.full((len(reps), d), np.nan)
        for r in sel:
            out[reps.index(r["replicate"]), r["j"] - 1] = r[column]
        return out

    def means(self, budget: int, quantity: str) -> tuple[np.ndarray, np.ndarray]:
        """Mean over replicates per input and the std error of that mean."""
        v = self.values(budget, quantity)
        n = v.shape[0]
        se = v.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(v.shape[1], np.nan)
        return v.mean(axis=0), se


def _replicate(tf: TestFunction, plan: ExperimentPlan, budget_index: int, budget: int, r: int):
    alloc = allocate(plan, tf.d, budget)
    f = tf.model.fresh()
    stream = RandomStream(plan.seed, plan.sampler).substream(r, budget_index)
    kind = LAW_KINDS[plan.law]
    nodes = default_nodes(plan.L)
    coeffs = family_coefficients(nodes, [1])[1]
    if plan.estimator == "direct":
        cfg = default_config(tf.d, 1, coeffs, alloc.N, kind, gamma=plan.gamma, c_h=plan.c_h)
        pairs = direct_indices(f, tf.dist, coeffs, cfg, alloc.N, stream)
    else:
        cfg = default_config(tf.d, 1, coeffs, alloc.N_inner, kind, gamma=plan.gamma, c_h=plan.c_h)
        g = plugin_gradients(f, tf.dist, alloc.N, nodes, cfg, alloc.N_inner, stream)
        pairs = plugin_indices(g, tf.dist)
    rows = []
    for j, (main, ub) in enumerate(pairs, start=1):
        for q, est in (("S", main), ("UB", ub)):
            rows.append({
                "function": tf.name, "estimator": plan.estimator, "L": plan.L, "budget": budget,
                "replicate": r, "seed": plan.seed, "j": j, "quantity": q, "raw": est.raw,
                "normalized": est.normalized, "stderr": est.std_error, "runs_used": est.runs_used,
            })
    return rows, f.n_evals, cfg


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _paths(out: str | Path) -> tuple[Path, Path, Path]:
    out = Path(out)
    stem = out.with_suffix("")
    return out, stem.with_name(stem.name + "_aggregate.csv"), stem.with_name(stem.name + ".meta.json")


def run_plan(plan: ExperimentPlan, function: TestFunction | None = None) -> ExperimentResult:
    """Run every (budget, replicate) and write rows as they complete.

    Replicate r at budget index b draws from ``RandomStream(seed, sampler)
    .substream(r, b)``. Replicates may run on ``plan.threads`` workers; rows
    are always emitted in (budget, replicate) order so output is identical.
    """
    tf = function if function is not None else get_function(plan.function)
    allocations = {b: allocate(plan, tf.d, b) for b in plan.budgets}  # validate before any run
    result = ExperimentResult(plan, [], {}, tf.main, tf.total)
    writer = fh = None
    if plan.out is not None:
        out, _, _ = _paths(plan.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fh = out.open("w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROW_FIELDS)
    configs = {}
    try:
        with ThreadPoolExecutor(plan.threads) if plan.threads > 1 else nullcontext() as pool:
            for b_idx, budget in enumerate(plan.budgets):
                args = [(tf, plan, b_idx, budget, r) for r in range(plan.replicates)]
                outcomes = pool.map(_replicate, *zip(*args)) if pool else (_replicate(*a) for a in args)
                for r, (rows, n_evals, cfg) in enumerate(outcomes):
                    configs[budget] = cfg
                    result.evaluations[(budget, r)] = n_evals
                    result.rows.extend(rows)
                    if writer is not None:
                        writer.writerows([[_fmt(row[k]) for k in ROW_FIELDS] for row in rows])
                        fh.flush()
    finally:
        if fh is not None:
            fh.close()
    if plan.out is not None:
        write_aggregates(result, _paths(plan.out)[1])
        meta = {
            "plan": asdict(plan),
            "function": tf.name,
            "distribution": tf.dist.literal(),
            "nodes": list(default_nodes(plan.L)),
            "allocations": {str(b): a.as_dict() for b, a in allocations.items()},
            "perturbation": {str(b): {"law": c.law, "scale": c.scale, "h": c.h[0], "gamma": c.gamma, "c_h": c.c_h}
                             for b, c in configs.items()},
            "variance_normalization": "node-0 runs" if 0.0 in default_nodes(plan.L) else "auxiliary sample",
        }
        _paths(plan.out)[2].write_text(json.dumps(meta, indent=2, sort_keys=True))
    return result


def _curve(result: ExperimentResult, quantity: str, truth) -> list[dict]:
    rows = []
    for budget in result.plan.budgets:
        v = result.values(budget, quantity)
        value = float(np.mean((v - np.asarray(truth)) ** 2)) if truth is not None else float("nan")
        rows.append({
            "function": result.rows[0]["function"], "estimator": result.plan.estimator, "L": result.plan.L,
            "budget": budget, "quantity": "mse" if quantity == "S" else "gap", "value": value,
            "n_replicates": v.shape[0],
        })
    return rows


def mse_curve(result: ExperimentResult) -> list[dict]:
    """Per budget: mean over replicates and inputs of (S_hat_j - S_j)**2."""
    return _curve(result, "S", result.truth_main)


def gap_curve(result: ExperimentResult) -> list[dict]:
    """Per budget: mean over replicates and inputs of (UB_hat_j - S_Tj)**2."""
    return _curve(result, "UB", result.truth_total)


def write_aggregates(result: ExperimentResult, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_FIELDS)
        for row in mse_curve(result) + gap_curve(result):
            w.writerow([_fmt(row[k]) for k in AGG_FIELDS])
    return path
