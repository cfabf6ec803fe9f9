"""Truncated derivative-based ANOVA emulator.

With outer points X'_1..X'_N' drawn from G, the prediction at x is

    mean + sum_{1 <= |v| <= s} avg_m D^{|v|}M(X'_m) prod_{k in v} (G_k(X'_mk) - 1[X'_mk >= x_k]) / g_k(X'_mk)

where the derivatives are estimated per outer point (or supplied exactly in
oracle mode).
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .derivatives import ModelFunction, estimate_family_batch
from .distributions import ProductDistribution, RandomStream, parse_distribution, sample_matrix
from .errors import DomainError, ParameterError
from .perturb import PerturbationConfig, default_config
from .schemes import check_nodes, default_nodes, family_coefficients

FORMAT_VERSION = 1
MAX_DEFAULT_S = 3
FIVE_NODES = (0.0, 1.0, -1.0, 2.0, -2.0)


def subsets_up_to(d: int, s: int) -> list[tuple[int, ...]]:
    return [v for k in range(1, s + 1) for v in itertools.combinations(range(d), k)]


def _label(v) -> str:
    return ":".join(str(k + 1) for k in v)


def _unlabel(text: str) -> tuple[int, ...]:
    return tuple(int(k) - 1 for k in text.split(":"))


@dataclass
class EmulatorConfig:
    """Settings for ``build``.

    ``nodes`` is the shared stencil for every order (exponents 0..L-1 per
    order, see ``schemes.family_scheme``); the five-node preset is
    ``nodes=FIVE_NODES``. ``perturbation`` defaults to the
    dimension-free uniform rule at the top order with h from ``N_inner``.
    ``oracle(X, v)`` replaces derivative estimation by exact values.
    """

    G: ProductDistribution
    s: int = 1
    N_outer: int = 100
    N_inner: int = 1
    nodes: tuple = (1.0, -1.0)
    perturbation: PerturbationConfig | None = None
    stream: RandomStream = field(default_factory=lambda: RandomStream(0))
    oracle: Callable | None = None
    allow_large_s: bool = False
    gamma: float = 1.5
    c_h: float = 1.0

    def __post_init__(self):
        d = self.G.d
        if not 1 <= self.s <= d:
            raise ParameterError(f"truncation s must satisfy 1 <= s <= d = {d}")
        if self.s > MAX_DEFAULT_S and not self.allow_large_s:
            n = len(subsets_up_to(d, self.s))
            raise ParameterError(f"s = {self.s} needs {n} subsets; pass allow_large_s to override")
        if self.N_outer < 2 or self.N_inner < 1:
            raise ParameterError("need N_outer >= 2 and N_inner >= 1")
        self.nodes = check_nodes(self.nodes)
        if self.oracle is None and len(self.nodes) > 1 and self.s > len(self.nodes) - 1:
            raise ParameterError(f"{len(self.nodes)} nodes cannot estimate order {self.s}")

    @property
    def has_zero_node(self) -> bool:
        return 0.0 in self.nodes

    @property
    def runs_per_point(self) -> int:
        return len(self.nodes) * self.N_inner

    def descriptor(self) -> str:
        if self.oracle is not None:
            return "oracle"
        nodes = ";".join(repr(b) for b in self.nodes)
        return f"family:nodes={nodes}:N_inner={self.N_inner}"

    @classmethod
    def from_budget(cls, G: ProductDistribution, budget: int, s: int = 1, *, L: int | None = None,
                    preset: str = "default", N_inner: int = 1, **kw) -> "EmulatorConfig":
        """Split a total run budget evenly over outer points.

        Each outer point costs L * N_inner runs, plus one run for the mean
        sample when the stencil has no zero node.
        """
        if preset == "five_node":
            nodes = FIVE_NODES
        elif preset == "default":
            nodes = default_nodes(L if L is not None else max(2, s + 1))
        else:
            raise ParameterError(f"unknown emulator preset {preset!r}")
        per_point = len(nodes) * N_inner + (0 if 0.0 in nodes else 1)
        N_outer = budget // per_point
        if N_outer < 2:
            raise ParameterError(f"budget {budget} affords fewer than 2 outer points ({per_point} runs each)")
        return cls(G, s, N_outer, N_inner, nodes, **kw)


@dataclass
class DbAnovaEmulator:
    points: np.ndarray  # (N', d) outer sample X'
    mean: float
    mean_se: float
    subsets: list
    table: np.ndarray  # (N', n_subsets) derivative estimates
    G: ProductDistribution
    s: int
    descriptor: str
    runs_used: int = 0
    outputs: np.ndarray | None = None  # M(X'_m) when the mean was taken at the outer points

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def N_outer(self) -> int:
        return self.points.shape[0]

    def _terms(self, P: np.ndarray) -> np.ndarray:
        """(n, N') per-outer-point sums of the product terms at each row of P."""
        Gc = self.G.cdf(self.points)
        gp = self.G.pdf(self.points)
        out = np.zeros((P.shape[0], self.N_outer))
        for a in range(0, P.shape[0], 256):
            chunk = P[a : a + 256]
            fac = (Gc[None] - (self.points[None] >= chunk[:, None, :])) / gp[None]
            acc = np.zeros((chunk.shape[0], self.N_outer))
            for c, v in enumerate(self.subsets):
                acc += self.table[:, c] * np.prod(fac[:, :, list(v)], axis=2)
            out[a : a + chunk.shape[0]] = acc
        return out

    def _check(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float)
        if P.size == 0:
            return P.reshape(0, self.d)
        P = np.atleast_2d(P)
        if P.shape[1] != self.d:
            raise ParameterError(f"emulator expects {self.d} inputs, got {P.shape[1]}")
        bad = np.flatnonzero(~self.G.contains(P))
        if len(bad):
            raise DomainError(f"prediction point {int(bad[0])} lies outside the support of G")
        return P

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ParameterError(f"emulator expects a {self.d}-vector")
        return float(self.predict_batch(x[None])[0])

    def predict_batch(self, points) -> np.ndarray:
        P = self._check(points)
        if P.shape[0] == 0:
            return np.empty(0)
        return self.mean + self._terms(P).mean(axis=1)

    def predict_se(self, points) -> np.ndarray:
        """Outer Monte Carlo std error of each prediction (including the mean's)."""
        P = self._check(points)
        if P.shape[0] == 0:
            return np.empty(0)
        T = self._terms(P)
        if self.outputs is not None:
            # mean and terms share the outer points: per-point totals are iid
            return np.std(self.outputs[None] + T, axis=1, ddof=1) / math.sqrt(self.N_outer)
        return np.sqrt(T.var(axis=1, ddof=1) / self.N_outer + self.mean_se**2)

    # -- persistence --------------------------------------------------------

    def save(self, path) -> Path:
        path = Path(path)
        buf = io.StringIO()
        buf.write(f"# crossderiv-emulator v{FORMAT_VERSION}\n")
        buf.write(f"d,{self.d}\ns,{self.s}\nN_outer,{self.N_outer}\n")
        buf.write(f"scheme,{self.descriptor}\nG,{self.G.literal()}\nruns_used,{self.runs_used}\n")
        buf.write(f"[mean]\n{self.mean!r},{self.mean_se!r}\n[points]\n")
        np.savetxt(buf, self.points, delimiter=",", fmt="%.17g")
        buf.write("[derivatives]\n" + ",".join(_label(v) for v in self.subsets) + "\n")
        np.savetxt(buf, self.table, delimiter=",", fmt="%.17g")
        if self.outputs is not None:
            buf.write("[outputs]\n")
            np.savetxt(buf, self.outputs, delimiter=",", fmt="%.17g")
        path.write_text(buf.getvalue())
        return path

    @classmethod
    def load(cls, path) -> "DbAnovaEmulator":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != f"# crossderiv-emulator v{FORMAT_VERSION}":
            raise ParameterError(f"unsupported emulator file header {lines[:1]}")
        header, i = {}, 1
        while not lines[i].startswith("["):
            key, _, value = lines[i].partition(",")
            header[key] = value
            i += 1
        d, n = int(header["d"]), int(header["N_outer"])
        mean, mean_se = (float(t) for t in lines[i + 1].split(","))
        pts = np.loadtxt(lines[i + 3 : i + 3 + n], delimiter=",", ndmin=2).reshape(n, d)
        j = i + 3 + n
        subsets = [_unlabel(t) for t in lines[j + 1].split(",")]
        table = np.loadtxt(lines[j + 2 : j + 2 + n], delimiter=",", ndmin=2).reshape(n, len(subsets))
        k = j + 2 + n
        outputs = None
        if k < len(lines) and lines[k] == "[outputs]":
            outputs = np.loadtxt(lines[k + 1 : k + 1 + n], delimiter=",", ndmin=1).reshape(n)
        return cls(pts, mean, mean_se, subsets, table, parse_distribution(header["G"]),
                   int(header["s"]), header["scheme"], int(header.get("runs_used", 0)), outputs)


def build(f: ModelFunction, cfg: EmulatorConfig, *, threads: int = 1) -> DbAnovaEmulator:
    """Sample X' from G, estimate the derivative table and the output mean.

    Outer point m uses ``cfg.stream.substream(1).substream(m)`` for its
    perturbations. The mean comes from the node-0 runs when available,
    otherwise from f at the outer points themselves (N' extra runs).
    """
    d = cfg.G.d
    if f.d != d:
        raise ParameterError(f"model has {f.d} inputs, G has {d}")
    subsets = subsets_up_to(d, cfg.s)
    X = sample_matrix(cfg.G, cfg.N_outer, cfg.stream.substream(0))
    runs = 0
    if cfg.oracle is not None:
        table = np.column_stack([np.asarray(cfg.oracle(X, v), dtype=float) for v in subsets])
        y = f(X, threads=threads)
        runs += X.shape[0]
    else:
        pert = cfg.perturbation
        if pert is None:
            top = family_coefficients(cfg.nodes, [cfg.s])[cfg.s]
            pert = default_config(d, cfg.s, top, cfg.N_inner, gamma=cfg.gamma, c_h=cfg.c_h)
        batch = estimate_family_batch(f, X, subsets, cfg.nodes, pert, cfg.N_inner, cfg.stream.substream(1),
                                      threads=threads)
        table = batch.values
        runs += batch.runs_used
        if batch.base_outputs is not None:
            y = batch.base_outputs
        else:
            y = f(X, threads=threads)
            runs += X.shape[0]
    if not np.all(np.isfinite(table)):
        m, c = np.argwhere(~np.isfinite(table))[0]
        raise DomainError(f"non-finite derivative estimate at outer point {m}, subset {_label(subsets[c])}")
    mean = float(np.mean(y))
    mean_se = float(np.std(y, ddof=1) / math.sqrt(y.size))
    return DbAnovaEmulator(X, mean, mean_se, subsets, table, cfg.G, cfg.s, cfg.descriptor(), runs, y)
