"""Extrapolation stencils: node sets, constraint schemes and their coefficients.

A stencil is a set of distinct nodes beta_1..beta_L and weights C_1..C_L that
satisfy sum_l C_l beta_l**r = delta(order, r) for every exponent r of a
constraint scheme. Solving for the weights is a generalized Vandermonde
problem.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SingularityError

SCHEME_KINDS = (
    "single",
    "low_order",
    "parsimonious",
    "bias_order_2L",
    "rate_optimal",
    "intermediate",
    "custom",
)

COND_WARN = 1e12


class IllConditionedWarning(UserWarning):
    pass


def default_nodes(L: int) -> tuple[float, ...]:
    """Nodes {±2**k} for even L, with 0 prepended for odd L > 1."""
    if L < 1:
        raise ParameterError("L must be >= 1")
    if L == 1:
        return (1.0,)
    even = []
    for k in range(L // 2):
        even += [2.0**k, -(2.0**k)]
    return tuple(even) if L % 2 == 0 else (0.0, *even)


def check_nodes(nodes) -> tuple[float, ...]:
    nodes = tuple(float(b) for b in nodes)
    if not nodes:
        raise ParameterError("empty node set")
    if len(set(nodes)) != len(nodes):
        raise ParameterError(f"nodes must be pairwise distinct: {nodes}")
    if not all(math.isfinite(b) for b in nodes):
        raise ParameterError("nodes must be finite")
    return nodes


@dataclass(frozen=True)
class ConstraintScheme:
    exponents: tuple[int, ...]
    order: int
    kind: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(int(r) for r in self.exponents))
        if self.kind not in SCHEME_KINDS:
            raise ParameterError(f"unknown scheme kind {self.kind!r}")
        if self.order < 1:
            raise ParameterError("target order |u| must be >= 1")
        if any(r < 0 for r in self.exponents):
            raise ParameterError("exponents must be nonnegative")
        if len(set(self.exponents)) != len(self.exponents):
            raise ParameterError(f"exponents must be pairwise distinct: {self.exponents}")
        if self.order not in self.exponents:
            raise ParameterError("the scheme must constrain the target exponent |u|")

    @property
    def L(self) -> int:
        return len(self.exponents)

    def target(self, r: int) -> float:
        return 1.0 if r == self.order else 0.0

    def descriptor(self) -> str:
        return f"{self.kind}:order={self.order}:exponents={','.join(map(str, self.exponents))}"


def intermediate_lprime(order: int, rstar: int, eps_op: float) -> int:
    if not 0.0 < eps_op < 1.0:
        raise ParameterError("eps_op must lie in (0, 1)")
    return math.floor((order - rstar - 1) * (1.0 - eps_op) / (2.0 * eps_op))


def build_scheme(
    kind: str,
    order: int,
    *,
    rstar: int | None = None,
    L: int | None = None,
    Lprime: int | None = None,
    eps_op: float | None = None,
    exponents=None,
) -> ConstraintScheme:
    if order < 1:
        raise ParameterError("target order |u| must be >= 1")
    if kind == "single":
        return ConstraintScheme((order,), order, kind)
    if kind == "low_order":
        if L is None or L < 1 or L - 1 > order:
            raise ParameterError("low_order needs 1 <= L <= |u| + 1")
        exps = tuple(range(L - 1)) + (order,)
    elif kind == "parsimonious":
        if L is None or rstar is None or rstar < 0 or rstar > L - 2:
            raise ParameterError("parsimonious needs 0 <= r* <= L - 2")
        if order <= rstar:
            exps = tuple(range(L))
        else:
            exps = tuple(range(rstar + 1)) + tuple(range(order, order + L - rstar - 1))
    elif kind == "bias_order_2L":
        if L is None or L < 1:
            raise ParameterError("bias_order_2L needs L >= 1")
        exps = tuple(order + 2 * k for k in range(L))
    elif kind == "rate_optimal":
        rstar = order - 1 if rstar is None else rstar
        if rstar < 0 or rstar > order - 1:
            raise ParameterError(f"rate_optimal needs 0 <= r* <= |u| - 1 = {order - 1}")
        exps = tuple(range(rstar + 1)) + (order,)
    elif kind == "intermediate":
        if rstar is None or rstar < 0 or rstar > order - 2:
            raise ParameterError("intermediate needs 0 <= r* <= |u| - 2")
        if eps_op is not None:
            Lprime = intermediate_lprime(order, rstar, eps_op)
        if Lprime is None or Lprime < 1:
            raise ParameterError(f"intermediate needs L' >= 1, got {Lprime}")
        exps = tuple(range(rstar + 1)) + tuple(order + 2 * k for k in range(Lprime))
    elif kind == "custom":
        if exponents is None:
            raise ParameterError("custom scheme needs explicit exponents")
        exps = tuple(exponents)
    else:
        raise ParameterError(f"unknown scheme kind {kind!r}")
    return ConstraintScheme(exps, order, kind)


def _powers(nodes, exponents) -> np.ndarray:
    # numpy evaluates 0.0**0 as 1.0, which is the convention needed here
    b = np.asarray(nodes, dtype=float)
    return np.power.outer(b, np.asarray(exponents, dtype=float)).T


@dataclass(frozen=True)
class CoefficientSet:
    nodes: tuple[float, ...]
    coefficients: tuple[float, ...]
    scheme: ConstraintScheme
    condition: float = float("nan")

    @property
    def order(self) -> int:
        return self.scheme.order

    @property
    def L(self) -> int:
        return len(self.nodes)

    @property
    def beta_max(self) -> float:
        return max(abs(b) for b in self.nodes)

    def weights(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    def moment(self, r: int) -> float:
        """sum_l C_l beta_l**r."""
        return float(np.sum(self.weights() * np.power(np.asarray(self.nodes), float(r))))

    def gamma(self, r: int) -> float:
        """Absolute moment sum_l |C_l beta_l**r|."""
        return float(np.sum(np.abs(self.weights() * np.power(np.asarray(self.nodes), float(r)))))


def _dependent_rows(A: np.ndarray) -> list[int]:
    _, s, vt = np.linalg.svd(A.T)
    null = vt[-1]
    return [int(i) for i in np.flatnonzero(np.abs(null) > 1e-8 * np.abs(null).max())]


def _solve_pivoting(A: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Gaussian elimination with partial pivoting in extended precision."""
    M = np.array(A, dtype=np.longdouble)
    y = np.array(b, dtype=np.longdouble)
    n = M.shape[0]
    scale = np.max(np.abs(M)) if M.size else 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[p, k]) <= 64 * np.finfo(np.longdouble).eps * scale * n:
            return None
        if p != k:
            M[[k, p]] = M[[p, k]]
            y[[k, p]] = y[[p, k]]
        f = M[k + 1 :, k] / M[k, k]
        M[k + 1 :, k:] -= np.outer(f, M[k, k:])
        y[k + 1 :] -= f * y[k]
    x = np.zeros(n, dtype=np.longdouble)
    for k in range(n - 1, -1, -1):
        x[k] = (y[k] - np.dot(M[k, k + 1 :], x[k + 1 :])) / M[k, k]
    return x


def solve_coefficients(nodes, scheme: ConstraintScheme) -> CoefficientSet:
    nodes = check_nodes(nodes)
    if len(nodes) != scheme.L:
        raise ParameterError(f"{len(nodes)} nodes but {scheme.L} exponents")
    if scheme.L == 1 and nodes[0] != 1.0:
        raise ParameterError("a single-node stencil must use beta_1 = 1 (C_1 = 1)")
    A = _powers(nodes, scheme.exponents)
    b = np.array([scheme.target(r) for r in scheme.exponents])
    x = _solve_pivoting(A, b)
    if x is None:
        rows = _dependent_rows(A)
        exps = [scheme.exponents[i] for i in rows]
        raise SingularityError(
            f"constraint matrix is singular: rows {rows} (exponents {exps}) are linearly dependent"
        )
    cond = float(np.linalg.cond(A))
    if cond > COND_WARN:
        warnings.warn(f"Vandermonde condition number {cond:.3g}", IllConditionedWarning, stacklevel=2)
    coeffs = CoefficientSet(nodes, tuple(float(c) for c in x), scheme, cond)
    worst = max(abs(coeffs.moment(r) - scheme.target(r)) for r in scheme.exponents)
    if not worst <= 1e-8:
        raise SingularityError(f"solution residual {worst:.3g} too large (condition {cond:.3g})")
    return coeffs


@dataclass(frozen=True)
class ConstraintReport:
    exponents: tuple[int, ...]
    values: tuple[float, ...]
    residuals: tuple[float, ...]
    tol: float
    extra: dict

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def failures(self) -> list[int]:
        return [r for r, e in zip(self.exponents, self.residuals) if e > self.tol]


def verify_constraints(
    c: CoefficientSet, scheme: ConstraintScheme, tol: float = 1e-10, extra_exponents=()
) -> ConstraintReport:
    """Residuals |sum C beta**r - delta| per scheme exponent.

    ``extra_exponents`` are reported in ``extra`` without affecting ``passed``.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    values = tuple(c.moment(r) for r in scheme.exponents)
    res = tuple(abs(v - scheme.target(r)) for v, r in zip(values, scheme.exponents))
    extra = {int(r): abs(c.moment(r) - scheme.target(r)) for r in extra_exponents}
    return ConstraintReport(scheme.exponents, values, res, tol, extra)


def family_scheme(order: int, L: int) -> ConstraintScheme:
    """Scheme used for order ``order`` when several orders share L nodes.

    L = 1 gives the single-node stencil; otherwise exponents 0..L-1, which
    is the parsimonious family with r* = L - 2 and coincides with
    rate_optimal at the top order L - 1.
    """
    if L == 1:
        return build_scheme("single", order)
    if order > L - 1:
        raise ParameterError(f"order {order} exceeds the capacity L - 1 = {L - 1} of {L} nodes")
    return build_scheme("parsimonious", order, rstar=L - 2, L=L)


def family_coefficients(nodes, orders) -> dict[int, CoefficientSet]:
    nodes = check_nodes(nodes)
    return {o: solve_coefficients(nodes, family_scheme(o, len(nodes))) for o in sorted(set(orders))}


def scheme_coefficients(
    kind: str,
    order: int,
    *,
    rstar: int | None = None,
    L: int | None = None,
    Lprime: int | None = None,
    eps_op: float | None = None,
    nodes=None,
    exponents=None,
) -> CoefficientSet:
    """Build a scheme and solve it on ``nodes`` (default nodes when omitted)."""
    scheme = build_scheme(
        kind, order, rstar=rstar, L=L, Lprime=Lprime, eps_op=eps_op, exponents=exponents
    )
    if nodes is None:
        nodes = default_nodes(scheme.L)
    return solve_coefficients(nodes, scheme)
