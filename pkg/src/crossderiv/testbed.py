"""Benchmark functions with analytic sensitivity indices and derivatives."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .derivatives import ModelFunction, normalize_subset
from .distributions import ProductDistribution, RandomStream, Uniform
from .errors import ParameterError


@dataclass
class TestFunction:
    name: str
    model: ModelFunction
    dist: ProductDistribution
    main: np.ndarray | None = None
    total: np.ndarray | None = None
    variance: float | None = None
    gradient: Callable | None = None
    cross_partial: Callable | None = None
    smooth: bool = True
    polynomial: object = None
    # values quoted with the benchmark, kept alongside the closed forms
    reference: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def d(self) -> int:
        return self.dist.d


# -- Ishigami ---------------------------------------------------------------

ISHIGAMI_A, ISHIGAMI_B = 7.0, 0.1


def _ishigami(X):
    X = np.atleast_2d(X)
    return np.sin(X[:, 0]) + ISHIGAMI_A * np.sin(X[:, 1]) ** 2 + ISHIGAMI_B * X[:, 2] ** 4 * np.sin(X[:, 0])


def _ishigami_grad(X):
    X = np.atleast_2d(X)
    g = np.empty_like(X)
    g[:, 0] = np.cos(X[:, 0]) * (1.0 + ISHIGAMI_B * X[:, 2] ** 4)
    g[:, 1] = 2.0 * ISHIGAMI_A * np.sin(X[:, 1]) * np.cos(X[:, 1])
    g[:, 2] = 4.0 * ISHIGAMI_B * X[:, 2] ** 3 * np.sin(X[:, 0])
    return g


def _ishigami_cross(X, u):
    X = np.atleast_2d(X)
    u = normalize_subset(u, 3)
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    a, b = ISHIGAMI_A, ISHIGAMI_B
    table = {
        (0,): np.cos(x1) * (1 + b * x3**4),
        (1,): 2 * a * np.sin(x2) * np.cos(x2),
        (2,): 4 * b * x3**3 * np.sin(x1),
        (0, 2): 4 * b * x3**3 * np.cos(x1),
    }
    return table.get(u, np.zeros(X.shape[0]))


def ishigami_moments(a: float = ISHIGAMI_A, b: float = ISHIGAMI_B):
    """Closed-form (variance, main, total) for inputs uniform on (-pi, pi)."""
    pi4, pi8 = math.pi**4, math.pi**8
    v1 = 0.5 * (1 + b * pi4 / 5) ** 2
    v2 = a**2 / 8
    v13 = b**2 * pi8 * (1 / 18 - 1 / 50)
    var = v1 + v2 + v13
    main = np.array([v1, v2, 0.0]) / var
    total = np.array([v1 + v13, v2, v13]) / var
    return var, main, total


def ishigami() -> TestFunction:
    var, main, total = ishigami_moments()
    dist = ProductDistribution.iid(Uniform(-math.pi, math.pi), 3)
    return TestFunction(
        "ishigami",
        ModelFunction(_ishigami, 3, name="ishigami"),
        dist,
        main,
        total,
        var,
        _ishigami_grad,
        _ishigami_cross,
        reference={"main": (0.3139, 0.4424, 0.0), "total": (0.567, 0.442, 0.243)},
    )


# -- Sobol' g-function ------------------------------------------------------

G_PRESETS = {
    "type_a": (0.0, 0.0) + (6.52,) * 8,
    "type_b": (50.0,) * 10,
    "type_c": (0.0,) * 10,
}
G_REFERENCE = {
    "type_a": {"main": (0.39, 0.39) + (0.0069,) * 8, "total": (0.54, 0.54) + (0.013,) * 8},
    "type_b": {"main": (0.1,) * 10, "total": (0.1,) * 10},
    "type_c": {"main": (0.02,) * 10, "total": (0.27,) * 10},
}


def gfunction_moments(a):
    a = np.asarray(a, dtype=float)
    vj = (1.0 / 3.0) / (1.0 + a) ** 2
    var = float(np.prod(1.0 + vj) - 1.0)
    main = vj / var
    total = np.array([vj[j] * np.prod(np.delete(1.0 + vj, j)) for j in range(a.size)]) / var
    return var, main, total


def gfunction(a, name: str = "gfun") -> TestFunction:
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ParameterError("g-function coefficients must be nonnegative")
    d = a.size

    def factors(X):
        return (np.abs(4.0 * np.atleast_2d(X) - 2.0) + a) / (1.0 + a)

    def fn(X):
        return np.prod(factors(X), axis=1)

    def cross(X, u):
        X = np.atleast_2d(X)
        u = normalize_subset(u, d)
        fac = factors(X)
        out = np.prod(np.delete(fac, list(u), axis=1), axis=1)
        for k in u:
            out = out * 4.0 * np.sign(4.0 * X[:, k] - 2.0) / (1.0 + a[k])
        return out

    def grad(X):
        X = np.atleast_2d(X)
        return np.column_stack([cross(X, (j,)) for j in range(d)])

    var, main, total = gfunction_moments(a)
    return TestFunction(
        name,
        ModelFunction(fn, d, name=name),
        ProductDistribution.iid(Uniform(0.0, 1.0), d),
        main,
        total,
        var,
        grad,
        cross,
        smooth=False,
    )


def gfun_preset(kind: str) -> TestFunction:
    if kind not in G_PRESETS:
        raise ParameterError(f"unknown g-function preset {kind!r}")
    tf = gfunction(G_PRESETS[kind], name="gfun_" + kind[-1])
    tf.reference = G_REFERENCE[kind]
    return tf


# -- polynomials --------------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """Sum of coefficient * prod_k x_k**p_k, stored as {exponent tuple: coefficient}."""

    d: int
    terms: tuple  # ((exponents, coefficient), ...)

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for e, c in self.terms:
            out = out + c * np.prod(X ** np.asarray(e, dtype=float), axis=1)
        return out

    def differentiate(self, u) -> "Polynomial":
        terms = []
        for e, c in self.terms:
            e = list(e)
            for k in u:
                c *= e[k]
                e[k] -= 1
            if c != 0:
                terms.append((tuple(e), c))
        return Polynomial(self.d, tuple(terms))


def _poly_test_function(poly: Polynomial, name: str) -> TestFunction:
    def cross(X, u):
        return poly.differentiate(normalize_subset(u, poly.d))(X)

    def grad(X):
        return np.column_stack([cross(X, (j,)) for j in range(poly.d)])

    return TestFunction(
        name,
        ModelFunction(poly, poly.d, name=name),
        ProductDistribution.iid(Uniform(0.0, 1.0), poly.d),
        gradient=grad,
        cross_partial=cross,
        polynomial=poly,
    )


def polynomial_suite(d: int, degree: int, stream: RandomStream, count: int = 1, n_terms: int = 6):
    """Random polynomials in d variables of total degree <= ``degree``."""
    if degree > 6 or d > 5 or d < 1 or degree < 0:
        raise ParameterError("polynomial suite supports d <= 5 and degree <= 6")
    rng = stream.generator()
    monomials = [e for e in itertools.product(range(degree + 1), repeat=d) if sum(e) <= degree]
    out = []
    for n in range(count):
        pick = rng.choice(len(monomials), size=min(n_terms, len(monomials)), replace=False)
        coefs = rng.normal(size=pick.size)
        terms = tuple((monomials[p], float(c)) for p, c in zip(sorted(pick), coefs))
        out.append(_poly_test_function(Polynomial(d, terms), f"poly_{n}"))
    return out


_TERM = re.compile(r"x(\d+)(?:\^(\d+))?")


def parse_polynomial(text: str) -> Polynomial:
    """Parse e.g. ``1.5*x1*x2^2 - 3*x3 + 2`` (variables are 1-based)."""
    text = text.replace(" ", "").replace("-", "+-")
    pieces = [p for p in text.split("+") if p]
    raw, d = [], 0
    for piece in pieces:
        coef, exps = 1.0, {}
        for factor in piece.split("*"):
            m = _TERM.fullmatch(factor.lstrip("-"))
            if m:
                if factor.startswith("-"):
                    coef = -coef
                k = int(m.group(1)) - 1
                if k < 0:
                    raise ParameterError("polynomial variables are numbered from x1")
                exps[k] = exps.get(k, 0) + int(m.group(2) or 1)
                d = max(d, k + 1)
            else:
                try:
                    coef *= float(factor)
                except ValueError:
                    raise ParameterError(f"cannot parse polynomial factor {factor!r}") from None
        raw.append((exps, coef))
    if d == 0:
        d = 1
    terms = tuple((tuple(e.get(k, 0) for k in range(d)), c) for e, c in raw)
    return Polynomial(d, terms)


REGISTRY = {
    "ishigami": ishigami,
    "gfun_a": lambda: gfun_preset("type_a"),
    "gfun_b": lambda: gfun_preset("type_b"),
    "gfun_c": lambda: gfun_preset("type_c"),
}


def get_function(name: str) -> TestFunction:
    """Registry lookup: ishigami, gfun_a, gfun_b, gfun_c or ``poly:<expression>``."""
    if name.startswith("poly:"):
        return _poly_test_function(parse_polynomial(name[5:]), name)
    if name not in REGISTRY:
        raise ParameterError(f"unknown function {name!r}; known: {', '.join(REGISTRY)}, poly:<expr>")
    return REGISTRY[name]()


def additive_linear(a, lo: float = 0.0, hi: float = 1.0) -> TestFunction:
    """f(x) = sum_k a_k x_k on uniform(lo, hi)^d, with exact indices."""
    a = np.asarray(a, dtype=float)
    d = a.size
    var_k = a**2 * (hi - lo) ** 2 / 12.0
    var = float(var_k.sum())

    def cross(X, u):
        u = normalize_subset(u, d)
        X = np.atleast_2d(X)
        return np.full(X.shape[0], a[u[0]] if len(u) == 1 else 0.0)

    return TestFunction(
        "linear",
        ModelFunction(lambda X: np.atleast_2d(X) @ a, d, name="linear"),
        ProductDistribution.iid(Uniform(lo, hi), d),
        var_k / var,
        var_k / var,
        var,
        lambda X: np.tile(a, (np.atleast_2d(X).shape[0], 1)),
        cross,
    )
