"""Independent-marginal input distributions and reproducible random streams.

Two stream kinds exist. ``pseudo`` draws from numpy's PCG64 seeded through a
``SeedSequence`` whose spawn key is the stream index, so substreams are
independent and reproducible. ``sobol`` uses Sobol' direction numbers with a
random linear matrix scramble, digital shift and row permutation, drawn
independently per substream.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import special
from scipy.stats import qmc

from .errors import DomainError, ParameterError

_BITS = 32
_SCALE = float(2**_BITS)


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ParameterError(f"uniform requires a < b, got ({self.a}, {self.b})")

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def quantile(self, p):
        p = _check_probability(p)
        return self.a + (self.b - self.a) * p

    def literal(self) -> str:
        return f"uniform({self.a!r},{self.b!r})"


@dataclass(frozen=True)
class Gaussian:
    mean: float
    sd: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.sd) and self.sd > 0):
            raise ParameterError(f"gaussian requires sd > 0, got {self.sd}")

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * math.sqrt(2.0 * math.pi))

    def quantile(self, p):
        p = _check_probability(p)
        return self.mean + self.sd * special.ndtri(p)

    def literal(self) -> str:
        return f"gaussian({self.mean!r},{self.sd!r})"


Marginal = Union[Uniform, Gaussian]


def _check_probability(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("quantile requires p in (0, 1)")
    return p


def cdf(m: Marginal, x):
    return m.cdf(x)


def pdf(m: Marginal, x):
    return m.pdf(x)


def quantile(m: Marginal, p):
    return m.quantile(p)


@dataclass(frozen=True)
class ProductDistribution:
    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) < 1:
            raise ParameterError("a product distribution needs at least one marginal")

    @classmethod
    def iid(cls, marginal: Marginal, d: int) -> "ProductDistribution":
        return cls((marginal,) * d)

    @property
    def d(self) -> int:
        return len(self.marginals)

    def _columns(self, fn_name, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty_like(X)
        for j, m in enumerate(self.marginals):
            out[:, j] = getattr(m, fn_name)(X[:, j])
        return out

    def cdf(self, X):
        return self._columns("cdf", X)

    def pdf(self, X):
        return self._columns("pdf", X)

    def quantile(self, P):
        return self._columns("quantile", P)

    def contains(self, X) -> np.ndarray:
        """Row mask of points inside the open support."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ok = np.ones(X.shape[0], dtype=bool)
        for j, m in enumerate(self.marginals):
            lo, hi = m.support
            ok &= (X[:, j] > lo) & (X[:, j] < hi)
        return ok

    def literal(self) -> str:
        return ",".join(m.literal() for m in self.marginals)


_LITERAL = re.compile(r"\s*(uniform|gaussian)\s*\(([^)]*)\)\s*")


def _parse_number(text: str) -> float:
    text = text.strip().replace(" ", "")
    m = re.fullmatch(r"([+-]?)(\d*\.?\d*(?:[eE][+-]?\d+)?)\*?pi", text)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        factor = float(m.group(2)) if m.group(2) else 1.0
        return sign * factor * math.pi
    try:
        return float(text)
    except ValueError:
        raise ParameterError(f"cannot parse number {text!r}") from None


def parse_marginal(text: str) -> Marginal:
    m = _LITERAL.fullmatch(text)
    if not m:
        raise ParameterError(f"bad distribution literal {text!r}")
    args = [_parse_number(t) for t in m.group(2).split(",")]
    if len(args) != 2:
        raise ParameterError(f"{m.group(1)} takes two parameters, got {text!r}")
    return Uniform(*args) if m.group(1) == "uniform" else Gaussian(*args)


def parse_distribution(text: str) -> ProductDistribution:
    """Parse ``uniform(a,b),gaussian(mu,sd),...`` into a product distribution."""
    pos, items = 0, []
    text = text.strip()
    while pos < len(text):
        m = _LITERAL.match(text, pos)
        if not m:
            raise ParameterError(f"bad distribution literal near {text[pos:]!r}")
        items.append(parse_marginal(m.group(0)))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise ParameterError(f"expected ',' at {text[pos:]!r}")
            pos += 1
    return ProductDistribution(tuple(items))


# -- random streams ---------------------------------------------------------


@lru_cache(maxsize=64)
def _sobol_base(d: int, n: int) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pts = qmc.Sobol(d, scramble=False, bits=_BITS).random(n)
    base = (pts * _SCALE).astype(np.uint64)
    base.flags.writeable = False
    return base


_SHIFTS = np.arange(_BITS - 1, -1, -1, dtype=np.uint64)  # MSB-first bit positions
_ONE = np.uint64(1)
_TRIANGLE = ((_ONE << (_SHIFTS + _ONE)) - _ONE)  # keep bits at or below the diagonal
_DIAGONAL = _ONE << _SHIFTS


def _scramble_params(rng: np.random.Generator, n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    raw = rng.integers(0, 2**_BITS, size=(_BITS + 1, d), dtype=np.uint64)
    return raw, rng.permutation(n)


def _scramble_many(base: np.ndarray, raw: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Random linear matrix scramble, digital shift and row permutation of Sobol' integers.

    ``raw`` is (count, 33, d): rows 0..31 give the columns of a unit
    lower-triangular bit matrix (MSB first), row 32 the digital shift.
    ``perm`` is (count, n). Scrambles of one base set share their leading
    bits up to the shift, so without the row permutation equal rows of
    different substreams would be strongly dependent.
    Returns (count, n, d) uniforms at cell midpoints.
    """
    cols = (raw[:, :_BITS] & _TRIANGLE[:, None]) | _DIAGONAL[:, None]  # (count, 32, d)
    bits = (base[..., None] >> _SHIFTS) & _ONE  # (n, d, 32)
    prod = bits[None] * np.moveaxis(cols, 1, 2)[:, None]  # (count, n, d, 32)
    out = np.bitwise_xor.reduce(prod, axis=-1) ^ raw[:, _BITS][:, None, :]
    out = np.take_along_axis(out, perm[:, :, None], axis=1)
    return (out.astype(float) + 0.5) / _SCALE


def _scramble(base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    raw, perm = _scramble_params(rng, *base.shape)
    return _scramble_many(base, raw[None], perm[None])[0]


@dataclass(frozen=True)
class RandomStream:
    """A reproducible source of uniforms identified by (seed, kind, index)."""

    seed: int
    kind: str = "pseudo"
    index: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("pseudo", "sobol"):
            raise ParameterError(f"unknown stream kind {self.kind!r}")
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))

    def substream(self, *index: int) -> "RandomStream":
        return RandomStream(self.seed, self.kind, self.index + tuple(index))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) % 2**64, spawn_key=self.index)
        return np.random.default_rng(ss)

    def uniform(self, n: int, d: int) -> np.ndarray:
        """n x d uniforms on (0, 1)."""
        if n < 1:
            raise ParameterError("n must be >= 1")
        rng = self.generator()
        if self.kind == "pseudo":
            u = rng.random((n, d))
            # [0, 1) -> (0, 1)
            return np.where(u > 0.0, u, 0.5 / _SCALE)
        return _scramble(_sobol_base(d, n), rng)


def uniform_substreams(stream: RandomStream, count: int, n: int, d: int) -> np.ndarray:
    """Stack ``stream.substream(i).uniform(n, d)`` for i in range(count)."""
    if stream.kind == "sobol":
        params = [_scramble_params(stream.substream(i).generator(), n, d) for i in range(count)]
        return _scramble_many(_sobol_base(d, n), np.stack([p[0] for p in params]), np.stack([p[1] for p in params]))
    out = np.empty((count, n, d))
    for i in range(count):
        out[i] = stream.substream(i).uniform(n, d)
    return out


def sample_matrix(dist: ProductDistribution, n: int, stream: RandomStream) -> np.ndarray:
    return dist.quantile(stream.uniform(n, dist.d))
