"""Perturbation laws for V, bandwidth schedules and the A2 admissibility check."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .distributions import RandomStream, uniform_substreams
from .errors import A2Error, ParameterError
from .schemes import CoefficientSet

LAWS = ("uniform", "gaussian")
CONFIG_KINDS = ("dimension_free_uniform", "gaussian_sqrt_d")


def bandwidth(N: int, gamma: float = 1.5, c_h: float = 1.0) -> float:
    """h = c_h * N**(-gamma/2)."""
    if N < 1:
        raise ParameterError("N must be >= 1")
    return c_h * N ** (-gamma / 2.0)


@dataclass(frozen=True)
class PerturbationConfig:
    """Law of V plus the bandwidth vector.

    ``scale`` is xi for the symmetric uniform law U(-xi, xi) and sigma for
    the Gaussian law N(0, sigma**2). Coordinates with zero bandwidth are
    masked: they are never perturbed.
    """

    law: str
    scale: float
    h: tuple
    gamma: float = 1.5
    c_h: float = 1.0

    def __post_init__(self):
        if self.law not in LAWS:
            raise ParameterError(f"unknown perturbation law {self.law!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ParameterError("perturbation scale must be positive")
        h = tuple(float(v) for v in np.atleast_1d(self.h))
        if any(v < 0 or not math.isfinite(v) for v in h):
            raise ParameterError("bandwidths must be finite and nonnegative")
        object.__setattr__(self, "h", h)
        if not 1.0 < self.gamma < 2.0:
            raise ParameterError("gamma must lie in (1, 2)")

    @property
    def d(self) -> int:
        return len(self.h)

    @property
    def bandwidth(self) -> np.ndarray:
        return np.asarray(self.h)

    @property
    def active(self) -> np.ndarray:
        return self.bandwidth > 0

    @property
    def sigma2(self) -> float:
        return self.scale**2 / 3.0 if self.law == "uniform" else self.scale**2

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def even_moment(self, q: int) -> float:
        """E[V**(2q)] in closed form."""
        if self.law == "uniform":
            return self.scale ** (2 * q) / (2 * q + 1)
        return float(special.factorial2(2 * q - 1)) * self.scale ** (2 * q)

    def masked(self, active) -> "PerturbationConfig":
        """Zero the bandwidth outside the given coordinate indices."""
        h = np.zeros(self.d)
        idx = list(active)
        h[idx] = self.bandwidth[idx]
        return replace(self, h=tuple(h))

    def with_bandwidth(self, h) -> "PerturbationConfig":
        h = np.broadcast_to(np.asarray(h, dtype=float), (self.d,))
        return replace(self, h=tuple(h))


@dataclass(frozen=True)
class A2Report:
    beta_max: float
    margins: tuple
    active: tuple

    @property
    def passed(self) -> bool:
        return all(m >= -1e-15 for m, a in zip(self.margins, self.active) if a)

    @property
    def failing(self) -> list[int]:
        return [j for j, (m, a) in enumerate(zip(self.margins, self.active)) if a and m < -1e-15]


def validate_a2(cfg: PerturbationConfig, nodes) -> A2Report:
    """Margins 1/2 - beta_max * h_j * sigma for every coordinate."""
    beta_max = max(abs(float(b)) for b in nodes)
    margins = tuple(0.5 - beta_max * hj * cfg.sigma for hj in cfg.h)
    return A2Report(beta_max, margins, tuple(bool(a) for a in cfg.active))


def require_a2(cfg: PerturbationConfig, nodes) -> None:
    rep = validate_a2(cfg, nodes)
    if not rep.passed:
        j = rep.failing[0]
        raise A2Error(
            f"A2 violated on coordinate {j}: beta_max*h*sigma = "
            f"{rep.beta_max * cfg.h[j] * cfg.sigma:.4g} > 1/2; use a smaller c_h or scale"
        )


def default_config(
    d: int,
    order: int,
    coeffs: CoefficientSet,
    N: int,
    kind: str = "dimension_free_uniform",
    *,
    gamma: float = 1.5,
    c_h: float = 1.0,
    xi: float | None = None,
    sigma: float | None = None,
    mask=None,
) -> PerturbationConfig:
    """Theory-guided scales: xi = 1/(d * Gamma_{|u|+1}) or sigma = 1/sqrt(d).

    Bandwidth h = c_h * N**(-gamma/2) on every coordinate (or only on
    ``mask``). Explicit ``xi``/``sigma`` override the rule and select the law.
    """
    if d < 1:
        raise ParameterError("d must be >= 1")
    if coeffs.order < order and coeffs.scheme.kind != "single":
        raise ParameterError(f"coefficients solved for order {coeffs.order} < {order}")
    if xi is not None:
        law, scale = "uniform", xi
    elif sigma is not None:
        law, scale = "gaussian", sigma
    elif kind == "dimension_free_uniform":
        law, scale = "uniform", 1.0 / (d * coeffs.gamma(order + 1))
    elif kind == "gaussian_sqrt_d":
        law, scale = "gaussian", 1.0 / math.sqrt(d)
    else:
        raise ParameterError(f"unknown config kind {kind!r}")
    cfg = PerturbationConfig(law, scale, (bandwidth(N, gamma, c_h),) * d, gamma, c_h)
    if mask is not None:
        cfg = cfg.masked(mask)
    require_a2(cfg, coeffs.nodes)
    return cfg


@dataclass(frozen=True)
class PerturbationSample:
    V: np.ndarray
    config: PerturbationConfig

    @property
    def N(self) -> int:
        return self.V.shape[0]


def perturbations_from_uniforms(cfg: PerturbationConfig, U: np.ndarray) -> np.ndarray:
    """Map (..., d) uniforms on (0, 1) to perturbations; masked columns are zero."""
    if cfg.law == "uniform":
        V = (2.0 * U - 1.0) * cfg.scale
    else:
        V = special.ndtri(U) * cfg.scale
    V[..., ~cfg.active] = 0.0
    return V


def sample_perturbations(cfg: PerturbationConfig, N: int, stream: RandomStream) -> PerturbationSample:
    if N < 1:
        raise ParameterError("N must be >= 1")
    return PerturbationSample(perturbations_from_uniforms(cfg, stream.uniform(N, cfg.d)), cfg)


def sample_perturbation_batch(
    cfg: PerturbationConfig, count: int, N: int, stream: RandomStream
) -> np.ndarray:
    """(count, N, d) array; block i equals sample_perturbations(cfg, N, stream.substream(i)).V."""
    return perturbations_from_uniforms(cfg, uniform_substreams(stream, count, N, cfg.d))
