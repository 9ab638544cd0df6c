"""Generalized extreme value (GEV) distribution family.

The parameterisation is ``G_gamma((x - location) / scale)`` with

    G_gamma(z) = exp(-(1 + gamma z) ** (-1 / gamma)),   1 + gamma z > 0,

and the Gumbel form ``exp(-exp(-z))`` at ``gamma == 0``.  Every function
here is total on the reals: off-support points give a clamped CDF/tail
and a zero density rather than an exception, because optimizers and
quadrature routinely probe them.

Tail probabilities are the quantity everything downstream cares about, so
they are computed from the "hazard" ``z = (1 + gamma y) ** (-1/gamma)``
via ``-expm1(-z)``, which keeps full relative precision far below the
resolution of the CDF.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GUMBEL_TOL",
    "Domain",
    "GevParams",
    "domain_of_attraction",
    "gev_cdf",
    "gev_log_tail",
    "gev_pdf",
    "gev_quantile",
    "gev_quantile_from_log_tail",
    "gev_sample",
    "gev_tail",
    "von_mises_gamma",
]

#: Shapes with ``|gamma|`` below this use the Gumbel branch.
GUMBEL_TOL = 1e-9


@dataclass(frozen=True)
class GevParams:
    """Shape ``gamma``, scale ``a > 0`` and location ``b`` of a GEV law."""

    shape: float
    scale: float = 1.0
    location: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.shape) and math.isfinite(self.location)):
            raise ValueError("shape and location must be finite")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    @property
    def is_gumbel(self) -> bool:
        return abs(self.shape) < GUMBEL_TOL

    @property
    def lower_endpoint(self) -> float:
        if self.shape > 0 and not self.is_gumbel:
            return self.location - self.scale / self.shape
        return -math.inf

    @property
    def upper_endpoint(self) -> float:
        if self.shape < 0 and not self.is_gumbel:
            return self.location - self.scale / self.shape
        return math.inf

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.shape, self.scale, self.location)


class Domain(enum.Enum):
    FRECHET = "Frechet"
    GUMBEL = "Gumbel"
    WEIBULL = "Weibull"


def _log_hazard(x, params: GevParams):
    """Return ``log z`` where ``z = -log G(x)``, plus an in-support mask.

    Off-support values are ``+inf`` (left of a Frechet support, so the CDF
    is 0) or ``-inf`` (right of a Weibull support, so the CDF is 1).
    """
    x = np.asarray(x, dtype=float)
    y = (x - params.location) / params.scale
    if params.is_gumbel:
        return -y
    g = params.shape
    t = 1.0 + g * y
    with np.errstate(divide="ignore", invalid="ignore"):
        log_z = -np.log1p(g * y) / g
    off = t <= 0
    if np.any(off):
        log_z = np.where(off, np.inf if g > 0 else -np.inf, log_z)
    return log_z


def _scalar_or_array(out, x):
    return float(out) if np.ndim(x) == 0 else out


def gev_cdf(x, params: GevParams):
    """Distribution function ``G_gamma((x - b) / a)``."""
    log_z = _log_hazard(x, params)
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(log_z))
    return _scalar_or_array(out, x)


def gev_tail(x, params: GevParams):
    """Survival function ``1 - G``, accurate for tiny tail masses."""
    log_z = _log_hazard(x, params)
    with np.errstate(over="ignore"):
        out = -np.expm1(-np.exp(log_z))
    return _scalar_or_array(out, x)


def gev_log_tail(x, params: GevParams):
    """``log(1 - G(x))`` without underflow far out in the tail."""
    log_z = np.asarray(_log_hazard(x, params), dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        z = np.exp(log_z)
        # log(1 - e^{-z}) = log z + log((1 - e^{-z}) / z); second term -> -z/2
        small = z < 1e-8
        corr = np.where(small, -0.5 * z, np.log(-np.expm1(-z)) - log_z)
        out = np.where(np.isposinf(log_z), 0.0, log_z + corr)
    return _scalar_or_array(out, x)


def _check_probability(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise ValueError("probability levels must lie strictly inside (0, 1)")
    return u


def _quantile_from_log_hazard(log_z, params: GevParams):
    if params.is_gumbel:
        return params.location - params.scale * log_z
    g = params.shape
    with np.errstate(over="ignore"):
        return params.location + params.scale * np.expm1(-g * log_z) / g


def gev_quantile(u, params: GevParams):
    """Inverse CDF: ``b + a((-log u)^(-gamma) - 1)/gamma`` (Gumbel: ``b - a log(-log u))``."""
    u_arr = _check_probability(u)
    out = _quantile_from_log_hazard(np.log(-np.log(u_arr)), params)
    return _scalar_or_array(out, u)


def gev_quantile_from_log_tail(log_tail, params: GevParams):
    """Point ``x`` whose tail mass is ``exp(log_tail)``.

    Works for tail masses that underflow a double, which is where robust
    quantiles at very high levels end up.
    """
    lt = np.asarray(log_tail, dtype=float)
    if np.any(lt >= 0):
        raise ValueError("log tail must be negative")
    with np.errstate(under="ignore"):
        tail = np.exp(lt)
        # z = -log(1 - tail); log z = log tail + log(-log1p(-tail)/tail)
        corr = np.where(tail < 1e-8, 0.5 * tail, np.log(-np.log1p(-tail) / np.where(tail > 0, tail, 1.0)))
    out = _quantile_from_log_hazard(lt + corr, params)
    return _scalar_or_array(out, log_tail)


def gev_pdf(x, params: GevParams):
    """Density of the GEV law; zero off the support."""
    log_z = np.asarray(_log_hazard(x, params), dtype=float)
    finite = np.isfinite(log_z)
    lz = np.where(finite, log_z, 0.0)
    with np.errstate(over="ignore", under="ignore"):
        # g(x) = z^(1 + gamma) exp(-z) / a
        log_pdf = (1.0 + (0.0 if params.is_gumbel else params.shape)) * lz - np.exp(lz)
        out = np.where(finite, np.exp(log_pdf) / params.scale, 0.0)
    return _scalar_or_array(out, x)


def gev_sample(params: GevParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` variates by inverse transform."""
    u = rng.random(size)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return np.asarray(gev_quantile(u, params), dtype=float)


def domain_of_attraction(params: GevParams) -> tuple[Domain, float]:
    """Classify by the sign of the shape and return the right endpoint."""
    if params.is_gumbel:
        return Domain.GUMBEL, math.inf
    if params.shape > 0:
        return Domain.FRECHET, math.inf
    return Domain.WEIBULL, params.upper_endpoint


def von_mises_gamma(
    tail_fn: Callable[[float], float],
    density_fn: Callable[[float], float],
    x: float,
    step: float,
) -> float:
    """Central-difference estimate of ``d/dx [(1 - F) / F'](x)``.

    For a distribution in the domain of attraction of ``G_gamma`` this
    tends to ``gamma`` as ``x`` approaches the right endpoint.
    """

    def ratio(t: float) -> float:
        f = density_fn(t)
        if not f > 0:
            raise FloatingPointError(f"density vanished at {t!r}")
        return tail_fn(t) / f

    out = (ratio(x + step) - ratio(x - step)) / (2.0 * step)
    if not math.isfinite(out):
        raise FloatingPointError(f"von Mises ratio is not finite at {x!r}")
    return out
