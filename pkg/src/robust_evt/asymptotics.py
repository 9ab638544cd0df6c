"""Tail behaviour of worst-case distributions.

The worst-case shape ``gamma* = alpha / (alpha - 1) * gamma_ref`` governs the
domain of attraction of the worst-case tail when ``alpha > 1``.  The KL
case (``alpha == 1``) is special: over a Gumbel reference the worst-case
tail is Frechet with index 1, and over any other GEV reference it decays
only logarithmically.

The envelopes below bracket the worst-case tail between a closed-form
upper bound and the tail of an explicit feasible mixture.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .divergence import DivergenceSpec, lambert_w_exp, phi_alpha_inv, renyi_divergence_density
from .gev import GevParams, gev_log_tail, gev_pdf, gev_quantile, gev_tail

__all__ = [
    "InfeasibleMixtureError",
    "ShapeKind",
    "WorstCaseShape",
    "alpha_for_gamma_star",
    "choose_alpha",
    "feasible_mixture_weight",
    "gamma_star",
    "lower_envelope",
    "mixture_divergence",
    "mixture_mass",
    "normalizing_constant",
    "tail_index_estimate",
    "upper_envelope",
]


class ShapeKind(enum.Enum):
    FINITE = "finite"
    KL_OVER_GUMBEL = "kl-over-gumbel"
    KL_LOGARITHMIC = "kl-logarithmic"


@dataclass(frozen=True)
class WorstCaseShape:
    kind: ShapeKind
    gamma_star: float | None

    @property
    def has_domain_of_attraction(self) -> bool:
        return self.kind is not ShapeKind.KL_LOGARITHMIC


def gamma_star(alpha: float, gamma_ref: float) -> WorstCaseShape:
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if alpha == 1:
        if gamma_ref == 0:
            return WorstCaseShape(ShapeKind.KL_OVER_GUMBEL, 1.0)
        return WorstCaseShape(ShapeKind.KL_LOGARITHMIC, None)
    return WorstCaseShape(ShapeKind.FINITE, alpha / (alpha - 1.0) * gamma_ref)


def choose_alpha(gamma0: float, epsilon: float) -> float:
    """Order ``alpha`` whose worst-case shape is ``gamma0 + epsilon``.

    Only defined for a Frechet-type fit (``gamma0 > 0``).
    """
    if not gamma0 > 0:
        raise ValueError(f"alpha selection from a confidence interval needs gamma0 > 0, got {gamma0}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return (gamma0 + epsilon) / epsilon


def alpha_for_gamma_star(gamma0: float, target: float) -> float:
    """Back-solve ``alpha`` from a target worst-case shape ``target > gamma0 > 0``."""
    if not (target > gamma0 > 0):
        raise ValueError(f"need target > gamma0 > 0, got target={target}, gamma0={gamma0}")
    return target / (target - gamma0)


def tail_index_estimate(tail_fn: Callable[[float], float], x_grid) -> float:
    """Least-squares slope of ``log tail`` against ``log x``."""
    x = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(x) <= 0) or np.any(x <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    tail = np.array([tail_fn(v) for v in x], dtype=float)
    ok = tail > 0
    if ok.sum() * 2 <= len(x) or ok.sum() < 2:
        raise FloatingPointError("tail underflows on more than half of the grid")
    return float(np.polyfit(np.log(x[ok]), np.log(tail[ok]), 1)[0])


# --- envelopes ---------------------------------------------------------------


def _check_tail(x: float, model: GevParams) -> float:
    tail = float(gev_tail(x, model))
    if not 0.0 < tail < 1.0:
        raise ValueError(f"reference tail at x={x!r} is {tail!r}; need it inside (0, 1)")
    return tail


def upper_envelope(x: float, model: GevParams, spec: DivergenceSpec) -> float:
    """``phi^{-1}(delta_bar / A) * A`` with ``A`` the reference tail at ``x``."""
    tail = _check_tail(x, model)
    if spec.alpha > 1:
        # (delta_bar/A)^(1/alpha) A, in logs to avoid overflow of delta_bar/A
        log_a = float(gev_log_tail(x, model))
        return math.exp(math.log(spec.delta_bar) / spec.alpha + (1.0 - 1.0 / spec.alpha) * log_a)
    if spec.delta == 0:
        return tail
    return float(phi_alpha_inv(spec.delta / tail, 1.0)) * tail


def _log_density_ratio(log_u: float, c: float, alpha: float) -> float:
    """``log phi^{-1}(c / (u (1 - log u)^2))`` for the reference tail ``u = exp(log_u)``."""
    log_y = math.log(c) - log_u - 2.0 * math.log1p(-log_u)
    if alpha > 1:
        return log_y / alpha
    # phi_1^{-1}(y) = y / W(y) = exp(W(y))
    return lambert_w_exp(log_y)


def mixture_mass(c: float, alpha: float) -> float:
    """Total mass ``int_0^1 phi^{-1}(c / (u (1 - log u)^2)) du`` of the unnormalised ``Q``."""

    # u = exp(-s) spreads the singularity at u = 0 over s in (0, inf)
    def f(s: float) -> float:
        return math.exp(_log_density_ratio(-s, c, alpha) - s)

    return float(integrate.quad(f, 0.0, math.inf, limit=500, epsabs=1e-13, epsrel=1e-12)[0])


def normalizing_constant(alpha: float) -> float:
    """The ``c`` for which ``Q`` is a probability measure (``alpha > 1`` only)."""
    if not alpha > 1:
        raise ValueError("a normalising c exists only for alpha > 1; for KL the ratio is >= 1 everywhere")
    return mixture_mass(1.0, alpha) ** (-alpha)


def mixture_divergence(model: GevParams, spec: DivergenceSpec, a: float, c: float) -> float:
    """``D_alpha(aQ + (1-a)P_ref, P_ref)``.

    ``Q`` has density ratio proportional to ``phi^{-1}(c / (A (1 - log A)^2))``
    with ``A`` the reference tail, normalised by :func:`mixture_mass`.  The
    divergence is invariant under the map ``x -> s = -log A(x)``, which sends
    a continuous reference to the unit exponential law; integrating there
    reaches tail masses no floating-point ``x`` can resolve, so the result
    does not depend on ``model``.
    """
    del model  # kept for the signature; see docstring
    if not 0.0 <= a < 1.0:
        raise ValueError("mixing weight must lie in [0, 1)")
    if a == 0.0:
        return 0.0
    log_w = math.log(a / mixture_mass(c, spec.alpha))
    log_1ma = math.log1p(-a)

    def log_p_mix(s: float) -> float:
        return float(np.logaddexp(log_w + _log_density_ratio(-s, c, spec.alpha), log_1ma)) - s

    def log_p_ref(s: float) -> float:
        return -s

    return renyi_divergence_density(
        log_p_mix,
        log_p_ref,
        spec.alpha,
        (0.0, math.inf),
        points=[1.0, 10.0, 100.0],
        log_densities=True,
        integrand_cutoff=math.inf,
    )


def feasible_mixture_weight(
    model: GevParams, spec: DivergenceSpec, c: float, safety: float = 0.95
) -> float:
    """Largest mixing weight (times ``safety``) keeping the mixture in the ball."""

    def excess(a: float) -> float:
        return mixture_divergence(model, spec, a, c) - spec.delta

    hi = 0.999
    if excess(hi) <= 0:
        return hi * safety
    a_max = optimize.brentq(excess, 0.0, hi, xtol=1e-10)
    return a_max * safety


class InfeasibleMixtureError(ValueError):
    pass


def lower_envelope(
    x: float,
    model: GevParams,
    spec: DivergenceSpec,
    a: float,
    c: float,
    *,
    check: bool = True,
) -> float:
    """Tail lower bound ``a phi^{-1}(c / (A (1 - log A)^2)) A / Z(c)``.

    ``Z(c)`` normalises ``Q``; it equals 1 when ``c`` is
    :func:`normalizing_constant`.  The bound is valid once the mixture is in
    the ball (checked unless ``check=False``) and ``A(x) <= 1/e``, where the
    density ratio of ``Q`` is monotone.
    """
    if not 0.0 < a < 1.0 or not c > 0:
        raise ValueError("need a in (0, 1) and c > 0")
    if check:
        div = mixture_divergence(model, spec, a, c)
        if not div <= spec.delta:
            raise InfeasibleMixtureError(f"mixture divergence {div:.6g} exceeds delta={spec.delta}")
    _check_tail(x, model)
    log_a = float(gev_log_tail(x, model))
    return a * math.exp(_log_density_ratio(log_a, c, spec.alpha) + log_a) / mixture_mass(c, spec.alpha)
