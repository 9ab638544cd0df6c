"""Worst-case tails, quantiles and expectations over a divergence ball.

The worst-case tail at ``x`` only depends on the reference tail mass
``A = P_ref(x, inf)``: the optimal likelihood ratio is two-valued,
``theta`` above ``x`` and ``(1 - theta A) / (1 - A)`` below, with ``theta``
fixed by the budget equation

    A phi(theta) + (1 - A) phi((1 - theta A) / (1 - A)) = delta_bar.

All kernels here take ``log A`` rather than ``A`` so that tail masses far
below double precision (high block-maxima levels ``p**n``) stay usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .divergence import DivergenceSpec, phi_alpha
from .gev import GevParams, gev_log_tail, gev_quantile, gev_quantile_from_log_tail, gev_tail

__all__ = [
    "InfeasibleBudgetError",
    "NonIntegrableError",
    "ThetaSolution",
    "TiltCoefficients",
    "likelihood_ratio",
    "robust_expectation",
    "solve_theta",
    "solve_theta_log",
    "solve_tilt",
    "worst_case_log_tail",
    "worst_case_quantile",
    "worst_case_tail",
]

_XTOL = 1e-14
_RTOL = 4 * np.finfo(float).eps


class InfeasibleBudgetError(ValueError):
    """The budget exceeds what any likelihood ratio of the given form attains."""


class NonIntegrableError(ValueError):
    """The exponential moment needed by the KL tilt does not exist."""


@dataclass(frozen=True)
class ThetaSolution:
    """``theta`` overflows to ``inf`` for tiny tails; ``log_theta`` does not."""

    theta: float
    worst_tail: float
    saturated: bool
    log_worst_tail: float
    log_theta: float


def _exp(v: float) -> float:
    return math.exp(v) if v < 709.78 else math.inf


def _log1mexp(log_x: float) -> float:
    """``log(1 - exp(log_x))`` for ``log_x <= 0``."""
    if log_x > -math.log(2.0):
        return math.log(-math.expm1(log_x))
    return math.log1p(-math.exp(log_x))


def _two_point_excess(log_a: float, log_t: float, alpha: float) -> float:
    """Budget used by moving tail mass ``A -> t``, minus ``phi(1)``."""
    log_1ma = _log1mexp(log_a)
    if log_t >= 0.0:
        # all mass above x
        if alpha == 1:
            return -log_a
        return math.expm1(min((1.0 - alpha) * log_a, 709.0))
    log_1mt = _log1mexp(log_t)
    t = math.exp(log_t)
    if alpha == 1:
        return t * (log_t - log_a) + (1.0 - t) * (log_1mt - log_1ma)
    with np.errstate(over="ignore"):
        head = math.exp(min((1.0 - alpha) * log_a + alpha * log_t, 709.0))
    return head + math.expm1(alpha * log_1mt - (alpha - 1.0) * log_1ma)


def _check_log_tail(log_a: float) -> None:
    if not (log_a < 0.0) or math.isinf(log_a) or math.isnan(log_a):
        raise ValueError("reference tail must lie strictly inside (0, 1)")


def solve_theta_log(log_a: float, spec: DivergenceSpec) -> ThetaSolution:
    """Solve the budget equation given ``log`` of the reference tail mass."""
    _check_log_tail(log_a)
    if spec.delta == 0:
        return ThetaSolution(1.0, math.exp(log_a), False, log_a, 0.0)
    # putting all the mass above x costs -log A in both the KL and Renyi scales
    if -log_a <= spec.delta:
        return ThetaSolution(_exp(-log_a), 1.0, True, 0.0, -log_a)
    target = spec.excess_budget

    def f(s: float) -> float:
        return _two_point_excess(log_a, log_a + s, spec.alpha) - target

    s_max = -log_a
    log_theta = optimize.brentq(f, 0.0, s_max, xtol=_XTOL, rtol=_RTOL, maxiter=500)
    log_t = log_a + log_theta
    return ThetaSolution(_exp(log_theta), math.exp(log_t), False, log_t, log_theta)


def solve_theta(x: float, model: GevParams, spec: DivergenceSpec) -> ThetaSolution:
    """Optimal tail-tilt ``theta_x`` at ``x`` for the GEV reference ``model``."""
    tail = float(gev_tail(x, model))
    if not 0.0 < tail < 1.0:
        raise ValueError(f"reference tail at x={x!r} is {tail!r}; need a split point inside the support")
    log_a = float(gev_log_tail(x, model))
    if spec.delta == 0:
        return ThetaSolution(1.0, tail, False, log_a, 0.0)
    return solve_theta_log(log_a, spec)


def worst_case_log_tail(log_a: float, spec: DivergenceSpec) -> float:
    """``log`` of the worst-case tail for a reference tail mass ``exp(log_a)``."""
    return solve_theta_log(log_a, spec).log_worst_tail


def worst_case_tail(x, model: GevParams, spec: DivergenceSpec):
    """``sup { P(x, inf) : D_alpha(P, P_GEV) <= delta }``; vectorised over ``x``."""
    xs = np.asarray(x, dtype=float)
    out = np.array([solve_theta(float(v), model, spec).worst_tail for v in xs.ravel()]).reshape(xs.shape)
    return float(out) if xs.ndim == 0 else out


def worst_case_quantile(u, model: GevParams, spec: DivergenceSpec):
    """Worst-case ``u``-quantile ``inf{x : 1 - Fbar_alpha(x) >= u}``.

    Equal to the largest ``u``-quantile over the divergence ball.  Solved
    in the reference tail mass ``A < 1 - u`` of the quantile point from

        A phi((1 - u)/A) + (1 - A) phi(u/(1 - A)) = delta_bar,

    whose left side decreases in ``A``.
    """
    us = np.asarray(u, dtype=float)
    if np.any(~((us > 0) & (us < 1))):
        raise ValueError("probability levels must lie strictly inside (0, 1)")
    out = np.array([_worst_case_quantile_scalar(float(v), model, spec) for v in us.ravel()]).reshape(us.shape)
    return float(out) if us.ndim == 0 else out


def robust_reference_log_tail(u: float, spec: DivergenceSpec) -> float:
    """Reference ``log`` tail mass at the worst-case ``u``-quantile."""
    log_t = math.log1p(-u)
    if spec.delta == 0:
        return log_t
    target = spec.excess_budget

    def f(log_a: float) -> float:
        return _two_point_excess(log_a, log_t, spec.alpha) - target

    hi = log_t
    if f(hi) >= 0.0:
        # budget below round-off of the excess at the reference point
        return log_t
    step = 1.0
    lo = hi - step
    while f(lo) <= 0.0:
        step *= 2.0
        lo = hi - step
        if step > 1e6:
            raise InfeasibleBudgetError("could not bracket the worst-case quantile")
    return optimize.brentq(f, lo, hi, xtol=_XTOL, rtol=_RTOL, maxiter=500)


def _worst_case_quantile_scalar(u: float, model: GevParams, spec: DivergenceSpec) -> float:
    if spec.delta == 0:
        return float(gev_quantile(u, model))
    log_a = robust_reference_log_tail(u, spec)
    x = float(gev_quantile_from_log_tail(log_a, model))
    return max(x, float(gev_quantile(u, model)))


# --- general objectives ----------------------------------------------------


@dataclass(frozen=True)
class TiltCoefficients:
    """Likelihood ratio ``c1 exp(c2 X)`` (KL) or ``(c1 + c2 X)_+^(1/(alpha-1))``."""

    c1: float
    c2: float
    alpha: float


def likelihood_ratio(coeffs: TiltCoefficients, values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if coeffs.alpha == 1:
        return coeffs.c1 * np.exp(coeffs.c2 * v)
    return np.maximum(coeffs.c1 + coeffs.c2 * v, 0.0) ** (1.0 / (coeffs.alpha - 1.0))


def _reference(objective, probs, n_samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if callable(objective):
        rng = np.random.Generator(np.random.Philox(seed))
        values = np.asarray(objective(rng, n_samples), dtype=float).ravel()
        probs = None
    else:
        values = np.asarray(objective, dtype=float).ravel()
    if probs is None:
        probs = np.full(len(values), 1.0 / len(values))
    probs = np.asarray(probs, dtype=float).ravel()
    if len(values) == 0 or values.shape != probs.shape:
        raise ValueError("values and probabilities must be nonempty and of equal length")
    if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=1e-9):
        raise ValueError("reference probabilities must be nonnegative and sum to 1")
    keep = probs > 0
    return values[keep], probs[keep] / probs[keep].sum()


def _kl_tilt(w: np.ndarray, p: np.ndarray, c2: float) -> tuple[float, float]:
    """Return ``(log c1, KL budget)`` for the exponential tilt of standardised ``w``."""
    log_w = np.log(p) + c2 * w
    log_norm = special.logsumexp(log_w)
    q = np.exp(log_w - log_norm)
    # E_p[L log L] = E_q[log L], L = exp(c2 w - log_norm)
    kl = float(np.sum(q * (c2 * w - log_norm)))
    return -log_norm, kl


def _power_c1(w: np.ndarray, p: np.ndarray, c2: float, beta: float) -> float:
    def norm(c1: float) -> float:
        return float(np.sum(p * np.maximum(c1 + c2 * w, 0.0) ** beta)) - 1.0

    if c2 == 0.0:
        return 1.0
    lo = -c2 * w.max()
    # padded so rounding in sum(p) cannot leave the bracket one-signed
    hi = (1.0 + c2 * max(-w.min(), 0.0)) * (1.0 + 1e-12) + 1e-12
    return optimize.brentq(norm, lo, hi, xtol=1e-15, rtol=_RTOL, maxiter=500)


def solve_tilt(
    objective,
    spec: DivergenceSpec,
    probs: Sequence[float] | None = None,
    *,
    n_samples: int = 10_000,
    seed: int = 0,
) -> TiltCoefficients:
    """Coefficients of the optimal likelihood ratio for ``sup E_P[X]`` over the ball.

    ``objective`` is either the atoms of ``X`` (with ``probs`` their
    reference probabilities; uniform if omitted) or a sampler
    ``f(rng, n) -> values`` whose draws are used as an empirical reference.
    The outer search on ``c2 >= 0`` matches the budget; ``c1`` normalises.
    """
    values, p = _reference(objective, probs, n_samples, seed)
    alpha = spec.alpha
    if not np.all(np.isfinite(values)):
        if alpha == 1:
            raise NonIntegrableError("X is not finite on the reference support; no exponential moment")
        raise ValueError("objective values must be finite")
    spread = float(values.max() - values.min())
    if spec.delta == 0 or spread == 0:
        return TiltCoefficients(1.0, 0.0, alpha)
    center = float(np.dot(p, values))
    w = (values - center) / spread
    top_mass = float(p[values == values.max()].sum())
    # concentrating on the largest atoms is the limit c2 -> inf
    if spec.delta >= -math.log(top_mass):
        raise InfeasibleBudgetError(
            f"delta={spec.delta} reaches the mass-on-the-maximum limit {-math.log(top_mass):.6g}"
        )

    if alpha == 1:

        def excess(c2: float) -> float:
            return _kl_tilt(w, p, c2)[1] - spec.delta

    else:
        beta = 1.0 / (alpha - 1.0)

        def excess(c2: float) -> float:
            c1 = _power_c1(w, p, c2, beta)
            L = np.maximum(c1 + c2 * w, 0.0) ** beta
            return float(np.sum(p * L**alpha)) - 1.0 - spec.excess_budget

    hi = 1.0
    while excess(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise InfeasibleBudgetError("could not bracket the budget")
    c2n = optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=_RTOL, maxiter=1000)

    # undo the standardisation X -> (X - center)/spread
    if alpha == 1:
        log_c1 = _kl_tilt(w, p, c2n)[0] - c2n * center / spread
        return TiltCoefficients(math.exp(log_c1), c2n / spread, alpha)
    c1n = _power_c1(w, p, c2n, 1.0 / (alpha - 1.0))
    return TiltCoefficients(c1n - c2n * center / spread, c2n / spread, alpha)


def robust_expectation(
    objective,
    spec: DivergenceSpec,
    probs: Sequence[float] | None = None,
    *,
    n_samples: int = 10_000,
    seed: int = 0,
) -> float:
    """``sup { E_P[X] : D_alpha(P, P_ref) <= delta }`` via the optimal tilt."""
    values, p = _reference(objective, probs, n_samples, seed)
    if spec.delta == 0:
        return float(np.dot(p, values))
    coeffs = solve_tilt(values, spec, p)
    if coeffs.alpha == 1:
        # evaluate c1 exp(c2 v) in log space; c1 may be tiny or huge
        log_l = math.log(coeffs.c1) + coeffs.c2 * values
        return float(np.sum(p * np.exp(log_l) * values))
    return float(np.sum(p * likelihood_ratio(coeffs, values) * values))


def tilt_constraints(coeffs: TiltCoefficients, values, probs) -> tuple[float, float]:
    """Return ``(E[L], E[phi(L)])`` under the reference for a check."""
    p = np.asarray(probs, dtype=float)
    L = likelihood_ratio(coeffs, values)
    return float(np.sum(p * L)), float(np.sum(p * phi_alpha(L, coeffs.alpha)))


def worst_case_tail_fn(model: GevParams, spec: DivergenceSpec) -> Callable[[float], float]:
    return lambda x: worst_case_tail(x, model, spec)
