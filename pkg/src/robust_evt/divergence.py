"""Renyi / KL divergences, their convex generators and a k-NN estimator.

Conventions
-----------
For order ``alpha > 1`` the generator is ``phi(x) = x**alpha`` and a ball of
radius ``delta`` corresponds to the budget ``exp((alpha - 1) delta)`` on
``E[phi(L)]``; for ``alpha == 1`` (KL) the generator is ``x log x`` and the
budget is ``delta`` itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.spatial import cKDTree

from .gev import GevParams, gev_sample

__all__ = [
    "DivergenceSpec",
    "DivergenceError",
    "knn_divergence",
    "lambert_w",
    "phi_alpha",
    "phi_alpha_inv",
    "renyi_divergence_density",
    "renyi_divergence_samples",
]


class DivergenceError(ValueError):
    pass


@dataclass(frozen=True)
class DivergenceSpec:
    """Divergence ball ``{P : D_alpha(P, P_ref) <= delta}``."""

    alpha: float
    delta: float
    delta_bar: float = field(init=False)

    def __post_init__(self) -> None:
        if not (self.alpha >= 1 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be a finite number >= 1, got {self.alpha}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be a finite number >= 0, got {self.delta}")
        try:
            object.__setattr__(self, "delta_bar", budget(self.alpha, self.delta))
        except OverflowError:
            raise ValueError(
                f"exp((alpha - 1) delta) overflows for alpha={self.alpha}, delta={self.delta}"
            ) from None

    @property
    def is_kl(self) -> bool:
        return self.alpha == 1

    @property
    def excess_budget(self) -> float:
        """``delta_bar - phi(1)``, computed without cancellation."""
        if self.is_kl:
            return self.delta
        return math.expm1((self.alpha - 1.0) * self.delta)


def budget(alpha: float, delta: float) -> float:
    if alpha == 1:
        return float(delta)
    return math.exp((alpha - 1.0) * delta)


def phi_alpha(x, alpha: float):
    """``x**alpha`` for ``alpha > 1``, ``x log x`` (with ``0 log 0 = 0``) for KL."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("phi_alpha is defined on x >= 0")
    if alpha == 1:
        out = special.xlogy(arr, arr)
    else:
        out = arr**alpha
    return float(out) if np.ndim(x) == 0 else out


def lambert_w(x, tol: float = 1e-12, max_iter: int = 50):
    """Principal branch of the Lambert W function for ``x >= 0``.

    Halley iteration on ``w e^w - x`` started from a log-based guess.
    """
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise ValueError("lambert_w is implemented for finite x >= 0")
    w = np.zeros_like(arr)
    small = arr < 1.0
    w[small] = arr[small] * (1.0 - arr[small] / 2.0)
    big = arr >= 1.0
    if np.any(big):
        l1 = np.log(arr[big])
        l2 = np.log(np.maximum(l1, 1e-300))
        guess = np.where(arr[big] < 3.0, 0.5 * l1 + 0.5, l1 - l2 + l2 / np.maximum(l1, 1.0))
        w[big] = guess
    for _ in range(max_iter):
        ew = np.exp(w)
        f = w * ew - arr
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w = w - step
        if np.all(np.abs(step) <= tol * np.maximum(np.abs(w), 1e-300)):
            break
    return float(w[0]) if np.ndim(x) == 0 else w


def lambert_w_exp(log_x: float, tol: float = 1e-13) -> float:
    """``W(exp(log_x))`` for arguments whose exponential would overflow."""
    if log_x < 700.0:
        return float(lambert_w(math.exp(log_x)))
    # Newton on w + log w = log_x
    w = log_x - math.log(log_x)
    for _ in range(50):
        step = (w + math.log(w) - log_x) / (1.0 + 1.0 / w)
        w -= step
        if abs(step) <= tol * w:
            break
    return w


def phi_alpha_inv(y, alpha: float):
    """Inverse of ``phi_alpha`` on ``[0, inf)`` (``alpha > 1``) or ``[1, inf)`` (KL).

    For KL this is ``y / W(y)``; ``y = 0`` maps to 1.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("phi_alpha_inv needs y >= 0")
    if alpha > 1:
        out = arr ** (1.0 / alpha)
    else:
        flat = np.atleast_1d(arr)
        out = np.ones_like(flat)
        pos = flat > 0
        if np.any(pos):
            yp = flat[pos]
            # y / W(y) = exp(W(y)); exp form avoids 0/0 as y -> 0
            out[pos] = np.exp(lambert_w(yp))
        out = out.reshape(arr.shape)
    return float(out) if np.ndim(y) == 0 else out


def renyi_divergence_density(
    p: Callable[[float], float],
    q: Callable[[float], float],
    alpha: float,
    support: tuple[float, float],
    *,
    points: list[float] | None = None,
    log_densities: bool = False,
    integrand_cutoff: float = 1e12,
    epsabs: float = 1e-10,
    epsrel: float = 1e-10,
    limit: int = 500,
) -> float:
    """``D_alpha(P, Q)`` for densities ``p`` and ``q`` by adaptive quadrature.

    With ``log_densities=True`` the callables return log-densities, which
    keeps integrands with unbounded ratios finite.  Returns ``inf`` when
    ``p`` exceeds ``epsabs`` where ``q`` vanishes, when the integrand
    exceeds ``integrand_cutoff`` anywhere the quadrature looks (it grows
    at an edge of the support), or when the integral does not converge.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    lo, hi = support
    blown_up = False

    def integrand(t: float) -> float:
        nonlocal blown_up
        if log_densities:
            lp, lq = p(t), q(t)
        else:
            pt, qt = p(t), q(t)
            lp = math.log(pt) if pt > 0 else -math.inf
            lq = math.log(qt) if qt > 0 else -math.inf
        if lp == -math.inf:
            return 0.0
        if lq == -math.inf:
            # q underflowing under a p that is itself negligible is not support mismatch
            if math.exp(lp) > epsabs:
                blown_up = True
            return 0.0
        log_r = lp - lq
        if alpha == 1:
            value = math.exp(lp) * log_r
        else:
            value = math.exp(min(alpha * log_r + lq, 700.0))
        if abs(value) > integrand_cutoff:
            blown_up = True
        return value

    kwargs = dict(epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)
    edges = [lo, *sorted(x for x in (points or []) if lo < x < hi), hi]
    parts, errors, flagged = [], [], False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for e0, e1 in zip(edges, edges[1:]):
            out = integrate.quad(integrand, e0, e1, **kwargs)
            parts.append(out[0])
            errors.append(out[1])
            # quad reports trouble in a fourth element
            flagged = flagged or len(out) > 3
    value = math.fsum(parts)
    # a warning only means non-convergence when the error estimate is material
    if flagged and math.fsum(errors) > 1e-6 * max(1.0, abs(value)):
        return math.inf
    if blown_up or not math.isfinite(value):
        return math.inf
    if alpha == 1:
        return max(value, 0.0)
    if value <= 0:
        return math.inf
    return max(math.log(value) / (alpha - 1.0), 0.0)


def renyi_divergence_samples(x: np.ndarray, y: np.ndarray, alpha: float, k: int = 5) -> float:
    """Two-sample k-NN estimate of ``D_alpha(P, Q)`` from ``x ~ P`` and ``y ~ Q``.

    Uses the ratio of the k-th nearest-neighbour distance of each ``x_i``
    within ``x`` (``rho``) and within ``y`` (``nu``).  For KL this is the
    Wang-Kulkarni-Verdu estimator; for ``alpha > 1`` the plug-in for
    ``E_P[(p/q)^(alpha - 1)]`` with the bias correction
    ``Gamma(k)^2 / (Gamma(k - alpha + 1) Gamma(k + alpha - 1))``.
    Zero distances (ties) are discarded.  The result is not clamped.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    n, m = len(x), len(y)
    if alpha > 1 and not k > alpha - 1:
        raise ValueError(f"k={k} too small for alpha={alpha}; need k > alpha - 1")
    rho = cKDTree(x).query(x, k=k + 1)[0][:, -1]
    nu = cKDTree(y).query(x, k=k)[0]
    nu = nu if nu.ndim == 1 else nu[:, -1]
    keep = (rho > 0) & (nu > 0)
    if not np.any(keep):
        raise DivergenceError("all nearest-neighbour distances are zero")
    rho, nu = rho[keep], nu[keep]
    # density ratio estimate p/q at x_i, dimension d = 1
    log_ratio = np.log(m / (n - 1)) + np.log(nu) - np.log(rho)
    if alpha == 1:
        return float(np.mean(log_ratio))
    log_b = 2 * special.gammaln(k) - special.gammaln(k - alpha + 1) - special.gammaln(k + alpha - 1)
    log_terms = (alpha - 1.0) * log_ratio
    log_mean = special.logsumexp(log_terms) - math.log(len(log_terms))
    return float((log_mean + log_b) / (alpha - 1.0))


def knn_divergence(
    sample,
    model: GevParams,
    alpha: float,
    k: int = 5,
    model_sample_size: int | None = None,
    seed: int = 0,
) -> float:
    """Estimate ``D_alpha(empirical, model)`` against seeded draws from ``model``.

    ``model_sample_size`` defaults to ten times the sample size.  Negative
    estimates are clamped to zero.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if k < 1:
        raise ValueError("k must be a positive integer")
    if len(np.unique(x)) < k + 1:
        raise DivergenceError(f"need at least k+1={k + 1} distinct sample points, got {len(np.unique(x))}")
    if model_sample_size is None:
        model_sample_size = 10 * len(x)
    if model_sample_size < k + 1:
        raise ValueError("model_sample_size must be at least k+1")
    rng = np.random.Generator(np.random.Philox(seed))
    y = gev_sample(model, model_sample_size, rng)
    return max(renyi_divergence_samples(x, y, alpha, k), 0.0)
