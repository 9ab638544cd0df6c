"""Block maxima and maximum-likelihood calibration of a GEV model."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .gev import GevParams, gev_quantile

__all__ = [
    "BlockMaxima",
    "FitResult",
    "block_maxima",
    "fit_gev_mle",
    "gev_loglik",
    "gev_loglik_grad",
    "quantile_stderr",
    "return_level",
    "return_level_stderr",
    "scaled_gradient",
]

EULER_GAMMA = 0.5772156649015329
MIN_RELIABLE = 10


@dataclass(frozen=True)
class BlockMaxima:
    block_size: int
    maxima: np.ndarray
    dropped_tail_count: int


def block_maxima(data, n: int) -> BlockMaxima:
    """Maxima of consecutive blocks of size ``n``; a trailing partial block is dropped."""
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("data is empty")
    if n < 1 or n > x.size:
        raise ValueError(f"block size must be in [1, {x.size}], got {n}")
    m = x.size // n
    maxima = x[: m * n].reshape(m, n).max(axis=1)
    return BlockMaxima(block_size=n, maxima=maxima, dropped_tail_count=x.size - m * n)


# --- likelihood --------------------------------------------------------------


def _log1p_ratio(u):
    """``log1p(u) / u`` with the removable singularity at 0."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-5
    safe = np.where(small, 1.0, u)
    return np.where(small, 1.0 - u / 2.0 + u * u / 3.0, np.log1p(safe) / safe)


def _curvature_ratio(u):
    """``(log1p(u) - u/(1+u)) / u**2``, which tends to 1/2 at 0."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-3
    safe = np.where(small, 1.0, u)
    series = 0.5 - 2.0 * u / 3.0 + 0.75 * u**2 - 0.8 * u**3 + 5.0 / 6.0 * u**4
    return np.where(small, series, (np.log1p(safe) - safe / (1.0 + safe)) / safe**2)


def _terms(theta, x):
    gamma, scale, loc = theta
    y = (x - loc) / scale
    u = gamma * y
    t = 1.0 + u
    return gamma, scale, y, u, t


def gev_loglik(theta, x) -> float:
    """Log-likelihood of ``(shape, scale, location)``; ``-inf`` off the feasible set."""
    gamma, scale, y, u, t = _terms(theta, np.asarray(x, dtype=float))
    if scale <= 0 or np.any(t <= 0):
        return -math.inf
    log_t = np.log1p(u)
    log_z = -y * _log1p_ratio(u)
    return float(np.sum(-math.log(scale) - log_t + log_z - np.exp(log_z)))


def gev_loglik_grad(theta, x) -> np.ndarray:
    """Analytic gradient of :func:`gev_loglik` in ``(shape, scale, location)``."""
    x = np.asarray(x, dtype=float)
    gamma, scale, y, u, t = _terms(theta, x)
    z = np.exp(-y * _log1p_ratio(u))
    dldy = (z - gamma - 1.0) / t
    d_gamma = (1.0 - z) * y**2 * _curvature_ratio(u) - y / t
    d_loc = -dldy / scale
    d_scale = -1.0 / scale - y * dldy / scale
    return np.array([d_gamma.sum(), d_scale.sum(), d_loc.sum()])


def scaled_gradient(theta, x) -> np.ndarray:
    """Gradient of the mean negative log-likelihood in scale-free coordinates.

    Derivatives with respect to ``scale`` and ``location`` are multiplied by
    ``scale`` so the result does not depend on the units of the data.
    """
    g = -gev_loglik_grad(theta, x) / len(x)
    return g * np.array([1.0, theta[1], theta[1]])


def _hessian(theta, x) -> np.ndarray:
    """Central-difference Hessian of the negative log-likelihood."""
    theta = np.asarray(theta, dtype=float)
    h = np.array([1e-5, 1e-5 * theta[1], 1e-5 * theta[1]])
    H = np.empty((3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h[i]
        H[:, i] = -(gev_loglik_grad(theta + e, x) - gev_loglik_grad(theta - e, x)) / (2 * h[i])
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class FitResult:
    params: GevParams
    covariance: np.ndarray
    gamma_ci: tuple[float, float]
    log_likelihood: float
    converged: bool
    confidence: float = 0.95
    n: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def gamma_halfwidth(self) -> float:
        return 0.5 * (self.gamma_ci[1] - self.gamma_ci[0])


def _start(x: np.ndarray) -> np.ndarray:
    scale = float(np.std(x, ddof=1)) * math.sqrt(6.0) / math.pi
    loc = float(np.mean(x)) - EULER_GAMMA * scale
    return np.array([0.1, scale, loc])


def _feasible_start(x: np.ndarray) -> np.ndarray:
    theta = _start(x)
    for g in (0.1, 0.0, 0.05, -0.05, 0.2, 0.5):
        theta[0] = g
        if math.isfinite(gev_loglik(theta, x)):
            return theta
    return np.array([0.0, theta[1], theta[2]])


def _newton_polish(theta, x, tol: float = 1e-10, max_iter: int = 50):
    ll = gev_loglik(theta, x)
    for _ in range(max_iter):
        g = scaled_gradient(theta, x)
        if np.max(np.abs(g)) <= tol:
            return theta, ll, True
        H = _hessian(theta, x)
        grad = -gev_loglik_grad(theta, x)
        try:
            step = -np.linalg.solve(H, grad)
            if not np.all(np.isfinite(step)) or np.dot(step, grad) >= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = -grad / np.maximum(np.abs(np.diag(H)), 1e-12)
        lam = 1.0
        while lam > 1e-12:
            trial = theta + lam * step
            ll_trial = gev_loglik(trial, x)
            if trial[1] > 0 and ll_trial >= ll - 1e-12 * abs(ll):
                break
            lam *= 0.5
        else:
            break
        theta, ll = trial, ll_trial
    return theta, ll, bool(np.max(np.abs(scaled_gradient(theta, x))) <= 1e-6)


def fit_gev_mle(maxima, confidence: float = 0.95) -> FitResult:
    """Maximum-likelihood GEV fit with observed-information intervals.

    Nelder-Mead from moment-type starting values, then damped Newton steps
    on the analytic score.  The covariance is the inverse of the
    finite-difference observed information; the shape interval is the
    normal approximation at ``confidence``.
    """
    x = np.asarray(maxima, dtype=float).ravel()
    if x.size < 3:
        raise ValueError("need at least 3 maxima to fit a GEV model")
    if not np.all(np.isfinite(x)):
        raise ValueError("maxima must be finite")
    if np.ptp(x) == 0:
        raise ValueError("degenerate data: all maxima are equal")
    notes: list[str] = []
    if x.size < MIN_RELIABLE:
        notes.append(f"only {x.size} maxima; the fit is unreliable below {MIN_RELIABLE}")

    # work on standardised data, then map back (location-scale equivariance)
    center, spread = float(np.median(x)), float(np.std(x, ddof=1))
    xs = (x - center) / spread

    def nll(theta):
        if theta[1] <= 0 or theta[0] <= -1.0:
            return math.inf
        v = -gev_loglik(theta, xs)
        return v if math.isfinite(v) else math.inf

    best = None
    for g0 in (0.1, -0.1, 0.4):
        start = _feasible_start(xs)
        start[0] = g0 if math.isfinite(nll(np.array([g0, start[1], start[2]]))) else start[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(
                nll, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000}
            )
        if best is None or res.fun < best.fun:
            best = res
    theta, ll, converged = _newton_polish(best.x, xs)

    theta_phys = np.array([theta[0], theta[1] * spread, theta[2] * spread + center])
    ll_phys = ll - x.size * math.log(spread)
    # polish once more in physical units so the score is small there too
    theta_phys, ll_phys, converged = _newton_polish(theta_phys, x, max_iter=5)

    H = _hessian(theta_phys, x)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
        converged = False
    if converged and np.any(np.linalg.eigvalsh(0.5 * (cov + cov.T)) < 0):
        notes.append("observed information is not positive definite at the optimum")
        converged = False
    zq = stats.norm.ppf(0.5 + confidence / 2.0)
    se_gamma = math.sqrt(cov[0, 0]) if cov[0, 0] > 0 else math.nan
    gamma = float(theta_phys[0])
    ci = (gamma - zq * se_gamma, gamma + zq * se_gamma)
    params = GevParams(gamma, float(theta_phys[1]), float(theta_phys[2]))
    return FitResult(
        params=params,
        covariance=cov,
        gamma_ci=ci,
        log_likelihood=float(ll_phys),
        converged=bool(converged),
        confidence=confidence,
        n=int(x.size),
        warnings=tuple(notes),
    )


def return_level(params: GevParams, years: float) -> float:
    """Level exceeded on average once every ``years`` blocks."""
    if not years > 1:
        raise ValueError("years must be > 1")
    return float(gev_quantile(1.0 - 1.0 / years, params))


def quantile_stderr(params: GevParams, covariance: np.ndarray, u: float) -> float:
    """Delta-method standard error of the ``u`` quantile."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    gamma, a = params.shape, params.scale
    log_yp = math.log(-math.log(u))
    if params.is_gumbel:
        d_gamma = a * log_yp**2 / 2.0
        d_a = -log_yp
    else:
        w = math.expm1(-gamma * log_yp)
        d_gamma = a * (-log_yp * math.exp(-gamma * log_yp) * gamma - w) / gamma**2
        d_a = w / gamma
    grad = np.array([d_gamma, d_a, 1.0])
    return float(math.sqrt(max(grad @ np.asarray(covariance) @ grad, 0.0)))


def return_level_stderr(params: GevParams, covariance: np.ndarray, years: float) -> float:
    """Delta-method standard error of :func:`return_level`."""
    if not years > 1:
        raise ValueError("years must be > 1")
    return quantile_stderr(params, covariance, 1.0 - 1.0 / years)
