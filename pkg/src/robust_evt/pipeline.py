"""End-to-end naive and robust extreme-quantile estimation.

``run_naive`` is classical block-maxima extrapolation: take block maxima,
fit a GEV model by maximum likelihood and read off the ``p**n`` quantile.
``run_robust`` additionally picks a divergence ball around the fitted
model and reports the largest ``p**n`` quantile over that ball.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import stats

from .asymptotics import alpha_for_gamma_star, choose_alpha, gamma_star
from .divergence import DivergenceSpec, knn_divergence
from .fit import FitResult, block_maxima, fit_gev_mle, quantile_stderr
from .gev import gev_quantile
from .worstcase import worst_case_quantile

__all__ = [
    "ConfigError",
    "CurveRow",
    "FitFailure",
    "IngestError",
    "PipelineConfig",
    "ReturnLevelCurve",
    "emit_curve",
    "format_curve",
    "ingest_csv",
    "run_naive",
    "run_robust",
    "spawn_seed",
    "stream_rng",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("p", "u", "naive", "robust", "ci_low", "ci_high")


class IngestError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class FitFailure(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    levels: Sequence[float]
    block_size: Union[int, str] = "auto"
    alpha: Union[float, str] = "from-ci"
    gamma_star: float | None = None
    delta: Union[float, str] = "estimate"
    knn_k: int = 5
    model_sample_factor: int = 10
    seed: int = 0
    already_maxima: bool = False
    confidence: float = 0.95

    def __post_init__(self) -> None:
        self.levels = [float(p) for p in self.levels]
        if not self.levels:
            raise ConfigError("at least one level is required")
        if any(not 0.0 < p < 1.0 for p in self.levels):
            raise ConfigError("levels must lie strictly inside (0, 1)")
        if isinstance(self.block_size, str) and self.block_size != "auto":
            raise ConfigError(f"block size must be a positive integer or 'auto', got {self.block_size!r}")
        if not isinstance(self.block_size, str) and int(self.block_size) < 1:
            raise ConfigError("block size must be positive")
        if isinstance(self.alpha, str) and self.alpha != "from-ci":
            raise ConfigError(f"alpha must be a number >= 1 or 'from-ci', got {self.alpha!r}")
        if not isinstance(self.alpha, str) and not float(self.alpha) >= 1:
            raise ConfigError("alpha must be >= 1")
        if isinstance(self.delta, str) and self.delta != "estimate":
            raise ConfigError(f"delta must be a number >= 0 or 'estimate', got {self.delta!r}")
        if not isinstance(self.delta, str) and not float(self.delta) >= 0:
            raise ConfigError("delta must be >= 0")
        if self.knn_k < 1 or self.model_sample_factor < 1:
            raise ConfigError("knn_k and model_sample_factor must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class CurveRow:
    p: float
    u: float
    naive: float
    robust: float | None
    ci_low: float
    ci_high: float


@dataclass
class ReturnLevelCurve:
    rows: list[CurveRow]
    provenance: dict = field(default_factory=dict)


# --- ingestion ----------------------------------------------------------------


def _parse_float(text: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"row {row}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise IngestError(f"row {row}: non-finite value {text!r}")
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def ingest_csv(path, column: Union[int, str, None] = None) -> list[float]:
    """Read one numeric column from a CSV file.

    ``column`` is a 0-based index or a header name (default: first column).
    A single non-numeric first row is treated as a header.  Rows are
    reported 1-based, counting the header.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise IngestError(f"{path}: file not found") from None
    except OSError as exc:
        raise IngestError(f"{path}: {exc}") from None
    # trailing blank lines are harmless; interior ones are not
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise IngestError(f"{path}: no data")

    first = [cell.strip() for cell in rows[0]]
    has_header = not all(_is_number(cell) for cell in first if cell) or not any(first)
    if isinstance(column, str):
        if not has_header:
            raise IngestError(f"{path}: column {column!r} requested but the file has no header")
        try:
            index = first.index(column)
        except ValueError:
            raise IngestError(f"{path}: no column named {column!r} (have {first})") from None
    else:
        index = 0 if column is None else int(column)

    values = []
    start = 1 if has_header else 0
    for offset, row in enumerate(rows[start:], start=start + 1):
        if index >= len(row) or not row[index].strip():
            raise IngestError(f"{path}: row {offset}: missing value in column {index}")
        values.append(_parse_float(row[index].strip(), offset))
    if not values:
        raise IngestError(f"{path}: column {index} is empty")
    return values


# --- pipelines ----------------------------------------------------------------


def _resolve_block_size(config: PipelineConfig, n_data: int) -> int:
    if config.already_maxima:
        return 1
    if config.block_size == "auto":
        return max(n_data // 20, 1)
    return int(config.block_size)


KNN_STREAM = 0
FIXTURE_STREAM = 1


def spawn_seed(seed: int, stream: int) -> int:
    """Key of the independent random stream ``stream`` derived from ``seed``."""
    child = np.random.SeedSequence(seed).spawn(stream + 1)[stream]
    return int(child.generate_state(1, dtype=np.uint64)[0])


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(spawn_seed(seed, stream)))


def _fit(data, config: PipelineConfig) -> tuple[int, np.ndarray, FitResult]:
    x = np.asarray(data, dtype=float)
    if x.size == 0:
        raise ConfigError("data is empty")
    n = _resolve_block_size(config, x.size)
    maxima = x if config.already_maxima else block_maxima(x, n).maxima
    if maxima.size < 20:
        log.warning("only %d block maxima; estimates will be noisy", maxima.size)
    fit = fit_gev_mle(maxima, confidence=config.confidence)
    for note in fit.warnings:
        log.warning(note)
    if not fit.converged:
        raise FitFailure(f"GEV likelihood maximisation did not converge (best iterate {fit.params})")
    return n, maxima, fit


def _naive_rows(config: PipelineConfig, n: int, fit: FitResult) -> list[CurveRow]:
    zq = stats.norm.ppf(0.5 + config.confidence / 2.0)
    rows = []
    for p in sorted(config.levels):
        u = p if config.already_maxima else math.exp(n * math.log(p))
        x = float(gev_quantile(u, fit.params))
        se = quantile_stderr(fit.params, fit.covariance, u)
        rows.append(CurveRow(p, u, x, None, x - zq * se, x + zq * se))
    return rows


def _provenance(config: PipelineConfig, n: int, maxima: np.ndarray, fit: FitResult) -> dict:
    return {
        "block_size": n,
        "n_maxima": int(maxima.size),
        "already_maxima": config.already_maxima,
        "confidence": config.confidence,
        "seed": config.seed,
        "shape": fit.params.shape,
        "scale": fit.params.scale,
        "location": fit.params.location,
        "shape_ci": list(fit.gamma_ci),
        "log_likelihood": fit.log_likelihood,
    }


def run_naive(data, config: PipelineConfig) -> ReturnLevelCurve:
    """Classical GEV extrapolation; the robust column is left empty."""
    n, maxima, fit = _fit(data, config)
    return ReturnLevelCurve(_naive_rows(config, n, fit), _provenance(config, n, maxima, fit))


def resolve_alpha(config: PipelineConfig, fit: FitResult) -> tuple[float, str]:
    gamma0 = fit.params.shape
    if config.gamma_star is not None:
        try:
            return alpha_for_gamma_star(gamma0, config.gamma_star), "gamma-star"
        except ValueError as exc:
            raise ConfigError(f"cannot reach gamma*={config.gamma_star}: {exc}; supply --alpha") from None
    if config.alpha == "from-ci":
        if not gamma0 > 0:
            raise ConfigError(
                f"fitted shape {gamma0:.4g} is not positive, so alpha cannot be chosen from its "
                "confidence interval; supply --alpha explicitly"
            )
        return choose_alpha(gamma0, fit.gamma_halfwidth), "from-ci"
    return float(config.alpha), "given"


def run_robust(data, config: PipelineConfig) -> ReturnLevelCurve:
    """Naive estimates plus worst-case quantiles over a divergence ball."""
    n, maxima, fit = _fit(data, config)
    rows = _naive_rows(config, n, fit)
    alpha, alpha_source = resolve_alpha(config, fit)
    if config.delta == "estimate":
        knn_seed = spawn_seed(config.seed, KNN_STREAM)
        knn_k = config.knn_k
        if alpha > 1 and not knn_k > alpha - 1:
            # the bias-corrected Renyi estimator needs k > alpha - 1
            knn_k = math.floor(alpha - 1.0) + 1
            log.warning("raising k-NN neighbours from %d to %d for alpha=%.4g", config.knn_k, knn_k, alpha)
        delta = knn_divergence(
            maxima,
            fit.params,
            alpha,
            k=knn_k,
            model_sample_size=config.model_sample_factor * maxima.size,
            seed=knn_seed,
        )
        delta_source = "knn"
    else:
        delta, delta_source, knn_seed, knn_k = float(config.delta), "given", None, None
    spec = DivergenceSpec(alpha, delta)
    robust_rows = []
    for row in rows:
        x_hat = float(worst_case_quantile(row.u, fit.params, spec))
        robust_rows.append(CurveRow(row.p, row.u, row.naive, max(x_hat, row.naive), row.ci_low, row.ci_high))
    shape = gamma_star(alpha, fit.params.shape)
    prov = _provenance(config, n, maxima, fit)
    prov.update(
        alpha=alpha,
        alpha_source=alpha_source,
        delta=delta,
        delta_source=delta_source,
        delta_bar=spec.delta_bar,
        gamma_star=shape.gamma_star,
        gamma_star_kind=shape.kind.value,
        knn_k=knn_k,
        model_sample_factor=config.model_sample_factor,
        knn_seed=knn_seed,
    )
    return ReturnLevelCurve(robust_rows, prov)


# --- output ---------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    text = repr(float(value))
    mantissa = text.split("e")[0].lstrip("-").replace(".", "").lstrip("0")
    if len(mantissa) >= 10:
        return text
    # shortest round-trip text padded to 10 significant digits
    return format(value, "#.10g")


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def format_curve(curve: ReturnLevelCurve, fmt: str) -> str:
    """Render ``curve`` as CSV or JSON text; the text depends only on the curve."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in curve.rows:
            writer.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "rows": [{name: getattr(r, name) for name in CSV_HEADER} for r in curve.rows],
            "provenance": curve.provenance,
        }
        return json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'json'")


def emit_curve(curve: ReturnLevelCurve, fmt: str, path) -> None:
    """Write :func:`format_curve` output to ``path``."""
    text = format_curve(curve, fmt)
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
