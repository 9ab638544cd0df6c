"""Command-line entry point: ``robust-evt fit|naive|robust``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .divergence import DivergenceError
from .fit import block_maxima, fit_gev_mle
from .pipeline import (
    ConfigError,
    FitFailure,
    IngestError,
    PipelineConfig,
    _fmt,
    _json_safe,
    _resolve_block_size,
    format_curve,
    ingest_csv,
    run_naive,
    run_robust,
)
from .worstcase import InfeasibleBudgetError, NonIntegrableError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FIT = 3
EXIT_INFEASIBLE = 4

log = logging.getLogger("robust_evt")


def _number_or(keyword: str):
    def parse(text: str):
        if text == keyword:
            return text
        try:
            return float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number or {keyword!r}, got {text!r}") from None

    return parse


def _block_size(text: str):
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or 'auto', got {text!r}") from None


def _column(text: str):
    return int(text) if text.isdigit() else text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-evt", description="Naive and model-robust extreme quantiles.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", required=True, help="CSV file with one observation per row")
    common.add_argument("--column", type=_column, default=None, help="column name or 0-based index")
    common.add_argument("--block-size", type=_block_size, default="auto")
    common.add_argument("--already-maxima", action="store_true", help="input rows are block maxima already")
    common.add_argument("--confidence", type=float, default=0.95)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--output", default=None, help="output path (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("fit", parents=[common], help="fit a GEV model to block maxima")
    levels = argparse.ArgumentParser(add_help=False)
    levels.add_argument("--level", type=float, action="append", required=True, dest="levels")
    levels.add_argument("--seed", type=int, default=0)
    sub.add_parser("naive", parents=[common, levels], help="classical GEV quantile extrapolation")
    robust = sub.add_parser("robust", parents=[common, levels], help="worst-case quantiles over a divergence ball")
    robust.add_argument("--alpha", type=_number_or("from-ci"), default="from-ci")
    robust.add_argument("--gamma-star", type=float, default=None)
    robust.add_argument("--delta", type=_number_or("estimate"), default="estimate")
    robust.add_argument("--knn-k", type=int, default=5)
    robust.add_argument("--model-sample-factor", type=int, default=10)
    return parser


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IngestError(f"{path}: cannot write output: {exc.strerror or exc}") from None


def _fit_text(args, data) -> str:
    # levels are irrelevant for a plain fit
    config = PipelineConfig(levels=[0.5], block_size=args.block_size, already_maxima=args.already_maxima,
                            confidence=args.confidence)
    n = _resolve_block_size(config, len(data))
    maxima = data if args.already_maxima else block_maxima(data, n).maxima
    fit = fit_gev_mle(maxima, confidence=args.confidence)
    if not fit.converged:
        raise FitFailure(f"GEV likelihood maximisation did not converge (best iterate {fit.params})")
    fields = {
        "shape": fit.params.shape,
        "scale": fit.params.scale,
        "location": fit.params.location,
        "shape_ci_low": fit.gamma_ci[0],
        "shape_ci_high": fit.gamma_ci[1],
        "log_likelihood": fit.log_likelihood,
        "n_maxima": fit.n,
        "block_size": n,
    }
    if args.format == "json":
        doc = dict(fields, covariance=fit.covariance.tolist(), confidence=fit.confidence)
        return json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n"
    header = ",".join(fields)
    return header + "\n" + ",".join(str(v) if isinstance(v, int) else _fmt(v) for v in fields.values()) + "\n"


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="robust-evt: %(levelname)s: %(message)s")
    try:
        data = ingest_csv(args.input, args.column)
        if args.command == "fit":
            text = _fit_text(args, data)
        else:
            options = dict(
                levels=args.levels,
                block_size=args.block_size,
                already_maxima=args.already_maxima,
                confidence=args.confidence,
                seed=args.seed,
            )
            if args.command == "naive":
                curve = run_naive(data, PipelineConfig(**options))
            else:
                config = PipelineConfig(
                    **options,
                    alpha=args.alpha,
                    gamma_star=args.gamma_star,
                    delta=args.delta,
                    knn_k=args.knn_k,
                    model_sample_factor=args.model_sample_factor,
                )
                curve = run_robust(data, config)
            text = format_curve(curve, args.format)
        _write(text, args.output)
    except FitFailure as exc:
        log.error("%s", exc)
        return EXIT_FIT
    except (InfeasibleBudgetError, NonIntegrableError, DivergenceError) as exc:
        log.error("robust solve failed: %s", exc)
        return EXIT_INFEASIBLE
    except (IngestError, ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
