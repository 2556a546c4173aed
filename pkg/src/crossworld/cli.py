import argparse
import asyncio
import dataclasses
import json
import logging
import os
import sys
import typing as t

import numpy as np
import pandas as pd

from . import __version__
from .config import (
    METHODS,
    BootstrapSettings,
    CmcSettings,
    ExperimentConfig,
    load_config,
)
from .core import Rho
from .cw import effective_c
from .datagen import (
    NoiseSpec,
    estimate_conditional_correlation,
    gen_hidden_covariate,
    gen_synthetic,
    load_csv,
    rho_from_variance_decomposition,
    split_dataset,
    write_csv,
)
from .exceptions import (
    ConfigurationError,
    CrossworldError,
    DiagnosticError,
    DomainError,
    InputError,
)
from .experiment import write_run_async
from .learners import LearnerParams
from .pipeline import IntervalPipeline
from .reports import (
    render_interval,
    render_rho_diagnose,
    render_run_summary_async,
)
from .seeding import Stream, derive

logger = logging.getLogger(__name__)

THREADS_ENV = "CROSSWORLD_THREADS"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class UsageError(CrossworldError):
    """Raised for flag combinations argparse cannot check on its own."""


def _rho_arg(raw: str) -> float:
    try:
        return Rho(float(raw)).value
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"rho must be a number in [-1, 1], got {raw!r}"
        ) from None


def _unit_arg(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {raw!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {raw}")
    return value


def _positive_int(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {raw!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {raw}")
    return value


def _nonneg_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {raw!r}") from None
    if not value >= 0.0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {raw}")
    return value


def _c_arg(raw: str) -> t.Union[float, str]:
    if raw == "auto":
        return raw
    try:
        value = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'auto' or a number, got {raw!r}"
        ) from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"c must lie in [0, 1], got {raw}")
    return value


def _floats(raw: str) -> list[float]:
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {raw!r}"
        ) from None


def _columns(raw: str) -> list[int]:
    try:
        cols = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected covariate numbers like 1,2, got {raw!r}"
        ) from None
    if not cols or any(c < 1 for c in cols):
        raise argparse.ArgumentTypeError("covariate numbers start at 1")
    return cols


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default WARNING).",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for INFO, -vv for DEBUG.",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossworld",
        description="Prediction intervals for individual treatment effects.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Write a synthetic dataset as CSV.")
    _add_common(gen)
    gen.add_argument("--n", type=_positive_int, required=True)
    gen.add_argument("--d", type=_positive_int, default=1)
    gen.add_argument("--rho", type=_rho_arg, default=None)
    gen.add_argument(
        "--noise",
        default="gaussian/gaussian",
        help="marginal/copula, e.g. laplace/frank.",
    )
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--dgp", choices=["synthetic", "hidden"], default="synthetic")
    gen.add_argument("--var-h", type=_nonneg_float, default=None)
    gen.add_argument("--var-eps", type=_nonneg_float, default=None)
    gen.add_argument("--sigma0", type=float, default=1.0)
    gen.add_argument("--sigma1", type=float, default=2.0)
    gen.add_argument(
        "--equal-variance", action="store_true", help="Use sigma1 = sigma0."
    )
    gen.set_defaults(handler=cmd_generate)

    run = sub.add_parser("run", help="Run a replication study.")
    _add_common(run)
    run.add_argument("config", help="TOML configuration or a run manifest (JSON).")
    run.add_argument("--threads", type=_positive_int, default=None)
    run.add_argument("--out", default=None, help="Results CSV (overrides [output]).")
    run.set_defaults(handler=cmd_run)

    diag = sub.add_parser("rho-diagnose", help="Estimate the cross-world correlation.")
    _add_common(diag)
    diag.add_argument("dataset", nargs="?", default=None)
    diag.add_argument(
        "--cond-cols",
        type=_columns,
        default=None,
        help="Covariates to condition on, numbered from 1 (default all).",
    )
    diag.add_argument(
        "--center",
        type=_floats,
        action="append",
        default=None,
        help="Window centre, one value per conditioning covariate; repeatable.",
    )
    diag.add_argument("--delta", type=float, default=0.1)
    diag.add_argument("--min-count", type=_positive_int, default=30)
    diag.add_argument("--csv", default=None, help="Also write the estimates as CSV.")
    diag.add_argument("--var-h", type=_nonneg_float, default=None)
    diag.add_argument("--var-eps", type=_nonneg_float, default=None)
    diag.set_defaults(handler=cmd_rho_diagnose)

    iv = sub.add_parser("interval", help="Fit on a dataset and print ITE intervals.")
    _add_common(iv)
    iv.add_argument("--data", required=True, help="Dataset CSV to fit on.")
    iv.add_argument(
        "--x",
        type=_floats,
        action="append",
        required=True,
        help="Query point; repeatable.",
    )
    iv.add_argument("--method", choices=METHODS, default="cw")
    iv.add_argument("--rho", type=_rho_arg, default=0.0)
    iv.add_argument("--alpha", type=_unit_arg, default=0.1)
    iv.add_argument("--c", type=_c_arg, default="auto")
    iv.add_argument("--c-rule", choices=["quadratic", "linear"], default="quadratic")
    iv.add_argument("--learner", choices=["forest", "linear"], default="forest")
    iv.add_argument("--trees", type=_positive_int, default=500)
    iv.add_argument("--min-leaf", type=_positive_int, default=10)
    iv.add_argument("--B", type=_positive_int, default=200)
    iv.add_argument("--beta", type=_unit_arg, default=0.1)
    iv.add_argument("--M", type=_positive_int, default=1000)
    iv.add_argument("--split-ratio", type=_unit_arg, default=0.5)
    iv.add_argument("--seed", type=int, default=0)
    iv.set_defaults(handler=cmd_interval)
    return parser


def _metadata_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".meta.json"


def cmd_generate(args: argparse.Namespace) -> int:
    if args.dgp == "hidden":
        if args.var_h is None or args.var_eps is None:
            raise UsageError("--dgp hidden needs --var-h and --var-eps")
        data = gen_hidden_covariate(args.n, args.d, args.var_h, args.var_eps, args.seed)
    else:
        if args.rho is None:
            raise UsageError("--rho is required for the synthetic generator")
        noise = NoiseSpec.parse(
            args.noise, args.rho, sigma0=args.sigma0, sigma1=args.sigma1
        )
        data = gen_synthetic(
            args.n,
            args.d,
            args.rho,
            noise,
            seed=args.seed,
            equal_variance=args.equal_variance,
        )
    write_csv(data, args.out)
    metadata = {
        "crossworld_version": __version__,
        "command": "generate",
        "parameters": {
            "n": args.n,
            "d": args.d,
            "rho": args.rho,
            "noise": args.noise,
            "seed": args.seed,
            "dgp": args.dgp,
            "var_h": args.var_h,
            "var_eps": args.var_eps,
            "sigma0": args.sigma0,
            "sigma1": args.sigma1,
            "equal_variance": args.equal_variance,
        },
        "meta": data.meta,
    }
    with open(_metadata_path(args.out), "w", encoding="utf-8") as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("wrote %d rows to %s", data.n, args.out)
    return EXIT_OK


def resolve_threads(flag: int | None, configured: int | None) -> int:
    """``--threads``, then ``$CROSSWORLD_THREADS``, then the config, then 1."""
    if flag is not None:
        return flag
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if value < 1:
            raise UsageError(f"{THREADS_ENV} must be at least 1, got {value}")
        return value
    return configured or 1


async def _run_and_report(config: ExperimentConfig, threads: int) -> str:
    report = await write_run_async(config, threads)
    return await render_run_summary_async(report)


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.out is not None:
        output = dataclasses.replace(
            config.output, results=args.out, summary=None, manifest=None
        )
        config = config.replace(output=output)
    threads = resolve_threads(args.threads, config.threads)
    logger.info("running with %d thread(s)", threads)
    sys.stdout.write(asyncio.run(_run_and_report(config, threads)))
    return EXIT_OK


def cmd_rho_diagnose(args: argparse.Namespace) -> int:
    decomposition = None
    if args.var_h is not None or args.var_eps is not None:
        if args.var_h is None or args.var_eps is None:
            raise UsageError("--var-h and --var-eps go together")
        rho = rho_from_variance_decomposition(args.var_h, args.var_eps)
        decomposition = {"var_h": args.var_h, "var_eps": args.var_eps, "rho": rho.value}
    if args.dataset is None:
        if decomposition is None:
            raise UsageError("give a dataset, or --var-h and --var-eps")
        sys.stdout.write(render_rho_diagnose(decomposition=decomposition))
        return EXIT_OK

    data = load_csv(args.dataset)
    cols = [c - 1 for c in (args.cond_cols or range(1, data.d + 1))]
    for c in cols:
        if c >= data.d:
            raise InputError(
                f"covariate x{c + 1} does not exist; the dataset has {data.d}"
            )
    centers = args.center or [[float(np.median(data.X[:, c])) for c in cols]]
    windows = []
    for center in centers:
        if len(center) != len(cols):
            raise UsageError(
                f"--center has {len(center)} values for {len(cols)} conditioning "
                "covariates"
            )
        estimate, count = estimate_conditional_correlation(
            data, cols, center, args.delta, args.min_count
        )
        label = ", ".join(f"x{c + 1}={v:g}" for c, v in zip(cols, center))
        windows.append(
            {"label": label, "center": center, "estimate": estimate, "count": count}
        )
    if args.csv:
        pd.DataFrame(
            {
                "cond_cols": [" ".join(f"x{c + 1}" for c in cols)] * len(windows),
                "center": [" ".join(f"{v:g}" for v in w["center"]) for w in windows],
                "delta": args.delta,
                "estimate": [w["estimate"] for w in windows],
                "count": [w["count"] for w in windows],
            }
        ).to_csv(args.csv, index=False, float_format="%.10g", lineterminator="\n")
    sys.stdout.write(
        render_rho_diagnose(
            windows=windows,
            delta=args.delta,
            decomposition=decomposition,
            source=args.dataset,
            n=data.n,
        )
    )
    return EXIT_OK


def cmd_interval(args: argparse.Namespace) -> int:
    data = load_csv(args.data)
    X = np.array(args.x, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != data.d:
        widths = sorted({len(x) for x in args.x})
        raise InputError(
            f"query dimension {widths[0] if len(widths) == 1 else widths} does not "
            f"match the dataset dimension {data.d}"
        )
    params = LearnerParams(kind=args.learner, trees=args.trees, min_leaf=args.min_leaf)
    split = split_dataset(data, args.split_ratio, derive(args.seed, Stream.SPLIT))
    pipeline = IntervalPipeline(
        data,
        split,
        args.alpha,
        params=params,
        bootstrap=BootstrapSettings(B=args.B, beta=args.beta),
        cmc=CmcSettings(M=args.M),
        methods=[args.method],
        seed=args.seed,
    )
    cate = pipeline.cate_ci(X) if args.method == "cw+ci" else None
    intervals = pipeline.predict(
        args.method, X, args.rho, c=args.c, c_rule=args.c_rule, cate=cate
    )
    bands = None if args.method == "cmc" else pipeline.arm_bands(args.method, X)
    uses_rho = args.method in ("cw", "cw+ci", "cmc")
    sys.stdout.write(
        render_interval(
            method=args.method,
            alpha=args.alpha,
            X=X,
            tau_hat=pipeline.tau_hat(X),
            intervals=intervals,
            rho=args.rho if uses_rho else None,
            bands=bands,
            radii=None if cate is None else (cate.radius_lower, cate.radius_upper),
            c=None if cate is None else effective_c(args.c, args.rho, args.c_rule),
        )
    )
    return EXIT_OK


def _configure_logging(args: argparse.Namespace) -> None:
    if args.log_level:
        level = getattr(logging, args.log_level)
    else:
        level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: t.Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args)
    try:
        return int(args.handler(args))
    except (UsageError, ConfigurationError, DomainError) as e:
        print(f"crossworld {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, DiagnosticError) as e:
        print(f"crossworld {args.command}: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"crossworld {args.command}: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        logger.debug("unexpected failure", exc_info=True)
        print(f"crossworld {args.command}: failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
