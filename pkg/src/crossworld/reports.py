"""Human-readable reports, rendered from the package templates."""

import math
import typing as t

import pandas as pd
from jinja2 import Environment, PackageLoader, StrictUndefined

if t.TYPE_CHECKING:
    from .conformal import BandPrediction
    from .core import IntervalArray
    from .experiment import RunReport


def format_number(value: t.Any, digits: int | None = None) -> str:
    """``6g`` formatting, or fixed ``digits`` decimals; missing values show
    as ``n/a``.
    """
    if value is None:
        return "n/a"
    number = float(value)
    if math.isnan(number):
        return "n/a"
    if math.isinf(number):
        return "inf" if number > 0 else "-inf"
    if digits is None:
        return f"{number:.6g}"
    return f"{number:.{digits}f}"


def make_environment(enable_async: bool = False) -> Environment:
    env = Environment(
        loader=PackageLoader("crossworld", "templates"),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
        autoescape=False,
        enable_async=enable_async,
    )
    env.filters["num"] = format_number
    return env


_env = make_environment()
_async_env = make_environment(enable_async=True)


def render(name: str, **context: t.Any) -> str:
    return _env.get_template(name).render(**context)


async def render_async(name: str, **context: t.Any) -> str:
    """Render ``name`` without blocking a running event loop's thread on
    template compilation.
    """
    template = _async_env.get_template(name)
    return await template.render_async(**context)


def _band_view(band: "BandPrediction", i: int) -> dict[str, float]:
    return {
        "mean": float(band.mean[i]),
        "lower": float(band.lower_width[i]),
        "upper": float(band.upper_width[i]),
        "lo": float(band.lo[i]),
        "hi": float(band.hi[i]),
    }


def interval_context(
    method: str,
    alpha: float,
    X: t.Any,
    tau_hat: t.Any,
    intervals: "IntervalArray",
    rho: float | None = None,
    bands: "tuple[BandPrediction, BandPrediction] | None" = None,
    radii: tuple[t.Any, t.Any] | None = None,
    c: float | None = None,
) -> dict[str, t.Any]:
    points = []
    for i in range(len(intervals)):
        points.append(
            {
                "x": [float(v) for v in X[i]],
                "tau_hat": float(tau_hat[i]),
                "band1": None if bands is None else _band_view(bands[0], i),
                "band0": None if bands is None else _band_view(bands[1], i),
                "radius_lower": None if radii is None else float(radii[0][i]),
                "radius_upper": None if radii is None else float(radii[1][i]),
                "lo": float(intervals.lo[i]),
                "hi": float(intervals.hi[i]),
            }
        )
    return {"method": method, "alpha": alpha, "rho": rho, "c": c, "points": points}


def render_interval(**kwargs: t.Any) -> str:
    return render("interval.txt.j2", **interval_context(**kwargs))


def render_rho_diagnose(
    windows: t.Sequence[t.Mapping[str, t.Any]] = (),
    delta: float | None = None,
    decomposition: t.Mapping[str, float] | None = None,
    source: str | None = None,
    n: int | None = None,
) -> str:
    return render(
        "rho_diagnose.txt.j2",
        windows=list(windows),
        delta=delta,
        decomposition=decomposition,
        source=source,
        n=n,
    )


def summary_rows(summary: pd.DataFrame) -> list[dict[str, t.Any]]:
    rows = []
    for record in summary.to_dict("records"):
        rows.append(
            {
                "method": record["method"],
                "rho_true": record["rho_true"],
                "rho_used": record["rho_used"],
                "d": int(record["d"]),
                "n": int(record["n"]),
                "noise": f"{record['noise_marginal']}/{record['noise_copula']}",
                "coverage": record["coverage"],
                "avg_width": record["avg_width"],
                "cw_loss": record["cw_loss"],
            }
        )
    return rows


async def render_run_summary_async(report: "RunReport") -> str:
    return await render_async(
        "run_summary.txt.j2", report=report, rows=summary_rows(report.summary)
    )
