import logging
import os
import typing as t
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import pandas as pd

from .core import FloatArray, IntervalArray
from .exceptions import DomainError, InputError

if t.TYPE_CHECKING:
    from .datagen import NoiseSpec

logger = logging.getLogger(__name__)

RESULT_COLUMNS: tuple[str, ...] = (
    "method",
    "rho_true",
    "rho_used",
    "d",
    "n",
    "noise_marginal",
    "noise_copula",
    "rep",
    "seed",
    "coverage",
    "avg_width",
    "cw_loss",
    "runtime_ms",
    "status",
)
SUMMARY_KEYS: tuple[str, ...] = (
    "method",
    "rho_true",
    "rho_used",
    "d",
    "n",
    "noise_marginal",
    "noise_copula",
)
# cell of the experiment grid, shared by every method compared in it
CELL_KEYS: tuple[str, ...] = ("rho_true", "d", "n", "noise_marginal", "noise_copula")
_FLOAT_FORMAT = "%.10g"
_TOLERANCE = 1e-12


def coverage(intervals: IntervalArray, ite_true: npt.ArrayLike) -> float:
    """Fraction of points whose true ITE falls inside its interval."""
    ite = np.atleast_1d(np.asarray(ite_true, dtype=np.float64))
    if len(intervals) == 0:
        raise InputError("coverage of an empty set of test points is undefined")
    if ite.shape != (len(intervals),):
        raise InputError(f"{len(intervals)} intervals but {ite.size} true effects")
    return float(np.mean(intervals.contains(ite)))


def avg_width(intervals: IntervalArray) -> float:
    if len(intervals) == 0:
        raise InputError("average width of an empty set of intervals is undefined")
    return float(np.mean(intervals.widths))


def coverage_width_loss(
    width: float, wmin: float, wmax: float, cov: float, alpha: float
) -> float:
    """``(width - wmin) / (wmax - wmin) + (2 / alpha) * |cov - (1 - alpha)|``.

    The width term is 0 when every compared method has the same width.
    """
    if not 0.0 <= cov <= 1.0:
        raise DomainError(f"coverage must lie in [0, 1], got {cov}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if wmax < wmin or not wmin - _TOLERANCE <= width <= wmax + _TOLERANCE:
        raise DomainError(
            f"width {width} outside the normalisation range [{wmin}, {wmax}]"
        )
    spread = wmax - wmin
    width_term = 0.0 if spread <= 0.0 else min(1.0, max(0.0, (width - wmin) / spread))
    return width_term + (2.0 / alpha) * abs(cov - (1.0 - alpha))


@dataclass
class MethodResult:
    """One method's intervals on one replication's test set.  ``coverage`` is
    ``None`` when the test set carries no counterfactuals; ``status`` is
    ``"ok"`` or a short failure description.
    """

    method: str
    rho_used: float | None
    intervals: IntervalArray | None = field(default=None, repr=False)
    coverage: float | None = None
    avg_width: float | None = None
    cw_loss: float | None = None
    runtime_ms: float | None = None
    status: str = "ok"

    def __post_init__(self) -> None:
        if self.coverage is not None and not 0.0 <= self.coverage <= 1.0:
            raise DomainError(f"coverage must lie in [0, 1], got {self.coverage}")
        if self.avg_width is not None and self.avg_width < 0:
            raise DomainError(
                f"average width must be non-negative, got {self.avg_width}"
            )

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def score(
        cls,
        method: str,
        rho_used: float | None,
        intervals: IntervalArray,
        ite_true: FloatArray | None,
        runtime_ms: float | None = None,
    ) -> "MethodResult":
        return cls(
            method=method,
            rho_used=rho_used,
            intervals=intervals,
            coverage=None if ite_true is None else coverage(intervals, ite_true),
            avg_width=avg_width(intervals),
            runtime_ms=runtime_ms,
        )

    @classmethod
    def failed(
        cls, method: str, rho_used: float | None, error: BaseException
    ) -> "MethodResult":
        status = f"failed: {type(error).__name__}"
        return cls(method=method, rho_used=rho_used, status=status)


@dataclass(frozen=True)
class ExperimentCell:
    """Position of one replication in the experiment grid."""

    rho_true: float
    d: int
    n: int
    noise: "NoiseSpec"
    rep: int
    seed: int

    def describe(self) -> str:
        return (
            f"rho={self.rho_true:g} d={self.d} n={self.n} "
            f"noise={self.noise.label} rep={self.rep}"
        )


@dataclass
class ExperimentResult:
    """Every method's results on one replication; all methods share the
    same test points.
    """

    cell: ExperimentCell
    methods: list[MethodResult]
    n_test: int = 0
    error: str | None = None

    def rows(self) -> list[dict[str, t.Any]]:
        marginal, _, copula = self.cell.noise.label.partition("/")
        return [
            {
                "method": m.method,
                "rho_true": self.cell.rho_true,
                "rho_used": m.rho_used,
                "d": self.cell.d,
                "n": self.cell.n,
                "noise_marginal": marginal,
                "noise_copula": copula,
                "rep": self.cell.rep,
                "seed": self.cell.seed,
                "coverage": m.coverage,
                "avg_width": m.avg_width,
                "cw_loss": m.cw_loss,
                "runtime_ms": m.runtime_ms,
                "status": m.status,
            }
            for m in self.methods
        ]

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)


def assign_cw_losses(result: ExperimentResult, alpha: float) -> None:
    """Fill ``cw_loss`` of every scored method, normalising widths across
    the methods of ``result``.
    """
    scored = [m for m in result.methods if m.ok and m.coverage is not None]
    if not scored:
        return
    widths = [t.cast(float, m.avg_width) for m in scored]
    wmin, wmax = min(widths), max(widths)
    for m in scored:
        m.cw_loss = coverage_width_loss(
            t.cast(float, m.avg_width), wmin, wmax, t.cast(float, m.coverage), alpha
        )


def results_frame(results: t.Iterable[ExperimentResult]) -> pd.DataFrame:
    rows = [row for result in results for row in result.rows()]
    frame = pd.DataFrame(rows, columns=list(RESULT_COLUMNS))
    # missing metrics become NaN
    for column in ("rho_used", "coverage", "avg_width", "cw_loss", "runtime_ms"):
        frame[column] = frame[column].astype(float)
    return frame


def summarize(frame: pd.DataFrame, alpha: float) -> pd.DataFrame:
    """Mean coverage and width per method and grid cell.

    ``cw_loss`` is recomputed from the cell means, with the width range taken
    across the methods compared in each cell.
    """
    ok = frame[frame["status"] == "ok"]
    if ok.empty:
        return pd.DataFrame(
            columns=[*SUMMARY_KEYS, "reps", "coverage", "avg_width", "cw_loss"]
        )
    summary = (
        ok.groupby(list(SUMMARY_KEYS), dropna=False, sort=True)
        .agg(
            reps=("rep", "count"),
            coverage=("coverage", "mean"),
            avg_width=("avg_width", "mean"),
        )
        .reset_index()
    )
    span = summary.groupby(list(CELL_KEYS), dropna=False)["avg_width"]
    summary["wmin"] = span.transform("min")
    summary["wmax"] = span.transform("max")

    def loss(row: pd.Series) -> float:
        if pd.isna(row["coverage"]):
            return float("nan")
        return coverage_width_loss(
            row["avg_width"], row["wmin"], row["wmax"], row["coverage"], alpha
        )

    summary["cw_loss"] = summary.apply(loss, axis=1)
    return summary.drop(columns=["wmin", "wmax"])


class ResultWriter:
    """Appends result rows to a CSV file as replications finish."""

    def __init__(self, path: t.Union[str, "os.PathLike[str]"]) -> None:
        self.path = os.fspath(path)
        self._header_written = False
        self.rows_written = 0

    def __enter__(self) -> "ResultWriter":
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        pd.DataFrame(columns=list(RESULT_COLUMNS)).to_csv(
            self.path, index=False, lineterminator="\n"
        )
        self._header_written = True
        return self

    def __exit__(self, *exc_info: object) -> None:
        logger.info("wrote %d result rows to %s", self.rows_written, self.path)

    def write(self, result: ExperimentResult) -> None:
        if not self._header_written:
            raise RuntimeError("ResultWriter must be entered before writing")
        frame = pd.DataFrame(result.rows(), columns=list(RESULT_COLUMNS))
        frame.to_csv(
            self.path,
            mode="a",
            header=False,
            index=False,
            float_format=_FLOAT_FORMAT,
            lineterminator="\n",
        )
        self.rows_written += len(frame)
