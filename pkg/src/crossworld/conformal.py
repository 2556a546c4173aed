import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .core import FloatArray, Interval, IntervalArray
from .exceptions import ConfigurationError, DomainError, InputError
from .learners import (
    ConditionalQuantiles,
    LearnerParams,
    MeanModel,
    check_query,
    fit_arm_models,
)

if t.TYPE_CHECKING:
    from .datagen import Dataset

logger = logging.getLogger(__name__)

Side = t.Literal["two-sided", "upper", "lower"]
IndexArray = npt.NDArray[np.intp]


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train and calibration row indices covering ``n_rows`` rows."""

    train: IndexArray
    calibration: IndexArray
    n_rows: int
    # units per arm in each part, indexed by arm
    train_counts: tuple[int, int] = (0, 0)
    calibration_counts: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        train = np.sort(np.asarray(self.train, dtype=np.intp))
        calibration = np.sort(np.asarray(self.calibration, dtype=np.intp))
        if np.intersect1d(train, calibration).size:
            raise InputError("train and calibration indices overlap")
        combined = np.concatenate([train, calibration])
        if combined.size != self.n_rows or not np.array_equal(
            np.sort(combined), np.arange(self.n_rows)
        ):
            raise InputError(
                f"split does not cover all {self.n_rows} rows exactly once"
            )
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "calibration", calibration)

    def arm_rows(self, T: npt.ArrayLike, arm: int, part: str) -> IndexArray:
        rows = self.train if part == "train" else self.calibration
        return rows[np.asarray(T)[rows] == arm]


@dataclass(frozen=True)
class BandPrediction:
    """Per-arm bands ``[mean - lower_width, mean + upper_width]`` at a set
    of query points.  Widths are non-negative and may be infinite on the
    open side of a one-sided band.
    """

    mean: FloatArray
    lower_width: FloatArray
    upper_width: FloatArray

    def __post_init__(self) -> None:
        arrays = [
            np.atleast_1d(np.asarray(a, dtype=np.float64))
            for a in (self.mean, self.lower_width, self.upper_width)
        ]
        if len({a.shape for a in arrays}) != 1:
            raise DomainError("band arrays must have the same shape")
        mean, lower, upper = arrays
        if (lower < 0).any() or (upper < 0).any():
            raise DomainError("band widths must be non-negative")
        if np.isnan(lower).any() or np.isnan(upper).any():
            raise DomainError("band widths must not be NaN")
        if not np.isfinite(mean).all():
            raise DomainError("band centres must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "lower_width", lower)
        object.__setattr__(self, "upper_width", upper)

    @classmethod
    def at_point(
        cls, mean: float, lower_width: float, upper_width: float
    ) -> "BandPrediction":
        return cls(np.array([mean]), np.array([lower_width]), np.array([upper_width]))

    def __len__(self) -> int:
        return len(self.mean)

    @property
    def lo(self) -> FloatArray:
        return self.mean - self.lower_width

    @property
    def hi(self) -> FloatArray:
        return self.mean + self.upper_width

    def intervals(self) -> IntervalArray:
        return IntervalArray(self.lo, self.hi)


@dataclass(frozen=True)
class CalibratedBand:
    """A split-conformal band for one treatment arm at nominal level
    ``1 - alpha_arm``.
    """

    arm: int
    alpha_arm: float
    side: Side
    levels: tuple[float | None, float | None]
    mean_model: MeanModel
    quantile_model: ConditionalQuantiles = field(repr=False)
    correction: float
    n_calibration: int

    def predict(self, X: npt.ArrayLike) -> BandPrediction:
        X_arr = check_query(X, self.mean_model.n_features)
        mean = self.mean_model.predict(X_arr)
        lo_level, hi_level = self.levels
        wanted = [q for q in (lo_level, hi_level) if q is not None]
        quantiles = self.quantile_model.predict_quantiles(X_arr, wanted)
        lower = np.full(len(mean), np.inf)
        upper = np.full(len(mean), np.inf)
        column = 0
        if lo_level is not None:
            lower = np.maximum(0.0, mean - quantiles[:, column] + self.correction)
            column += 1
        if hi_level is not None:
            upper = np.maximum(0.0, quantiles[:, column] - mean + self.correction)
        return BandPrediction(mean, lower, upper)


def band_levels(alpha_arm: float, side: Side) -> tuple[float | None, float | None]:
    """Quantile levels a band at ``1 - alpha_arm`` is built from."""
    if side == "two-sided":
        return alpha_arm / 2.0, 1.0 - alpha_arm / 2.0
    if side == "upper":
        return None, 1.0 - alpha_arm
    if side == "lower":
        return alpha_arm, None
    raise ConfigurationError(f"unknown band side {side!r}")


def conformal_quantile(scores: npt.ArrayLike, alpha: float) -> float:
    """The ``ceil((1 - alpha)(n + 1))``-th smallest conformity score."""
    arr = np.sort(np.asarray(scores, dtype=np.float64))
    n = arr.size
    k = math.ceil((1.0 - alpha) * (n + 1) - 1e-12)
    if k > n:
        raise ConfigurationError(
            f"{n} calibration points are too few for alpha={alpha}: the conformal "
            f"quantile needs the {k}-th order statistic"
        )
    return float(arr[max(k, 1) - 1])


def _check_arms(T: npt.ArrayLike, arm: int) -> None:
    if arm not in (0, 1):
        raise InputError(f"arm must be 0 or 1, got {arm!r}")
    counts = np.bincount(np.asarray(T, dtype=np.intp), minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise InputError(
            f"degenerate treatment assignment: {counts[1]} treated and "
            f"{counts[0]} control units"
        )


def fit_cqr_band(
    data: "Dataset",
    arm: int,
    alpha_arm: float,
    split: SplitPlan,
    params: LearnerParams,
    side: Side = "two-sided",
    models: tuple[ConditionalQuantiles, MeanModel] | None = None,
    levels: tuple[float | None, float | None] | None = None,
) -> CalibratedBand:
    """Conformalized quantile regression for one arm.

    The quantile and mean models are fitted on the arm's training rows
    unless prefitted ``models`` are passed; conformity scores are computed on
    the arm's calibration rows.  ``levels`` overrides the quantile levels the
    band is read from (by default ``alpha_arm / 2`` and ``1 - alpha_arm / 2``).

    :param side: ``"upper"`` or ``"lower"`` builds a one-sided band whose
        other side is unbounded.
    """
    if not 0.0 < alpha_arm < 1.0:
        raise ConfigurationError(f"alpha_arm must lie in (0, 1), got {alpha_arm}")
    _check_arms(data.T, arm)
    levels = levels if levels is not None else band_levels(alpha_arm, side)

    cal_rows = split.arm_rows(data.T, arm, "calibration")
    n_cal = len(cal_rows)
    needed = math.ceil((1.0 - alpha_arm) * (n_cal + 1) - 1e-12)
    if needed > n_cal:
        raise ConfigurationError(
            f"arm {arm} has {n_cal} calibration points; alpha_arm={alpha_arm} needs "
            f"at least {math.ceil(1.0 / alpha_arm) - 1}"
        )

    if models is None:
        train_rows = split.arm_rows(data.T, arm, "train")
        if len(train_rows) == 0:
            raise InputError(f"arm {arm} has no training rows")
        wanted = [q for q in levels if q is not None]
        models = fit_arm_models(data.X[train_rows], data.Y[train_rows], wanted, params)
    quantile_model, mean_model = models

    X_cal, y_cal = data.X[cal_rows], data.Y[cal_rows]
    lo_level, hi_level = levels
    wanted = [q for q in (lo_level, hi_level) if q is not None]
    q = quantile_model.predict_quantiles(X_cal, wanted)
    if lo_level is not None and hi_level is not None:
        scores = np.maximum(q[:, 0] - y_cal, y_cal - q[:, 1])
    elif hi_level is not None:
        scores = y_cal - q[:, 0]
    else:
        scores = q[:, 0] - y_cal

    correction = conformal_quantile(scores, alpha_arm)
    logger.debug(
        "arm %d: %s band at alpha_arm=%.4g, n_cal=%d, correction=%.6g",
        arm,
        side,
        alpha_arm,
        n_cal,
        correction,
    )
    return CalibratedBand(
        arm=arm,
        alpha_arm=alpha_arm,
        side=side,
        levels=levels,
        mean_model=mean_model,
        quantile_model=quantile_model,
        correction=correction,
        n_calibration=n_cal,
    )


def naive_ite_intervals(band1: BandPrediction, band0: BandPrediction) -> IntervalArray:
    """Minkowski difference ``C1 - C0`` of the two arms' bands."""
    return IntervalArray(band1.lo - band0.hi, band1.hi - band0.lo)


def naive_ite_interval(
    band1: CalibratedBand, band0: CalibratedBand, x: npt.ArrayLike
) -> Interval:
    return naive_ite_intervals(band1.predict(x), band0.predict(x)).item()


def sqrt_level(alpha: float) -> float:
    """Per-arm miscoverage ``1 - sqrt(1 - alpha)``: calibrating both arms at
    ``sqrt(1 - alpha)`` makes the naive interval valid for independent
    potential outcomes.
    """
    if not 0.0 <= alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1), got {alpha}")
    return 1.0 - math.sqrt(1.0 - alpha)
