import logging
import typing as t

import numpy as np
import numpy.typing as npt

from .cate import (
    CateEstimate,
    bootstrap_cate_ci,
    leaf_bootstrap_cate_ci,
    predict_cate,
)
from .conformal import (
    BandPrediction,
    CalibratedBand,
    Side,
    SplitPlan,
    fit_cqr_band,
    naive_ite_intervals,
    sqrt_level,
)
from .config import METHODS, BootstrapSettings, CmcSettings
from .core import IntervalArray, Rho, as_rho
from .cw import CRule, cmc_intervals, cw_ci_intervals, cw_intervals
from .exceptions import ConfigurationError, InputError
from .learners import (
    ConditionalQuantiles,
    LearnerParams,
    MeanModel,
    QuantileForest,
    check_query,
    fit_arm_models,
)
from .seeding import SeedLike, Stream, as_seed_sequence, to_int

if t.TYPE_CHECKING:
    from .datagen import Dataset

logger = logging.getLogger(__name__)

_ArmModels = tuple[ConditionalQuantiles, MeanModel]


class IntervalPipeline:
    """Arm models fitted once on the training rows of a split, with the
    conformal bands and CATE intervals every interval method draws on.

    Each arm's quantile and mean models are shared by all methods; bands are
    calibrated lazily per ``(alpha_arm, side)`` and cached.
    """

    def __init__(
        self,
        data: "Dataset",
        split: SplitPlan,
        alpha: float,
        params: LearnerParams | None = None,
        bootstrap: BootstrapSettings | None = None,
        cmc: CmcSettings | None = None,
        methods: t.Iterable[str] = METHODS,
        seed: SeedLike = 0,
        models: t.Mapping[int, _ArmModels] | None = None,
    ) -> None:
        if not 0.0 < alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}", "alpha")
        self.data = data
        self.split = split
        self.alpha = alpha
        self.params = params or LearnerParams()
        self.bootstrap = bootstrap or BootstrapSettings()
        self.cmc = cmc or CmcSettings()
        self.methods = tuple(dict.fromkeys(methods))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown method {unknown[0]!r}", "method")
        # streams below the pipeline seed
        self._seeds = as_seed_sequence(seed)
        self._bands: dict[tuple[int, float, Side], CalibratedBand] = {}
        self.models = dict(models) if models is not None else self._fit_models()

    def _stream(self, stream: Stream) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            self._seeds.entropy, spawn_key=(*self._seeds.spawn_key, int(stream))
        )

    def required_levels(self) -> list[float]:
        """Quantile levels the selected methods read from the arm models."""
        levels: set[float] = set()
        if {"cw", "cw+ci"} & set(self.methods):
            levels |= {self.alpha / 2.0, 1.0 - self.alpha / 2.0}
        if "naive" in self.methods:
            levels |= {self.alpha / 4.0, 1.0 - self.alpha / 4.0}
        if "sqrt-naive" in self.methods:
            s = sqrt_level(self.alpha)
            levels |= {s / 2.0, 1.0 - s / 2.0}
        if "cmc" in self.methods:
            levels |= set(self.cmc.level_grid())
        return sorted(levels)

    def _fit_models(self) -> dict[int, _ArmModels]:
        params = self.params
        if params.kind == "forest":
            params = params.replace(seed=to_int(self._stream(Stream.LEARNER)))
        levels = self.required_levels()
        models: dict[int, _ArmModels] = {}
        for arm in (1, 0):
            rows = self.split.arm_rows(self.data.T, arm, "train")
            if len(rows) == 0:
                raise InputError(f"arm {arm} has no training rows")
            models[arm] = fit_arm_models(
                self.data.X[rows],
                self.data.Y[rows],
                levels,
                params.replace(seed=params.seed + arm),
            )
            logger.debug("fitted arm %d on %d rows", arm, len(rows))
        return models

    def band(
        self, arm: int, alpha_arm: float, side: Side = "two-sided"
    ) -> CalibratedBand:
        key = (arm, alpha_arm, side)
        if key not in self._bands:
            self._bands[key] = fit_cqr_band(
                self.data,
                arm,
                alpha_arm,
                self.split,
                self.params,
                side=side,
                models=self.models[arm],
            )
        return self._bands[key]

    def cw_bands(self, X: npt.ArrayLike) -> tuple[BandPrediction, BandPrediction]:
        """``(band1, band0)`` whose lower and upper widths are each calibrated
        one-sided at ``1 - alpha / 2``.
        """
        out = []
        for arm in (1, 0):
            upper = self.band(arm, self.alpha / 2.0, "upper").predict(X)
            lower = self.band(arm, self.alpha / 2.0, "lower").predict(X)
            out.append(BandPrediction(upper.mean, lower.lower_width, upper.upper_width))
        return out[0], out[1]

    def arm_bands(
        self, kind: str, X: npt.ArrayLike
    ) -> tuple[BandPrediction, BandPrediction]:
        """The per-arm bands ``kind`` combines, as ``(band1, band0)``."""
        if kind in ("cw", "cw+ci"):
            return self.cw_bands(X)
        if kind == "naive":
            alpha_arm = self.alpha / 2.0
        elif kind == "sqrt-naive":
            alpha_arm = sqrt_level(self.alpha)
        else:
            raise ConfigurationError(f"method {kind!r} does not combine arm bands")
        return (
            self.band(1, alpha_arm).predict(X),
            self.band(0, alpha_arm).predict(X),
        )

    def tau_hat(self, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
        return predict_cate(self.models[1][1], self.models[0][1], X)

    def cate_ci(self, X: npt.ArrayLike) -> CateEstimate:
        """Bootstrap CATE intervals around :meth:`tau_hat`.

        Forest arm models are resampled leaf by leaf; other learners, or the
        ``refit`` scheme, refit the mean models on resamples of the training
        rows.
        """
        X_arr = check_query(X, self.data.d)
        settings = self.bootstrap
        seed = self._stream(Stream.BOOTSTRAP)
        mean1, mean0 = self.models[1][1], self.models[0][1]
        forests = all(
            isinstance(getattr(m, "estimator", None), QuantileForest)
            for m in (mean1, mean0)
        )
        if settings.scheme == "leaf" and forests:
            return leaf_bootstrap_cate_ci(
                mean1,
                mean0,
                X_arr,
                B=settings.B,
                beta=settings.beta,
                seed=seed,
                stratify=settings.stratify,
            )
        params = self.params
        if settings.trees is not None:
            params = params.replace(trees=settings.trees)
        return bootstrap_cate_ci(
            self.data.subset(self.split.train),
            X_arr,
            B=settings.B,
            beta=settings.beta,
            params=params,
            seed=seed,
            tau_hat=self.tau_hat(X_arr),
            stratify=settings.stratify,
        )

    def predict(
        self,
        kind: str,
        X: npt.ArrayLike,
        rho: t.Union[Rho, float] = 0.0,
        *,
        c: t.Union[float, t.Literal["auto"]] = "auto",
        c_rule: CRule = "quadratic",
        cate: CateEstimate | None = None,
    ) -> IntervalArray:
        """Intervals of method ``kind`` at every row of ``X``.

        ``rho`` is ignored by the naive constructions.  A precomputed ``cate``
        may be passed to share one bootstrap among several CW+CI variants.
        """
        if kind not in METHODS:
            raise ConfigurationError(f"unknown method {kind!r}", "method")
        X_arr = check_query(X, self.data.d)
        rho = as_rho(rho)
        if kind == "cw":
            band1, band0 = self.cw_bands(X_arr)
            return cw_intervals(self.tau_hat(X_arr), band1, band0, rho)
        if kind == "cw+ci":
            band1, band0 = self.cw_bands(X_arr)
            cate = cate if cate is not None else self.cate_ci(X_arr)
            return cw_ci_intervals(cate.tau_hat, cate, band1, band0, rho, c, c_rule)
        if kind == "cmc":
            return cmc_intervals(
                self.models[1][0],
                self.models[0][0],
                X_arr,
                self.alpha,
                M=self.cmc.M,
                rho=rho,
                seed=self._stream(Stream.CMC),
                levels=self.cmc.level_grid(),
            )
        band1, band0 = self.arm_bands(kind, X_arr)
        return naive_ite_intervals(band1, band0)
