import dataclasses
import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import sparse
from sklearn.base import RegressorMixin
from sklearn.ensemble import RandomForestRegressor
from sklearn.linear_model import LinearRegression, QuantileRegressor

from .core import FloatArray
from .exceptions import ConfigurationError, InputError

logger = logging.getLogger(__name__)

LearnerKind = t.Literal["forest", "linear"]

# query rows per dense leaf-weight block
_BLOCK_ROWS = 1024
# weight rows per dense leaf-mean block in reweighted_predict
_BLOCK_DRAWS = 32


@dataclass(frozen=True)
class LearnerParams:
    """Hyperparameters shared by the quantile and mean learners.

    ``kind="forest"`` selects the quantile regression forest, ``"linear"``
    the linear pinball-loss regression meant for low-dimensional covariates.
    ``mtry=None`` resolves to ``max(1, ceil(d / 3))`` once ``d`` is known.
    """

    kind: LearnerKind = "forest"
    trees: int = 500
    min_leaf: int = 10
    mtry: int | None = None
    max_depth: int | None = None
    subsample: float = 1.0
    seed: int = 0
    n_jobs: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("forest", "linear"):
            raise ConfigurationError(f"unknown learner kind {self.kind!r}", "kind")
        if self.trees < 1:
            raise ConfigurationError("must be at least 1", "trees")
        if self.min_leaf < 1:
            raise ConfigurationError("must be at least 1", "min_leaf")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigurationError("must be at least 1", "mtry")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigurationError("must be at least 1", "max_depth")
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigurationError("must lie in (0, 1]", "subsample")

    def replace(self, **changes: t.Any) -> "LearnerParams":
        return dataclasses.replace(self, **changes)

    def resolve_mtry(self, n_features: int) -> int:
        if self.mtry is None:
            return max(1, math.ceil(n_features / 3))
        if self.mtry > n_features:
            raise ConfigurationError(
                f"mtry={self.mtry} exceeds the feature dimension {n_features}", "mtry"
            )
        return self.mtry

    @property
    def random_state(self) -> int:
        # scikit-learn seeds are 32-bit; fold the 64-bit seed down deterministically
        return int(np.random.SeedSequence(self.seed).generate_state(1)[0])


class QuantileForest(RandomForestRegressor):
    """A random forest that also estimates conditional quantiles.

    Every tree gives each training point sharing the query's leaf the weight
    ``1 / leaf size``; averaging over trees yields a weighted empirical CDF of
    the training responses from which any quantile level can be read.
    """

    def fit(self, X, y, sample_weight=None) -> "QuantileForest":
        super().fit(X, y, sample_weight=sample_weight)
        y = np.asarray(y, dtype=np.float64)
        order = np.argsort(y, kind="stable")
        self.sorted_y_ = y[order]

        node_counts = np.array([e.tree_.node_count for e in self.estimators_])
        self.leaf_offsets_ = np.concatenate([[0], np.cumsum(node_counts)[:-1]])
        self.n_leaf_columns_ = int(node_counts.sum())

        indicator = self._leaf_indicator(X)
        sizes = np.asarray(indicator.sum(axis=0)).ravel()
        inv_sizes = np.divide(1.0, sizes, out=np.zeros_like(sizes), where=sizes > 0)
        # rows follow the sorted responses so cumulative sums give the CDF
        self.train_weights_ = (indicator @ sparse.diags(inv_sizes)).tocsr()[order]
        self.train_y_ = y
        self.leaf_members_ = indicator.T.tocsr()
        self.leaf_means_ = (self.leaf_members_ @ y) * inv_sizes
        return self

    def _leaf_indicator(self, X) -> sparse.csr_matrix:
        leaves = self.apply(X)
        n, k = leaves.shape
        cols = (leaves + self.leaf_offsets_[None, :]).ravel()
        rows = np.repeat(np.arange(n), k)
        data = np.ones(n * k)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, self.n_leaf_columns_))

    def leaf_weights(self, X) -> FloatArray:
        """Dense ``(m, n_train)`` weights, columns ordered by the sorted
        training responses.  Rows sum to one.
        """
        query = self._leaf_indicator(X) / len(self.estimators_)
        return np.asarray((query @ self.train_weights_.T).todense())

    def predict(self, X) -> FloatArray:
        # summed in tree order so the result does not depend on n_jobs
        return np.mean([tree.predict(X) for tree in self.estimators_], axis=0)

    def reweighted_predict(self, X, counts) -> FloatArray:
        """Forest means at ``X`` under reweighted training rows, keeping the
        fitted partition.

        ``counts`` has one row of non-negative training-row weights (e.g.
        bootstrap multiplicities) per prediction; the result has shape
        ``(len(counts), m)``.  Every leaf predicts the weighted mean of its
        training responses, or their plain mean when its weight is zero.
        Unit weights count every training row once, including the rows a
        tree left out of its bag.
        """
        counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
        if counts.shape[1] != self.train_y_.size:
            raise InputError(
                f"counts cover {counts.shape[1]} rows, the forest was trained "
                f"on {self.train_y_.size}"
            )
        query = self._leaf_indicator(X) / len(self.estimators_)
        out = np.empty((counts.shape[0], query.shape[0]))
        for start in range(0, counts.shape[0], _BLOCK_DRAWS):
            block = counts[start : start + _BLOCK_DRAWS]
            weight = self.leaf_members_ @ block.T
            total = self.leaf_members_ @ (block * self.train_y_).T
            means = np.divide(
                total,
                weight,
                out=np.repeat(self.leaf_means_[:, None], len(block), axis=1),
                where=weight > 0,
            )
            out[start : start + len(block)] = np.asarray(query @ means).T
        return out

    def predict_quantiles(self, X, levels: t.Sequence[float]) -> FloatArray:
        levels_arr = np.asarray(levels, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((X.shape[0], len(levels_arr)))
        last = len(self.sorted_y_) - 1
        for start in range(0, X.shape[0], _BLOCK_ROWS):
            cdf = np.cumsum(self.leaf_weights(X[start : start + _BLOCK_ROWS]), axis=1)
            for i, row in enumerate(cdf):
                # smallest response whose cumulative weight reaches the level
                idx = np.searchsorted(row, levels_arr * row[-1] - 1e-12, side="left")
                out[start + i] = self.sorted_y_[np.minimum(idx, last)]
        return out


class LinearQuantileRegression:
    """Linear quantile regression with intercept, one pinball-loss fit per
    level.  Only the fitted levels can be predicted.
    """

    def __init__(self, levels: t.Sequence[float]) -> None:
        self.levels = tuple(float(q) for q in levels)
        self.estimators_: dict[float, QuantileRegressor] = {}

    def fit(self, X, y) -> "LinearQuantileRegression":
        for q in self.levels:
            self.estimators_[q] = QuantileRegressor(
                quantile=q, alpha=0.0, fit_intercept=True, solver="highs"
            ).fit(X, y)
        return self

    def _estimator_for(self, level: float) -> QuantileRegressor:
        for q, estimator in self.estimators_.items():
            if math.isclose(q, level, abs_tol=1e-12):
                return estimator
        raise InputError(
            f"level {level} was not fitted; linear models predict only "
            f"{sorted(self.estimators_)}"
        )

    def predict_quantiles(self, X, levels: t.Sequence[float]) -> FloatArray:
        return np.column_stack([self._estimator_for(q).predict(X) for q in levels])


@t.runtime_checkable
class ConditionalQuantiles(t.Protocol):
    """Anything that returns conditional quantiles of a response at query
    points: fitted models as well as exact oracle quantile functions.
    """

    n_features: int

    def predict_quantiles(
        self, X: npt.ArrayLike, levels: t.Sequence[float] | None = None
    ) -> FloatArray: ...


@dataclass(frozen=True)
class QuantileModel:
    levels: tuple[float, ...]
    estimator: t.Union[QuantileForest, LinearQuantileRegression]
    n_features: int

    def predict_quantiles(
        self, X: npt.ArrayLike, levels: t.Sequence[float] | None = None
    ) -> FloatArray:
        """Quantiles at every row of ``X`` for every level, shape ``(m, k)``.

        Predictions are rearranged so they never decrease with the level.
        """
        X_arr = check_query(X, self.n_features)
        requested = np.asarray(self.levels if levels is None else levels, dtype=float)
        check_levels(requested)
        order = np.argsort(requested, kind="stable")
        values = self.estimator.predict_quantiles(X_arr, requested[order])
        crossed = np.any(np.diff(values, axis=1) < 0, axis=1)
        if crossed.any():
            logger.debug("rearranged crossing quantiles at %d points", crossed.sum())
            values = np.sort(values, axis=1)
        out = np.empty_like(values)
        out[:, order] = values
        return out


@dataclass(frozen=True)
class MeanModel:
    estimator: RegressorMixin
    n_features: int

    def predict(self, X: npt.ArrayLike) -> FloatArray:
        return np.asarray(
            self.estimator.predict(check_query(X, self.n_features)), dtype=np.float64
        )


def check_levels(levels: npt.ArrayLike) -> None:
    arr = np.asarray(levels, dtype=float)
    if arr.size == 0:
        raise InputError("at least one quantile level is required")
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise InputError(f"quantile levels must lie in (0, 1), got {arr.tolist()}")


def check_training_data(
    X: npt.ArrayLike, y: npt.ArrayLike
) -> tuple[FloatArray, FloatArray]:
    X_arr = np.asarray(X, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64).ravel()
    if X_arr.ndim == 1:
        X_arr = X_arr.reshape(-1, 1)
    if X_arr.ndim != 2:
        raise InputError(f"X must be a matrix, got {X_arr.ndim} dimensions")
    if X_arr.shape[0] == 0 or y_arr.size == 0:
        raise InputError("training data is empty")
    if X_arr.shape[0] != y_arr.size:
        raise InputError(f"X has {X_arr.shape[0]} rows but y has {y_arr.size} values")
    if not np.isfinite(X_arr).all() or not np.isfinite(y_arr).all():
        raise InputError("training data contains non-finite values")
    return X_arr, y_arr


def check_query(X: npt.ArrayLike, n_features: int) -> FloatArray:
    """Return ``X`` as an ``(m, n_features)`` matrix; a single point may be
    given as a vector of length ``n_features``.
    """
    X_arr = np.asarray(X, dtype=np.float64)
    if X_arr.ndim == 0:
        X_arr = X_arr.reshape(1, 1)
    elif X_arr.ndim == 1:
        # a single point, or a column of points when the model is 1-d
        shape = (1, -1) if X_arr.size == n_features else (-1, 1)
        X_arr = X_arr.reshape(shape)
    if X_arr.ndim != 2 or X_arr.shape[1] != n_features:
        raise InputError(
            f"query dimension {X_arr.shape[-1]} does not match the model dimension "
            f"{n_features}"
        )
    if not np.isfinite(X_arr).all():
        raise InputError("query contains non-finite values")
    return X_arr


def _check_size(n: int, params: LearnerParams) -> None:
    if params.kind == "forest" and n < 2 * params.min_leaf:
        raise InputError(
            f"{n} training rows are too few for min_leaf={params.min_leaf} "
            f"(need at least {2 * params.min_leaf})"
        )


def _make_forest(params: LearnerParams, n_features: int) -> QuantileForest:
    return QuantileForest(
        n_estimators=params.trees,
        min_samples_leaf=params.min_leaf,
        max_features=params.resolve_mtry(n_features),
        max_depth=params.max_depth,
        bootstrap=True,
        max_samples=None if params.subsample >= 1.0 else params.subsample,
        random_state=params.random_state,
        n_jobs=params.n_jobs,
    )


def fit_quantile_model(
    X: npt.ArrayLike,
    y: npt.ArrayLike,
    levels: t.Sequence[float],
    params: LearnerParams,
) -> QuantileModel:
    """Fit a conditional quantile model for ``levels``.

    A forest model can afterwards be queried at any level in (0, 1); a linear
    model only at the fitted ones.
    """
    X_arr, y_arr = check_training_data(X, y)
    check_levels(levels)
    _check_size(len(y_arr), params)
    levels_t = tuple(sorted(float(q) for q in levels))
    estimator: t.Union[QuantileForest, LinearQuantileRegression]
    if params.kind == "forest":
        estimator = _make_forest(params, X_arr.shape[1]).fit(X_arr, y_arr)
    else:
        estimator = LinearQuantileRegression(levels_t).fit(X_arr, y_arr)
    return QuantileModel(levels_t, estimator, X_arr.shape[1])


def predict_quantile(
    model: ConditionalQuantiles, x: npt.ArrayLike, level: float
) -> float:
    return float(model.predict_quantiles(x, [level])[0, 0])


def fit_mean_model(
    X: npt.ArrayLike, y: npt.ArrayLike, params: LearnerParams
) -> MeanModel:
    X_arr, y_arr = check_training_data(X, y)
    _check_size(len(y_arr), params)
    estimator: RegressorMixin
    if params.kind == "forest":
        estimator = _make_forest(params, X_arr.shape[1]).fit(X_arr, y_arr)
    else:
        estimator = LinearRegression().fit(X_arr, y_arr)
    return MeanModel(estimator, X_arr.shape[1])


def predict_mean(model: MeanModel, x: npt.ArrayLike) -> float:
    return float(model.predict(x)[0])


def fit_arm_models(
    X: npt.ArrayLike,
    y: npt.ArrayLike,
    levels: t.Sequence[float],
    params: LearnerParams,
) -> tuple[QuantileModel, MeanModel]:
    """Fit the quantile and mean models of one treatment arm.  A forest
    serves both roles, so it is grown once.
    """
    if params.kind != "forest":
        return fit_quantile_model(X, y, levels, params), fit_mean_model(X, y, params)
    qmodel = fit_quantile_model(X, y, levels, params)
    return qmodel, MeanModel(qmodel.estimator, qmodel.n_features)


def pinball_loss(y: npt.ArrayLike, pred: npt.ArrayLike, level: float) -> float:
    """Mean check loss at ``level``; minimised by the level-quantile."""
    diff = np.asarray(y, dtype=float) - np.asarray(pred, dtype=float)
    return float(np.mean(np.maximum(level * diff, (level - 1.0) * diff)))
