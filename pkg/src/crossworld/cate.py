import logging
import typing as t
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .core import FloatArray, IntervalArray
from .exceptions import ConfigurationError, DomainError, InputError
from .learners import (
    LearnerParams,
    MeanModel,
    QuantileForest,
    check_query,
    fit_mean_model,
)
from .seeding import SeedLike, as_generator, as_seed_sequence, to_int

if t.TYPE_CHECKING:
    from .datagen import Dataset

logger = logging.getLogger(__name__)

MIN_BOOTSTRAP = 50

BootstrapScheme = t.Literal["leaf", "refit"]


@dataclass(frozen=True)
class CateEstimate:
    """Point estimates ``tau_hat`` with confidence intervals
    ``[tau_hat - radius_lower, tau_hat + radius_upper]`` at query points.
    """

    tau_hat: FloatArray
    radius_lower: FloatArray
    radius_upper: FloatArray
    beta: float
    n_boot: int
    redraws: int = 0

    def __post_init__(self) -> None:
        arrays = [
            np.atleast_1d(np.asarray(a, dtype=np.float64))
            for a in (self.tau_hat, self.radius_lower, self.radius_upper)
        ]
        if len({a.shape for a in arrays}) != 1:
            raise DomainError("CATE arrays must have the same shape")
        if (arrays[1] < 0).any() or (arrays[2] < 0).any():
            raise DomainError("CI radii must be non-negative")
        for name, arr in zip(("tau_hat", "radius_lower", "radius_upper"), arrays):
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.tau_hat)

    def at(self, index: int) -> "CateEstimate":
        sl = slice(index, index + 1)
        return CateEstimate(
            self.tau_hat[sl],
            self.radius_lower[sl],
            self.radius_upper[sl],
            self.beta,
            self.n_boot,
            self.redraws,
        )

    def intervals(self) -> IntervalArray:
        return IntervalArray(
            self.tau_hat - self.radius_lower, self.tau_hat + self.radius_upper
        )


def predict_cate(mean1: MeanModel, mean0: MeanModel, X: npt.ArrayLike) -> FloatArray:
    """``mu1_hat(x) - mu0_hat(x)`` at every row of ``X``."""
    if mean1.n_features != mean0.n_features:
        raise InputError(
            f"arm models disagree on dimension: {mean1.n_features} vs "
            f"{mean0.n_features}"
        )
    X_arr = check_query(X, mean1.n_features)
    return mean1.predict(X_arr) - mean0.predict(X_arr)


def estimate_cate(mean1: MeanModel, mean0: MeanModel, x: npt.ArrayLike) -> float:
    return float(predict_cate(mean1, mean0, x)[0])


def _fit_cate(
    X: FloatArray, Y: FloatArray, T: npt.NDArray[np.int_], params: LearnerParams
) -> tuple[MeanModel, MeanModel]:
    treated = T == 1
    return (
        fit_mean_model(X[treated], Y[treated], params),
        fit_mean_model(X[~treated], Y[~treated], params),
    )


def _resample(
    rng: np.random.Generator, T: npt.NDArray[np.int_], stratify: bool, budget: int
) -> tuple[npt.NDArray[np.intp], int]:
    if stratify:
        parts = [
            rng.choice(rows, size=len(rows), replace=True)
            for rows in (np.flatnonzero(T == 0), np.flatnonzero(T == 1))
        ]
        return np.concatenate(parts), 0
    redraws = 0
    while True:
        rows = rng.integers(0, len(T), size=len(T))
        if 0 < T[rows].sum() < len(rows):
            return rows, redraws
        redraws += 1
        if redraws > budget:
            raise InputError(
                f"gave up after {redraws} resamples without both arms present"
            )


def _check_bootstrap(B: int, beta: float) -> None:
    if B < MIN_BOOTSTRAP:
        raise ConfigurationError(f"B={B} is below the minimum of {MIN_BOOTSTRAP}", "B")
    if not 0.0 < beta < 1.0:
        raise ConfigurationError(f"beta must lie in (0, 1), got {beta}", "beta")


def _as_center(tau_hat: npt.ArrayLike, X_query: FloatArray) -> FloatArray:
    center = np.atleast_1d(np.asarray(tau_hat, dtype=np.float64))
    if center.shape != (X_query.shape[0],):
        raise InputError(
            f"tau_hat has {center.size} values for {X_query.shape[0]} query points"
        )
    return center


def bootstrap_cate_ci(
    data: "Dataset",
    x_query: npt.ArrayLike,
    B: int = 200,
    beta: float = 0.1,
    params: LearnerParams | None = None,
    seed: SeedLike = 0,
    tau_hat: npt.ArrayLike | None = None,
    stratify: bool = True,
) -> CateEstimate:
    """Percentile-bootstrap confidence intervals for the CATE.

    Each of the ``B`` resamples refits both arms' mean models; the CI at a
    query point spans the empirical ``beta / 2`` and ``1 - beta / 2``
    quantiles of the bootstrap estimates.  Radii are measured from
    ``tau_hat`` when given (e.g. the estimate the prediction bands were built
    with), otherwise from a refit on the full ``data``.

    Resampling preserves the per-arm counts unless ``stratify`` is off; a
    plain resample that misses an arm is redrawn, at most ``10 * B`` times
    in total.
    """
    _check_bootstrap(B, beta)
    params = params or LearnerParams()
    T = np.asarray(data.T, dtype=np.int_)
    if T.sum() == 0 or T.sum() == len(T):
        raise InputError("bootstrap needs both treated and control units")

    X_query = check_query(x_query, data.X.shape[1])
    if tau_hat is None:
        center = predict_cate(*_fit_cate(data.X, data.Y, T, params), X_query)
    else:
        center = _as_center(tau_hat, X_query)

    children = as_seed_sequence(seed).spawn(B)
    estimates = np.empty((B, X_query.shape[0]))
    total_redraws = 0
    for b, child in enumerate(children):
        rng = as_generator(child)
        rows, redraws = _resample(rng, T, stratify, 10 * B - total_redraws)
        total_redraws += redraws
        refit = params.replace(seed=to_int(rng))
        estimates[b] = predict_cate(
            *_fit_cate(data.X[rows], data.Y[rows], T[rows], refit), X_query
        )
    if total_redraws:
        logger.debug("bootstrap redrew %d resamples with a missing arm", total_redraws)

    lower, upper = np.quantile(estimates, [beta / 2.0, 1.0 - beta / 2.0], axis=0)
    return CateEstimate(
        tau_hat=center,
        radius_lower=np.maximum(0.0, center - lower),
        radius_upper=np.maximum(0.0, upper - center),
        beta=beta,
        n_boot=B,
        redraws=total_redraws,
    )


def leaf_bootstrap_cate_ci(
    mean1: MeanModel,
    mean0: MeanModel,
    x_query: npt.ArrayLike,
    B: int = 200,
    beta: float = 0.1,
    seed: SeedLike = 0,
    tau_hat: npt.ArrayLike | None = None,
    stratify: bool = True,
) -> CateEstimate:
    """Percentile-bootstrap CATE intervals from the fitted arm forests.

    The forests are not regrown: each resample draws multiplicities for the
    training rows of both arms and recomputes every leaf mean
    (:meth:`QuantileForest.reweighted_predict`).  The radii are the spread
    of the bootstrap estimates around the unit-weight estimate, placed
    around ``tau_hat`` (the arm forests' own difference by default).
    Resampling follows :func:`bootstrap_cate_ci`.
    """
    _check_bootstrap(B, beta)
    forests = []
    for model in (mean1, mean0):
        if not isinstance(model.estimator, QuantileForest):
            raise ConfigurationError(
                f"the leaf bootstrap needs forest mean models, got "
                f"{type(model.estimator).__name__}",
                "scheme",
            )
        forests.append(model.estimator)
    if mean1.n_features != mean0.n_features:
        raise InputError(
            f"arm models disagree on dimension: {mean1.n_features} vs "
            f"{mean0.n_features}"
        )
    X_query = check_query(x_query, mean1.n_features)
    if tau_hat is None:
        center = predict_cate(mean1, mean0, X_query)
    else:
        center = _as_center(tau_hat, X_query)

    n1, n0 = (f.train_y_.size for f in forests)
    T = np.concatenate([np.ones(n1, dtype=np.int_), np.zeros(n0, dtype=np.int_)])
    # row 0 keeps unit weights and gives the reference estimate
    counts = np.ones((B + 1, n1 + n0))
    total_redraws = 0
    for b, child in enumerate(as_seed_sequence(seed).spawn(B), start=1):
        rows, redraws = _resample(
            as_generator(child), T, stratify, 10 * B - total_redraws
        )
        total_redraws += redraws
        counts[b] = np.bincount(rows, minlength=n1 + n0)
    if total_redraws:
        logger.debug("bootstrap redrew %d resamples with a missing arm", total_redraws)

    forest1, forest0 = forests
    estimates = forest1.reweighted_predict(X_query, counts[:, :n1])
    estimates -= forest0.reweighted_predict(X_query, counts[:, n1:])
    reference = estimates[0]
    lower, upper = np.quantile(estimates[1:], [beta / 2.0, 1.0 - beta / 2.0], axis=0)
    return CateEstimate(
        tau_hat=center,
        radius_lower=np.maximum(0.0, reference - lower),
        radius_upper=np.maximum(0.0, upper - reference),
        beta=beta,
        n_boot=B,
        redraws=total_redraws,
    )
