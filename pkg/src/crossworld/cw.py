import dataclasses
import typing as t
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import stats

from .cate import CateEstimate
from .conformal import BandPrediction
from .core import Interval, IntervalArray, Rho, as_rho, d_rho
from .exceptions import ConfigurationError, InputError
from .learners import ConditionalQuantiles
from .seeding import SeedLike, as_generator

CRule = t.Literal["quadratic", "linear"]

MIN_CMC_SAMPLES = 1000
MIN_CMC_LEVELS = 9
DEFAULT_CMC_LEVELS: tuple[float, ...] = tuple(np.linspace(0.005, 0.995, 199))


@dataclass(frozen=True)
class CWConfig:
    """Settings of the CW(rho) and CW+CI(rho) constructions.

    :param c: weight of the CATE confidence radii in ``[0, 1]``, or ``"auto"``
        to derive it from ``rho_used`` with ``c_rule``.
    """

    alpha: float = 0.1
    rho_used: Rho = Rho(0.0)
    c: t.Union[float, t.Literal["auto"]] = "auto"
    c_rule: CRule = "quadratic"
    B: int = 200
    beta: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"must lie in (0, 1), got {self.alpha}", "alpha")
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError(f"must lie in (0, 1), got {self.beta}", "beta")
        if self.c_rule not in ("quadratic", "linear"):
            raise ConfigurationError(f"unknown rule {self.c_rule!r}", "c_rule")
        if self.c != "auto" and not 0.0 <= float(self.c) <= 1.0:
            raise ConfigurationError(
                f"must lie in [0, 1] or be 'auto', got {self.c}", "c"
            )
        object.__setattr__(self, "rho_used", as_rho(self.rho_used))

    def replace(self, **changes: t.Any) -> "CWConfig":
        return dataclasses.replace(self, **changes)

    @property
    def effective_c(self) -> float:
        return effective_c(self.c, self.rho_used, self.c_rule)


def effective_c(
    c: t.Union[float, t.Literal["auto"]],
    rho: t.Union[Rho, float],
    rule: CRule = "quadratic",
) -> float:
    """``((1 + rho) / 2) ** 2`` (or ``(1 + rho) / 2`` with the linear rule)
    when ``c`` is ``"auto"``; otherwise ``c`` itself.
    """
    if c != "auto":
        value = float(c)
        if not 0.0 <= value <= 1.0:
            raise ConfigurationError(f"c must lie in [0, 1], got {value}")
        return value
    half = (1.0 + as_rho(rho).value) / 2.0
    return half * half if rule == "quadratic" else half


def _as_tau(tau_hat: npt.ArrayLike, n: int) -> npt.NDArray[np.float64]:
    tau = np.atleast_1d(np.asarray(tau_hat, dtype=np.float64))
    if tau.shape != (n,):
        raise InputError(f"tau_hat has {tau.size} values for bands at {n} points")
    return tau


def cw_intervals(
    tau_hat: npt.ArrayLike,
    band1: BandPrediction,
    band0: BandPrediction,
    rho: t.Union[Rho, float],
) -> IntervalArray:
    """CW(rho) intervals
    ``[tau - D_rho(l1, u0), tau + D_rho(l0, u1)]`` at every query point.
    """
    if len(band1) != len(band0):
        raise InputError(f"bands cover {len(band1)} and {len(band0)} points")
    tau = _as_tau(tau_hat, len(band1))
    lower = d_rho(band1.lower_width, band0.upper_width, rho)
    upper = d_rho(band0.lower_width, band1.upper_width, rho)
    return IntervalArray(tau - lower, tau + upper)


def cw_interval(
    tau_hat: float,
    band1: BandPrediction,
    band0: BandPrediction,
    rho: t.Union[Rho, float],
) -> Interval:
    return cw_intervals(tau_hat, band1, band0, rho).item()


def cw_ci_intervals(
    tau_hat: npt.ArrayLike,
    cate_ci: CateEstimate,
    band1: BandPrediction,
    band0: BandPrediction,
    rho: t.Union[Rho, float],
    c: t.Union[float, t.Literal["auto"]] = "auto",
    c_rule: CRule = "quadratic",
) -> IntervalArray:
    """CW+CI(rho): the CW(rho) interval widened by ``c * radius_lower`` below
    and ``c * radius_upper`` above.  With ``c = 0`` it is CW(rho) exactly.
    """
    weight = effective_c(c, rho, c_rule)
    base = cw_intervals(tau_hat, band1, band0, rho)
    if len(cate_ci) != len(base):
        raise InputError(f"CATE CI covers {len(cate_ci)} points, bands {len(base)}")
    if weight == 0.0:
        return base
    return IntervalArray(
        base.lo - weight * cate_ci.radius_lower, base.hi + weight * cate_ci.radius_upper
    )


def cw_ci_interval(
    tau_hat: float,
    cate_ci: CateEstimate,
    band1: BandPrediction,
    band0: BandPrediction,
    rho: t.Union[Rho, float],
    c: t.Union[float, t.Literal["auto"]] = "auto",
    c_rule: CRule = "quadratic",
) -> Interval:
    return cw_ci_intervals(tau_hat, cate_ci, band1, band0, rho, c, c_rule).item()


def gaussian_copula_uniforms(
    n: int, rho: t.Union[Rho, float], seed: SeedLike
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """``n`` pairs ``(U1, U0)`` from a Gaussian copula with correlation ``rho``."""
    r = as_rho(rho).value
    z = as_generator(seed).standard_normal((n, 2))
    z1 = z[:, 0]
    z0 = r * z1 + np.sqrt(max(0.0, 1.0 - r * r)) * z[:, 1]
    return stats.norm.cdf(z1), stats.norm.cdf(z0)


def cmc_intervals(
    qmodel1: ConditionalQuantiles,
    qmodel0: ConditionalQuantiles,
    X: npt.ArrayLike,
    alpha: float,
    M: int = MIN_CMC_SAMPLES,
    rho: t.Union[Rho, float] = 0.0,
    seed: SeedLike = 0,
    levels: t.Sequence[float] = DEFAULT_CMC_LEVELS,
) -> IntervalArray:
    """Monte-Carlo convolution intervals.

    ``M`` copula draws are pushed through each arm's conditional quantile
    function (linear interpolation on ``levels``, flat beyond its ends); the
    interval spans the ``alpha / 2`` and ``1 - alpha / 2`` empirical quantiles
    of the differences.  The same draws are reused at every query point.
    """
    if M < MIN_CMC_SAMPLES:
        raise ConfigurationError(
            f"M={M} is below the minimum of {MIN_CMC_SAMPLES}", "M"
        )
    grid = np.asarray(levels, dtype=np.float64)
    if grid.size < MIN_CMC_LEVELS:
        raise ConfigurationError(
            f"{grid.size} quantile levels are too few; CMC needs at least "
            f"{MIN_CMC_LEVELS}",
            "levels",
        )
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}", "alpha")
    grid = np.sort(grid)
    q1 = qmodel1.predict_quantiles(X, grid)
    q0 = qmodel0.predict_quantiles(X, grid)
    u1, u0 = gaussian_copula_uniforms(M, rho, seed)

    lo = np.empty(q1.shape[0])
    hi = np.empty(q1.shape[0])
    for i in range(q1.shape[0]):
        diff = np.interp(u1, grid, q1[i]) - np.interp(u0, grid, q0[i])
        lo[i], hi[i] = np.quantile(diff, [alpha / 2.0, 1.0 - alpha / 2.0])
    return IntervalArray(lo, hi)


def cmc_interval(
    qmodel1: ConditionalQuantiles,
    qmodel0: ConditionalQuantiles,
    x: npt.ArrayLike,
    alpha: float,
    M: int = MIN_CMC_SAMPLES,
    rho: t.Union[Rho, float] = 0.0,
    seed: SeedLike = 0,
    levels: t.Sequence[float] = DEFAULT_CMC_LEVELS,
) -> Interval:
    return cmc_intervals(qmodel1, qmodel0, x, alpha, M, rho, seed, levels).item()


def misspecify_rho(rho_true: t.Union[Rho, float], delta: float) -> Rho:
    """``max(-1, rho_true - delta)``.

    A negative ``delta`` moves towards ``+1``; the result is capped there too.
    """
    return Rho(min(1.0, max(-1.0, as_rho(rho_true).value - delta)))
