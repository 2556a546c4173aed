import typing as t
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .exceptions import DomainError

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True, order=True)
class Rho:
    """A cross-world correlation cor(Y(1), Y(0) | X = x), constant in x."""

    value: float

    def __post_init__(self) -> None:
        value = float(self.value)
        if not -1.0 <= value <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.value!r}")
        object.__setattr__(self, "value", value)

    def __float__(self) -> float:
        return self.value


def as_rho(rho: t.Union[Rho, float]) -> Rho:
    return rho if isinstance(rho, Rho) else Rho(rho)


@dataclass(frozen=True)
class Interval:
    """A closed interval ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if np.isnan(lo) or np.isnan(hi) or lo > hi:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, y: float) -> bool:
        return self.lo <= y <= self.hi

    def issuperset(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


class IntervalArray:
    """Closed intervals at many query points, stored as two aligned arrays."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: npt.ArrayLike, hi: npt.ArrayLike) -> None:
        lo_arr = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi_arr = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if lo_arr.shape != hi_arr.shape or lo_arr.ndim != 1:
            raise DomainError(
                f"interval bounds must be aligned 1-d arrays, got shapes "
                f"{lo_arr.shape} and {hi_arr.shape}"
            )
        bad = np.isnan(lo_arr) | np.isnan(hi_arr) | (lo_arr > hi_arr)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(
                f"invalid interval at index {i}: [{lo_arr[i]}, {hi_arr[i]}]"
            )
        self.lo: FloatArray = lo_arr
        self.hi: FloatArray = hi_arr

    @classmethod
    def from_intervals(cls, intervals: t.Iterable[Interval]) -> "IntervalArray":
        items = list(intervals)
        return cls([i.lo for i in items], [i.hi for i in items])

    def __len__(self) -> int:
        return len(self.lo)

    def __getitem__(self, index: int) -> Interval:
        return Interval(self.lo[index], self.hi[index])

    def __iter__(self) -> t.Iterator[Interval]:
        for lo, hi in zip(self.lo, self.hi):
            yield Interval(lo, hi)

    def __repr__(self) -> str:
        return f"IntervalArray(n={len(self)})"

    def item(self) -> Interval:
        if len(self) != 1:
            raise ValueError(f"item() needs exactly one interval, got {len(self)}")
        return self[0]

    @property
    def widths(self) -> FloatArray:
        return self.hi - self.lo

    def contains(self, y: npt.ArrayLike) -> npt.NDArray[np.bool_]:
        y_arr = np.asarray(y, dtype=np.float64)
        return (self.lo <= y_arr) & (y_arr <= self.hi)

    def issuperset(self, other: "IntervalArray") -> npt.NDArray[np.bool_]:
        return (self.lo <= other.lo) & (other.hi <= self.hi)


def interval_contains(interval: Interval, y: float) -> bool:
    return interval.lo <= y <= interval.hi


@t.overload
def d_rho(a: float, b: float, rho: t.Union[Rho, float]) -> float: ...


@t.overload
def d_rho(
    a: npt.ArrayLike, b: npt.ArrayLike, rho: t.Union[Rho, float]
) -> t.Union[float, FloatArray]: ...


def d_rho(a, b, rho):
    """Correlation-adjusted Euclidean distance ``sqrt(a^2 + b^2 - 2 rho a b)``.

    ``a`` and ``b`` are band widths and must be non-negative; arrays are
    combined elementwise.  An infinite width (the open side of a one-sided
    band) gives an infinite distance.

    The result always lies in ``[|a - b|, a + b]`` and is non-increasing in
    ``rho``: ``rho = 0`` is the Euclidean norm, ``rho = -1`` the sum and
    ``rho = 1`` the absolute difference.
    """
    r = as_rho(rho).value
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if np.isnan(a_arr).any() or np.isnan(b_arr).any():
        raise DomainError("widths must not be NaN")
    if (a_arr < 0).any() or (b_arr < 0).any():
        raise DomainError("widths must be non-negative")

    with np.errstate(invalid="ignore", over="ignore"):
        # a^2 + b^2 - 2 rho a b, arranged to stay exact at rho = 1
        radicand = (a_arr - b_arr) ** 2 + 2.0 * (1.0 - r) * a_arr * b_arr
        dist = np.sqrt(np.maximum(radicand, 0.0))
        dist = np.clip(dist, np.abs(a_arr - b_arr), a_arr + b_arr)
    dist = np.where(np.isinf(a_arr) | np.isinf(b_arr), np.inf, dist)

    if dist.ndim == 0:
        return float(dist)
    return dist
