import math

import numpy as np
import pytest

from crossworld import DomainError, Interval, IntervalArray, Rho, d_rho, interval_contains


def test_rho_rejects_values_outside_unit_interval() -> None:
    assert Rho(-1).value == -1.0
    assert float(Rho(0.25)) == 0.25
    for bad in (-1.5, 1.0000001, float("nan")):
        with pytest.raises(DomainError):
            Rho(bad)


def test_interval_validates_and_contains_closed_endpoints() -> None:
    iv = Interval(0.0, 2.0)
    assert iv.width == 2.0
    assert interval_contains(iv, 1.0)
    assert interval_contains(iv, 2.0)
    assert not interval_contains(iv, 2.1)
    assert 0.0 in iv
    assert iv.issuperset(Interval(0.5, 1.5))
    assert not Interval(0.5, 1.5).issuperset(iv)

    with pytest.raises(DomainError):
        Interval(1.0, 0.0)
    with pytest.raises(DomainError):
        Interval(float("nan"), 1.0)


def test_interval_array_vectorised_operations() -> None:
    arr = IntervalArray([0.0, 1.0, -1.0], [1.0, 3.0, 1.0])
    assert len(arr) == 3
    np.testing.assert_array_equal(arr.widths, [1.0, 2.0, 2.0])
    np.testing.assert_array_equal(arr.contains([0.5, 3.5, 1.0]), [True, False, True])
    assert arr[1] == Interval(1.0, 3.0)
    assert list(arr)[2] == Interval(-1.0, 1.0)

    wider = IntervalArray([-1.0, 1.0, -2.0], [1.0, 2.0, 2.0])
    np.testing.assert_array_equal(wider.issuperset(arr), [True, False, True])
    assert IntervalArray.from_intervals([Interval(0, 1)]).item() == Interval(0, 1)

    with pytest.raises(DomainError, match="index 1"):
        IntervalArray([0.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        arr.item()


@pytest.mark.parametrize(
    ("a", "b", "rho", "expected"),
    [
        (3.0, 4.0, 0.0, 5.0),
        (2.0, 3.0, -1.0, 5.0),
        (2.0, 2.0, 1.0, 0.0),
        (1.0, 1.0, 0.5, 1.0),
    ],
)
def test_d_rho_examples(a: float, b: float, rho: float, expected: float) -> None:
    assert d_rho(a, b, rho) == pytest.approx(expected, abs=1e-12)
    assert isinstance(d_rho(a, b, Rho(rho)), float)


def test_d_rho_rejects_negative_and_nan_widths() -> None:
    with pytest.raises(DomainError):
        d_rho(-1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        d_rho(1.0, float("nan"), 0.0)
    with pytest.raises(DomainError):
        d_rho(1.0, 1.0, 2.0)


def test_d_rho_infinite_width_gives_infinite_distance() -> None:
    assert d_rho(math.inf, 1.0, 1.0) == math.inf
    np.testing.assert_array_equal(
        d_rho(np.array([1.0, math.inf]), np.array([1.0, 0.0]), -0.5),
        [math.sqrt(3.0), math.inf],
    )


def test_d_rho_never_nan_near_rho_one() -> None:
    a = np.linspace(0.0, 10.0, 1001)
    dist = d_rho(a, a + 1e-15, 1.0)
    assert not np.isnan(dist).any()
    assert (dist >= 0).all()


def test_d_rho_property_suite() -> None:
    rng = np.random.default_rng(2024)
    n = 10_000
    a = rng.exponential(2.0, n)
    b = rng.exponential(2.0, n)
    r = rng.uniform(-1.0, 1.0, (n, 2))
    hi, lo = r.max(axis=1), r.min(axis=1)

    for i in range(0, n, 500):
        assert d_rho(a[i], b[i], hi[i]) <= d_rho(a[i], b[i], lo[i]) + 1e-12

    for rho in (-1.0, -0.3, 0.0, 0.7, 1.0):
        dist = d_rho(a, b, rho)
        assert (np.abs(a - b) - 1e-12 <= dist).all()
        assert (dist <= a + b + 1e-12).all()
        np.testing.assert_allclose(dist, d_rho(b, a, rho), rtol=0, atol=1e-12)

    np.testing.assert_allclose(d_rho(a, b, 0.0), np.hypot(a, b), rtol=1e-12)
    np.testing.assert_allclose(d_rho(a, b, -1.0), a + b, rtol=1e-12)
    np.testing.assert_allclose(d_rho(a, b, 1.0), np.abs(a - b), atol=1e-9)
