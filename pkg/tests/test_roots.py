import numpy as np
import pytest

from floquet_sg.errors import SearchError
from floquet_sg.roots import bisect_sign_change, scan_sign_changes


def test_bisection_finds_square_root_of_two():
    result = bisect_sign_change(lambda x: x * x - 2.0, 0.0, 2.0, xtol=1e-14)
    assert result.root == pytest.approx(np.sqrt(2.0), abs=1e-13)
    assert result.bracket_width < 1e-13
    assert result.iterations > 40


def test_bisection_stops_on_small_residual():
    result = bisect_sign_change(lambda x: x - 0.3, 0.0, 1.0, xtol=0.0, ftol=1e-3)
    assert result.residual < 1e-3
    assert result.iterations < 15


def test_bisection_uses_supplied_end_values():
    calls = []

    def func(x):
        calls.append(x)
        return x - 0.25

    bisect_sign_change(func, 0.0, 1.0, xtol=1e-3, fa=-0.25, fb=0.75)
    assert 0.0 not in calls and 1.0 not in calls


def test_bisection_returns_an_exact_end_root():
    result = bisect_sign_change(lambda x: x, 0.0, 1.0)
    assert result.root == 0.0 and result.iterations == 0


def test_bisection_requires_a_sign_change():
    with pytest.raises(SearchError) as excinfo:
        bisect_sign_change(lambda x: x * x + 1.0, -1.0, 1.0)
    assert excinfo.value.diagnostics['fa'] == 2.0
    assert excinfo.value.to_dict()['kind'] == 'SearchError'


def test_bisection_rejects_non_finite_values():
    with pytest.raises(SearchError):
        bisect_sign_change(lambda x: np.nan if 0.4 < x < 0.6 else x - 0.5, 0.0, 1.0)


def test_bisection_caps_iterations():
    result = bisect_sign_change(lambda x: x - 1.0 / 3.0, 0.0, 1.0, xtol=0.0, max_iter=10)
    assert result.iterations == 10
    assert result.bracket_width == pytest.approx(2.0**-10)


def test_scan_sign_changes_skips_non_finite_samples():
    values = [1.0, -1.0, -2.0, 3.0, np.nan, -1.0, 0.0, 2.0]
    assert scan_sign_changes(values) == [(0, 1), (2, 3), (5, 6)]


def test_scan_sign_changes_without_changes():
    assert scan_sign_changes(np.ones(5)) == []
