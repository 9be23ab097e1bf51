from collections.abc import Callable
from dataclasses import dataclass

import dagster as dg
import numpy as np
import numpy.typing as npt

from .errors import SearchError

log = dg.get_dagster_logger(__name__)


@dataclass(frozen=True)
class BisectionResult:
    root: float
    value: float
    bracket_width: float
    iterations: int

    @property
    def residual(self) -> float:
        return abs(self.value)


def bisect_sign_change(
    func: Callable[[float], float],
    a: float,
    b: float,
    xtol: float = 1e-14,
    ftol: float = 0.0,
    max_iter: int = 200,
    fa: float | None = None,
    fb: float | None = None
) -> BisectionResult:
    """Bisect a bracket ``[a, b]`` on which ``func`` changes sign.

    Accepts the midpoint as soon as ``|func| < ftol`` or the bracket is
    narrower than ``xtol``. Known end values may be passed in to save
    evaluations.

    Parameters
    ----------
    func : Callable[[float], float]
        Continuous real function
    a, b : float
        Bracket ends
    xtol : float, optional
        Bracket width at which to stop, by default 1e-14
    ftol : float, optional
        Residual at which to stop, by default 0 (never)
    max_iter : int, optional
        Hard cap on halvings, by default 200
    fa, fb : float | None, optional
        Already computed ``func(a)`` and ``func(b)``

    Returns
    -------
    BisectionResult
        Root estimate with its residual, final bracket width and iteration count

    Raises
    ------
    SearchError
        When the ends do not bracket a sign change or ``func`` returns NaN
    """
    fa = func(a) if fa is None else fa
    fb = func(b) if fb is None else fb
    if not (np.isfinite(fa) and np.isfinite(fb)):
        raise SearchError('bracket end is not finite', {'a': a, 'b': b, 'fa': fa, 'fb': fb})
    if fa == 0.0:
        return BisectionResult(a, 0.0, abs(b - a), 0)
    if fb == 0.0:
        return BisectionResult(b, 0.0, abs(b - a), 0)
    if np.sign(fa) == np.sign(fb):
        raise SearchError('no sign change on bracket', {'a': a, 'b': b, 'fa': fa, 'fb': fb})

    mid, f_mid = a, fa
    for iteration in range(1, max_iter + 1):
        mid = 0.5 * (a + b)
        f_mid = func(mid)
        if not np.isfinite(f_mid):
            raise SearchError('function is not finite inside bracket', {'x': mid, 'iterations': iteration})
        if abs(f_mid) < ftol or f_mid == 0.0 or abs(b - a) < xtol:
            return BisectionResult(mid, f_mid, abs(b - a), iteration)
        if np.sign(f_mid) == np.sign(fa):
            a, fa = mid, f_mid
        else:
            b = mid

    log.warning(f'Bisection stopped after {max_iter} halvings, bracket {abs(b - a):.3e}')
    return BisectionResult(mid, f_mid, abs(b - a), max_iter)


def scan_sign_changes(values: npt.ArrayLike) -> list[tuple[int, int]]:
    """Index pairs ``(i, i + 1)`` of consecutive finite samples with opposite signs.

    A sample that is exactly zero closes the bracket ending on it.
    """
    values = np.asarray(values, dtype=float)
    signs = np.sign(values)
    finite = np.isfinite(values)
    brackets: list[tuple[int, int]] = []
    for i in range(len(values) - 1):
        if not (finite[i] and finite[i + 1]) or signs[i] == 0.0:
            continue
        if signs[i] != signs[i + 1]:
            brackets.append((i, i + 1))
    return brackets
