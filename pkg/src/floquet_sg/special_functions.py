from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import dagster as dg
import numpy as np
import numpy.typing as npt
from scipy import integrate

from .errors import ConvergenceError, DomainError

log = dg.get_dagster_logger(__name__)

_EPS = float(np.finfo(float).eps)
_MAX_AGM_STEPS = 64
_ROUNDOFF_SLACK = 100.0
_ROUNDOFF_FLOOR = 1e-12

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances handed to the adaptive quadrature."""

    abs_tol: float = 1e-14
    rel_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self) -> None:
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError('quadrature tolerances must be positive')
        if self.max_subdivisions < 1:
            raise DomainError('max_subdivisions must be at least 1')


def _check_modulus(k: float) -> float:
    k = float(k)
    if not np.isfinite(k) or k < 0:
        raise DomainError(f'elliptic modulus must be non-negative, got {k}')
    if k >= 1:
        raise DomainError(f'elliptic modulus must be below 1, got {k}')
    return k


def agm(a: float, b: float) -> float:
    """Arithmetic-geometric mean of two positive numbers."""
    for _ in range(_MAX_AGM_STEPS):
        if abs(a - b) <= _EPS * a:
            return a
        a, b = 0.5 * (a + b), float(np.sqrt(a * b))
    raise ConvergenceError('AGM iteration did not settle', estimate=a, error_bound=abs(a - b))


@lru_cache(maxsize=128)
def _agm_ladder(k: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Rungs a_n and c_n of the AGM started from (1, k', k)."""
    a, b, c = 1.0, float(np.sqrt((1.0 - k) * (1.0 + k))), k
    a_rungs, c_rungs = [a], [c]
    for _ in range(_MAX_AGM_STEPS):
        if abs(c) <= _EPS * a:
            return tuple(a_rungs), tuple(c_rungs)
        a, b, c = 0.5 * (a + b), float(np.sqrt(a * b)), 0.5 * (a - b)
        a_rungs.append(a)
        c_rungs.append(c)
    raise ConvergenceError(f'AGM ladder for k={k} did not settle', estimate=a, error_bound=c)


def complete_elliptic_K(k: float) -> float:
    """Complete elliptic integral of the first kind, K(k) = pi / (2 AGM(1, k')).

    Parameters
    ----------
    k : float
        Elliptic modulus, ``0 <= k < 1``

    Returns
    -------
    float
        K(k) to machine precision
    """
    a_rungs, _ = _agm_ladder(_check_modulus(k))
    return 0.5 * np.pi / a_rungs[-1]


def jacobi_ellipj(
    zeta: npt.ArrayLike,
    k: float
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Jacobi sn, cn and dn for real arguments.

    The amplitude is recovered by the descending Landen recursion on the AGM
    ladder of ``k``; arguments are first reduced modulo 4K(k).

    Parameters
    ----------
    zeta : array_like
        Real argument(s)
    k : float
        Elliptic modulus, ``0 <= k < 1``

    Returns
    -------
    tuple[FloatArray, FloatArray, FloatArray]
        ``(sn, cn, dn)`` with the shape of ``zeta``
    """
    k = _check_modulus(k)
    a_rungs, c_rungs = _agm_ladder(k)
    quarter = 0.5 * np.pi / a_rungs[-1]
    zeta = np.asarray(zeta, dtype=float)
    reduced = np.remainder(zeta + 2.0 * quarter, 4.0 * quarter) - 2.0 * quarter

    depth = len(a_rungs) - 1
    phi = (2.0**depth) * a_rungs[-1] * reduced
    for n in range(depth, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c_rungs[n] / a_rungs[n] * np.sin(phi)))

    sn = np.sin(phi)
    cn = np.cos(phi)
    dn = np.sqrt(1.0 - (k * sn) ** 2)
    return sn, cn, dn


def jacobi_sn(zeta: npt.ArrayLike, k: float) -> FloatArray:
    """Jacobi elliptic function sn(zeta, k); odd, with period 4K(k)."""
    sn, _, _ = jacobi_ellipj(zeta, k)
    return sn


def _roundoff_limited(message: str, value: float, abserr: float, spec: QuadratureSpec) -> bool:
    """QUADPACK stopped on roundoff while its error estimate is already small enough."""
    if 'roundoff' not in message:
        return False
    requested = max(spec.abs_tol, spec.rel_tol * abs(value))
    return abserr <= max(_ROUNDOFF_SLACK * requested, _ROUNDOFF_FLOOR * abs(value))


def adaptive_quadrature(
    integrand: Callable[[float], float],
    a: float,
    b: float,
    spec: QuadratureSpec | None = None
) -> float:
    """Integrate over [a, b] allowing inverse-square-root endpoint singularities.

    The substitution ``x = a + (b - a) sin^2(theta)`` turns
    ``(x - a)^(-1/2)`` and ``(b - x)^(-1/2)`` behaviour into a bounded
    integrand on ``[0, pi/2]``, which QUADPACK then refines adaptively with
    its Gauss-Kronrod pair.

    Parameters
    ----------
    integrand : Callable[[float], float]
        Function finite on the open interval
    a, b : float
        Integration limits, ``a < b``
    spec : QuadratureSpec | None, optional
        Tolerances, by default ``QuadratureSpec()``

    Returns
    -------
    float
        The integral

    Raises
    ------
    ConvergenceError
        If QUADPACK gives up before reaching the tolerance. A roundoff stop is
        accepted when its error estimate is within 100 times the requested
        tolerance or 1e-12 relative
    """
    spec = spec or QuadratureSpec()
    if not a < b:
        raise DomainError(f'quadrature needs a < b, got [{a}, {b}]')
    width = b - a

    def regularized(theta: float) -> float:
        s = np.sin(theta)
        return integrand(a + width * s * s) * width * np.sin(2.0 * theta)

    value, abserr, info, *failure = integrate.quad(
        regularized,
        0.0,
        0.5 * np.pi,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=spec.max_subdivisions,
        full_output=1
    )
    if failure and _roundoff_limited(failure[0], value, abserr, spec):
        log.debug(f"Quadrature on [{a}, {b}] hit roundoff at error {abserr:.2e}; accepted")
    elif failure:
        raise ConvergenceError(
            f'quadrature on [{a}, {b}] failed: {failure[0]}',
            estimate=float(value),
            error_bound=float(abserr)
        )
    log.debug(f"Quadrature on [{a}, {b}] used {info['neval']} evaluations, error {abserr:.2e}")
    return float(value)
