from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import dagster as dg
import numpy as np
import numpy.typing as npt
from scipy import integrate, optimize

from .errors import AccuracyError, ConvergenceError, DomainError
from .special_functions import FloatArray
from .wave import WaveProfile

log = dg.get_dagster_logger(__name__)

ComplexMat2 = npt.NDArray[np.complex128]
"""A 2x2 complex matrix ``[[m11, m12], [m21, m22]]``."""

Problem = Literal['P', 'Q']

MAX_STEPS = 1_000_000
DOP853_STAGES = 12
MAX_GROWTH_EXPONENT = 700.0
MIN_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class MonodromyData:
    """Fundamental matrix of (P) or (Q) after one period.

    ``abel_det`` is the closed-form determinant from Abel's identity,
    ``e^{2 c gamma lambda T}`` for (P) and 1 for (Q); ``det`` is the computed
    one. ``lam`` holds lambda for (P) and mu for (Q).
    """

    matrix: ComplexMat2
    lam: complex
    which: Problem
    abel_det: complex
    log_abs_abel_det: float
    abel_residual: float
    abel_scale: float
    abel_bound: float

    @property
    def trace(self) -> complex:
        return complex(self.matrix[0, 0] + self.matrix[1, 1])

    @property
    def det(self) -> complex:
        m = self.matrix
        return complex(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @property
    def discriminant(self) -> complex:
        return self.trace**2 - 4.0 * self.abel_det

    @property
    def relative_abel_residual(self) -> float:
        return self.abel_residual / self.abel_scale if self.abel_scale > 0 else np.inf

    @property
    def accurate(self) -> bool:
        return bool(self.abel_residual <= self.abel_bound)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.matrix)))


@dataclass(frozen=True)
class FloquetPair:
    """Roots of rho^2 - Delta rho + D = 0, larger modulus first, and their G value."""

    rho_plus: complex
    rho_minus: complex
    log_abs_plus: float
    log_abs_minus: float

    @property
    def g_value(self) -> float:
        return self.log_abs_plus * self.log_abs_minus


def _check_rtol(rtol: float) -> None:
    if not MIN_RTOL <= rtol <= 1e-6:
        raise DomainError(f'rtol must lie in [1e-13, 1e-6], got {rtol}')


def _growth_exponent(wave: WaveProfile, which: Problem, value: complex) -> float:
    # crude bound on ln|M| over one period
    if which == 'Q':
        return wave.T * np.sqrt(abs(value))
    return abs(wave.gamma) * wave.T * abs(value) * (abs(wave.c) + 1.0)


def _coefficients(wave: WaveProfile, which: Problem, values: npt.NDArray[np.complex128]):
    if which == 'Q':
        return values.astype(complex), np.zeros_like(values, dtype=complex)
    gamma = wave.gamma
    return -gamma * values**2, 2.0 * wave.c * gamma * values


def _abel(wave: WaveProfile, which: Problem, value: complex) -> tuple[complex, float]:
    if which == 'Q':
        return 1.0 + 0.0j, 0.0
    exponent = 2.0 * wave.c * wave.gamma * value * wave.T
    return complex(np.exp(exponent)), float(exponent.real)


def _integrate(
    wave: WaveProfile,
    diagonal_shift: npt.NDArray[np.complex128],
    damping: npt.NDArray[np.complex128],
    rtol: float
) -> npt.NDArray[np.complex128]:
    """Integrate Y' = [[0, 1], [a - gamma cos f, d]] Y from Y(0) = I over [0, T] for a batch of (a, d)."""
    n = len(diagonal_shift)
    internal_rtol = max(rtol / (10.0 * np.sqrt(n)), MIN_RTOL)
    gamma = wave.gamma
    shift = diagonal_shift[:, None]
    drag = damping[:, None]
    max_calls = MAX_STEPS * DOP853_STAGES
    calls = 0

    def rhs(z: float, y: npt.NDArray[np.complex128]) -> npt.NDArray[np.complex128]:
        nonlocal calls
        calls += 1
        if calls > max_calls:
            raise ConvergenceError(f'monodromy integration exceeded {MAX_STEPS} steps', estimate=z)
        fundamental = y.reshape(n, 2, 2)
        potential = gamma * float(wave.cos_f(z))
        out = np.empty_like(fundamental)
        out[:, 0, :] = fundamental[:, 1, :]
        out[:, 1, :] = (shift - potential) * fundamental[:, 0, :] + drag * fundamental[:, 1, :]
        return out.ravel()

    y0 = np.tile(np.eye(2, dtype=complex), (n, 1, 1)).ravel()
    solution = integrate.solve_ivp(
        rhs,
        (0.0, wave.T),
        y0,
        method='DOP853',
        rtol=internal_rtol,
        atol=internal_rtol * 1e-3
    )
    if not solution.success:
        raise ConvergenceError(f'monodromy integration failed: {solution.message}', estimate=float(solution.t[-1]))
    log.debug(f'Integrated {n} fundamental matrices with {calls} right-hand side calls')
    return solution.y[:, -1].reshape(n, 2, 2)


def _package(
    wave: WaveProfile,
    which: Problem,
    value: complex,
    matrix: ComplexMat2,
    rtol: float
) -> MonodromyData:
    abel_det, log_abs_abel_det = _abel(wave, which, value)
    m = matrix
    computed = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    scale = max(abs(abel_det), abs(m[0, 0] * m[1, 1]) + abs(m[0, 1] * m[1, 0]))
    residual = float(abs(computed - abel_det)) if np.isfinite(computed) else np.inf
    return MonodromyData(
        matrix=matrix,
        lam=complex(value),
        which=which,
        abel_det=abel_det,
        log_abs_abel_det=log_abs_abel_det,
        abel_residual=residual,
        abel_scale=float(scale),
        abel_bound=float(10.0 * rtol * scale)
    )


def monodromy_batch(
    wave: WaveProfile,
    which: Problem,
    values: Sequence[complex] | npt.ArrayLike,
    rtol: float = 1e-10
) -> list[MonodromyData]:
    """Monodromy matrices of (P) or (Q) for many spectral parameters in one integration.

    Members whose growth would overflow are not integrated and come back with
    a NaN matrix; members failing the Abel check are returned as they are, so
    callers inspect ``accurate`` instead of catching an error.

    Parameters
    ----------
    wave : WaveProfile
        The wave supplying the periodic coefficient
    which : {'P', 'Q'}
        Which first-order system to integrate
    values : array_like
        lambda values for (P), mu values for (Q)
    rtol : float, optional
        Target relative accuracy, by default 1e-10

    Returns
    -------
    list[MonodromyData]
        One entry per input value, in input order
    """
    _check_rtol(rtol)
    values = np.atleast_1d(np.asarray(values, dtype=complex))
    matrices = np.full((len(values), 2, 2), np.nan, dtype=complex)
    safe = np.array([_growth_exponent(wave, which, v) <= MAX_GROWTH_EXPONENT for v in values], dtype=bool)
    if not safe.all():
        log.warning(f'Skipping {int((~safe).sum())} spectral parameters whose monodromy would overflow')
    if safe.any():
        diagonal_shift, damping = _coefficients(wave, which, values[safe])
        matrices[safe] = _integrate(wave, diagonal_shift, damping, rtol)
    return [_package(wave, which, v, m, rtol) for v, m in zip(values, matrices, strict=True)]


def _single(wave: WaveProfile, which: Problem, value: complex, rtol: float) -> MonodromyData:
    if _growth_exponent(wave, which, value) > MAX_GROWTH_EXPONENT:
        raise ConvergenceError(f'monodromy of ({which}) at {value} would overflow')
    (data,) = monodromy_batch(wave, which, [value], rtol)
    if not data.accurate:
        raise AccuracyError(
            f'Abel identity violated for ({which}) at {value}',
            residual=data.abel_residual,
            bound=data.abel_bound
        )
    return data


def monodromy_P(wave: WaveProfile, lam: complex, rtol: float = 1e-10) -> MonodromyData:
    """Monodromy matrix of the linearised problem (P) at ``lam``.

    Raises
    ------
    AccuracyError
        When |det M - e^{2 c gamma lam T}| exceeds the Abel bound
    ConvergenceError
        When the integrator gives up or the growth would overflow
    """
    return _single(wave, 'P', lam, rtol)


def monodromy_Q(wave: WaveProfile, mu: complex, rtol: float = 1e-10) -> MonodromyData:
    """Monodromy matrix of Hill's equation (Q) at ``mu``; Abel determinant 1."""
    return _single(wave, 'Q', mu, rtol)


def monodromy_P_batch(wave: WaveProfile, lambdas: npt.ArrayLike, rtol: float = 1e-10) -> list[MonodromyData]:
    return monodromy_batch(wave, 'P', lambdas, rtol)


def monodromy_Q_batch(wave: WaveProfile, mus: npt.ArrayLike, rtol: float = 1e-10) -> list[MonodromyData]:
    return monodromy_batch(wave, 'Q', mus, rtol)


def floquet_multipliers(m: MonodromyData) -> FloquetPair:
    """Floquet multipliers from the trace and the Abel determinant.

    The larger root comes from the quadratic formula with the sign that avoids
    cancellation and the smaller one as D / rho_plus; its log-modulus is taken
    as ln|D| - ln|rho_plus| so it never underflows.
    """
    trace, det = m.trace, m.abel_det
    root = np.sqrt(complex(trace * trace - 4.0 * det))
    big = trace + root if abs(trace + root) >= abs(trace - root) else trace - root
    rho_plus = 0.5 * big
    rho_minus = det / rho_plus
    log_abs_plus = float(np.log(abs(rho_plus)))
    return FloquetPair(
        rho_plus=complex(rho_plus),
        rho_minus=complex(rho_minus),
        log_abs_plus=log_abs_plus,
        log_abs_minus=m.log_abs_abel_det - log_abs_plus
    )


def hill_mu(wave: WaveProfile, lam: complex) -> complex:
    """Spectral parameter of (Q) matching ``lam``: mu = gamma^2 lam^2."""
    return wave.gamma**2 * complex(lam) ** 2


def g_p(wave: WaveProfile, lam: complex, rtol: float = 1e-10) -> float:
    """G_p(lam) = ln|rho_+| ln|rho_-|; zero exactly on the spectrum of (P)."""
    return floquet_multipliers(monodromy_P(wave, lam, rtol)).g_value


def g_q(wave: WaveProfile, lam: complex, rtol: float = 1e-10) -> float:
    return floquet_multipliers(monodromy_Q(wave, hill_mu(wave, lam), rtol)).g_value


def g_p_batch(wave: WaveProfile, lambdas: npt.ArrayLike, rtol: float = 1e-10) -> FloatArray:
    """G_p over many lambdas; NaN where integration was skipped or failed its Abel check."""
    results = monodromy_P_batch(wave, lambdas, rtol)
    values = np.array(
        [floquet_multipliers(m).g_value if m.finite and m.accurate else np.nan for m in results]
    )
    failed = int(np.isnan(values).sum())
    if failed:
        log.warning(f'{failed} of {len(values)} G_p evaluations failed the Abel check')
    return values


def conjugation_matrix(wave: WaveProfile, lam: complex) -> ComplexMat2:
    """H = [[1, 0], [-c gamma lam, 1]], which maps (P) solutions to (Q) solutions."""
    return np.array([[1.0, 0.0], [-wave.c * wave.gamma * lam, 1.0]], dtype=complex)


def conjugation_residual(wave: WaveProfile, lam: complex, rtol: float = 1e-10) -> float:
    """Max-norm of M_q - e^{-c gamma lam T} H M_p H^{-1}, relative to max(1, |M_q|)."""
    m_p = monodromy_P(wave, lam, rtol).matrix
    m_q = monodromy_Q(wave, hill_mu(wave, lam), rtol).matrix
    h = conjugation_matrix(wave, lam)
    h_inv = np.array([[1.0, 0.0], [-h[1, 0], 1.0]], dtype=complex)
    mapped = np.exp(-wave.c * wave.gamma * lam * wave.T) * (h @ m_p @ h_inv)
    return float(np.max(np.abs(m_q - mapped)) / max(1.0, float(np.max(np.abs(m_q)))))


def multiplier_mapping_residual(wave: WaveProfile, lam: complex, rtol: float = 1e-10) -> float:
    """Distance between {e^{-c gamma lam T} rho} of (P) and the multipliers of (Q) under the best pairing."""
    rho = floquet_multipliers(monodromy_P(wave, lam, rtol))
    eta = floquet_multipliers(monodromy_Q(wave, hill_mu(wave, lam), rtol))
    shift = np.exp(-wave.c * wave.gamma * lam * wave.T)
    mapped = (shift * rho.rho_plus, shift * rho.rho_minus)
    straight = max(abs(mapped[0] - eta.rho_plus), abs(mapped[1] - eta.rho_minus))
    crossed = max(abs(mapped[0] - eta.rho_minus), abs(mapped[1] - eta.rho_plus))
    return float(min(straight, crossed) / max(1.0, abs(eta.rho_plus)))


@dataclass(frozen=True)
class DiscriminantZeroCheck:
    lam: complex
    p_discriminant: float
    q_trace_defect: float


def discriminant_zero_check(wave: WaveProfile, lam: complex, rtol: float = 1e-10) -> DiscriminantZeroCheck:
    """At a double multiplier of (P), the (Q) multipliers must both be +1 or both -1.

    Reports the relative size of Delta_p^2 - 4 D_p and min |Delta_q -+ 2|.
    """
    m_p = monodromy_P(wave, lam, rtol)
    m_q = monodromy_Q(wave, hill_mu(wave, lam), rtol)
    p_scale = max(abs(m_p.trace) ** 2, 4.0 * abs(m_p.abel_det))
    trace_q = m_q.trace
    return DiscriminantZeroCheck(
        lam=complex(lam),
        p_discriminant=float(abs(m_p.discriminant) / p_scale),
        q_trace_defect=float(min(abs(trace_q - 2.0), abs(trace_q + 2.0)))
    )


def normalized_p_trace(wave: WaveProfile, beta: float, rtol: float = 1e-10) -> float:
    """Re(e^{-c gamma i beta T} Delta_p(i beta)); on the imaginary axis this equals Delta_q(-gamma^2 beta^2)."""
    lam = 1j * beta
    trace = monodromy_P(wave, lam, rtol).trace
    return float((np.exp(-wave.c * wave.gamma * lam * wave.T) * trace).real)


def locate_p_double_multiplier(
    wave: WaveProfile,
    beta_lo: float,
    beta_hi: float,
    rtol: float = 1e-10,
    xtol: float = 1e-13
) -> DiscriminantZeroCheck:
    """Locate i beta in ``[beta_lo, beta_hi]`` where (P) has a double multiplier and check (Q) there.

    Only (P) drives the search: Delta_p^2 - 4 D_p vanishes exactly where the
    normalized trace crosses +2 or -2.

    Raises
    ------
    ConvergenceError
        When the normalized trace crosses neither +2 nor -2 on the interval
    """
    s_lo = normalized_p_trace(wave, beta_lo, rtol)
    s_hi = normalized_p_trace(wave, beta_hi, rtol)
    # the end deeper in the gap fixes which of +-2 is crossed
    target = 2.0 * float(np.sign(s_lo if abs(s_lo) > abs(s_hi) else s_hi))
    if not (s_lo - target) * (s_hi - target) < 0.0:
        raise ConvergenceError(
            f'normalized (P) trace does not cross +-2 on beta in [{beta_lo}, {beta_hi}] ({s_lo:.6g}, {s_hi:.6g})',
            estimate=0.5 * (beta_lo + beta_hi)
        )
    try:
        beta = optimize.brentq(lambda b: normalized_p_trace(wave, b, rtol) - target, beta_lo, beta_hi, xtol=xtol)
    except ValueError as error:
        raise ConvergenceError(f'double multiplier search on [{beta_lo}, {beta_hi}] failed: {error}') from error
    return discriminant_zero_check(wave, 1j * float(beta), rtol)
