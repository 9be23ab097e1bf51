from dataclasses import dataclass
from enum import Enum

import dagster as dg
import numpy as np
import numpy.typing as npt
from scipy import integrate

from .errors import ConvergenceError, DomainError
from .special_functions import (
    FloatArray,
    QuadratureSpec,
    adaptive_quadrature,
    complete_elliptic_K,
    jacobi_ellipj,
)

log = dg.get_dagster_logger(__name__)

SEPARATRIX_MARGIN = 1e-9


class SpeedRegime(str, Enum):
    SUBLUMINAL = 'subluminal'
    SUPERLUMINAL = 'superluminal'


class MotionType(str, Enum):
    ROTATIONAL = 'rotational'
    LIBRATIONAL = 'librational'


@dataclass(frozen=True)
class WaveParams:
    """Wave speed ``c`` and total energy ``E`` of a traveling wave."""

    c: float
    E: float

    @property
    def gamma(self) -> float:
        return 1.0 / (self.c * self.c - 1.0)


@dataclass(frozen=True)
class WaveClass:
    speed_regime: SpeedRegime
    motion_type: MotionType

    @property
    def label(self) -> str:
        return f'{self.speed_regime.value}-{self.motion_type.value}'

    @property
    def subluminal(self) -> bool:
        return self.speed_regime is SpeedRegime.SUBLUMINAL

    @property
    def librational(self) -> bool:
        return self.motion_type is MotionType.LIBRATIONAL


@dataclass(frozen=True)
class WaveProfile:
    """A periodic traveling wave normalised by sin f(0) = 0, f'(0) > 0.

    ``cos f(z)`` is even and is expressed through ``sn(scale * z, k)``;
    ``T`` is the fundamental period of ``f`` modulo 2 pi, which for
    librational waves is twice ``min_period``, the period of ``cos f``.
    """

    params: WaveParams
    wave_class: WaveClass
    T: float
    gamma: float
    f0: float
    v0: float
    k: float
    scale: float

    @property
    def c(self) -> float:
        return self.params.c

    @property
    def E(self) -> float:
        return self.params.E

    @property
    def min_period(self) -> float:
        return 0.5 * self.T if self.wave_class.librational else self.T

    def cos_f(self, z: npt.ArrayLike) -> FloatArray:
        cos_f, _, _ = profile(self, z)
        return cos_f


def classify(c: float, E: float) -> WaveClass:
    """Sort ``(c, E)`` into one of the four periodic wave families.

    Parameters
    ----------
    c : float
        Wave speed
    E : float
        Total energy of the pendulum orbit

    Returns
    -------
    WaveClass
        Speed regime and motion type

    Raises
    ------
    DomainError
        For luminal speeds, separatrix energies, or energies without a real
        periodic orbit
    """
    if not (np.isfinite(c) and np.isfinite(E)):
        raise DomainError('wave parameters must be finite')
    if abs(abs(c) - 1.0) < SEPARATRIX_MARGIN:
        raise DomainError('luminal speed excluded')
    if abs(E) < SEPARATRIX_MARGIN or abs(E - 2.0) < SEPARATRIX_MARGIN:
        raise DomainError('separatrix')

    speed = SpeedRegime.SUBLUMINAL if c * c < 1.0 else SpeedRegime.SUPERLUMINAL
    if 0.0 < E < 2.0:
        return WaveClass(speed, MotionType.LIBRATIONAL)
    if speed is SpeedRegime.SUBLUMINAL and E < 0.0:
        return WaveClass(speed, MotionType.ROTATIONAL)
    if speed is SpeedRegime.SUPERLUMINAL and E > 2.0:
        return WaveClass(speed, MotionType.ROTATIONAL)
    raise DomainError('no real wave')


def _lame_modulus_and_scale(params: WaveParams, wave_class: WaveClass) -> tuple[float, float]:
    E, gamma = params.E, params.gamma
    match (wave_class.subluminal, wave_class.librational):
        case (True, False):
            return np.sqrt(2.0 / (2.0 - E)), np.sqrt(0.5 * (-gamma) * (2.0 - E))
        case (False, False):
            return np.sqrt(2.0 / E), np.sqrt(0.5 * gamma * E)
        case (True, True):
            return np.sqrt(0.5 * (2.0 - E)), np.sqrt(-gamma)
        case _:
            return np.sqrt(0.5 * E), np.sqrt(gamma)


def _libration_integral(E: float, spec: QuadratureSpec) -> float:
    # P(E) after w = cos f and w = E(u - 1) + 1
    def integrand(u: float) -> float:
        return 1.0 / np.sqrt(u * (1.0 - u) * (2.0 - E * (1.0 - u)))

    return 2.0 * adaptive_quadrature(integrand, 0.0, 1.0, spec)


def _libration_integral_derivative(E: float, spec: QuadratureSpec) -> float:
    def integrand(u: float) -> float:
        return np.sqrt(1.0 - u) / (np.sqrt(u) * (2.0 - E * (1.0 - u)) ** 1.5)

    return adaptive_quadrature(integrand, 0.0, 1.0, spec)


def fundamental_period(params: WaveParams, spec: QuadratureSpec | None = None) -> float:
    """Fundamental period T of f modulo 2 pi, by quadrature of the energy relation.

    Parameters
    ----------
    params : WaveParams
        Speed and energy
    spec : QuadratureSpec | None, optional
        Quadrature tolerances

    Returns
    -------
    float
        The period T > 0
    """
    wave_class = classify(params.c, params.E)
    c2, E = params.c**2, params.E
    if wave_class.librational:
        if wave_class.subluminal:
            return np.sqrt(2.0 * (1.0 - c2)) * _libration_integral(2.0 - E, spec or QuadratureSpec())
        return np.sqrt(2.0 * (c2 - 1.0)) * _libration_integral(E, spec or QuadratureSpec())

    two_gamma = 2.0 * abs(params.gamma)

    def dz_df(f: float) -> float:
        return 1.0 / np.sqrt(two_gamma * abs(E - 1.0 + np.cos(f)))

    return adaptive_quadrature(dz_df, 0.0, 2.0 * np.pi, spec)


def elliptic_period(params: WaveParams) -> float:
    """Closed-form period, 2K/scale for rotational and 4K/scale for librational waves."""
    wave_class = classify(params.c, params.E)
    k, scale = _lame_modulus_and_scale(params, wave_class)
    quarters = 4.0 if wave_class.librational else 2.0
    return quarters * complete_elliptic_K(k) / scale


def period_energy_derivative(params: WaveParams, spec: QuadratureSpec | None = None) -> float:
    """Energy derivative T_E of the fundamental period.

    Librational waves use the derivative of the regularised period integral;
    rotational waves a once Richardson-extrapolated central difference.
    """
    wave_class = classify(params.c, params.E)
    c2, E = params.c**2, params.E
    if wave_class.librational:
        if wave_class.subluminal:
            return -np.sqrt(2.0 * (1.0 - c2)) * _libration_integral_derivative(
                2.0 - E, spec or QuadratureSpec()
            )
        return np.sqrt(2.0 * (c2 - 1.0)) * _libration_integral_derivative(E, spec or QuadratureSpec())

    step = max(1e-6, 1e-6 * abs(E))

    def central(h: float) -> float:
        upper = fundamental_period(WaveParams(params.c, E + h), spec)
        lower = fundamental_period(WaveParams(params.c, E - h), spec)
        return (upper - lower) / (2.0 * h)

    return (4.0 * central(0.5 * step) - central(step)) / 3.0


def profile(
    wave: WaveProfile,
    z: npt.ArrayLike
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Evaluate ``cos f(z)``, ``sin f(z)`` and ``f'(z)``.

    Parameters
    ----------
    wave : WaveProfile
        The wave
    z : array_like
        Co-moving coordinate(s)

    Returns
    -------
    tuple[FloatArray, FloatArray, FloatArray]
        ``(cos_f, sin_f, f_prime)`` with the shape of ``z``
    """
    sn, cn, dn = jacobi_ellipj(wave.scale * np.asarray(z, dtype=float), wave.k)
    E, k, scale = wave.E, wave.k, wave.scale
    match (wave.wave_class.subluminal, wave.wave_class.librational):
        case (False, False):
            return 1.0 - 2.0 * sn * sn, 2.0 * sn * cn, 2.0 * scale * dn
        case (True, False):
            return -1.0 + 2.0 * sn * sn, -2.0 * sn * cn, 2.0 * scale * dn
        case (False, True):
            return 1.0 - E * sn * sn, 2.0 * k * sn * dn, 2.0 * k * scale * cn
        case _:
            return -1.0 + (2.0 - E) * sn * sn, -2.0 * k * sn * dn, 2.0 * k * scale * cn


def energy_residual(wave: WaveProfile, z: npt.ArrayLike) -> FloatArray:
    """Pointwise defect of 1/2 (c^2 - 1) f'^2 + 1 - cos f = E."""
    cos_f, _, f_prime = profile(wave, z)
    return 0.5 * (wave.c**2 - 1.0) * f_prime**2 + 1.0 - cos_f - wave.E


def wave_profile(c: float, E: float, spec: QuadratureSpec | None = None) -> WaveProfile:
    """Build the normalised wave for ``(c, E)``.

    Superluminal waves start at f(0) = 0 and subluminal ones at f(0) = pi, so
    every sn substitution holds with zero phase shift.
    """
    wave_class = classify(c, E)
    params = WaveParams(float(c), float(E))
    k, scale = _lame_modulus_and_scale(params, wave_class)
    T = fundamental_period(params, spec)
    v0 = 2.0 * scale * (k if wave_class.librational else 1.0)
    wave = WaveProfile(
        params=params,
        wave_class=wave_class,
        T=float(T),
        gamma=params.gamma,
        f0=np.pi if wave_class.subluminal else 0.0,
        v0=float(v0),
        k=float(k),
        scale=float(scale),
    )
    log.debug(f"Built {wave_class.label} wave c={c} E={E}: T={T:.12g}, k={k:.6g}")
    return wave


def pendulum_orbit(wave: WaveProfile, z_max: float, rtol: float = 1e-12):
    """Integrate (c^2 - 1) f'' + sin f = 0 from (f0, v0) with dense output.

    Returns
    -------
    scipy.integrate.OdeResult
        Solution on ``[0, z_max]``; ``sol(z)`` gives ``(f, f')``
    """
    gamma = wave.gamma

    def rhs(_z: float, y: FloatArray) -> list[float]:
        return [y[1], -gamma * np.sin(y[0])]

    solution = integrate.solve_ivp(
        rhs,
        (0.0, z_max),
        [wave.f0, wave.v0],
        method='DOP853',
        rtol=rtol,
        atol=rtol,
        dense_output=True
    )
    if not solution.success:
        raise ConvergenceError(f'pendulum orbit integration failed: {solution.message}')
    return solution


def rotation_time(wave: WaveProfile, rtol: float = 1e-12) -> float:
    """Distance in z over which a rotational wave advances f by 2 pi."""
    if wave.wave_class.librational:
        raise DomainError('librational waves never advance by 2 pi')
    gamma, target = wave.gamma, wave.f0 + 2.0 * np.pi

    def rhs(_z: float, y: FloatArray) -> list[float]:
        return [y[1], -gamma * np.sin(y[0])]

    def advanced(_z: float, y: FloatArray) -> float:
        return y[0] - target

    advanced.terminal = True  # pyright: ignore[reportFunctionMemberAccess]
    solution = integrate.solve_ivp(
        rhs,
        (0.0, 4.0 * wave.T),
        [wave.f0, wave.v0],
        method='DOP853',
        rtol=rtol,
        atol=rtol,
        events=advanced
    )
    if solution.status != 1:
        raise ConvergenceError('orbit did not complete a rotation')
    return float(solution.t_events[0][0])
