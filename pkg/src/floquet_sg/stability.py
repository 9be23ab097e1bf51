from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import contourpy
import dagster as dg
import numpy as np
import numpy.typing as npt
from scipy import optimize, spatial
from scipy.stats import qmc

from .config import Tolerances
from .errors import AccuracyError, ConvergenceError, DomainError, SearchError, StructureError
from .hill import BandStructure, band_structure, delta_q
from .monodromy import (
    MIN_RTOL,
    MonodromyData,
    floquet_multipliers,
    g_p,
    g_p_batch,
    monodromy_P,
    monodromy_Q_batch,
)
from .roots import bisect_sign_change
from .special_functions import FloatArray
from .wave import WaveClass, WaveProfile

log = dg.get_dagster_logger(__name__)

UNIMODULAR_TOL = 1e-6
DOUBLE_ROOT_TOL = 1e-8
REFINEMENT_FACTOR = 10.0
BAND_TOL = 1e-9
MAX_FAILED_FRACTION = 0.01
AUDIT_BOX = (0.05, 2.0, 0.0, 2.0)

Box = tuple[float, float, float, float]


class Verdict(str, Enum):
    STABLE = 'stable'
    UNSTABLE = 'unstable'


@dataclass(frozen=True)
class InstabilityCertificate:
    """A lambda with Re lambda > 0 on the zero set of G_p, found by bisection along a segment."""

    lambda_star: complex
    gp_residual: float
    unimodular_multiplier: complex
    path: tuple[complex, complex]
    iterations: int
    bracket_width: float
    gp_at_ends: tuple[float, float]
    refinement_change: float = 0.0

    def to_dict(self) -> dict[str, object]:
        return {
            'lambda_star': self.lambda_star,
            'gp_residual': self.gp_residual,
            'unimodular_multiplier': self.unimodular_multiplier,
            'path': list(self.path),
            'iterations': self.iterations,
            'bracket_width': self.bracket_width,
            'gp_at_ends': list(self.gp_at_ends),
            'refinement_change': self.refinement_change,
        }


@dataclass(frozen=True)
class SubluminalAudit:
    samples: npt.NDArray[np.complex128]
    gp_values: FloatArray

    @property
    def max_gp(self) -> float:
        return float(np.max(self.gp_values))

    def to_dict(self) -> dict[str, object]:
        return {'n_samples': len(self.samples), 'max_gp': self.max_gp, 'box': list(AUDIT_BOX)}


@dataclass(frozen=True)
class StabilityVerdict:
    kind: Verdict
    wave_class: WaveClass
    certificate: InstabilityCertificate | None = None
    audit: SubluminalAudit | None = None

    def to_dict(self) -> dict[str, object]:
        document: dict[str, object] = {'verdict': self.kind.value, 'class': self.wave_class.label}
        if self.certificate is not None:
            document['certificate'] = self.certificate.to_dict()
        if self.audit is not None:
            document['audit'] = self.audit.to_dict()
        return document


@dataclass(frozen=True)
class ImagAxisSpectrum:
    """Intervals of beta >= 0 with i beta in the spectrum, i.e. |Delta_q(-gamma^2 beta^2)| <= 2."""

    beta_intervals: tuple[tuple[float, float], ...]
    beta_max: float
    n: int

    def contains(self, beta: float) -> bool:
        beta = abs(beta)
        return any(lo <= beta <= hi for lo, hi in self.beta_intervals)

    @property
    def gaps(self) -> tuple[tuple[float, float], ...]:
        return tuple(
            (a[1], b[0]) for a, b in zip(self.beta_intervals[:-1], self.beta_intervals[1:], strict=True)
        )


@dataclass(frozen=True, eq=False)
class SpectrumContour:
    """Zero level set of G_p over a rectangular grid of lambda.

    ``gp_samples`` has shape ``(ny, nx)``, rows following ``im_axis``; NaN
    marks grid points whose integration failed.
    """

    polylines: tuple[npt.NDArray[np.complex128], ...]
    re_axis: FloatArray
    im_axis: FloatArray
    gp_samples: FloatArray
    box: Box
    failed_points: int = 0
    cell: tuple[float, float] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'cell', (
            float(self.re_axis[1] - self.re_axis[0]),
            float(self.im_axis[1] - self.im_axis[0]),
        ))

    @property
    def nx(self) -> int:
        return len(self.re_axis)

    @property
    def ny(self) -> int:
        return len(self.im_axis)

    def all_points(self) -> npt.NDArray[np.complex128]:
        if not self.polylines:
            return np.empty(0, dtype=complex)
        return np.concatenate(self.polylines)

    def points_within(self, radius: float) -> npt.NDArray[np.complex128]:
        points = self.all_points()
        return points[np.abs(points) < radius]

    def off_axis_points(self, cells: float = 2.0) -> npt.NDArray[np.complex128]:
        """Contour points farther than ``cells`` grid steps from both axes."""
        points = self.all_points()
        dx, dy = self.cell
        keep = (np.abs(points.real) > cells * dx) & (np.abs(points.imag) > cells * dy)
        return points[keep]


def _multipliers_near(data: MonodromyData) -> tuple[complex, complex]:
    """Multiplier pair, collapsed to Delta/2 when the roots are numerically double."""
    pair = floquet_multipliers(data)
    if abs(data.discriminant) <= DOUBLE_ROOT_TOL * abs(data.abel_det):
        middle = 0.5 * data.trace
        return middle, middle
    return pair.rho_plus, pair.rho_minus


def count_unimodular(data: MonodromyData, tol: float = UNIMODULAR_TOL) -> int:
    """How many of the two multipliers lie within ``tol`` of the unit circle."""
    return sum(abs(abs(rho) - 1.0) <= tol for rho in _multipliers_near(data))


def _require_unimodular(data: MonodromyData, single: bool = False) -> complex:
    """Multiplier closest to the unit circle; with ``single`` the other one must lie off it."""
    candidates = _multipliers_near(data)
    best = min(candidates, key=lambda rho: abs(abs(rho) - 1.0))
    if abs(abs(best) - 1.0) > UNIMODULAR_TOL:
        raise AccuracyError(
            f'no unimodular multiplier at lambda={data.lam}',
            residual=abs(abs(best) - 1.0),
            bound=UNIMODULAR_TOL
        )
    if single and count_unimodular(data) > 1:
        raise StructureError(f'both multipliers at lambda={data.lam} are unimodular off the imaginary axis')
    return best


def _refinement_change(wave: WaveProfile, data: MonodromyData, value: float, tolerances: Tolerances) -> float:
    """Change of G_p at ``data.lam`` under a tenfold finer integration, bounded against the residual.

    The residual is floored by ``gp_tol`` and by the integration error scale
    ``ode_rtol * max(1, |Delta_p|^2, 4 |D_p|)``.
    """
    finer = max(tolerances.ode_rtol / 10.0, MIN_RTOL)
    change = abs(g_p(wave, data.lam, finer) - value)
    scale = max(1.0, abs(data.trace)**2, 4.0 * abs(data.abel_det))
    bound = REFINEMENT_FACTOR * max(abs(value), tolerances.gp_tol, tolerances.ode_rtol * scale)
    if change > bound:
        raise AccuracyError(f'G_p at lambda={data.lam} moves under a finer integration', residual=change, bound=bound)
    return change


def _double_until(wave: WaveProfile, start: float, positive: bool, tolerances: Tolerances) -> tuple[float, float]:
    """Double a real lambda until G_p has the requested sign."""
    lam, value = start, float('nan')
    last: dict[str, object] = {'start': start, 'wanted_positive': positive}
    while lam <= tolerances.doubling_cap:
        try:
            value = g_p(wave, lam, tolerances.ode_rtol)
        except ConvergenceError as error:
            raise SearchError(
                f'G_p could not be evaluated at lambda={lam} while doubling: {error}',
                last | {'failed_lambda': lam}
            ) from error
        last |= {'last_lambda': lam, 'last_gp': value}
        if (value > 0.0) == positive and value != 0.0:
            return lam, value
        lam *= 2.0
    raise SearchError(f'G_p kept the wrong sign up to lambda={tolerances.doubling_cap}', last)


def find_unstable_eigenvalue(
    wave: WaveProfile,
    tolerances: Tolerances | None = None,
    bands: BandStructure | None = None
) -> InstabilityCertificate:
    """Certify instability by locating lambda* with Re lambda* > 0 and G_p(lambda*) = 0.

    G_p is negative at i beta* (a gap point of Hill's equation) and positive
    at alpha* for librational waves, or at a large enough real lambda for
    superluminal rotational waves; bisection along the straight segment
    between them pins down a zero.

    Parameters
    ----------
    wave : WaveProfile
        A librational or superluminal rotational wave
    tolerances : Tolerances | None, optional
        Tolerances, by default ``Tolerances()``
    bands : BandStructure | None, optional
        Precomputed band structure of the wave

    Returns
    -------
    InstabilityCertificate
        The located eigenvalue with its residuals

    Raises
    ------
    SearchError
        For subluminal rotational waves, or when a sign precondition fails
    AccuracyError
        When no multiplier at lambda* is unimodular, or G_p there moves by more
        than ten residuals under a tenfold finer integration
    StructureError
        When both multipliers at an off-axis lambda* of a travelling wave are unimodular
    """
    tolerances = tolerances or Tolerances()
    rtol = tolerances.ode_rtol
    if wave.wave_class.subluminal and not wave.wave_class.librational:
        raise SearchError('subluminal rotational waves have no unstable eigenvalue', {'class': wave.wave_class.label})
    bands = bands or band_structure(wave, rtol=rtol, root_tol=tolerances.root_tol)

    if wave.c == 0.0:
        alpha = float(bands.alpha_star)  # pyright: ignore[reportArgumentType]
        data = monodromy_P(wave, alpha, rtol)
        pair = floquet_multipliers(data)
        log.info(f'Standing wave: lambda* = alpha* = {alpha:.12g}')
        return InstabilityCertificate(
            lambda_star=complex(alpha),
            gp_residual=abs(pair.g_value),
            unimodular_multiplier=_require_unimodular(data),
            path=(complex(alpha), complex(alpha)),
            iterations=0,
            bracket_width=0.0,
            gp_at_ends=(pair.g_value, pair.g_value),
            refinement_change=_refinement_change(wave, data, pair.g_value, tolerances)
        )

    lambda0 = 1j * bands.beta_star
    g0 = g_p(wave, lambda0, rtol)
    if not g0 < 0.0:
        raise SearchError(f'G_p(i beta*) = {g0} is not negative', {'lambda0': lambda0, 'gp': g0})
    if wave.wave_class.librational:
        lambda1 = float(bands.alpha_star)  # pyright: ignore[reportArgumentType]
        g1 = g_p(wave, lambda1, rtol)
        if not g1 > 0.0:
            raise SearchError(f'G_p(alpha*) = {g1} is not positive', {'lambda1': lambda1, 'gp': g1})
    else:
        lambda1, g1 = _double_until(wave, 1.0, positive=True, tolerances=tolerances)

    def along_path(t: float) -> float:
        return g_p(wave, lambda0 * (1.0 - t) + lambda1 * t, rtol)

    log.info(f'Starting certificate bisection from {lambda0} to {lambda1}')
    result = bisect_sign_change(
        along_path, 0.0, 1.0, xtol=tolerances.bracket_tol, ftol=tolerances.gp_tol, fa=g0, fb=g1
    )
    lambda_star = complex(lambda0 * (1.0 - result.root) + lambda1 * result.root)
    data = monodromy_P(wave, lambda_star, rtol)
    pair = floquet_multipliers(data)
    certificate = InstabilityCertificate(
        lambda_star=lambda_star,
        gp_residual=abs(pair.g_value),
        unimodular_multiplier=_require_unimodular(data, single=lambda_star.real != 0.0),
        path=(complex(lambda0), complex(lambda1)),
        iterations=result.iterations,
        bracket_width=result.bracket_width,
        gp_at_ends=(g0, g1),
        refinement_change=_refinement_change(wave, data, pair.g_value, tolerances)
    )
    log.info(f'Completed certificate: lambda* = {lambda_star} after {result.iterations} halvings')
    return certificate


def real_periodic_eigenvalue(
    wave: WaveProfile,
    tolerances: Tolerances | None = None,
    bands: BandStructure | None = None
) -> tuple[float, complex]:
    """Positive real periodic eigenvalue of a subluminal librational wave.

    Returns
    -------
    tuple[float, complex]
        lambda* > 0 and the multiplier closest to 1

    Raises
    ------
    SearchError
        For any other wave class, or when the sign preconditions fail
    StructureError
        When the multiplier at lambda* is not 1 within 1e-5
    """
    tolerances = tolerances or Tolerances()
    rtol = tolerances.ode_rtol
    if not (wave.wave_class.subluminal and wave.wave_class.librational):
        raise SearchError('a real periodic eigenvalue is only sought for subluminal librational waves',
                          {'class': wave.wave_class.label})
    bands = bands or band_structure(wave, rtol=rtol, root_tol=tolerances.root_tol)
    alpha = float(bands.alpha_star)  # pyright: ignore[reportArgumentType]

    if wave.c == 0.0:
        lam, iterations = alpha, 0
    else:
        g_alpha = g_p(wave, alpha, rtol)
        if not g_alpha > 0.0:
            raise SearchError(f'G_p(alpha*) = {g_alpha} is not positive', {'alpha_star': alpha})
        upper, g_upper = _double_until(wave, 2.0 * alpha, positive=False, tolerances=tolerances)
        result = bisect_sign_change(
            lambda x: g_p(wave, x, rtol), alpha, upper,
            xtol=tolerances.bracket_tol, ftol=tolerances.gp_tol, fa=g_alpha, fb=g_upper
        )
        lam, iterations = result.root, result.iterations

    rho = min(_multipliers_near(monodromy_P(wave, lam, rtol)), key=lambda r: abs(r - 1.0))
    if abs(rho - 1.0) > 1e-5:
        raise StructureError(f'multiplier at lambda*={lam} is {rho}, not 1')
    log.info(f'Real periodic eigenvalue lambda* = {lam:.12g} found in {iterations} halvings')
    return float(lam), complex(rho)


def imaginary_axis_spectrum(
    wave: WaveProfile,
    beta_max: float = 3.0,
    n: int = 400,
    rtol: float = 1e-10,
    band_tol: float = BAND_TOL
) -> ImagAxisSpectrum:
    """Spectrum on the imaginary axis from the Hill discriminant at mu = -gamma^2 beta^2.

    Samples with |Delta_q| <= 2 + ``band_tol`` count as in band, so closed
    gaps where Delta_q only touches +-2 do not split a band; beta = 0 is
    always in band.
    """
    if not beta_max > 0 or n < 2:
        raise StructureError(f'need beta_max > 0 and n >= 2, got {beta_max}, {n}')
    gamma2 = wave.gamma**2
    betas = np.linspace(0.0, beta_max, n)
    results = monodromy_Q_batch(wave, -gamma2 * betas**2, rtol)
    excess = np.array([abs(m.trace) - 2.0 - band_tol if m.finite else np.nan for m in results])
    excess[0] = min(excess[0], 0.0)
    if np.isnan(excess).any():
        raise AccuracyError('imaginary-axis scan hit failed integrations', residual=np.nan, bound=0.0)

    def excess_at(beta: float) -> float:
        return abs(delta_q(wave, -gamma2 * beta * beta, rtol)) - 2.0 - band_tol

    intervals: list[tuple[float, float]] = []
    start: float | None = 0.0
    for i in range(1, n):
        inside_before, inside_now = excess[i - 1] <= 0.0, excess[i] <= 0.0
        if inside_before == inside_now:
            continue
        edge = optimize.root_scalar(excess_at, bracket=(betas[i - 1], betas[i]), method='brentq', xtol=1e-13).root
        if inside_before:
            intervals.append((start, float(edge)))  # pyright: ignore[reportArgumentType]
            start = None
        else:
            start = float(edge)
    if start is not None:
        intervals.append((start, float(beta_max)))
    log.info(f'Imaginary axis spectrum up to beta={beta_max}: {len(intervals)} bands')
    return ImagAxisSpectrum(beta_intervals=tuple(intervals), beta_max=float(beta_max), n=n)


def _g_p_row(wave: WaveProfile, lambdas: npt.NDArray[np.complex128], rtol: float) -> FloatArray:
    return g_p_batch(wave, lambdas, rtol)


def trace_zero_level(re_axis: FloatArray, im_axis: FloatArray, gp_samples: FloatArray, box: Box) -> SpectrumContour:
    """Marching squares on a sampled G_p grid of shape ``(len(im_axis), len(re_axis))``; NaN cells are skipped."""
    generator = contourpy.contour_generator(
        re_axis, im_axis, np.ma.masked_invalid(gp_samples), line_type=contourpy.LineType.Separate
    )
    polylines = tuple(
        np.asarray(line[:, 0] + 1j * line[:, 1], dtype=complex)
        for line in generator.lines(0.0)  # pyright: ignore[reportGeneralTypeIssues]
        if len(line) > 0
    )
    return SpectrumContour(
        polylines=polylines,
        re_axis=re_axis,
        im_axis=im_axis,
        gp_samples=gp_samples,
        box=box,
        failed_points=int(np.isnan(gp_samples).sum())
    )


def spectrum_contours(
    wave: WaveProfile,
    box: Box = (-1.0, 1.0, -1.5, 1.5),
    nx: int = 200,
    ny: int = 200,
    rtol: float = 1e-10,
    workers: int = 1
) -> SpectrumContour:
    """Trace the zero level curves of G_p over a rectangle of the lambda plane.

    Each grid row is one batched integration; rows are spread over
    ``workers`` processes. Failed points are masked so marching squares skips
    their cells.

    Raises
    ------
    AccuracyError
        When more than 1% of the grid points fail
    """
    if not (box[0] < box[1] and box[2] < box[3]):
        raise DomainError(f'empty spectral box {box}')
    if nx < 16 or ny < 16:
        raise DomainError(f'grid must be at least 16 x 16, got {nx} x {ny}')
    re_axis = np.linspace(box[0], box[1], nx)
    im_axis = np.linspace(box[2], box[3], ny)
    rows = [re_axis + 1j * y for y in im_axis]
    log.info(f'Starting G_p grid {nx} x {ny} on {workers} worker(s)')
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_g_p_row, [wave] * ny, rows, [rtol] * ny))
    else:
        values = [_g_p_row(wave, row, rtol) for row in rows]
    gp_samples = np.vstack(values)

    failed = int(np.isnan(gp_samples).sum())
    if failed > MAX_FAILED_FRACTION * gp_samples.size:
        raise AccuracyError(
            f'{failed} of {gp_samples.size} grid points failed',
            residual=failed / gp_samples.size,
            bound=MAX_FAILED_FRACTION
        )
    contour = trace_zero_level(re_axis, im_axis, gp_samples, box)
    log.info(f'Completed G_p grid: {len(contour.polylines)} polylines, {failed} failed points')
    return contour


def contour_symmetry_defect(contour: SpectrumContour) -> float:
    """Largest distance, in grid cells, from a reflected contour point to the contour."""
    points = contour.all_points()
    if len(points) == 0:
        return 0.0
    dx, dy = contour.cell
    scaled = np.column_stack([points.real / dx, points.imag / dy])
    tree = spatial.cKDTree(scaled)
    worst = 0.0
    for reflected in (np.conj(points), -points, -np.conj(points)):
        distances, _ = tree.query(np.column_stack([reflected.real / dx, reflected.imag / dy]))
        worst = max(worst, float(np.max(distances)))
    return worst


def stability_audit_subluminal_rotational(
    wave: WaveProfile,
    n_samples: int = 200,
    rtol: float = 1e-10,
    seed: int = 0
) -> SubluminalAudit:
    """Sample G_p in the open right half plane and require it to be negative everywhere.

    Raises
    ------
    SearchError
        For waves that are not subluminal rotational
    StructureError
        When a sample has G_p >= -1e-12 or could not be evaluated
    """
    if not (wave.wave_class.subluminal and not wave.wave_class.librational):
        raise SearchError('the negativity audit applies to subluminal rotational waves only',
                          {'class': wave.wave_class.label})
    unit = qmc.Halton(d=2, seed=seed).random(n_samples)
    scaled = qmc.scale(unit, [AUDIT_BOX[0], AUDIT_BOX[2]], [AUDIT_BOX[1], AUDIT_BOX[3]])
    samples = scaled[:, 0] + 1j * scaled[:, 1]
    values = g_p_batch(wave, samples, rtol)
    bad = ~(values < -1e-12)
    if bad.any():
        worst = complex(samples[np.argmax(np.where(np.isnan(values), np.inf, values))])
        raise StructureError(f'{int(bad.sum())} audit samples have G_p >= -1e-12, worst at lambda={worst}')
    log.info(f'Audit passed: {n_samples} samples, max G_p = {values.max():.3e}')
    return SubluminalAudit(samples=samples, gp_values=values)


def classify_stability(
    wave: WaveProfile,
    tolerances: Tolerances | None = None,
    bands: BandStructure | None = None
) -> StabilityVerdict:
    """Stable for subluminal rotational waves (with audit), otherwise unstable with a certificate."""
    tolerances = tolerances or Tolerances()
    if wave.wave_class.subluminal and not wave.wave_class.librational:
        audit = stability_audit_subluminal_rotational(wave, rtol=tolerances.ode_rtol)
        return StabilityVerdict(Verdict.STABLE, wave.wave_class, audit=audit)
    certificate = find_unstable_eigenvalue(wave, tolerances, bands)
    return StabilityVerdict(Verdict.UNSTABLE, wave.wave_class, certificate=certificate)
