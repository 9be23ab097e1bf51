import warnings
from dataclasses import dataclass

import dagster as dg
import numpy as np
from scipy import optimize

from .errors import AccuracyError, ConvergenceError, StructureError
from .monodromy import monodromy_Q, monodromy_Q_batch
from .roots import scan_sign_changes
from .special_functions import FloatArray, jacobi_ellipj
from .wave import WaveProfile, period_energy_derivative, profile

log = dg.get_dagster_logger(__name__)

MIN_SCAN_POINTS = 400
EDGE_TOL = 1e-11
GAP_MARGIN = 1e-6
SPURIOUS_ROOT_SPACING = 1e-4
SLOPE_STEP = 1e-5
EDGE_VALUE_TOL = 1e-8
LAME_OFFSET_FRACTION = 0.1
JUMP_WINDOW = 9
MAX_JUMP_RATIO = 10.0


@dataclass(frozen=True)
class BandStructure:
    """Bands and the single open gap of Hill's equation below the top band edge.

    ``edges`` holds every located root of Delta_q -+ 2 in the scan window in
    increasing order; ``lame_deltas`` the distance from each closed-form Lame
    edge to the nearest located root; ``continuity_ratio`` the largest
    neighbouring-sample jump of the uniform scan over its local median.
    """

    mu0_0: float
    mu1_0: float | None
    gap: tuple[float, float]
    mu_star: float
    beta_star: float
    alpha_star: float | None
    edges: tuple[float, ...]
    window: tuple[float, float]
    period: float
    half_period: float
    lame_edges: tuple[float, float, float]
    lame_deltas: tuple[float, float, float]
    delta_slope_at_zero: float | None = None
    continuity_ratio: float = 0.0


@dataclass(frozen=True)
class LameParams:
    k: float
    h: float
    nu: float
    scale: float
    case_tag: str


@dataclass(frozen=True)
class MqZeroReport:
    """Comparison of M_q(0) with [[1, -v0^2 (c^2 - 1) T_E], [0, 1]]."""

    residual: float
    matrix: np.ndarray
    expected_m12: float
    delta_slope: float
    energy_factor: float

    @property
    def slope_sign_consistent(self) -> bool:
        return bool(np.sign(self.delta_slope) == -np.sign(self.energy_factor))


def delta_q(wave: WaveProfile, mu: float, rtol: float = 1e-10) -> float:
    """Hill discriminant Delta_q(mu), the trace of M_q for real ``mu``."""
    trace = monodromy_Q(wave, mu, rtol).trace
    if abs(trace.imag) > 1e-10 * max(1.0, abs(trace.real)):
        raise AccuracyError(f'Hill discriminant at real mu={mu} is not real', residual=abs(trace.imag), bound=1e-10)
    return trace.real


def _discriminant_samples(wave: WaveProfile, mus: FloatArray, rtol: float) -> FloatArray:
    results = monodromy_Q_batch(wave, mus, rtol)
    deltas = np.array([m.trace.real if m.finite and m.accurate else np.nan for m in results])
    failed = int(np.isnan(deltas).sum())
    if failed:
        log.warning(f'{failed} of {len(mus)} Hill discriminant samples failed the Abel check')
    return deltas


def delta_q_table(
    wave: WaveProfile,
    mu_min: float,
    mu_max: float,
    n: int = MIN_SCAN_POINTS,
    rtol: float = 1e-10
) -> tuple[FloatArray, FloatArray]:
    """Delta_q on ``n`` equally spaced points of ``[mu_min, mu_max]``; NaN where the Abel check failed."""
    if not mu_min < mu_max:
        raise StructureError(f'empty mu window [{mu_min}, {mu_max}]')
    mus = np.linspace(mu_min, mu_max, n)
    return mus, _discriminant_samples(wave, mus, rtol)


def delta_q_jump_ratio(deltas: FloatArray, window: int = JUMP_WINDOW) -> float:
    """Largest step between neighbouring Delta_q samples over the median step around it.

    On a uniform grid a smooth Delta_q keeps this ratio of order one; an
    integration blowup shows up as an isolated jump. Steps touching NaN
    samples are ignored.
    """
    jumps = np.abs(np.diff(np.asarray(deltas, dtype=float)))
    if len(jumps) < window or not np.isfinite(jumps).any():
        return 0.0
    half = window // 2
    padded = np.pad(jumps, half, mode='edge')
    with np.errstate(invalid='ignore'), warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        local = np.nanmedian(np.lib.stride_tricks.sliding_window_view(padded, window), axis=1)
    floor = 1e-12 * max(1.0, float(np.nanmax(np.abs(deltas))))
    ratios = jumps / np.maximum(local, floor)
    finite = ratios[np.isfinite(ratios)]
    return float(finite.max()) if len(finite) else 0.0


def lame_params(wave: WaveProfile, mu: float) -> LameParams:
    """Lame form w'' + (h - 2 k^2 sn^2) w = 0 of Hill's equation at ``mu``.

    In every case h = A (1 - mu / |gamma|) with A = k^2 for rotational and
    A = 1 for librational waves.
    """
    amplitude = 1.0 if wave.wave_class.librational else wave.k**2
    return LameParams(
        k=wave.k,
        h=amplitude * (1.0 - mu / abs(wave.gamma)),
        nu=1.0,
        scale=wave.scale,
        case_tag=wave.wave_class.label
    )


def lame_band_edges(wave: WaveProfile) -> tuple[float, float, float]:
    """mu at the Lame edges h = k^2, 1, 1 + k^2 (eigenfunctions dn, cn, sn), decreasing."""
    amplitude = 1.0 if wave.wave_class.librational else wave.k**2
    k2 = wave.k**2
    mu_at = [abs(wave.gamma) * (1.0 - h / amplitude) for h in (k2, 1.0, 1.0 + k2)]
    return mu_at[0], mu_at[1], mu_at[2]


def lame_eigenfunction_residual(wave: WaveProfile, n_points: int = 64, step: float = 1e-4) -> float:
    """Largest defect of q'' + gamma cos f q - mu q for dn, cn, sn at their edge mu.

    Second derivatives are central differences, relative to max |q|.
    """
    edges = lame_band_edges(wave)
    z = np.linspace(0.0, wave.T, n_points, endpoint=False)
    stencil = np.stack([z - step, z, z + step])
    cos_f, _, _ = profile(wave, z)
    worst = 0.0
    sn, cn, dn = jacobi_ellipj(wave.scale * stencil, wave.k)
    for mu, w in zip(edges, (dn, cn, sn), strict=True):
        second = (w[2] - 2.0 * w[1] + w[0]) / step**2
        defect = second + (wave.gamma * cos_f - mu) * w[1]
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def _lame_scan_points(lame_edges: tuple[float, float, float], window: tuple[float, float], step: float) -> FloatArray:
    """Extra scan points just either side of each Lame edge and halfway between neighbouring edges.

    Every open gap lies between two Lame edges, so these points resolve gaps
    narrower than the uniform scan step.
    """
    edges = sorted(lame_edges)
    extra: list[float] = []
    for i, edge in enumerate(edges):
        below = edge - edges[i - 1] if i > 0 else np.inf
        above = edges[i + 1] - edge if i + 1 < len(edges) else np.inf
        offset = min(LAME_OFFSET_FRACTION * min(below, above), 0.5 * step)
        if offset > 0.0:
            extra += [edge - offset, edge + offset]
        if i + 1 < len(edges) and above > 0.0:
            extra.append(0.5 * (edge + edges[i + 1]))
    points = np.array(extra, dtype=float)
    return points[(points > window[0]) & (points < window[1])]


def _refine_edge(
    wave: WaveProfile,
    a: float,
    b: float,
    target: float,
    rtol: float,
    root_tol: float
) -> float | None:
    """Root of Delta_q - target in [a, b], judged only by single evaluations of ``delta_q``.

    An end value within ``EDGE_VALUE_TOL`` of the target is the root itself;
    ends on the same side mean the batched scan saw noise, and no root is returned.
    """

    def excess(mu: float) -> float:
        return delta_q(wave, mu, rtol) - target

    fa, fb = excess(a), excess(b)
    if not (np.isfinite(fa) and np.isfinite(fb)):
        raise ConvergenceError(f'Delta_q is not finite at the ends of [{a}, {b}]', estimate=float('nan'))
    if abs(fa) <= EDGE_VALUE_TOL:
        return float(a)
    if abs(fb) <= EDGE_VALUE_TOL:
        return float(b)
    if np.sign(fa) == np.sign(fb):
        log.debug(f'Delta_q - {target:+g} keeps its sign on [{a:.9g}, {b:.9g}] ({fa:.2e}, {fb:.2e}); no edge')
        return None
    try:
        solution = optimize.root_scalar(excess, bracket=(a, b), method='brentq', xtol=root_tol)
    except ValueError as error:
        raise ConvergenceError(f'band edge search on [{a}, {b}] failed: {error}') from error
    if not solution.converged:
        raise ConvergenceError(f'band edge search near mu={a} did not converge', estimate=solution.root)
    return float(solution.root)


def _locate_edges(
    wave: WaveProfile,
    mus: FloatArray,
    deltas: FloatArray,
    target: float,
    rtol: float,
    root_tol: float
) -> list[float]:
    roots = [
        root
        for lo, hi in scan_sign_changes(deltas - target)
        if (root := _refine_edge(wave, float(mus[lo]), float(mus[hi]), target, rtol, root_tol)) is not None
    ]
    # a close pair is a real narrow gap only if Delta_q leaves the band between them
    kept: list[float] = []
    for root in sorted(roots):
        if kept and root - kept[-1] < SPURIOUS_ROOT_SPACING:
            previous = kept.pop()
            if abs(delta_q(wave, 0.5 * (previous + root), rtol)) > 2.0 + GAP_MARGIN:
                kept += [previous, root]
            continue
        kept.append(root)
    return kept


def delta_slope_at_zero(wave: WaveProfile, rtol: float = 1e-10, step: float = SLOPE_STEP) -> float:
    """Central-difference estimate of dDelta_q/dmu at mu = 0."""
    return (delta_q(wave, step, rtol) - delta_q(wave, -step, rtol)) / (2.0 * step)


def band_structure(
    wave: WaveProfile,
    mu_min: float | None = None,
    rtol: float = 1e-10,
    root_tol: float = EDGE_TOL,
    n: int = MIN_SCAN_POINTS
) -> BandStructure:
    """Locate the band edges, the single open gap and its distinguished points.

    Parameters
    ----------
    wave : WaveProfile
        The wave
    mu_min : float | None, optional
        Lower end of the scan window, by default one below the lowest Lame edge
    rtol : float, optional
        Integration accuracy, by default 1e-10
    root_tol : float, optional
        Band edge accuracy, by default 1e-11
    n : int, optional
        Uniform scan points, at least 400; points around the Lame edges
        join them

    Returns
    -------
    BandStructure
        Edges, gap, mu*, beta*, alpha* and the Lame cross-check

    Raises
    ------
    AccuracyError
        When Delta_q jumps by more than ten local median steps between
        neighbouring uniform scan points
    ConvergenceError
        When an edge refinement fails
    StructureError
        When the scan does not find exactly one open gap with the expected
        distinguished points
    """
    lame_edges = lame_band_edges(wave)
    window = (
        min(lame_edges) - 1.0 if mu_min is None else float(mu_min),
        max(lame_edges) + 1.0
    )
    log.info(f'Starting band scan of {wave.wave_class.label} wave on mu in [{window[0]:.6g}, {window[1]:.6g}]')
    if not window[0] < window[1]:
        raise StructureError(f'empty mu window [{window[0]}, {window[1]}]')
    uniform = np.linspace(window[0], window[1], max(n, MIN_SCAN_POINTS))
    mus = np.union1d(uniform, _lame_scan_points(lame_edges, window, float(uniform[1] - uniform[0])))
    deltas = _discriminant_samples(wave, mus, rtol)
    if abs(deltas[0]) > 2.0 + GAP_MARGIN:
        raise StructureError(f'mu_min={window[0]} lies inside a gap; lower it below the gap edge')
    continuity = delta_q_jump_ratio(deltas[np.isin(mus, uniform)])
    if continuity > MAX_JUMP_RATIO:
        raise AccuracyError(
            'Delta_q jumps between neighbouring scan points; the integration is not resolving it',
            residual=continuity,
            bound=MAX_JUMP_RATIO
        )

    periodic = _locate_edges(wave, mus, deltas, 2.0, rtol, root_tol)
    antiperiodic = _locate_edges(wave, mus, deltas, -2.0, rtol, root_tol)
    edges = sorted(periodic + antiperiodic)
    if not periodic:
        raise StructureError('no periodic band edge found in the scan window')
    mu0_0 = periodic[-1]

    midpoints = [0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:], strict=True)]
    gaps = [
        (a, b)
        for a, b, mid in zip(edges[:-1], edges[1:], midpoints, strict=True)
        if abs(delta_q(wave, mid, rtol)) > 2.0 + GAP_MARGIN
    ]
    if len(gaps) != 1:
        raise StructureError(f'expected exactly one open gap below mu0, found {len(gaps)}: {gaps}')
    gap = gaps[0]
    mu_star = 0.5 * (gap[0] + gap[1])
    if not mu_star < 0.0:
        raise StructureError(f'gap midpoint {mu_star} is not negative')

    gamma = abs(wave.gamma)
    alpha_star = mu1_0 = slope = None
    if wave.wave_class.librational:
        if len(periodic) < 2 or not mu0_0 > 0.0:
            raise StructureError(f'librational wave needs mu0 > 0 and a second periodic edge, got {periodic}')
        mu1_0 = periodic[-2]
        alpha_star = np.sqrt(mu0_0) / gamma
        slope = delta_slope_at_zero(wave, rtol)
        if not slope < 0.0:
            raise StructureError(f'dDelta_q/dmu at 0 must be negative for librational waves, got {slope}')

    lame_deltas = tuple(min(abs(edge - located) for located in edges) for edge in lame_edges)
    bands = BandStructure(
        mu0_0=mu0_0,
        mu1_0=mu1_0,
        gap=gap,
        mu_star=mu_star,
        beta_star=float(np.sqrt(-mu_star) / gamma),
        alpha_star=None if alpha_star is None else float(alpha_star),
        edges=tuple(edges),
        window=window,
        period=wave.T,
        half_period=0.5 * wave.T,
        lame_edges=lame_edges,
        lame_deltas=(lame_deltas[0], lame_deltas[1], lame_deltas[2]),
        delta_slope_at_zero=slope,
        continuity_ratio=continuity
    )
    log.info(f'Completed band scan: {len(edges)} edges, gap ({gap[0]:.9g}, {gap[1]:.9g})')
    return bands


def verify_mq_zero(wave: WaveProfile, rtol: float = 1e-10, threshold: float = 1e-6) -> MqZeroReport:
    """Check the closed form of M_q(0) and the sign link between dDelta_q/dmu and T_E.

    Raises
    ------
    AccuracyError
        When the entrywise defect, relative to max(1, |m12|), exceeds ``threshold``
    StructureError
        When sign(dDelta_q/dmu at 0) differs from -sign((c^2 - 1) T_E)
    """
    matrix = monodromy_Q(wave, 0.0, rtol).matrix
    energy_factor = (wave.c**2 - 1.0) * period_energy_derivative(wave.params)
    expected_m12 = -wave.v0**2 * energy_factor
    expected = np.array([[1.0, expected_m12], [0.0, 1.0]], dtype=complex)
    residual = float(np.max(np.abs(matrix - expected)) / max(1.0, abs(expected_m12)))
    report = MqZeroReport(
        residual=residual,
        matrix=matrix,
        expected_m12=expected_m12,
        delta_slope=delta_slope_at_zero(wave, rtol),
        energy_factor=energy_factor
    )
    if residual > threshold:
        raise AccuracyError('M_q(0) differs from its closed form', residual=residual, bound=threshold)
    if not report.slope_sign_consistent:
        raise StructureError(
            f'dDelta_q/dmu at 0 is {report.delta_slope:.3e} while (c^2 - 1) T_E is {energy_factor:.3e}'
        )
    return report
