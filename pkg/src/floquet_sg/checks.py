from collections.abc import Callable
from dataclasses import dataclass

import dagster as dg
import numpy as np

from .config import Tolerances
from .errors import AccuracyError, FloquetError
from .hill import BandStructure, band_structure, lame_eigenfunction_residual, verify_mq_zero
from .monodromy import (
    MonodromyData,
    conjugation_matrix,
    discriminant_zero_check,
    locate_p_double_multiplier,
    floquet_multipliers,
    hill_mu,
    monodromy_P_batch,
    monodromy_Q_batch,
)
from .stability import classify_stability, real_periodic_eigenvalue
from .wave import WaveProfile, energy_residual

log = dg.get_dagster_logger(__name__)

SAMPLE_BOX = (-1.0, 1.0, -1.0, 1.0)


@dataclass(frozen=True)
class CheckResult:
    """One identity check; it passes when ``value <= threshold``."""

    name: str
    value: float
    threshold: float
    detail: str = ''

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)

    def to_dict(self) -> dict[str, object]:
        return {
            'name': self.name,
            'value': self.value,
            'threshold': self.threshold,
            'passed': self.passed,
            'detail': self.detail,
        }


def _relative(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(1.0, np.abs(b))


def _g_values(data: list[MonodromyData]) -> np.ndarray:
    return np.array([floquet_multipliers(m).g_value for m in data])


def _guarded(name: str, threshold: float, compute: Callable[[], tuple[float, str]]) -> CheckResult:
    try:
        value, detail = compute()
    except FloquetError as error:
        log.warning(f'Check {name} raised {type(error).__name__}: {error.message}')
        return CheckResult(name, float('nan'), threshold, f'{type(error).__name__}: {error.message}')
    return CheckResult(name, float(value), threshold, detail)


def _sample_lambdas(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    re = rng.uniform(SAMPLE_BOX[0], SAMPLE_BOX[1], n)
    im = rng.uniform(SAMPLE_BOX[2], SAMPLE_BOX[3], n)
    return re + 1j * im


def run_identity_suite(
    wave: WaveProfile,
    tolerances: Tolerances | None = None,
    n_lambda: int = 50,
    seed: int = 0,
    bands: BandStructure | None = None
) -> list[CheckResult]:
    """Run every structural identity the spectral machinery must satisfy for ``wave``.

    Parameters
    ----------
    wave : WaveProfile
        The wave under test
    tolerances : Tolerances | None, optional
        Tolerances, by default ``Tolerances()``
    n_lambda : int, optional
        Random spectral parameters for the pointwise identities, by default 50
    seed : int, optional
        Seed of the spectral parameter sample, by default 0
    bands : BandStructure | None, optional
        Precomputed band structure

    Returns
    -------
    list[CheckResult]
        One entry per identity, in a fixed order
    """
    tolerances = tolerances or Tolerances()
    rtol = tolerances.ode_rtol
    log.info(f'Starting identity suite for {wave.wave_class.label} wave c={wave.c} E={wave.E}')

    lambdas = _sample_lambdas(n_lambda, seed)
    p_data = monodromy_P_batch(wave, lambdas, rtol)
    q_data = monodromy_Q_batch(wave, [hill_mu(wave, lam) for lam in lambdas], rtol)
    p_mirror = monodromy_P_batch(wave, np.conj(lambdas), rtol)
    p_negated = monodromy_P_batch(wave, -lambdas, rtol)
    shift = np.exp(-wave.c * wave.gamma * lambdas * wave.T)

    def conjugation() -> tuple[float, str]:
        worst = 0.0
        for lam, p, q, s in zip(lambdas, p_data, q_data, shift, strict=True):
            h = conjugation_matrix(wave, lam)
            h_inv = np.array([[1.0, 0.0], [-h[1, 0], 1.0]], dtype=complex)
            mapped = s * (h @ p.matrix @ h_inv)
            worst = max(worst, float(np.max(np.abs(q.matrix - mapped)) / max(1.0, float(np.max(np.abs(q.matrix))))))
        return worst, f'{n_lambda} samples'

    def mapping() -> tuple[float, str]:
        worst = 0.0
        for p, q, s in zip(p_data, q_data, shift, strict=True):
            rho, eta = floquet_multipliers(p), floquet_multipliers(q)
            mapped = (s * rho.rho_plus, s * rho.rho_minus)
            straight = max(abs(mapped[0] - eta.rho_plus), abs(mapped[1] - eta.rho_minus))
            crossed = max(abs(mapped[0] - eta.rho_minus), abs(mapped[1] - eta.rho_plus))
            worst = max(worst, min(straight, crossed) / max(1.0, abs(eta.rho_plus)))
        return worst, f'{n_lambda} samples'

    def g_identity() -> tuple[float, str]:
        g_p_values, g_q_values = _g_values(p_data), _g_values(q_data)
        predicted = (wave.c * wave.gamma * lambdas.real * wave.T) ** 2 + g_q_values
        return float(np.max(_relative(g_p_values, predicted))), 'relative to max(1, |G|)'

    def symmetry() -> tuple[float, str]:
        base = _g_values(p_data)
        worst = max(
            float(np.max(_relative(_g_values(p_mirror), base))),
            float(np.max(_relative(_g_values(p_negated), base)))
        )
        return worst, 'conjugate and negated lambda'

    def energy() -> tuple[float, str]:
        z = np.random.default_rng(seed).uniform(-2.0 * wave.T, 2.0 * wave.T, 200)
        return float(np.max(np.abs(energy_residual(wave, z)))), '200 random z'

    results = [
        _guarded('energy_conservation', 1e-9, energy),
        _guarded('abel_p', 1e-8, lambda: (max(m.relative_abel_residual for m in p_data), f'{n_lambda} samples')),
        _guarded('abel_q', 1e-8, lambda: (max(m.relative_abel_residual for m in q_data), f'{n_lambda} samples')),
        _guarded('conjugation', 1e-8, conjugation),
        _guarded('multiplier_mapping', 1e-8, mapping),
        _guarded('g_identity', 1e-8, g_identity),
        _guarded('g_q_nonpositive', 1e-12, lambda: (float(np.max(_g_values(q_data))), 'max G_q')),
        _guarded('g_p_symmetry', 1e-8, symmetry),
        _guarded('mq_zero_form', 1e-6, lambda: (verify_mq_zero(wave, rtol).residual, 'relative to max(1, |m12|)')),
        _guarded('lame_eigenfunctions', 1e-6, lambda: (lame_eigenfunction_residual(wave), 'dn, cn, sn at their edges')),
    ]

    try:
        bands = bands or band_structure(wave, rtol=rtol, root_tol=tolerances.root_tol)
    except FloquetError as error:
        results.append(CheckResult('band_structure', float('nan'), 0.0, f'{type(error).__name__}: {error.message}'))
        return results

    results.append(_guarded('lame_band_edges', 1e-7, lambda: (max(bands.lame_deltas), f'edges {bands.edges}')))

    def discriminant_zero() -> tuple[float, str]:
        gamma = abs(wave.gamma)
        betas = sorted(float(np.sqrt(-edge)) / gamma for edge in bands.gap if -edge > AXIS_EDGE_MIN)
        reach = 0.25 * (betas[-1] - betas[0] if len(betas) == 2 else betas[0])
        checks = [discriminant_zero_check(wave, 0.0j, rtol)] + [
            locate_p_double_multiplier(wave, max(beta - reach, 0.0), beta + reach, rtol) for beta in betas
        ]
        worst = max(check.p_discriminant for check in checks)
        if worst > P_DISCRIMINANT_TOL:
            raise AccuracyError(
                'Delta_p^2 - 4 D_p does not vanish at the located double multipliers',
                residual=worst,
                bound=P_DISCRIMINANT_TOL
            )
        betas_text = ', '.join(f'{check.lam.imag:.9g}' for check in checks[1:])
        return max(check.q_trace_defect for check in checks), f'lambda = 0 and i beta for beta in [{betas_text}]'

    results.append(_guarded('discriminant_zero', 1e-6, discriminant_zero))

    if wave.wave_class.subluminal and wave.wave_class.librational:
        def realp() -> tuple[float, str]:
            lam, rho = real_periodic_eigenvalue(wave, tolerances, bands)
            return abs(rho * rho - 1.0), f'lambda*={lam:.12g}'

        results.append(_guarded('real_periodic_eigenvalue', 1e-5, realp))

    try:
        outcome = classify_stability(wave, tolerances, bands)
    except FloquetError as error:
        results.append(CheckResult('stability_verdict', float('nan'), 0.0, f'{type(error).__name__}: {error.message}'))
    else:
        if outcome.audit is not None:
            results.append(CheckResult('stability_verdict', outcome.audit.max_gp, -1e-12, 'stable, audit max G_p'))
        elif outcome.certificate is not None:
            certificate = outcome.certificate
            results.append(CheckResult(
                'stability_verdict', certificate.gp_residual, 1e-8, f'unstable, lambda*={certificate.lambda_star}'
            ))

    failed = [r.name for r in results if not r.passed]
    log.info(f'Completed identity suite: {len(results) - len(failed)} of {len(results)} checks passed')
    return results
