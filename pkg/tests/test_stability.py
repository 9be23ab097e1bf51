from types import SimpleNamespace

import numpy as np
import pytest

from floquet_sg import stability
from floquet_sg.config import Tolerances
from floquet_sg.errors import AccuracyError, ConvergenceError, DomainError, SearchError, StructureError
from floquet_sg.monodromy import g_p, monodromy_P
from floquet_sg.stability import (
    UNIMODULAR_TOL,
    ImagAxisSpectrum,
    Verdict,
    _double_until,
    _refinement_change,
    classify_stability,
    contour_symmetry_defect,
    count_unimodular,
    find_unstable_eigenvalue,
    imaginary_axis_spectrum,
    real_periodic_eigenvalue,
    spectrum_contours,
    trace_zero_level,
)
from floquet_sg.wave import wave_profile

FROZEN_PERIODIC_EIGENVALUE = 0.7015658413631842


def _circle_contour(radius: float = 0.5, n: int = 41):
    re_axis = np.linspace(-1.0, 1.0, n)
    im_axis = np.linspace(-1.0, 1.0, n)
    re, im = np.meshgrid(re_axis, im_axis)
    return trace_zero_level(re_axis, im_axis, re**2 + im**2 - radius**2, (-1.0, 1.0, -1.0, 1.0))


def test_trace_zero_level_recovers_a_circle():
    contour = _circle_contour()
    points = contour.all_points()
    assert len(contour.polylines) == 1
    assert np.max(np.abs(np.abs(points) - 0.5)) < 0.01
    assert contour.nx == contour.ny == 41
    assert contour.cell == pytest.approx((0.05, 0.05))
    assert len(contour.points_within(0.6)) == len(points)
    assert len(contour.points_within(0.4)) == 0
    assert len(contour.off_axis_points()) > 0


def test_trace_zero_level_skips_failed_samples():
    re_axis = np.linspace(-1.0, 1.0, 41)
    re, im = np.meshgrid(re_axis, re_axis)
    gp = re**2 + im**2 - 0.25
    gp[20, 20] = np.nan
    contour = trace_zero_level(re_axis, re_axis, gp, (-1.0, 1.0, -1.0, 1.0))
    assert contour.failed_points == 1
    assert len(contour.polylines) == 1


def test_symmetric_contour_has_no_symmetry_defect():
    assert contour_symmetry_defect(_circle_contour()) < 1e-6


def test_shifted_contour_breaks_symmetry():
    re_axis = np.linspace(-1.0, 1.0, 41)
    re, im = np.meshgrid(re_axis, re_axis)
    contour = trace_zero_level(re_axis, re_axis, (re - 0.4) ** 2 + im**2 - 0.04, (-1.0, 1.0, -1.0, 1.0))
    assert contour_symmetry_defect(contour) > 5.0


def test_imag_axis_spectrum_membership():
    spectrum = ImagAxisSpectrum(beta_intervals=((0.0, 1.0), (2.0, 3.0)), beta_max=3.0, n=10)
    assert spectrum.contains(0.5) and spectrum.contains(-2.5)
    assert not spectrum.contains(1.5)
    assert spectrum.gaps == ((1.0, 2.0),)


def test_imaginary_axis_gap_superluminal_rotational(superluminal_rotational):
    spectrum = imaginary_axis_spectrum(superluminal_rotational, beta_max=3.0, n=300)
    assert len(spectrum.gaps) >= 1
    assert spectrum.gaps[0] == pytest.approx((3.0 * np.sqrt(1.0 / 6.0), 3.0 * np.sqrt(0.5)), abs=1e-6)
    assert spectrum.contains(0.0)
    assert spectrum.beta_intervals[-1][1] == 3.0


def test_imaginary_axis_gap_subluminal_rotational(subluminal_rotational):
    spectrum = imaginary_axis_spectrum(subluminal_rotational, beta_max=2.0, n=300)
    assert len(spectrum.gaps) >= 1
    assert spectrum.gaps[0] == pytest.approx((0.612372435695795, 1.0606601717798212), abs=1e-6)


def test_imaginary_axis_spectrum_validates_range(superluminal_rotational):
    with pytest.raises(StructureError):
        imaginary_axis_spectrum(superluminal_rotational, beta_max=0.0)


def test_spectrum_contours_validate_grid(superluminal_rotational):
    with pytest.raises(DomainError):
        spectrum_contours(superluminal_rotational, box=(1.0, -1.0, -1.0, 1.0), nx=16, ny=16)
    with pytest.raises(DomainError):
        spectrum_contours(superluminal_rotational, nx=8, ny=16)


@pytest.mark.slow
def test_spectrum_grid_is_symmetric(superluminal_rotational):
    contour = spectrum_contours(superluminal_rotational, box=(-0.5, 0.5, -2.5, 2.5), nx=16, ny=16)
    assert contour.gp_samples.shape == (16, 16)
    assert contour.failed_points == 0
    np.testing.assert_allclose(contour.gp_samples, contour.gp_samples[::-1, :], rtol=1e-7, atol=1e-8)
    np.testing.assert_allclose(contour.gp_samples, contour.gp_samples[:, ::-1], rtol=1e-7, atol=1e-8)
    points = contour.all_points()
    assert np.all((np.abs(points.real) <= 0.5 + 1e-12) & (np.abs(points.imag) <= 2.5 + 1e-12))
    assert contour_symmetry_defect(contour) < 1.0


def test_subluminal_rotational_wave_has_no_certificate(subluminal_rotational):
    with pytest.raises(SearchError):
        find_unstable_eigenvalue(subluminal_rotational)


def test_real_periodic_eigenvalue_needs_subluminal_libration(superluminal_rotational):
    with pytest.raises(SearchError):
        real_periodic_eigenvalue(superluminal_rotational)


@pytest.mark.slow
def test_certificate_superluminal_rotational(superluminal_rotational):
    certificate = find_unstable_eigenvalue(superluminal_rotational)
    assert certificate.lambda_star.real > 0.0
    assert certificate.gp_residual < 1e-8
    assert abs(g_p(superluminal_rotational, certificate.lambda_star)) < 1e-8
    assert abs(abs(certificate.unimodular_multiplier) - 1.0) < 1e-6
    assert certificate.gp_at_ends[0] < 0.0 < certificate.gp_at_ends[1]
    assert certificate.path[0] == pytest.approx(1j * np.sqrt(3.0), abs=1e-7)


@pytest.mark.slow
def test_certificate_superluminal_librational(superluminal_librational):
    certificate = find_unstable_eigenvalue(superluminal_librational)
    assert certificate.lambda_star.real > 0.0
    assert certificate.path[1] == pytest.approx(1.0, abs=1e-7)
    assert certificate.gp_residual < 1e-8


@pytest.mark.slow
def test_standing_wave_certificate_is_alpha_star(standing_librational):
    certificate = find_unstable_eigenvalue(standing_librational)
    assert certificate.lambda_star == pytest.approx(np.sqrt(0.5), abs=1e-7)
    assert certificate.iterations == 0
    assert certificate.gp_residual < 1e-8


@pytest.mark.slow
def test_real_periodic_eigenvalue_subluminal_librational(subluminal_librational):
    lam, rho = real_periodic_eigenvalue(subluminal_librational)
    assert lam > np.sqrt(2.0 / 3.0) * 0.75
    assert abs(rho - 1.0) < 1e-5


@pytest.mark.slow
def test_subluminal_rotational_wave_is_stable(subluminal_rotational):
    verdict = classify_stability(subluminal_rotational)
    assert verdict.kind is Verdict.STABLE
    assert verdict.certificate is None
    assert verdict.audit is not None and verdict.audit.max_gp < -1e-12
    document = verdict.to_dict()
    assert document['verdict'] == 'stable'
    assert document['audit']['n_samples'] == 200


@pytest.mark.slow
def test_superluminal_rotational_wave_is_unstable(superluminal_rotational):
    verdict = classify_stability(superluminal_rotational)
    assert verdict.kind is Verdict.UNSTABLE
    assert verdict.to_dict()['class'] == 'superluminal-rotational'
    assert 'certificate' in verdict.to_dict()


def test_doubling_turns_an_integration_failure_into_a_search_error(monkeypatch):
    def fake_gp(wave, lam, rtol):
        if lam >= 64.0:
            raise ConvergenceError(f'overflow at {lam}')
        return -1.0

    monkeypatch.setattr(stability, 'g_p', fake_gp)
    with pytest.raises(SearchError) as caught:
        _double_until(None, 1.0, positive=True, tolerances=Tolerances())
    diagnostics = caught.value.diagnostics
    assert diagnostics['last_lambda'] == 32.0
    assert diagnostics['last_gp'] == -1.0
    assert diagnostics['failed_lambda'] == 64.0
    assert isinstance(caught.value.__cause__, ConvergenceError)


def test_doubling_reports_the_last_value_at_the_cap(monkeypatch):
    monkeypatch.setattr(stability, 'g_p', lambda wave, lam, rtol: -lam)
    with pytest.raises(SearchError) as caught:
        _double_until(None, 1.0, positive=True, tolerances=Tolerances(doubling_cap=16.0))
    assert caught.value.diagnostics['last_lambda'] == 16.0
    assert caught.value.diagnostics['last_gp'] == -16.0


def test_imaginary_axis_multipliers_are_both_unimodular(superluminal_rotational):
    # i beta inside a band of Hill's equation
    data = monodromy_P(superluminal_rotational, 0.2j)
    assert count_unimodular(data) == 2


@pytest.mark.slow
@pytest.mark.parametrize('c, energy', [(2.0, 3.0), (1.5, 5.0), (np.sqrt(3.0), 1.0), (0.5, 1.0)])
def test_travelling_wave_certificates_have_one_unimodular_multiplier(c, energy):
    wave = wave_profile(c, energy)
    certificate = find_unstable_eigenvalue(wave)
    assert certificate.lambda_star.real > 0.0
    assert certificate.gp_residual < 1e-8
    assert abs(abs(certificate.unimodular_multiplier) - 1.0) < UNIMODULAR_TOL
    assert count_unimodular(monodromy_P(wave, certificate.lambda_star)) == 1
    assert certificate.refinement_change >= 0.0
    assert certificate.to_dict()['refinement_change'] == certificate.refinement_change


@pytest.mark.slow
@pytest.mark.parametrize('c, energy', [(0.5, -1.0), (0.8, -0.5)])
def test_subluminal_rotational_waves_are_stable(c, energy):
    assert classify_stability(wave_profile(c, energy)).kind is Verdict.STABLE


@pytest.mark.slow
def test_real_periodic_eigenvalue_matches_frozen_value(subluminal_librational):
    lam, _ = real_periodic_eigenvalue(subluminal_librational)
    assert lam == pytest.approx(FROZEN_PERIODIC_EIGENVALUE, abs=1e-7)


@pytest.mark.slow
def test_narrow_gap_waves_are_unstable():
    assert classify_stability(wave_profile(np.sqrt(3.0), 0.01)).kind is Verdict.UNSTABLE
    assert classify_stability(wave_profile(0.5, 1.999)).kind is Verdict.UNSTABLE
    assert classify_stability(wave_profile(2.0, 30.0)).kind is Verdict.UNSTABLE


@pytest.mark.slow
def test_off_axis_spectrum_only_for_unstable_waves(subluminal_rotational, superluminal_librational,
                                                   subluminal_librational):
    box = (-1.0, 1.0, -1.5, 1.5)
    stable = spectrum_contours(subluminal_rotational, box=box, nx=64, ny=64)
    assert len(stable.off_axis_points()) == 0
    for wave in (superluminal_librational, subluminal_librational):
        contour = spectrum_contours(wave, box=box, nx=64, ny=64)
        assert len(contour.off_axis_points()) > 0
        assert contour_symmetry_defect(contour) < 1.0


def test_refinement_change_within_bound(monkeypatch):
    monkeypatch.setattr(stability, 'g_p', lambda wave, lam, rtol: 3e-10)
    data = SimpleNamespace(lam=0.5 + 1.0j, trace=1.0 + 0.0j, abel_det=1.0 + 0.0j)
    assert _refinement_change(None, data, 1e-10, Tolerances()) == pytest.approx(2e-10)


def test_refinement_change_rejects_unresolved_zero(monkeypatch):
    monkeypatch.setattr(stability, 'g_p', lambda wave, lam, rtol: 1e-6)
    data = SimpleNamespace(lam=0.5 + 1.0j, trace=1.0 + 0.0j, abel_det=1.0 + 0.0j)
    with pytest.raises(AccuracyError):
        _refinement_change(None, data, 1e-10, Tolerances())
