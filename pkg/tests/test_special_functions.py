import numpy as np
import pytest
from scipy import special

from floquet_sg.errors import ConvergenceError, DomainError
from floquet_sg.special_functions import (
    QuadratureSpec,
    adaptive_quadrature,
    agm,
    complete_elliptic_K,
    jacobi_ellipj,
    jacobi_sn,
)

MODULI = [0.0, 0.1, 0.5, np.sqrt(0.5), 0.9, 0.99, 0.999999]


def test_agm_of_known_pair():
    assert agm(24.0, 6.0) == pytest.approx(13.458171481725615, rel=1e-14)
    assert agm(1.0, 1.0) == 1.0


@pytest.mark.parametrize('k', MODULI)
def test_complete_elliptic_K_matches_scipy(k):
    assert complete_elliptic_K(k) == pytest.approx(special.ellipkm1((1.0 - k) * (1.0 + k)), rel=1e-13)


def test_complete_elliptic_K_at_zero_is_half_pi():
    assert complete_elliptic_K(0.0) == pytest.approx(np.pi / 2, rel=1e-15)


@pytest.mark.parametrize('k', [-0.1, 1.0, 1.5, np.nan])
def test_modulus_outside_unit_interval_is_rejected(k):
    with pytest.raises(DomainError):
        complete_elliptic_K(k)
    with pytest.raises(DomainError):
        jacobi_sn(0.3, k)


@pytest.mark.parametrize('k', MODULI[:-1])
def test_jacobi_ellipj_matches_scipy(k):
    zeta = np.linspace(-12.0, 12.0, 97)
    sn, cn, dn = jacobi_ellipj(zeta, k)
    ref_sn, ref_cn, ref_dn, _ = special.ellipj(zeta, k * k)
    np.testing.assert_allclose(sn, ref_sn, atol=1e-12)
    np.testing.assert_allclose(cn, ref_cn, atol=1e-12)
    np.testing.assert_allclose(dn, ref_dn, atol=1e-12)
    assert np.all(dn > 0)


def test_jacobi_sn_is_odd_with_period_four_K():
    k = 0.8
    quarter = complete_elliptic_K(k)
    zeta = np.linspace(0.0, 3.0, 25)
    np.testing.assert_allclose(jacobi_sn(-zeta, k), -jacobi_sn(zeta, k), atol=1e-14)
    np.testing.assert_allclose(jacobi_sn(zeta + 4.0 * quarter, k), jacobi_sn(zeta, k), atol=1e-12)
    assert jacobi_sn(quarter, k) == pytest.approx(1.0, abs=1e-13)


def test_jacobi_ellipj_keeps_the_argument_shape():
    sn, cn, dn = jacobi_ellipj(np.zeros((3, 4)), 0.5)
    assert sn.shape == cn.shape == dn.shape == (3, 4)


def test_adaptive_quadrature_handles_square_root_endpoints():
    value = adaptive_quadrature(lambda x: 1.0 / np.sqrt(x * (1.0 - x)), 0.0, 1.0)
    assert value == pytest.approx(np.pi, rel=1e-12)


def test_adaptive_quadrature_on_shifted_interval():
    # int_2^5 dx / sqrt((x - 2)(5 - x)) = pi regardless of the interval
    value = adaptive_quadrature(lambda x: 1.0 / np.sqrt((x - 2.0) * (5.0 - x)), 2.0, 5.0)
    assert value == pytest.approx(np.pi, rel=1e-12)


def test_adaptive_quadrature_accepts_roundoff_limited_result():
    tight = QuadratureSpec(abs_tol=1e-16, rel_tol=1e-16)
    value = adaptive_quadrature(lambda x: 1.0 / np.sqrt((x - 2.0) * (5.0 - x)), 2.0, 5.0, tight)
    assert value == pytest.approx(np.pi, rel=1e-12)


def test_adaptive_quadrature_reports_subdivision_limit():
    with pytest.raises(ConvergenceError) as caught:
        adaptive_quadrature(lambda x: np.cos(80.0 * x), 0.0, 1.0, QuadratureSpec(max_subdivisions=1))
    assert caught.value.estimate is not None
    assert caught.value.error_bound > 0.0


def test_adaptive_quadrature_reproduces_K_as_an_integral():
    k = 0.7
    value = adaptive_quadrature(
        lambda t: 1.0 / np.sqrt((1.0 - t * t) * (1.0 - k * k * t * t)),
        0.0,
        1.0
    )
    assert value == pytest.approx(special.ellipk(k * k), rel=1e-12)


def test_adaptive_quadrature_rejects_empty_interval():
    with pytest.raises(DomainError):
        adaptive_quadrature(np.cos, 1.0, 1.0)


def test_quadrature_spec_validates_its_tolerances():
    with pytest.raises(DomainError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(max_subdivisions=0)
