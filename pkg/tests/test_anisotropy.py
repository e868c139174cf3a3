import math

import numpy as np
import pytest

from wulff_flow.anisotropy import (
    AnisoNorm,
    WulffShape,
    cahn_hoffman,
    check_compatibility,
    dual_norm,
    dual_of,
    ellipticity_bounds,
    eval_norm,
    polygon_area,
    polygon_perimeter,
    wulff_area,
    wulff_polygon,
)
from wulff_flow.errors import EllipticityError, ResolutionError

NORMS = [
    AnisoNorm(),
    AnisoNorm(family="ellipse", a=1.0, b=0.6),
    AnisoNorm(family="ellipse", a=2.0, b=1.0, rotation=0.3),
    AnisoNorm(family="fourier", coeffs=(1.0, 0.08)),
    AnisoNorm(family="fourier", coeffs=(1.0, 0.0, 0.04)),
]


def _random_vectors(n=1000, seed=0):
    return np.random.default_rng(seed).normal(size=(n, 2))


def test_euclidean_is_the_standard_norm():
    phi = AnisoNorm()
    v = _random_vectors()
    assert np.allclose(eval_norm(phi, v), np.hypot(v[:, 0], v[:, 1]))
    assert wulff_area(phi) == pytest.approx(math.pi, rel=1e-12)


def test_scalar_input_returns_float():
    assert isinstance(eval_norm(AnisoNorm(), [3.0, 4.0]), float)
    assert eval_norm(AnisoNorm(), [3.0, 4.0]) == pytest.approx(5.0)


def test_norm_is_even_and_homogeneous():
    v = _random_vectors(200)
    for phi in NORMS:
        assert np.allclose(eval_norm(phi, v), eval_norm(phi, -v))
        assert np.allclose(eval_norm(phi, 2.5 * v), 2.5 * eval_norm(phi, v))


def test_ellipse_formula():
    phi = AnisoNorm(family="ellipse", a=2.0, b=0.5)
    assert eval_norm(phi, [1.0, 0.0]) == pytest.approx(2.0)
    assert eval_norm(phi, [0.0, 1.0]) == pytest.approx(0.5)
    g, g1, g2 = phi.derivatives(np.array([0.3]))
    eps = 1e-5
    num1 = (phi.gamma(0.3 + eps) - phi.gamma(0.3 - eps)) / (2 * eps)
    assert g1[0] == pytest.approx(float(num1), rel=1e-6)


def test_rotation_shifts_gamma():
    base = AnisoNorm(family="fourier", coeffs=(1.0, 0.08))
    turned = AnisoNorm(family="fourier", coeffs=(1.0, 0.08), rotation=0.4)
    theta = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(turned.gamma(theta + 0.4), base.gamma(theta))


def test_non_elliptic_fourier_rejected():
    with pytest.raises(EllipticityError, match="not regular elliptic"):
        AnisoNorm(family="fourier", coeffs=(1.0, 0.0, 0.1))


def test_sampled_resolution_rules():
    theta = 2 * np.pi * np.arange(12) / 12
    with pytest.raises(ResolutionError):
        AnisoNorm(family="sampled", values=tuple(np.ones_like(theta)))
    with pytest.raises(ResolutionError):
        AnisoNorm(family="sampled", values=tuple(np.ones(24)))


def test_sampled_interpolates_fourier_exactly():
    phi = AnisoNorm(family="fourier", coeffs=(1.0, 0.05, 0.01))
    theta = 2 * np.pi * np.arange(32) / 32
    sampled = AnisoNorm(family="sampled", values=tuple(phi.gamma(theta)))
    angles = np.linspace(0.0, 2 * np.pi, 101)
    for a, b in zip(sampled.derivatives(angles), phi.derivatives(angles)):
        assert np.allclose(a, b, atol=1e-10)


def test_dual_of_ellipse_is_inverse_ellipse():
    phi = AnisoNorm(family="ellipse", a=2.0, b=0.5)
    dual = dual_of(phi)
    assert dual.family == "ellipse"
    assert (dual.a, dual.b) == pytest.approx((0.5, 2.0))


@pytest.mark.parametrize("phi", NORMS, ids=lambda p: p.label())
def test_double_dual_recovers_norm(phi):
    v = _random_vectors()
    back = dual_norm(dual_of(phi), v)
    assert np.max(np.abs(back - eval_norm(phi, v)) / eval_norm(phi, v)) < 1e-6


@pytest.mark.parametrize("phi", NORMS, ids=lambda p: p.label())
def test_dual_has_the_same_equivalence_constant(phi):
    assert ellipticity_bounds(dual_of(phi)).L_phi == pytest.approx(ellipticity_bounds(phi).L_phi, abs=1e-6)


def test_dual_norm_pairs_with_cahn_hoffman():
    phi = AnisoNorm(family="fourier", coeffs=(1.0, 0.08))
    theta = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    xi = cahn_hoffman(phi, theta)
    # ξ(θ) lies on the unit sphere of φ°
    assert np.allclose(dual_norm(phi, xi), 1.0, atol=1e-8)


@pytest.mark.parametrize("phi", NORMS, ids=lambda p: p.label())
def test_wulff_polygon_area_and_isoperimetric_equality(phi):
    poly = wulff_polygon(phi, (0.0, 0.0), 1.0, 2048)
    assert polygon_area(poly) == pytest.approx(wulff_area(phi), rel=1e-4)
    assert polygon_perimeter(phi, poly) == pytest.approx(2.0 * wulff_area(phi), rel=1e-4)


def test_wulff_polygon_needs_enough_vertices():
    with pytest.raises(ValueError):
        wulff_polygon(AnisoNorm(), n=8)


def test_wulff_shape_contains_through_gauge():
    phi = AnisoNorm(family="ellipse", a=2.0, b=1.0)
    W = WulffShape(norm=phi, center=(1.0, 1.0), radius=1.0)
    # support values φ(e₁) = 2, φ(e₂) = 1 are the semi-axes
    assert W.contains([[1.0 + 1.99, 1.0], [1.0, 1.0 + 0.99]]).all()
    assert not W.contains([[1.0 + 2.01, 1.0], [1.0, 1.0 + 1.01]]).any()
    assert W.perimeter() == pytest.approx(2.0 * W.area())


def test_ellipticity_bounds_of_ellipse():
    el = ellipticity_bounds(AnisoNorm(family="ellipse", a=2.0, b=1.0))
    assert el.gamma_max == pytest.approx(2.0, rel=1e-9)
    assert el.gamma_min == pytest.approx(1.0, rel=1e-9)
    assert el.L_phi == pytest.approx(2.0, rel=1e-9)
    # γ+γ″ = a²b²/γ³ ranges over [1/2, 4]
    assert el.curvature_weight_min == pytest.approx(0.5, rel=1e-6)
    assert el.curvature_weight_max == pytest.approx(4.0, rel=1e-6)
    assert el.Lambda_phi == pytest.approx(4.0, rel=1e-6)


def test_lambda_takes_the_reciprocal_when_it_dominates():
    # a=1, b=0.6: γ+γ″ ranges over [0.36, 0.36/0.216], so 1/min wins
    el = ellipticity_bounds(AnisoNorm(family="ellipse", a=1.0, b=0.6))
    assert el.curvature_weight_min == pytest.approx(0.36, rel=1e-6)
    assert el.curvature_weight_max == pytest.approx(0.36 / 0.216, rel=1e-6)
    assert el.Lambda_phi == pytest.approx(1.0 / 0.36, rel=1e-6)
    assert ellipticity_bounds(AnisoNorm()).Lambda_phi == pytest.approx(1.0)


def test_compatibility_with_axis_reflections():
    phi = AnisoNorm(family="ellipse", a=2.0, b=1.0)
    assert check_compatibility(phi, (1.0, 0.0))
    assert check_compatibility(phi, (0.0, 1.0))
    turned = AnisoNorm(family="ellipse", a=2.0, b=1.0, rotation=0.3)
    assert not check_compatibility(turned, (1.0, 0.0))
    with pytest.raises(ValueError):
        check_compatibility(phi, (1.0, 1.0))
