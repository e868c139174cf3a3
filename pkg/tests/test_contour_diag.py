import math

import numpy as np
import pytest

from conftest import DX, disk, wulff_set
from wulff_flow.anisotropy import AnisoNorm, cahn_hoffman, polygon_area, wulff_area, wulff_polygon
from wulff_flow.contour_diag import (
    Contour,
    alexandrov_report,
    area_expansion_check,
    curvature_profile,
    extract_contours,
    fit_wulff_union,
    gauss_bonnet,
    is_star_shaped,
    normal_graph_curve,
    perimeter_expansion_defect,
    wulff_union_polygons,
)
from wulff_flow.errors import DegeneracyError, NoContourError, SmallnessViolationError
from wulff_flow.grid_set import GridSet, area, rasterize

NORMS = [
    AnisoNorm(),
    AnisoNorm(family="ellipse", a=1.0, b=0.6),
    AnisoNorm(family="fourier", coeffs=(1.0, 0.08)),
]
N = 4096


def _theta(n=N):
    return 2.0 * np.pi * np.arange(n) / n


def _ellipse_curve(a, b, n=2048):
    t = _theta(n)
    return np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)


# =============================================================================
# Extraction
# =============================================================================
def test_disk_has_one_counter_clockwise_contour(spec):
    E = rasterize([disk(r=0.5)], spec)
    (c,) = extract_contours(E)
    assert not c.is_hole
    assert c.signed_area == pytest.approx(area(E), rel=0.03)


def test_annulus_contours_keep_the_set_on_the_left(spec):
    E = rasterize([disk(r=0.8), disk(r=0.4)], spec)
    outer, hole = extract_contours(E)
    assert not outer.is_hole and outer.signed_area > 0
    assert hole.is_hole and hole.signed_area < 0
    assert outer.signed_area + hole.signed_area == pytest.approx(area(E), rel=0.03)


def test_empty_set_has_no_contour(spec):
    with pytest.raises(NoContourError):
        extract_contours(GridSet.empty(spec))


# =============================================================================
# Curvature
# =============================================================================
def test_circle_curvature():
    c = Contour.from_points(disk(r=2.0, n=1024))
    prof = curvature_profile(c, AnisoNorm())
    assert np.allclose(prof.kappa, 0.5, atol=1e-4)
    assert prof.eps == pytest.approx(0.0, abs=1e-3)
    assert prof.winding == 1
    back = curvature_profile(c.reversed(), AnisoNorm())
    assert back.is_hole and back.winding == -1
    assert np.allclose(back.kappa, -0.5, atol=1e-4)


def test_wulff_boundary_has_constant_anisotropic_curvature():
    for phi in NORMS:
        c = Contour.from_points(wulff_polygon(phi, (0.3, -0.2), 0.5, 2048), n=512)
        prof = curvature_profile(c, phi)
        assert np.allclose(prof.kappa_phi, 2.0, rtol=1e-2)
        assert prof.mean_kappa_phi == pytest.approx(2.0, rel=1e-3)
        assert prof.weighted_mean_kappa_phi == pytest.approx(2.0, rel=1e-3)


@pytest.mark.parametrize("phi", NORMS, ids=lambda p: p.label())
@pytest.mark.parametrize(
    "curve",
    [
        disk(r=0.7, n=2048),
        _ellipse_curve(1.0, 0.4),
        normal_graph_curve(AnisoNorm(family="fourier", coeffs=(1.0, 0.08)), 0.1 * np.cos(3 * _theta(2048))),
    ],
    ids=["circle", "ellipse", "perturbed-wulff"],
)
def test_anisotropic_gauss_bonnet(phi, curve):
    c = Contour.from_points(curve)
    assert gauss_bonnet(c, phi) == pytest.approx(2.0 * wulff_area(phi), rel=0.02)
    assert gauss_bonnet(c.reversed(), phi) == pytest.approx(-2.0 * wulff_area(phi), rel=0.02)


def test_short_contour_is_degenerate():
    with pytest.raises(DegeneracyError):
        curvature_profile(Contour.from_points(disk(r=1.0, n=12)), AnisoNorm())


# =============================================================================
# Wulff fitting
# =============================================================================
def test_star_shape_detection():
    assert is_star_shaped(disk(r=1.0, n=64))
    u_shape = np.array([(0, 0), (3, 0), (3, 3), (2, 3), (2, 1), (1, 1), (1, 3), (0, 3)], dtype=float)
    assert not is_star_shaped(u_shape)


def test_fit_recovers_an_offset_disk(spec):
    E = rasterize([disk(center=(0.1, -0.05), r=0.5)], spec)
    fit = fit_wulff_union(extract_contours(E), AnisoNorm())
    assert fit.d == 1 and fit.fittable
    (comp,) = fit.components
    assert comp.center == pytest.approx((0.1, -0.05), abs=DX)
    assert fit.radius == pytest.approx(0.5, rel=0.02)
    assert comp.f_sup <= 5 * DX


def test_fit_of_two_equal_disks(spec):
    E = rasterize([disk(center=(-0.55, 0.0), r=0.35), disk(center=(0.55, 0.0), r=0.35)], spec)
    m = area(E)
    fit = fit_wulff_union(extract_contours(E), AnisoNorm(), m)
    assert fit.d == 2 and fit.disjoint
    r0, r1 = (c.radius for c in fit.components)
    assert r0 == pytest.approx(r1, rel=0.02)
    assert fit.target_radius == pytest.approx(math.sqrt(m / (2 * math.pi)))
    assert len(wulff_union_polygons(fit, AnisoNorm())) == 2


def test_shared_radius_averages_component_areas(spec):
    E = rasterize([disk(center=(-0.55, 0.0), r=0.3), disk(center=(0.5, 0.0), r=0.4)], spec)
    fit = fit_wulff_union(extract_contours(E), AnisoNorm(), m=1.0)
    small, large = sorted(c.radius for c in fit.components)
    assert small == pytest.approx(0.3, rel=0.03)
    assert large == pytest.approx(0.4, rel=0.03)
    assert fit.radius**2 == pytest.approx((small**2 + large**2) / 2, rel=1e-9)
    # m only feeds the reported target, not the fitted radius
    assert fit.target_radius == pytest.approx(math.sqrt(1.0 / (2 * math.pi)))


def test_anisotropic_fit(spec):
    phi = AnisoNorm(family="ellipse", a=1.0, b=0.6)
    E = wulff_set(phi, spec, 0.5, center=(0.05, 0.0))
    fit = fit_wulff_union(extract_contours(E), phi)
    assert fit.components[0].center == pytest.approx((0.05, 0.0), abs=2 * DX)
    assert fit.components[0].f_sup <= 5 * DX


# =============================================================================
# Alexandrov report and expansions
# =============================================================================
def test_report_on_exact_wulff_curve():
    phi = AnisoNorm(family="fourier", coeffs=(1.0, 0.08))
    c = Contour.from_points(normal_graph_curve(phi, np.zeros(N)), n=1024)
    rep = alexandrov_report([c], phi)
    assert rep.d == 1
    assert rep.gap < 1e-3
    assert rep.eps < 1e-2
    doc = rep.to_json_dict(step=3)
    assert doc["step"] == 3
    assert set(doc) >= {"eps", "d", "P_phi", "P_d", "gap", "ratio", "components", "gauss_bonnet"}


def test_report_counts_components(spec):
    E = rasterize([disk(center=(-0.55, 0.0), r=0.35), disk(center=(0.55, 0.0), r=0.35)], spec)
    rep = alexandrov_report(E, AnisoNorm())
    assert rep.d == 2
    assert len(rep.gauss_bonnet) == 2
    assert rep.gauss_bonnet[0] == pytest.approx(2 * math.pi, rel=0.05)


def test_unperturbed_graph_is_the_wulff_shape():
    phi = AnisoNorm(family="ellipse", a=1.0, b=0.6)
    assert np.allclose(normal_graph_curve(phi, np.zeros(64)), cahn_hoffman(phi, _theta(64)))


@pytest.mark.parametrize("phi", NORMS, ids=lambda p: p.label())
def test_exact_area_identity(phi):
    t = _theta()
    f = 0.05 * np.cos(3 * t) + 0.02 * np.sin(5 * t)
    assert area_expansion_check(f, phi) < 1e-8
    assert polygon_area(normal_graph_curve(phi, f)) > 0


@pytest.mark.parametrize("phi", NORMS, ids=lambda p: p.label())
def test_perimeter_defect_is_quadratic(phi):
    f = 0.04 * np.cos(3 * _theta())
    ratio = perimeter_expansion_defect(f, phi) / perimeter_expansion_defect(0.5 * f, phi)
    assert ratio == pytest.approx(4.0, rel=0.2)


def test_folding_perturbation_rejected():
    with pytest.raises(SmallnessViolationError):
        area_expansion_check(1.5 * np.cos(3 * _theta()), AnisoNorm())
