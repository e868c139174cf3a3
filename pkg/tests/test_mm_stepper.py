import math

import numpy as np
import pytest
import shapely
from pydantic import ValidationError

from conftest import DX, FLOW_EXTENT, FLOW_R, H, disk, wulff_set
from wulff_flow.anisotropy import AnisoNorm
from wulff_flow.config import DumbbellShapeSpec
from wulff_flow.contour_diag import extract_contours, fit_wulff_union
from wulff_flow.errors import DomainTooSmallError
from wulff_flow.grid_set import (
    GridSet,
    GridSpec,
    ScalarField,
    anisotropic_perimeter,
    area,
    perimeter_weights,
    rasterize,
    signed_distance_field,
    sym_diff_area,
)
from wulff_flow.mm_stepper import (
    CSV_COLUMNS,
    FlowParams,
    StopCriteria,
    calibrate_linf_constant,
    check_iterated_dissipation,
    dissipation,
    holder_constant,
    lagrange_statistics,
    lyapunov,
    min_cut_solve,
    monitored_radius,
    run_flow,
    step,
    step_energy,
    unary_costs,
    volume_multiplier_search,
    write_trace_csv,
)

M_DISK = math.pi * 0.25
M_FLOW = math.pi * FLOW_R**2


def _params(**kw):
    base = dict(h=H, m=M_DISK, spacing=DX, max_steps=6, snapshot_stride=2)
    base.update(kw)
    return FlowParams(**base)


@pytest.fixture(scope="module")
def disk_trace():
    spec = GridSpec.around((0.0, 0.0), FLOW_EXTENT, DX)
    E0 = rasterize([disk(r=FLOW_R)], spec)
    params = _params(m=area(E0), track_curvature=True)
    return run_flow(E0, params, StopCriteria(factor=0.0, patience=100))


# =============================================================================
# Parameters
# =============================================================================
def test_grid_time_coupling_enforced():
    with pytest.raises(ValidationError, match="grid/time coupling violated"):
        FlowParams(h=0.1, m=1.0, spacing=DX)


def test_volume_tolerance_bounded_by_cell_area():
    with pytest.raises(ValidationError):
        FlowParams(h=H, m=1.0, spacing=DX, volume_tol=2 * DX**2)
    assert _params().tol == pytest.approx(DX**2)
    assert _params().penalty == pytest.approx(1.0 / math.sqrt(H))


# =============================================================================
# Single solves
# =============================================================================
def test_min_cut_with_strong_unaries(spec):
    S = perimeter_weights(AnisoNorm(), 16)
    take = min_cut_solve(ScalarField(spec=spec, values=-np.ones(spec.shape)), S)
    assert take.mask[2:-2, 2:-2].all()
    assert not take.touches_rim()
    leave = min_cut_solve(ScalarField(spec=spec, values=np.ones(spec.shape)), S)
    assert leave.is_empty()


def test_unary_costs_reward_cells_inside(spec):
    F = rasterize([disk(r=0.5)], spec)
    c = unary_costs(F, AnisoNorm(), H, mu=0.0).values
    assert np.all(c[F.mask] < 0)
    assert np.all(c[~F.mask] > 0)


def test_search_saturates_when_target_is_out_of_reach(spec):
    F = rasterize([disk(r=0.5)], spec)
    params = _params(m=3.0)
    found = volume_multiplier_search(F, params)
    assert found.branch == "under"
    assert found.mu == pytest.approx(-params.penalty)
    assert area(found.E) < 3.0
    assert not found.localized


def test_small_disk_is_not_emptied(spec):
    # R = 0.5 < √(3h): every global cut is either larger than m or empty
    F = rasterize([disk(r=0.5)], spec)
    params = _params(m=area(F))
    S = perimeter_weights(params.phi, params.order)
    sd = signed_distance_field(F, params.psi, mode=params.distance_mode)
    found = volume_multiplier_search(F, params, sd=sd, stencil=S)
    assert found.localized
    assert not found.E.is_empty()
    assert abs(area(found.E) - params.m) <= 0.02 * params.m
    energy = step_energy(found.E, sd, S, params)
    assert energy <= step_energy(F, sd, S, params) + 1e-9
    assert energy < step_energy(GridSet.empty(spec), sd, S, params)


def test_small_disk_step_keeps_its_area(spec):
    F = rasterize([disk(r=0.5)], spec)
    E, rep = step(F, _params(m=area(F)))
    assert area(E) > 0.0
    assert rep.branch in ("interior", "pinned")
    assert sym_diff_area(E, F) <= 4 * DX * anisotropic_perimeter(F, perimeter_weights(AnisoNorm(), 16))


def test_step_on_disk_keeps_area_and_energy(flow_spec):
    F = rasterize([disk(r=FLOW_R)], flow_spec)
    params = _params(m=area(F))
    S = perimeter_weights(params.phi, params.order)
    before = lyapunov(anisotropic_perimeter(F, S), area(F), params)
    E, rep = step(F, params, stencil=S)
    assert rep.branch in ("interior", "pinned")
    assert abs(rep.area - params.m) <= 0.02 * params.m
    assert rep.dissipation >= 0.0
    assert rep.lyapunov + rep.dissipation / H <= before + rep.slack + 1e-8
    assert rep.sup_move <= 4 * DX


def test_step_in_saturated_branch_has_no_slack(spec):
    F = rasterize([disk(r=0.5)], spec)
    E, rep = step(F, _params(m=3.0))
    assert rep.branch == "under"
    assert rep.slack == 0.0
    assert area(E) > area(F)


def test_rim_contact_rejected(spec):
    mask = np.zeros(spec.shape, dtype=bool)
    mask[0, 0] = True
    mask[40, 40] = True
    with pytest.raises(DomainTooSmallError):
        run_flow(GridSet(spec=spec, mask=mask), _params())


def test_dissipation_basics(spec):
    E = rasterize([disk(r=0.5)], spec)
    assert dissipation(E, E, AnisoNorm()) == 0.0
    assert dissipation(E.shifted(2, 0), E, AnisoNorm()) > 0.0


def test_monitored_radius_of_disk(spec):
    E = rasterize([disk(r=0.5)], spec)
    assert monitored_radius(E, AnisoNorm()) == pytest.approx(0.5, abs=DX)


# =============================================================================
# Runs
# =============================================================================
def test_run_keeps_strided_snapshots(disk_trace):
    assert sorted(disk_trace.snapshots) == [0, 2, 4, 6]
    assert len(disk_trace.reports) == 6
    assert disk_trace.stop_reason == "max_steps"
    assert disk_trace.times() == pytest.approx([k * H for k in range(7)])


def test_disk_is_stationary(disk_trace):
    E0, E = disk_trace.snapshots[0], disk_trace.final
    assert sym_diff_area(E0, E) <= 4 * DX * disk_trace.initial_perimeter


def test_iterated_dissipation_holds(disk_trace):
    assert check_iterated_dissipation(disk_trace) >= -1e-9
    series = disk_trace.lyapunov_series()
    slack = [0.0] + [r.slack for r in disk_trace.reports]
    for k in range(1, len(series)):
        assert series[k] <= series[k - 1] + slack[k] + 1e-8


def test_curvature_tracking(disk_trace):
    rep = disk_trace.reports[-1]
    assert rep.eps is not None
    assert rep.lambda_el == pytest.approx(1.0 / FLOW_R, abs=0.4)


def test_volume_control_statistics(disk_trace):
    stats = lagrange_statistics(disk_trace)
    assert 0.0 <= stats.off_constraint_fraction <= 1.0
    assert stats.saturated_fraction == 0.0
    assert stats.terminal_area_error < 0.02
    assert 0.0 <= holder_constant(disk_trace) < math.inf


def test_trace_csv_is_reproducible(disk_trace, tmp_path):
    a = write_trace_csv(disk_trace, tmp_path / "a.csv")
    b = write_trace_csv(disk_trace, tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 1 + len(disk_trace.reports)
    timed = write_trace_csv(disk_trace, tmp_path / "c.csv", record_wall_time=True)
    assert timed.read_text().splitlines()[0].endswith(",wall_ms")


def test_anisotropic_wulff_shape_is_stationary(flow_spec):
    phi = AnisoNorm(family="fourier", coeffs=(1.0, 0.08))
    E0 = wulff_set(phi, flow_spec, M_FLOW)
    params = _params(m=area(E0), phi=phi, order=32, stencil_bound=0.05, max_steps=3)
    trace = run_flow(E0, params, StopCriteria(factor=0.0, patience=100))
    assert sym_diff_area(E0, trace.final) <= 4 * DX * trace.initial_perimeter


def test_linf_calibration_floor():
    params = _params(m=M_FLOW, max_steps=3)
    c = calibrate_linf_constant(params, steps=2)
    assert c >= math.sqrt(2.0) * DX / math.sqrt(H)


# =============================================================================
# Flow behaviour on small grids
# =============================================================================
def _aspect(E):
    X, Y = E.spec.cell_centers()
    return float(np.ptp(X[E.mask]) / np.ptp(Y[E.mask]))


def _ellipse(a, b, n=512):
    t = 2.0 * np.pi * np.arange(n) / n
    return np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)


def test_dumbbell_splits_into_two_wulff_shapes():
    # lobes of side 1.6 with a gap of 1.0 ≫ √h; the three-cell neck cannot survive
    spec = GridSpec.around((0.0, 0.0), 2.35, DX)
    rings = DumbbellShapeSpec(lobe=1.6, separation=2.6, neck_width=3 * DX).rings(None, None)
    E0 = rasterize(rings, spec)
    assert fit_wulff_union(extract_contours(E0), AnisoNorm()).d == 1
    trace = run_flow(E0, _params(m=area(E0), max_steps=2, snapshot_stride=1), StopCriteria(factor=0.0, patience=100))
    fit = fit_wulff_union(extract_contours(trace.final), AnisoNorm())
    assert fit.d == 2 and fit.disjoint
    assert check_iterated_dissipation(trace) >= -1e-9
    total = sum(r.dissipation for r in trace.reports) / H
    assert total <= trace.initial_lyapunov - trace.reports[-1].lyapunov + sum(r.slack for r in trace.reports) + 1e-8


@pytest.mark.parametrize("h", [1.0 / 8.0, 1.0 / 4.0])
def test_moves_scale_with_root_h(flow_spec, h):
    E0 = rasterize([_ellipse(1.1, 0.9)], flow_spec)
    params = _params(h=h, m=area(E0), max_steps=3, snapshot_stride=1)
    trace = run_flow(E0, params, StopCriteria(factor=0.0, patience=100))
    assert max(r.linf_ratio for r in trace.reports) <= 1.0
    assert 0.0 < holder_constant(trace) <= 0.5


def test_ellipse_rounds_toward_a_disk(flow_spec):
    E0 = rasterize([_ellipse(1.2, 0.8)], flow_spec)
    trace = run_flow(E0, _params(m=area(E0), max_steps=6), StopCriteria(factor=0.0, patience=100))
    assert _aspect(E0) == pytest.approx(1.5, abs=0.1)
    assert _aspect(trace.final) < 1.2
    assert fit_wulff_union(extract_contours(trace.final), AnisoNorm()).d == 1


def test_peanut_converges_to_a_single_wulff_shape(flow_spec):
    lobes = [shapely.Polygon(disk(center=(x, 0.0), r=0.8)) for x in (-0.35, 0.35)]
    peanut = shapely.union_all(lobes)
    E0 = rasterize([np.asarray(peanut.exterior.coords)[:-1]], flow_spec)
    before = fit_wulff_union(extract_contours(E0), AnisoNorm())
    trace = run_flow(E0, _params(m=area(E0), max_steps=6), StopCriteria(factor=0.0, patience=100))
    after = fit_wulff_union(extract_contours(trace.final), AnisoNorm())
    assert before.d == after.d == 1
    assert after.components[0].f_sup < 0.5 * before.components[0].f_sup
    assert after.radius == pytest.approx(math.sqrt(area(E0) / math.pi), rel=0.02)


def test_growth_to_twice_the_area_starts_saturated(flow_spec):
    F = rasterize([disk(r=0.7)], flow_spec)
    m = 2.0 * area(F)
    trace = run_flow(F, _params(m=m, max_steps=3, snapshot_stride=1), StopCriteria(factor=0.0, patience=100))
    first, second = trace.reports[0], trace.reports[1]
    assert first.branch == "under"
    assert first.mu == pytest.approx(-trace.params.penalty)
    assert area(F) < first.area < m
    assert second.branch in ("interior", "pinned")
    assert abs(trace.reports[-1].area - m) <= 0.01 * m
    series = trace.lyapunov_series()
    assert series[-1] < series[0]


# =============================================================================
# Structural properties
# =============================================================================
def test_step_commutes_with_lattice_translation(flow_spec):
    F = rasterize([_ellipse(1.05, 0.95)], flow_spec)
    params = _params(m=area(F))
    E, _ = step(F, params)
    E_moved, _ = step(F.shifted(3, -2), params)
    assert sym_diff_area(E_moved, E.shifted(3, -2)) <= 16 * DX**2


def test_steps_are_deterministic(flow_spec):
    F = rasterize([_ellipse(1.05, 0.95)], flow_spec)
    params = _params(m=area(F))
    E1, r1 = step(F, params)
    E2, r2 = step(F, params)
    assert np.array_equal(E1.mask, E2.mask)
    assert (r1.mu, r1.area, r1.dissipation) == (r2.mu, r2.area, r2.dissipation)


def test_lattice_perimeter_is_submodular(spec):
    S = perimeter_weights(AnisoNorm(family="ellipse", a=1.0, b=0.6), 16)
    rng = np.random.default_rng(3)
    A = rasterize([disk(center=(-0.2, 0.1), r=0.5)], spec)
    for _ in range(5):
        c = rng.uniform(-0.3, 0.3, size=2)
        B = rasterize([disk(center=tuple(c), r=rng.uniform(0.2, 0.6))], spec)
        lhs = anisotropic_perimeter(A.union(B), S) + anisotropic_perimeter(A.intersection(B), S)
        assert lhs <= anisotropic_perimeter(A, S) + anisotropic_perimeter(B, S) + 1e-9


def test_min_cuts_nest_as_the_multiplier_grows(spec):
    F = rasterize([disk(r=0.5)], spec)
    S = perimeter_weights(AnisoNorm(), 16)
    cuts = [min_cut_solve(unary_costs(F, AnisoNorm(), H, mu), S) for mu in (-2.5, -1.0, 0.0, 1.0)]
    for larger, smaller in zip(cuts, cuts[1:]):
        assert not (smaller.mask & ~larger.mask).any()


def test_symmetric_difference_is_a_metric(spec):
    A = rasterize([disk(center=(-0.1, 0.0), r=0.5)], spec)
    B = rasterize([disk(center=(0.1, 0.05), r=0.4)], spec)
    C = rasterize([_ellipse(0.6, 0.3)], spec)
    assert sym_diff_area(A, A) == 0.0
    assert sym_diff_area(A, B) == sym_diff_area(B, A)
    for X, Y, Z in ((A, B, C), (B, C, A), (C, A, B)):
        assert sym_diff_area(X, Z) <= sym_diff_area(X, Y) + sym_diff_area(Y, Z) + 1e-12
