"""
Minimizing-movements engine for the area-preserving anisotropic flat flow.

Each step minimizes over grid sets E

    F_h(E, F) = P_φ(E) + (1/h)∫_E sd^ψ_F + (1/√h)·||E| − m|

exactly: the perimeter is a nonnegative pairwise cut (Crofton stencil), the
distance term is a per-cell unary cost, and the volume penalty is handled by a
scan over the Lagrange multiplier μ ∈ [−1/√h, +1/√h], each μ being one s–t min cut.
"""

import csv
import hashlib
import logging
import math
import time
from pathlib import Path
from typing import Callable, Literal

import maxflow
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.ndimage import map_coordinates

from . import contour_diag
from .anisotropy import AnisoNorm, dual_of, eval_norm, wulff_area, wulff_polygon
from .errors import (
    DegeneracyError,
    DissipationViolation,
    DomainTooSmallError,
    MonotonicityViolation,
    NoContourError,
    SolverError,
)
from .grid_set import (
    MARGIN_CELLS,
    CroftonStencil,
    GridSet,
    GridSpec,
    ScalarField,
    _pair_views,
    _same_spec,
    anisotropic_perimeter,
    area,
    boundary_cells,
    perimeter_weights,
    rasterize,
    signed_distance_field,
    sym_diff_area,
)
from .snapshot import encode_snapshot

logger = logging.getLogger(__name__)

Branch = Literal["under", "over", "interior", "pinned"]


# =============================================================================
# Parameters and records
# =============================================================================
class FlowParams(BaseModel):
    """Time step, target area, norms and numerics of one fixed-h flow."""

    model_config = ConfigDict(frozen=True)

    h: float = Field(..., gt=0, description="time step")
    m: float = Field(..., gt=0, description="target area")
    phi: AnisoNorm = Field(default_factory=AnisoNorm, description="surface tension")
    psi: AnisoNorm = Field(default_factory=AnisoNorm, description="mobility (distance norm)")
    spacing: float = Field(..., gt=0, description="grid spacing Δx")
    order: Literal[8, 16, 32] = 16
    stencil_bound: float = Field(default=0.02, gt=0)
    volume_tol: float | None = Field(default=None, description="λ-search area tolerance, default Δx²")
    max_steps: int = Field(default=500, ge=1)
    max_bisections: int = Field(default=60, ge=1)
    local_tube: float = Field(default=1.0, gt=0, description="half-width of the localized search band, in units of √h")
    distance_mode: Literal["exact", "fast", "auto"] = "auto"
    snapshot_stride: int = Field(default=10, ge=1)
    track_curvature: bool = False
    smoothing_cells: float = Field(default=3.0, gt=0, description="contour smoothing σ in cells")
    linf_constant: float | None = Field(default=None, gt=0, description="calibrated c in sup d ≤ c√h")
    linf_headroom: float = Field(default=10.0, gt=1)

    @model_validator(mode="after")
    def _check_coupling(self) -> "FlowParams":
        if self.spacing > self.h / 4.0:
            raise ValueError(
                f"grid/time coupling violated: Δx = {self.spacing:g} > h/4 = {self.h / 4.0:g}; "
                f"lattice steps pin below this bound"
            )
        if self.volume_tol is not None and self.volume_tol > self.spacing**2 * (1 + 1e-12):
            raise ValueError(f"volume_tol {self.volume_tol:g} exceeds Δx² = {self.spacing**2:g}")
        return self

    @property
    def tol(self) -> float:
        return self.volume_tol if self.volume_tol is not None else self.spacing**2

    @property
    def penalty(self) -> float:
        """1/√h, the weight of the volume penalty."""
        return 1.0 / math.sqrt(self.h)


class StopCriteria(BaseModel):
    """Halt when consecutive sets differ by less than factor·Δx·P_φ(E₀) for `patience` steps."""

    factor: float = Field(default=1e-2, ge=0)
    patience: int = Field(default=10, ge=1)


class SearchResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    E: GridSet
    mu: float
    branch: Branch
    area_gap: float = 0.0
    solves: int = 0
    localized: bool = False


class StepReport(BaseModel):
    """One row of the flow trace."""

    step: int
    t: float
    area: float
    perimeter: float
    dissipation: float = Field(..., ge=0)
    mu: float
    branch: Branch
    sup_move: float = Field(..., ge=0)
    eps: float | None = None
    lyapunov: float
    slack: float = Field(default=0.0, ge=0)
    area_gap: float = 0.0
    radius: float = 0.0
    linf_ratio: float = 0.0
    lambda_el: float | None = None
    expu_ratio: float | None = None
    wall_ms: float = 0.0


class FlowTrace(BaseModel):
    """Parameters, per-step reports and strided snapshots of one run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: FlowParams
    initial_area: float
    initial_perimeter: float
    initial_lyapunov: float
    initial_digest: str
    reports: list[StepReport] = Field(default_factory=list)
    snapshots: dict[int, GridSet] = Field(default_factory=dict)
    stop_reason: str = "max_steps"

    @property
    def final(self) -> GridSet:
        return self.snapshots[max(self.snapshots)]

    def lyapunov_series(self) -> list[float]:
        return [self.initial_lyapunov] + [r.lyapunov for r in self.reports]

    def times(self) -> list[float]:
        return [0.0] + [r.t for r in self.reports]


# =============================================================================
# Lyapunov bookkeeping
# =============================================================================
def lyapunov(perimeter: float, set_area: float, params: FlowParams) -> float:
    """P_φ(E) + (1/√h)·||E| − m|."""
    return perimeter + params.penalty * abs(set_area - params.m)


def step_energy(E: GridSet, sd: ScalarField, stencil: CroftonStencil, params: FlowParams) -> float:
    """F_h(E, F) with the distance term evaluated from sd^ψ_F."""
    cell = E.spec.cell_area
    return (
        anisotropic_perimeter(E, stencil)
        + float(sd.values[E.mask].sum()) * cell / params.h
        + params.penalty * abs(area(E) - params.m)
    )


# =============================================================================
# Operations
# =============================================================================
def unary_costs(
    F: GridSet,
    psi: AnisoNorm,
    h: float,
    mu: float,
    mode: Literal["exact", "fast", "auto"] = "auto",
    sd: ScalarField | None = None,
) -> ScalarField:
    """c(x) = ((1/h)·sd^ψ_F(x) + μ)·Δx², the cost of including cell x."""
    if sd is None:
        sd = signed_distance_field(F, psi, mode=mode)
    return ScalarField(spec=F.spec, values=(sd.values / h + mu) * F.spec.cell_area)


def _rim_costs(spec: GridSpec, stencil: CroftonStencil) -> np.ndarray:
    """Cut cost each free cell pays against the fixed-empty rim when it is in E."""
    interior = np.zeros(spec.shape, dtype=bool)
    interior[MARGIN_CELLS:-MARGIN_CELLS, MARGIN_CELLS:-MARGIN_CELLS] = True
    extra = np.zeros(spec.shape)
    for (dx, dy), w in stencil.half():
        a, b = _pair_views(interior, dx, dy)
        ea, eb = _pair_views(extra, dx, dy)
        ea += w * spec.spacing * (a & ~b)
        eb += w * spec.spacing * (b & ~a)
    return extra


def min_cut_solve(unary: ScalarField, stencil: CroftonStencil) -> GridSet:
    """
    Global minimizer of P̂_φ(E) + Σ_{x∈E} c(x) over sets avoiding the rim.

    Cells of E are the sink segment of the cut; the solver leaves every node
    it cannot prove to be sink-side on the source side, so the returned set
    is the minimal minimizer.
    """
    spec = unary.spec
    r = MARGIN_CELLS
    costs = (np.asarray(unary.values) + _rim_costs(spec, stencil))[r:-r, r:-r]
    reach = max(max(abs(dx), abs(dy)) for (dx, dy), _ in stencil.half())
    graph = maxflow.Graph[float]()
    nodeids = graph.add_grid_nodes(costs.shape)
    for (dx, dy), w in stencil.half():
        structure = np.zeros((2 * reach + 1, 2 * reach + 1))
        structure[reach + dy, reach + dx] = w * spec.spacing
        graph.add_grid_edges(nodeids, weights=1.0, structure=structure, symmetric=True)
    graph.add_grid_tedges(nodeids, np.maximum(costs, 0.0), np.maximum(-costs, 0.0))
    try:
        graph.maxflow()
    except Exception as e:
        raise SolverError(
            f"max-flow failed: {e}",
            graph_stats={"nodes": graph.get_node_count(), "edges": graph.get_edge_count()},
        ) from e
    inside = graph.get_grid_segments(nodeids)
    mask = np.zeros(spec.shape, dtype=bool)
    mask[r:-r, r:-r] = inside
    return GridSet(spec=spec, mask=mask)


def _multiplier_scan(
    solve: Callable[[float], GridSet], params: FlowParams
) -> tuple[SearchResult, list[tuple[GridSet, float]]]:
    """
    Bracket and bisect μ for one family of cuts; also return every (set, μ) solved.

    ||E| − m| is convex piecewise linear in |E| with slopes ±1/√h, so the
    penalized minimizer is a Lagrangian minimizer for some μ ∈ [−1/√h, 1/√h]
    whenever the Lagrangian area curve crosses m:
    - area(μ = −1/√h) < m: that set, branch "under" (λ = +1/√h)
    - area(μ = +1/√h) > m: that set, branch "over" (λ = −1/√h)
    - otherwise bisect μ; area is non-increasing in μ
    A jump of area(μ) across m ends in branch "pinned".
    """
    p = params.penalty
    tol = params.tol
    m = params.m
    tried: list[tuple[GridSet, float]] = []

    def run(mu: float) -> tuple[GridSet, float]:
        E = solve(mu)
        tried.append((E, mu))
        return E, area(E)

    E_lo, a_lo = run(-p)
    if a_lo < m - tol:
        return SearchResult(E=E_lo, mu=-p, branch="under", area_gap=m - a_lo, solves=1), tried
    if abs(a_lo - m) <= tol:
        return SearchResult(E=E_lo, mu=-p, branch="interior", area_gap=abs(a_lo - m), solves=1), tried
    E_hi, a_hi = run(p)
    if a_hi > m + tol:
        return SearchResult(E=E_hi, mu=p, branch="over", area_gap=a_hi - m, solves=2), tried
    if a_lo < a_hi:
        raise MonotonicityViolation(f"area({-p:g}) = {a_lo:g} < area({p:g}) = {a_hi:g}")
    if abs(a_hi - m) <= tol:
        return SearchResult(E=E_hi, mu=p, branch="interior", area_gap=abs(a_hi - m), solves=2), tried

    lo, hi = -p, p
    for _ in range(params.max_bisections):
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            break
        E_mid, a_mid = run(mid)
        if not (a_lo >= a_mid >= a_hi):
            raise MonotonicityViolation(
                f"area not monotone in μ: area({lo:.6g}) = {a_lo:g}, area({mid:.6g}) = {a_mid:g}, "
                f"area({hi:.6g}) = {a_hi:g}"
            )
        if abs(a_mid - m) <= tol:
            return SearchResult(E=E_mid, mu=mid, branch="interior", area_gap=abs(a_mid - m), solves=len(tried)), tried
        if a_mid > m:
            lo, E_lo, a_lo = mid, E_mid, a_mid
        else:
            hi, E_hi, a_hi = mid, E_mid, a_mid

    E, mu, a = (E_lo, lo, a_lo) if a_lo - m <= m - a_hi else (E_hi, hi, a_hi)
    return SearchResult(E=E, mu=mu, branch="pinned", area_gap=abs(a - m), solves=len(tried)), tried


def _tube_costs(sd: ScalarField, width: float, big: float) -> np.ndarray:
    """±big on cells farther than `width` from ∂F: inside forced into E, outside forced out."""
    values = np.asarray(sd.values)
    return np.where(values < -width, -big, np.where(values > width, big, 0.0))


def volume_multiplier_search(
    F: GridSet,
    params: FlowParams,
    sd: ScalarField | None = None,
    stencil: CroftonStencil | None = None,
) -> SearchResult:
    """
    Minimize F_h(·, F) by a scan over the multiplier μ of the volume term.

    The global scan is exact on its "under", "over" and "interior" branches.
    When area(μ) jumps across m (branch "pinned", e.g. a small set whose
    Lagrangian minimizers are either larger than m or empty), the scan is
    repeated on cuts confined to the band |sd^ψ_F| ≤ local_tube·√h, and the
    result is the lowest F_h among every cut tried and F itself, so
    F_h(E, F) ≤ F_h(F, F) always holds.
    """
    if sd is None:
        sd = signed_distance_field(F, params.psi, mode=params.distance_mode)
    if stencil is None:
        stencil = perimeter_weights(params.phi, params.order, params.stencil_bound)

    def global_cut(mu: float) -> GridSet:
        return min_cut_solve(unary_costs(F, params.psi, params.h, mu, sd=sd), stencil)

    found, tried = _multiplier_scan(global_cut, params)
    if found.branch != "pinned":
        return found

    width = params.local_tube * math.sqrt(params.h)
    edge_weight = 2.0 * sum(w for _, w in stencil.half()) * params.spacing
    big = 10.0 * (float(np.abs(sd.values).max()) / params.h + 2.0 * params.penalty + edge_weight) * F.spec.cell_area
    forced = _tube_costs(sd, width, big)

    def local_cut(mu: float) -> GridSet:
        base = unary_costs(F, params.psi, params.h, mu, sd=sd)
        return min_cut_solve(ScalarField(spec=F.spec, values=np.asarray(base.values) + forced), stencil)

    local, local_tried = _multiplier_scan(local_cut, params)
    # the localized result first, then F: on equal energy the earlier candidate wins
    candidates = [(local.E, local.mu), (F, found.mu)] + tried + local_tried
    energies = [step_energy(E, sd, stencil, params) for E, _ in candidates]
    best = int(np.argmin(energies))
    E, mu = candidates[best]
    gap = abs(area(E) - params.m)
    branch: Branch = "interior" if gap <= params.tol else "pinned"
    if best == 1:
        logger.info("multiplier search kept F: no cut lowers F_h (area gap %.3g)", gap)
    elif branch == "pinned":
        logger.info("multiplier search pinned at μ = %.6g, area gap %.3g", mu, gap)
    return SearchResult(
        E=E, mu=mu, branch=branch, area_gap=gap, solves=found.solves + local.solves, localized=True
    )


def dissipation(
    E: GridSet, F: GridSet, psi: AnisoNorm, sd: ScalarField | None = None
) -> float:
    """𝒟^ψ(E, F) = Δx²·Σ_{EΔF} d^ψ_F."""
    _same_spec(E, F)
    diff = E.mask ^ F.mask
    if not diff.any():
        return 0.0
    if sd is None:
        sd = signed_distance_field(F, psi, mode="exact")
    return float(np.abs(sd.values[diff]).sum()) * F.spec.cell_area


def monitored_radius(E: GridSet, phi: AnisoNorm) -> float:
    """min{r : E ⊂ r·W_φ}, i.e. the largest gauge φ°(x) over cells of E."""
    if E.is_empty():
        return 0.0
    X, Y = E.spec.cell_centers()
    edge = boundary_cells(E) & E.mask
    pts = np.stack([X[edge], Y[edge]], axis=-1)
    return float(np.max(eval_norm(dual_of(phi), pts)))


def _curvature_stats(
    E: GridSet, sd: ScalarField, params: FlowParams, diss: float
) -> tuple[float | None, float | None, float | None]:
    """(ε, λ_EL, h²ε²/𝒟) from the contours of E; None when contours degenerate."""
    sigma = params.smoothing_cells * params.spacing
    try:
        profiles = [
            contour_diag.curvature_profile(c, params.phi, sigma)
            for c in contour_diag.extract_contours(E)
        ]
    except (DegeneracyError, NoContourError) as e:
        logger.debug("curvature tracking skipped: %s", e)
        return None, None, None
    eps, _ = contour_diag.combined_deviation(profiles)
    pts = np.concatenate([pr.points for pr in profiles])
    ds = np.concatenate([pr.ds for pr in profiles])
    kphi = np.concatenate([pr.kappa_phi for pr in profiles])
    coords = E.spec.to_fractional_index(pts).T
    sd_on_curve = map_coordinates(np.asarray(sd.values), coords, order=1, mode="nearest")
    lambda_el = float(np.sum((kphi + sd_on_curve / params.h) * ds) / np.sum(ds))
    expu = params.h**2 * eps**2 / diss if diss > 0 else None
    return eps, lambda_el, expu


def step(
    F: GridSet,
    params: FlowParams,
    stencil: CroftonStencil | None = None,
    index: int = 1,
    previous_lyapunov: float | None = None,
) -> tuple[GridSet, StepReport]:
    """
    One flat-flow step E_{k+1} ∈ argmin F_h(·, E_k) with runtime checks.

    Raises DissipationViolation when P_φ(E) + 𝒟/h + penalty exceeds the
    previous Lyapunov value by more than the recorded slack, and
    DomainTooSmallError when E reaches the ring next to the fixed rim.
    """
    started = time.perf_counter()
    if F.touches_rim():
        raise DomainTooSmallError("flow state touches the grid margin")
    if stencil is None:
        stencil = perimeter_weights(params.phi, params.order, params.stencil_bound)
    sd = signed_distance_field(F, params.psi, mode=params.distance_mode)
    found = volume_multiplier_search(F, params, sd=sd, stencil=stencil)
    E = found.E
    if E.touches_rim(MARGIN_CELLS + 1):
        raise DomainTooSmallError(
            f"step {index} reached the grid margin; enlarge the domain (extent) or refine h"
        )

    perimeter = anisotropic_perimeter(E, stencil)
    a = area(E)
    diss = dissipation(E, F, params.psi, sd=sd)
    lyap = lyapunov(perimeter, a, params)
    if previous_lyapunov is None:
        previous_lyapunov = lyapunov(anisotropic_perimeter(F, stencil), area(F), params)
    slack = 0.0
    if found.branch in ("interior", "pinned"):
        slack = 2.0 * found.area_gap * params.penalty
    rounding = 1e-9 * max(1.0, abs(previous_lyapunov))
    lhs = lyap + diss / params.h
    if lhs > previous_lyapunov + slack + rounding:
        raise DissipationViolation(
            f"step {index}: P + 𝒟/h + penalty = {lhs:.10g} exceeds previous Lyapunov value "
            f"{previous_lyapunov:.10g} by more than slack {slack:.3g}"
        )

    diff = E.mask ^ F.mask
    sup_move = float(np.abs(sd.values[diff]).max()) if diff.any() else 0.0
    ratio = sup_move / math.sqrt(params.h)
    if params.linf_constant is not None and ratio > params.linf_headroom * params.linf_constant:
        logger.warning(
            "step %d: sup-move ratio %.4g exceeds %.0fx the calibrated constant %.4g",
            index, ratio, params.linf_headroom, params.linf_constant,
        )

    eps = lambda_el = expu = None
    if params.track_curvature and not E.is_empty():
        eps, lambda_el, expu = _curvature_stats(E, sd, params, diss)

    report = StepReport(
        step=index,
        t=index * params.h,
        area=a,
        perimeter=perimeter,
        dissipation=diss,
        mu=found.mu,
        branch=found.branch,
        sup_move=sup_move,
        eps=eps,
        lyapunov=lyap,
        slack=slack,
        area_gap=found.area_gap,
        radius=monitored_radius(E, params.phi),
        linf_ratio=ratio,
        lambda_el=lambda_el,
        expu_ratio=expu,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )
    return E, report


def run_flow(
    E0: GridSet,
    params: FlowParams,
    stop: StopCriteria | None = None,
    on_step: Callable[[StepReport], None] | None = None,
) -> FlowTrace:
    """Iterate `step` until max_steps or the stop criterion; keep strided snapshots."""
    stop = stop or StopCriteria()
    if E0.touches_rim():
        raise DomainTooSmallError("initial set touches the grid margin")
    stencil = perimeter_weights(params.phi, params.order, params.stencil_bound)
    a0 = area(E0)
    if abs(a0 - params.m) > 0.1 * params.m:
        logger.warning(
            "initial area %.4g is more than 10%% away from m = %.4g; the volume penalty will correct it",
            a0, params.m,
        )
    p0 = anisotropic_perimeter(E0, stencil)
    trace = FlowTrace(
        params=params,
        initial_area=a0,
        initial_perimeter=p0,
        initial_lyapunov=lyapunov(p0, a0, params),
        initial_digest=hashlib.sha256(encode_snapshot(E0)).hexdigest(),
        snapshots={0: E0},
    )
    threshold = stop.factor * params.spacing * p0
    quiet = 0
    F = E0
    previous = trace.initial_lyapunov
    for k in range(1, params.max_steps + 1):
        E, report = step(F, params, stencil=stencil, index=k, previous_lyapunov=previous)
        trace.reports.append(report)
        if on_step is not None:
            on_step(report)
        if k % params.snapshot_stride == 0:
            trace.snapshots[k] = E
        quiet = quiet + 1 if sym_diff_area(E, F) <= threshold else 0
        F, previous = E, report.lyapunov
        if quiet >= stop.patience:
            trace.stop_reason = "stationary"
            break
        if E.is_empty():
            trace.stop_reason = "vanished"
            break
    last = trace.reports[-1].step if trace.reports else 0
    trace.snapshots[last] = F
    check_iterated_dissipation(trace)
    return trace


# =============================================================================
# Trace statistics
# =============================================================================
def check_iterated_dissipation(trace: FlowTrace) -> float:
    """
    (1/h)·Σ𝒟 ≤ L(E₀) − L(E_K) + Σ slack over the whole run.

    Returns the margin (right minus left side); raises DissipationViolation if negative.
    """
    if not trace.reports:
        return 0.0
    h = trace.params.h
    lhs = sum(r.dissipation for r in trace.reports) / h
    rhs = trace.initial_lyapunov - trace.reports[-1].lyapunov + sum(r.slack for r in trace.reports)
    rounding = 1e-9 * len(trace.reports) * max(1.0, abs(trace.initial_lyapunov))
    if lhs > rhs + rounding:
        raise DissipationViolation(f"iterated dissipation {lhs:.10g} exceeds energy drop {rhs:.10g}")
    return rhs - lhs


class LagrangeStatistics(BaseModel):
    off_constraint_fraction: float
    saturated_fraction: float
    h_lambda_squared_sum: float
    mean_multiplier_gap: float | None
    terminal_area_error: float


def lagrange_statistics(trace: FlowTrace) -> LagrangeStatistics:
    """Volume-control summary: how often |E_k| ≠ m and how large λ = −μ was."""
    reps = trace.reports
    if not reps:
        return LagrangeStatistics(
            off_constraint_fraction=0.0,
            saturated_fraction=0.0,
            h_lambda_squared_sum=0.0,
            mean_multiplier_gap=None,
            terminal_area_error=abs(trace.initial_area - trace.params.m) / trace.params.m,
        )
    tol = trace.params.tol
    off = sum(1 for r in reps if abs(r.area - trace.params.m) > tol)
    sat = sum(1 for r in reps if r.branch in ("under", "over"))
    gaps = [abs(r.lambda_el - (-r.mu)) for r in reps if r.lambda_el is not None]
    return LagrangeStatistics(
        off_constraint_fraction=off / len(reps),
        saturated_fraction=sat / len(reps),
        h_lambda_squared_sum=float(sum(trace.params.h * r.mu**2 for r in reps)),
        mean_multiplier_gap=float(np.mean(gaps)) if gaps else None,
        terminal_area_error=abs(reps[-1].area - trace.params.m) / trace.params.m,
    )


def holder_constant(trace: FlowTrace, pairs: int = 200, seed: int = 0) -> float:
    """max over snapshot pairs of |E(s)ΔE(t)| / (P_φ(E₀)·max(h, |t−s|)^½)."""
    steps = sorted(trace.snapshots)
    if len(steps) < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    h = trace.params.h
    best = 0.0
    for _ in range(pairs):
        i, j = sorted(rng.choice(len(steps), size=2, replace=False))
        s, t = steps[i] * h, steps[j] * h
        moved = sym_diff_area(trace.snapshots[steps[i]], trace.snapshots[steps[j]])
        best = max(best, moved / (trace.initial_perimeter * math.sqrt(max(h, t - s))))
    return best


def calibrate_linf_constant(params: FlowParams, extent: float = 1.5, steps: int = 5) -> float:
    """
    Constant c in sup_{EΔF} d^ψ_F ≤ c√h measured on the stationary Wulff run.

    Floored at one cell diagonal per √h so a perfectly still run does not
    calibrate to zero.
    """
    r = math.sqrt(params.m / wulff_area(params.phi))
    spec = GridSpec.around((0.0, 0.0), extent * r * _extent_factor(params.phi), params.spacing)
    E = rasterize([wulff_polygon(params.phi, (0.0, 0.0), r, 512)], spec)
    calm = params.model_copy(update={"max_steps": steps, "linf_constant": None, "track_curvature": False})
    trace = run_flow(E, calm, StopCriteria(factor=0.0, patience=steps + 1))
    observed = max((rep.linf_ratio for rep in trace.reports), default=0.0)
    return max(observed, math.sqrt(2.0) * params.spacing / math.sqrt(params.h))


def _extent_factor(phi: AnisoNorm) -> float:
    """Largest support value of W_φ, so a centred square grid contains the Wulff shape."""
    pts = wulff_polygon(phi, (0.0, 0.0), 1.0, 256)
    return float(np.abs(pts).max())


# =============================================================================
# Trace file
# =============================================================================
CSV_COLUMNS = [
    "step", "t", "area", "perimeter", "dissipation", "mu", "branch",
    "sup_move", "eps", "lyapunov", "slack", "radius", "lambda_el",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace_csv(trace: FlowTrace, path: Path | str, record_wall_time: bool = False) -> Path:
    """One metrics row per step; wall_ms only on request so reruns stay byte-identical."""
    columns = CSV_COLUMNS + (["wall_ms"] if record_wall_time else [])
    p = Path(path)
    with open(p, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for rep in trace.reports:
            row = rep.model_dump()
            writer.writerow([_fmt(row[c]) for c in columns])
    return p
