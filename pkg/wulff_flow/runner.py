"""
Scenario orchestration: stages, artifacts, rate fits, frames and batches.

A scenario run writes into <output.directory>/<name>/:
    trace.csv                 one metrics row per step
    snapshots/step_NNNNN.wfgrid
    alexandrov/step_NNNNN.json
    reflection.json           when a half-space family is configured
    wulff_fit.json, rate_fit.json
    frames/step_NNNNN.svg
    events.jsonl              audit trail
    manifest.json             stage history and sha256 of every file
"""

import asyncio
import hashlib
import json
import logging
import math
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from matplotlib import rc_context
from matplotlib.figure import Figure
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import linregress

from .anisotropy import AnisoNorm
from .audit import AuditLogger
from .config import ScenarioConfig
from .contour_diag import (
    Contour,
    alexandrov_report,
    extract_contours,
    fit_wulff_union,
    normal_graph_curve,
    wulff_union_polygons,
)
from .errors import (
    AcceptanceFailure,
    DegeneracyError,
    DomainTooSmallError,
    NoContourError,
    WindowError,
    WulffFlowError,
)
from .grid_set import GridSet, area, hausdorff_sup_distance, rasterize
from .mm_stepper import FlowTrace, calibrate_linf_constant, holder_constant, lagrange_statistics, run_flow, write_trace_csv
from .settings import load_settings
from .snapshot import write_snapshot
from .symmetry import (
    DirectionSet,
    HalfSpace,
    check_distance_reflection,
    check_family,
    containment_bound,
    family_report,
    halfspace_family,
    monitor_reflection,
    root_system,
    within_bound,
)

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 8
MIN_R_SQUARED = 0.8


# =============================================================================
# Records
# =============================================================================
class RateFit(BaseModel):
    """y ≈ C·exp(−t/C₀) fitted on (t, log y)."""

    series: str
    C: float | None = None
    C0: float | None = None
    r_squared: float = 0.0
    window: tuple[float, float] = (0.0, 0.0)
    points: int = 0
    accepted: bool = False
    stationary: bool = False
    note: str = ""


class RunManifest(BaseModel):
    scenario: str
    schema_version: str
    status: str = "running"
    started: str = Field(default_factory=lambda: datetime.now().isoformat())
    finished: str | None = None
    failed_stage: str | None = None
    error_type: str | None = None
    error_message: str | None = None
    history: list[dict[str, Any]] = Field(default_factory=list)
    files: dict[str, str] = Field(default_factory=dict)
    summary: dict[str, Any] = Field(default_factory=dict)


class ScenarioResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    directory: Path
    manifest: RunManifest
    trace: FlowTrace | None = None
    rate_fit: RateFit | None = None
    wulff_fit: dict[str, Any] | None = None


class SweepRow(BaseModel):
    amplitude: float
    eps: float
    gap: float
    ratio: float | None


class SweepResult(BaseModel):
    rows: list[SweepRow]
    slope: float
    r_squared: float


# =============================================================================
# Rate fitting
# =============================================================================
def fit_exponential_rate(
    t: Sequence[float],
    y: Sequence[float],
    window: tuple[float, float] | None = None,
    series: str = "series",
) -> RateFit:
    """Least squares on (t, log y) inside window; rejected when R² < 0.8 or the slope is not negative."""
    tt = np.asarray(t, dtype=float)
    yy = np.asarray(y, dtype=float)
    if window is not None:
        keep = (tt >= window[0]) & (tt <= window[1])
        tt, yy = tt[keep], yy[keep]
    if tt.size < MIN_FIT_POINTS:
        raise WindowError(f"rate fit needs at least {MIN_FIT_POINTS} points, window has {tt.size}")
    if np.any(yy <= 0.0):
        raise WindowError("rate fit window contains nonpositive values")
    res = linregress(tt, np.log(yy))
    r2 = float(res.rvalue**2)
    slope = float(res.slope)
    accepted = slope < 0.0 and r2 >= MIN_R_SQUARED
    return RateFit(
        series=series,
        C=float(math.exp(res.intercept)),
        C0=-1.0 / slope if slope < 0.0 else None,
        r_squared=r2,
        window=(float(tt[0]), float(tt[-1])),
        points=int(tt.size),
        accepted=accepted,
        note="" if accepted else "non-exponential: R² below 0.8 or no decay",
    )


def convergence_series(trace: FlowTrace, target: GridSet, psi: AnisoNorm) -> tuple[list[float], list[float]]:
    """(t, sup_{E(t)ΔE_fit} d^ψ_{E_fit}) over the stored snapshots."""
    h = trace.params.h
    steps = sorted(trace.snapshots)
    return [k * h for k in steps], [hausdorff_sup_distance(trace.snapshots[k], target, psi) for k in steps]


def fit_convergence_rate(
    trace: FlowTrace, target: GridSet, psi: AnisoNorm, skip_fraction: float = 0.1
) -> RateFit:
    """Exponential fit of the convergence series after the transient; stationary runs are flagged."""
    t, y = convergence_series(trace, target, psi)
    t_end = t[-1] if t else 0.0
    pts = [(ti, yi) for ti, yi in zip(t, y) if ti >= skip_fraction * t_end and yi > 0.0]
    if len(pts) < MIN_FIT_POINTS:
        return RateFit(
            series="sup_d_psi_to_fit",
            window=(skip_fraction * t_end, t_end),
            points=len(pts),
            stationary=True,
            note="too few nonzero distances after the transient: run is stationary at grid scale",
        )
    ts, ys = zip(*pts)
    return fit_exponential_rate(ts, ys, series="sup_d_psi_to_fit")


# =============================================================================
# Frames
# =============================================================================
def _halfspace_segment(H: HalfSpace, bounds: tuple[float, float, float, float]) -> np.ndarray:
    x0, y0, x1, y1 = bounds
    span = math.hypot(x1 - x0, y1 - y0)
    base = np.asarray(H.nu) * H.s
    tangent = np.array([-H.nu[1], H.nu[0]])
    return np.stack([base - span * tangent, base + span * tangent])


SVG_RC = {"svg.hashsalt": "wulff-flow", "svg.fonttype": "none"}


def _draw_frame(
    E: GridSet,
    k: int,
    h: float,
    last: bool,
    fit_polygons: Sequence[np.ndarray],
    halfspaces: Sequence[HalfSpace],
    bound: np.ndarray | None,
) -> Figure:
    spec = E.spec
    x0, y0, x1, y1 = spec.bounds()
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    ax.set_title(f"step {k}  t = {k * h:.4g}")
    if E.is_empty():
        ax.text(0.5, 0.5, "empty set", transform=ax.transAxes, ha="center", va="center", alpha=0.3, fontsize=24)
    else:
        X, Y = spec.cell_centers()
        ax.contourf(X, Y, E.mask.astype(float), levels=[0.5, 1.5], colors=["#4477aa"])
    if last:
        for poly in fit_polygons:
            closed = np.vstack([poly, poly[:1]])
            ax.plot(closed[:, 0], closed[:, 1], color="#ee6677", linewidth=1.0)
        if bound is not None:
            closed = np.vstack([bound, bound[:1]])
            ax.plot(closed[:, 0], closed[:, 1], color="#228833", linestyle="--", linewidth=1.0)
    for H in halfspaces:
        seg = _halfspace_segment(H, spec.bounds())
        ax.plot(seg[:, 0], seg[:, 1], color="#666666", linewidth=0.6)
    return fig


def export_frames(
    trace: FlowTrace,
    out_dir: Path | str,
    phi: AnisoNorm,
    fit_polygons: Sequence[np.ndarray] = (),
    halfspaces: Sequence[HalfSpace] = (),
    bound: np.ndarray | None = None,
) -> list[Path]:
    """One SVG per snapshot: filled set, fitted Wulff outlines, half-space lines; byte-stable."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    steps = sorted(trace.snapshots)
    with rc_context(SVG_RC):
        for k in steps:
            fig = _draw_frame(
                trace.snapshots[k], k, trace.params.h, k == steps[-1], fit_polygons, halfspaces, bound
            )
            path = out / f"step_{k:05d}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            written.append(path)
    return written


# =============================================================================
# Scenario stages
# =============================================================================
def _write_json(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _family(cfg: ScenarioConfig) -> list[HalfSpace]:
    rc = cfg.diagnostics.reflection
    if rc is None:
        return []
    if rc.normals:
        dirs = DirectionSet(directions=tuple((float(a), float(b)) for a, b in rc.normals))
    else:
        dirs = root_system(rc.m or 2)
    return halfspace_family(rc.D, dirs)


def check_acceptance(cfg: ScenarioConfig, summary: dict[str, Any]) -> None:
    """Raise AcceptanceFailure listing every configured check the run summary misses."""
    acc = cfg.acceptance
    failures = []
    if acc.components is not None and summary["components"] != acc.components:
        failures.append(f"final fit has d = {summary['components']}, expected {acc.components}")
    if acc.rate_fit and not summary["rate_fit_accepted"]:
        failures.append("convergence series is not exponential")
    if acc.reflection and summary["reflection_preserved"] is False:
        failures.append("reflection family violated along the flow")
    if acc.containment and summary["contained_in_bound"] is not True:
        failures.append("final Wulff union leaves the containment bound")
    if acc.terminal_area_error is not None:
        err = summary["lagrange"]["terminal_area_error"]
        if err > acc.terminal_area_error:
            failures.append(f"terminal area error {err:.3%} above {acc.terminal_area_error:.3%}")
    if failures:
        raise AcceptanceFailure("; ".join(failures))


def initial_set(cfg: ScenarioConfig) -> tuple[GridSet, float]:
    """Rasterized initial set and the target area (configured or measured)."""
    spec = cfg.grid.build()
    E0 = rasterize(cfg.initial_rings(), spec)
    m = cfg.flow.m if cfg.flow.m is not None else area(E0)
    return E0, m


class _Stages:
    """Run named stages in order, recording each in the manifest and the audit log."""

    def __init__(self, manifest: RunManifest, audit: AuditLogger):
        self.manifest = manifest
        self.audit = audit

    def run(self, name: str, fn: Callable[[], Any]) -> Any:
        self.audit.log("stage_start", {"stage": name})
        self.manifest.history.append({"stage": name, "status": "started", "timestamp": datetime.now().isoformat()})
        started = time.perf_counter()
        try:
            result = fn()
        except Exception as e:
            self.manifest.status = "failed"
            self.manifest.failed_stage = name
            self.manifest.error_type = type(e).__name__
            self.manifest.error_message = str(e)
            self.manifest.history.append({"stage": name, "status": "failed", "timestamp": datetime.now().isoformat()})
            self.audit.log("stage_failed", {"stage": name, "error_type": type(e).__name__, "error": str(e)})
            raise
        self.manifest.history.append({"stage": name, "status": "completed", "timestamp": datetime.now().isoformat()})
        self.audit.log("stage_complete", {"stage": name, "duration_ms": (time.perf_counter() - started) * 1000})
        return result


def run_scenario(cfg: ScenarioConfig, out_dir: Path | str | None = None) -> ScenarioResult:
    """
    Run one scenario end to end: setup, flow, trace, diagnostics, fit, frames.

    A failing stage is written to the manifest (failed_stage, error) before
    the exception propagates.
    """
    directory = Path(out_dir) if out_dir is not None else Path(cfg.output.directory) / cfg.name
    directory.mkdir(parents=True, exist_ok=True)
    audit = AuditLogger(directory, scenario=cfg.name)
    manifest = RunManifest(scenario=cfg.name, schema_version=cfg.schema_version)
    stages = _Stages(manifest, audit)
    files: list[Path] = []
    result = ScenarioResult(directory=directory, manifest=manifest)
    phi, psi = cfg.phi.build(), cfg.psi.build()
    family = _family(cfg)

    try:
        def setup():
            E0, m = initial_set(cfg)
            return E0, m, cfg.flow_params(m)

        E0, m, params = stages.run("setup", setup)
        if cfg.flow.calibrate_linf:
            linf = stages.run("calibrate", lambda: calibrate_linf_constant(params))
            params = params.model_copy(update={"linf_constant": linf})

        def on_step(rep):
            audit.log("step", {"step": rep.step, "area": rep.area, "lyapunov": rep.lyapunov, "branch": rep.branch})

        trace = stages.run("flow", lambda: run_flow(E0, params, cfg.stop_criteria(), on_step=on_step))
        result.trace = trace

        def write_trace():
            files.append(write_trace_csv(trace, directory / "trace.csv", cfg.output.record_wall_time))
            snap_dir = directory / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            for k, E in sorted(trace.snapshots.items()):
                files.append(write_snapshot(E, snap_dir / f"step_{k:05d}.wfgrid"))

        stages.run("trace", write_trace)

        def diagnostics():
            for k, E in sorted(trace.snapshots.items()):
                if not cfg.diagnostics.alexandrov or E.is_empty():
                    continue
                try:
                    report = alexandrov_report(E, phi, m, sigma=cfg.flow.smoothing_cells * cfg.grid.spacing)
                    doc = report.to_json_dict(step=k)
                    if not cfg.diagnostics.gauss_bonnet:
                        doc.pop("gauss_bonnet")
                except (DegeneracyError, NoContourError) as e:
                    doc = {"step": k, "error": str(e)}
                files.append(_write_json(directory / "alexandrov" / f"step_{k:05d}.json", doc))
            if family:
                series = monitor_reflection(trace, family)
                files.append(_write_json(directory / "reflection.json", series.model_dump()))
                return series
            return None

        reflection = stages.run("diagnostics", diagnostics)

        def fit():
            if trace.final.is_empty():
                files.append(_write_json(directory / "wulff_fit.json", {"d": 0, "note": "final set is empty"}))
                return None, [], None
            contours = extract_contours(trace.final)
            wf = fit_wulff_union(contours, phi, m)
            polys = wulff_union_polygons(wf, phi)
            rate = None
            if cfg.diagnostics.rate_fit:
                try:
                    target = GridSet.empty(trace.final.spec)
                    for poly in polys:
                        target = target.union(rasterize([poly], trace.final.spec))
                except DomainTooSmallError:
                    rate = RateFit(series="sup_d_psi_to_fit", note="fitted Wulff union leaves the grid")
                else:
                    rate = fit_convergence_rate(trace, target, psi, cfg.diagnostics.rate_fit_skip)
            files.append(_write_json(directory / "wulff_fit.json", wf.model_dump()))
            if rate is not None:
                files.append(_write_json(directory / "rate_fit.json", rate.model_dump()))
            return wf, polys, rate

        wf, polys, rate = stages.run("fit", fit)
        result.rate_fit = rate
        result.wulff_fit = wf.model_dump() if wf is not None else None

        bound = None
        contained = None
        if cfg.diagnostics.reflection is not None:
            bound = containment_bound(cfg.diagnostics.reflection.D, m, phi)
            contained = within_bound(polys, bound, 2.0 * cfg.grid.spacing) if polys else None

        if cfg.output.frames:
            frames = stages.run(
                "frames",
                lambda: export_frames(trace, directory / "frames", phi, polys, family, bound),
            )
            files.extend(frames)

        stats = lagrange_statistics(trace)
        manifest.summary = {
            "steps": len(trace.reports),
            "stop_reason": trace.stop_reason,
            "m": m,
            "final_area": area(trace.final),
            "components": wf.d if wf is not None else 0,
            "lagrange": stats.model_dump(),
            "holder_constant": holder_constant(trace),
            "rate_fit_accepted": rate.accepted if rate is not None else None,
            "reflection_preserved": reflection.preserved if reflection is not None else None,
            "contained_in_bound": contained,
            "initial_digest": trace.initial_digest,
        }
        stages.run("acceptance", lambda: check_acceptance(cfg, manifest.summary))
        manifest.status = "completed"
    finally:
        manifest.finished = datetime.now().isoformat()
        manifest.files = {str(p.relative_to(directory)): _sha256(p) for p in files if p.exists()}
        _write_json(directory / "manifest.json", manifest.model_dump())
        audit.log("scenario_" + manifest.status, {"failed_stage": manifest.failed_stage})
    return result


# =============================================================================
# Sweeps and checks
# =============================================================================
def alexandrov_sweep(
    phi: AnisoNorm, amplitudes: Sequence[float], mode: int = 3, samples: int = 4096
) -> SweepResult:
    """Perimeter gap against ε for f = ε₀·cos(mode·θ) normal graphs over W_φ; log-log slope ≈ 2."""
    rows = []
    theta = 2.0 * np.pi * np.arange(samples) / samples
    for a in amplitudes:
        curve = normal_graph_curve(phi, a * np.cos(mode * theta))
        contour = Contour.from_points(curve, n=samples, is_hole=False)
        rep = alexandrov_report([contour], phi)
        rows.append(SweepRow(amplitude=float(a), eps=rep.eps, gap=rep.gap, ratio=rep.ratio))
    fit = linregress(np.log([r.eps for r in rows]), np.log([r.gap for r in rows]))
    return SweepResult(rows=rows, slope=float(fit.slope), r_squared=float(fit.rvalue**2))


def reflection_check(cfg: ScenarioConfig, with_flow: bool = False) -> dict[str, Any]:
    """(**)_{D,𝒫} and the distance comparison on the initial set, optionally along the flow."""
    family = _family(cfg)
    if not family:
        raise WulffFlowError("reflection-check needs diagnostics.reflection in the config")
    E0, m = initial_set(cfg)
    strict = cfg.diagnostics.reflection.strict
    checks = check_family(E0, family, strict=strict)
    psi = cfg.psi.build()
    distance = [check_distance_reflection(E0, H, psi) for H in family]
    out: dict[str, Any] = {
        "initial": family_report(checks),
        "distance": [{"nu": list(H.nu), "s": H.s, "ok": ok, "excess": excess} for H, (ok, excess) in zip(family, distance)],
    }
    if with_flow:
        trace = run_flow(E0, cfg.flow_params(m), cfg.stop_criteria())
        out["flow"] = monitor_reflection(trace, family).model_dump()
    return out


# =============================================================================
# Batches
# =============================================================================
async def run_batch(
    configs: Sequence[ScenarioConfig], max_workers: int | None = None
) -> list[ScenarioResult | BaseException]:
    """Run scenarios concurrently, one worker thread each, capped by WULFF_THREADS."""
    limit = max_workers or load_settings().threads
    gate = asyncio.Semaphore(limit)

    async def one(cfg: ScenarioConfig):
        async with gate:
            return await asyncio.to_thread(run_scenario, cfg)

    return await asyncio.gather(*(one(c) for c in configs), return_exceptions=True)
