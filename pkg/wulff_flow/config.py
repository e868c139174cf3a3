"""
Scenario configuration (JSON, schema "wulff-flow/1").

Every section is a pydantic model with unknown keys rejected; validation
failures surface as ConfigError carrying the dotted key path.
"""

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .anisotropy import AnisoNorm, wulff_area, wulff_polygon
from .contour_diag import normal_graph_curve
from .errors import ConfigError, EllipticityError, ResolutionError
from .grid_set import GridSpec
from .mm_stepper import FlowParams, StopCriteria

SCHEMA_VERSION = "wulff-flow/1"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =============================================================================
# Norms and grid
# =============================================================================
class NormSpec(_Strict):
    """{"family": "fourier", "coeffs": [1.0, 0.2], "rotation": 0.0}"""

    family: Literal["euclidean", "ellipse", "fourier", "sampled"] = "euclidean"
    a: float = Field(default=1.0, gt=0)
    b: float = Field(default=1.0, gt=0)
    coeffs: list[float] = Field(default_factory=lambda: [1.0])
    values: list[float] = Field(default_factory=list)
    rotation: float = 0.0

    @model_validator(mode="after")
    def _elliptic(self) -> "NormSpec":
        try:
            self.build()
        except (EllipticityError, ResolutionError) as e:
            raise ValueError(f"ellipticity check failed: {e}") from e
        return self

    def build(self) -> AnisoNorm:
        return AnisoNorm(
            family=self.family,
            a=self.a,
            b=self.b,
            coeffs=tuple(self.coeffs),
            values=tuple(self.values),
            rotation=self.rotation,
        )


class GridConfig(_Strict):
    spacing: float = Field(..., gt=0, description="Δx")
    extent: float = Field(..., gt=0, description="half-width of the square domain")
    center: tuple[float, float] = (0.0, 0.0)

    def build(self) -> GridSpec:
        return GridSpec.around(self.center, self.extent, self.spacing)


class FlowConfig(_Strict):
    h: float = Field(..., gt=0)
    m: float | None = Field(default=None, gt=0, description="target area, default: initial shape area")
    max_steps: int = Field(default=500, ge=1)
    snapshot_stride: int = Field(default=10, ge=1)
    order: Literal[8, 16, 32] = 16
    stencil_bound: float = Field(default=0.02, gt=0, description="worst directional Crofton error accepted")
    volume_tol: float | None = Field(default=None, gt=0)
    distance_mode: Literal["exact", "fast", "auto"] = "auto"
    stop_factor: float = Field(default=1e-2, ge=0)
    stop_patience: int = Field(default=10, ge=1)
    track_curvature: bool = False
    smoothing_cells: float = Field(default=3.0, gt=0)
    calibrate_linf: bool = False
    local_tube: float = Field(default=1.0, gt=0, description="localized search band half-width in units of √h")


# =============================================================================
# Initial shapes
# =============================================================================
class Perturbation(_Strict):
    """Normal graph f(θ) = amplitude·cos(mode·θ) plus optional seeded random modes."""

    amplitude: float = 0.0
    mode: int = Field(default=3, ge=0)
    random_modes: int = Field(default=0, ge=0)
    random_amplitude: float = Field(default=0.0, ge=0)

    def sample(self, theta: NDArray, rng: np.random.Generator) -> NDArray:
        f = self.amplitude * np.cos(self.mode * theta)
        for k in range(2, 2 + self.random_modes):
            a, b = rng.normal(scale=self.random_amplitude / k, size=2)
            f = f + a * np.cos(k * theta) + b * np.sin(k * theta)
        return f


class WulffShapeSpec(_Strict):
    kind: Literal["wulff"] = "wulff"
    center: tuple[float, float] = (0.0, 0.0)
    radius: float | None = Field(default=None, gt=0)
    area: float | None = Field(default=None, gt=0)
    perturbation: Perturbation | None = None

    def rings(self, phi: AnisoNorm, rng: np.random.Generator, n: int = 1024) -> list[NDArray]:
        if self.radius is not None:
            r = self.radius
        elif self.area is not None:
            r = math.sqrt(self.area / wulff_area(phi))
        else:
            r = 1.0
        if self.perturbation is None:
            return [wulff_polygon(phi, self.center, r, n)]
        theta = 2.0 * np.pi * np.arange(n) / n
        return [normal_graph_curve(phi, self.perturbation.sample(theta, rng), self.center, r)]


class EllipseShapeSpec(_Strict):
    kind: Literal["ellipse"] = "ellipse"
    center: tuple[float, float] = (0.0, 0.0)
    a: float = Field(..., gt=0)
    b: float = Field(..., gt=0)
    rotation: float = 0.0

    def rings(self, phi: AnisoNorm, rng: np.random.Generator, n: int = 1024) -> list[NDArray]:
        t = 2.0 * np.pi * np.arange(n) / n
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x, y = self.a * np.cos(t), self.b * np.sin(t)
        return [np.stack([self.center[0] + c * x - s * y, self.center[1] + s * x + c * y], axis=-1)]


class DumbbellShapeSpec(_Strict):
    """Two squares of side `lobe` centred at (±separation/2, 0) joined by a neck."""

    kind: Literal["dumbbell"] = "dumbbell"
    center: tuple[float, float] = (0.0, 0.0)
    lobe: float = Field(default=1.0, gt=0)
    separation: float = Field(default=1.6, gt=0)
    neck_width: float = Field(default=0.2, gt=0)

    @model_validator(mode="after")
    def _geometry(self) -> "DumbbellShapeSpec":
        if self.neck_width >= self.lobe:
            raise ValueError("neck_width must be smaller than the lobe side")
        if self.separation <= self.lobe:
            raise ValueError("lobes overlap: separation must exceed the lobe side")
        return self

    def rings(self, phi: AnisoNorm, rng: np.random.Generator, n: int = 1024) -> list[NDArray]:
        cx, cy = self.center
        half, gap, neck = 0.5 * self.lobe, 0.5 * self.separation, 0.5 * self.neck_width
        outer = gap + half
        inner = gap - half
        pts = [
            (-outer, -half), (-inner, -half), (-inner, -neck), (inner, -neck),
            (inner, -half), (outer, -half), (outer, half), (inner, half),
            (inner, neck), (-inner, neck), (-inner, half), (-outer, half),
        ]
        return [np.array([(cx + x, cy + y) for x, y in pts])]


class PolygonShapeSpec(_Strict):
    kind: Literal["polygon"] = "polygon"
    vertices: list[tuple[float, float]] = Field(..., min_length=3)
    holes: list[list[tuple[float, float]]] = Field(default_factory=list)

    def rings(self, phi: AnisoNorm, rng: np.random.Generator, n: int = 1024) -> list[NDArray]:
        return [np.asarray(self.vertices, dtype=float)] + [np.asarray(h, dtype=float) for h in self.holes]


PartSpec = Annotated[
    Union[WulffShapeSpec, EllipseShapeSpec, DumbbellShapeSpec, PolygonShapeSpec],
    Field(discriminator="kind"),
]


class UnionShapeSpec(_Strict):
    """Disjoint union; overlapping parts cancel under the even-odd rule."""

    kind: Literal["union"] = "union"
    parts: list[PartSpec] = Field(..., min_length=1)

    def rings(self, phi: AnisoNorm, rng: np.random.Generator, n: int = 1024) -> list[NDArray]:
        return [ring for part in self.parts for ring in part.rings(phi, rng, n)]


ShapeSpec = Annotated[
    Union[WulffShapeSpec, EllipseShapeSpec, DumbbellShapeSpec, PolygonShapeSpec, UnionShapeSpec],
    Field(discriminator="kind"),
]


# =============================================================================
# Diagnostics and output
# =============================================================================
class ReflectionConfig(_Strict):
    """Tight half-spaces of D for the root system Q_{2m} (or explicit normals)."""

    m: int | None = Field(default=2, ge=1)
    normals: list[tuple[float, float]] | None = None
    D: list[tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.0)])
    strict: bool = False


class SweepConfig(_Strict):
    amplitudes: list[float] = Field(default_factory=lambda: [0.02, 0.04, 0.08, 0.16])
    mode: int = Field(default=3, ge=2)
    samples: int = Field(default=4096, ge=64)


class DiagnosticsConfig(_Strict):
    alexandrov: bool = True
    gauss_bonnet: bool = True
    reflection: ReflectionConfig | None = None
    rate_fit: bool = True
    rate_fit_skip: float = Field(default=0.1, ge=0, lt=1, description="transient fraction excluded")
    sweep: SweepConfig = Field(default_factory=SweepConfig)


class AcceptanceConfig(_Strict):
    """Checks that turn a finished run into a failure (exit code 2) when they do not hold."""

    components: int | None = Field(default=None, ge=1, description="expected d of the final Wulff fit")
    rate_fit: bool = False
    reflection: bool = False
    containment: bool = Field(default=False, description="final Wulff union inside D ⊕ rW_φ dilated by 2Δx")
    terminal_area_error: float | None = Field(default=None, gt=0, description="max |E_K| − m relative to m")


class OutputConfig(_Strict):
    directory: str = "runs"
    frames: bool = True
    record_wall_time: bool = False


class ScenarioConfig(_Strict):
    schema_version: Literal["wulff-flow/1"]
    name: str = "scenario"
    phi: NormSpec = Field(default_factory=NormSpec)
    psi: NormSpec = Field(default_factory=NormSpec)
    grid: GridConfig
    flow: FlowConfig
    shape: ShapeSpec
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    acceptance: AcceptanceConfig = Field(default_factory=AcceptanceConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0

    @model_validator(mode="after")
    def _coupling(self) -> "ScenarioConfig":
        if self.grid.spacing > self.flow.h / 4.0:
            raise ValueError(
                f"grid/time coupling violated: grid.spacing = {self.grid.spacing:g} > "
                f"flow.h/4 = {self.flow.h / 4.0:g}"
            )
        tol = self.flow.volume_tol
        if tol is not None and tol > self.grid.spacing**2 * (1 + 1e-12):
            raise ConfigError(
                f"{tol:g} exceeds grid.spacing² = {self.grid.spacing**2:g}", key_path="flow.volume_tol"
            )
        return self

    def initial_rings(self, n: int = 1024) -> list[NDArray]:
        rng = np.random.default_rng(self.seed)
        return self.shape.rings(self.phi.build(), rng, n)

    def flow_params(self, m: float, linf_constant: float | None = None) -> FlowParams:
        """Numerics of the flow; a rejected combination surfaces as ConfigError under "flow"."""
        f = self.flow
        try:
            return FlowParams(
                h=f.h,
                m=m,
                phi=self.phi.build(),
                psi=self.psi.build(),
                spacing=self.grid.spacing,
                order=f.order,
                stencil_bound=f.stencil_bound,
                volume_tol=f.volume_tol,
                max_steps=f.max_steps,
                local_tube=f.local_tube,
                distance_mode=f.distance_mode,
                snapshot_stride=f.snapshot_stride,
                track_curvature=f.track_curvature,
                smoothing_cells=f.smoothing_cells,
                linf_constant=linf_constant,
            )
        except ValidationError as e:
            raise ConfigError(e.errors()[0]["msg"], key_path="flow") from e

    def stop_criteria(self) -> StopCriteria:
        return StopCriteria(factor=self.flow.stop_factor, patience=self.flow.stop_patience)


# =============================================================================
# Loading
# =============================================================================
def _key_path(e: ValidationError) -> str:
    err = e.errors()[0]
    return ".".join(str(part) for part in err["loc"]) or "<root>"


def parse_config(data: dict) -> ScenarioConfig:
    """Validate a decoded JSON document."""
    if isinstance(data, dict) and data.get("schema_version") not in (None, SCHEMA_VERSION):
        raise ConfigError(
            f"unsupported schema version {data.get('schema_version')!r}, expected {SCHEMA_VERSION!r}",
            key_path="schema_version",
        )
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(e.errors()[0]["msg"], key_path=_key_path(e)) from e


def load_config(path: Path | str) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}") from e
    return parse_config(data)
