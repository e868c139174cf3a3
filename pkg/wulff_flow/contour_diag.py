"""
Boundary curves of grid sets and the curvature diagnostics built on them.

- extract_contours: marching squares on a lightly smoothed indicator
- curvature_profile: κ, κ^φ = κ(γ+γ″)(θ), averages and the deviation ε
- gauss_bonnet: ∮ κ^φ dP_φ, equal to ±2|W_φ| on closed curves
- fit_wulff_union: equal-radius Wulff union plus normal graphs over it
- alexandrov_report: deviation ε against the perimeter gap |P_φ(E) − P_d|
- area_expansion_check / perimeter_expansion_defect: exact area identity and
  the quadratic perimeter defect of normal perturbations of W_φ

Orientation convention: E lies to the left of every contour, so outer
boundaries run counter-clockwise and holes clockwise; the outward normal of E
at tangent t is (t_y, −t_x).
"""

import logging
import math
from typing import Any, Sequence

import numpy as np
import shapely
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.ndimage import gaussian_filter, gaussian_filter1d
from scipy.optimize import minimize
from skimage import measure

from .anisotropy import (
    AnisoNorm,
    cahn_hoffman,
    dual_of,
    eval_norm,
    polygon_area,
    polygon_perimeter,
    wulff_area,
)
from .errors import DegeneracyError, NoContourError, SmallnessViolationError
from .grid_set import GridSet

logger = logging.getLogger(__name__)

MIN_PROFILE_SAMPLES = 32
MAX_COMPONENTS = 20
FAR_FROM_CRITICAL = 0.25


# =============================================================================
# Domain types
# =============================================================================
class Contour(BaseModel):
    """Closed polyline (last vertex not repeated) with E on its left."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    is_hole: bool = False
    spacing: float = Field(..., gt=0, description="target vertex spacing")

    @field_validator("points", mode="before")
    @classmethod
    def _as_array(cls, v):
        arr = np.array(v, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
            raise ValueError("contour needs at least 3 points of shape (n, 2)")
        arr.setflags(write=False)
        return arr

    @classmethod
    def from_points(
        cls, points: ArrayLike, n: int | None = None, is_hole: bool | None = None
    ) -> "Contour":
        """Resample a closed curve to n points uniform in arclength; orientation is kept."""
        pts = np.asarray(points, dtype=float)
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        n = n or pts.shape[0]
        res = _resample_closed(pts, n)
        hole = polygon_area(res) < 0 if is_hole is None else is_hole
        length = float(np.sum(np.hypot(*np.diff(np.vstack([res, res[:1]]), axis=0).T)))
        return cls(points=res, is_hole=hole, spacing=length / n)

    @property
    def signed_area(self) -> float:
        return polygon_area(self.points)

    @property
    def length(self) -> float:
        closed = np.vstack([self.points, self.points[:1]])
        return float(np.sum(np.hypot(*np.diff(closed, axis=0).T)))

    def reversed(self) -> "Contour":
        return Contour(points=self.points[::-1], is_hole=not self.is_hole, spacing=self.spacing)

    def scaled(self, t: float) -> "Contour":
        return Contour(points=self.points * t, is_hole=self.is_hole, spacing=self.spacing * t)


class CurvatureProfile(BaseModel):
    """Per-sample curvature data along one contour and its averages."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    s: np.ndarray
    ds: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    kappa_phi: np.ndarray
    mean_kappa_phi: float
    weighted_mean_kappa_phi: float
    eps: float
    winding: int
    sigma: float
    is_hole: bool


class WulffComponent(BaseModel):
    center: tuple[float, float]
    radius: float
    area: float
    holes: int = 0
    fittable: bool = True
    f_sup: float | None = None
    f_c1: float | None = None


class WulffFit(BaseModel):
    """Union ∪_j W_φ(x_j, r) with d·r²·|W_φ| equal to the fitted area."""

    d: int
    radius: float
    target_radius: float | None = None
    components: list[WulffComponent]
    disjoint: bool
    fittable: bool


class AlexandrovReport(BaseModel):
    eps: float
    normalized_eps: float
    d: int
    P_phi: float
    P_d: float
    gap: float
    ratio: float | None
    components: list[WulffComponent] = Field(default_factory=list)
    radii_spread: float = 0.0
    holes: list[int] = Field(default_factory=list)
    gauss_bonnet: list[float] = Field(default_factory=list)
    mean_kappa_phi: float = 0.0
    weighted_mean_kappa_phi: float = 0.0
    far_from_critical: bool = False
    sigma: float = 0.0

    def to_json_dict(self, step: int | None = None) -> dict[str, Any]:
        return {
            "step": step,
            "eps": self.eps,
            "d": self.d,
            "P_phi": self.P_phi,
            "P_d": self.P_d,
            "gap": self.gap,
            "ratio": self.ratio,
            "components": [
                {"center": list(c.center), "r": c.radius, "f_sup": c.f_sup, "f_c1": c.f_c1}
                for c in self.components
            ],
            "gauss_bonnet": self.gauss_bonnet,
            "holes": self.holes,
            "far_from_critical": self.far_from_critical,
            "sigma": self.sigma,
        }


# =============================================================================
# Curves
# =============================================================================
def _resample_closed(points: NDArray, n: int) -> NDArray:
    closed = np.vstack([points, points[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.arange(n) * (s[-1] / n)
    return np.stack([np.interp(target, s, closed[:, 0]), np.interp(target, s, closed[:, 1])], axis=-1)


def extract_contours(E: GridSet, smoothing_cells: float = 1.0) -> list[Contour]:
    """
    Marching squares at level ½ of the indicator smoothed over `smoothing_cells`.

    Nesting depth decides outer (even) versus hole (odd); outer contours come
    first, ordered by their lower-left corner.
    """
    if E.is_empty():
        raise NoContourError("empty set has no boundary")
    spec = E.spec
    field = gaussian_filter(E.mask.astype(float), sigma=smoothing_cells, mode="constant")
    rings = []
    for rc in measure.find_contours(field, 0.5):
        if rc.shape[0] < 4:
            continue
        xy = np.stack(
            [spec.origin[0] + (rc[:, 1] + 0.5) * spec.spacing, spec.origin[1] + (rc[:, 0] + 0.5) * spec.spacing],
            axis=-1,
        )
        if np.allclose(xy[0], xy[-1]):
            xy = xy[:-1]
        length = float(np.sum(np.hypot(*np.diff(np.vstack([xy, xy[:1]]), axis=0).T)))
        n = max(int(round(length / spec.spacing)), 8)
        rings.append(_resample_closed(xy, n))
    if not rings:
        raise NoContourError("no closed boundary found")
    polys = [shapely.Polygon(r) for r in rings]
    contours = []
    for i, ring in enumerate(rings):
        depth = sum(
            1 for j, p in enumerate(polys) if j != i and bool(shapely.contains_xy(p, ring[0, 0], ring[0, 1]))
        )
        hole = depth % 2 == 1
        ccw = polygon_area(ring) > 0
        if ccw == hole:
            ring = ring[::-1]
        contours.append(Contour(points=ring, is_hole=hole, spacing=spec.spacing))
    contours.sort(key=lambda c: (c.is_hole, round(float(c.points[:, 0].min()), 9), round(float(c.points[:, 1].min()), 9)))
    return contours


def curvature_profile(c: Contour, phi: AnisoNorm, sigma: float | None = None) -> CurvatureProfile:
    """
    κ from Gaussian-smoothed tangent angles, κ^φ = κ·(γ+γ″)(θ), ε against the ℋ¹ average.

    θ is the outward normal angle of E; sigma defaults to three vertex spacings.
    """
    pts = np.asarray(c.points)
    n = pts.shape[0]
    if n < MIN_PROFILE_SAMPLES:
        raise DegeneracyError(f"contour has {n} samples, need at least {MIN_PROFILE_SAMPLES}")
    sigma = 3.0 * c.spacing if sigma is None else sigma
    nxt = np.roll(pts, -1, axis=0)
    seg = np.hypot(*(nxt - pts).T)
    if np.any(seg <= 0.0):
        raise DegeneracyError("contour has repeated vertices")
    s = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    ds = 0.5 * (seg + np.roll(seg, 1))
    smooth = pts
    if sigma > 0:
        width = sigma / float(np.mean(seg))
        smooth = np.stack(
            [gaussian_filter1d(pts[:, 0], width, mode="wrap"), gaussian_filter1d(pts[:, 1], width, mode="wrap")],
            axis=-1,
        )
    if not shapely.LinearRing(smooth).is_simple:
        raise DegeneracyError("contour self-intersects after smoothing")
    tangent = np.roll(smooth, -1, axis=0) - np.roll(smooth, 1, axis=0)
    alpha = np.unwrap(np.arctan2(tangent[:, 1], tangent[:, 0]))
    turn = np.angle(np.exp(1j * (np.roll(alpha, -1) - np.roll(alpha, 1))))
    kappa = turn / (2.0 * ds)
    theta = alpha - 0.5 * np.pi
    kappa_phi = kappa * phi.curvature_weight(theta)
    total = float(np.sum(ds))
    mean = float(np.sum(kappa_phi * ds) / total)
    g = phi.gamma(theta)
    weighted = float(np.sum(kappa_phi * g * ds) / np.sum(g * ds))
    eps = float(math.sqrt(np.sum((kappa_phi - mean) ** 2 * ds)))
    winding = int(round(float(np.sum(kappa * ds)) / (2.0 * np.pi)))
    return CurvatureProfile(
        points=pts,
        s=s,
        ds=ds,
        theta=theta,
        kappa=kappa,
        kappa_phi=kappa_phi,
        mean_kappa_phi=mean,
        weighted_mean_kappa_phi=weighted,
        eps=eps,
        winding=winding,
        sigma=sigma,
        is_hole=c.is_hole,
    )


def combined_deviation(profiles: Sequence[CurvatureProfile]) -> tuple[float, float]:
    """(ε, κ̄^φ) over all contours of one set, with a single common average."""
    ds = np.concatenate([p.ds for p in profiles])
    k = np.concatenate([p.kappa_phi for p in profiles])
    kbar = float(np.sum(k * ds) / np.sum(ds))
    return float(math.sqrt(np.sum((k - kbar) ** 2 * ds))), kbar


def gauss_bonnet(c: Contour, phi: AnisoNorm, sigma: float | None = None) -> float:
    """∮ κ^φ φ(ν) ds; 2|W_φ| on outer boundaries, −2|W_φ| on holes."""
    prof = curvature_profile(c, phi, sigma)
    return float(np.sum(prof.kappa_phi * phi.gamma(prof.theta) * prof.ds))


def perimeter_of(c: Contour, phi: AnisoNorm) -> float:
    return polygon_perimeter(phi, c.points)


def is_star_shaped(points: ArrayLike, center: ArrayLike | None = None) -> bool:
    """Rays from center meet the closed curve once: its polar angle is strictly monotone."""
    pts = np.asarray(points, dtype=float)
    if center is None:
        center = shapely.Polygon(pts).centroid.coords[0]
    rel = pts - np.asarray(center, dtype=float)
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    step = np.angle(np.exp(1j * (np.roll(ang, -1) - ang)))
    total = float(np.sum(step))
    if abs(abs(total) - 2.0 * np.pi) > 1e-6:
        return False
    return bool(np.all(step * np.sign(total) > 0.0))


# =============================================================================
# Wulff fitting
# =============================================================================
def _fit_center(points: NDArray, gauge: AnisoNorm, start: NDArray) -> NDArray:
    def spread(x):
        g = eval_norm(gauge, points - x)
        return float(np.sum((g - g.mean()) ** 2))

    res = minimize(spread, start, method="Powell", options={"xtol": 1e-10, "ftol": 1e-14})
    return np.asarray(res.x if res.fun <= spread(start) else start, dtype=float)


def _normal_graph(
    ring: NDArray, phi: AnisoNorm, center: NDArray, r: float, samples: int = 256
) -> NDArray:
    """f(θ) with x + rξ(θ) + f(θ)ν(θ) on the ring; NaN where the normal misses it."""
    theta = 2.0 * np.pi * np.arange(samples) / samples
    base = center + r * cahn_hoffman(phi, theta)
    nu = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    reach = 2.0 * r * max(float(np.max(phi.gamma(theta))), 1.0)
    segments = np.stack([base - reach * nu, base + reach * nu], axis=1)
    lines = shapely.linestrings(segments)
    hits = shapely.intersection(lines, shapely.LinearRing(ring))
    coords, index = shapely.get_coordinates(hits, return_index=True)
    f = np.full(samples, np.nan)
    if coords.size:
        t = np.einsum("ij,ij->i", coords - base[index], nu[index])
        order = np.argsort(np.abs(t), kind="stable")
        for k in order[::-1]:
            f[index[k]] = t[k]
    return f


def fit_wulff_union(contours: Sequence[Contour], phi: AnisoNorm, m: float | None = None) -> WulffFit:
    """
    Fit ∪_j W_φ(x_j, r) to the outer contours.

    Centers minimize the spread of the gauge φ°(v − x) over boundary samples;
    r_j comes from the component area, r from d·r² = Σ r_j², and each
    component's normal graph f_j is measured along ν(θ) from x_j + rξ(θ).
    """
    w_area = wulff_area(phi)
    gauge = dual_of(phi)
    outers = [c for c in contours if not c.is_hole]
    holes = [c for c in contours if c.is_hole]
    if not outers:
        raise NoContourError("no outer contour to fit")
    comps = []
    for c in outers:
        poly = shapely.Polygon(c.points)
        inside = [hc for hc in holes if bool(shapely.contains_xy(poly, hc.points[0, 0], hc.points[0, 1]))]
        comp_area = c.signed_area + sum(hc.signed_area for hc in inside)
        centroid = np.asarray(poly.centroid.coords[0])
        star = is_star_shaped(c.points, centroid)
        center = _fit_center(np.asarray(c.points), gauge, centroid) if star else centroid
        comps.append(
            WulffComponent(
                center=(float(center[0]), float(center[1])),
                radius=math.sqrt(max(comp_area, 0.0) / w_area),
                area=comp_area,
                holes=len(inside),
                fittable=star,
            )
        )
    d = len(comps)
    r = math.sqrt(sum(cp.radius**2 for cp in comps) / d)
    fitted = []
    for c, cp in zip(outers, comps):
        if cp.fittable and r > 0:
            f = _normal_graph(np.asarray(c.points), phi, np.asarray(cp.center), r)
            if np.all(np.isfinite(f)):
                dtheta = 2.0 * np.pi / f.size
                df = (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * dtheta)
                cp = cp.model_copy(
                    update={"f_sup": float(np.max(np.abs(f))), "f_c1": float(np.max(np.abs(f)) + np.max(np.abs(df)))}
                )
            else:
                cp = cp.model_copy(update={"fittable": False})
        fitted.append(cp)
    centers = np.array([cp.center for cp in fitted])
    disjoint = True
    for i in range(d):
        for j in range(i + 1, d):
            if float(eval_norm(gauge, centers[i] - centers[j])) <= 2.0 * r:
                disjoint = False
    if not disjoint:
        logger.info("fitted Wulff union of %d components overlaps", d)
    return WulffFit(
        d=d,
        radius=r,
        target_radius=math.sqrt(m / (d * w_area)) if m else None,
        components=fitted,
        disjoint=disjoint,
        fittable=all(cp.fittable for cp in fitted),
    )


def wulff_union_polygons(fit: WulffFit, phi: AnisoNorm, n: int = 256) -> list[NDArray]:
    """Boundary polygons of the fitted union, for drawing and containment checks."""
    theta = 2.0 * np.pi * np.arange(n) / n
    xi = cahn_hoffman(phi, theta)
    return [np.asarray(cp.center) + fit.radius * xi for cp in fit.components]


# =============================================================================
# Alexandrov report
# =============================================================================
def alexandrov_report(
    E: GridSet | Sequence[Contour],
    phi: AnisoNorm,
    m: float | None = None,
    sigma: float | None = None,
) -> AlexandrovReport:
    """
    ε = ‖κ^φ − κ̄^φ‖ over ∂E against min_d |P_φ(E) − P_d|, P_d = 2√(|W_φ|·m·d).

    m defaults to the measured area of E. The set is flagged far from
    critical when ε/(|κ̄^φ|·√ℓ) exceeds FAR_FROM_CRITICAL.
    """
    contours = extract_contours(E) if isinstance(E, GridSet) else list(E)
    profiles = [curvature_profile(c, phi, sigma) for c in contours]
    eps, kbar = combined_deviation(profiles)
    length = float(sum(np.sum(p.ds) for p in profiles))
    measured_area = sum(c.signed_area for c in contours)
    m = measured_area if m is None else m
    P = sum(perimeter_of(c, phi) for c in contours)
    w_area = wulff_area(phi)
    candidates = [(abs(P - 2.0 * math.sqrt(w_area * m * d)), d) for d in range(1, MAX_COMPONENTS + 1)]
    gap, d = min(candidates)
    P_d = 2.0 * math.sqrt(w_area * m * d)
    g_weighted = np.concatenate([phi.gamma(p.theta) * p.ds for p in profiles])
    weighted = float(np.sum(np.concatenate([p.kappa_phi for p in profiles]) * g_weighted) / np.sum(g_weighted))
    try:
        fit = fit_wulff_union(contours, phi, m)
        comps = fit.components
    except NoContourError:
        comps = []
    radii = [cp.radius for cp in comps]
    spread = (max(radii) - min(radii)) / float(np.mean(radii)) if radii and np.mean(radii) > 0 else 0.0
    normalized = eps / (abs(kbar) * math.sqrt(length)) if kbar != 0 else math.inf
    return AlexandrovReport(
        eps=eps,
        normalized_eps=normalized,
        d=d,
        P_phi=P,
        P_d=P_d,
        gap=gap,
        ratio=gap / eps**2 if eps > 0 else None,
        components=comps,
        radii_spread=spread,
        holes=[cp.holes for cp in comps],
        gauss_bonnet=[float(np.sum(p.kappa_phi * phi.gamma(p.theta) * p.ds)) for p in profiles],
        mean_kappa_phi=kbar,
        weighted_mean_kappa_phi=weighted,
        far_from_critical=normalized > FAR_FROM_CRITICAL,
        sigma=profiles[0].sigma if profiles else 0.0,
    )


# =============================================================================
# Normal perturbations of the Wulff shape
# =============================================================================
def normal_graph_curve(
    phi: AnisoNorm, f: ArrayLike, center: ArrayLike = (0.0, 0.0), r: float = 1.0
) -> NDArray[np.float64]:
    """u(θ_i) = x + rξ(θ_i) + f_i ν(θ_i) on the uniform θ grid of len(f)."""
    fv = np.asarray(f, dtype=float)
    theta = 2.0 * np.pi * np.arange(fv.size) / fv.size
    nu = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return np.asarray(center, dtype=float) + r * cahn_hoffman(phi, theta) + fv[:, None] * nu


def _spectral_derivative(values: NDArray) -> NDArray:
    n = values.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(values, axis=0), axis=0))


def _graph_speed_check(phi: AnisoNorm, f: NDArray, du: NDArray) -> None:
    theta = 2.0 * np.pi * np.arange(f.size) / f.size
    tau = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    speed = np.einsum("ij,ij->i", du, tau)
    if float(speed.min()) <= 0.0:
        raise SmallnessViolationError(
            f"normal perturbation folds over W_φ: u′·τ reaches {speed.min():.3g}; reduce ‖f‖_C¹"
        )


def area_expansion_check(f: ArrayLike, phi: AnisoNorm) -> float:
    """
    |area(u) − (|W_φ| + ∫f(γ+γ″)dθ + ½∫f²dθ)| for u = ξ + fν.

    Area by Green's formula with spectrally differentiated coordinates; the
    curve must stay a graph over ∂W_φ (u′·τ > 0 everywhere).
    """
    fv = np.asarray(f, dtype=float)
    theta = 2.0 * np.pi * np.arange(fv.size) / fv.size
    u = normal_graph_curve(phi, fv)
    du = _spectral_derivative(u)
    _graph_speed_check(phi, fv, du)
    enclosed = math.pi * float(np.mean(u[:, 0] * du[:, 1] - u[:, 1] * du[:, 0]))
    predicted = (
        wulff_area(phi)
        + 2.0 * math.pi * float(np.mean(fv * phi.curvature_weight(theta)))
        + math.pi * float(np.mean(fv**2))
    )
    return abs(enclosed - predicted)


def perimeter_expansion_defect(f: ArrayLike, phi: AnisoNorm) -> float:
    """P_φ(E_f) − P_φ(W_φ) − ∫f(γ+γ″)dθ, quadratic in ‖f‖_C¹."""
    fv = np.asarray(f, dtype=float)
    theta = 2.0 * np.pi * np.arange(fv.size) / fv.size
    u = normal_graph_curve(phi, fv)
    du = _spectral_derivative(u)
    _graph_speed_check(phi, fv, du)
    normals = np.stack([du[:, 1], -du[:, 0]], axis=-1)
    perimeter = 2.0 * math.pi * float(np.mean(eval_norm(phi, normals)))
    first_order = 2.0 * math.pi * float(np.mean(fv * phi.curvature_weight(theta)))
    return perimeter - 2.0 * wulff_area(phi) - first_order
