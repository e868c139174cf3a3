"""
Reflection comparison for grid sets and the containment geometry of Wulff unions.

(*)_H:  Ψ(E) ∩ H ⊆ E ∩ H, with H = {x·ν ≤ s} and Ψ the reflection across ∂H.
(*)′_H: additionally ∂Ψ(E) ∩ ∂E ⊂ ∂H, checked on boundary cells outside a band
        around ∂H.
"""

import math
from typing import Any, Sequence

import numpy as np
import shapely
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.spatial import cKDTree

from .anisotropy import AnisoNorm, ellipticity_bounds, polygon_area, polygon_perimeter, wulff_area, wulff_polygon
from .errors import DomainTooSmallError
from .grid_set import MARGIN_CELLS, GridSet, area, boundary_cells, lattice_perimeter, signed_distance_field

DEFAULT_BAND_CELLS = 3.0


# =============================================================================
# Domain types
# =============================================================================
class HalfSpace(BaseModel):
    """H = {x : x·ν ≤ s}."""

    model_config = ConfigDict(frozen=True)

    nu: tuple[float, float]
    s: float = 0.0

    @field_validator("nu")
    @classmethod
    def _unit(cls, v):
        n = math.hypot(v[0], v[1])
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"half-space normal must be a unit vector, |ν| = {n:g}")
        return v

    def signed_gap(self, points: ArrayLike) -> NDArray[np.float64]:
        """s − x·ν: positive inside H, zero on ∂H."""
        p = np.asarray(points, dtype=float)
        return self.s - (p[..., 0] * self.nu[0] + p[..., 1] * self.nu[1])

    def reflect_points(self, points: ArrayLike) -> NDArray[np.float64]:
        """Ψ(x) = x + 2(s − x·ν)ν."""
        p = np.asarray(points, dtype=float)
        return p + 2.0 * self.signed_gap(p)[..., None] * np.asarray(self.nu)


class DirectionSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    directions: tuple[tuple[float, float], ...]

    def __len__(self) -> int:
        return len(self.directions)

    def _has(self, v: NDArray, tol: float) -> bool:
        d = np.asarray(self.directions)
        return bool(np.min(np.hypot(*(d - v).T)) <= tol)

    def is_root_system(self, tol: float = 1e-12) -> bool:
        """Closed under negation and under Ψ_ν(μ) = μ − 2(μ·ν)ν for every pair."""
        d = np.asarray(self.directions)
        for nu in d:
            if not self._has(-nu, tol):
                return False
            for mu in d:
                if not self._has(mu - 2.0 * float(mu @ nu) * nu, tol):
                    return False
        return True


class ReflectionCheck(BaseModel):
    halfspace: HalfSpace
    violation_area: float = Field(..., ge=0)
    tolerance: float
    holds: bool
    strict: bool | None = None
    contact_distance: float | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "nu": list(self.halfspace.nu),
            "s": self.halfspace.s,
            "violation": self.violation_area,
            "holds": self.holds,
            "strict": self.strict,
        }


class ReflectionSeries(BaseModel):
    """Per-snapshot violation record of a half-space family along one trace."""

    steps: list[int]
    max_violation: list[float]
    tolerance: list[float]
    rows: list[dict[str, Any]]
    preserved: bool
    note: str = (
        "a violation shows only that this deterministic trace leaves the property; "
        "it does not rule out another preserving flat flow"
    )


# =============================================================================
# Reflection on the lattice
# =============================================================================
def _reflected_indices(E: GridSet, H: HalfSpace) -> tuple[NDArray, NDArray, NDArray]:
    """Nearest-cell (row, col) of Ψ(center) for every cell and an in-grid flag."""
    spec = E.spec
    X, Y = spec.cell_centers()
    src = H.reflect_points(np.stack([X, Y], axis=-1))
    frac = spec.to_fractional_index(src)
    rows = np.rint(frac[..., 0]).astype(np.int64)
    cols = np.rint(frac[..., 1]).astype(np.int64)
    inside = (rows >= 0) & (rows < spec.ny) & (cols >= 0) & (cols < spec.nx)
    return rows, cols, inside


def _pull_back(E: GridSet, H: HalfSpace) -> GridSet:
    """Ψ(E) with cells whose mirror image falls off the grid counted as empty."""
    rows, cols, inside = _reflected_indices(E, H)
    mask = np.zeros(E.spec.shape, dtype=bool)
    mask[inside] = E.mask[rows[inside], cols[inside]]
    return GridSet(spec=E.spec, mask=mask)


def reflect(E: GridSet, H: HalfSpace) -> GridSet:
    """
    Ψ(E) by pull-back: cell x is in Ψ(E) iff the cell nearest Ψ(x) is in E.

    Exact (an involution) when ν is axis- or diagonal-aligned and ∂H sits on
    cell edges or centers symmetric to the grid.
    """
    # every cell of E must land inside the grid, off the rim
    spec = E.spec
    X, Y = spec.cell_centers()
    fwd = H.reflect_points(np.stack([X[E.mask], Y[E.mask]], axis=-1))
    frac = spec.to_fractional_index(fwd)
    lo = MARGIN_CELLS - 0.5
    if fwd.size and (
        frac[:, 0].min() < lo
        or frac[:, 1].min() < lo
        or frac[:, 0].max() > spec.ny - 1 - lo
        or frac[:, 1].max() > spec.nx - 1 - lo
    ):
        raise DomainTooSmallError("reflected set leaves the grid margin")
    return _pull_back(E, H)


def reflection_tolerance(E: GridSet) -> float:
    """4Δx·P(E) with the lattice Euclidean perimeter."""
    return 4.0 * E.spec.spacing * lattice_perimeter(E)


def check_star_H(E: GridSet, H: HalfSpace, tolerance: float | None = None) -> ReflectionCheck:
    """Violation area |(Ψ(E) ∩ H) ∖ E|; the property holds iff it is within tolerance."""
    tol = reflection_tolerance(E) if tolerance is None else tolerance
    # only cells in H are compared, so mirror images off the grid are harmless
    R = _pull_back(E, H)
    X, Y = E.spec.cell_centers()
    in_h = H.signed_gap(np.stack([X, Y], axis=-1)) >= 0.0
    bad = R.mask & in_h & ~E.mask
    violation = int(np.count_nonzero(bad)) * E.spec.cell_area
    return ReflectionCheck(halfspace=H, violation_area=violation, tolerance=tol, holds=violation <= tol)


def check_star_H_strict(
    E: GridSet, H: HalfSpace, band: float | None = None, tolerance: float | None = None
) -> ReflectionCheck:
    """
    (*)′_H: no boundary cell of E inside H and farther than `band` from ∂H is
    also a boundary cell of Ψ(E). Fails outright when (*)_H fails.
    """
    base = check_star_H(E, H, tolerance)
    band = DEFAULT_BAND_CELLS * E.spec.spacing if band is None else band
    if not base.holds:
        return base.model_copy(update={"strict": False})
    R = _pull_back(E, H)
    X, Y = E.spec.cell_centers()
    gap = H.signed_gap(np.stack([X, Y], axis=-1))
    far = gap > band
    b_e = boundary_cells(E) & far
    b_r = boundary_cells(R) & far
    strict = not bool((b_e & b_r).any())
    contact = math.inf
    if b_e.any() and b_r.any():
        tree = cKDTree(np.stack([X[b_r], Y[b_r]], axis=-1))
        dist, _ = tree.query(np.stack([X[b_e], Y[b_e]], axis=-1))
        contact = float(dist.min())
    return base.model_copy(update={"strict": strict, "contact_distance": contact})


def check_family(E: GridSet, family: Sequence[HalfSpace], strict: bool = False) -> list[ReflectionCheck]:
    """(**)_{D,𝒫} on a tight half-space family."""
    tol = reflection_tolerance(E)
    if strict:
        return [check_star_H_strict(E, H, tolerance=tol) for H in family]
    return [check_star_H(E, H, tolerance=tol) for H in family]


def family_report(checks: Sequence[ReflectionCheck]) -> dict[str, Any]:
    """JSON rows for a family check plus the overall verdict."""
    return {
        "holds": all(c.holds for c in checks),
        "max_violation": max((c.violation_area for c in checks), default=0.0),
        "tolerance": checks[0].tolerance if checks else 0.0,
        "family": [c.to_json_dict() for c in checks],
    }


def check_distance_reflection(
    E: GridSet, H: HalfSpace, psi: AnisoNorm, samples: int = 400, seed: int = 0
) -> tuple[bool, float]:
    """
    sd^ψ_E(x) ≤ sd^ψ_E(Ψx) on sampled cells x ∈ H, up to 2Δx·L_ψ.

    Returns (holds, largest excess of sd(x) − sd(Ψx)).
    """
    sd = np.asarray(signed_distance_field(E, psi, mode="exact").values)
    rows, cols, inside = _reflected_indices(E, H)
    X, Y = E.spec.cell_centers()
    in_h = (H.signed_gap(np.stack([X, Y], axis=-1)) >= 0.0) & inside
    candidates = np.flatnonzero(in_h.ravel())
    if candidates.size == 0:
        return True, 0.0
    rng = np.random.default_rng(seed)
    pick = rng.choice(candidates, size=min(samples, candidates.size), replace=False)
    j, i = np.unravel_index(pick, E.spec.shape)
    excess = sd[j, i] - sd[rows[j, i], cols[j, i]]
    worst = float(excess.max())
    return worst <= 2.0 * E.spec.spacing * ellipticity_bounds(psi).L_phi, worst


# =============================================================================
# Direction sets and containment geometry
# =============================================================================
def root_system(m: int) -> DirectionSet:
    """Q_{2m}: the 2m unit vectors at angles 2πi/2m."""
    if m < 1:
        raise ValueError(f"root system needs m >= 1, got {m}")
    angles = 2.0 * np.pi * np.arange(2 * m) / (2 * m)
    return DirectionSet(directions=tuple((float(np.cos(a)), float(np.sin(a))) for a in angles))


def halfspace_family(D: ArrayLike, directions: DirectionSet) -> list[HalfSpace]:
    """Tight half-spaces {x·ν ≤ max_{d∈D} d·ν}; larger offsets only shrink the violation."""
    pts = np.atleast_2d(np.asarray(D, dtype=float))
    return [HalfSpace(nu=nu, s=float(np.max(pts @ np.asarray(nu)))) for nu in directions.directions]


def containment_bound(D: ArrayLike, m: float, phi: AnisoNorm, n: int = 256) -> NDArray[np.float64]:
    """Convex polygon D ⊕ rW_φ with r = (m/|W_φ|)^½, counter-clockwise."""
    pts = np.atleast_2d(np.asarray(D, dtype=float))
    r = math.sqrt(m / wulff_area(phi))
    wulff = wulff_polygon(phi, (0.0, 0.0), r, n)
    sums = (pts[:, None, :] + wulff[None, :, :]).reshape(-1, 2)
    hull = shapely.MultiPoint(sums).convex_hull
    ring = np.asarray(hull.exterior.coords)[:-1]
    if polygon_area(ring) < 0:
        ring = ring[::-1]
    return ring


def within_bound(polygons: Sequence[ArrayLike], bound: ArrayLike, slack: float) -> bool:
    """Every polygon lies inside `bound` dilated by slack."""
    region = shapely.Polygon(np.asarray(bound, dtype=float)).buffer(slack)
    return all(bool(region.covers(shapely.Polygon(np.asarray(p, dtype=float)))) for p in polygons)


def mixed_area(D: ArrayLike, m: float, phi: AnisoNorm) -> float:
    """|D + rW_φ| = |D| + r·P_φ(D) + r²|W_φ| for convex D."""
    pts = np.atleast_2d(np.asarray(D, dtype=float))
    r = math.sqrt(m / wulff_area(phi))
    d_area = abs(polygon_area(pts)) if pts.shape[0] >= 3 else 0.0
    # a segment counts both of its sides, a point has no perimeter
    perim = polygon_perimeter(phi, pts) if pts.shape[0] >= 2 else 0.0
    return d_area + r * perim + r * r * wulff_area(phi)


def single_wulff_criterion(D: ArrayLike, phi: AnisoNorm, m: float) -> tuple[bool, float, float]:
    """
    m > 2(√(α²+1) + α)²|D| with α = P_φ(D) / (2|W_φ|^½|D|^½).

    For D of zero area α = ∞ and the threshold is the limit 2P_φ(D)²/|W_φ|,
    which vanishes for a point.
    """
    pts = np.atleast_2d(np.asarray(D, dtype=float))
    d_area = abs(polygon_area(pts)) if pts.shape[0] >= 3 else 0.0
    if d_area <= 0.0:
        perim = polygon_perimeter(phi, pts) if pts.shape[0] >= 2 else 0.0
        threshold = 2.0 * perim**2 / wulff_area(phi)
        return m > threshold, math.inf, threshold
    alpha = polygon_perimeter(phi, pts) / (2.0 * math.sqrt(wulff_area(phi)) * math.sqrt(d_area))
    threshold = 2.0 * (math.sqrt(alpha**2 + 1.0) + alpha) ** 2 * d_area
    return m > threshold, alpha, threshold


def monitor_reflection(trace, family: Sequence[HalfSpace]) -> ReflectionSeries:
    """Max (*)_H violation over the family at every stored snapshot of a FlowTrace."""
    steps, worst, tols, rows = [], [], [], []
    for k in sorted(trace.snapshots):
        E = trace.snapshots[k]
        if E.is_empty():
            checks = []
            tol = 0.0
        else:
            checks = check_family(E, family)
            tol = checks[0].tolerance if checks else 0.0
        steps.append(k)
        worst.append(max((c.violation_area for c in checks), default=0.0))
        tols.append(tol)
        rows.append({"step": k, **family_report(checks)})
    preserved = all(w <= t for w, t in zip(worst, tols))
    return ReflectionSeries(steps=steps, max_violation=worst, tolerance=tols, rows=rows, preserved=preserved)


def area_preserved(E: GridSet, H: HalfSpace) -> float:
    """|area(Ψ(E)) − area(E)|, zero for aligned half-spaces."""
    return abs(area(reflect(E, H)) - area(E))
