"""
Rasterized planar sets on a uniform lattice.

- GridSpec / GridSet / ScalarField: the lattice, boolean masks and per-cell fields
- rasterize: even-odd polygon sampling at cell centers
- signed_distance_field: anisotropic signed distance (exact or graph relaxation)
- perimeter_weights / anisotropic_perimeter: Crofton-type cut approximation of P_φ

Masks are indexed mask[j, i] with j the row (y) and i the column (x); the
center of cell (i, j) is origin + ((i + ½)Δx, (j + ½)Δx).
"""

import logging
import math
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
import shapely
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import sparse
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .anisotropy import AnisoNorm, ellipticity_bounds, eval_norm
from .errors import (
    DomainTooSmallError,
    GridSpecError,
    SpecMismatchError,
    StencilInsufficientError,
    UndefinedDistanceError,
)
from .settings import load_settings

logger = logging.getLogger(__name__)

MARGIN_CELLS = 2
FIT_DIRECTIONS = 256
DEFAULT_STENCIL_BOUND = 0.02

# One representative per ± pair; the full stencil is this set and its negation.
HALF_OFFSETS: dict[int, tuple[tuple[int, int], ...]] = {
    4: ((1, 0), (0, 1)),
    8: ((1, 0), (0, 1), (1, 1), (1, -1)),
    16: ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (-1, 2), (-2, 1)),
    32: (
        (1, 0), (0, 1), (1, 1), (1, -1),
        (2, 1), (1, 2), (-1, 2), (-2, 1),
        (3, 1), (1, 3), (-1, 3), (-3, 1),
        (3, 2), (2, 3), (-2, 3), (-3, 2),
    ),
}

# Worst-case overestimation of the graph-relaxed distance, per neighbourhood order.
METRICATION_FACTORS: dict[int, float] = {8: 1.0824, 16: 1.0275, 32: 1.0125}


# =============================================================================
# Domain types
# =============================================================================
class GridSpec(BaseModel):
    """Uniform lattice: origin (lower-left corner), spacing Δx, nx columns, ny rows."""

    model_config = ConfigDict(frozen=True)

    origin: tuple[float, float] = (0.0, 0.0)
    spacing: float
    nx: int = Field(..., ge=2 * MARGIN_CELLS + 1)
    ny: int = Field(..., ge=2 * MARGIN_CELLS + 1)

    @model_validator(mode="after")
    def _check_cell_limit(self) -> "GridSpec":
        if not (self.spacing > 0.0 and math.isfinite(self.spacing)):
            raise GridSpecError(f"grid spacing must be positive, got {self.spacing}")
        limit = load_settings().max_cells
        if self.nx * self.ny > limit:
            raise GridSpecError(f"{self.nx}x{self.ny} grid exceeds the cell limit {limit}")
        return self

    @classmethod
    def around(
        cls, center: tuple[float, float], half_width: float, spacing: float
    ) -> "GridSpec":
        """Square grid of side ≥ 2·half_width centred on center."""
        n = int(math.ceil(2.0 * half_width / spacing))
        return cls(
            origin=(center[0] - 0.5 * n * spacing, center[1] - 0.5 * n * spacing),
            spacing=spacing,
            nx=n,
            ny=n,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.spacing * self.spacing

    @property
    def domain_area(self) -> float:
        return self.nx * self.ny * self.cell_area

    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.nx * self.spacing, y0 + self.ny * self.spacing)

    def cell_centers(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """(X, Y) arrays of shape (ny, nx)."""
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.spacing
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.spacing
        return np.meshgrid(x, y)

    def to_fractional_index(self, points: ArrayLike) -> NDArray[np.float64]:
        """(row, col) coordinates of points, with cell centers at integers."""
        p = np.asarray(points, dtype=float)
        col = (p[..., 0] - self.origin[0]) / self.spacing - 0.5
        row = (p[..., 1] - self.origin[1]) / self.spacing - 0.5
        return np.stack([row, col], axis=-1)


class GridSet(BaseModel):
    """
    Boolean cell mask on a GridSpec.

    Values are read-only snapshots. The two-cell rim margin is enforced by
    rasterize and by the flow stepper, not by the constructor, so full or
    rim-touching masks can still be built for bookkeeping.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: GridSpec
    mask: np.ndarray

    @field_validator("mask", mode="before")
    @classmethod
    def _as_bool(cls, v):
        arr = np.array(v, dtype=bool, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_shape(self) -> "GridSet":
        if self.mask.shape != self.spec.shape:
            raise SpecMismatchError(f"mask shape {self.mask.shape} != grid shape {self.spec.shape}")
        return self

    @classmethod
    def empty(cls, spec: GridSpec) -> "GridSet":
        return cls(spec=spec, mask=np.zeros(spec.shape, dtype=bool))

    @classmethod
    def full(cls, spec: GridSpec) -> "GridSet":
        return cls(spec=spec, mask=np.ones(spec.shape, dtype=bool))

    @property
    def cell_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    def is_full(self) -> bool:
        return bool(self.mask.all())

    def touches_rim(self, width: int = MARGIN_CELLS) -> bool:
        m = self.mask
        return bool(
            m[:width, :].any() or m[-width:, :].any() or m[:, :width].any() or m[:, -width:].any()
        )

    def shifted(self, di: int, dj: int) -> "GridSet":
        """Translate by whole cells (di columns, dj rows); the shifted set must stay off the rim."""
        if self.touches_rim(MARGIN_CELLS + max(abs(di), abs(dj))):
            raise DomainTooSmallError(f"shift by ({di}, {dj}) cells leaves the grid margin")
        return GridSet(spec=self.spec, mask=np.roll(self.mask, (dj, di), axis=(0, 1)))

    def union(self, other: "GridSet") -> "GridSet":
        _same_spec(self, other)
        return GridSet(spec=self.spec, mask=self.mask | other.mask)

    def intersection(self, other: "GridSet") -> "GridSet":
        _same_spec(self, other)
        return GridSet(spec=self.spec, mask=self.mask & other.mask)


class ScalarField(BaseModel):
    """One float per cell."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: GridSpec
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_float(cls, v):
        arr = np.array(v, dtype=float, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_shape(self) -> "ScalarField":
        if self.values.shape != self.spec.shape:
            raise SpecMismatchError(f"field shape {self.values.shape} != grid shape {self.spec.shape}")
        return self


class CroftonStencil(BaseModel):
    """
    Offsets e and weights w so that Σ_e w_e·Δx·[x and x+e differ] approximates P_φ.

    `offsets` holds the full ±-symmetric set; each weight is half of the
    weight of the unordered pair so ordered-pair sums count each crossing once.
    """

    model_config = ConfigDict(frozen=True)

    norm: AnisoNorm
    order: int
    offsets: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    max_error: float = Field(..., ge=0.0)

    def half(self) -> list[tuple[tuple[int, int], float]]:
        """Unordered-pair view: one offset per ± pair with the full pair weight."""
        n = len(self.offsets) // 2
        return [(self.offsets[i], 2.0 * self.weights[i]) for i in range(n)]

    def directional_density(self, theta: ArrayLike) -> NDArray[np.float64]:
        """Σ_half w_e |e·ν(θ)|, the cut density of a straight boundary with normal ν(θ)."""
        t = np.asarray(theta, dtype=float)
        out = np.zeros_like(t)
        for (dx, dy), w in self.half():
            out += w * np.abs(dx * np.cos(t) + dy * np.sin(t))
        return out


# =============================================================================
# Helpers
# =============================================================================
def _same_spec(a: GridSet | ScalarField, b: GridSet | ScalarField) -> None:
    if a.spec != b.spec:
        raise SpecMismatchError("grid objects live on different grids")


def _pair_views(arr: np.ndarray, dx: int, dy: int) -> tuple[np.ndarray, np.ndarray]:
    """Views (a, b) with b[j, i] = arr[j + dy, i + dx] over the overlapping window."""
    ny, nx = arr.shape
    ys, yd = (slice(0, ny - dy), slice(dy, ny)) if dy >= 0 else (slice(-dy, ny), slice(0, ny + dy))
    xs, xd = (slice(0, nx - dx), slice(dx, nx)) if dx >= 0 else (slice(-dx, nx), slice(0, nx + dx))
    return arr[ys, xs], arr[yd, xd]


def boundary_points(F: GridSet) -> NDArray[np.float64]:
    """Cell-edge midpoints between 4-neighbours of different membership."""
    spec = F.spec
    m = F.mask
    x0, y0 = spec.origin
    h = spec.spacing
    jj, ii = np.nonzero(m[:, :-1] != m[:, 1:])
    horiz = np.stack([x0 + (ii + 1.0) * h, y0 + (jj + 0.5) * h], axis=-1)
    jj, ii = np.nonzero(m[:-1, :] != m[1:, :])
    vert = np.stack([x0 + (ii + 0.5) * h, y0 + (jj + 1.0) * h], axis=-1)
    return np.concatenate([horiz, vert], axis=0)


def boundary_cells(F: GridSet) -> NDArray[np.bool_]:
    """Cells with a 4-neighbour of the opposite membership."""
    m = F.mask
    out = np.zeros_like(m)
    for dx, dy in ((1, 0), (0, 1)):
        a, b = _pair_views(m, dx, dy)
        diff = a != b
        oa, ob = _pair_views(out, dx, dy)
        oa |= diff
        ob |= diff
    return out


# =============================================================================
# Operations
# =============================================================================
def rasterize(polygons: Sequence[ArrayLike], spec: GridSpec) -> GridSet:
    """Cell is in the set iff its center lies in the even-odd interior of the rings."""
    X, Y = spec.cell_centers()
    mask = np.zeros(spec.shape, dtype=bool)
    x0, y0, x1, y1 = spec.bounds()
    margin = MARGIN_CELLS * spec.spacing
    for ring in polygons:
        pts = np.asarray(ring, dtype=float)
        if pts.size == 0:
            continue
        bx0, by0 = pts.min(axis=0)
        bx1, by1 = pts.max(axis=0)
        if bx0 < x0 + margin or by0 < y0 + margin or bx1 > x1 - margin or by1 > y1 - margin:
            raise DomainTooSmallError(
                f"polygon bounds ({bx0:.3g}, {by0:.3g}, {bx1:.3g}, {by1:.3g}) exit the "
                f"{MARGIN_CELLS}-cell margin of the grid {spec.bounds()}"
            )
        mask ^= shapely.contains_xy(shapely.Polygon(pts), X, Y)
    E = GridSet(spec=spec, mask=mask)
    if E.touches_rim():
        raise DomainTooSmallError("rasterized set touches the grid margin")
    return E


def area(E: GridSet) -> float:
    return E.cell_count * E.spec.cell_area


def sym_diff_area(A: GridSet, B: GridSet) -> float:
    _same_spec(A, B)
    return int(np.count_nonzero(A.mask ^ B.mask)) * A.spec.cell_area


def _linear_map_of(psi: AnisoNorm) -> NDArray[np.float64] | None:
    """Matrix M with ψ(v) = |Mv| for the euclidean and ellipse families."""
    if psi.family == "euclidean":
        return np.eye(2)
    if psi.family == "ellipse":
        c, s = math.cos(psi.rotation), math.sin(psi.rotation)
        return np.diag([psi.a, psi.b]) @ np.array([[c, s], [-s, c]])
    return None


def _exact_unsigned(points: NDArray, queries: NDArray, psi: AnisoNorm, chunk: int = 2048) -> NDArray:
    M = _linear_map_of(psi)
    if M is not None:
        tree = cKDTree(points @ M.T)
        dist, _ = tree.query(queries @ M.T)
        return dist
    # Generic norm: a Euclidean nearest point bounds the ψ-distance from above,
    # and ψ(v) ≥ γ_min·|v| limits the candidates to a ball.
    tree = cKDTree(points)
    gamma_min = ellipticity_bounds(psi).gamma_min
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], chunk):
        q = queries[start : start + chunk]
        _, idx = tree.query(q)
        best = eval_norm(psi, q - points[idx])
        balls = tree.query_ball_point(q, best / gamma_min * (1.0 + 1e-12) + 1e-15)
        lengths = np.fromiter((len(b) for b in balls), dtype=np.int64, count=len(balls))
        if lengths.sum() == 0:
            out[start : start + chunk] = best
            continue
        flat = np.fromiter((k for b in balls for k in b), dtype=np.int64, count=int(lengths.sum()))
        owner = np.repeat(np.arange(q.shape[0]), lengths)
        vals = eval_norm(psi, q[owner] - points[flat])
        cand = np.full(q.shape[0], np.inf)
        np.minimum.at(cand, owner, vals)
        out[start : start + chunk] = np.minimum(best, cand)
    return out


def _fast_unsigned(F: GridSet, psi: AnisoNorm, order: int) -> NDArray:
    spec = F.spec
    ny, nx = spec.shape
    n = nx * ny
    idx = np.arange(n).reshape(ny, nx)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for dx, dy in HALF_OFFSETS[order]:
        w = float(eval_norm(psi, np.array([dx, dy], dtype=float) * spec.spacing))
        a, b = _pair_views(idx, dx, dy)
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        data += [np.full(a.size, w), np.full(a.size, w)]
    # Super-source n feeds every boundary cell with its half-edge distance.
    half_x = 0.5 * float(eval_norm(psi, np.array([spec.spacing, 0.0])))
    half_y = 0.5 * float(eval_norm(psi, np.array([0.0, spec.spacing])))
    seed = np.full(spec.shape, np.inf)
    m = F.mask
    for (dx, dy), w in (((1, 0), half_x), ((0, 1), half_y)):
        a, b = _pair_views(m, dx, dy)
        sa, sb = _pair_views(seed, dx, dy)
        diff = a != b
        np.minimum(sa, np.where(diff, w, np.inf), out=sa)
        np.minimum(sb, np.where(diff, w, np.inf), out=sb)
    seeded = np.isfinite(seed).ravel()
    rows.append(np.full(int(seeded.sum()), n))
    cols.append(np.nonzero(seeded)[0])
    data.append(seed.ravel()[seeded])
    graph = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n + 1, n + 1)
    )
    dist = dijkstra(graph, directed=True, indices=n)
    return dist[:n].reshape(spec.shape)


def signed_distance_field(
    F: GridSet,
    psi: AnisoNorm,
    mode: Literal["exact", "fast", "auto"] = "auto",
    order: int = 16,
) -> ScalarField:
    """
    sd^ψ_F at cell centers: negative inside F, positive outside.

    exact: min over boundary cell-edge midpoints y of ψ(x − y).
    fast: shortest paths on the order-k neighbourhood graph with edge length
    ψ(e·Δx); overestimates by at most METRICATION_FACTORS[k].
    auto: exact up to WULFF_EXACT_DISTANCE_MAX_CELLS cells, fast beyond.
    """
    if F.is_empty() or F.is_full():
        raise UndefinedDistanceError("signed distance of an empty or full set is undefined")
    spec = F.spec
    if mode == "auto":
        mode = "exact" if spec.nx * spec.ny <= load_settings().exact_distance_max_cells else "fast"
    if mode == "exact":
        X, Y = spec.cell_centers()
        queries = np.stack([X.ravel(), Y.ravel()], axis=-1)
        unsigned = _exact_unsigned(boundary_points(F), queries, psi).reshape(spec.shape)
    elif mode == "fast":
        if order not in METRICATION_FACTORS:
            raise ValueError(f"fast distance needs order in {sorted(METRICATION_FACTORS)}, got {order}")
        unsigned = _fast_unsigned(F, psi, order)
    else:
        raise ValueError(f"unknown distance mode {mode!r}")
    return ScalarField(spec=spec, values=np.where(F.mask, -unsigned, unsigned))


@lru_cache(maxsize=32)
def perimeter_weights(
    phi: AnisoNorm, order: int = 16, bound: float = DEFAULT_STENCIL_BOUND
) -> CroftonStencil:
    """
    Fit nonnegative pair weights so Σ_half w_e|e·ν| ≈ φ(ν) on FIT_DIRECTIONS normals.

    The fit minimizes the worst relative directional error (linear program);
    the achieved error is recorded on the stencil.
    """
    if order not in HALF_OFFSETS:
        raise ValueError(f"stencil order must be one of {sorted(HALF_OFFSETS)}, got {order}")
    half = np.array(HALF_OFFSETS[order], dtype=float)
    theta = np.pi * np.arange(FIT_DIRECTIONS) / FIT_DIRECTIONS
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    target = eval_norm(phi, normals)
    # rows scaled by 1/φ(ν) so the bound t is a relative error
    A = np.abs(normals @ half.T) / target[:, None]
    m = half.shape[0]
    ones = np.ones((FIT_DIRECTIONS, 1))
    A_ub = np.block([[A, -ones], [-A, -ones]])
    b_ub = np.concatenate([np.ones(FIT_DIRECTIONS), -np.ones(FIT_DIRECTIONS)])
    c = np.zeros(m + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * (m + 1), method="highs")
    if not res.success:
        raise StencilInsufficientError(f"weight fit failed: {res.message}", max_error=math.inf)
    w = np.clip(res.x[:m], 0.0, None)
    err = float(np.max(np.abs(A @ w - 1.0)))
    if err > bound:
        raise StencilInsufficientError(
            f"order-{order} stencil reproduces {phi.label()} only within {err:.2%} "
            f"(bound {bound:.2%})",
            max_error=err,
        )
    logger.debug("fitted order-%d stencil for %s, max error %.3e", order, phi.label(), err)
    offsets = [tuple(int(v) for v in e) for e in half] + [tuple(int(-v) for v in e) for e in half]
    weights = list(0.5 * w) + list(0.5 * w)
    return CroftonStencil(
        norm=phi, order=order, offsets=tuple(offsets), weights=tuple(weights), max_error=err
    )


def anisotropic_perimeter(E: GridSet, S: CroftonStencil) -> float:
    """Σ over crossing cell pairs (x, x+e) of w_e·Δx."""
    total = 0.0
    for (dx, dy), w in S.half():
        a, b = _pair_views(E.mask, dx, dy)
        total += w * int(np.count_nonzero(a != b))
    return total * E.spec.spacing


def lattice_perimeter(E: GridSet) -> float:
    """Euclidean perimeter with the default order-16 stencil."""
    return anisotropic_perimeter(E, perimeter_weights(AnisoNorm()))


def hausdorff_sup_distance(A: GridSet, F: GridSet, psi: AnisoNorm) -> float:
    """sup over cells of AΔF of d^ψ_F = |sd^ψ_F| (exact distances)."""
    _same_spec(A, F)
    diff = A.mask ^ F.mask
    if not diff.any():
        return 0.0
    sd = signed_distance_field(F, psi, mode="exact")
    return float(np.abs(sd.values[diff]).max())
