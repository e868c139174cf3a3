"""
Planar norms carried by their restriction to the unit circle.

A norm φ on ℝ² is stored as γ(θ) = φ(cosθ, sinθ) together with γ′ and γ″.
Everything downstream (Cahn–Hoffman map, Wulff shapes, anisotropic
curvature, Gauss–Bonnet) is written in terms of γ.

Families:
- euclidean: γ ≡ 1
- ellipse(a, b): γ(θ) = sqrt(a² cos²θ + b² sin²θ)
- fourier(c0, c2, c4, ...): γ(θ) = Σ_k c_{2k} cos(2kθ)
- sampled(values): trigonometric interpolation of γ on a uniform power-of-two grid
"""

import math
from functools import lru_cache
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import minimize_scalar

from .errors import EllipticityError, ResolutionError

MIN_SAMPLED_RESOLUTION = 16
SCAN_RESOLUTION = 4096
DUAL_GRID = 2048
DUAL_THETA_TOL = 1e-10
DUAL_SAMPLES = 256
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

NormFamily = Literal["euclidean", "ellipse", "fourier", "sampled"]


def _theta_grid(n: int) -> NDArray[np.float64]:
    return 2.0 * np.pi * np.arange(n) / n


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


# =============================================================================
# AnisoNorm
# =============================================================================
class AnisoNorm(BaseModel):
    """
    Norm φ on ℝ² given through γ = φ|_{S¹}.

    Instances are immutable and hashable; construction checks evenness,
    positivity and regular ellipticity (min(γ+γ″) > 0).
    """

    model_config = ConfigDict(frozen=True)

    family: NormFamily = "euclidean"
    a: float = Field(default=1.0, gt=0, description="ellipse semi-axis along the rotated x-axis")
    b: float = Field(default=1.0, gt=0, description="ellipse semi-axis along the rotated y-axis")
    coeffs: tuple[float, ...] = Field(default=(1.0,), description="c0, c2, c4, ... of the cosine series")
    values: tuple[float, ...] = Field(default=(), description="γ samples on a uniform θ grid")
    rotation: float = Field(default=0.0, description="orientation offset in radians")

    @model_validator(mode="after")
    def _check_norm(self) -> "AnisoNorm":
        if self.family == "fourier" and len(self.coeffs) == 0:
            raise ValueError("fourier family needs at least c0")
        if self.family == "sampled":
            n = len(self.values)
            if n < MIN_SAMPLED_RESOLUTION or not _is_power_of_two(n):
                raise ResolutionError(
                    f"sampled norm needs a power-of-two grid of at least "
                    f"{MIN_SAMPLED_RESOLUTION} values, got {n}"
                )
            v = np.asarray(self.values)
            if not np.allclose(v[: n // 2], v[n // 2 :], rtol=1e-9, atol=1e-12):
                raise ValueError("sampled values are not π-periodic (norms are even)")
        g, _, g2 = self.derivatives(_theta_grid(SCAN_RESOLUTION))
        if float(g.min()) <= 0.0:
            raise EllipticityError(f"{self.label()}: γ is not positive (min {g.min():.3g})")
        curv = g + g2
        if float(curv.min()) <= 0.0:
            raise EllipticityError(
                f"{self.label()}: not regular elliptic, min(γ+γ″) = {curv.min():.4g} ≤ 0"
            )
        return self

    def label(self) -> str:
        if self.family == "euclidean":
            return "euclidean"
        if self.family == "ellipse":
            return f"ellipse({self.a:g},{self.b:g})"
        if self.family == "fourier":
            return "fourier(" + ",".join(f"{c:g}" for c in self.coeffs) + ")"
        return f"sampled(n={len(self.values)})"

    # -------------------------------------------------------------------------
    # γ and its derivatives
    # -------------------------------------------------------------------------
    def derivatives(
        self, theta: ArrayLike
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """(γ, γ′, γ″) at the given angles; analytic or spectral depending on family."""
        t = np.asarray(theta, dtype=float) - self.rotation
        if self.family == "euclidean":
            one = np.ones_like(t)
            return one, np.zeros_like(t), np.zeros_like(t)
        if self.family == "ellipse":
            mean = 0.5 * (self.a**2 + self.b**2)
            amp = 0.5 * (self.a**2 - self.b**2)
            sq = mean + amp * np.cos(2.0 * t)
            sq1 = -2.0 * amp * np.sin(2.0 * t)
            sq2 = -4.0 * amp * np.cos(2.0 * t)
            g = np.sqrt(sq)
            g1 = sq1 / (2.0 * g)
            g2 = sq2 / (2.0 * g) - sq1**2 / (4.0 * g**3)
            return g, g1, g2
        if self.family == "fourier":
            g = np.zeros_like(t)
            g1 = np.zeros_like(t)
            g2 = np.zeros_like(t)
            for k, c in enumerate(self.coeffs):
                w = 2.0 * k
                g += c * np.cos(w * t)
                g1 -= c * w * np.sin(w * t)
                g2 -= c * w * w * np.cos(w * t)
            return g, g1, g2
        return _spectral_derivatives(self.values, t)

    def gamma(self, theta: ArrayLike) -> NDArray[np.float64]:
        return self.derivatives(theta)[0]

    def curvature_weight(self, theta: ArrayLike) -> NDArray[np.float64]:
        """γ + γ″, the factor turning κ into κ^φ."""
        g, _, g2 = self.derivatives(theta)
        return g + g2

    def __call__(self, v: ArrayLike) -> NDArray[np.float64]:
        return eval_norm(self, v)


@lru_cache(maxsize=64)
def _spectral_coefficients(
    values: tuple[float, ...],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], float, float]:
    """(k, cos coeffs, sin coeffs, mean, Nyquist coeff) of the trigonometric interpolant."""
    v = np.asarray(values, dtype=float)
    n = v.size
    c = np.fft.rfft(v) / n
    k = np.arange(1, n // 2, dtype=float)
    cos_c = 2.0 * c[1 : n // 2].real
    sin_c = -2.0 * c[1 : n // 2].imag
    return k, cos_c, sin_c, float(c[0].real), float(c[n // 2].real)


def _spectral_derivatives(
    values: tuple[float, ...], t: NDArray[np.float64], chunk: int = 8192
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    n = len(values)
    k, cos_c, sin_c, c0, nyq = _spectral_coefficients(values)
    flat = t.reshape(-1)
    g = np.empty_like(flat)
    g1 = np.empty_like(flat)
    g2 = np.empty_like(flat)
    half = n / 2.0
    for start in range(0, flat.size, chunk):
        tt = flat[start : start + chunk]
        phase = np.outer(tt, k)
        cs = np.cos(phase)
        sn = np.sin(phase)
        g[start : start + chunk] = c0 + cs @ cos_c + sn @ sin_c + nyq * np.cos(half * tt)
        g1[start : start + chunk] = sn @ (-k * cos_c) + cs @ (k * sin_c) - nyq * half * np.sin(half * tt)
        g2[start : start + chunk] = (
            cs @ (-k * k * cos_c) + sn @ (-k * k * sin_c) - nyq * half * half * np.cos(half * tt)
        )
    return g.reshape(t.shape), g1.reshape(t.shape), g2.reshape(t.shape)


# =============================================================================
# Derived records
# =============================================================================
class EllipticityData(BaseModel):
    """Norm-equivalence constant L_φ and ellipticity constant Λ_φ."""

    L_phi: float = Field(..., ge=1.0)
    Lambda_phi: float = Field(..., gt=0.0)
    gamma_min: float
    gamma_max: float
    curvature_weight_min: float
    curvature_weight_max: float


class WulffShape(BaseModel):
    """W_φ(x, r) = x + r·W_φ."""

    model_config = ConfigDict(frozen=True)

    norm: AnisoNorm
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = Field(default=1.0, gt=0)

    def polygon(self, n: int = 512) -> NDArray[np.float64]:
        return wulff_polygon(self.norm, self.center, self.radius, n)

    def area(self) -> float:
        return self.radius**2 * wulff_area(self.norm)

    def perimeter(self) -> float:
        return 2.0 * self.area() / self.radius

    def contains(self, points: ArrayLike) -> NDArray[np.bool_]:
        """Membership through the gauge φ°(p − x) ≤ r."""
        p = np.asarray(points, dtype=float) - np.asarray(self.center)
        return eval_norm(dual_of(self.norm), p) <= self.radius


# =============================================================================
# Operations
# =============================================================================
def eval_norm(norm: AnisoNorm, v: ArrayLike) -> NDArray[np.float64]:
    """φ(v) = |v|·γ(arg v), vectorized over the last axis of length 2."""
    vec = np.asarray(v, dtype=float)
    x, y = vec[..., 0], vec[..., 1]
    r = np.hypot(x, y)
    if norm.family == "euclidean":
        out = r
    elif norm.family == "ellipse":
        c, s = math.cos(norm.rotation), math.sin(norm.rotation)
        xr = c * x + s * y
        yr = -s * x + c * y
        out = np.hypot(norm.a * xr, norm.b * yr)
    else:
        out = r * norm.gamma(np.arctan2(y, x))
        out = np.where(r > 0.0, out, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _support_ratio(norm: AnisoNorm, theta: NDArray, w: NDArray) -> NDArray:
    return (np.cos(theta) * w[..., 0] + np.sin(theta) * w[..., 1]) / norm.gamma(theta)


def dual_norm(norm: AnisoNorm, w: ArrayLike) -> NDArray[np.float64]:
    """
    φ°(w) = sup{x·w : φ(x) ≤ 1} = max_θ (cosθ, sinθ)·w / γ(θ).

    Grid maximum over DUAL_GRID directions followed by a vectorized
    golden-section refinement down to DUAL_THETA_TOL in θ.
    """
    arr = np.asarray(w, dtype=float)
    scalar = arr.ndim == 1
    flat = arr.reshape(-1, 2)
    out = np.zeros(flat.shape[0])
    grid = _theta_grid(DUAL_GRID)
    step = 2.0 * np.pi / DUAL_GRID
    chunk = 512
    for start in range(0, flat.shape[0], chunk):
        ww = flat[start : start + chunk]
        vals = (np.outer(ww[:, 0], np.cos(grid)) + np.outer(ww[:, 1], np.sin(grid))) / norm.gamma(grid)
        j = np.argmax(vals, axis=1)
        lo = grid[j] - step
        hi = grid[j] + step
        x1 = hi - _GOLDEN * (hi - lo)
        x2 = lo + _GOLDEN * (hi - lo)
        f1 = _support_ratio(norm, x1, ww)
        f2 = _support_ratio(norm, x2, ww)
        while float(np.max(hi - lo)) > DUAL_THETA_TOL:
            left = f1 > f2
            hi = np.where(left, x2, hi)
            lo = np.where(left, lo, x1)
            nx1 = hi - _GOLDEN * (hi - lo)
            nx2 = lo + _GOLDEN * (hi - lo)
            x1, x2 = nx1, nx2
            f1 = _support_ratio(norm, x1, ww)
            f2 = _support_ratio(norm, x2, ww)
        refined = np.maximum(f1, f2)
        out[start : start + chunk] = np.maximum(refined, vals.max(axis=1))
    out[np.hypot(flat[:, 0], flat[:, 1]) == 0.0] = 0.0
    if scalar:
        return float(out[0])
    return out.reshape(arr.shape[:-1])


@lru_cache(maxsize=64)
def dual_of(norm: AnisoNorm, n: int = DUAL_SAMPLES) -> AnisoNorm:
    """The dual norm φ° as a sampled norm, so it can be evaluated and dualized again."""
    if norm.family == "euclidean":
        return norm
    if norm.family == "ellipse":
        return AnisoNorm(family="ellipse", a=1.0 / norm.a, b=1.0 / norm.b, rotation=norm.rotation)
    theta = _theta_grid(n)
    units = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    values = dual_norm(norm, units)
    return AnisoNorm(family="sampled", values=tuple(float(v) for v in values))


def gamma_derivatives(norm: AnisoNorm, theta: float) -> tuple[float, float, float]:
    g, g1, g2 = norm.derivatives(theta)
    return float(g), float(g1), float(g2)


def cahn_hoffman(norm: AnisoNorm, theta: ArrayLike) -> NDArray[np.float64]:
    """ξ(θ) = γ(θ)ν(θ) + γ′(θ)τ(θ); the point of ∂W_φ with outward normal ν(θ)."""
    t = np.asarray(theta, dtype=float)
    g, g1, _ = norm.derivatives(t)
    c, s = np.cos(t), np.sin(t)
    return np.stack([g * c - g1 * s, g * s + g1 * c], axis=-1)


def wulff_polygon(
    norm: AnisoNorm, center: ArrayLike = (0.0, 0.0), r: float = 1.0, n: int = 512
) -> NDArray[np.float64]:
    """n vertices center + r·ξ(θ_i) at uniform θ_i, counter-clockwise."""
    if n < 16:
        raise ValueError(f"wulff_polygon needs n >= 16, got {n}")
    return np.asarray(center, dtype=float) + r * cahn_hoffman(norm, _theta_grid(n))


@lru_cache(maxsize=64)
def wulff_area(norm: AnisoNorm) -> float:
    """|W_φ| = ½∫₀^{2π} γ(γ+γ″)dθ (periodic trapezoid, spectrally accurate)."""
    g, _, g2 = norm.derivatives(_theta_grid(SCAN_RESOLUTION))
    return float(np.pi * np.mean(g * (g + g2)))


def _refined_extreme(f, theta0: float, step: float, maximize: bool) -> float:
    sign = -1.0 if maximize else 1.0
    res = minimize_scalar(
        lambda t: sign * float(f(t)),
        bounds=(theta0 - step, theta0 + step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    # bounded search may stop short of the grid value on flat plateaus
    best = min(float(res.fun), sign * float(f(theta0)))
    return sign * best


def ellipticity_bounds(norm: AnisoNorm) -> EllipticityData:
    """L_φ = max(max γ, 1/min γ) and Λ_φ = max(max(γ+γ″), 1/min(γ+γ″))."""
    grid = _theta_grid(SCAN_RESOLUTION)
    step = 2.0 * np.pi / SCAN_RESOLUTION
    g, _, g2 = norm.derivatives(grid)
    curv = g + g2

    def gam(t):
        return norm.gamma(t)

    def cw(t):
        return norm.curvature_weight(t)

    g_max = _refined_extreme(gam, grid[np.argmax(g)], step, maximize=True)
    g_min = _refined_extreme(gam, grid[np.argmin(g)], step, maximize=False)
    c_max = _refined_extreme(cw, grid[np.argmax(curv)], step, maximize=True)
    c_min = _refined_extreme(cw, grid[np.argmin(curv)], step, maximize=False)
    if c_min <= 0.0:
        raise EllipticityError(f"{norm.label()}: min(γ+γ″) = {c_min:.4g} ≤ 0")
    return EllipticityData(
        L_phi=max(g_max, 1.0 / g_min, 1.0),
        Lambda_phi=max(c_max, 1.0 / c_min),
        gamma_min=g_min,
        gamma_max=g_max,
        curvature_weight_min=c_min,
        curvature_weight_max=c_max,
    )


def reflect_vectors(x: ArrayLike, nu: ArrayLike) -> NDArray[np.float64]:
    """Ψ_ν x = x − 2(x·ν)ν (reflection across the line through 0 normal to ν)."""
    p = np.asarray(x, dtype=float)
    n = np.asarray(nu, dtype=float)
    return p - 2.0 * (p @ n)[..., None] * n


def check_compatibility(norm: AnisoNorm, nu: ArrayLike, tol: float = 1e-9, samples: int = 720) -> bool:
    """True iff φ(x) = φ(x − 2(x·ν)ν) on sampled x within tol."""
    n = np.asarray(nu, dtype=float)
    if abs(float(np.hypot(n[0], n[1])) - 1.0) > 1e-9:
        raise ValueError("compatibility direction must be a unit vector")
    theta = _theta_grid(samples) + 0.5 * np.pi / samples
    x = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    deviation = np.abs(eval_norm(norm, x) - eval_norm(norm, reflect_vectors(x, n)))
    return bool(deviation.max() <= tol)


def polygon_perimeter(norm: AnisoNorm, vertices: ArrayLike) -> float:
    """P_φ of a closed polygon: Σ φ(edge normal)·|edge|."""
    v = np.asarray(vertices, dtype=float)
    edges = np.roll(v, -1, axis=0) - v
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=-1)
    return float(np.sum(eval_norm(norm, normals)))


def polygon_area(vertices: ArrayLike) -> float:
    """Signed shoelace area (positive for counter-clockwise vertices)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
