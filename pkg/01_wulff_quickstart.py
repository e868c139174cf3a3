"""
01_wulff_quickstart.py - Norms and Wulff Shapes

Purpose: Get familiar with the anisotropy layer
- Build euclidean, ellipse and Fourier norms
- Wulff area, equivalence constant L_φ and curvature bound Λ_φ
- Dual norm, Cahn-Hoffman map and the isoperimetric equality P_φ(W_φ) = 2|W_φ|
"""

import numpy as np

from wulff_flow.anisotropy import (
    AnisoNorm,
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
from wulff_flow.errors import EllipticityError

NORMS = [
    AnisoNorm(),
    AnisoNorm(family="ellipse", a=1.0, b=0.6),
    AnisoNorm(family="fourier", coeffs=(1.0, 0.08)),
    AnisoNorm(family="fourier", coeffs=(1.0, 0.0, 0.0, 0.02)),
]


def show_norm_table():
    """Print the basic constants of every built-in example norm."""
    print("\n[Norms]")
    print(f"  {'norm':<32} {'|W|':>9} {'L_phi':>8} {'Lambda':>8}")
    for phi in NORMS:
        el = ellipticity_bounds(phi)
        print(f"  {phi.label():<32} {wulff_area(phi):9.5f} {el.L_phi:8.4f} {el.Lambda_phi:8.4f}")


def show_isoperimetric_equality():
    print("\n[Isoperimetric equality on the Wulff polygon]")
    for phi in NORMS:
        poly = wulff_polygon(phi, (0.0, 0.0), 1.0, 2048)
        P = polygon_perimeter(phi, poly)
        A = polygon_area(poly)
        print(f"  {phi.label():<32} P = {P:.6f}  2|W| = {2 * A:.6f}")


def show_duality():
    print("\n[Duality]")
    phi = NORMS[2]
    theta = np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False)
    xi = cahn_hoffman(phi, theta)
    print(f"  phi°(xi(theta)) on {phi.label()}: {np.round(dual_norm(phi, xi), 10)}")
    v = np.random.default_rng(0).normal(size=(1000, 2))
    twice = dual_norm(dual_of(phi), v)
    print(f"  max |phi°° - phi| / phi on 1000 vectors: {np.max(np.abs(twice / eval_norm(phi, v) - 1.0)):.2e}")


def show_compatibility():
    print("\n[Reflection compatibility]")
    for phi in NORMS:
        axes = [check_compatibility(phi, nu) for nu in ((1.0, 0.0), (0.0, 1.0))]
        print(f"  {phi.label():<32} e1: {axes[0]}  e2: {axes[1]}")


def show_rejection():
    print("\n[Non-elliptic input]")
    try:
        AnisoNorm(family="fourier", coeffs=(1.0, 0.0, 0.1))
    except EllipticityError as e:
        print(f"  rejected as expected: {e}")


def main():
    print("=" * 60)
    print("Wulff Shapes Quickstart")
    print("=" * 60)

    show_norm_table()
    show_isoperimetric_equality()
    show_duality()
    show_compatibility()
    show_rejection()

    print("\n" + "=" * 60)
    print("Quickstart complete")
    print("=" * 60)


if __name__ == "__main__":
    main()
