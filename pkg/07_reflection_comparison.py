"""
07_reflection_comparison.py - Reflection Comparison and Containment

Purpose: Check the reflection property that localizes the limit shape
- (**) on the initial set for a root-system family and along the flow
- A negative control: two unequal disks fail the comparison
- Single-Wulff area threshold and the mixed-area containment bound
"""

import math
from pathlib import Path

from wulff_flow.anisotropy import AnisoNorm
from wulff_flow.config import load_config
from wulff_flow.runner import reflection_check
from wulff_flow.symmetry import mixed_area, single_wulff_criterion

SCENARIOS = Path(__file__).parent / "scenarios"
UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


def family_check(name, with_flow):
    cfg = load_config(SCENARIOS / f"{name}.json")
    out = reflection_check(cfg, with_flow=with_flow)
    initial = out["initial"]
    print(f"\n[{name}]")
    print(f"  initial set: holds {initial['holds']}  max violation {initial['max_violation']:.4e}"
          f"  (tolerance {initial['tolerance']:.4e}, {len(initial['family'])} half-spaces)")
    worst = max(d["excess"] for d in out["distance"])
    print(f"  distance comparison worst excess {worst:.4f}")
    if with_flow:
        flow = out["flow"]
        print(f"  along the flow: preserved {flow['preserved']} over {len(flow['steps'])} snapshots")


def thresholds():
    print("\n[Single-Wulff area threshold]")
    phi = AnisoNorm()
    for side in (1.0, 0.5):
        D = [(side * x, side * y) for x, y in UNIT_SQUARE]
        _, alpha, threshold = single_wulff_criterion(D, phi, 1.0)
        print(f"  square of side {side}: α = {alpha:.4f}, m must exceed {threshold:.4f}")
    _, _, threshold = single_wulff_criterion([(-0.5, 0.0), (0.5, 0.0)], phi, 1.0)
    print(f"  unit segment: m must exceed {threshold:.4f}")

    print("\n[Containment bound area |D ⊕ rW|]")
    for m in (1.0, math.pi, 10.0):
        print(f"  D = unit square, m = {m:.4f}: {mixed_area(UNIT_SQUARE, m, phi):.4f}")


def main():
    print("=" * 60)
    print("Reflection Comparison")
    print("=" * 60)

    family_check("hexagonal_cluster", with_flow=True)
    family_check("reflection_negative_control", with_flow=False)
    thresholds()

    print("\n" + "=" * 60)
    print("Reflection checks complete")
    print("=" * 60)


if __name__ == "__main__":
    main()
