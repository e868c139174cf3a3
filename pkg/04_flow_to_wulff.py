"""
04_flow_to_wulff.py - Flow a Perturbed Wulff Shape to Rest

Purpose: Run a full scenario from a JSON file
- Stage history and artifacts written to runs/perturbed_wulff/
- Lyapunov decrease and Lagrange multiplier statistics
- Exponential rate fit of the distance to the final Wulff shape
"""

import sys
from pathlib import Path

from wulff_flow.config import load_config
from wulff_flow.errors import WulffFlowError
from wulff_flow.runner import run_scenario

SCENARIO = Path(__file__).parent / "scenarios" / "perturbed_wulff.json"


def show_stages(result):
    print("\n[Stages]")
    for entry in result.manifest.history:
        if entry["status"] != "started":
            print(f"  {entry['stage']:<12} {entry['status']}")
    print(f"  {len(result.manifest.files)} files hashed in manifest.json")


def show_energy(result):
    trace = result.trace
    series = trace.lyapunov_series()
    print("\n[Energy]")
    print(f"  L(E_0) = {series[0]:.5f}  L(E_final) = {series[-1]:.5f}  over {len(trace.reports)} steps")
    lag = result.manifest.summary["lagrange"]
    print(f"  off-constraint steps {lag['off_constraint_fraction']:.1%}, saturated {lag['saturated_fraction']:.1%}")
    print(f"  terminal area error {lag['terminal_area_error']:.3%}")
    print(f"  Hölder constant sup d/√|t-s| ≈ {result.manifest.summary['holder_constant']:.3f}")


def show_rate(result):
    fit = result.rate_fit
    print("\n[Convergence to the fitted Wulff shape]")
    if fit is None:
        print("  rate fit disabled")
    elif fit.stationary:
        print(f"  stationary: {fit.note}")
    else:
        print(f"  C = {fit.C:.4f}  C0 = {fit.C0:.4f}  R² = {fit.r_squared:.3f}  ({fit.points} points)")
        print(f"  accepted: {fit.accepted}")


def main():
    print("=" * 60)
    print("Flow to the Wulff Shape")
    print("=" * 60)

    cfg = load_config(SCENARIO)
    print(f"\nScenario {cfg.name}: {cfg.phi.build().label()}, h = {cfg.flow.h}, Δx = {cfg.grid.spacing}")
    try:
        result = run_scenario(cfg)
    except WulffFlowError as e:
        print(f"\nScenario failed: {type(e).__name__}: {e}")
        sys.exit(e.exit_code)

    show_stages(result)
    show_energy(result)
    show_rate(result)

    print("\n" + "=" * 60)
    print(f"Artifacts in {result.directory}")
    print("=" * 60)


if __name__ == "__main__":
    main()
