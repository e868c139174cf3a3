"""
08_parallel_sweep.py - Batches, Time-Step Sweeps and Run Bookkeeping

Purpose: Verify the features needed to run many scenarios unattended
- Parallel execution: run shipped scenarios on worker threads
- Time-step sweep: L∞ constant c in sup d ≤ c√h and the Hölder constant in time
- Audit logging: read back the JSONL trail of a run
- Error handling: a failing scenario reports its stage and exit code
"""

import asyncio
import time
from pathlib import Path

from wulff_flow.anisotropy import AnisoNorm, wulff_area, wulff_polygon
from wulff_flow.audit import AuditLogger
from wulff_flow.config import load_config, parse_config
from wulff_flow.errors import WulffFlowError
from wulff_flow.grid_set import GridSpec, rasterize
from wulff_flow.mm_stepper import FlowParams, StopCriteria, calibrate_linf_constant, holder_constant, run_flow
from wulff_flow.runner import run_batch

SCENARIOS = Path(__file__).parent / "scenarios"
BATCH = ["wulff_fourier_stationary", "reflection_negative_control", "single_wulff_plus"]
RUN_DIR = Path("./runs")

audit_logger = AuditLogger(RUN_DIR, "sweep_events.jsonl")


# =============================================================================
# 1. Parallel Execution
# =============================================================================
def check_parallel_execution():
    print("\n" + "=" * 60)
    print("1. Parallel Execution")
    print("=" * 60)

    configs = [load_config(SCENARIOS / f"{name}.json") for name in BATCH]
    print(f"\nRunning {len(configs)} scenarios in parallel...")
    start_time = time.time()
    results = asyncio.run(run_batch(configs))
    total_duration = time.time() - start_time

    print("\n[Batch Results]")
    for cfg, r in zip(configs, results):
        if isinstance(r, BaseException):
            print(f"  {cfg.name:<30} {type(r).__name__}: {r}")
        else:
            print(f"  {cfg.name:<30} {r.manifest.status}, d = {r.manifest.summary.get('components')}")
        audit_logger.log("batch_result", {"scenario": cfg.name, "ok": not isinstance(r, BaseException)})
    print(f"\n  Total wall time: {total_duration:.2f}s")
    return results


# =============================================================================
# 2. Time-Step Sweep
# =============================================================================
def check_time_step_sweep():
    print("\n" + "=" * 60)
    print("2. Time-Step Sweep")
    print("=" * 60)

    phi = AnisoNorm(family="ellipse", a=1.0, b=0.7)
    spacing = 1.0 / 64.0
    r = 1.1
    spec = GridSpec.around((0.0, 0.0), 1.3, spacing)
    E0 = rasterize([wulff_polygon(phi, (0.0, 0.0), r, 512)], spec)
    m = r * r * wulff_area(phi)
    print(f"\n  {'h':>8} {'c (L∞)':>10} {'Hölder':>10}")
    for h in (1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0):
        params = FlowParams(h=h, m=m, phi=phi, spacing=spacing, order=32, stencil_bound=0.05, max_steps=20, snapshot_stride=1)
        c = calibrate_linf_constant(params)
        trace = run_flow(E0, params, StopCriteria(factor=0.0, patience=100))
        holder = holder_constant(trace)
        print(f"  {h:8.4f} {c:10.4f} {holder:10.4f}")
        audit_logger.log("sweep_row", {"h": h, "linf_constant": c, "holder_constant": holder})


# =============================================================================
# 3. Audit Logging
# =============================================================================
def check_audit_logging():
    print("\n" + "=" * 60)
    print("3. Audit Logging")
    print("=" * 60)

    run_log = AuditLogger(RUN_DIR / BATCH[0])
    steps = run_log.get_logs("step")
    stages = [e["stage"] for e in run_log.get_logs("stage_complete")]
    print(f"\n  {BATCH[0]}: {len(steps)} step events, stages completed {stages}")
    print(f"  event counts: {dict(run_log.counts())}")
    print(f"  sweep rows logged: {len(audit_logger.get_logs('sweep_row'))}")


# =============================================================================
# 4. Error Handling
# =============================================================================
def check_error_handling():
    print("\n" + "=" * 60)
    print("4. Error Handling")
    print("=" * 60)

    broken = {
        "schema_version": "wulff-flow/1",
        "name": "too_coarse",
        "grid": {"spacing": 0.1, "extent": 1.0},
        "flow": {"h": 0.0625},
        "shape": {"kind": "wulff", "radius": 0.5},
    }
    try:
        parse_config(broken)
    except WulffFlowError as e:
        print(f"\n  rejected ({type(e).__name__}, exit code {e.exit_code}): {e}")
        audit_logger.log("expected_error", {"error_type": type(e).__name__, "error": str(e)})


def main():
    print("=" * 60)
    print("Batches and Sweeps")
    print("=" * 60)

    tests = [
        ("Parallel Execution", check_parallel_execution),
        ("Time-Step Sweep", check_time_step_sweep),
        ("Audit Logging", check_audit_logging),
        ("Error Handling", check_error_handling),
    ]

    for test_name, test_func in tests:
        try:
            test_func()
        except Exception as e:
            print(f"\n[{test_name} Failed]: {e}")
            audit_logger.log("test_error", {"test": test_name, "error": str(e)})

    logs = audit_logger.get_logs()
    print(f"\nTotal audit log entries: {len(logs)}")
    print(f"Log file: {audit_logger.log_path}")


if __name__ == "__main__":
    main()
