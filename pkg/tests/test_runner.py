import asyncio
import hashlib
import json
import math

import matplotlib
import numpy as np
import pytest

from conftest import minimal_config
from wulff_flow.anisotropy import AnisoNorm
from wulff_flow.audit import AuditLogger
from wulff_flow.config import parse_config
from wulff_flow.errors import AcceptanceFailure, ConfigError, DomainTooSmallError, WindowError, WulffFlowError
from wulff_flow.runner import (
    ScenarioResult,
    alexandrov_sweep,
    export_frames,
    fit_exponential_rate,
    reflection_check,
    run_batch,
    run_scenario,
)


@pytest.fixture(scope="module")
def disk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("disk")
    return run_scenario(parse_config(minimal_config(root)))


# =============================================================================
# Rate fits
# =============================================================================
def test_exact_exponential_is_recovered():
    t = np.linspace(0.0, 5.0, 20)
    fit = fit_exponential_rate(t, 2.0 * np.exp(-t / 1.5))
    assert fit.accepted
    assert fit.C == pytest.approx(2.0)
    assert fit.C0 == pytest.approx(1.5)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.window == (0.0, 5.0)


def test_constant_series_is_not_exponential():
    fit = fit_exponential_rate(np.arange(10.0), np.ones(10))
    assert not fit.accepted
    assert fit.C0 is None
    assert "non-exponential" in fit.note


def test_noisy_decay_within_tolerance():
    rng = np.random.default_rng(1)
    t = np.linspace(0.0, 4.0, 40)
    y = 0.3 * np.exp(-t / 0.8) * np.exp(0.05 * rng.normal(size=t.size))
    fit = fit_exponential_rate(t, y)
    assert fit.accepted
    assert fit.C0 == pytest.approx(0.8, rel=0.15)


def test_window_problems_raise():
    t = np.linspace(0.0, 5.0, 20)
    with pytest.raises(WindowError):
        fit_exponential_rate(t, np.exp(-t), window=(0.0, 1.0))
    y = np.exp(-t)
    y[4] = 0.0
    with pytest.raises(WindowError, match="nonpositive"):
        fit_exponential_rate(t, y)


# =============================================================================
# Scenario runs
# =============================================================================
def test_run_writes_all_artifacts(disk_run):
    d = disk_run.directory
    assert disk_run.manifest.status == "completed"
    for name in ("trace.csv", "wulff_fit.json", "rate_fit.json", "manifest.json", "events.jsonl"):
        assert (d / name).is_file()
    assert sorted(p.name for p in (d / "snapshots").iterdir()) == [
        "step_00000.wfgrid", "step_00002.wfgrid", "step_00004.wfgrid",
    ]
    assert len(list((d / "alexandrov").glob("*.json"))) == 3
    assert len(list((d / "frames").glob("*.svg"))) == 3
    assert not (d / "reflection.json").exists()


def test_manifest_hashes_every_artifact(disk_run):
    d = disk_run.directory
    manifest = json.loads((d / "manifest.json").read_text())
    assert "manifest.json" not in manifest["files"]
    assert manifest["files"]["trace.csv"] == hashlib.sha256((d / "trace.csv").read_bytes()).hexdigest()
    stages = [h["stage"] for h in manifest["history"] if h["status"] == "completed"]
    assert stages == ["setup", "flow", "trace", "diagnostics", "fit", "frames", "acceptance"]
    assert manifest["summary"]["components"] == 1
    assert manifest["summary"]["stop_reason"] == "max_steps"


def test_short_run_is_flagged_stationary(disk_run):
    assert disk_run.rate_fit.stationary
    assert not disk_run.rate_fit.accepted
    assert disk_run.wulff_fit["d"] == 1


def test_alexandrov_snapshots_report_one_component(disk_run):
    doc = json.loads((disk_run.directory / "alexandrov" / "step_00004.json").read_text())
    assert doc["step"] == 4
    assert doc["d"] == 1
    assert doc["gauss_bonnet"][0] == pytest.approx(2 * math.pi, rel=0.05)


def test_audit_trail_records_steps(disk_run):
    audit = AuditLogger(disk_run.directory)
    events = audit.get_logs()
    assert audit.counts()["step"] == 4
    assert events[-1]["event_type"] == "scenario_completed"
    assert {e["scenario"] for e in events} == {"disk"}
    assert len(audit.get_logs("stage_complete", stage="flow")) == 1


def test_reruns_are_byte_identical(tmp_path, disk_run):
    again = run_scenario(parse_config(minimal_config(tmp_path)), tmp_path / "again")
    for rel in ("trace.csv", "frames/step_00004.svg", "snapshots/step_00004.wfgrid", "wulff_fit.json"):
        assert (again.directory / rel).read_bytes() == (disk_run.directory / rel).read_bytes()


def test_frame_export_leaves_global_style_alone(tmp_path, disk_run):
    before = dict(matplotlib.rcParams)
    paths = export_frames(disk_run.trace, tmp_path / "frames", AnisoNorm())
    assert [p.name for p in paths] == ["step_00000.svg", "step_00002.svg", "step_00004.svg"]
    assert paths[0].read_bytes() == (disk_run.directory / "frames" / "step_00000.svg").read_bytes()
    assert dict(matplotlib.rcParams) == before


def test_failed_stage_lands_in_manifest(tmp_path):
    cfg = parse_config(minimal_config(tmp_path, shape={"kind": "wulff", "radius": 1.36}))
    with pytest.raises(DomainTooSmallError):
        run_scenario(cfg)
    manifest = json.loads((tmp_path / "runs" / "disk" / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert manifest["failed_stage"] == "setup"
    assert manifest["error_type"] == "DomainTooSmallError"


def test_rejected_flow_numerics_fail_the_setup_stage(tmp_path):
    # a shape too small to cover any cell centre measures m = 0
    cfg = parse_config(minimal_config(tmp_path, shape={"kind": "wulff", "radius": 0.001}))
    with pytest.raises(ConfigError) as info:
        run_scenario(cfg)
    assert info.value.key_path == "flow"
    manifest = json.loads((tmp_path / "runs" / "disk" / "manifest.json").read_text())
    assert manifest["failed_stage"] == "setup"
    assert manifest["error_type"] == "ConfigError"


def test_acceptance_failure(tmp_path):
    cfg = parse_config(minimal_config(tmp_path, acceptance={"components": 2}, output={"frames": False}))
    with pytest.raises(AcceptanceFailure, match="expected 2"):
        run_scenario(cfg)
    manifest = json.loads((tmp_path / "runs" / "disk" / "manifest.json").read_text())
    assert manifest["failed_stage"] == "acceptance"
    assert "trace.csv" in manifest["files"]


def test_acceptance_passes(tmp_path):
    cfg = parse_config(minimal_config(tmp_path, acceptance={"components": 1, "terminal_area_error": 0.05}))
    assert run_scenario(cfg).manifest.status == "completed"


def test_reflection_family_is_monitored(tmp_path):
    cfg = parse_config(
        minimal_config(tmp_path, diagnostics={"reflection": {"m": 2}}, acceptance={"reflection": True, "containment": True})
    )
    result = run_scenario(cfg)
    doc = json.loads((result.directory / "reflection.json").read_text())
    assert doc["preserved"]
    assert doc["steps"] == [0, 2, 4]
    assert result.manifest.summary["reflection_preserved"] is True
    assert result.manifest.summary["contained_in_bound"] is True


# =============================================================================
# Checks, sweeps and batches
# =============================================================================
def test_reflection_check_on_initial_set(tmp_path):
    cfg = parse_config(minimal_config(tmp_path, diagnostics={"reflection": {"m": 2, "strict": True}}))
    out = reflection_check(cfg)
    assert out["initial"]["holds"]
    assert len(out["distance"]) == 4
    assert all(row["ok"] for row in out["distance"])
    assert "flow" not in out
    with pytest.raises(WulffFlowError, match="diagnostics.reflection"):
        reflection_check(parse_config(minimal_config(tmp_path)))


@pytest.mark.parametrize("phi", [AnisoNorm(), AnisoNorm(family="fourier", coeffs=(1.0, 0.08))], ids=lambda p: p.label())
def test_perimeter_gap_is_quadratic_in_deviation(phi):
    result = alexandrov_sweep(phi, [0.01, 0.02, 0.04, 0.08])
    assert result.slope == pytest.approx(2.0, abs=0.15)
    assert result.r_squared >= 0.98
    assert [r.amplitude for r in result.rows] == [0.01, 0.02, 0.04, 0.08]


def test_batch_runs_concurrently_and_collects_failures(tmp_path):
    configs = [
        parse_config(minimal_config(tmp_path, name="a", flow={"max_steps": 2})),
        parse_config(minimal_config(tmp_path, name="b", flow={"max_steps": 2})),
        parse_config(minimal_config(tmp_path, name="broken", shape={"kind": "wulff", "radius": 1.36})),
    ]
    results = asyncio.run(run_batch(configs, max_workers=2))
    assert isinstance(results[0], ScenarioResult) and isinstance(results[1], ScenarioResult)
    assert results[0].directory.name == "a"
    assert isinstance(results[2], DomainTooSmallError)
