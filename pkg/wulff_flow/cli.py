"""
wulff-flow command line.

    wulff-flow simulate scenario.json [--out DIR]
    wulff-flow diagnose run_dir/snapshots/step_00100.wfgrid --config scenario.json
    wulff-flow wulff norm.json [--points N]
    wulff-flow alexandrov-sweep scenario.json
    wulff-flow reflection-check scenario.json [--flow]
    wulff-flow batch a.json b.json ... [--workers N]

Exit codes: 0 success, 1 error, 2 invariant violation.
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from .anisotropy import ellipticity_bounds, wulff_area, wulff_polygon
from .config import NormSpec, load_config
from .contour_diag import alexandrov_report
from .errors import ConfigError, WulffFlowError
from .runner import alexandrov_sweep, initial_set, reflection_check, run_batch, run_scenario
from .snapshot import read_snapshot
from .symmetry import single_wulff_criterion

logger = logging.getLogger(__name__)


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    result = run_scenario(cfg, args.out)
    print("=" * 60)
    print(f"Scenario {cfg.name}: {result.manifest.status}")
    print("=" * 60)
    _print_json(result.manifest.summary)
    print(f"Artifacts in {result.directory}")
    return 0


def _cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    E = read_snapshot(args.snapshot)
    phi = cfg.phi.build()
    report = alexandrov_report(E, phi, cfg.flow.m, sigma=cfg.flow.smoothing_cells * cfg.grid.spacing)
    _print_json(report.to_json_dict())
    return 0


def _cmd_wulff(args) -> int:
    """Accepts a scenario config or a bare norm spec such as {"family": "ellipse", "a": 2}."""
    p = Path(args.spec)
    if not p.is_file():
        raise ConfigError(f"file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}") from e
    cfg = load_config(p) if "schema_version" in data else None
    if cfg is not None:
        phi = cfg.phi.build()
    else:
        try:
            phi = NormSpec.model_validate(data).build()
        except ValidationError as e:
            raise ConfigError(e.errors()[0]["msg"], key_path=".".join(map(str, e.errors()[0]["loc"]))) from e
    el = ellipticity_bounds(phi)
    out = {
        "norm": phi.label(),
        "wulff_area": wulff_area(phi),
        "L_phi": el.L_phi,
        "Lambda_phi": el.Lambda_phi,
        "polygon": wulff_polygon(phi, n=args.points).round(12).tolist(),
    }
    if cfg is not None and cfg.diagnostics.reflection is not None:
        _, m = initial_set(cfg)
        ok, alpha, threshold = single_wulff_criterion(cfg.diagnostics.reflection.D, phi, m)
        out["single_wulff"] = {"m": m, "holds": ok, "alpha": alpha, "threshold": threshold}
    _print_json(out)
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sw = cfg.diagnostics.sweep
    result = alexandrov_sweep(cfg.phi.build(), sw.amplitudes, sw.mode, sw.samples)
    _print_json(result.model_dump())
    return 0


def _cmd_reflection(args) -> int:
    cfg = load_config(args.config)
    _print_json(reflection_check(cfg, with_flow=args.flow))
    return 0


def _cmd_batch(args) -> int:
    configs = [load_config(p) for p in args.configs]
    results = asyncio.run(run_batch(configs, args.workers))
    code = 0
    print("=" * 60)
    print(f"Batch of {len(configs)} scenarios")
    print("=" * 60)
    for cfg, res in zip(configs, results):
        if isinstance(res, BaseException):
            print(f"  {cfg.name}: FAILED ({type(res).__name__}: {res})")
            code = max(code, _exit_code(res))
        else:
            print(f"  {cfg.name}: {res.manifest.status} -> {res.directory}")
    return code


def _exit_code(e: BaseException) -> int:
    return e.exit_code if isinstance(e, WulffFlowError) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wulff-flow", description="Area-preserving anisotropic flat flows on a grid")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario end to end")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=None, help="output directory (default: output.directory/name)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("diagnose", help="Alexandrov report for a stored snapshot")
    p.add_argument("snapshot", type=Path)
    p.add_argument("--config", type=Path, required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("wulff", help="|W_φ|, L_φ, Λ_φ and the Wulff polygon of a norm")
    p.add_argument("spec", type=Path, help="norm spec JSON or scenario config")
    p.add_argument("--points", type=int, default=64)
    p.set_defaults(func=_cmd_wulff)

    p = sub.add_parser("alexandrov-sweep", help="perimeter gap against ε on perturbed Wulff shapes")
    p.add_argument("config", type=Path)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("reflection-check", help="check (*)_H on the initial set, optionally along the flow")
    p.add_argument("config", type=Path)
    p.add_argument("--flow", action="store_true")
    p.set_defaults(func=_cmd_reflection)

    p = sub.add_parser("batch", help="run several scenarios concurrently")
    p.add_argument("configs", type=Path, nargs="+")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_batch)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except WulffFlowError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
