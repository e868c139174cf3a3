"""
wulff-flow: area-preserving anisotropic flat flows of planar sets.

Minimizing-movements steps are solved as lattice min cuts with Crofton
weights; contour diagnostics measure the distance to Wulff unions.
"""

from .anisotropy import AnisoNorm, cahn_hoffman, dual_norm, ellipticity_bounds, eval_norm, wulff_area, wulff_polygon
from .config import ScenarioConfig, load_config, parse_config
from .contour_diag import alexandrov_report, curvature_profile, extract_contours, fit_wulff_union
from .errors import InvariantViolation, WulffFlowError
from .grid_set import GridSet, GridSpec, anisotropic_perimeter, perimeter_weights, rasterize, signed_distance_field
from .mm_stepper import FlowParams, FlowTrace, run_flow, step
from .runner import fit_exponential_rate, run_batch, run_scenario
from .symmetry import HalfSpace, check_star_H, containment_bound, reflect, single_wulff_criterion

__version__ = "0.1.0"

__all__ = [
    "AnisoNorm",
    "FlowParams",
    "FlowTrace",
    "GridSet",
    "GridSpec",
    "HalfSpace",
    "InvariantViolation",
    "ScenarioConfig",
    "WulffFlowError",
    "alexandrov_report",
    "anisotropic_perimeter",
    "cahn_hoffman",
    "check_star_H",
    "containment_bound",
    "curvature_profile",
    "dual_norm",
    "ellipticity_bounds",
    "eval_norm",
    "extract_contours",
    "fit_exponential_rate",
    "fit_wulff_union",
    "load_config",
    "parse_config",
    "perimeter_weights",
    "rasterize",
    "reflect",
    "run_batch",
    "run_flow",
    "run_scenario",
    "signed_distance_field",
    "single_wulff_criterion",
    "step",
    "wulff_area",
    "wulff_polygon",
]
