import math

import numpy as np
import pytest

from wulff_flow.anisotropy import AnisoNorm, wulff_area, wulff_polygon
from wulff_flow.grid_set import GridSpec, rasterize

H = 0.125
DX = 1.0 / 32.0
# flow-test disks keep R/√h ≈ 2.8
FLOW_R = 1.0
FLOW_EXTENT = 1.4


@pytest.fixture
def euclid():
    return AnisoNorm()


@pytest.fixture
def ellipse():
    return AnisoNorm(family="ellipse", a=1.0, b=0.6)


@pytest.fixture
def fourier():
    return AnisoNorm(family="fourier", coeffs=(1.0, 0.08))


@pytest.fixture
def spec():
    return GridSpec.around((0.0, 0.0), 1.25, DX)


@pytest.fixture
def flow_spec():
    return GridSpec.around((0.0, 0.0), FLOW_EXTENT, DX)


@pytest.fixture
def fine_spec():
    return GridSpec.around((0.0, 0.0), 1.3, 1.0 / 64.0)


def disk(center=(0.0, 0.0), r=0.5, n=512):
    t = 2.0 * np.pi * np.arange(n) / n
    return np.stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)], axis=-1)


def wulff_set(phi, spec, m, center=(0.0, 0.0)):
    r = math.sqrt(m / wulff_area(phi))
    return rasterize([wulff_polygon(phi, center, r, 512)], spec)


def minimal_config(tmp_path, **overrides):
    """Small euclidean Wulff scenario as a plain dict; a shape override replaces the shape."""
    cfg = {
        "schema_version": "wulff-flow/1",
        "name": "disk",
        "grid": {"spacing": DX, "extent": FLOW_EXTENT},
        "flow": {"h": H, "max_steps": 4, "snapshot_stride": 2},
        "shape": {"kind": "wulff", "radius": FLOW_R},
        "output": {"directory": str(tmp_path / "runs")},
    }
    for key, value in overrides.items():
        if key != "shape" and isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    return cfg
