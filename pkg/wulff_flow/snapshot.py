"""
WFGRID1 snapshot files: a run-length encoded GridSet.

Layout (little-endian):
    magic      7 bytes  b"WFGRID1"
    header     '<dIIdd' Δx, nx, ny, origin x, origin y
    run count  '<I'
    first      '<B'     value of the first run (0 or 1)
    runs       run count × '<I', row-major over mask[j, i]
"""

import struct
from pathlib import Path

import numpy as np

from .errors import SnapshotFormatError
from .grid_set import GridSet, GridSpec

MAGIC = b"WFGRID1"
_HEADER = struct.Struct("<dIIdd")
_COUNT = struct.Struct("<I")
_FIRST = struct.Struct("<B")


def encode_snapshot(E: GridSet) -> bytes:
    flat = E.mask.ravel().astype(np.uint8)
    change = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(edges).astype("<u4")
    spec = E.spec
    return b"".join(
        [
            MAGIC,
            _HEADER.pack(spec.spacing, spec.nx, spec.ny, spec.origin[0], spec.origin[1]),
            _COUNT.pack(runs.size),
            _FIRST.pack(int(flat[0]) if flat.size else 0),
            runs.tobytes(),
        ]
    )


def decode_snapshot(data: bytes) -> GridSet:
    if not data.startswith(MAGIC):
        raise SnapshotFormatError("missing WFGRID1 magic")
    pos = len(MAGIC)
    try:
        spacing, nx, ny, ox, oy = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        (count,) = _COUNT.unpack_from(data, pos)
        pos += _COUNT.size
        (first,) = _FIRST.unpack_from(data, pos)
        pos += _FIRST.size
    except struct.error as e:
        raise SnapshotFormatError(f"truncated header: {e}") from e
    if len(data) - pos < 4 * count:
        raise SnapshotFormatError(f"expected {count} runs, file is truncated")
    runs = np.frombuffer(data, dtype="<u4", count=count, offset=pos).astype(np.int64)
    if int(runs.sum()) != nx * ny:
        raise SnapshotFormatError(f"runs cover {int(runs.sum())} cells, grid has {nx * ny}")
    values = (np.arange(runs.size) + first) % 2
    mask = np.repeat(values.astype(bool), runs).reshape(ny, nx)
    spec = GridSpec(origin=(ox, oy), spacing=spacing, nx=nx, ny=ny)
    return GridSet(spec=spec, mask=mask)


def write_snapshot(E: GridSet, path: Path | str) -> Path:
    p = Path(path)
    p.write_bytes(encode_snapshot(E))
    return p


def read_snapshot(path: Path | str) -> GridSet:
    return decode_snapshot(Path(path).read_bytes())
