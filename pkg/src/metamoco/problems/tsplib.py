"""TSPLIB ingestion: build a motsp1 instance from paired EUC_2D files.

Objective m takes its coordinate plane from file m.  Coordinates are
rescaled to [0,1] by the global maximum over all files; the scale is kept
in metadata so reported objective values can be de-normalized.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import Instance, ProblemKind


def _parse_euc2d(path: str | Path) -> np.ndarray:
    dimension = None
    edge_type = None
    coords: dict[int, tuple[float, float]] = {}
    in_section = False
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line == "EOF":
            if line == "EOF":
                break
            continue
        upper = line.upper()
        if upper.startswith("DIMENSION"):
            dimension = int(line.split(":")[-1])
        elif upper.startswith("EDGE_WEIGHT_TYPE"):
            edge_type = line.split(":")[-1].strip()
        elif upper.startswith("NODE_COORD_SECTION"):
            in_section = True
        elif in_section:
            parts = line.split()
            if len(parts) >= 3:
                coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
    if edge_type != "EUC_2D":
        raise ValueError(f"unsupported EDGE_WEIGHT_TYPE {edge_type!r} in {path}")
    if dimension is None or len(coords) != dimension:
        raise ValueError(f"malformed NODE_COORD_SECTION in {path}")
    return np.array([coords[i] for i in range(1, dimension + 1)])


def parse_tsplib_pair(*files: str | Path) -> Instance:
    """Two or three TSPLIB files of equal dimension -> motsp1 instance with
    M = number of files."""
    if len(files) not in (2, 3):
        raise ValueError("expected two or three TSPLIB files")
    planes = [_parse_euc2d(f) for f in files]
    dims = {p.shape[0] for p in planes}
    if len(dims) != 1:
        raise ValueError(
            f"dimension mismatch across files: {[p.shape[0] for p in planes]}")
    n = planes[0].shape[0]
    scale = max(float(p.max()) for p in planes)
    feats = np.concatenate([p / scale for p in planes], axis=1)
    kind = ProblemKind("motsp1", len(files))
    return Instance(kind, n, feats, metadata={
        "source_files": [str(f) for f in files],
        "coordinate_scale": scale,
    })
