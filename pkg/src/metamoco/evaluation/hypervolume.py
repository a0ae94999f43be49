"""Hypervolume: exact (2D sweep, 3D slicing), Monte-Carlo, and the
normalized ratio and gap metrics.

Maximization is handled by negating objectives and the reference/ideal
points, which turns it into the standard minimization-sense measure.
"""

from __future__ import annotations

import numpy as np


def _to_min(points: np.ndarray, ref: np.ndarray, sense: str):
    if sense == "max":
        return -points, -ref
    return points, ref


def _validate(points: np.ndarray, ref: np.ndarray) -> None:
    for p in points:
        if np.any(p >= ref):
            raise ValueError(
                f"front point {p.tolist()} is not strictly inside the "
                f"reference point {ref.tolist()}")


def _hv2(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact 2D hypervolume of a nondominated minimization front: sweep in
    increasing first coordinate; each point adds a rectangle up to the
    previous point's second coordinate."""
    order = np.lexsort((points[:, 1], points[:, 0]))
    pts = points[order]
    hv = 0.0
    prev_y = ref[1]
    for x, y in pts:
        if y < prev_y:  # skip points dominated within ties on x
            hv += (ref[0] - x) * (prev_y - y)
            prev_y = y
    return hv


def _hv3(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact 3D hypervolume by slicing along the third coordinate: between
    consecutive z-levels the dominated area is the 2D hypervolume of the
    points already introduced."""
    zs = np.unique(points[:, 2])
    hv = 0.0
    levels = list(zs) + [ref[2]]
    for lo, hi in zip(levels, levels[1:]):
        active = points[points[:, 2] <= lo][:, :2]
        if len(active):
            hv += _hv2(active, ref[:2]) * (hi - lo)
    return hv


def hypervolume(front, ref_point, sense: str = "min") -> float:
    """Lebesgue measure of the region dominated by `front` and bounded by
    the reference point."""
    pts = np.asarray(front, dtype=np.float64)
    ref = np.asarray(ref_point, dtype=np.float64)
    if pts.size == 0:
        return 0.0
    pts, ref = _to_min(pts, ref, sense)
    _validate(pts, ref)
    M = pts.shape[1]
    if M == 2:
        return _hv2(pts, ref)
    if M == 3:
        return _hv3(pts, ref)
    raise ValueError("exact hypervolume implemented for 2 or 3 objectives")


def hv_ratio(front, ref_point, ideal_point, sense: str = "min") -> float:
    """Hypervolume normalized by the reference-ideal box volume."""
    ref = np.asarray(ref_point, dtype=np.float64)
    ideal = np.asarray(ideal_point, dtype=np.float64)
    box = np.abs(ref - ideal)
    if np.any(box == 0.0):
        raise ValueError("degenerate reference box (r* equals z* in some "
                         "dimension)")
    return hypervolume(front, ref_point, sense) / float(np.prod(box))


def mc_hypervolume(front, ref_point, ideal_point, samples: int,
                   seed: int, chunk: int = 100_000) -> float:
    """Monte-Carlo hypervolume: the fraction of uniform samples in the
    reference-ideal box dominated by the front, times the box volume."""
    if samples < 1:
        raise ValueError("need at least one sample")
    pts = np.asarray(front, dtype=np.float64)
    ref = np.asarray(ref_point, dtype=np.float64)
    ideal = np.asarray(ideal_point, dtype=np.float64)
    if pts.size == 0:
        return 0.0
    # minimization-sense box corners (works for both senses after sorting)
    lo = np.minimum(ref, ideal)
    hi = np.maximum(ref, ideal)
    if np.any(ref == ideal):
        raise ValueError("degenerate reference box")
    sense_min = bool(np.all(ref >= ideal))
    work = pts if sense_min else -pts
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        y = rng.uniform(lo, hi, size=(k, len(ref)))
        if not sense_min:
            y = -y
        dominated = np.zeros(k, dtype=bool)
        for p in work:
            dominated |= np.all(p <= y, axis=1)
        hits += int(dominated.sum())
        done += k
    return hits / samples * float(np.prod(hi - lo))


def gap(hv: float, hv_reference: float) -> float:
    """Signed relative gap to a reference hypervolume; negative is better
    than the reference."""
    if hv_reference == 0.0:
        raise ValueError("reference hypervolume is zero")
    return (hv_reference - hv) / hv_reference
