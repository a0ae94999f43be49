"""Pareto dominance and nondominated filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SENSES = ("min", "max")


@dataclass
class ParetoSet:
    """A mutually nondominated set of objective vectors with per-point
    provenance (free-form dicts, e.g. weight index and augmentation id)."""
    points: np.ndarray                 # (k, M)
    sense: str = "min"
    provenance: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 and len(self.points):
            raise ValueError("expected a (k, M) array of objective vectors")

    def __len__(self) -> int:
        return len(self.points)


def dominates(u: np.ndarray, v: np.ndarray, sense: str = "min") -> bool:
    """True if u is at least as good as v everywhere and better somewhere."""
    u, v = np.asarray(u), np.asarray(v)
    if sense == "max":
        u, v = -u, -v
    return bool(np.all(u <= v) and np.any(u < v))


def pareto_filter(points, sense: str = "min",
                  provenance: list[dict] | None = None) -> ParetoSet:
    """Nondominated subset; exact duplicates collapse to one point (the
    first occurrence's provenance wins)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return ParetoSet(np.zeros((0, 0)), sense, [])
    if pts.ndim != 2:
        raise ValueError("expected a (k, M) array of objective vectors")
    prov = provenance if provenance is not None else [{} for _ in pts]
    if len(prov) != len(pts):
        raise ValueError("provenance length mismatch")

    work = -pts if sense == "max" else pts
    keep_idx: list[int] = []
    seen: set[tuple] = set()
    for i in range(len(work)):
        key = tuple(work[i])
        if key in seen:
            continue
        others = np.delete(work, i, axis=0)
        dominated = np.any(np.all(others <= work[i], axis=1)
                           & np.any(others < work[i], axis=1))
        if not dominated:
            seen.add(key)
            keep_idx.append(i)
    return ParetoSet(pts[keep_idx], sense, [prov[i] for i in keep_idx])
