"""Objective evaluation for finished solutions."""

from __future__ import annotations

import numpy as np

from . import Instance
from .envs import check_feasible


def _tour_lengths(points: np.ndarray, order: np.ndarray) -> float:
    """Closed-tour length over 2D points in the given visit order."""
    p = points[order]
    diffs = p - np.roll(p, -1, axis=0)
    return float(np.sqrt((diffs ** 2).sum(axis=1)).sum())


def objectives(instance: Instance, sequence: tuple[int, ...]) -> np.ndarray:
    """M objective values of a feasible solution (raises on infeasible)."""
    check_feasible(instance, sequence)
    kind = instance.kind
    M = kind.M

    if kind.family == "motsp1":
        order = np.asarray(sequence)
        coords = instance.node_features.reshape(instance.n, M, 2)
        return np.array([_tour_lengths(coords[:, m, :], order)
                         for m in range(M)])

    if kind.family == "motsp2":
        order = np.asarray(sequence)
        coords = instance.node_features[:, : 2 * (M - 1)]
        coords = coords.reshape(instance.n, M - 1, 2)
        vals = [_tour_lengths(coords[:, m, :], order) for m in range(M - 1)]
        # last objective: summed absolute altitude change along the tour
        alt = instance.node_features[order, -1]
        vals.append(float(np.abs(alt - np.roll(alt, -1)).sum()))
        return np.array(vals)

    if kind.family == "mocvrp":
        points = np.vstack([instance.depot, instance.node_features[:, :2]])
        total = 0.0
        longest = 0.0
        route_len = 0.0
        pos = 0
        for s in list(sequence[1:]) + [0]:
            step = float(np.linalg.norm(points[s] - points[pos]))
            route_len += step
            pos = s
            if s == 0:
                longest = max(longest, route_len)
                total += route_len
                route_len = 0.0
        return np.array([total, longest])

    # mokp: per-objective value sums (maximization)
    if not sequence:
        return np.zeros(M)
    return instance.item_values[list(sequence)].sum(axis=0)
