"""Exact Pareto fronts for tiny instances by exhaustive enumeration.

Size limits keep runtimes in seconds: tours up to n=9 (fixed first city,
reversal-deduplicated permutations), knapsacks up to n=20 (bitmask
subsets), vehicle routing up to n=7 (set partitions with per-route optimal
ordering, which is exact because each route's length enters both
objectives monotonically).
"""

from __future__ import annotations

import itertools

import numpy as np

from ..problems import Instance, objectives
from .pareto import ParetoSet, pareto_filter

ORACLE_LIMITS = {"motsp1": 9, "motsp2": 9, "mocvrp": 7, "mokp": 20}


def _check_limit(instance: Instance) -> None:
    limit = ORACLE_LIMITS[instance.kind.family]
    if instance.n > limit:
        raise ValueError(
            f"exact enumeration of {instance.kind.family} is limited to "
            f"n <= {limit}, got n = {instance.n}")


def _tsp_front(instance: Instance) -> ParetoSet:
    n = instance.n
    pts, prov = [], []
    for perm in itertools.permutations(range(1, n)):
        if n > 2 and perm[0] > perm[-1]:
            continue  # reversal duplicate
        seq = (0,) + perm
        pts.append(objectives(instance, seq))
        prov.append({"sequence": seq})
    return pareto_filter(np.array(pts), "min", prov)


def _kp_front(instance: Instance) -> ParetoSet:
    n = instance.n
    w = instance.item_weights
    pts, prov = [], []
    for mask in range(1 << n):
        items = [i for i in range(n) if mask >> i & 1]
        if w[items].sum() > instance.capacity + 1e-12:
            continue
        pts.append(objectives(instance, tuple(items)))
        prov.append({"sequence": tuple(items)})
    return pareto_filter(np.array(pts), "max", prov)


def _set_partitions(items: list[int]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _best_route_length(points: np.ndarray, block: list[int]) -> float:
    """Shortest depot-to-depot route through the block (depot = row 0)."""
    best = np.inf
    for perm in itertools.permutations(block):
        length = 0.0
        pos = 0
        for c in perm:
            length += float(np.linalg.norm(points[c + 1] - points[pos]))
            pos = c + 1
        length += float(np.linalg.norm(points[0] - points[pos]))
        best = min(best, length)
    return best


def _cvrp_front(instance: Instance) -> ParetoSet:
    points = np.vstack([instance.depot, instance.node_features[:, :2]])
    demands = instance.demands
    pts, prov = [], []
    for part in _set_partitions(list(range(instance.n))):
        if any(demands[b].sum() > 1.0 + 1e-9 for b in part):
            continue
        lengths = [_best_route_length(points, b) for b in part]
        pts.append(np.array([sum(lengths), max(lengths)]))
        prov.append({"routes": [tuple(b) for b in part]})
    return pareto_filter(np.array(pts), "min", prov)


def brute_force_pareto(instance: Instance) -> ParetoSet:
    """Exact Pareto front of a tiny instance."""
    _check_limit(instance)
    family = instance.kind.family
    if family in ("motsp1", "motsp2"):
        return _tsp_front(instance)
    if family == "mokp":
        return _kp_front(instance)
    return _cvrp_front(instance)
