"""Problem instances: kinds, generation, and (de)serialization.

Supported families: multi-objective TSP type 1 and 2, capacitated vehicle
routing with (total distance, makespan), and the multi-objective knapsack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FAMILIES = ("motsp1", "motsp2", "mocvrp", "mokp")

# capacity tables by listed problem size; other sizes use the nearest entry
CVRP_CAPACITY = {20: 30.0, 50: 40.0, 100: 50.0}
KP_CAPACITY = {50: 12.5, 100: 25.0, 200: 25.0}


@dataclass(frozen=True)
class ProblemKind:
    family: str
    M: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown problem family {self.family!r}")
        if self.M < 2:
            raise ValueError("need at least two objectives")
        if self.family == "mocvrp" and self.M != 2:
            raise ValueError("mocvrp is defined with exactly two objectives")

    @property
    def maximize(self) -> bool:
        return self.family == "mokp"

    @property
    def feature_dim(self) -> int:
        """Per-node input width (mocvrp: customer rows; depot row is 2D)."""
        if self.family == "motsp1":
            return 2 * self.M
        if self.family == "motsp2":
            return 2 * self.M - 1
        if self.family == "mocvrp":
            return 3
        return self.M + 1  # mokp: M values + weight

    def to_json(self) -> dict:
        return {"family": self.family, "M": self.M}

    @staticmethod
    def from_json(data: dict) -> "ProblemKind":
        return ProblemKind(data["family"], data["M"])


@dataclass(frozen=True)
class Instance:
    kind: ProblemKind
    n: int
    node_features: np.ndarray          # (n, F)
    depot: np.ndarray | None = None    # mocvrp only, (2,)
    capacity: float | None = None      # mocvrp: 1.0 (normalized); mokp: W
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.node_features.shape != (self.n, self.kind.feature_dim):
            raise ValueError(
                f"feature matrix {self.node_features.shape} does not match "
                f"({self.n}, {self.kind.feature_dim})")

    @property
    def demands(self) -> np.ndarray:
        assert self.kind.family == "mocvrp"
        return self.node_features[:, 2]

    @property
    def item_values(self) -> np.ndarray:
        assert self.kind.family == "mokp"
        return self.node_features[:, : self.kind.M]

    @property
    def item_weights(self) -> np.ndarray:
        assert self.kind.family == "mokp"
        return self.node_features[:, self.kind.M]


def _nearest_listed(table: dict[int, float], n: int) -> tuple[float, int]:
    size = min(table, key=lambda k: (abs(k - n), k))
    return table[size], size


def generate_instance(kind: ProblemKind, n: int, seed: int,
                      capacity: float | None = None) -> Instance:
    """Sample one random instance; identical (kind, n, seed) inputs always
    reproduce the same instance."""
    if n < 2:
        raise ValueError("instance needs at least two nodes")
    rng = np.random.default_rng(seed)
    meta: dict = {}

    if kind.family in ("motsp1", "motsp2"):
        feats = rng.uniform(size=(n, kind.feature_dim))
        return Instance(kind, n, feats, seed=seed, metadata=meta)

    if kind.family == "mocvrp":
        depot = rng.uniform(size=2)
        coords = rng.uniform(size=(n, 2))
        raw_demand = rng.integers(1, 10, size=n).astype(np.float64)
        if capacity is not None:
            scale = float(capacity)
            meta["capacity_source"] = "override"
        else:
            scale, basis = _nearest_listed(CVRP_CAPACITY, n)
            meta["capacity_source"] = f"table:nearest(n={basis})"
        meta["demand_scale"] = scale
        feats = np.column_stack([coords, raw_demand / scale])
        return Instance(kind, n, feats, depot=depot, capacity=1.0,
                        seed=seed, metadata=meta)

    # mokp
    values = rng.uniform(size=(n, kind.M))
    weights = rng.uniform(size=n)
    if capacity is not None:
        cap = float(capacity)
        meta["capacity_source"] = "override"
    else:
        cap, basis = _nearest_listed(KP_CAPACITY, n)
        meta["capacity_source"] = f"table:nearest(n={basis})"
    feats = np.column_stack([values, weights])
    return Instance(kind, n, feats, capacity=cap, seed=seed, metadata=meta)


def instance_to_json(inst: Instance) -> dict:
    doc = {
        "kind": inst.kind.to_json(),
        "M": inst.kind.M,
        "n": inst.n,
        "features": inst.node_features.tolist(),
        "capacity": inst.capacity,
        "seed": inst.seed,
        "metadata": inst.metadata,
    }
    if inst.depot is not None:
        doc["depot"] = inst.depot.tolist()
    return doc


def instance_from_json(doc: dict) -> Instance:
    kind = ProblemKind.from_json(doc["kind"])
    depot = np.asarray(doc["depot"]) if "depot" in doc else None
    return Instance(kind, doc["n"], np.asarray(doc["features"], dtype=np.float64),
                    depot=depot, capacity=doc.get("capacity"),
                    seed=doc.get("seed"), metadata=doc.get("metadata", {}))


def save_instances(path: str | Path, instances: list[Instance]) -> None:
    Path(path).write_text(json.dumps(
        [instance_to_json(i) for i in instances], sort_keys=True) + "\n")


def load_instances(path: str | Path) -> list[Instance]:
    return [instance_from_json(doc) for doc in json.loads(Path(path).read_text())]


from .envs import (  # noqa: E402
    DecodeState, Solution, initial_state, apply_action, feasible_mask,
    is_terminal, check_feasible,
)
from .objectives import objectives  # noqa: E402
from .augment import augment  # noqa: E402
from .tsplib import parse_tsplib_pair  # noqa: E402

__all__ = [
    "ProblemKind", "Instance", "generate_instance",
    "instance_to_json", "instance_from_json", "save_instances",
    "load_instances", "DecodeState", "Solution", "initial_state",
    "apply_action", "feasible_mask", "is_terminal", "check_feasible",
    "objectives", "augment", "parse_tsplib_pair",
    "CVRP_CAPACITY", "KP_CAPACITY",
]
