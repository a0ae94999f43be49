"""Instance augmentation by distance-preserving coordinate transforms.

A 2D coordinate pair admits eight transforms (identity, axis swap, and
reflections); an altitude coordinate admits two (x and 1-x).  Objective
values of any fixed solution are invariant under all of them.
"""

from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np

from . import Instance

PAIR_TRANSFORMS = (
    lambda x, y: (x, y),
    lambda x, y: (y, x),
    lambda x, y: (x, 1.0 - y),
    lambda x, y: (y, 1.0 - x),
    lambda x, y: (1.0 - x, y),
    lambda x, y: (1.0 - y, x),
    lambda x, y: (1.0 - x, 1.0 - y),
    lambda x, y: (1.0 - y, 1.0 - x),
)


def _apply_pair(coords: np.ndarray, t: int) -> np.ndarray:
    x, y = PAIR_TRANSFORMS[t](coords[..., 0], coords[..., 1])
    return np.stack([x, y], axis=-1)


def augment(instance: Instance) -> list[Instance]:
    """All transformed copies of an instance: 8^M for motsp1,
    2*8^(M-1) for motsp2, 8 for mocvrp.  The identity copy comes first."""
    kind = instance.kind
    M = kind.M

    if kind.family == "mokp":
        raise ValueError("mokp has no augmentation")

    out = []
    if kind.family == "motsp1":
        coords = instance.node_features.reshape(instance.n, M, 2)
        for combo in itertools.product(range(8), repeat=M):
            new = np.stack([_apply_pair(coords[:, m, :], t)
                            for m, t in enumerate(combo)], axis=1)
            out.append(replace(
                instance,
                node_features=new.reshape(instance.n, 2 * M),
                metadata={**instance.metadata, "augmentation": list(combo)}))
        return out

    if kind.family == "motsp2":
        coords = instance.node_features[:, : 2 * (M - 1)]
        coords = coords.reshape(instance.n, M - 1, 2)
        alt = instance.node_features[:, -1]
        for combo in itertools.product(range(8), repeat=M - 1):
            pairs = np.stack([_apply_pair(coords[:, m, :], t)
                              for m, t in enumerate(combo)], axis=1)
            pairs = pairs.reshape(instance.n, 2 * (M - 1))
            for flip in (0, 1):
                new_alt = 1.0 - alt if flip else alt
                out.append(replace(
                    instance,
                    node_features=np.column_stack([pairs, new_alt]),
                    metadata={**instance.metadata,
                              "augmentation": list(combo) + [flip]}))
        return out

    # mocvrp: one shared coordinate plane (depot included), demands untouched
    for t in range(8):
        coords = _apply_pair(instance.node_features[:, :2], t)
        depot = _apply_pair(instance.depot[None, :], t)[0]
        out.append(replace(
            instance,
            node_features=np.column_stack([coords,
                                           instance.node_features[:, 2]]),
            depot=depot,
            metadata={**instance.metadata, "augmentation": [t]}))
    return out
