"""Sequential construction environments: state, transition, feasibility.

Action indexing: motsp and mokp use node/item indices 0..n-1.  mocvrp uses
0 for the depot and 1..n for customers, so its masks have length n+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import Instance

CAP_EPS = 1e-12  # guards float drift in running capacities


@dataclass(frozen=True)
class DecodeState:
    sequence: tuple[int, ...]
    visited: np.ndarray          # per node/item/customer
    remaining: float             # capacity (mocvrp / mokp); 0.0 for motsp
    current: int                 # position index (routing); last item (mokp)


@dataclass(frozen=True)
class Solution:
    sequence: tuple[int, ...]
    objective_vector: np.ndarray


def initial_state(instance: Instance, start_index: int) -> DecodeState:
    family = instance.kind.family
    n = instance.n
    if not 0 <= start_index < n:
        raise ValueError(f"start index {start_index} out of range")

    if family in ("motsp1", "motsp2"):
        visited = np.zeros(n, dtype=bool)
        visited[start_index] = True
        return DecodeState((start_index,), visited, 0.0, start_index)

    if family == "mocvrp":
        visited = np.zeros(n, dtype=bool)
        visited[start_index] = True
        remaining = 1.0 - instance.demands[start_index]
        # route implicitly begins at the depot; first customer is forced
        return DecodeState((0, start_index + 1), visited, remaining,
                           start_index + 1)

    # mokp
    w = instance.item_weights[start_index]
    if w > instance.capacity + CAP_EPS:
        raise ValueError(
            f"start item {start_index} (weight {w:.4f}) exceeds capacity "
            f"{instance.capacity}")
    visited = np.zeros(n, dtype=bool)
    visited[start_index] = True
    return DecodeState((start_index,), visited, instance.capacity - w,
                       start_index)


def feasible_mask(instance: Instance, state: DecodeState) -> np.ndarray:
    """Boolean vector, True = action allowed.  Length n (motsp/mokp) or
    n+1 (mocvrp: slot 0 is the depot)."""
    family = instance.kind.family
    n = instance.n

    if family in ("motsp1", "motsp2"):
        return ~state.visited

    if family == "mocvrp":
        mask = np.zeros(n + 1, dtype=bool)
        fits = instance.demands <= state.remaining + CAP_EPS
        mask[1:] = ~state.visited & fits
        # depot allowed unless we are standing on it (no zero-length loops)
        mask[0] = state.current != 0 and not state.visited.all()
        return mask

    fits = instance.item_weights <= state.remaining + CAP_EPS
    return ~state.visited & fits


def is_terminal(instance: Instance, state: DecodeState) -> bool:
    family = instance.kind.family
    if family in ("motsp1", "motsp2", "mocvrp"):
        return bool(state.visited.all())
    return not feasible_mask(instance, state).any()


def apply_action(instance: Instance, state: DecodeState,
                 node_index: int) -> DecodeState:
    mask = feasible_mask(instance, state)
    if not mask[node_index]:
        raise ValueError(f"action {node_index} is masked (policy bug)")
    family = instance.kind.family

    if family in ("motsp1", "motsp2"):
        visited = state.visited.copy()
        visited[node_index] = True
        return DecodeState(state.sequence + (node_index,), visited, 0.0,
                           node_index)

    if family == "mocvrp":
        if node_index == 0:
            return DecodeState(state.sequence + (0,), state.visited.copy(),
                               1.0, 0)
        visited = state.visited.copy()
        visited[node_index - 1] = True
        remaining = state.remaining - instance.demands[node_index - 1]
        return DecodeState(state.sequence + (node_index,), visited,
                           remaining, node_index)

    visited = state.visited.copy()
    visited[node_index] = True
    remaining = state.remaining - instance.item_weights[node_index]
    return DecodeState(state.sequence + (node_index,), visited, remaining,
                       node_index)


def check_feasible(instance: Instance, sequence: tuple[int, ...]) -> None:
    """Raise if the finished sequence violates the problem constraints."""
    family = instance.kind.family
    n = instance.n
    if family in ("motsp1", "motsp2"):
        if sorted(sequence) != list(range(n)):
            raise ValueError("tour is not a permutation of the nodes")
        return
    if family == "mocvrp":
        customers = [s - 1 for s in sequence if s != 0]
        if sorted(customers) != list(range(n)):
            raise ValueError("routes do not visit every customer once")
        load = 0.0
        for s in sequence:
            if s == 0:
                load = 0.0
            else:
                load += instance.demands[s - 1]
                if load > 1.0 + 1e-9:
                    raise ValueError("route demand exceeds vehicle capacity")
        return
    if len(set(sequence)) != len(sequence):
        raise ValueError("item selected twice")
    total = float(instance.item_weights[list(sequence)].sum()) if sequence else 0.0
    if total > instance.capacity + 1e-9:
        raise ValueError("selection exceeds knapsack capacity")
