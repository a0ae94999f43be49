"""Weight vectors and scalarization.

Covers simplex-lattice weight generation, weighted-sum and Tchebycheff
scalarization, rotational symmetric sampling with optional objective-scale
correction, ideal-scale estimation, and scaled weight assignment for
inference.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class ScaleEstimate:
    """Per-objective magnitude estimate used to balance weight sampling."""
    values: np.ndarray
    source: str = "configured"       # or "validation-estimate"
    iteration: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.values) <= 0.0):
            raise ValueError("scale estimate must be strictly positive")


def check_weight(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{w} is not on the weight simplex")
    return w


def das_dennis_weights(M: int, H: int) -> list[np.ndarray]:
    """All simplex-lattice points with components that are multiples of 1/H,
    in lexicographic order; there are C(H+M-1, M-1) of them."""
    if M < 2 or H < 1:
        raise ValueError("need M >= 2 and H >= 1")
    out: list[np.ndarray] = []

    def rec(prefix: list[int], remaining: int, slots: int):
        if slots == 1:
            out.append(np.array(prefix + [remaining], dtype=np.float64) / H)
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], H, M)
    assert len(out) == comb(H + M - 1, M - 1)
    return out


def weighted_sum(f: np.ndarray, weight: np.ndarray,
                 maximize: bool = False) -> float:
    """Linear scalarization; maximize-sense values are negated so that lower
    is uniformly better."""
    value = float(np.dot(weight, f))
    return -value if maximize else value


def tchebycheff(f: np.ndarray, weight: np.ndarray, ideal: np.ndarray,
                maximize: bool = False) -> float:
    f = np.asarray(f, dtype=np.float64)
    ideal = np.asarray(ideal, dtype=np.float64)
    if maximize:
        f, ideal = -f, -ideal
    return float(np.max(weight * np.abs(f - ideal)))


def symmetric_rotations(weight: np.ndarray) -> list[np.ndarray]:
    """The M-1 successive rotations that move the last component to the
    front."""
    w = check_weight(weight)
    out = []
    for _ in range(len(w) - 1):
        w = np.roll(w, 1)
        out.append(w.copy())
    return out


def sample_simplex(rng: np.random.Generator, M: int) -> np.ndarray:
    """Uniform point on the simplex via sorted-uniform spacings."""
    if M == 2:
        u = rng.uniform()
        return np.array([u, 1.0 - u])
    cuts = np.sort(rng.uniform(size=M - 1))
    return np.diff(np.concatenate([[0.0], cuts, [1.0]]))


def scaled_partner(weight: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """One scaled rotation: rotate in the scale-balanced domain, map back,
    renormalize.  With unit scales this is a plain rotation."""
    ratio = np.roll(scale, 1) / scale  # ratio[m] = f'_{m-1 (cyclic)} / f'_m
    raw = np.roll(weight, 1) * ratio
    return raw / raw.sum()


def scaled_symmetric_sample(rng: np.random.Generator, scale: ScaleEstimate,
                            n_weights: int, M: int) -> list[np.ndarray]:
    """floor(N/M) random simplex points, then their M-1 scaled rotational
    partners (generated chainwise), then uniformly random fill."""
    if n_weights < 1:
        raise ValueError("need at least one weight")
    f = np.asarray(scale.values, dtype=np.float64)
    base = n_weights // M
    out: list[np.ndarray] = [sample_simplex(rng, M) for _ in range(base)]
    for i in range(base, M * base):
        out.append(scaled_partner(out[i - base], f))
    while len(out) < n_weights:
        out.append(sample_simplex(rng, M))
    return out


def symmetric_sample(rng: np.random.Generator, n_weights: int,
                     M: int) -> list[np.ndarray]:
    ones = ScaleEstimate(np.ones(M))
    return scaled_symmetric_sample(rng, ones, n_weights, M)


def random_sample(rng: np.random.Generator, n_weights: int,
                  M: int) -> list[np.ndarray]:
    return [sample_simplex(rng, M) for _ in range(n_weights)]


def scaled_weight_assignment(weights: list[np.ndarray],
                             scale: ScaleEstimate) -> list[np.ndarray]:
    """Divide each weight elementwise by the scale estimate and renormalize;
    spreads solutions more evenly when objective domains are imbalanced."""
    f = np.asarray(scale.values, dtype=np.float64)
    out = []
    for w in weights:
        raw = check_weight(w) / f
        out.append(raw / raw.sum())
    return out


def estimate_ideal_scale(rollout_fn, validation_instances,
                         M: int, maximize: bool = False,
                         iteration: int = 0,
                         selection: str = "best") -> ScaleEstimate:
    """Estimate per-objective magnitudes with the current model.

    `rollout_fn(instance)` must return the objective vectors of a greedy
    multi-start rollout, shape (starts, M).  Each instance contributes the
    objective vector of its best solution under the uniform weight
    (`selection="best"`: lowest scalarized cost; `"worst"` inverts, kept
    for auditing the argmax reading).  The estimate is the mean over the
    validation set.
    """
    if not validation_instances:
        raise ValueError("validation set is empty")
    uniform = np.full(M, 1.0 / M)
    picks = []
    for inst in validation_instances:
        objs = np.asarray(rollout_fn(inst))
        scores = np.array([weighted_sum(o, uniform, maximize) for o in objs])
        k = int(scores.argmax()) if selection == "worst" else int(scores.argmin())
        picks.append(objs[k])
    values = np.mean(picks, axis=0)
    return ScaleEstimate(values, source="validation-estimate",
                         iteration=iteration)
