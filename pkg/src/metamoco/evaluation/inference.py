"""Solving one instance with a fine-tuned submodel set.

Per weight: greedy multi-start rollouts on the instance (and on each
transformed copy when augmentation is on), keep the best scalarized
solution, then Pareto-filter the union over weights.  Objective vectors
are always reported in the original instance's coordinates; transform
invariance makes any augmented copy's solution valid on the original.
"""

from __future__ import annotations

import numpy as np

from ..decomposition import weighted_sum
from ..finetune import SubmodelSet
from ..policy import ModelConfig, rollout_multistart
from ..problems import Instance, augment, objectives
from .pareto import ParetoSet, pareto_filter


def solve_instance(submodels: SubmodelSet, model_cfg: ModelConfig,
                   instance: Instance,
                   use_augmentation: bool = False) -> ParetoSet:
    kind = instance.kind
    if model_cfg.kind != kind:
        raise ValueError(
            f"submodels are for {model_cfg.kind.family} M={model_cfg.kind.M}, "
            f"instance is {kind.family} M={kind.M}")
    if use_augmentation and kind.family != "mokp":
        copies = augment(instance)
    else:
        copies = [instance]

    pts, prov = [], []
    for wi, (weight, params) in enumerate(zip(submodels.weights,
                                              submodels.models)):
        best = None
        for ci, copy in enumerate(copies):
            for r in rollout_multistart(params, model_cfg, copy):
                cost = weighted_sum(r.objective_vector, weight, kind.maximize)
                if best is None or cost < best[0]:
                    best = (cost, r.sequence, ci)
        cost, seq, ci = best
        pts.append(objectives(instance, seq))
        prov.append({"weight_index": wi, "augmentation_index": ci,
                     "sequence": seq})
    sense = "max" if kind.maximize else "min"
    return pareto_filter(np.array(pts), sense, prov)
