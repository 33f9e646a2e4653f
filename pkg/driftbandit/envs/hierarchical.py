"""Synthetic environments over a taxonomy.

A leaf's click probability is ``sigmoid(x^T (sum of the effects of its non-root
ancestors + its own effect))``, so siblings share their categories' effects.
"""
from dataclasses import dataclass
from typing import Dict, Mapping, Tuple, Union

import torch

from driftbandit.errors import UnknownArmError
from driftbandit.modeling.bandit import ArmId
from driftbandit.modeling.hierarchy import Taxonomy, validate_taxonomy
from driftbandit.utils import RandomStream, as_tensor, context_vector, sigmoid

Effects = Union[float, Mapping[ArmId, object]]


@dataclass(eq=False)
class HierarchicalEnv:
    taxonomy: Taxonomy
    effects: Dict[ArmId, torch.Tensor]

    @property
    def arms(self) -> Tuple[ArmId, ...]:
        return self.taxonomy.leaves

    @property
    def d(self) -> int:
        return next(iter(self.effects.values())).shape[0]

    def weights(self, leaf: ArmId) -> torch.Tensor:
        if leaf not in self.arms:
            raise UnknownArmError(leaf, where="hierarchical environment")
        path = self.taxonomy.path_to(leaf)
        return sum(self.effects[node] for node in path[1:])

    def mean_reward(self, leaf: ArmId, x) -> float:
        return sigmoid(context_vector(x, self.d) @ self.weights(leaf))


def _node_effects(nodes, effects: Effects, d: int, rng: RandomStream) -> Dict[ArmId, torch.Tensor]:
    if isinstance(effects, Mapping):
        zero = torch.zeros(d, dtype=torch.float64)
        return {node: context_vector(effects[node], d) if node in effects else zero for node in nodes}
    scale = float(effects)
    return {node: scale * rng.child(index).normal(d) for index, node in enumerate(nodes)}


def synth_hier_env(taxonomy: Taxonomy, category_effects: Effects, leaf_effects: Effects, rng: RandomStream,
                   d: int = 5) -> HierarchicalEnv:
    """Build a hierarchical environment.

    Effects are either explicit ``{node: vector}`` mappings (missing nodes get
    zero) or a scale ``s``, in which case each node draws ``N(0, s^2 I_d)``.
    """
    validate_taxonomy(taxonomy)
    leaves = taxonomy.leaves
    categories = tuple(node for node in taxonomy.model_nodes if node not in leaves)
    if isinstance(category_effects, Mapping) and category_effects:
        d = as_tensor(next(iter(category_effects.values()))).reshape(-1).shape[0]
    elif isinstance(leaf_effects, Mapping) and leaf_effects:
        d = as_tensor(next(iter(leaf_effects.values()))).reshape(-1).shape[0]
    effects = _node_effects(categories, category_effects, d, rng.child(0))
    effects.update(_node_effects(leaves, leaf_effects, d, rng.child(1)))
    return HierarchicalEnv(taxonomy, effects)
