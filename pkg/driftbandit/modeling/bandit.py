from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch

from driftbandit.errors import EmptyArmPoolError, UnknownArmError
from driftbandit.utils import RandomStream, check_finite_reward, context_vector, derive_stream

ArmId = str

# Stream labels a policy uses when the caller does not hand it a stream.
SELECT_LABEL = 11
UPDATE_LABEL = 12


@dataclass(frozen=True, eq=False)
class Interaction:
    t: int
    context: torch.Tensor
    chosen: ArmId
    reward: float


@dataclass(frozen=True, eq=False)
class PathInteraction(Interaction):
    """Interaction whose reward is credited to every non-root node of ``path``."""
    path: Tuple[ArmId, ...] = ()


def validate_arm_pool(arms: Sequence[ArmId]) -> Tuple[ArmId, ...]:
    arms = tuple(arms)
    if not arms:
        raise EmptyArmPoolError("Arm pool is empty")
    for arm in arms:
        if not isinstance(arm, str) or not arm:
            raise ValueError(f"Invalid arm id {arm!r}: arm ids must be non-empty strings")
    if len(set(arms)) != len(arms):
        raise ValueError(f"Arm ids must be unique, got {list(arms)}")
    return arms


# Base class for every policy: select is read-only on the model, update is the only writer.
class BanditPolicy:
    name = "policy"

    def __init__(self, arms: Sequence[ArmId], d: int, seed: int = 0):
        self.arms = tuple(sorted(validate_arm_pool(arms)))
        self.d = int(d)
        self.seed = int(seed)
        self.t = 0
        self.cumulative_reward = 0.0

    def __repr__(self):
        return f"{type(self).__name__}(arms={len(self.arms)}, d={self.d}, t={self.t})"

    def arm_index(self, arm: ArmId) -> int:
        try:
            return self.arms.index(arm)
        except ValueError:
            raise UnknownArmError(arm, where=self.name) from None

    def _select_stream(self, rng: Optional[RandomStream]) -> RandomStream:
        # addressed by the last recorded round: selects between two updates replay the same draws
        return rng if rng is not None else derive_stream(self.seed, [SELECT_LABEL, self.t])

    def _update_stream(self, rng: Optional[RandomStream]) -> RandomStream:
        return rng if rng is not None else derive_stream(self.seed, [UPDATE_LABEL, self.t])

    def select(self, context, rng: Optional[RandomStream] = None):
        raise NotImplementedError

    def update(self, interaction: Interaction, rng: Optional[RandomStream] = None) -> None:
        raise NotImplementedError

    def _record(self, interaction: Interaction) -> None:
        if interaction.t <= self.t:
            raise ValueError(f"Round index must increase: got t={interaction.t} after t={self.t}")
        self.t = interaction.t
        self.cumulative_reward += interaction.reward

    def interaction_for(self, t: int, context, selection, reward) -> Interaction:
        """Build the interaction that credits ``reward`` to ``selection``."""
        return Interaction(t=t, context=context_vector(context, self.d), chosen=chosen_arm(selection),
                           reward=check_finite_reward(reward))


def chosen_arm(selection) -> ArmId:
    """Leaf arm of a selection (an arm id or a ``PathSelection``)."""
    return getattr(selection, "leaf", selection)


def total_reward(interactions: List[Interaction]) -> float:
    return sum(interaction.reward for interaction in interactions)
