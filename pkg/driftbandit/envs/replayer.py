"""Exact-match replay of logged bandit feedback.

For each logged event the policy picks an arm on the logged context; only
events where it agrees with the displayed arm count as impressions and are fed
back to the policy.  Under uniformly random logging the resulting CTR is an
unbiased estimate of the policy's online CTR.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

from tqdm import tqdm

from driftbandit.data.event_log import LoggedEvent
from driftbandit.envs.simulator import env_step
from driftbandit.errors import UnknownArmError
from driftbandit.modeling.bandit import ArmId, BanditPolicy, Interaction, chosen_arm, validate_arm_pool
from driftbandit.utils import derive_stream

logger = logging.getLogger(__name__)

REPLAY_LABEL = 30
REPLAY_SELECT_LABEL = 0
REPLAY_UPDATE_LABEL = 1
LOG_CONTEXT_LABEL = 31
LOG_ARM_LABEL = 32
LOG_REWARD_LABEL = 33
LOG_DRIFT_LABEL = 34


@dataclass
class ReplayResult:
    impressions: int = 0
    successes: float = 0.0
    skipped: int = 0
    # (index of the event in the log, credited reward) per impression
    matches: List[Tuple[int, float]] = field(default_factory=list)
    interactions: List[Interaction] = field(default_factory=list)

    @property
    def ctr(self) -> Optional[float]:
        """successes / impressions, or ``None`` when nothing matched."""
        return self.successes / self.impressions if self.impressions else None


def replayer_evaluate(log: Sequence[LoggedEvent], policy: BanditPolicy, arm_pool: Optional[Sequence[ArmId]] = None,
                      seed: int = 0, progress: bool = False) -> ReplayResult:
    if not log:
        raise ValueError("Cannot replay an empty log")
    pool = frozenset(validate_arm_pool(arm_pool if arm_pool is not None else policy.arms))
    stream = derive_stream(seed, [REPLAY_LABEL])

    result = ReplayResult()
    for index, event in enumerate(tqdm(log, desc="Replaying log", leave=False, disable=not progress)):
        if event.displayed not in pool:
            raise UnknownArmError(event.displayed, where=f"replayed log (event {index}, t={event.t})")
        selection = policy.select(event.context, rng=stream.child(REPLAY_SELECT_LABEL, index))
        if chosen_arm(selection) != event.displayed:
            result.skipped += 1
            continue
        # skipped events never advance the policy's round counter
        interaction = policy.interaction_for(policy.t + 1, event.context, selection, event.reward)
        policy.update(interaction, rng=stream.child(REPLAY_UPDATE_LABEL, interaction.t))
        result.impressions += 1
        result.successes += interaction.reward
        result.matches.append((index, interaction.reward))
        result.interactions.append(interaction)

    logger.info("Replayed %d events: %d impressions, %d skipped", len(log), result.impressions, result.skipped)
    return result


def uniform_random_log(env, contexts: Callable, n: int, seed: int = 0, drift: Optional[Callable] = None,
                       progress: bool = False) -> List[LoggedEvent]:
    """Log ``n`` rounds of a logger that displays a uniformly random arm of ``env``."""
    arms = tuple(env.arms)
    events = []
    for t in tqdm(range(1, n + 1), desc="Generating log", leave=False, disable=not progress):
        if drift is not None:
            drift(env, t, derive_stream(seed, [LOG_DRIFT_LABEL, t]))
        x = contexts(t, derive_stream(seed, [LOG_CONTEXT_LABEL, t]))
        arm = arms[derive_stream(seed, [LOG_ARM_LABEL, t]).integers(len(arms))]
        reward = env_step(env, arm, x, derive_stream(seed, [LOG_REWARD_LABEL, t]))
        events.append(LoggedEvent(t, arm, reward, x))
    return events

