"""Drifting-coefficient click simulator.

Every arm ``k`` has a true coefficient vector ``w_k``; a click on context ``x``
is a Bernoulli draw with probability ``sigmoid(w_k^T x)`` (or, for the
gaussian reward model, ``r = w_k^T x + N(0, reward_noise^2)``).  Between rounds
the coefficients move according to one of three patterns.
"""
import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch

from driftbandit.data.config import PATTERNS, REWARD_MODELS, EnvSpec
from driftbandit.data.event_log import parse_event_log
from driftbandit.errors import UnknownArmError
from driftbandit.modeling.bandit import ArmId
from driftbandit.utils import RandomStream, context_vector, sigmoid

logger = logging.getLogger(__name__)


def arm_ids(K: int) -> Tuple[ArmId, ...]:
    """``arm000, arm001, ...``; zero padding keeps lexicographic and numeric order equal."""
    width = max(3, len(str(K - 1)))
    return tuple(f"arm{k:0{width}d}" for k in range(K))


@dataclass(eq=False)
class DriftingLinearEnv:
    arms: Tuple[ArmId, ...]
    true_w: torch.Tensor
    change_prob: float = 0.0
    pattern: str = "random_walk"
    horizon: int = 1
    boundaries: Tuple[float, ...] = (0.25, 0.5, 0.75)
    levels: Tuple[float, ...] = (0.0, 1.5, -1.5, 0.75)
    period: float = 1000.0
    amplitude: float = 1.0
    coord: int = 0
    reward_model: str = "logistic"
    reward_noise: float = 0.1
    base_w: torch.Tensor = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.change_prob <= 1.0:
            raise ValueError(f"Invalid change probability: {self.change_prob}")
        if self.pattern not in PATTERNS:
            raise ValueError(f"Invalid drift pattern {self.pattern!r}, expected one of {PATTERNS}")
        if self.reward_model not in REWARD_MODELS:
            raise ValueError(f"Invalid reward model {self.reward_model!r}, expected one of {REWARD_MODELS}")
        if self.true_w.shape[0] != len(self.arms):
            raise ValueError(f"Expected {len(self.arms)} coefficient rows, got {self.true_w.shape[0]}")
        if not 0 <= self.coord < self.d:
            raise ValueError(f"Drift coordinate {self.coord} is out of range for d={self.d}")
        self.base_w = self.true_w.clone()

    @classmethod
    def create(cls, K: int, d: int, rng: RandomStream, **kwargs) -> "DriftingLinearEnv":
        """Initial coefficients ``w_k ~ N(m, I)`` around a shared mean ``m ~ N(0, I)``."""
        m = rng.normal(d)
        true_w = m + rng.normal((K, d))
        return cls(arm_ids(K), true_w, **kwargs)

    @classmethod
    def from_spec(cls, spec: EnvSpec, K: int, d: int, horizon: int, rng: RandomStream) -> "DriftingLinearEnv":
        return cls.create(K, d, rng, change_prob=spec.change_prob, pattern=spec.pattern, horizon=horizon,
                          boundaries=tuple(spec.boundaries), levels=tuple(spec.levels), period=spec.period,
                          amplitude=spec.amplitude, coord=spec.coord, reward_model=spec.reward_model,
                          reward_noise=spec.reward_noise)

    @property
    def K(self) -> int:
        return len(self.arms)

    @property
    def d(self) -> int:
        return self.true_w.shape[1]

    def arm_index(self, arm: ArmId) -> int:
        try:
            return self.arms.index(arm)
        except ValueError:
            raise UnknownArmError(arm, where="environment") from None

    def weights(self, arm: ArmId) -> torch.Tensor:
        return self.true_w[self.arm_index(arm)]

    def mean_reward(self, arm: ArmId, x) -> float:
        """Expected reward: the click probability, or ``w^T x`` for gaussian rewards."""
        score = float(context_vector(x, self.d) @ self.weights(arm))
        return sigmoid(score) if self.reward_model == "logistic" else score

    def segment(self, t: int) -> int:
        """Index of the piecewise segment that round ``t`` (1-based) falls in."""
        return bisect.bisect_right(self.boundaries, (t - 1) / self.horizon)


def env_step(env, arm: ArmId, x, rng: RandomStream) -> float:
    """Draw the reward of pulling ``arm`` on context ``x``.

    The logistic model consumes a single uniform, so two policies sharing the
    stream see common random numbers.
    """
    mean = env.mean_reward(arm, x)
    if getattr(env, "reward_model", "logistic") == "logistic":
        return 1.0 if rng.uniform() < mean else 0.0
    return mean + env.reward_noise * float(rng.normal(1)[0])


def env_drift(env: DriftingLinearEnv, t: int, rng: RandomStream) -> None:
    """Move the true coefficients to their round-``t`` values in place."""
    if env.pattern == "random_walk":
        if env.change_prob == 0.0:
            return
        # each coefficient independently takes a N(0, 1) step with probability change_prob
        gate = rng.uniform((env.K, env.d)) < env.change_prob
        steps = rng.normal((env.K, env.d))
        env.true_w = torch.where(gate, env.true_w + steps, env.true_w)
    elif env.pattern == "piecewise":
        env.true_w[:, env.coord] = env.base_w[:, env.coord] + env.levels[env.segment(t)]
    else:
        env.true_w[:, env.coord] = env.base_w[:, env.coord] + env.amplitude * math.sin(2 * math.pi * t / env.period)


class GaussianContexts:
    """i.i.d. ``N(0, I_d)`` contexts scaled to unit norm."""

    def __init__(self, d: int):
        self.d = d

    def __call__(self, t: int, rng: RandomStream) -> torch.Tensor:
        z = rng.normal(self.d)
        norm = torch.linalg.vector_norm(z)
        return z / norm if norm > 0 else z


class LoggedContexts:
    """Contexts replayed cyclically from a list (e.g. an event log)."""

    def __init__(self, contexts: Sequence[torch.Tensor]):
        if not contexts:
            raise ValueError("Cannot replay contexts from an empty log")
        self.contexts: List[torch.Tensor] = list(contexts)
        self.d = self.contexts[0].shape[0]

    def __call__(self, t: int, rng: Optional[RandomStream] = None) -> torch.Tensor:
        return self.contexts[(t - 1) % len(self.contexts)]


def make_contexts(spec: EnvSpec, d: int):
    if spec.context_source == "synthetic_gaussian":
        return GaussianContexts(d)
    contexts = LoggedContexts([event.context for event in parse_event_log(spec.context_log)])
    if contexts.d != d:
        raise ValueError(f"Context log {spec.context_log} has d={contexts.d}, expected d={d}")
    logger.info("Replaying %d logged contexts from %s", len(contexts.contexts), spec.context_log)
    return contexts
