from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

from driftbandit.errors import EmptyArmPoolError
from driftbandit.modeling.bandit import ArmId, BanditPolicy, Interaction
from driftbandit.modeling.nig import UCB_VARIANCE_FORMS, NigPosterior, linucb_score, nig_sample, nig_update
from driftbandit.utils import ARM_LABEL, EXPLORE_LABEL, RandomStream, argmax_with_ties, context_vector

FLAT_KINDS = ("random", "eps_greedy", "thompson", "linucb")
KIND_ALIASES = {"ts": "thompson", "epsgreedy": "eps_greedy"}


@dataclass(frozen=True)
class FlatPolicyConfig:
    kind: str = "thompson"
    epsilon: float = 0.1
    lambda_: float = 0.5
    q0: float = 1.0
    alpha0: float = 2.0
    beta0: float = 2.0
    ucb_variance_form: str = "paper"

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in FLAT_KINDS:
            raise ValueError(f"Invalid policy kind {self.kind!r}, expected one of {FLAT_KINDS}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"Invalid epsilon value: {self.epsilon}")
        if not 0.0 <= self.lambda_:
            raise ValueError(f"Invalid lambda value: {self.lambda_}")
        if not 0.0 < self.q0:
            raise ValueError(f"Invalid q0 value: {self.q0}")
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError(f"Invalid prior: alpha0={self.alpha0}, beta0={self.beta0}")
        if self.ucb_variance_form not in UCB_VARIANCE_FORMS:
            raise ValueError(f"Invalid ucb_variance_form {self.ucb_variance_form!r}")

    def prior(self, d: int) -> NigPosterior:
        return NigPosterior.prior(d, q0=self.q0, alpha0=self.alpha0, beta0=self.beta0)


def node_scores(policy: FlatPolicyConfig, posteriors: Mapping[ArmId, NigPosterior], ids: Sequence[ArmId],
                x, rng: RandomStream) -> Dict[ArmId, float]:
    """Per-arm EVAL score.  ``ids`` must be sorted; arm ``i`` samples from ``rng.child(ARM_LABEL, i)``."""
    scores = {}
    for index, arm in enumerate(ids):
        post = posteriors[arm]
        if policy.kind == "thompson":
            _, w = nig_sample(post, rng.child(ARM_LABEL, index))
            scores[arm] = float(x @ w)
        elif policy.kind == "linucb":
            scores[arm] = linucb_score(post, x, policy.lambda_, policy.ucb_variance_form)
        else:
            scores[arm] = post.predict(x)
    return scores


def explores(policy: FlatPolicyConfig, rng: RandomStream) -> bool:
    """Exploration coin for random / eps-greedy; consumes one uniform draw."""
    if policy.kind == "random":
        return True
    if policy.kind == "eps_greedy":
        return rng.uniform() < policy.epsilon
    return False


def flat_select(policy: FlatPolicyConfig, posteriors: Mapping[ArmId, NigPosterior], x, rng: RandomStream) -> ArmId:
    if not posteriors:
        raise EmptyArmPoolError("Cannot select from an empty arm pool")
    ids = sorted(posteriors)
    x = context_vector(x, posteriors[ids[0]].d)

    explore_rng = rng.child(EXPLORE_LABEL)
    if explores(policy, explore_rng):
        return ids[explore_rng.integers(len(ids))]

    scores = node_scores(policy, posteriors, ids, x, rng)
    arm, _ = argmax_with_ties(ids, [scores[arm] for arm in ids])
    return arm


class FlatPolicy(BanditPolicy):
    """Random, eps-greedy, Thompson sampling or LinUCB over independent arms."""

    def __init__(self, arms: Sequence[ArmId], d: int, config: Optional[FlatPolicyConfig] = None, seed: int = 0):
        super().__init__(arms, d, seed=seed)
        self.config = config or FlatPolicyConfig()
        self.name = self.config.kind
        self.posteriors: Dict[ArmId, NigPosterior] = {arm: self.config.prior(self.d) for arm in self.arms}

    def select(self, context, rng: Optional[RandomStream] = None) -> ArmId:
        return flat_select(self.config, self.posteriors, context, self._select_stream(rng))

    def update(self, interaction: Interaction, rng: Optional[RandomStream] = None) -> None:
        self.arm_index(interaction.chosen)
        post = nig_update(self.posteriors[interaction.chosen], interaction.context, interaction.reward)
        self._record(interaction)
        self.posteriors[interaction.chosen] = post

    def estimate(self, arm: ArmId):
        self.arm_index(arm)
        return self.posteriors[arm].mu_w
