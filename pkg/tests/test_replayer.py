import pytest

from driftbandit.data.event_log import LoggedEvent
from driftbandit.envs.replayer import replayer_evaluate, uniform_random_log
from driftbandit.envs.simulator import DriftingLinearEnv, LoggedContexts, arm_ids
from driftbandit.errors import UnknownArmError
from driftbandit.modeling.bandit import BanditPolicy, total_reward
from driftbandit.modeling.flat import FlatPolicy, FlatPolicyConfig
from driftbandit.utils import derive_stream, sigmoid
from tests.helpers import mat, vec


class ScriptedPolicy(BanditPolicy):
    """Plays a fixed list of arms, or one arm forever."""

    name = "scripted"

    def __init__(self, arms, choices, d=1):
        super().__init__(arms, d=d)
        self.choices = choices
        self.calls = 0
        self.updates = []

    def select(self, context, rng=None):
        arm = self.choices if isinstance(self.choices, str) else self.choices[self.calls]
        self.calls += 1
        return arm

    def update(self, interaction, rng=None):
        self._record(interaction)
        self.updates.append(interaction)


def make_log(arms, rewards):
    return [LoggedEvent(t, arm, reward, vec(float(t))) for t, (arm, reward) in enumerate(zip(arms, rewards), start=1)]


class TestReplayerEvaluate:
    def test_policy_matching_every_event(self):
        displayed = ["a", "b", "a", "c"]
        log = make_log(displayed, [1.0, 0.0, 1.0, 1.0])
        policy = ScriptedPolicy(["a", "b", "c"], displayed)
        result = replayer_evaluate(log, policy)
        assert (result.impressions, result.skipped) == (4, 0)
        assert result.successes == 3.0
        assert result.ctr == 0.75
        assert [i.t for i in policy.updates] == [1, 2, 3, 4]

    def test_arm_never_displayed(self):
        log = make_log(["a"] * 5, [1.0] * 5)
        result = replayer_evaluate(log, ScriptedPolicy(["a", "b"], "b"))
        assert result.impressions == 0
        assert result.skipped == 5
        assert result.ctr is None

    def test_skipped_events_do_not_advance_the_round(self):
        log = make_log(["a", "b", "a", "b", "a"], [1.0, 1.0, 0.0, 1.0, 1.0])
        policy = ScriptedPolicy(["a", "b"], "a")
        result = replayer_evaluate(log, policy)
        assert [index for index, _ in result.matches] == [0, 2, 4]
        assert [i.t for i in policy.updates] == [1, 2, 3]
        assert policy.t == 3
        assert result.successes == policy.cumulative_reward == 2.0

    def test_every_event_is_matched_or_skipped(self):
        for case in range(1000):
            rng = derive_stream(50, [case])
            arms = arm_ids(1 + rng.integers(4))
            n = 1 + rng.integers(40)
            log = make_log([arms[rng.integers(len(arms))] for _ in range(n)], [float(rng.integers(2)) for _ in range(n)])
            policy = FlatPolicy(arms, d=1, config=FlatPolicyConfig(kind="random"), seed=case)
            result = replayer_evaluate(log, policy, seed=case)
            assert result.impressions + result.skipped == n
            assert result.impressions == policy.t == len(result.interactions) == len(result.matches)
            assert result.successes == total_reward(result.interactions) == policy.cumulative_reward
            assert result.successes == sum(log[index].reward for index, _ in result.matches)
            assert all(log[index].displayed == interaction.chosen
                       for (index, _), interaction in zip(result.matches, result.interactions))

    def test_seeded_replay_is_deterministic(self):
        log = make_log([["a", "b"][t % 2] for t in range(200)], [float(t % 3 == 0) for t in range(200)])

        def replay():
            policy = FlatPolicy(["a", "b"], d=1, config=FlatPolicyConfig(kind="thompson"))
            return replayer_evaluate(log, policy, seed=8).matches

        assert replay() == replay()

    def test_displayed_arm_outside_pool(self):
        log = make_log(["a", "z"], [1.0, 0.0])
        with pytest.raises(UnknownArmError):
            replayer_evaluate(log, ScriptedPolicy(["a", "b"], "a"))

    def test_empty_log(self):
        with pytest.raises(ValueError):
            replayer_evaluate([], ScriptedPolicy(["a"], "a"))


def test_replayed_ctr_matches_online_ctr():
    env = DriftingLinearEnv(arm_ids(3), mat([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]))
    contexts = LoggedContexts([vec(1.0, 0.0)])
    log = uniform_random_log(env, contexts, n=12_000, seed=13)
    assert {event.displayed for event in log} == set(env.arms)
    result = replayer_evaluate(log, ScriptedPolicy(env.arms, "arm000", d=2), seed=13)
    assert result.impressions == pytest.approx(4000, rel=0.1)
    assert result.ctr == pytest.approx(sigmoid(1.0), abs=0.03)
