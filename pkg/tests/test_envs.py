import math

import pytest
import torch

from driftbandit.envs.hierarchical import synth_hier_env
from driftbandit.envs.simulator import (
    DriftingLinearEnv,
    GaussianContexts,
    LoggedContexts,
    arm_ids,
    env_drift,
    env_step,
)
from driftbandit.errors import UnknownArmError
from driftbandit.modeling.hierarchy import Taxonomy
from driftbandit.utils import DTYPE, derive_stream, sigmoid
from tests.helpers import mat, vec


def fixed_env(rows, **kwargs):
    return DriftingLinearEnv(arm_ids(len(rows)), mat(rows), **kwargs)


def test_arm_ids():
    assert arm_ids(3) == ("arm000", "arm001", "arm002")
    assert arm_ids(1500)[-1] == "arm1499"
    assert list(arm_ids(1500)) == sorted(arm_ids(1500))


class TestEnvStep:
    def test_zero_coefficients_give_fair_coin(self):
        env = fixed_env([[0.0, 0.0]])
        assert env.mean_reward("arm000", vec(0.3, 0.4)) == 0.5
        clicks = [env_step(env, "arm000", vec(0.3, 0.4), derive_stream(0, [t])) for t in range(4000)]
        assert set(clicks) <= {0.0, 1.0}
        assert abs(sum(clicks) / len(clicks) - 0.5) < 0.03

    def test_click_probability_is_sigmoid(self):
        env = fixed_env([[1.0, 0.0]])
        assert env.mean_reward("arm000", vec(1.0, 0.0)) == pytest.approx(sigmoid(1.0))

    def test_saturated_score_always_clicks(self):
        env = fixed_env([[100.0]])
        assert all(env_step(env, "arm000", vec(1.0), derive_stream(1, [t])) == 1.0 for t in range(200))

    def test_shared_stream_gives_common_random_numbers(self):
        env = fixed_env([[0.5], [0.6]])
        for t in range(200):
            low = env_step(env, "arm000", vec(1.0), derive_stream(2, [t]))
            high = env_step(env, "arm001", vec(1.0), derive_stream(2, [t]))
            assert low <= high

    def test_gaussian_rewards(self):
        env = fixed_env([[2.0]], reward_model="gaussian", reward_noise=0.0)
        assert env_step(env, "arm000", vec(1.5), derive_stream(0)) == 3.0

    def test_unknown_arm(self):
        with pytest.raises(UnknownArmError):
            env_step(fixed_env([[0.0]]), "arm999", vec(1.0), derive_stream(0))


class TestEnvDrift:
    def test_no_change_probability_keeps_coefficients(self):
        env = DriftingLinearEnv.create(5, 3, derive_stream(3))
        start = env.true_w.clone()
        for t in range(1, 301):
            env_drift(env, t, derive_stream(4, [t]))
        assert torch.equal(env.true_w, start)

    def test_certain_change_is_a_random_walk(self):
        env = DriftingLinearEnv.create(50, 4, derive_stream(5), change_prob=1.0)
        start = env.true_w.clone()
        T = 100
        for t in range(1, T + 1):
            env_drift(env, t, derive_stream(6, [t]))
        displacement = (env.true_w - start).reshape(-1)
        # 200 independent sums of T standard normal steps
        assert 70 < float(displacement.var()) < 130

    def test_piecewise_changes_three_times(self):
        T = 100
        env = DriftingLinearEnv.create(4, 3, derive_stream(7), pattern="piecewise", horizon=T, coord=1)
        start = env.true_w.clone()
        trace = []
        for t in range(1, T + 1):
            env_drift(env, t, derive_stream(8, [t]))
            trace.append(env.true_w[:, 1].clone())
        changes = sum(not torch.equal(a, b) for a, b in zip(trace, trace[1:]))
        assert changes == 3
        assert torch.equal(env.true_w[:, [0, 2]], start[:, [0, 2]])
        assert torch.allclose(trace[30], start[:, 1] + 1.5)

    def test_periodic_peak(self):
        env = DriftingLinearEnv.create(2, 2, derive_stream(9), pattern="periodic", period=100.0, amplitude=2.0)
        start = env.true_w.clone()
        env_drift(env, 25, derive_stream(0))
        assert torch.allclose(env.true_w[:, 0], start[:, 0] + 2.0)
        env_drift(env, 100, derive_stream(0))
        assert torch.allclose(env.true_w[:, 0], start[:, 0], atol=1e-12)

    def test_invalid_coordinate(self):
        with pytest.raises(ValueError):
            fixed_env([[0.0, 0.0]], coord=2)


class TestContexts:
    def test_gaussian_contexts_have_unit_norm(self):
        contexts = GaussianContexts(4)
        for t in range(1, 50):
            x = contexts(t, derive_stream(10, [t]))
            assert x.dtype == DTYPE
            assert math.isclose(float(torch.linalg.vector_norm(x)), 1.0, rel_tol=1e-12)

    def test_logged_contexts_cycle(self):
        contexts = LoggedContexts([vec(1.0), vec(2.0)])
        assert [float(contexts(t)[0]) for t in range(1, 6)] == [1.0, 2.0, 1.0, 2.0, 1.0]

    def test_logged_contexts_need_events(self):
        with pytest.raises(ValueError):
            LoggedContexts([])


class TestHierarchicalEnv:
    def test_siblings_share_category_effect(self):
        taxonomy = Taxonomy.balanced(3, 2)
        env = synth_hier_env(taxonomy, 1.0, {}, derive_stream(11), d=4)
        for category in taxonomy.children_of("root"):
            first, *rest = taxonomy.children_of(category)
            assert all(torch.equal(env.weights(first), env.weights(leaf)) for leaf in rest)
        assert not torch.equal(env.weights("n00/n00"), env.weights("n01/n00"))

    def test_explicit_effects(self):
        taxonomy = Taxonomy.from_edges([("root", "A"), ("A", "a1"), ("A", "a2")])
        env = synth_hier_env(taxonomy, {"A": [0.3]}, {"a1": [0.5]}, derive_stream(0))
        assert env.d == 1
        assert env.mean_reward("a1", vec(1.0)) == pytest.approx(sigmoid(0.8))
        assert env.mean_reward("a2", vec(1.0)) == pytest.approx(sigmoid(0.3))

    def test_unknown_leaf(self):
        taxonomy = Taxonomy.from_edges([("root", "A"), ("A", "a1")])
        env = synth_hier_env(taxonomy, 1.0, 1.0, derive_stream(0), d=2)
        with pytest.raises(UnknownArmError):
            env.weights("A")

    def test_clicks_are_binary(self):
        taxonomy = Taxonomy.from_edges([("root", "A"), ("A", "a1"), ("A", "a2")])
        env = synth_hier_env(taxonomy, {"A": [0.0]}, {"a1": [2.0]}, derive_stream(0))
        clicks = [env_step(env, "a1", vec(1.0), derive_stream(12, [t])) for t in range(2000)]
        assert set(clicks) == {0.0, 1.0}
        assert sum(clicks) / len(clicks) == pytest.approx(sigmoid(2.0), abs=0.03)
