import json

import pytest

from driftbandit.data.config import EnvSpec, ExperimentConfig, HierSpec, PolicySpec, TrackSpec
from driftbandit.data.event_log import write_event_log
from driftbandit.envs.replayer import uniform_random_log
from driftbandit.envs.simulator import DriftingLinearEnv, GaussianContexts, arm_ids
from driftbandit.errors import UnknownArmError
from driftbandit.harness.metrics import read_csv, summary_path
from driftbandit.harness.runner import build_policy, run_experiment, run_rounds, write_outputs
from driftbandit.modeling.drift import DriftPolicy
from driftbandit.modeling.flat import FlatPolicy, FlatPolicyConfig
from driftbandit.modeling.hierarchy import HmabPolicy, Taxonomy
from driftbandit.utils import derive_stream
from tests.helpers import mat


def simulate_config(**kwargs):
    defaults = dict(mode="simulate", K=3, d=2, T=250, bucket_size=100, policy=PolicySpec(kind="thompson"),
                    env=EnvSpec(change_prob=0.01))
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


def run_to_files(cfg, out):
    result = run_experiment(cfg, progress=False)
    write_outputs(result, out)
    return result


class TestBuildPolicy:
    def test_kinds(self):
        spec = PolicySpec(kind="tvucb", particles=3)
        assert isinstance(build_policy(spec, ["a", "b"], 2, seed=0), DriftPolicy)
        assert isinstance(build_policy(spec, ["a", "b"], 2, seed=0, kind="linucb"), FlatPolicy)
        taxonomy = Taxonomy.flat(["a", "b"])
        assert isinstance(build_policy(spec, ["a", "b"], 2, seed=0, taxonomy=taxonomy, kind="hmab_linucb"), HmabPolicy)

    def test_hmab_needs_taxonomy(self):
        with pytest.raises(ValueError):
            build_policy(PolicySpec(), ["a"], 2, seed=0, kind="hmab_thompson")


class TestRunRounds:
    def test_random_policy_on_zero_coefficients(self):
        env = DriftingLinearEnv(arm_ids(4), mat([[0.0, 0.0]] * 4))
        policy = FlatPolicy(env.arms, 2, FlatPolicyConfig(kind="random"))
        accumulator = run_rounds(env, GaussianContexts(2), policy, T=4000, seed=1, bucket_size=1000, drift=False)
        impressions = sum(b.impressions for b in accumulator.buckets)
        successes = sum(b.successes for b in accumulator.buckets)
        assert impressions == 4000
        assert abs(successes / impressions - 0.5) < 0.03
        assert successes == policy.cumulative_reward


class TestSimulate:
    def test_bucket_layout(self, tmp_path):
        result = run_to_files(simulate_config(), tmp_path / "run.csv")
        assert [row.impressions for row in result.rows] == [100, 100, 50]
        assert [row.bucket for row in read_csv(tmp_path / "run.csv")] == [0, 1, 2]

    def test_reward_accounting(self):
        result = run_experiment(simulate_config(replications=3), progress=False)
        summary = result.summary
        assert summary["seeds"] == [0, 1, 2]
        assert summary["impressions"] == 3 * 250
        assert summary["total_reward"] == pytest.approx(summary["successes"])
        assert summary["successes"] == pytest.approx(sum(row.successes for row in result.rows))
        assert result.rows[-1].cum_ctr == pytest.approx(summary["overall_ctr"])
        assert summary["ctr_min"] <= summary["ctr_mean"] <= summary["ctr_max"]

    @pytest.mark.parametrize("kind", ["thompson", "linucb", "eps_greedy", "random", "tvucb", "tvtp"])
    def test_same_seed_same_bytes(self, tmp_path, kind):
        cfg = simulate_config(T=120, bucket_size=50, policy=PolicySpec(kind=kind, particles=3))
        run_to_files(cfg, tmp_path / "a.csv")
        run_to_files(cfg, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert summary_path(tmp_path / "a.csv").read_bytes() == summary_path(tmp_path / "b.csv").read_bytes()

    def test_parallel_replications_match_sequential(self, tmp_path):
        cfg = simulate_config(T=150, replications=3, policy=PolicySpec(kind="tvtp", particles=3))
        run_to_files(cfg, tmp_path / "sequential.csv")
        run_to_files(cfg.with_overrides(workers=2), tmp_path / "parallel.csv")
        assert (tmp_path / "sequential.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()

    def test_seed_changes_curve(self, tmp_path):
        run_to_files(simulate_config(seed=0), tmp_path / "a.csv")
        run_to_files(simulate_config(seed=5), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()


class TestReplay:
    @pytest.fixture
    def log_path(self, tmp_path):
        env = DriftingLinearEnv.create(3, 2, derive_stream(2))
        path = tmp_path / "events.tsv"
        write_event_log(uniform_random_log(env, GaussianContexts(2), n=300, seed=2), path)
        return path

    def test_impressions_accounting(self, tmp_path, log_path):
        cfg = ExperimentConfig(mode="replay", log=str(log_path), bucket_size=100, replications=2,
                               policy=PolicySpec(kind="linucb"))
        result = run_to_files(cfg, tmp_path / "replay.csv")
        assert len(result.rows) == 3
        assert result.summary["impressions"] + result.summary["skipped"] == 2 * 300
        assert result.summary["total_reward"] == pytest.approx(result.summary["successes"])

    def test_pool_from_config(self, tmp_path, log_path):
        cfg = ExperimentConfig(mode="replay", log=str(log_path), K=5, bucket_size=100, policy=PolicySpec(kind="random"))
        result = run_to_files(cfg, tmp_path / "replay.csv")
        # two of the five pooled arms never appear in the log
        assert result.summary["impressions"] + result.summary["skipped"] == 300
        assert result.summary["impressions"] < 300 / 3

    def test_logged_arm_outside_config_pool(self, tmp_path, log_path):
        cfg = ExperimentConfig(mode="replay", log=str(log_path), K=2, bucket_size=100, policy=PolicySpec(kind="random"))
        with pytest.raises(UnknownArmError):
            run_experiment(cfg, progress=False)

    def test_replay_is_deterministic(self, tmp_path, log_path):
        cfg = ExperimentConfig(mode="replay", log=str(log_path), bucket_size=100, policy=PolicySpec(kind="tvtp",
                                                                                                     particles=3))
        run_to_files(cfg, tmp_path / "a.csv")
        run_to_files(cfg, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestHier:
    def test_summary_and_random_curve(self, tmp_path):
        cfg = ExperimentConfig(mode="hier", d=3, T=300, bucket_size=100, policy=PolicySpec(kind="hmab_thompson"),
                               hier=HierSpec(branching=2, depth=2))
        result = run_to_files(cfg, tmp_path / "hier.csv")
        assert result.summary["policy"] == "hmab_thompson"
        assert result.summary["rsr"] == pytest.approx(result.summary["overall_ctr"] / result.summary["random_ctr"])
        assert len(read_csv(tmp_path / "hier.random.csv")) == 3
        saved = json.loads(summary_path(tmp_path / "hier.csv").read_text())
        assert saved["rsr"] == pytest.approx(result.summary["rsr"])

    def test_taxonomy_file(self, tmp_path):
        path = tmp_path / "taxonomy.tsv"
        path.write_text("root\tA\nroot\tB\nA\ta1\nA\ta2\nB\tb1\n")
        cfg = ExperimentConfig(mode="hier", d=2, T=100, bucket_size=50, policy=PolicySpec(kind="hmab_linucb"),
                               hier=HierSpec(taxonomy=str(path)))
        result = run_experiment(cfg, progress=False)
        assert result.summary["impressions"] == 100
        assert [row.impressions for row in result.random_rows] == [50, 50]

    def test_flat_policy_on_leaves(self):
        cfg = ExperimentConfig(mode="hier", d=2, T=100, policy=PolicySpec(kind="eps_greedy"),
                               hier=HierSpec(branching=3, depth=1))
        assert run_experiment(cfg, progress=False).summary["policy"] == "eps_greedy"


class TestTrack:
    def test_track_output(self, tmp_path):
        cfg = ExperimentConfig(mode="track", d=2, T=200, bucket_size=50, replications=2,
                               policy=PolicySpec(particles=3),
                               env=EnvSpec(pattern="piecewise", reward_model="gaussian"),
                               track=TrackSpec(skip_segments=1))
        result = run_to_files(cfg, tmp_path / "track.csv")
        lines = (tmp_path / "track.csv").read_text().splitlines()
        assert lines[0] == "bucket,true_coef,drift_estimate,static_estimate"
        assert len(lines) == 5
        assert result.summary["mse_drift"] >= 0 and result.summary["mse_static"] >= 0
        assert len(result.summary["mse_drift_per_seed"]) == 2
