"""Experiment loops: simulation, log replay, hierarchical workloads and coefficient tracking.

Replication ``r`` runs with seed ``seed + r``.  Every random quantity of a
round is drawn from a stream addressed by ``(seed, [label, t])``, so runs are
reproducible regardless of the number of workers, and two policies run on the
same seed face the same contexts, drifts and reward draws.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from tqdm import tqdm
from tqdm.contrib.concurrent import process_map

from driftbandit.data.config import ExperimentConfig, PolicySpec
from driftbandit.data.event_log import LoggedEvent, parse_event_log
from driftbandit.data.taxonomy_file import parse_taxonomy
from driftbandit.envs.hierarchical import synth_hier_env
from driftbandit.envs.replayer import replayer_evaluate, uniform_random_log
from driftbandit.envs.simulator import DriftingLinearEnv, arm_ids, env_drift, env_step, make_contexts
from driftbandit.errors import UndefinedMetricError
from driftbandit.harness.metrics import (
    BucketAccumulator,
    BucketRow,
    MetricsBucket,
    TrackRow,
    aggregate_replications,
    compute_rsr,
    emit_csv,
    emit_track_csv,
    random_curve_path,
    replication_summary,
    summary_path,
    totals,
    write_summary,
)
from driftbandit.modeling.bandit import ArmId, BanditPolicy, chosen_arm
from driftbandit.modeling.drift import DRIFT_KINDS, DriftPolicy, aggregate_posterior, drift_update, init_particle_set
from driftbandit.modeling.flat import FlatPolicy
from driftbandit.modeling.hierarchy import HmabPolicy, Taxonomy
from driftbandit.modeling.nig import NigPosterior, nig_update
from driftbandit.utils import derive_stream

logger = logging.getLogger(__name__)

ENV_INIT_LABEL = 20
CONTEXT_LABEL = 21
DRIFT_LABEL = 22
REWARD_LABEL = 23
ROUND_SELECT_LABEL = 24
ROUND_UPDATE_LABEL = 25
TRACK_INIT_LABEL = 26


def build_policy(spec: PolicySpec, arms: Sequence[ArmId], d: int, seed: int, taxonomy: Optional[Taxonomy] = None,
                 kind: Optional[str] = None) -> BanditPolicy:
    kind = kind or spec.kind
    if kind.startswith("hmab_"):
        if taxonomy is None:
            raise ValueError(f"Policy {kind} needs a taxonomy")
        return HmabPolicy(taxonomy, d, spec.flat_config(kind[len("hmab_"):]), seed=seed)
    if kind in DRIFT_KINDS:
        return DriftPolicy(arms, d, spec.drift_config(kind), seed=seed)
    return FlatPolicy(arms, d, spec.flat_config(kind), seed=seed)


@dataclass
class ReplicationResult:
    replication: int
    seed: int
    policy: str
    buckets: List[MetricsBucket]
    total_reward: float
    skipped: int = 0

    @property
    def impressions(self) -> int:
        return totals(self.buckets).impressions

    @property
    def successes(self) -> float:
        return totals(self.buckets).successes

    @property
    def ctr(self) -> Optional[float]:
        return totals(self.buckets).ctr


@dataclass
class TrackTrace:
    seed: int
    true_coef: List[float]
    drift_estimate: List[float]
    static_estimate: List[float]
    segments: List[int]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: List = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    random_rows: Optional[List[BucketRow]] = None
    replications: List[ReplicationResult] = field(default_factory=list)


def run_rounds(env, contexts, policy: BanditPolicy, T: int, seed: int, bucket_size: int, drift: bool = True,
               progress: bool = False) -> BucketAccumulator:
    """The select / observe / update loop over rounds ``1..T``."""
    buckets = BucketAccumulator(bucket_size)
    for t in tqdm(range(1, T + 1), desc=f"Rounds ({policy.name})", leave=False, disable=not progress):
        if drift:
            env_drift(env, t, derive_stream(seed, [DRIFT_LABEL, t]))
        x = contexts(t, derive_stream(seed, [CONTEXT_LABEL, t]))
        selection = policy.select(x, rng=derive_stream(seed, [ROUND_SELECT_LABEL, t]))
        reward = env_step(env, chosen_arm(selection), x, derive_stream(seed, [REWARD_LABEL, t]))
        policy.update(policy.interaction_for(t, x, selection, reward), rng=derive_stream(seed, [ROUND_UPDATE_LABEL, t]))
        buckets.add(t - 1, reward)
    return buckets


def load_taxonomy(cfg: ExperimentConfig) -> Taxonomy:
    if cfg.hier.taxonomy:
        return parse_taxonomy(cfg.hier.taxonomy)
    return Taxonomy.balanced(cfg.hier.branching, cfg.hier.depth)


def simulate_replication(cfg: ExperimentConfig, replication: int, kind: str, progress: bool = False) -> ReplicationResult:
    seed = cfg.seed + replication
    env = DriftingLinearEnv.from_spec(cfg.env, cfg.n_arms, cfg.d, cfg.T, derive_stream(seed, [ENV_INIT_LABEL]))
    policy = build_policy(cfg.policy, env.arms, cfg.d, seed, kind=kind)
    buckets = run_rounds(env, make_contexts(cfg.env, cfg.d), policy, cfg.T, seed, cfg.bucket_size, progress=progress)
    return ReplicationResult(replication, seed, kind, buckets.buckets, policy.cumulative_reward)


def hier_replication(cfg: ExperimentConfig, replication: int, kind: str, taxonomy: Taxonomy,
                     progress: bool = False) -> ReplicationResult:
    seed = cfg.seed + replication
    env = synth_hier_env(taxonomy, cfg.hier.category_scale, cfg.hier.leaf_scale,
                         derive_stream(seed, [ENV_INIT_LABEL]), d=cfg.d)
    policy = build_policy(cfg.policy, taxonomy.leaves, cfg.d, seed, taxonomy=taxonomy, kind=kind)
    contexts = make_contexts(cfg.env, cfg.d)
    buckets = run_rounds(env, contexts, policy, cfg.T, seed, cfg.bucket_size, drift=False, progress=progress)
    return ReplicationResult(replication, seed, kind, buckets.buckets, policy.cumulative_reward)


def replay_replication(cfg: ExperimentConfig, replication: int, kind: str, events: Sequence[LoggedEvent],
                       taxonomy: Optional[Taxonomy] = None, progress: bool = False) -> ReplicationResult:
    seed = cfg.seed + replication
    if taxonomy is not None:
        pool = taxonomy.leaves
    elif cfg.K is not None:
        pool = arm_ids(cfg.K)
    else:
        pool = tuple(sorted({event.displayed for event in events}))
    d = events[0].d
    policy = build_policy(cfg.policy, pool, d, seed, taxonomy=taxonomy, kind=kind)
    result = replayer_evaluate(events, policy, pool, seed=seed, progress=progress)
    buckets = BucketAccumulator(cfg.bucket_size, n_slots=len(events))
    for index, reward in result.matches:
        buckets.add(index, reward)
    return ReplicationResult(replication, seed, kind, buckets.buckets, policy.cumulative_reward, skipped=result.skipped)


def track_replication(cfg: ExperimentConfig, replication: int, progress: bool = False) -> TrackTrace:
    """Feed one arm's rewards to a particle set and to a static regression, recording both estimates."""
    seed = cfg.seed + replication
    spec, coord = cfg.policy, cfg.env.coord
    prior = dict(q0=spec.q0, alpha0=spec.alpha0, beta0=spec.beta0)
    env = DriftingLinearEnv.from_spec(cfg.env, 1, cfg.d, cfg.T, derive_stream(seed, [ENV_INIT_LABEL]))
    contexts = make_contexts(cfg.env, cfg.d)
    arm = env.arms[0]
    pset = init_particle_set(arm, spec.particles, cfg.d, derive_stream(seed, [TRACK_INIT_LABEL]), **prior)
    static = NigPosterior.prior(cfg.d, **prior)

    trace = TrackTrace(seed, [], [], [], [])
    for t in tqdm(range(1, cfg.T + 1), desc="Tracking", leave=False, disable=not progress):
        env_drift(env, t, derive_stream(seed, [DRIFT_LABEL, t]))
        x = contexts(t, derive_stream(seed, [CONTEXT_LABEL, t]))
        reward = env_step(env, arm, x, derive_stream(seed, [REWARD_LABEL, t]))
        pset = drift_update(pset, x, reward, derive_stream(seed, [ROUND_UPDATE_LABEL, t]))
        static = nig_update(static, x, reward)
        mu_bar, _ = aggregate_posterior(pset)
        trace.true_coef.append(float(env.true_w[0, coord]))
        trace.drift_estimate.append(float(mu_bar[coord]))
        trace.static_estimate.append(float(static.mu_w[coord]))
        trace.segments.append(env.segment(t))
    return trace


def generate_log(cfg: ExperimentConfig, n: int, progress: bool = True) -> List[LoggedEvent]:
    """Uniform-random logging policy on the configured simulator, seeded like replication 0."""
    env = DriftingLinearEnv.from_spec(cfg.env, cfg.n_arms, cfg.d, n, derive_stream(cfg.seed, [ENV_INIT_LABEL]))
    return uniform_random_log(env, make_contexts(cfg.env, cfg.d), n, seed=cfg.seed, drift=env_drift, progress=progress)


def _run_job(job):
    cfg, replication, kind, payload, progress = job
    if cfg.mode == "track":
        return track_replication(cfg, replication, progress=progress)
    if payload.get("events") is not None:
        return replay_replication(cfg, replication, kind, payload["events"], payload.get("taxonomy"), progress=progress)
    if cfg.mode == "hier":
        return hier_replication(cfg, replication, kind, payload["taxonomy"], progress=progress)
    return simulate_replication(cfg, replication, kind, progress=progress)


def run_replications(cfg: ExperimentConfig, kind: str, payload: Optional[dict] = None, progress: bool = True) -> list:
    """Run every replication; results come back in replication order."""
    payload = payload or {}
    if cfg.workers > 1 and cfg.replications > 1:
        jobs = [(cfg, r, kind, payload, False) for r in range(cfg.replications)]
        return process_map(_run_job, jobs, max_workers=cfg.workers, chunksize=1, desc=f"Replications ({kind})",
                           disable=not progress)
    jobs = [(cfg, r, kind, payload, progress) for r in range(cfg.replications)]
    return [_run_job(job) for job in tqdm(jobs, desc=f"Replications ({kind})", disable=not progress)]


def _summary(cfg: ExperimentConfig, results: Sequence[ReplicationResult], rows: Sequence[BucketRow]) -> dict:
    pooled = totals(bucket for result in results for bucket in result.buckets)
    summary = {
        "mode": cfg.mode,
        "policy": results[0].policy,
        "seeds": [result.seed for result in results],
        "replications": len(results),
        "buckets": len(rows),
        "impressions": pooled.impressions,
        "successes": pooled.successes,
        "overall_ctr": pooled.ctr,
        "total_reward": math.fsum(result.total_reward for result in results),
        "skipped": sum(result.skipped for result in results),
    }
    summary.update(replication_summary([result.ctr for result in results]))
    return summary


def run_tracking(cfg: ExperimentConfig, progress: bool = True) -> ExperimentResult:
    traces: List[TrackTrace] = run_replications(cfg, "track", progress=progress)
    rows = []
    for start in range(0, cfg.T, cfg.bucket_size):
        stop = min(start + cfg.bucket_size, cfg.T)

        def bucket_mean(values):
            return math.fsum(math.fsum(v[start:stop]) / (stop - start) for v in values) / len(values)

        rows.append(TrackRow(start // cfg.bucket_size,
                             bucket_mean([trace.true_coef for trace in traces]),
                             bucket_mean([trace.drift_estimate for trace in traces]),
                             bucket_mean([trace.static_estimate for trace in traces])))

    mse = {"drift": [], "static": []}
    for trace in traces:
        kept = [i for i, segment in enumerate(trace.segments) if segment >= cfg.track.skip_segments]
        if not kept:
            raise UndefinedMetricError(f"No rounds left after skipping {cfg.track.skip_segments} segments")
        for name, estimates in (("drift", trace.drift_estimate), ("static", trace.static_estimate)):
            mse[name].append(math.fsum((estimates[i] - trace.true_coef[i]) ** 2 for i in kept) / len(kept))
    summary = {
        "mode": "track",
        "seeds": [trace.seed for trace in traces],
        "replications": len(traces),
        "particles": cfg.policy.particles,
        "skip_segments": cfg.track.skip_segments,
        "mse_drift": math.fsum(mse["drift"]) / len(traces),
        "mse_static": math.fsum(mse["static"]) / len(traces),
        "mse_drift_per_seed": mse["drift"],
        "mse_static_per_seed": mse["static"],
    }
    return ExperimentResult(cfg, rows, summary)


def run_experiment(cfg: ExperimentConfig, use_wandb: bool = False, progress: bool = True) -> ExperimentResult:
    if cfg.mode == "track":
        result = run_tracking(cfg, progress=progress)
    else:
        payload = {}
        if cfg.mode == "hier":
            payload["taxonomy"] = load_taxonomy(cfg)
        if cfg.log and cfg.mode in ("replay", "hier"):
            payload["events"] = parse_event_log(cfg.log)
            if not payload["events"]:
                raise ValueError(f"Event log {cfg.log} has no events")

        results = run_replications(cfg, cfg.policy.kind, payload, progress=progress)
        rows = aggregate_replications([r.buckets for r in results])
        result = ExperimentResult(cfg, rows, _summary(cfg, results, rows), replications=list(results))

        if cfg.mode == "hier":
            random_results = run_replications(cfg, "random", payload, progress=progress)
            result.random_rows = aggregate_replications([r.buckets for r in random_results])
            alg_buckets = [bucket for r in results for bucket in r.buckets]
            random_buckets = [bucket for r in random_results for bucket in r.buckets]
            result.summary["random_ctr"] = totals(random_buckets).ctr
            try:
                result.summary["rsr"] = compute_rsr(alg_buckets, random_buckets)
            except UndefinedMetricError as e:
                logger.warning("%s", e)
                result.summary["rsr"] = None

    logger.info("Finished %s run: %s", cfg.mode, {k: v for k, v in result.summary.items() if not isinstance(v, list)})
    if use_wandb:
        log_to_wandb(result)
    return result


def log_to_wandb(result: ExperimentResult) -> None:
    import wandb

    wandb.init(project=result.config.wandb_project, config=result.config.to_dict())
    for row in result.rows:
        wandb.log(dataclasses.asdict(row))
    wandb.run.summary.update({k: v for k, v in result.summary.items() if not isinstance(v, list)})
    wandb.finish()


def write_outputs(result: ExperimentResult, out=None) -> None:
    out = out or result.config.out
    if result.config.mode == "track":
        emit_track_csv(result.rows, out)
    else:
        emit_csv(result.rows, out)
    if result.random_rows is not None:
        emit_csv(result.random_rows, random_curve_path(out))
    write_summary(result.summary, summary_path(out))
