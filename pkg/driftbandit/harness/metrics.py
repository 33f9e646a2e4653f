"""Time-bucketed CTR curves, relative success rates and their CSV/JSON files."""
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from driftbandit.errors import UndefinedMetricError

CSV_FIELDS = ("bucket", "impressions", "successes", "ctr", "cum_ctr")
TRACK_FIELDS = ("bucket", "true_coef", "drift_estimate", "static_estimate")
UNDEFINED = "undefined"
DECIMALS = 6


@dataclass
class MetricsBucket:
    bucket_index: int
    impressions: int = 0
    successes: float = 0.0

    @property
    def ctr(self) -> Optional[float]:
        return self.successes / self.impressions if self.impressions else None


class BucketAccumulator:
    """Accumulates impressions into fixed-width buckets of rounds (or log positions)."""

    def __init__(self, bucket_size: int, n_slots: Optional[int] = None):
        if bucket_size < 1:
            raise ValueError(f"Invalid bucket size: {bucket_size}")
        self.bucket_size = bucket_size
        self.buckets: List[MetricsBucket] = []
        if n_slots:
            # replay buckets without a single match still get a row
            self._grow((n_slots - 1) // bucket_size)

    def _grow(self, index: int) -> None:
        while len(self.buckets) <= index:
            self.buckets.append(MetricsBucket(len(self.buckets)))

    def add(self, slot: int, reward: float) -> None:
        """Count one impression with ``reward`` at 0-based ``slot``."""
        index = slot // self.bucket_size
        self._grow(index)
        self.buckets[index].impressions += 1
        self.buckets[index].successes += reward


@dataclass(frozen=True)
class BucketRow:
    bucket: int
    impressions: int
    successes: float
    ctr: Optional[float]
    cum_ctr: Optional[float]


def totals(buckets: Iterable) -> MetricsBucket:
    total = MetricsBucket(-1)
    for bucket in buckets:
        total.impressions += bucket.impressions
        total.successes += bucket.successes
    return total


def aggregate_replications(runs: Sequence[Sequence[MetricsBucket]]) -> List[BucketRow]:
    """Reduce per-replication buckets, in replication order, into CSV rows.

    ``impressions``/``successes`` are summed, ``ctr`` is the pointwise mean of
    the replications' defined bucket CTRs and ``cum_ctr`` is the pooled
    cumulative success rate.
    """
    n_buckets = max((len(run) for run in runs), default=0)
    rows, cum_impressions, cum_successes = [], 0, 0.0
    for index in range(n_buckets):
        buckets = [run[index] for run in runs if index < len(run)]
        impressions = sum(bucket.impressions for bucket in buckets)
        successes = math.fsum(bucket.successes for bucket in buckets)
        rates = [bucket.ctr for bucket in buckets if bucket.ctr is not None]
        cum_impressions += impressions
        cum_successes += successes
        rows.append(BucketRow(
            bucket=index,
            impressions=impressions,
            successes=successes,
            ctr=math.fsum(rates) / len(rates) if rates else None,
            cum_ctr=cum_successes / cum_impressions if cum_impressions else None,
        ))
    return rows


def success_rate(buckets: Iterable) -> float:
    total = totals(buckets)
    if total.impressions == 0:
        raise UndefinedMetricError("Success rate is undefined without impressions")
    return total.successes / total.impressions


def compute_rsr(alg_metrics: Iterable, random_metrics: Iterable) -> float:
    """Relative success rate: the algorithm's pooled success rate over the Random policy's."""
    random_rate = success_rate(random_metrics)
    if random_rate == 0:
        raise UndefinedMetricError("RSR is undefined: the Random policy has a zero success rate")
    return success_rate(alg_metrics) / random_rate


def replication_summary(rates: Sequence[Optional[float]]) -> Dict[str, Optional[float]]:
    """mean / std / min / max of the per-replication CTRs that are defined."""
    defined = np.array([rate for rate in rates if rate is not None], dtype=np.float64)
    if defined.size == 0:
        return {"ctr_mean": None, "ctr_std": None, "ctr_min": None, "ctr_max": None}
    return {
        "ctr_mean": float(defined.mean()),
        "ctr_std": float(defined.std(ddof=1)) if defined.size > 1 else 0.0,
        "ctr_min": float(defined.min()),
        "ctr_max": float(defined.max()),
    }


def _format(value: Optional[float]) -> str:
    return UNDEFINED if value is None else f"{value:.{DECIMALS}f}"


def _parse(value: str) -> Optional[float]:
    return None if value == UNDEFINED else float(value)


def emit_csv(metrics: Sequence[BucketRow], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in metrics:
            writer.writerow([row.bucket, row.impressions, _format(row.successes), _format(row.ctr), _format(row.cum_ctr)])


def read_csv(path: Union[str, Path]) -> List[BucketRow]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(CSV_FIELDS)}, got {reader.fieldnames}")
        return [
            BucketRow(int(row["bucket"]), int(row["impressions"]), float(row["successes"]),
                      _parse(row["ctr"]), _parse(row["cum_ctr"]))
            for row in reader
        ]


@dataclass(frozen=True)
class TrackRow:
    bucket: int
    true_coef: float
    drift_estimate: float
    static_estimate: float


def emit_track_csv(rows: Sequence[TrackRow], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACK_FIELDS)
        for row in rows:
            writer.writerow([row.bucket, _format(row.true_coef), _format(row.drift_estimate), _format(row.static_estimate)])


def summary_path(out: Union[str, Path]) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".summary.json")


def random_curve_path(out: Union[str, Path]) -> Path:
    out = Path(out)
    return out.with_name(f"{out.stem}.random{out.suffix or '.csv'}")


def write_summary(summary: dict, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
