import json
import math
from pathlib import Path

import pytest

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
    read_csv,
    replication_summary,
    summary_path,
    write_summary,
)

HEADER = "bucket,impressions,successes,ctr,cum_ctr"


def buckets(*pairs):
    return [MetricsBucket(i, impressions, successes) for i, (impressions, successes) in enumerate(pairs)]


class TestBucketAccumulator:
    def test_partial_last_bucket(self):
        accumulator = BucketAccumulator(100)
        for t in range(250):
            accumulator.add(t, float(t % 2))
        assert [b.impressions for b in accumulator.buckets] == [100, 100, 50]
        assert [b.successes for b in accumulator.buckets] == [50.0, 50.0, 25.0]

    def test_slots_without_impressions_still_get_rows(self):
        accumulator = BucketAccumulator(10, n_slots=35)
        accumulator.add(3, 1.0)
        assert len(accumulator.buckets) == 4
        assert [b.ctr for b in accumulator.buckets] == [1.0, None, None, None]

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            BucketAccumulator(0)


class TestAggregateReplications:
    def test_single_run(self):
        rows = aggregate_replications([buckets((10, 5.0), (10, 1.0))])
        assert [(r.ctr, r.cum_ctr) for r in rows] == [(0.5, 0.5), (0.1, 0.3)]

    def test_mean_ctr_and_pooled_cumulative_ctr(self):
        rows = aggregate_replications([buckets((10, 2.0), (0, 0.0)), buckets((30, 3.0), (10, 5.0))])
        assert rows[0].impressions == 40 and rows[0].successes == 5.0
        assert rows[0].ctr == pytest.approx(0.15)
        assert rows[1].ctr == 0.5
        assert rows[-1].cum_ctr == pytest.approx(10.0 / 50)

    def test_final_cumulative_ctr_is_overall_rate(self):
        runs = [buckets(*[(7 + r + i, float((r * i) % 5)) for i in range(6)]) for r in range(4)]
        rows = aggregate_replications(runs)
        impressions = sum(b.impressions for run in runs for b in run)
        successes = sum(b.successes for run in runs for b in run)
        assert rows[-1].cum_ctr == pytest.approx(successes / impressions)

    def test_no_impressions(self):
        rows = aggregate_replications([buckets((0, 0.0))])
        assert rows[0].ctr is None and rows[0].cum_ctr is None


class TestRsr:
    def test_ratio_of_success_rates(self):
        assert compute_rsr(buckets((100, 30.0)), buckets((50, 5.0), (50, 5.0))) == pytest.approx(3.0)

    def test_random_without_successes(self):
        with pytest.raises(UndefinedMetricError):
            compute_rsr(buckets((100, 30.0)), buckets((100, 0.0)))

    def test_no_impressions(self):
        with pytest.raises(UndefinedMetricError):
            compute_rsr(buckets((0, 0.0)), buckets((100, 10.0)))


class TestReplicationSummary:
    def test_defined_rates_only(self):
        summary = replication_summary([0.5, None, 0.7])
        assert summary["ctr_mean"] == pytest.approx(0.6)
        assert summary["ctr_std"] == pytest.approx(math.sqrt(0.02))
        assert (summary["ctr_min"], summary["ctr_max"]) == (0.5, 0.7)

    def test_single_replication(self):
        assert replication_summary([0.25])["ctr_std"] == 0.0

    def test_nothing_defined(self):
        assert set(replication_summary([None]).values()) == {None}


class TestCsv:
    def test_empty_metrics_write_header_only(self, tmp_path):
        emit_csv([], tmp_path / "empty.csv")
        assert (tmp_path / "empty.csv").read_text() == HEADER + "\n"

    def test_rows_and_undefined_values(self, tmp_path):
        rows = aggregate_replications([buckets((10, 5.0), (0, 0.0), (4, 1.0))])
        path = tmp_path / "nested" / "run.csv"
        emit_csv(rows, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == HEADER
        assert lines[1] == "0,10,5.000000,0.500000,0.500000"
        assert lines[2] == "1,0,0.000000,undefined,0.500000"
        assert read_csv(path) == [
            BucketRow(0, 10, 5.0, 0.5, 0.5),
            BucketRow(1, 0, 0.0, None, 0.5),
            BucketRow(2, 4, 1.0, 0.25, pytest.approx(6 / 14, abs=1e-6)),
        ]

    def test_read_rejects_foreign_header(self, tmp_path):
        (tmp_path / "other.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_csv(tmp_path / "other.csv")

    def test_track_csv(self, tmp_path):
        emit_track_csv([TrackRow(0, 1.0, 0.9, 0.5)], tmp_path / "track.csv")
        assert (tmp_path / "track.csv").read_text().splitlines() == [
            "bucket,true_coef,drift_estimate,static_estimate",
            "0,1.000000,0.900000,0.500000",
        ]


class TestOutputPaths:
    def test_companion_files(self):
        assert summary_path("results/run.csv") == Path("results/run.csv.summary.json")
        assert random_curve_path("results/run.csv") == Path("results/run.random.csv")

    def test_summary_is_sorted_json(self, tmp_path):
        write_summary({"b": 1, "a": None}, tmp_path / "s.json")
        text = (tmp_path / "s.json").read_text()
        assert json.loads(text) == {"a": None, "b": 1}
        assert text.index('"a"') < text.index('"b"')
