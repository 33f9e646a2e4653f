from driftbandit.harness.metrics import BucketRow, MetricsBucket, compute_rsr, emit_csv, read_csv
from driftbandit.harness.runner import ExperimentResult, build_policy, generate_log, run_experiment, write_outputs
