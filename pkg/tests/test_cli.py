from click.testing import CliRunner

from driftbandit.cli import main
from driftbandit.harness.metrics import read_csv, summary_path

CONFIG = """
mode = simulate
K = 3
d = 2
T = 120
bucket_size = 40
policy.kind = linucb
"""


def write_config(tmp_path, text=CONFIG):
    path = tmp_path / "run.conf"
    path.write_text(text)
    return path


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "out" / "run.csv"
    result = CliRunner().invoke(main, ["simulate", "--config", str(write_config(tmp_path)), "--out", str(out),
                                       "--seed", "3", "--progress", "false"])
    assert result.exit_code == 0, result.output
    assert f"Wrote {out}" in result.output
    assert len(read_csv(out)) == 3
    assert summary_path(out).exists()


def test_subcommand_sets_mode(tmp_path):
    out = tmp_path / "track.csv"
    config = write_config(tmp_path, CONFIG + "env.pattern = piecewise\nenv.reward_model = gaussian\n")
    result = CliRunner().invoke(main, ["track", "--config", str(config), "--out", str(out), "--progress", "false"])
    assert result.exit_code == 0, result.output
    assert out.read_text().startswith("bucket,true_coef")


def test_invalid_config_is_reported(tmp_path):
    config = write_config(tmp_path, "policy.kind = nonsense\n")
    result = CliRunner().invoke(main, ["simulate", "--config", str(config), "--progress", "false"])
    assert result.exit_code == 1
    assert "Invalid policy.kind" in result.output


def test_missing_config(tmp_path):
    result = CliRunner().invoke(main, ["replay", "--config", str(tmp_path / "missing.conf")])
    assert result.exit_code == 2


def test_make_log_then_replay(tmp_path):
    log = tmp_path / "events.tsv"
    config = write_config(tmp_path)
    result = CliRunner().invoke(main, ["make-log", "--config", str(config), "--out", str(log), "--events", "200",
                                       "--progress", "false"])
    assert result.exit_code == 0, result.output
    assert "Wrote 200 events" in result.output

    replay_config = tmp_path / "replay.conf"
    replay_config.write_text(f"mode = replay\nlog = {log}\nbucket_size = 100\npolicy.kind = thompson\n")
    out = tmp_path / "replay.csv"
    result = CliRunner().invoke(main, ["replay", "--config", str(replay_config), "--out", str(out),
                                       "--progress", "false"])
    assert result.exit_code == 0, result.output
    assert [row.bucket for row in read_csv(out)] == [0, 1]
