import logging

import click
from tqdm.contrib.logging import logging_redirect_tqdm

from driftbandit.data.config import load_config
from driftbandit.data.event_log import write_event_log
from driftbandit.errors import BanditError
from driftbandit.harness.runner import generate_log, run_experiment, write_outputs


def common_options(func):
    func = click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
                        help="Experiment config file (key = value lines).")(func)
    func = click.option("--seed", type=int, default=None, help="Master seed; overrides the config.")(func)
    func = click.option("--out", type=click.Path(dir_okay=False), default=None,
                        help="Output CSV path; overrides the config.")(func)
    func = click.option("--workers", type=int, default=None, help="Processes used for replications.")(func)
    func = click.option("--use_wandb", type=click.BOOL, default=False, help="Upload bucket metrics to Weights and Biases.")(func)
    func = click.option("--progress", type=click.BOOL, default=True, help="Show progress bars.")(func)
    return func


def run_mode(mode, config_path, seed, out, workers, use_wandb, progress):
    try:
        cfg = load_config(config_path)
        # the subcommand decides the mode
        cfg = cfg.with_overrides(mode=mode, seed=seed, out=out, workers=workers)
        with logging_redirect_tqdm():
            result = run_experiment(cfg, use_wandb=use_wandb, progress=progress)
        write_outputs(result)
    except (BanditError, ValueError, OSError) as e:
        raise click.ClickException(str(e)) from e
    click.echo(f"Wrote {cfg.out}")


@click.group()
@click.option("--log_level", default="INFO", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), help="Logging level.")
def main(log_level):
    """Contextual bandit experiments: drifting simulations, log replay, taxonomies and coefficient tracking."""
    logging.basicConfig(level=log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@main.command()
@common_options
def simulate(config_path, seed, out, workers, use_wandb, progress):
    """Run a policy against the drifting-coefficient simulator."""
    run_mode("simulate", config_path, seed, out, workers, use_wandb, progress)


@main.command()
@common_options
def replay(config_path, seed, out, workers, use_wandb, progress):
    """Evaluate a policy offline on a logged event file."""
    run_mode("replay", config_path, seed, out, workers, use_wandb, progress)


@main.command()
@common_options
def hier(config_path, seed, out, workers, use_wandb, progress):
    """Run a flat or HMAB policy over a taxonomy and report its RSR against Random."""
    run_mode("hier", config_path, seed, out, workers, use_wandb, progress)


@main.command()
@common_options
def track(config_path, seed, out, workers, use_wandb, progress):
    """Compare drift tracking of one arm's coefficient with static regression."""
    run_mode("track", config_path, seed, out, workers, use_wandb, progress)


@main.command("make-log")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Config whose K, d, seed and env section define the simulator.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Event log to write.")
@click.option("--events", type=click.IntRange(min=1), default=10_000, help="Number of logged rounds.")
@click.option("--seed", type=int, default=None, help="Master seed; overrides the config.")
@click.option("--progress", type=click.BOOL, default=True, help="Show progress bars.")
def make_log(config_path, out, events, seed, progress):
    """Write a uniformly-random logging policy's events for the replay command."""
    try:
        cfg = load_config(config_path).with_overrides(mode="simulate", seed=seed)
        with logging_redirect_tqdm():
            log = generate_log(cfg, events, progress=progress)
        write_event_log(log, out, d=cfg.d)
    except (BanditError, ValueError, OSError) as e:
        raise click.ClickException(str(e)) from e
    click.echo(f"Wrote {len(log)} events to {out}")


if __name__ == "__main__":
    main()
