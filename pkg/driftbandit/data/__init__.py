from driftbandit.data.config import ExperimentConfig, EnvSpec, HierSpec, PolicySpec, TrackSpec, load_config, parse_config
from driftbandit.data.event_log import LoggedEvent, parse_event_log, write_event_log
from driftbandit.data.taxonomy_file import parse_taxonomy, write_taxonomy
