"""Experiment configuration files.

A config is plain ``key = value`` text.  ``#`` starts a comment and dotted keys
address the ``policy``, ``env``, ``hier`` and ``track`` sections::

    mode = simulate
    T = 5000
    policy.kind = tvucb
    policy.lambda = 0.5
    env.change_prob = 0.001
"""
import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

from glom import Assign, PathAssignError, glom

from driftbandit.errors import ConfigError
from driftbandit.modeling.drift import DRIFT_KINDS, DriftPolicyConfig
from driftbandit.modeling.flat import FLAT_KINDS, KIND_ALIASES, FlatPolicyConfig
from driftbandit.modeling.hierarchy import HMAB_KINDS
from driftbandit.modeling.nig import UCB_VARIANCE_FORMS

logger = logging.getLogger(__name__)

MODES = ("simulate", "replay", "hier", "track")
DEFAULT_ARMS = 10
PATTERNS = ("random_walk", "piecewise", "periodic")
REWARD_MODELS = ("logistic", "gaussian")
CONTEXT_SOURCES = ("synthetic_gaussian", "from_log")
HMAB_PREFIX = "hmab_"
POLICY_KINDS = FLAT_KINDS + DRIFT_KINDS + tuple(HMAB_PREFIX + kind for kind in HMAB_KINDS)

# config spelling -> dataclass field
KEY_ALIASES = {"lambda": "lambda_", "p": "particles", "horizon": "T", "output": "out"}


@dataclass(frozen=True)
class PolicySpec:
    kind: str = "thompson"
    epsilon: float = 0.1
    lambda_: float = 0.5
    q0: float = 1.0
    alpha0: float = 2.0
    beta0: float = 2.0
    particles: int = 5
    ucb_variance_form: str = "paper"

    def __post_init__(self):
        kind = self.kind
        base = kind[len(HMAB_PREFIX):] if kind.startswith(HMAB_PREFIX) else kind
        base = KIND_ALIASES.get(base, base)
        kind = HMAB_PREFIX + base if kind.startswith(HMAB_PREFIX) else base
        object.__setattr__(self, "kind", kind)
        if kind not in POLICY_KINDS:
            raise ConfigError(f"Invalid policy.kind {self.kind!r}, expected one of {POLICY_KINDS}")
        if self.ucb_variance_form not in UCB_VARIANCE_FORMS:
            raise ConfigError(f"Invalid policy.ucb_variance_form {self.ucb_variance_form!r}, expected one of {UCB_VARIANCE_FORMS}")
        if self.particles < 1:
            raise ConfigError(f"Invalid policy.particles: {self.particles}")
        try:
            self.flat_config(kind="thompson")
        except ValueError as e:
            raise ConfigError(f"Invalid policy parameters: {e}") from e

    @property
    def is_hmab(self) -> bool:
        return self.kind.startswith(HMAB_PREFIX)

    @property
    def is_drift(self) -> bool:
        return self.kind in DRIFT_KINDS

    @property
    def base_kind(self) -> str:
        return self.kind[len(HMAB_PREFIX):] if self.is_hmab else self.kind

    def flat_config(self, kind: Optional[str] = None) -> FlatPolicyConfig:
        return FlatPolicyConfig(kind=kind or self.base_kind, epsilon=self.epsilon, lambda_=self.lambda_, q0=self.q0,
                                alpha0=self.alpha0, beta0=self.beta0, ucb_variance_form=self.ucb_variance_form)

    def drift_config(self, kind: Optional[str] = None) -> DriftPolicyConfig:
        return DriftPolicyConfig(kind=kind or self.kind, particles=self.particles, lambda_=self.lambda_, q0=self.q0,
                                 alpha0=self.alpha0, beta0=self.beta0, ucb_variance_form=self.ucb_variance_form)


@dataclass(frozen=True)
class EnvSpec:
    change_prob: float = 0.0
    pattern: str = "random_walk"
    reward_model: str = "logistic"
    reward_noise: float = 0.1
    context_source: str = "synthetic_gaussian"
    context_log: Optional[str] = None
    # piecewise: level offsets per segment, switching at fractions of the horizon
    boundaries: Tuple[float, ...] = (0.25, 0.5, 0.75)
    levels: Tuple[float, ...] = (0.0, 1.5, -1.5, 0.75)
    # periodic
    period: float = 1000.0
    amplitude: float = 1.0
    coord: int = 0

    def __post_init__(self):
        if not 0.0 <= self.change_prob <= 1.0:
            raise ConfigError(f"Invalid env.change_prob: {self.change_prob}, expected a value in [0, 1]")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"Invalid env.pattern {self.pattern!r}, expected one of {PATTERNS}")
        if self.reward_model not in REWARD_MODELS:
            raise ConfigError(f"Invalid env.reward_model {self.reward_model!r}, expected one of {REWARD_MODELS}")
        if self.reward_noise < 0:
            raise ConfigError(f"Invalid env.reward_noise: {self.reward_noise}")
        if self.context_source not in CONTEXT_SOURCES:
            raise ConfigError(f"Invalid env.context_source {self.context_source!r}, expected one of {CONTEXT_SOURCES}")
        if self.context_source == "from_log" and not self.context_log:
            raise ConfigError("env.context_source = from_log needs env.context_log")
        if list(self.boundaries) != sorted(self.boundaries) or any(not 0.0 < b < 1.0 for b in self.boundaries):
            raise ConfigError(f"Invalid env.boundaries {self.boundaries}: expected increasing fractions in (0, 1)")
        if len(self.levels) != len(self.boundaries) + 1:
            raise ConfigError(f"env.levels needs {len(self.boundaries) + 1} values, got {len(self.levels)}")
        if not self.period > 0:
            raise ConfigError(f"Invalid env.period: {self.period}")
        if self.coord < 0:
            raise ConfigError(f"Invalid env.coord: {self.coord}")


@dataclass(frozen=True)
class HierSpec:
    taxonomy: Optional[str] = None
    branching: int = 4
    depth: int = 2
    category_scale: float = 2.0
    leaf_scale: float = 0.25

    def __post_init__(self):
        if self.branching < 1 or self.depth < 1:
            raise ConfigError(f"Invalid balanced taxonomy: hier.branching={self.branching}, hier.depth={self.depth}")
        if self.category_scale < 0 or self.leaf_scale < 0:
            raise ConfigError("hier.category_scale and hier.leaf_scale must be non-negative")


@dataclass(frozen=True)
class TrackSpec:
    # leading segments excluded from the MSE
    skip_segments: int = 1

    def __post_init__(self):
        if self.skip_segments < 0:
            raise ConfigError(f"Invalid track.skip_segments: {self.skip_segments}")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "simulate"
    policy: PolicySpec = field(default_factory=PolicySpec)
    env: EnvSpec = field(default_factory=EnvSpec)
    hier: HierSpec = field(default_factory=HierSpec)
    track: TrackSpec = field(default_factory=TrackSpec)
    # None: 10 simulated arms, and a replay pool read off the log
    K: Optional[int] = None
    d: int = 5
    T: int = 1000
    bucket_size: int = 100
    seed: int = 0
    replications: int = 1
    workers: int = 1
    log: Optional[str] = None
    out: str = "results/run.csv"
    wandb_project: str = "driftbandit"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"Invalid mode {self.mode!r}, expected one of {MODES}")
        for name in ("K", "d", "T", "bucket_size", "replications", "workers"):
            if getattr(self, name) is not None and getattr(self, name) < 1:
                raise ConfigError(f"Invalid {name}: {getattr(self, name)}, expected a value >= 1")
        if self.seed < 0:
            raise ConfigError(f"Invalid seed: {self.seed}")
        if self.mode == "replay" and not self.log:
            raise ConfigError("mode = replay needs a log path")
        if self.policy.is_hmab and self.mode != "hier":
            raise ConfigError(f"policy.kind = {self.policy.kind} needs mode = hier")
        if self.policy.is_drift and self.mode == "hier":
            raise ConfigError(f"policy.kind = {self.policy.kind} is not available in mode = hier")
        if self.mode in ("simulate", "track") and self.env.coord >= self.d:
            raise ConfigError(f"env.coord = {self.env.coord} is out of range for d = {self.d}")

    @property
    def n_arms(self) -> int:
        return self.K if self.K is not None else DEFAULT_ARMS

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """``dataclasses.replace`` that skips ``None`` values (unset CLI options)."""
        overrides = {key: value for key, value in overrides.items() if value is not None}
        return dataclasses.replace(self, **overrides) if overrides else self


SECTIONS = {"policy": PolicySpec, "env": EnvSpec, "hier": HierSpec, "track": TrackSpec}
_TRUE = ("true", "yes", "1", "on")
_FALSE = ("false", "no", "0", "off")


def _convert(key: str, value: str, hint):
    origin, args = typing.get_origin(hint), typing.get_args(hint)
    try:
        if origin is Union and type(None) in args:
            if value.lower() in ("", "none", "null"):
                return None
            return _convert(key, value, next(arg for arg in args if arg is not type(None)))
        if origin is tuple:
            return tuple(_convert(key, part.strip(), args[0]) for part in value.split(",") if part.strip())
        if hint is bool:
            if value.lower() not in _TRUE + _FALSE:
                raise ValueError(value)
            return value.lower() in _TRUE
        if hint is int:
            return int(value)
        if hint is float:
            return float(value)
    except ValueError:
        raise ConfigError(f"Invalid value {value!r} for {key}: expected {getattr(hint, '__name__', hint)}") from None
    return value


def _build(cls, raw: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key, value in raw.items():
        name = KEY_ALIASES.get(key, key)
        full_key = prefix + key
        if name not in hints:
            raise ConfigError(f"Unknown config key {full_key!r}")
        if name in SECTIONS and not prefix:
            if not isinstance(value, dict):
                raise ConfigError(f"{full_key!r} is a section; set {full_key}.<key> instead")
            kwargs[name] = _build(SECTIONS[name], value, prefix=f"{name}.")
            continue
        if isinstance(value, dict):
            raise ConfigError(f"Unknown config section {full_key!r}")
        kwargs[name] = _convert(full_key, value, hints[name])
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid {prefix.rstrip('.') or 'experiment'} config: {e}") from e


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    seen = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}, line {line_no}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}, line {line_no}: missing key")
        if key in seen:
            raise ConfigError(f"{source}, line {line_no}: duplicate key {key!r}")
        seen.add(key)
        try:
            glom(values, Assign(key, value, missing=dict))
        except PathAssignError as e:
            raise ConfigError(f"{source}, line {line_no}: cannot assign {key!r}: {e}") from e
    return _build(ExperimentConfig, values)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    config = parse_config(text, source=str(path))
    logger.info("Loaded %s config from %s", config.mode, path)
    return config
