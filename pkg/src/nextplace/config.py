"""Run configuration: one YAML file drives the whole pipeline.

Every field has a default except the input path. Unknown keys are rejected
with their full key path; all violations in a file are reported together.
All stage seeds derive from the single root seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import yaml

from .data import PreprocessConfig
from .graph import WalkConfig
from .model import VARIANTS, ModelConfig
from .train import TrainConfig
from .util import derive_seed

MODES = ("checkin", "cdr")


class ConfigError(ValueError):
    def __init__(self, messages: list[str]):
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


@dataclass
class EmbedSettings:
    p: float = 1.0
    q: float = 1.0
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    negative_samples: int = 5
    epochs: int = 3
    step_size: float = 0.025


@dataclass
class ModelSettings:
    user_dim: int = 40
    location_dim: int = 500
    category_dim: int = 50
    time_dim: int = 10
    hidden: int = 500
    epsilon: float = 0.1
    history_cap: int = 100
    variant: str = "full"
    use_activity: bool | None = None  # None = follow the dataset mode


@dataclass
class TrainSettings:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    clip_norm: float = 5.0
    epochs: int = 30
    accumulation: int = 32
    patience: int = 5


@dataclass
class EvalSettings:
    k_values: list = field(default_factory=lambda: [1, 5, 10])
    set_form: bool = False


@dataclass
class RunConfig:
    input: str | None = None
    mode: str = "checkin"
    output_dir: str = "run-output"
    seed: int = 0
    workers: int = 1
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    embed: EmbedSettings = field(default_factory=EmbedSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    evaluate: EvalSettings = field(default_factory=EvalSettings)

    @property
    def has_categories(self) -> bool:
        if self.model.use_activity is not None:
            return self.model.use_activity
        return self.mode == "checkin"

    def walk_config(self, level: str) -> WalkConfig:
        dim = (self.model.location_dim if level == "location"
               else self.model.category_dim)
        e = self.embed
        return WalkConfig(p=e.p, q=e.q, walks_per_node=e.walks_per_node,
                          walk_length=e.walk_length, window=e.window,
                          negative_samples=e.negative_samples,
                          embedding_dim=dim, epochs=e.epochs,
                          step_size=e.step_size,
                          seed=derive_seed(self.seed, "embed", level))

    def model_config(self, n_users: int, n_locations: int,
                     n_categories: int, variant: str | None = None) -> ModelConfig:
        m = self.model
        return ModelConfig(
            n_users=n_users, n_locations=n_locations,
            n_categories=n_categories, user_dim=m.user_dim,
            location_dim=m.location_dim, category_dim=m.category_dim,
            time_dim=m.time_dim, hidden=m.hidden,
            has_categories=self.has_categories, aux_weight=m.epsilon,
            variant=variant or m.variant, history_cap=m.history_cap,
            seed=derive_seed(self.seed, "model"))

    def train_config(self, variant: str | None = None) -> TrainConfig:
        t = self.train
        return TrainConfig(learning_rate=t.learning_rate,
                           weight_decay=t.weight_decay, clip_norm=t.clip_norm,
                           epochs=t.epochs, accumulation=t.accumulation,
                           seed=derive_seed(self.seed, "train"),
                           patience=t.patience,
                           variant=variant or self.model.variant)

    def resolved(self) -> dict:
        out = dataclasses.asdict(self)
        return out

    def resolved_json(self) -> str:
        return json.dumps(self.resolved(), indent=2, sort_keys=True)


_SECTIONS = {
    "preprocess": PreprocessConfig,
    "embed": EmbedSettings,
    "model": ModelSettings,
    "train": TrainSettings,
    "evaluate": EvalSettings,
}

_ROOT_FIELDS = {"input": str, "mode": str, "output_dir": str, "seed": int,
                "workers": int}


def _check_type(value, expected, path: str, errors: list[str]):
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
            return None
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
            return None
        return value
    if expected is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {value!r}")
            return None
        return value
    if expected is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
            return None
        return value
    if expected is list:
        if not isinstance(value, list):
            errors.append(f"{path}: expected a list, got {value!r}")
            return None
        return value
    raise AssertionError(f"unhandled schema type {expected}")


def _build_section(cls, data: dict, section: str, errors: list[str]):
    kwargs = {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in data.items():
        path = f"{section}.{key}"
        if key not in known:
            errors.append(f"{path}: unknown key")
            continue
        default = known[key].default
        if key == "use_activity":
            expected = bool
        elif key == "k_values":
            expected = list
        elif default is not dataclasses.MISSING:
            expected = type(default)
        else:
            expected = list
        coerced = _check_type(value, expected, path, errors)
        if coerced is not None:
            kwargs[key] = coerced
    return cls(**kwargs)


def _validate(config: RunConfig, errors: list[str]):
    if config.mode not in MODES:
        errors.append(f"mode: must be one of {MODES}, got {config.mode!r}")
    if config.workers < 1:
        errors.append("workers: must be >= 1")
    if config.model.epsilon < 0:
        errors.append(f"model.epsilon: must be >= 0, got {config.model.epsilon}")
    if config.model.variant not in VARIANTS:
        errors.append(f"model.variant: must be one of {VARIANTS}, "
                      f"got {config.model.variant!r}")
    if config.mode == "cdr" and config.model.use_activity is True:
        errors.append("model.use_activity: cdr records carry no categories, "
                      "so the activity prior cannot be enabled in cdr mode")
    for name in ("user_dim", "location_dim", "time_dim", "hidden",
                 "history_cap"):
        if getattr(config.model, name) <= 0:
            errors.append(f"model.{name}: must be positive")
    if config.has_categories and config.model.category_dim <= 0:
        errors.append("model.category_dim: must be positive when the "
                      "activity/category channel is on")
    ks = config.evaluate.k_values
    if not ks or not all(isinstance(k, int) and not isinstance(k, bool)
                         and k >= 1 for k in ks):
        errors.append("evaluate.k_values: must be a non-empty list of "
                      "integers >= 1")
    try:
        config.train_config().validate()
    except ValueError as exc:
        errors.append(f"train: {exc}")
    try:
        config.walk_config("location").validate()
    except ValueError as exc:
        errors.append(f"embed: {exc}")
    pp = config.preprocess
    for name in ("min_records_per_user", "session_max", "session_min",
                 "max_sessions_per_user", "min_sessions_per_user"):
        if getattr(pp, name) <= 0:
            errors.append(f"preprocess.{name}: must be positive")
    if pp.session_min > pp.session_max:
        errors.append("preprocess.session_min: must not exceed session_max")
    if not 0.0 < pp.train_fraction < 1.0:
        errors.append("preprocess.train_fraction: must be in (0, 1)")
    if pp.merge_gap_minutes <= 0 or pp.window_days <= 0:
        errors.append("preprocess: merge_gap_minutes and window_days must "
                      "be positive")


def load_run_config(path=None, overrides: dict | None = None,
                    require_input: bool = True) -> RunConfig:
    """Parse, merge flag overrides (dotted paths), validate; every problem
    is reported with its key path. Subcommands that only consume derived
    artifacts pass require_input=False."""
    raw: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
        raw = loaded
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, sub = key.split(".", 1)
            existing = raw.get(section)
            if not isinstance(existing, dict):
                existing = {}
                raw[section] = existing
            existing[sub] = value
        else:
            raw[key] = value

    errors: list[str] = []
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                errors.append(f"{key}: expected a mapping of settings")
                continue
            kwargs[key] = _build_section(_SECTIONS[key], value, key, errors)
        elif key in _ROOT_FIELDS:
            coerced = _check_type(value, _ROOT_FIELDS[key], key, errors)
            if coerced is not None:
                kwargs[key] = coerced
        else:
            errors.append(f"{key}: unknown key")
    config = RunConfig(**{k: v for k, v in kwargs.items()
                          if k in {f.name for f in dataclasses.fields(RunConfig)}})
    if require_input and config.input is None:
        errors.append("input: required (path to the raw records file)")
    if not errors:
        _validate(config, errors)
    if errors:
        raise ConfigError(errors)
    return config
