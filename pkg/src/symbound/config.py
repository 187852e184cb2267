"""Experiment configuration: nested dataclasses stored as an INI file.

Sections are ``[generator]``, ``[experiment]``, ``[train]`` and ``[mc]``.
Every key has a default, so an empty file is a valid config. Overrides use
dotted paths such as ``experiment.N = 64``. Floats are written with ``repr``
so parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from symbound.bound_lab import MCConfig
from symbound.dynamics import GeneratorSpec
from symbound.errors import ConfigError
from symbound.trainers import TrainConfig

Q_SCHEMES = ("uniform", "exp_decay", "last", "optimized")
AUTO = "auto"


@dataclass(frozen=True)
class ExperimentSettings:
    N: int = 32
    T: int = 32
    k: int = 1
    group_order: int = 4
    q_scheme: str = "uniform"
    q_decay: float = 0.9
    radius: float = 2.0
    # None means: use the equivariance error of the fitted population surrogate
    ee_budget: float | None = None
    clip_bound: float = 16.0
    delta: float = 0.1
    n_seeds: int = 4
    pool_factor: int = 50
    n_test: int = 1024
    out_dir: str = "results"
    seed: int = 0

    def validate(self) -> None:
        checks = [
            ("N", self.N >= 1, "must be >= 1"),
            ("k", self.k >= 1, "must be >= 1"),
            ("T", self.T >= self.k + 1 and self.T >= 2, "must be >= max(k + 1, 2)"),
            ("group_order", self.group_order >= 1, "must be >= 1"),
            ("q_scheme", self.q_scheme in Q_SCHEMES, f"must be one of {', '.join(Q_SCHEMES)}"),
            ("q_decay", 0 < self.q_decay <= 1, "must lie in (0, 1]"),
            ("radius", self.radius > 0, "must be positive"),
            ("ee_budget", self.ee_budget is None or self.ee_budget >= 0, "must be nonnegative or auto"),
            ("clip_bound", self.clip_bound > 0, "must be positive"),
            ("delta", 0 < self.delta < 1, "must lie in (0, 1)"),
            ("n_seeds", self.n_seeds >= 1, "must be >= 1"),
            ("pool_factor", self.pool_factor >= 50, "must be >= 50"),
            ("n_test", self.n_test >= 2, "must be >= 2"),
            ("seed", 0 <= self.seed < 2**64, "must be an unsigned 64-bit integer"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"experiment.{name}: {msg} (got {getattr(self, name)!r})")


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    mc: MCConfig = field(default_factory=MCConfig)

    def __post_init__(self):
        self.experiment.validate()


SECTIONS = {
    "generator": GeneratorSpec,
    "experiment": ExperimentSettings,
    "train": TrainConfig,
    "mc": MCConfig,
}


# short names accepted by sweeps, e.g. "sym_break" or "N"
def axis_aliases() -> dict[str, str]:
    out = {}
    for section, cls in SECTIONS.items():
        for f in fields(cls):
            out.setdefault(f.name, f"{section}.{f.name}")
            out[f"{section}.{f.name}"] = f"{section}.{f.name}"
    return out


def _field_type(cls, name):
    for f in fields(cls):
        if f.name == name:
            return f.type
    return None


def _parse_value(path: str, type_name, text: str):
    text = text.strip()
    t = str(type_name)
    try:
        if t == "int":
            return int(text, 0)
        if t == "float":
            return float(text)
        if t == "float | None":
            return None if text.lower() == AUTO else float(text)
        if t == "str":
            return text
    except ValueError:
        raise ConfigError(f"{path}: cannot parse {text!r} as {t}") from None
    raise ConfigError(f"{path}: unsupported field type {t}")


def _format_value(value) -> str:
    if value is None:
        return AUTO
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build(values: dict[str, dict[str, str]]) -> ExperimentConfig:
    parts = {}
    for section, cls in SECTIONS.items():
        kwargs = {}
        for key, text in values.get(section, {}).items():
            path = f"{section}.{key}"
            t = _field_type(cls, key)
            if t is None:
                valid = ", ".join(f.name for f in fields(cls))
                raise ConfigError(f"{path}: unknown key (valid: {valid})")
            kwargs[key] = _parse_value(path, t, text)
        try:
            parts[section] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}: {exc}") from None
    return ExperimentConfig(**parts)


def _apply_overrides(values: dict[str, dict[str, str]], overrides) -> None:
    aliases = axis_aliases()
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, text = item.split("=", 1)
        key = key.strip()
        if key not in aliases:
            raise ConfigError(f"{key}: unknown config key")
        section, name = aliases[key].split(".")
        values.setdefault(section, {})[name] = text.strip()


def parse_config(text: str, overrides=None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (N, T)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    values: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{section}: unknown section (valid: {', '.join(SECTIONS)})")
        values[section] = dict(parser.items(section))
    _apply_overrides(values, overrides)
    return _build(values)


def load_config(path, overrides=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def serialize_config(config: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section in SECTIONS:
        obj = getattr(config, section)
        parser[section] = {f.name: _format_value(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def with_overrides(config: ExperimentConfig, overrides) -> ExperimentConfig:
    return parse_config(serialize_config(config), overrides)


def set_value(config: ExperimentConfig, key: str, value) -> ExperimentConfig:
    """Return a copy with one (possibly aliased) key replaced."""
    aliases = axis_aliases()
    if key not in aliases:
        raise ConfigError(f"{key}: unknown config key")
    section, name = aliases[key].split(".")
    return with_overrides(config, [f"{section}.{name}={_format_value(value)}"])

