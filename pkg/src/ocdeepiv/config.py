"""Experiment configuration: flat ``key = value`` lines grouped in sections.

Example::

    # comments start with '#'
    [dgp]
    kind = code_faithful
    n = 10000

    [train]
    lambda_reg = 0.02

    [experiment]
    estimators = NaiveOLS, OCDeepIV_TwoStage

Sections are ``dgp``, ``train`` and ``experiment``.  Unknown sections or keys
are rejected with the offending line number.  Anything left out keeps its
default, and every default matches the reference training script (N=10000,
100 epochs, switch at 50, lr 1e-3, weight decay 5e-4, lambda 0.02, window 15).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .bench import EstimatorKind
from .errors import ConfigError
from .model import TrainConfig
from .simkit import DGPSpec

THETA_MODES = ("code_faithful", "two_stage")


@dataclass
class ExperimentOptions:
    estimators: tuple = ("OCDeepIV_CodeFaithful",)
    theta_mode: str = "code_faithful"
    ablation_mode: str = "two_stage"
    smoothing_window: int = 15
    output_dir: str = "out"
    plot: bool = True
    replications: int = 1

    def __post_init__(self):
        for name in self.estimators:
            EstimatorKind.parse(name)
        for key in ("theta_mode", "ablation_mode"):
            if getattr(self, key) not in THETA_MODES:
                raise ConfigError(f"{key} must be one of {THETA_MODES}")
        if self.smoothing_window < 1:
            raise ConfigError("smoothing_window must be >= 1")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")


@dataclass
class ExperimentConfig:
    dgp: DGPSpec = field(default_factory=DGPSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentOptions = field(default_factory=ExperimentOptions)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Override both the data and the training seed."""
        return ExperimentConfig(
            dataclasses.replace(self.dgp, seed=seed),
            dataclasses.replace(self.train, seed=seed),
            self.experiment,
        )

    @property
    def kinds(self) -> list[EstimatorKind]:
        return [EstimatorKind.parse(k) for k in self.experiment.estimators]

    def echo(self) -> list[tuple[str, str]]:
        """``(section.key, value)`` pairs in a stable order, for manifests."""
        out = []
        for section in ("dgp", "train", "experiment"):
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                out.append((f"{section}.{f.name}", format_value(getattr(obj, f.name))))
        return out


SECTIONS = {"dgp": DGPSpec, "train": TrainConfig, "experiment": ExperimentOptions}


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(raw: str, default, key: str, lineno: int):
    where = f"line {lineno}: {key}"
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], (int, float)):
                return tuple(float(s) for s in items)
            return tuple(items)
        if default is None:
            # only DGPSpec.constant_effect: blank means heterogeneous
            return None if raw == "" else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, dict] = {name: {} for name in SECTIONS}
    defaults = {name: {f.name: (f.default if f.default is not dataclasses.MISSING
                                else f.default_factory())
                       for f in dataclasses.fields(cls)}
                for name, cls in SECTIONS.items()}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside of any section")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in values[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        values[section][key] = _convert(raw, defaults[section][key], key, lineno)

    try:
        return ExperimentConfig(**{name: cls(**values[name]) for name, cls in SECTIONS.items()})
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    current = None
    for key, value in cfg.echo():
        section, name = key.split(".", 1)
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
