"""Run configuration: one flat ``[run]`` section of an INI file.

Every key is typed from the defaults below; unknown keys, unknown
sections and unparsable values raise :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .nnet import Ablation
from .trainer import TrainConfig

TASKS = ("accuracy", "misclassification", "ood", "shift")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _words(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _pairs(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in _words(text):
        a, sep, b = item.partition("-")
        if not sep:
            raise ValueError(f"pair {item!r} must look like 0-4")
        out.append((int(a), int(b)))
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    # training
    max_epochs: int = 50
    lr: float = 1e-3
    step_size: int = 20
    gamma: float = 0.1
    batch_size: int = 64
    eps: float = 0.1
    seed: int = 0
    early_stop_patience: int = 20
    hidden: int = 32
    extractor_depth: int = 2
    head_layers: int = 1
    head_hidden: int = 128
    activation: str = "tanh"
    fix_omega_uniform: bool = False
    fix_tau_shared: bool = False
    drop_omega_reg: bool = False
    drop_tau_reg: bool = False
    method: str = ""
    # data
    dataset: str = "blobs"
    csv_path: str = ""
    n_classes: int = 3
    dim: int = 2
    per_class: int = 200
    spread: float = 1.0
    scale: float = 4.0
    test_per_class: int = 200
    imbalance_rho: float = 1.0
    ambiguity_fraction: float = 0.0
    ambiguity_pairs: tuple = ()
    # evaluation and output
    tasks: tuple = ("accuracy",)
    ood_offset: float = 5.0
    severities: tuple = (1, 3, 5)
    out_dir: str = "runs"
    formats: tuple = FORMATS

    def __post_init__(self):
        if self.dataset not in ("blobs", "csv"):
            raise ConfigError(f"dataset: expected 'blobs' or 'csv', got {self.dataset!r}")
        if self.dataset == "csv" and not self.csv_path:
            raise ConfigError("csv_path: required when dataset = csv")
        for t in self.tasks:
            if t not in TASKS:
                raise ConfigError(f"tasks: unknown task {t!r}; choose from {', '.join(TASKS)}")
        for f in self.formats:
            if f not in FORMATS:
                raise ConfigError(f"formats: unknown format {f!r}")
        if any(s not in (1, 2, 3, 4, 5) for s in self.severities):
            raise ConfigError("severities: values must lie in 1..5")
        if not 0.0 < self.imbalance_rho <= 1.0:
            raise ConfigError("imbalance_rho: must lie in (0, 1]")
        if not 0.0 <= self.ambiguity_fraction <= 1.0:
            raise ConfigError("ambiguity_fraction: must lie in [0, 1]")
        if self.ood_offset <= 0:
            raise ConfigError("ood_offset: must be positive")
        for name in ("n_classes", "dim", "per_class", "test_per_class"):
            if getattr(self, name) < (2 if name in ("n_classes", "dim") else 1):
                raise ConfigError(f"{name}: value too small")
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def ablation(self) -> Ablation:
        return Ablation(self.fix_omega_uniform, self.fix_tau_shared,
                        self.drop_omega_reg, self.drop_tau_reg)

    @property
    def method_name(self) -> str:
        if self.method:
            return self.method
        ab = self.ablation
        if ab.fix_omega_uniform and ab.fix_tau_shared:
            return "edl-baseline"
        on = [f.name for f in fields(Ablation) if getattr(ab, f.name)]
        return "+".join(["modex"] + on)

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)} - {"ablation"}
        return TrainConfig(ablation=self.ablation, **{n: getattr(self, n) for n in names})

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_PARSERS = {
    "ambiguity_pairs": _pairs,
    "tasks": _words,
    "formats": _words,
    "severities": _ints,
}


def _parse_value(name: str, default, text: str):
    if name in _PARSERS:
        return _PARSERS[name](text)
    if isinstance(default, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    extra = [s for s in cp.sections() if s != "run"]
    if extra:
        raise ConfigError(f"unknown section [{extra[0]}]; only [run] is allowed")
    if "run" not in cp:
        raise ConfigError("missing [run] section")
    defaults = {f.name: f.default for f in fields(RunConfig)}
    values = {}
    for key, text in cp["run"].items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r}")
        try:
            values[key] = _parse_value(key, defaults[key], text)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if base_dir is not None and values.get("csv_path"):
        p = Path(values["csv_path"])
        values["csv_path"] = str(p if p.is_absolute() else base_dir / p)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)


def dump_config(cfg: RunConfig) -> str:
    lines = ["[run]"]
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if f.name == "ambiguity_pairs":
            v = ", ".join(f"{a}-{b}" for a, b in v)
        elif isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
