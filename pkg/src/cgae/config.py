"""Run configuration: a sectioned ``key = value`` file with validated, typed fields.

Example::

    [paths]
    workdir = run
    data = run/data.csv

    [graph]
    mode = correlation
    threshold = 0.95

    [forecast]
    horizons = 1, 2
    coverages = 0.1, 0.5, 0.9

Every key is optional. Unknown sections or keys are errors, and all field
problems are reported together.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .metrics import DEFAULT_COVERAGES

__all__ = ["ConfigError", "RunConfig", "load_config", "SECTIONS"]


class ConfigError(ValueError):
    """Raised with one message per offending field."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class RunConfig:
    # [paths]
    workdir: str = "run"
    data: str = ""  # defaults to <workdir>/data.csv
    # [synth]
    nodes: int = 5
    days: int = 60
    noise: float = 1.0
    # [split]
    test_start: str = ""  # ISO timestamp; empty means the last test_fraction of the days
    test_fraction: float = 0.25
    # [graph]
    mode: str = "correlation"
    threshold: float = 0.95
    kernel_scale: float = 1.0
    # [lags]
    max_lag: int = 300
    tau: float = 0.45
    bins: int = 16
    # [model]
    d: int = 4
    L_G: int = 2
    L_Q: int = 3
    L_P: int = 4
    gfenn_width: int = 8
    hidden_width: int = 32
    eta: float = 5e-4
    sigma_dec: float = 0.1
    # [training]
    epochs: int = 40
    batch_size: int = 1
    # [forecast]
    rho: int = 10_000
    coverages: tuple[float, ...] = DEFAULT_COVERAGES
    horizons: tuple[int, ...] = (1,)
    member_days: int = 20
    add_output_noise: bool = True
    # [run]
    seed: int = 0

    def __post_init__(self):
        problems = _validate(self)
        if problems:
            raise ConfigError(problems)

    @property
    def workdir_path(self) -> Path:
        return Path(self.workdir)

    @property
    def data_path(self) -> Path:
        return Path(self.data) if self.data else self.workdir_path / "data.csv"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


SECTIONS: dict[str, tuple[str, ...]] = {
    "paths": ("workdir", "data"),
    "synth": ("nodes", "days", "noise"),
    "split": ("test_start", "test_fraction"),
    "graph": ("mode", "threshold", "kernel_scale"),
    "lags": ("max_lag", "tau", "bins"),
    "model": ("d", "L_G", "L_Q", "L_P", "gfenn_width", "hidden_width", "eta", "sigma_dec"),
    "training": ("epochs", "batch_size"),
    "forecast": ("rho", "coverages", "horizons", "member_days", "add_output_noise"),
    "run": ("seed",),
}

_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _validate(c: RunConfig) -> list[str]:
    p = []

    def need(ok: bool, msg: str):
        if not ok:
            p.append(msg)

    for name in ("nodes", "days"):
        need(getattr(c, name) >= 2, f"synth.{name}: must be >= 2, got {getattr(c, name)}")
    need(c.noise >= 0, f"synth.noise: must be >= 0, got {c.noise}")
    need(0 < c.test_fraction < 1, f"split.test_fraction: must lie in (0, 1), got {c.test_fraction}")
    need(c.mode in ("correlation", "distance"), f"graph.mode: must be correlation or distance, got {c.mode!r}")
    need(c.threshold >= 0, f"graph.threshold: must be >= 0, got {c.threshold}")
    need(c.kernel_scale > 0, f"graph.kernel_scale: must be > 0, got {c.kernel_scale}")
    need(c.max_lag >= 1, f"lags.max_lag: must be >= 1, got {c.max_lag}")
    need(c.tau >= 0, f"lags.tau: must be >= 0, got {c.tau}")
    need(c.bins >= 1, f"lags.bins: must be >= 1, got {c.bins}")
    for name in ("d", "L_G", "L_Q", "L_P", "gfenn_width", "hidden_width"):
        need(getattr(c, name) >= 1, f"model.{name}: must be >= 1, got {getattr(c, name)}")
    need(c.eta > 0, f"model.eta: must be > 0, got {c.eta}")
    need(c.sigma_dec > 0, f"model.sigma_dec: must be > 0, got {c.sigma_dec}")
    need(c.epochs >= 0, f"training.epochs: must be >= 0, got {c.epochs}")
    need(c.batch_size >= 1, f"training.batch_size: must be >= 1, got {c.batch_size}")
    need(c.rho >= 2, f"forecast.rho: must be >= 2, got {c.rho}")
    need(len(c.coverages) > 0 and all(0 < v < 1 for v in c.coverages),
         f"forecast.coverages: values must lie in (0, 1), got {c.coverages}")
    need(len(c.horizons) > 0 and all(k >= 1 for k in c.horizons),
         f"forecast.horizons: values must be >= 1, got {c.horizons}")
    need(len(set(c.horizons)) == len(c.horizons), f"forecast.horizons: duplicates in {c.horizons}")
    need(c.member_days >= 1, f"forecast.member_days: must be >= 1, got {c.member_days}")
    return p


def _convert(kind: str, text: str) -> Any:
    text = text.strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "tuple[int, ...]":
        return tuple(int(t) for t in text.split(",") if t.strip())
    if kind == "tuple[float, ...]":
        return tuple(float(t) for t in text.split(",") if t.strip())
    return text


def load_config(path=None, **overrides) -> RunConfig:
    """Parse ``path`` (or use defaults when None) and apply keyword overrides last."""
    values: dict[str, Any] = {}
    problems: list[str] = []
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"{path}: config file not found"])
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str  # keep L_G etc. case-sensitive
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as err:
            raise ConfigError([f"{path}: {err}"]) from err
        for section in parser.sections():
            if section not in SECTIONS:
                problems.append(f"[{section}]: unknown section (expected one of {', '.join(SECTIONS)})")
                continue
            for key, text in parser.items(section):
                if key not in SECTIONS[section]:
                    problems.append(f"{section}.{key}: unknown key")
                    continue
                try:
                    values[key] = _convert(_TYPES[key], text)
                except ValueError as err:
                    problems.append(f"{section}.{key}: {err}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    if problems:
        raise ConfigError(problems)
    return RunConfig(**values)
