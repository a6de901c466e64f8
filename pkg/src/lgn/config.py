"""Run configuration: flat ``key = value`` files, presets and overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .model import Architecture, ConfigError
from .train import TemperatureSchedule, TrainPlan

DATASETS = ("yinyang", "mnist", "fashion-mnist")


@dataclass
class RunConfig:
    name: str = "run"
    # data
    dataset: str = "yinyang"
    data_dir: str = ""
    train_size: int = 200_000
    test_size: int = 10_000
    train_seed: int = 1
    test_seed: int = 2
    encoding: str = "binary"
    bits_per_coord: int = 12
    thresholds: list[float] = field(default_factory=list)
    # architecture
    widths: list[int] = field(default_factory=lambda: [100, 100])
    n_candidates: list[int | None] = field(default_factory=lambda: [12, 16])
    head_tau: float | None = None
    residual_weight: float = 5.0
    cover_inputs: bool = True
    conn_init_std: float = 0.0
    gate_init_std: float = 0.0
    uneven_groups: bool = True
    conn_path: str = "auto"
    dtype: str = "float32"
    # training
    epochs: int = 100
    lr: float = 0.01
    batch_size: int = 128
    seed: int = 0
    optimizer: str = "adam"
    tc_start: float = 1.0
    tc_end: float = 1e-4
    tc_epoch_start: int = 0
    tc_epoch_end: int = 0
    tg_start: float = 1.0
    tg_end: float = 1e-4
    tg_epoch_start: int = 0
    tg_epoch_end: int = 0
    # output
    out_dir: str = ""
    checkpoint_every: int = 0

    @property
    def n_classes(self) -> int:
        return 3 if self.dataset == "yinyang" else 10

    @property
    def input_width(self) -> int:
        if self.dataset == "yinyang":
            return 2 * self.bits_per_coord
        return 784 * len(self.effective_thresholds())

    def effective_thresholds(self) -> list[float]:
        if self.thresholds:
            return list(self.thresholds)
        from .datasets import THRESHOLDS

        return list(THRESHOLDS.get(self.dataset, ()))

    def architecture(self) -> Architecture:
        return Architecture(
            input_width=self.input_width,
            widths=list(self.widths),
            n_candidates=list(self.n_candidates),
            n_classes=self.n_classes,
            head_tau=self.head_tau,
            residual_weight=self.residual_weight,
            cover_inputs=self.cover_inputs,
            conn_init_std=self.conn_init_std,
            gate_init_std=self.gate_init_std,
            uneven_groups=self.uneven_groups,
            conn_path=self.conn_path,
            dtype=self.dtype,
        )

    def plan(self) -> TrainPlan:
        return TrainPlan(
            epochs=self.epochs,
            lr=self.lr,
            batch_size=self.batch_size,
            seed=self.seed,
            sched_c=TemperatureSchedule(self.tc_start, self.tc_end, self.tc_epoch_start, self.tc_epoch_end),
            sched_g=TemperatureSchedule(self.tg_start, self.tg_end, self.tg_epoch_start, self.tg_epoch_end),
            optimizer=self.optimizer,
        )

    def validate(self) -> None:
        """Raise ConfigError naming the offending field."""
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset: unknown dataset {self.dataset!r} (choose from {', '.join(DATASETS)})")
        if self.dataset == "yinyang" and self.encoding not in ("binary", "thermometer"):
            raise ConfigError(f"encoding: unknown encoding {self.encoding!r}")
        for key in ("train_size", "test_size", "bits_per_coord"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key}: must be positive")
        thr = self.effective_thresholds()
        if self.dataset != "yinyang" and any(b <= a for a, b in zip(thr, thr[1:])):
            raise ConfigError("thresholds: must be strictly increasing")
        if len(self.n_candidates) != len(self.widths):
            raise ConfigError(
                f"n_candidates: {len(self.n_candidates)} entries for {len(self.widths)} layers"
            )
        prev = self.input_width
        for i, (w, nc) in enumerate(zip(self.widths, self.n_candidates)):
            if w <= 0:
                raise ConfigError(f"widths: layer {i} width must be positive")
            if nc is not None and not 1 <= nc <= prev:
                raise ConfigError(f"n_candidates: layer {i} has N_c={nc}, must be in [1, {prev}] (previous width)")
            prev = w
        try:
            self.architecture().validate()
        except ConfigError as e:
            raise ConfigError(f"architecture: {e}") from None
        try:
            self.plan().validate()
        except ValueError as e:
            raise ConfigError(f"schedule: {e}") from None
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every: must be >= 0")

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ",".join("full" if x is None else _format(x) for x in v)
    return str(v)


def _parse_bool(key: str, s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {s!r}")


def _parse_value(key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    if key not in fields:
        raise ConfigError(f"{key}: unknown configuration key")
    s = raw.strip()
    try:
        if key in ("widths",):
            return [int(t) for t in s.split(",") if t.strip()]
        if key == "n_candidates":
            return [None if t.strip() in ("full", "all") else int(t) for t in s.split(",") if t.strip()]
        if key == "thresholds":
            return [float(t) for t in s.split(",") if t.strip()]
        if key == "head_tau":
            return None if s in ("auto", "") else float(s)
        default = getattr(RunConfig(), key)
        if isinstance(default, bool):
            return _parse_bool(key, s)
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
        return s
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        setattr(cfg, key, _parse_value(key, value))
    return cfg


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    return parse_text("\n".join(overrides), cfg)


def load_config(path) -> RunConfig:
    return parse_text(Path(path).read_text())


def preset_names() -> list[str]:
    pkg = resources.files("lgn") / "presets"
    return sorted(p.name[:-4] for p in pkg.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> RunConfig:
    path = resources.files("lgn") / "presets" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"preset: unknown preset {name!r} (available: {', '.join(preset_names())})")
    cfg = parse_text(path.read_text())
    if cfg.name == "run":
        cfg.name = name
    return cfg
