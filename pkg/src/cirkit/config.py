"""Run configuration: one JSON file with per-subcommand sections.

Sections mirror the module config types (synth, model, train, eval, pair,
refine); a top-level seed fills any section seed left unset. Unknown keys
are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import UsageError
from .synthesis import SynthConfig
from .training import ModelConfig, TrainConfig

_SECTION_KEYS = {
    "synth": {"alpha", "text_synthesis_ratio", "noise_sigma", "template_ids",
              "seed", "neighbor_strategy"},
    "model": {"d_img", "d_h", "d_out", "vocab_buckets", "tau"},
    "train": {"learning_rate", "batch_size", "steps", "mode", "data", "index",
              "seed"},
    "eval": {"ks"},
    "pair": {"low", "high", "interval", "group_size"},
    "refine": {"workers"},
}


@dataclass
class TrainSettings:
    learning_rate: float = 1e-3
    batch_size: int = 64
    steps: int = 500
    mode: str = "pretrain"  # "pretrain" | "triplet"
    data: str | None = None
    index: str | None = None
    seed: int | None = None


@dataclass
class EvalSettings:
    ks: tuple = (1, 5, 10, 50)


@dataclass
class PairSettings:
    low: float = 0.5
    high: float = 0.95
    interval: float = 0.03
    group_size: int = 6


@dataclass
class RefineSettings:
    workers: int = 4


@dataclass
class RunConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    pair: PairSettings = field(default_factory=PairSettings)
    refine: RefineSettings = field(default_factory=RefineSettings)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.train.learning_rate,
            batch_size=self.train.batch_size,
            steps=self.train.steps,
            seed=self.seed if self.train.seed is None else self.train.seed,
            synth=self.synth,
        )


def _build_section(name, cls, payload, run_seed):
    allowed = _SECTION_KEYS[name]
    unknown = set(payload) - allowed
    if unknown:
        raise UsageError(f"config section {name!r}: unknown keys {sorted(unknown)}")
    kwargs = dict(payload)
    if "template_ids" in kwargs:
        kwargs["template_ids"] = tuple(kwargs["template_ids"])
    if "ks" in kwargs:
        kwargs["ks"] = tuple(kwargs["ks"])
    section = cls(**kwargs)
    # a section-level seed wins over the run seed
    if name == "synth" and "seed" not in payload:
        section.seed = run_seed
    return section


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: cannot read config ({exc})") from exc
    if not isinstance(payload, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return run_config_from_dict(payload, source=str(path))


def run_config_from_dict(payload: dict, source="config") -> RunConfig:
    unknown = set(payload) - (set(_SECTION_KEYS) | {"seed"})
    if unknown:
        raise UsageError(f"{source}: unknown top-level keys {sorted(unknown)}")
    run_seed = payload.get("seed", 0)
    if not isinstance(run_seed, int) or run_seed < 0:
        raise UsageError(f"{source}: seed must be a non-negative integer")

    classes = {
        "synth": SynthConfig,
        "model": ModelConfig,
        "train": TrainSettings,
        "eval": EvalSettings,
        "pair": PairSettings,
        "refine": RefineSettings,
    }
    kwargs = {"seed": run_seed}
    for name, cls in classes.items():
        section_payload = payload.get(name, {})
        if not isinstance(section_payload, dict):
            raise UsageError(f"{source}: section {name!r} must be an object")
        try:
            kwargs[name] = _build_section(name, cls, section_payload, run_seed)
        except TypeError as exc:
            raise UsageError(f"{source}: section {name!r}: {exc}") from exc
    return RunConfig(**kwargs)


def describe_defaults() -> str:
    """Flat listing of every config key and its default, for --help output."""
    lines = ["seed = 0"]
    defaults = RunConfig()
    for section in ("synth", "model", "train", "eval", "pair", "refine"):
        obj = getattr(defaults, section)
        for f in fields(obj):
            if f.name in _SECTION_KEYS[section]:
                lines.append(f"{section}.{f.name} = {getattr(obj, f.name)!r}")
    return "\n".join(lines)
