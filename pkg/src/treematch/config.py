"""Flat ``key = value`` run configuration and per-stage seed derivation."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .mining import MiningConfig
from .net import TrainConfig

STAGES = ("cluster", "negatives", "synth", "split", "arch", "train")
EXECUTION_KEYS = ("threads",)  # change how a run executes, never what it outputs


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    # mining
    max_size: int = 4
    min_support: int = 3
    tau: float = 0.6
    alpha: float = 1.0
    abstraction: str = ""  # comma list of entity, simword
    # clustering
    k: int = 50
    kmeans_iters: int = 100
    # network
    h1: int = 100
    h2: int = 40
    h3: int = 10
    density: int = 10
    margin: float = 1.0
    lr: float = 3.0
    batch_size: int = 32
    dropout: float = 0.2
    max_epochs: int = 60
    patience: int = 15
    l2: float = 1e-5
    # corpus handling
    n_neg: int = 9
    valid_fraction: float = 0.1

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def update(self, values: dict, source: str) -> None:
        known = set(self.keys())
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown config key {key!r}")
            setattr(self, key, _coerce(key, raw, type(getattr(self, key)), source))

    def abstraction_flags(self) -> tuple[bool, bool]:
        modes = {m.strip() for m in self.abstraction.split(",") if m.strip()}
        unknown = modes - {"entity", "simword"}
        if unknown:
            raise ConfigError(f"unknown abstraction mode(s): {', '.join(sorted(unknown))}")
        return "entity" in modes, "simword" in modes

    def mining_config(self, clustering=None) -> MiningConfig:
        entity, simword = self.abstraction_flags()
        return MiningConfig(self.max_size, self.min_support, self.tau, self.alpha,
                            entity, simword, clustering, self.threads)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.margin, self.lr, self.batch_size, self.dropout,
                           self.max_epochs, self.patience, self.stage_seed("train"), self.l2)

    @property
    def hidden(self) -> tuple[int, int, int]:
        return (self.h1, self.h2, self.h3)

    def stage_seed(self, stage: str) -> int:
        """Seed of one pipeline stage, derived from the root seed by the
        stage's fixed position in :data:`STAGES`."""
        return stage_seed(self.seed, stage)

    def resolved(self, for_output: bool = False) -> dict:
        """Every key plus the derived stage seeds; ``for_output`` drops the
        execution-only keys so written artifacts do not depend on them."""
        out = {k: getattr(self, k) for k in self.keys()
               if not (for_output and k in EXECUTION_KEYS)}
        out["stage_seeds"] = {s: self.stage_seed(s) for s in STAGES}
        return out


def stage_seed(root: int, stage: str) -> int:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    ss = np.random.SeedSequence(root, spawn_key=(STAGES.index(stage),))
    return int(ss.generate_state(1)[0])


def _coerce(key, raw, typ, source):
    if not isinstance(raw, str):
        return typ(raw)
    try:
        if typ is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"{source}: bad value {raw!r} for {key}") from None


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        with open(path, encoding="utf8") as f:
            cfg.update(parse_config(f.read(), str(path)), str(path))
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None}, "command line")
    return cfg


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {getattr(cfg, k)}\n" for k in cfg.keys())
