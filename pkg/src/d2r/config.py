"""Flat key=value model/training configuration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass
class ModelConfig:
    levels: int = 3
    base_channels: int = 16
    latent_channels: int = 3
    glow_steps: int = 3
    glow_hidden: int = 0          # 0 = per-level channel count
    restorer_name: str = "default_residual"
    restorer_blocks: int = 6
    restorer_hidden: int = 32
    tau0: float = 0.5
    tau_decay: float = 0.8
    lambda_rec: float = 1.0
    lambda_fft: float = 0.1
    lambda_kl: float = 1e-6
    lambda_con: float = 0.1
    lambda_kl_stage2: float = 0.0
    lr_stage1: float = 5e-4
    lr_stage2: float = 5e-4
    lr_stage3: float = 4e-4
    lr_floor: float = 1e-7
    lr_stiefel_scale: float = 1.0
    batch_stage1: int = 8
    batch_stage2: int = 8
    batch_stage3: int = 8
    crop_stage1: int = 64
    crop_stage2: int = 64
    crop_stage3: int = 64
    steps_stage1: int = 2000
    steps_stage2: int = 2000
    steps_stage3: int = 2000
    seed: int = 0
    stochastic_stage3: bool = False
    swap_contrast_roles: bool = False
    activation: str = "silu"

    def batch(self, stage: int) -> int:
        return getattr(self, f"batch_stage{stage}")

    def crop(self, stage: int) -> int:
        return getattr(self, f"crop_stage{stage}")

    def steps(self, stage: int) -> int:
        return getattr(self, f"steps_stage{stage}")

    def lr(self, stage: int) -> float:
        return getattr(self, f"lr_stage{stage}")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def full_scale() -> ModelConfig:
    # glow_hidden is pinned so the restorer + fusion stack lands near 1.2M
    # trainable parameters at this width
    return ModelConfig(base_channels=48, glow_hidden=32,
                       batch_stage1=16, batch_stage2=12, batch_stage3=6,
                       crop_stage1=256, crop_stage2=256, crop_stage3=512)


def parse_config(text: str) -> ModelConfig:
    known = {f.name: f for f in fields(ModelConfig)}
    cfg = ModelConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        ftype = known[key].type
        try:
            if ftype == "bool" or isinstance(getattr(cfg, key), bool):
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                parsed = value.lower() == "true"
            elif isinstance(getattr(cfg, key), int):
                parsed = int(value)
            elif isinstance(getattr(cfg, key), float):
                parsed = float(value)
            else:
                parsed = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
        setattr(cfg, key, parsed)
    return cfg


def load_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
