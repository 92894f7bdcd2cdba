"""Training configuration, loadable from a flat key=value file."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

FREEZE_SETS = ("none", "ga_gs", "ha_hs", "all")


@dataclass
class TrainConfig:
    # loss weights
    lambda_rd: float = 100.0     # rate-distortion multiplier (toy default; unstated upstream)
    lambda_s: float = 0.1        # distillation weight
    # learning rates
    lr_stage1: float = 1e-3     # toy default, declared not inferred
    lr_lic: float = 1e-6        # codec learning rate in stage 2
    lr_adapter: float = 1e-4
    # schedule
    steps_stage1: int = 800
    steps_stage2: int = 500
    batch_size: int = 8
    crop_size: int = 64         # must be a multiple of 64
    freeze: str = "all"         # subset of the codec held fixed in stage 2
    seed: int = 0
    # model dims
    n_ch: int = 24
    m_ch: int = 32
    hz_ch: int = 12
    embed_dim: int = 64
    fusion_hidden: int = 96

    def __post_init__(self):
        if self.lambda_rd <= 0 or self.lambda_s < 0:
            raise ValueError("lambda_rd must be > 0 and lambda_s >= 0")
        if self.crop_size % 64:
            raise ValueError(f"crop_size {self.crop_size} must be a multiple of 64")
        if self.freeze not in FREEZE_SETS:
            raise ValueError(f"freeze must be one of {FREEZE_SETS}, got {self.freeze!r}")


_FLOAT_KEYS = {"lambda_rd", "lambda_s", "lr_stage1", "lr_lic", "lr_adapter"}


def parse_config_file(path) -> TrainConfig:
    """Flat key=value lines; '#' starts a comment; unknown keys are rejected."""
    known = {f.name for f in fields(TrainConfig)}
    values: dict = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key == "freeze":
                values[key] = raw
            elif key in _FLOAT_KEYS:
                values[key] = float(raw)
            else:
                values[key] = int(raw)
    return TrainConfig(**values)
