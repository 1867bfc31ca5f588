from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from fuelmap.classes import IGNORED

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def read_config_file(path) -> dict[str, Any]:
    path = Path(path)
    if path.suffix == ".toml":
        return tomllib.loads(path.read_text())
    return json.loads(path.read_text())


@dataclass
class TrainConfig:
    """
    Hyper-parameters of the teacher-student training loop.

    Defaults follow common EMA-teacher segmentation practice (point-loss weight 1,
    confidence threshold 0.968, EMA decay 0.999, AdamW 6e-5 with 1500 warm-up
    iterations). ``class_weights=None`` means "derive from scribble frequencies".
    """

    lam: float = 1.0
    tau: float = 0.968
    alpha: float = 0.999
    base_lr: float = 6e-5
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    warmup_iters: int = 1500
    total_iters: int = 160_000
    poly_power: float = 1.0
    class_weights: list[float] | None = None
    seed: int = 0
    batch_size: int = 2
    tile_size: int = 64
    widths: tuple[int, ...] = (16, 32, 64)
    # False trains on scribbles + points only (no pseudo-labels, no mixing)
    self_training: bool = True
    weighted_point_loss: bool = True
    augment: bool = True
    blur_prob: float = 0.5
    max_shift: int = 10
    val_interval: int = 500

    def __post_init__(self):
        self.betas = tuple(self.betas)
        self.widths = tuple(int(w) for w in self.widths)
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        for name in ("tau", "alpha"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.total_iters < 0 or self.warmup_iters < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.warmup_iters > self.total_iters:
            raise ValueError("warmup_iters must not exceed total_iters")
        if self.class_weights is not None:
            self.class_weights = [float(w) for w in self.class_weights]
            if len(self.class_weights) == IGNORED:
                self.class_weights.append(0.0)
            if len(self.class_weights) != IGNORED + 1:
                raise ValueError("class_weights needs one entry per fuel class")
            if self.class_weights[IGNORED] != 0:
                raise ValueError("the Ignored class weight must be 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "TrainConfig":
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        raw = read_config_file(path)
        return cls.from_dict(raw.get("train", {k: v for k, v in raw.items() if k != "data"}))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["betas"] = list(self.betas)
        d["widths"] = list(self.widths)
        return d
