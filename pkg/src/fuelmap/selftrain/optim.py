from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fuelmap.errors import ShapeMismatchError
from fuelmap.net import SegModel


def lr_at(iteration: int, cfg) -> float:
    """Linear warm-up to ``base_lr`` followed by polynomial decay to 0 at ``total_iters``."""
    if not 0 <= iteration <= cfg.total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.total_iters}]")
    if iteration < cfg.warmup_iters:
        return cfg.base_lr * (iteration + 1) / cfg.warmup_iters
    span = cfg.total_iters - cfg.warmup_iters
    if span == 0:
        return 0.0
    frac = 1.0 - (iteration - cfg.warmup_iters) / span
    return cfg.base_lr * frac**cfg.poly_power


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def optimizer_step(model: SegModel, grads: dict[str, np.ndarray], state: AdamState, lr: float, cfg) -> None:
    """One AdamW step with decoupled weight decay, in place."""
    beta1, beta2 = getattr(cfg, "betas", (0.9, 0.999))
    eps = getattr(cfg, "eps", 1e-8)
    wd = cfg.weight_decay
    for name, g in grads.items():
        if g.shape != model.params[name].shape:
            raise ShapeMismatchError(f"{name}: grad {g.shape} vs param {model.params[name].shape}")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, theta in model.params.items():
        g = grads[name].astype(theta.dtype, copy=False)
        m = state.m.setdefault(name, np.zeros_like(theta))
        v = state.v.setdefault(name, np.zeros_like(theta))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if wd:
            theta *= 1.0 - lr * wd
        theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    model.touch()
