"""Adam with elementwise value clipping, plus the step-decay learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if not (0 < self.epsilon < 1e-2):
            raise ConfigError("Adam epsilon must lie in (0, 1e-2)")


def adam_step(state: AdamState, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
              clip: tuple[float, float] = (-5.0, 5.0)) -> None:
    """Clamp each gradient component to ``clip`` then apply one bias-corrected Adam update.

    Parameters are updated by rebinding ``Tensor.data`` to a new array, so
    arrays captured by earlier tapes are never mutated.  Names missing from
    ``grads`` are treated as zero gradients.
    """
    lo, hi = clip
    if not lo < hi:
        raise ConfigError(f"clip interval [{lo}, {hi}] is empty")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        g = np.clip(g, lo, hi)
        assert g.size == 0 or (g.min() >= lo and g.max() <= hi)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
        p.data = p.data - update


def step_decay(epoch: int, base_lr: float, decay: float = 0.5, every: int = 50) -> float:
    """Learning rate for a 1-based ``epoch``: halved (by default) every ``every`` epochs."""
    if every < 1:
        raise ConfigError("decay interval must be >= 1")
    return base_lr * decay ** math.floor((epoch - 1) / every)
