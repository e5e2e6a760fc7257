"""AdamW with decoupled weight decay and cosine annealing with warm restarts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteError

__all__ = ["AdamState", "adamw_step", "LrSchedule", "lr_at"]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def zeros(cls, size: int, **kwargs) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), **kwargs)


def adamw_step(theta: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One AdamW update.  ``state`` is advanced in place; the new ``theta`` is returned."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError(f"shape mismatch: theta {theta.shape}, grad {grad.shape}, state {state.m.shape}")
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError(f"non-finite gradient at AdamW step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1**state.t)
    v_hat = state.v / (1 - b2**state.t)
    return theta - lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * theta)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    T_0: int = 2001
    T_mult: int = 2
    eta_min: float = 0.0

    def __post_init__(self):
        if self.T_0 < 1 or self.T_mult < 1:
            raise ValueError("T_0 and T_mult must be positive integers")

    def cycle(self, epoch: int) -> tuple[int, int]:
        """(position within the current cycle, length of the current cycle)."""
        if epoch < 0:
            raise ValueError("epoch must be nonnegative")
        T_i, start = self.T_0, 0
        while epoch >= start + T_i:
            start += T_i
            T_i *= self.T_mult
        return epoch - start, T_i


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    T_cur, T_i = schedule.cycle(epoch)
    s = schedule
    return s.eta_min + 0.5 * (s.base_lr - s.eta_min) * (1 + math.cos(math.pi * T_cur / T_i))
