"""FIFO replay buffer and phantom-action resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotReadyError(RuntimeError):
    """Raised when sampling from an empty buffer."""


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    behavior_log_density: float | None = None


class ReplayBuffer:
    """Fixed-capacity ring; oldest transitions are evicted first."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._slots: list[Transition] = []
        self._cursor = 0
        self.inserted = 0

    def __len__(self) -> int:
        return len(self._slots)

    def push(self, t: Transition) -> None:
        if len(self._slots) < self.capacity:
            self._slots.append(t)
        else:
            self._slots[self._cursor] = t
        self._cursor = (self._cursor + 1) % self.capacity
        self.inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sampling with replacement."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if not self._slots:
            raise NotReadyError("replay buffer is empty")
        idx = rng.integers(0, len(self._slots), size=batch_size)
        return [self._slots[i] for i in idx]


def stack_batch(batch: list[Transition]):
    """Columns of a transition batch as arrays (S, A, R, S2, done, log q)."""
    S = np.stack([t.state for t in batch])
    A = np.stack([t.action for t in batch])
    R = np.array([t.reward for t in batch])
    S2 = np.stack([t.next_state for t in batch])
    D = np.array([1.0 if t.done else 0.0 for t in batch])
    logq = np.array(
        [t.behavior_log_density if t.behavior_log_density is not None else np.nan for t in batch]
    )
    return S, A, R, S2, D, logq


def phantom_actions(batch: list[Transition], variance_source, rng: np.random.Generator) -> np.ndarray:
    """Resample each stored action from a Gaussian centred on it.

    ``variance_source`` is either a per-dimension variance vector shared by
    every state or a callable mapping a state to one.
    """
    A = np.stack([t.action for t in batch])
    if callable(variance_source):
        var = np.stack([np.asarray(variance_source(t.state), dtype=float) for t in batch])
    else:
        var = np.asarray(variance_source, dtype=float)
        var = np.broadcast_to(var, A.shape)
    if np.any(var < 0.0) or not np.all(np.isfinite(var)):
        raise ValueError("phantom variances must be finite and nonnegative")
    return A + np.sqrt(var) * rng.standard_normal(A.shape)
