"""Shared environment types and errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EpisodeOverError(RuntimeError):
    """An action was attempted after the episode's step budget ran out."""


class TaskPendingError(RuntimeError):
    """Task bookkeeping was violated (step before resampling, or early resample)."""


class IntersectionQuotaError(RuntimeError):
    """The city cannot supply a neighborhood with the requested intersections."""


@dataclass(frozen=True)
class Observation:
    """A pair of one-hot ids: where the agent is and where it should go."""
    current_id: int
    goal_id: int
    vocab: int

    def current_one_hot(self) -> np.ndarray:
        v = np.zeros(self.vocab, dtype=np.float32)
        v[self.current_id] = 1.0
        return v

    def goal_one_hot(self) -> np.ndarray:
        v = np.zeros(self.vocab, dtype=np.float32)
        v[self.goal_id] = 1.0
        return v


@dataclass(frozen=True)
class StepOutcome:
    observation: Observation
    reward: int
    task_done: bool
    episode_done: bool

    def __post_init__(self):
        if (self.reward == 1) != self.task_done:
            raise ValueError("reward must be 1 exactly when the task completes")
