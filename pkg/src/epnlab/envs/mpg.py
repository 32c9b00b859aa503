"""Symbol-grid game: navigate a freshly labeled grid and collect goals.

Each episode draws a new injection of grid cells into a symbol vocabulary,
so the transition structure over observed symbols is new every episode
while the action set stays fixed. Within an episode, completing a task
resamples only the goal; the symbol layout (and by default the agent's
position) persists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import EpisodeOverError, Observation, StepOutcome, TaskPendingError

LEFT, RIGHT, UP, DOWN, COLLECT = range(5)
ACTION_NAMES = ("left", "right", "up", "down", "collect")
N_ACTIONS = 5


@dataclass
class MPGameConfig:
    grid_side: int = 4
    vocab_size: int = 100
    episode_steps: int = 100
    wrap: bool = True                     # False: moves off the edge are blocked
    reset_position_per_task: bool = False

    def __post_init__(self):
        if self.vocab_size < self.grid_side ** 2:
            raise ValueError(
                f"vocab_size {self.vocab_size} < grid cells {self.grid_side ** 2}")
        if self.episode_steps < 1:
            raise ValueError(f"episode_steps must be >= 1, got {self.episode_steps}")


@dataclass
class MPGameState:
    config: MPGameConfig
    symbol_of_cell: np.ndarray          # distinct vocab ids, one per cell
    agent_cell: int
    goal_cell: int
    steps_used: int = 0
    tasks_completed: int = 0
    needs_new_task: bool = field(default=False, repr=False)


def mp_reset(rng: np.random.Generator, config: MPGameConfig) -> MPGameState:
    """Sample a fresh symbol layout, agent cell, and first goal."""
    n_cells = config.grid_side ** 2
    symbols = rng.choice(config.vocab_size, size=n_cells, replace=False)
    agent = int(rng.integers(n_cells))
    goal = _sample_goal(rng, n_cells, agent)
    return MPGameState(config=config, symbol_of_cell=symbols, agent_cell=agent, goal_cell=goal)


def _sample_goal(rng: np.random.Generator, n_cells: int, exclude: int) -> int:
    goal = int(rng.integers(n_cells - 1))
    return goal if goal < exclude else goal + 1


def _move(cell: int, action: int, side: int, wrap: bool) -> int:
    row, col = divmod(cell, side)
    if action == LEFT:
        col = (col - 1) % side if wrap else max(col - 1, 0)
    elif action == RIGHT:
        col = (col + 1) % side if wrap else min(col + 1, side - 1)
    elif action == UP:
        row = (row - 1) % side if wrap else max(row - 1, 0)
    elif action == DOWN:
        row = (row + 1) % side if wrap else min(row + 1, side - 1)
    return row * side + col


def mp_observation(state: MPGameState) -> Observation:
    return Observation(
        current_id=int(state.symbol_of_cell[state.agent_cell]),
        goal_id=int(state.symbol_of_cell[state.goal_cell]),
        vocab=state.config.vocab_size,
    )


def mp_step(state: MPGameState, action: int) -> StepOutcome:
    """Apply one action in place; collect succeeds only on the goal symbol."""
    if state.steps_used >= state.config.episode_steps:
        raise EpisodeOverError("episode already over")
    if state.needs_new_task:
        raise TaskPendingError("task completed; sample a new goal before stepping")
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"unknown action {action}")

    reward = 0
    task_done = False
    if action == COLLECT:
        if state.agent_cell == state.goal_cell:
            reward = 1
            task_done = True
            state.tasks_completed += 1
            state.needs_new_task = True
    else:
        state.agent_cell = _move(state.agent_cell, action, state.config.grid_side,
                                 state.config.wrap)
    state.steps_used += 1
    episode_done = state.steps_used >= state.config.episode_steps
    return StepOutcome(observation=mp_observation(state), reward=reward,
                       task_done=task_done, episode_done=episode_done)


def mp_new_task(state: MPGameState, rng: np.random.Generator) -> MPGameState:
    """Resample the goal (and optionally the agent cell); symbols stay fixed."""
    if not state.needs_new_task:
        raise TaskPendingError("current task is still active")
    n_cells = state.config.grid_side ** 2
    if state.config.reset_position_per_task:
        state.agent_cell = int(rng.integers(n_cells))
    state.goal_cell = _sample_goal(rng, n_cells, state.agent_cell)
    state.needs_new_task = False
    return state


def wrap_distance(a: int, b: int, side: int, wrap: bool = True) -> int:
    """Grid move count between cells (toroidal Manhattan when wrapping)."""
    ra, ca = divmod(a, side)
    rb, cb = divmod(b, side)
    dr, dc = abs(ra - rb), abs(ca - cb)
    if wrap:
        dr = min(dr, side - dr)
        dc = min(dc, side - dc)
    return dr + dc


def mp_shortest_cost(state: MPGameState, start: int | None = None,
                     goal: int | None = None) -> int:
    """Optimal action count for a task: moves to the goal cell plus one collect."""
    start = state.agent_cell if start is None else start
    goal = state.goal_cell if goal is None else goal
    return wrap_distance(start, goal, state.config.grid_side, state.config.wrap) + 1


class MPGame:
    """Stateful wrapper with the shared env protocol used by the trainer."""

    def __init__(self, config: MPGameConfig | None = None):
        self.config = config or MPGameConfig()
        self.state: MPGameState | None = None
        self._rng: np.random.Generator | None = None

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    @property
    def obs_vocab(self) -> int:
        return self.config.vocab_size

    @property
    def episode_steps(self) -> int:
        return self.config.episode_steps

    def reset(self, rng: np.random.Generator) -> Observation:
        self._rng = rng
        self.state = mp_reset(rng, self.config)
        return mp_observation(self.state)

    def step(self, action: int) -> StepOutcome:
        return mp_step(self.state, action)

    def new_task(self) -> Observation:
        mp_new_task(self.state, self._rng)
        return mp_observation(self.state)

    def observation(self) -> Observation:
        return mp_observation(self.state)

    def oracle_task_cost(self) -> int:
        return mp_shortest_cost(self.state)

    def fork(self, seed: int) -> "MPGame":
        """Deep copy with an independent task rng (for oracle replays)."""
        other = MPGame(self.config)
        other.state = MPGameState(
            config=self.config,
            symbol_of_cell=self.state.symbol_of_cell.copy(),
            agent_cell=self.state.agent_cell,
            goal_cell=self.state.goal_cell,
            steps_used=self.state.steps_used,
            tasks_completed=self.state.tasks_completed,
            needs_new_task=self.state.needs_new_task,
        )
        other._rng = np.random.default_rng(seed)
        return other
