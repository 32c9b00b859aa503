"""Turn/forward navigation over sampled neighborhoods.

The agent stands at a node facing one incident edge. Turns rotate the
heading through the angle-ordered incident edges; forward moves along
the faced edge and reorients toward the onward edge most aligned with
the direction of travel. A task is a (node, heading) pair to reach;
observations are one-hot ids drawn from a per-episode random relabeling
of the state space, so ids carry no structure across episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .citygraph import CityGraph, CityParams, Neighborhood, sample_neighborhood, synth_city
from .common import EpisodeOverError, Observation, StepOutcome

TURN_LEFT, TURN_RIGHT, FORWARD = range(3)
ACTION_NAMES = ("turn_left", "turn_right", "forward")
N_ACTIONS = 3


@dataclass
class GraphNavConfig:
    n_intersections: int = 5
    episode_steps: int = 200
    obs_vocab: int = 64
    goal_requires_heading: bool = True
    city: CityParams = field(default_factory=CityParams)

    def __post_init__(self):
        if self.episode_steps < 1:
            raise ValueError("episode_steps must be >= 1")


@dataclass
class NavState:
    node: int
    heading: int                      # index into ordered_neighbors[node]
    goal: tuple[int, int]             # (node, heading index)
    steps_used: int = 0
    tasks_completed: int = 0


def _angle_diff(a: float, b: float) -> float:
    d = (a - b + math.pi) % (2.0 * math.pi) - math.pi
    return abs(d)


def forward_transition(world: Neighborhood, node: int, heading: int) -> tuple[int, int]:
    """Move along the faced edge; new heading best matches travel direction."""
    target = world.ordered_neighbors[node][heading]
    arrival = world.edge_angle(node, target)
    best_i, best_d = 0, math.inf
    for i, w in enumerate(world.ordered_neighbors[target]):
        d = _angle_diff(world.edge_angle(target, w), arrival)
        if d < best_d - 1e-12:
            best_i, best_d = i, d
    return target, best_i


def apply_action(world: Neighborhood, node: int, heading: int, action: int) -> tuple[int, int]:
    deg = world.degree(node)
    if action == TURN_LEFT:
        return node, (heading + 1) % deg
    if action == TURN_RIGHT:
        return node, (heading - 1) % deg
    if action == FORWARD:
        return forward_transition(world, node, heading)
    raise ValueError(f"unknown action {action}")


def goal_reached(world: Neighborhood, state: NavState, goal_requires_heading: bool = True) -> bool:
    if goal_requires_heading:
        return (state.node, state.heading) == state.goal
    return state.node == state.goal[0]


def nav_observation(world: Neighborhood, state: NavState,
                    labels: np.ndarray | None = None, vocab: int | None = None) -> Observation:
    cur = world.state_index((state.node, state.heading))
    goal = world.state_index(state.goal)
    if labels is not None:
        cur, goal = int(labels[cur]), int(labels[goal])
    return Observation(current_id=cur, goal_id=goal,
                       vocab=vocab if vocab is not None else world.n_states)


def nav_step(world: Neighborhood, state: NavState, action: int,
             episode_steps: int = 200, labels: np.ndarray | None = None,
             vocab: int | None = None, goal_requires_heading: bool = True) -> StepOutcome:
    """Apply one action in place; reaching the goal state rewards 1."""
    if state.steps_used >= episode_steps:
        raise EpisodeOverError("episode already over")
    state.node, state.heading = apply_action(world, state.node, state.heading, action)
    state.steps_used += 1
    done_task = goal_reached(world, state, goal_requires_heading)
    if done_task:
        state.tasks_completed += 1
    return StepOutcome(
        observation=nav_observation(world, state, labels, vocab),
        reward=1 if done_task else 0,
        task_done=done_task,
        episode_done=state.steps_used >= episode_steps,
    )


def nav_new_task(world: Neighborhood, rng: np.random.Generator,
                 state: NavState | None = None) -> NavState:
    """Uniform start and goal (node, heading) pairs with start != goal."""
    states = world.states()
    i = int(rng.integers(len(states)))
    j = int(rng.integers(len(states) - 1))
    if j >= i:
        j += 1
    node, heading = states[i]
    if state is None:
        return NavState(node=node, heading=heading, goal=states[j])
    state.node, state.heading = node, heading
    state.goal = states[j]
    return state


# ------------------------------------------------------------ shortest costs


def product_transitions(world: Neighborhood) -> np.ndarray:
    """next_state[state_index, action] over the (node, heading) product graph."""
    states = world.states()
    nxt = np.empty((len(states), N_ACTIONS), dtype=np.int64)
    for k, (v, i) in enumerate(states):
        for a in range(N_ACTIONS):
            nxt[k, a] = world.state_index(apply_action(world, v, i, a))
    return nxt


def distances_to_goal(world: Neighborhood, goal: tuple[int, int],
                      goal_requires_heading: bool = True) -> np.ndarray:
    """Action counts from every state to the goal (BFS on the reversed graph)."""
    nxt = product_transitions(world)
    n = nxt.shape[0]
    rev: list[list[int]] = [[] for _ in range(n)]
    for k in range(n):
        for a in range(N_ACTIONS):
            rev[nxt[k, a]].append(k)
    dist = np.full(n, -1, dtype=np.int64)
    if goal_requires_heading:
        sources = [world.state_index(goal)]
    else:
        sources = [world.state_index((goal[0], i)) for i in range(world.degree(goal[0]))]
    queue = list(sources)
    for s in sources:
        dist[s] = 0
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        for p in rev[u]:
            if dist[p] < 0:
                dist[p] = dist[u] + 1
                queue.append(p)
    return dist


def nav_shortest_cost(world: Neighborhood, start: tuple[int, int], goal: tuple[int, int],
                      goal_requires_heading: bool = True) -> int:
    """Minimum actions from start to goal; 0 when already there."""
    if goal_requires_heading and start == goal:
        return 0
    if not goal_requires_heading and start[0] == goal[0]:
        return 0
    d = distances_to_goal(world, goal, goal_requires_heading)[world.state_index(start)]
    if d < 0:
        raise ValueError(f"goal {goal} unreachable from {start}")
    return int(d)


class GraphNavEnv:
    """Stateful wrapper with the shared env protocol used by the trainer."""

    def __init__(self, config: GraphNavConfig | None = None):
        self.config = config or GraphNavConfig()
        self.world: Neighborhood | None = None
        self.state: NavState | None = None
        self._labels: np.ndarray | None = None
        self._rng: np.random.Generator | None = None
        self._dist_cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    @property
    def obs_vocab(self) -> int:
        return self.config.obs_vocab

    @property
    def episode_steps(self) -> int:
        return self.config.episode_steps

    def reset(self, rng: np.random.Generator, world: Neighborhood | None = None) -> Observation:
        self._rng = rng
        if world is None:
            city = synth_city(rng, self.config.city)
            world = sample_neighborhood(city, self.config.n_intersections, rng)
        self.world = world
        if world.n_states > self.config.obs_vocab:
            raise ValueError(
                f"obs_vocab {self.config.obs_vocab} too small for {world.n_states} states")
        self._labels = rng.permutation(self.config.obs_vocab)[: world.n_states]
        self._dist_cache = {}
        self.state = nav_new_task(world, rng)
        return self.observation()

    def step(self, action: int) -> StepOutcome:
        return nav_step(self.world, self.state, action,
                        episode_steps=self.config.episode_steps,
                        labels=self._labels, vocab=self.config.obs_vocab,
                        goal_requires_heading=self.config.goal_requires_heading)

    def new_task(self) -> Observation:
        keep_steps = self.state.steps_used
        keep_tasks = self.state.tasks_completed
        nav_new_task(self.world, self._rng, self.state)
        self.state.steps_used = keep_steps
        self.state.tasks_completed = keep_tasks
        return self.observation()

    def observation(self) -> Observation:
        return nav_observation(self.world, self.state, self._labels, self.config.obs_vocab)

    def goal_distances(self, goal: tuple[int, int]) -> np.ndarray:
        if goal not in self._dist_cache:
            self._dist_cache[goal] = distances_to_goal(
                self.world, goal, self.config.goal_requires_heading)
        return self._dist_cache[goal]

    def oracle_task_cost(self) -> int:
        return int(self.goal_distances(self.state.goal)[
            self.world.state_index((self.state.node, self.state.heading))])

    def fork(self, seed: int) -> "GraphNavEnv":
        other = GraphNavEnv(self.config)
        other.world = self.world
        other.state = NavState(node=self.state.node, heading=self.state.heading,
                               goal=self.state.goal, steps_used=self.state.steps_used,
                               tasks_completed=self.state.tasks_completed)
        other._labels = self._labels
        other._rng = np.random.default_rng(seed)
        other._dist_cache = dict(self._dist_cache)
        return other
