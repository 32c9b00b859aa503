"""Environment families: the symbol-grid game and graph navigation."""

from .citygraph import (
    CityGraph,
    CityParams,
    Neighborhood,
    neighborhood_to_dot,
    neighborhood_to_jsonl,
    sample_neighborhood,
    synth_city,
)
from .common import (
    EpisodeOverError,
    IntersectionQuotaError,
    Observation,
    StepOutcome,
    TaskPendingError,
)
from .graphnav import (
    GraphNavConfig,
    GraphNavEnv,
    NavState,
    apply_action,
    distances_to_goal,
    forward_transition,
    nav_new_task,
    nav_observation,
    nav_shortest_cost,
    nav_step,
    product_transitions,
)
from .mpg import (
    MPGame,
    MPGameConfig,
    MPGameState,
    mp_new_task,
    mp_observation,
    mp_reset,
    mp_shortest_cost,
    mp_step,
    wrap_distance,
)
from . import graphnav, mpg


def shortest_task_cost(world, start, goal) -> int:
    """Optimal action count for a task in either domain.

    Grid game: toroidal move distance plus the collect action.
    Graph navigation: BFS over the (node, heading) product graph.
    """
    if isinstance(world, MPGameState):
        return mp_shortest_cost(world, start, goal)
    if isinstance(world, Neighborhood):
        return nav_shortest_cost(world, start, goal)
    raise TypeError(f"unsupported world type {type(world)!r}")


def make_env(domain: str, **kwargs):
    if domain == "mpg":
        return MPGame(MPGameConfig(**kwargs) if kwargs else None)
    if domain == "graphnav":
        return GraphNavEnv(GraphNavConfig(**kwargs) if kwargs else None)
    raise ValueError(f"unknown domain {domain!r}")
