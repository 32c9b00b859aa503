import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import floyd_warshall

from epnlab.envs import (
    CityGraph,
    CityParams,
    GraphNavConfig,
    GraphNavEnv,
    IntersectionQuotaError,
    Neighborhood,
    apply_action,
    distances_to_goal,
    nav_new_task,
    nav_shortest_cost,
    nav_step,
    neighborhood_to_dot,
    neighborhood_to_jsonl,
    product_transitions,
    sample_neighborhood,
    shortest_task_cost,
    synth_city,
)
from epnlab.envs.graphnav import FORWARD, TURN_LEFT, TURN_RIGHT


def line_world(n=3):
    """Hand-built path graph on a line; bypasses the sampler's invariants."""
    coords = np.array([[float(i), 0.0] for i in range(n)])
    ordered = []
    for i in range(n):
        ns = [j for j in (i - 1, i + 1) if 0 <= j < n]
        ordered.append(sorted(ns, key=lambda j: (np.arctan2(0.0, j - i), j)))
    return Neighborhood(coords=coords, ordered_neighbors=ordered, n_intersections=0)


def cross_world():
    """One degree-4 hub with four leaves."""
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    ordered = [[1, 2, 3, 4], [0], [0], [0], [0]]
    # hub neighbors sorted by angle: 1 (0), 2 (pi/2), 3 (pi), 4 (-pi/2) -> ascending: 4,1,2,3
    ordered[0] = [4, 1, 2, 3]
    return Neighborhood(coords=coords, ordered_neighbors=ordered, n_intersections=1)


# ----------------------------------------------------------------- city gen


def test_full_lattice_when_nothing_deleted():
    city = synth_city(np.random.default_rng(0), CityParams(width=5, height=4,
                                                           edge_keep_prob=1.0, jitter=0.0))
    assert city.n_nodes == 20
    assert len(city.edges()) == 4 * (5 - 1) + 5 * (4 - 1)  # h*(w-1) + w*(h-1)
    np.testing.assert_array_equal(city.coords[1], [1.0, 0.0])


def test_city_always_connected():
    for seed in range(15):
        city = synth_city(np.random.default_rng(seed), CityParams(edge_keep_prob=0.5))
        assert city.is_connected()


def test_neighborhood_invariants():
    rng = np.random.default_rng(4)
    for _ in range(15):
        city = synth_city(rng)
        nb = sample_neighborhood(city, 5, rng)
        nb.validate()
        assert all(nb.degree(v) != 2 for v in range(nb.n_nodes))
        assert sum(1 for v in range(nb.n_nodes) if nb.degree(v) > 2) == 5


def test_cycle_city_has_no_intersections():
    n = 8
    coords = np.array([[np.cos(2 * np.pi * i / n), np.sin(2 * np.pi * i / n)] for i in range(n)])
    adj = [[(i - 1) % n, (i + 1) % n] for i in range(n)]
    city = CityGraph(coords=coords, adj=[sorted(a) for a in adj])
    with pytest.raises(IntersectionQuotaError):
        sample_neighborhood(city, 1, np.random.default_rng(0), max_tries=8)


def test_median_neighborhood_size_matches_reference():
    rng = np.random.default_rng(2024)
    sizes = [sample_neighborhood(synth_city(rng), 5, rng).n_nodes for _ in range(120)]
    assert 10 <= float(np.median(sizes)) <= 14


def test_state_count_and_task_formula():
    rng = np.random.default_rng(11)
    nb = sample_neighborhood(synth_city(rng), 5, rng)
    states = nb.states()
    # one state per directed edge slot
    assert len(states) == sum(nb.degree(v) for v in range(nb.n_nodes))
    assert len(states) == 2 * len(nb.edges())
    pairs = {(s, g) for s in states for g in states if s != g}
    assert len(pairs) == len(states) * (len(states) - 1)


# ----------------------------------------------------------------- stepping


def test_turns_are_noops_at_degree_one_node():
    w = line_world(3)
    assert apply_action(w, 0, 0, TURN_LEFT) == (0, 0)
    assert apply_action(w, 0, 0, TURN_RIGHT) == (0, 0)


def test_two_forwards_along_a_line_reach_goal():
    w = line_world(3)
    from epnlab.envs import NavState

    state = NavState(node=0, heading=0, goal=(2, 0))
    out1 = nav_step(w, state, FORWARD)
    assert out1.reward == 0 and (state.node, state.heading) == (1, 0)
    out2 = nav_step(w, state, FORWARD)
    assert out2.reward == 1 and out2.task_done
    assert state.steps_used == 2


def test_forward_at_line_end_turns_back():
    w = line_world(2)
    node, heading = apply_action(w, 0, 0, FORWARD)
    assert node == 1
    assert w.ordered_neighbors[1][heading] == 0  # faces back along the only edge


def test_four_right_turns_close_the_circle():
    w = cross_world()
    heading = 2
    for _ in range(4):
        _, heading = apply_action(w, 0, heading, TURN_RIGHT)
    assert heading == 2


def test_turn_left_then_right_restores_heading():
    rng = np.random.default_rng(5)
    nb = sample_neighborhood(synth_city(rng), 5, rng)
    for v in range(nb.n_nodes):
        for h in range(nb.degree(v)):
            n1, h1 = apply_action(nb, v, h, TURN_LEFT)
            n2, h2 = apply_action(nb, n1, h1, TURN_RIGHT)
            assert (n2, h2) == (v, h)


def test_forward_moves_to_adjacent_node_only():
    rng = np.random.default_rng(6)
    nb = sample_neighborhood(synth_city(rng), 5, rng)
    for v in range(nb.n_nodes):
        for h in range(nb.degree(v)):
            n2, h2 = apply_action(nb, v, h, FORWARD)
            assert n2 in nb.ordered_neighbors[v]
            assert 0 <= h2 < nb.degree(n2)


def test_new_task_start_differs_from_goal():
    rng = np.random.default_rng(7)
    nb = sample_neighborhood(synth_city(rng), 5, rng)
    for _ in range(200):
        s = nav_new_task(nb, rng)
        assert (s.node, s.heading) != s.goal


def test_new_task_covers_state_pairs_uniformly():
    from scipy import stats

    rng = np.random.default_rng(8)
    nb = sample_neighborhood(synth_city(rng), 5, rng)
    n = nb.n_states
    counts = np.zeros((n, n))
    draws = 10_000
    for _ in range(draws):
        s = nav_new_task(nb, rng)
        counts[nb.state_index((s.node, s.heading)), nb.state_index(s.goal)] += 1
    off_diag = counts[~np.eye(n, dtype=bool)]
    assert counts.trace() == 0
    p = stats.chisquare(off_diag).pvalue
    assert p > 1e-3


# -------------------------------------------------------------------- costs


def fw_oracle(nb):
    """Exhaustive Floyd–Warshall over the (node, heading) product graph."""
    nxt = product_transitions(nb)
    n = nxt.shape[0]
    rows, cols = [], []
    for k in range(n):
        for a in range(3):
            rows.append(k)
            cols.append(nxt[k, a])
    m = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return floyd_warshall(m, directed=True, unweighted=True)


def test_zero_cost_when_start_equals_goal():
    w = cross_world()
    assert nav_shortest_cost(w, (0, 1), (0, 1)) == 0


def test_shortest_cost_matches_floyd_warshall():
    rng = np.random.default_rng(12)
    for _ in range(25):
        nb = sample_neighborhood(synth_city(rng), int(rng.integers(5, 10)), rng)
        dist = fw_oracle(nb)
        states = nb.states()
        for _ in range(12):
            i, j = rng.integers(len(states), size=2)
            got = nav_shortest_cost(nb, states[int(i)], states[int(j)])
            assert got == int(dist[i, j])


def test_distances_to_goal_consistent_with_pointwise_cost():
    rng = np.random.default_rng(13)
    nb = sample_neighborhood(synth_city(rng), 6, rng)
    goal = nb.states()[3]
    d = distances_to_goal(nb, goal)
    for k, s in enumerate(nb.states()):
        assert d[k] == nav_shortest_cost(nb, s, goal)


def test_shortest_task_cost_dispatch():
    rng = np.random.default_rng(14)
    nb = sample_neighborhood(synth_city(rng), 5, rng)
    states = nb.states()
    assert shortest_task_cost(nb, states[0], states[1]) == nav_shortest_cost(nb, states[0], states[1])


# ------------------------------------------------------------------ exports


def test_jsonl_export_is_deterministic_given_seed():
    def build():
        rng = np.random.default_rng(77)
        return sample_neighborhood(synth_city(rng), 5, rng)

    assert neighborhood_to_jsonl(build()) == neighborhood_to_jsonl(build())


def test_dot_export_lists_all_nodes_and_edges():
    rng = np.random.default_rng(15)
    nb = sample_neighborhood(synth_city(rng), 5, rng)
    dot = neighborhood_to_dot(nb)
    assert dot.count(" -- ") == len(nb.edges())
    for v in range(nb.n_nodes):
        assert f"n{v} [" in dot


# -------------------------------------------------------------- env wrapper


def test_env_episode_protocol():
    env = GraphNavEnv(GraphNavConfig(episode_steps=25))
    rng = np.random.default_rng(3)
    env.reset(rng)
    assert env.n_actions == 3
    steps = 0
    while True:
        out = env.step(int(rng.integers(3)))
        steps += 1
        if out.episode_done:
            break
        if out.task_done:
            env.new_task()
    assert steps == 25
    assert env.state.steps_used == 25


def test_env_observation_relabeling_changes_across_episodes():
    env = GraphNavEnv()
    rng = np.random.default_rng(4)
    env.reset(rng)
    first = env._labels.copy()
    env.reset(rng)
    assert len(first) != len(env._labels) or not np.array_equal(first, env._labels)


def test_env_new_task_keeps_counters():
    env = GraphNavEnv(GraphNavConfig(episode_steps=50))
    rng = np.random.default_rng(5)
    env.reset(rng)
    env.step(TURN_LEFT)
    env.step(TURN_LEFT)
    env.new_task()
    assert env.state.steps_used == 2
    assert (env.state.node, env.state.heading) != env.state.goal
