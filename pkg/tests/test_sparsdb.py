"""Sparse roadmap experience database: insertion criteria, guard spacing,
visibility, nearest-neighbor queries, and the THDR binary format.

Criterion tests build small constructed roadmaps where the expected
outcome is hand-derivable; query tests compare against brute-force scan
oracles.
"""

import math
import os

import numpy as np
import pytest

from thunderplan.budget import PlannerBudget
from thunderplan.cspace import GeometricPath, check_motion
from thunderplan.environments import (ARM_SPACE, POINT_SPACE, ArmEnvironment,
                                      environment_by_id, random_problem)
from thunderplan.scratch import ScratchPlanner
from thunderplan.sparsdb import (CONNECTIVITY, COVERAGE, GUARD_TYPES, INTERFACE,
                                 QUALITY, REJECTED, RoadmapFormatError,
                                 SparseRoadmap, load_roadmap, roadmap_for,
                                 save_roadmap, serialized_size,
                                 spacing_parameters, text_dump)


def unit_square_roadmap(delta=0.15):
    """Roadmap over the unit square with a bounds-only invariant."""
    return SparseRoadmap(POINT_SPACE, lambda Q: np.ones(Q.shape[0], dtype=bool),
                         delta=delta)


# ------------------------------------------------------- spacing parameters

def test_spacing_direct_arithmetic():
    n, f = spacing_parameters(1.0, 0.1)
    assert n == 10
    assert f == pytest.approx(1.0)


def test_spacing_degenerate_short_path():
    n, f = spacing_parameters(0.05, 0.1)
    assert n == 0
    assert math.isnan(f)


def test_spacing_factor_in_range_random():
    rng = np.random.default_rng(20)
    for _ in range(1000):
        delta = float(rng.uniform(0.01, 1.0))
        length = float(rng.uniform(delta, 100.0))
        n, f = spacing_parameters(length, delta)
        assert n == int(length // delta)
        assert 1.0 - 1e-9 <= f < 2.0
        # n guards at spacing f*delta exactly cover the arc
        assert n * f * delta == pytest.approx(length, rel=1e-9)


def test_spacing_rejects_bad_inputs():
    with pytest.raises(ValueError):
        spacing_parameters(-1.0, 0.1)
    with pytest.raises(ValueError):
        spacing_parameters(1.0, 0.0)


# ---------------------------------------------------------------- visibility

def test_visible_identity():
    rm = unit_square_roadmap()
    q = np.array([0.5, 0.5])
    assert rm.visible(q, q)


def test_visible_radius_bound():
    rm = unit_square_roadmap(delta=0.2)
    a = np.array([0.2, 0.5])
    b = np.array([0.5, 0.5])  # distance 0.3 = 1.5 * delta
    assert not rm.visible(a, b)


def test_visible_matches_motion_oracle_across_invariant_band():
    """Pairs straddling an arm self-collision region: visible() must agree
    with a direct motion check of the invariant predicate."""
    env = ArmEnvironment("t-arm", ARM_SPACE, [])
    rm = roadmap_for(env)
    rng = np.random.default_rng(21)
    checked = 0
    disagreements = 0
    while checked < 60:
        a = rng.uniform(-math.pi, math.pi, size=4)
        b = a + rng.uniform(-0.5, 0.5, size=4) * rm.delta
        b = env.space.clip(b)
        if np.linalg.norm(a - b) > rm.delta:
            continue
        checked += 1
        want = check_motion(a, b, env.invariant_mask,
                            env.space.collision_resolution)
        if rm.visible(a, b) != want:
            disagreements += 1
    assert disagreements == 0


# --------------------------------------------------------- insertion criteria

def test_empty_roadmap_adds_coverage():
    rm = unit_square_roadmap()
    outcome, node, edges = rm.try_add_state(np.array([0.5, 0.5]))
    assert outcome == COVERAGE
    assert node == 0
    assert edges == []
    assert rm.n_nodes == 1 and rm.n_edges == 0


def test_covered_state_rejected():
    rm = unit_square_roadmap(delta=0.15)
    rm.try_add_state(np.array([0.5, 0.5]))
    outcome, node, edges = rm.try_add_state(np.array([0.55, 0.5]))
    assert outcome == REJECTED
    assert node == -1 and edges == []
    assert rm.n_nodes == 1


def test_connectivity_bridges_two_components():
    rm = unit_square_roadmap(delta=0.15)
    rm.try_add_state(np.array([0.4, 0.5]))   # component A
    rm.try_add_state(np.array([0.66, 0.5]))  # component B (0.26 apart)
    assert rm.n_components == 2
    outcome, node, edges = rm.try_add_state(np.array([0.53, 0.5]))
    assert outcome == CONNECTIVITY
    assert len(edges) == 2
    assert rm.n_components == 1
    assert rm.n_edges == 2


def test_connectivity_connects_closest_per_component():
    rm = unit_square_roadmap(delta=0.15)
    u1 = rm._add_node(np.array([0.45, 0.50]), COVERAGE)  # comp A, closest
    u2 = rm._add_node(np.array([0.45, 0.58]), COVERAGE)  # comp A, farther
    rm._add_edge(u1, u2)
    v = rm._add_node(np.array([0.67, 0.50]), COVERAGE)   # comp B
    q = np.array([0.55, 0.50])  # sees u1 (0.10), v (0.12), u2 (0.128)
    outcome, node, edges = rm.try_add_state(q)
    assert outcome == CONNECTIVITY
    assert rm.n_components == 1
    # each edge lands on the nearest member of its component
    assert sorted(b for _a, b in edges) == [u1, v]


def test_interface_adds_edge_when_guards_mutually_visible():
    rm = unit_square_roadmap(delta=0.15)
    u = rm._add_node(np.array([0.45, 0.5]), COVERAGE)
    v = rm._add_node(np.array([0.55, 0.5]), COVERAGE)
    rm._components.merge(u, v)  # same component, no edge yet
    outcome, node, edges = rm.try_add_state(np.array([0.5, 0.45]))
    assert outcome == REJECTED
    assert node == -1
    assert edges == [(u, v)]
    assert v in rm.neighbors(u)
    assert rm.n_nodes == 2  # q itself was not added


def test_interface_guard_when_guards_not_mutually_visible():
    rm = unit_square_roadmap(delta=0.15)
    u = rm._add_node(np.array([0.40, 0.5]), COVERAGE)
    v = rm._add_node(np.array([0.60, 0.5]), COVERAGE)  # 0.2 apart > delta
    rm._components.merge(u, v)
    q = np.array([0.5, 0.5])  # sees both (0.1 each)
    outcome, node, edges = rm.try_add_state(q)
    assert outcome == INTERFACE
    assert sorted(edges) == [(node, u), (node, v)]
    assert rm.n_edges == 2


def test_quality_guard_on_long_detour():
    rm = unit_square_roadmap(delta=0.15)
    v = rm._add_node(np.array([0.55, 0.50]), COVERAGE)   # nearest to q
    u = rm._add_node(np.array([0.38, 0.50]), COVERAGE)
    w = rm._add_node(np.array([0.50, 0.64]), COVERAGE)
    c1 = rm._add_node(np.array([0.50, 0.95]), COVERAGE)
    c2 = rm._add_node(np.array([0.05, 0.95]), COVERAGE)
    rm._add_edge(u, v)          # nearest two guards share an edge
    rm._add_edge(w, c1)         # w reaches u only through a long chain
    rm._add_edge(c1, c2)
    rm._add_edge(c2, u)
    q = np.array([0.50, 0.50])
    # the pair (u, w) is farther apart than delta, has no edge, and its
    # only roadmap path is the long chain: a textbook quality shortcut
    d_uw = float(np.linalg.norm(rm.configs[u] - rm.configs[w]))
    assert d_uw > rm.delta
    outcome, node, edges = rm.try_add_state(q)
    assert outcome == QUALITY
    assert sorted(b for _a, b in edges) == [u, w]
    assert rm.n_edges == 6


def test_try_add_state_rejects_invariant_violation():
    env = ArmEnvironment("t-arm", ARM_SPACE, [])
    rm = roadmap_for(env)
    q = np.zeros(4)  # stretched flat: fails the balance constraint
    assert not env.invariant_mask(q[None, :])[0]
    with pytest.raises(ValueError):
        rm.try_add_state(q)


def test_saturation_acceptance_probability_drops():
    # feed uniform random states; the acceptance rate must collapse once
    # the square is covered and the quality shortfalls are patched
    rm = unit_square_roadmap(delta=0.15)
    rng = np.random.default_rng(22)
    total = 2000
    added_first = added_last = 0
    for k in range(total):
        outcome, _, _ = rm.try_add_state(rng.uniform(0, 1, size=2))
        if outcome != REJECTED:
            if k < 500:
                added_first += 1
            elif k >= total - 500:
                added_last += 1
    assert added_last < added_first / 5
    assert added_last <= 20


# ------------------------------------------------------- nearest-within-delta

def test_nearest_empty_roadmap():
    rm = unit_square_roadmap()
    ids, dists = rm.nearest_within_delta(np.array([0.5, 0.5]))
    assert ids.size == 0 and dists.size == 0


def test_nearest_single_node_in_radius():
    rm = unit_square_roadmap(delta=0.2)
    rm.try_add_state(np.array([0.5, 0.5]))
    ids, dists = rm.nearest_within_delta(np.array([0.5, 0.6]))
    assert ids.tolist() == [0]
    assert dists[0] == pytest.approx(0.1)


def test_nearest_matches_linear_scan_oracle():
    rm = unit_square_roadmap(delta=0.12)
    rng = np.random.default_rng(23)
    configs = rng.uniform(0, 1, size=(1000, 2))
    for q in configs:
        rm._add_node(q, COVERAGE)
    for _ in range(50):
        q = rng.uniform(0, 1, size=2)
        ids, dists = rm.nearest_within_delta(q)
        # brute force with plain python
        want = []
        for i in range(1000):
            d = math.dist(q, configs[i])
            if d <= rm.delta:
                want.append((d, i))
        want.sort()
        assert ids.tolist() == [i for _d, i in want]
        assert np.allclose(dists, [d for d, _i in want])


# --------------------------------------------------------- path insertion

def test_straight_path_alternating_chain():
    rm = unit_square_roadmap(delta=0.1)
    # length 1.05 makes f = 1.05: consecutive stations are beyond delta
    path = GeometricPath(np.array([[0.0, 0.5], [1.05 / math.sqrt(2), 0.5]]))
    # keep it in bounds: use a diagonal instead
    path = GeometricPath(np.array([[0.05, 0.05],
                                   [0.05 + 1.05 / math.sqrt(2),
                                    0.05 + 1.05 / math.sqrt(2)]]))
    report = rm.insert_experience_path(path, np.random.default_rng(24))
    assert report.start_goal_connected
    assert rm.n_components == 1
    assert report.guards_added[COVERAGE] == 11
    assert report.guards_added[CONNECTIVITY] == 10
    assert report.edges_added >= 20
    # phase-one stations are spaced f*delta apart
    spacing = np.linalg.norm(np.diff(report.candidates["spacing"], axis=0), axis=1)
    n, f = spacing_parameters(path.length, rm.delta)
    assert np.allclose(spacing, f * rm.delta, rtol=1e-9)
    assert report.candidates["midpoints"].shape[0] == n


def test_naive_in_order_insertion_disconnects():
    rm = unit_square_roadmap(delta=0.1)
    path = GeometricPath(np.array([[0.05, 0.05],
                                   [0.05 + 1.05 / math.sqrt(2),
                                    0.05 + 1.05 / math.sqrt(2)]]))
    report = rm.insert_experience_path(path, np.random.default_rng(25),
                                       naive_in_order=True)
    assert not report.start_goal_connected
    assert rm.n_components >= 2
    assert rm.n_edges == 0
    assert report.edges_added == 0


def test_short_path_inserts_endpoints_only():
    rm = unit_square_roadmap(delta=0.2)
    path = GeometricPath(np.array([[0.50, 0.5], [0.55, 0.5]]))  # l < delta
    report = rm.insert_experience_path(path, np.random.default_rng(26))
    assert report.states_attempted == 2
    assert rm.n_nodes == 1  # second endpoint covered by the first


def test_insertion_report_counters_consistent():
    rm = unit_square_roadmap(delta=0.1)
    rng = np.random.default_rng(27)
    env = environment_by_id("pt-open")
    for seed in range(5):
        prob = random_problem(env, seed=seed, time_budget=10.0)
        out = ScratchPlanner().solve(prob, env, PlannerBudget(500_000))
        assert out.solved
        report = rm.insert_experience_path(out.path, rng)
        assert report.total_guards_added <= report.states_attempted
        assert report.edges_added >= 0
        assert all(v >= 0 for v in report.guards_added.values())


def test_insertion_budget_charged():
    rm = unit_square_roadmap(delta=0.1)
    budget = PlannerBudget()
    path = GeometricPath(np.array([[0.1, 0.1], [0.9, 0.9]]))
    rm.insert_experience_path(path, np.random.default_rng(28), budget=budget)
    assert budget.used > 0


# --------------------------------------------------- structural invariants

def build_arm_roadmap(n_problems=2):
    env = environment_by_id("arm-free")
    rm = roadmap_for(env)
    sp = ScratchPlanner()
    rng = np.random.default_rng(29)
    for seed in range(n_problems):
        prob = random_problem(env, seed=seed, time_budget=10.0)
        out = sp.solve(prob, env, PlannerBudget(500_000))
        assert out.solved
        rm.insert_experience_path(out.path, rng)
    return env, rm

def test_edges_satisfy_invariant_predicate():
    env, rm = build_arm_roadmap()
    assert rm.n_edges > 0
    for a, b, w in rm.edges():
        assert check_motion(rm.configs[a], rm.configs[b], env.invariant_mask,
                            env.space.collision_resolution)


def test_edge_weights_equal_distance():
    env, rm = build_arm_roadmap()
    for a, b, w in rm.edges():
        assert w == pytest.approx(
            float(np.linalg.norm(rm.configs[a] - rm.configs[b])), rel=1e-9)


def test_component_tracker_matches_bfs_oracle():
    rm = unit_square_roadmap(delta=0.13)
    rng = np.random.default_rng(30)
    for _ in range(300):
        rm.try_add_state(rng.uniform(0, 1, size=2))

    # breadth-first reachability oracle over the adjacency dict
    def reachable(src, dst):
        seen = {src}
        frontier = [src]
        while frontier:
            nxt = []
            for i in frontier:
                for j in rm.neighbors(i):
                    if j not in seen:
                        seen.add(j)
                        nxt.append(j)
            frontier = nxt
        return dst in seen

    for _ in range(40):
        a, b = rng.integers(0, rm.n_nodes, size=2)
        assert rm.connected(int(a), int(b)) == reachable(int(a), int(b))


def test_snapshot_is_immutable_under_writes():
    rm = unit_square_roadmap(delta=0.15)
    rm.try_add_state(np.array([0.2, 0.2]))
    snap = rm.snapshot()
    n_before = snap.n_nodes
    adj_before = {i: dict(v) for i, v in snap.adj.items()}
    rng = np.random.default_rng(31)
    for _ in range(100):
        rm.try_add_state(rng.uniform(0, 1, size=2))
    assert snap.n_nodes == n_before
    assert snap.adj == adj_before
    assert rm.n_nodes > n_before


def test_snapshot_nearest_matches_live_roadmap():
    rm = unit_square_roadmap(delta=0.12)
    rng = np.random.default_rng(32)
    for _ in range(200):
        rm.try_add_state(rng.uniform(0, 1, size=2))
    snap = rm.snapshot()
    for _ in range(20):
        q = rng.uniform(0, 1, size=2)
        ids_live, d_live = rm.nearest_within_delta(q)
        ids_snap, d_snap = snap.nearest_within_delta(q)
        assert np.array_equal(ids_live, ids_snap)
        assert np.allclose(d_live, d_snap)


# ------------------------------------------------------------- persistence

def test_empty_roadmap_round_trip(tmp_path):
    rm = unit_square_roadmap(delta=0.15)
    f = str(tmp_path / "empty.thdr")
    written = save_roadmap(rm, f)
    assert written == os.path.getsize(f)
    back = load_roadmap(f, POINT_SPACE, rm.invariant_mask)
    assert back.n_nodes == 0 and back.n_edges == 0
    assert back.delta == rm.delta and back.stretch == rm.stretch


def test_round_trip_preserves_graph(tmp_path):
    rm = unit_square_roadmap(delta=0.12)
    rng = np.random.default_rng(33)
    while rm.n_nodes < 100:
        rm.try_add_state(rng.uniform(0, 1, size=2))
    f = str(tmp_path / "hundred.thdr")
    written = save_roadmap(rm, f)
    assert written == os.path.getsize(f)
    assert written == serialized_size(rm.n_nodes, rm.n_edges, 2)

    back = load_roadmap(f, POINT_SPACE, rm.invariant_mask)
    assert back.n_nodes == rm.n_nodes
    assert back.n_edges == rm.n_edges
    assert np.allclose(back.configs, rm.configs)
    assert np.array_equal(back.types, rm.types)
    assert sorted((a, b) for a, b, _ in back.edges()) == \
        sorted((a, b) for a, b, _ in rm.edges())
    assert text_dump(back) == text_dump(rm)


def test_load_rejects_bad_magic(tmp_path):
    f = tmp_path / "junk.thdr"
    f.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(RoadmapFormatError, match="magic"):
        load_roadmap(str(f), POINT_SPACE, lambda Q: np.ones(Q.shape[0], bool))


def test_load_rejects_bad_version(tmp_path):
    rm = unit_square_roadmap()
    f = tmp_path / "v9.thdr"
    save_roadmap(rm, str(f))
    blob = bytearray(f.read_bytes())
    blob[4] = 9  # bump the little-endian version field
    f.write_bytes(bytes(blob))
    with pytest.raises(RoadmapFormatError, match="version"):
        load_roadmap(str(f), POINT_SPACE, rm.invariant_mask)


def test_load_rejects_truncation(tmp_path):
    rm = unit_square_roadmap(delta=0.15)
    rng = np.random.default_rng(34)
    for _ in range(30):
        rm.try_add_state(rng.uniform(0, 1, size=2))
    f = tmp_path / "cut.thdr"
    save_roadmap(rm, str(f))
    blob = f.read_bytes()
    f.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(RoadmapFormatError, match="truncated"):
        load_roadmap(str(f), POINT_SPACE, rm.invariant_mask)


def test_load_rejects_dimension_mismatch(tmp_path):
    rm = unit_square_roadmap()
    f = str(tmp_path / "dim2.thdr")
    save_roadmap(rm, f)
    with pytest.raises(RoadmapFormatError, match="dimension"):
        load_roadmap(f, ARM_SPACE, lambda Q: np.ones(Q.shape[0], bool))


def test_text_dump_has_one_line_per_element():
    rm = unit_square_roadmap(delta=0.15)
    rng = np.random.default_rng(35)
    for _ in range(50):
        rm.try_add_state(rng.uniform(0, 1, size=2))
    dump = text_dump(rm)
    lines = dump.strip().split("\n")
    node_lines = [l for l in lines if l.startswith("node ")]
    edge_lines = [l for l in lines if l.startswith("edge ")]
    assert len(node_lines) == rm.n_nodes
    assert len(edge_lines) == rm.n_edges
    for line in node_lines:
        assert line.split()[2] in GUARD_TYPES
