"""The racing orchestrator: deterministic and threaded races, the
experience feedback queue, config parsing, and bookkeeping.

Race semantics are pinned with stub solvers whose unit spend is exact;
end-to-end flows run real planners on the point environments.
"""

import os
import threading
import time

import numpy as np
import pytest

from thunderplan.budget import (BudgetExhausted, PlannerBudget,
                                PlanningInterrupted, VIRTUAL_CHECK_RATE)
from thunderplan.cspace import GeometricPath
from thunderplan.environments import (POINT_SPACE, PlanningProblem,
                                      PointEnvironment, environment_by_id,
                                      random_problem)
from thunderplan.retrieve_repair import RECALL_EXACT, RetrievalResult
from thunderplan.scratch import (CANCELED, INVALID_QUERY, NO_RECALL, SOLVED,
                                 TIMEOUT, PlanOutcome)
from thunderplan.thunder import (SCRATCH, PlanResult, ThunderConfig,
                                 ThunderPlanner, race_deterministic,
                                 race_threaded)

RATE = 1000  # small virtual rate keeps stub unit math readable


def tiny_path():
    return GeometricPath(np.array([[0.1, 0.1], [0.9, 0.9]]))


def make_problem(budget_s=1.0, seed=5):
    return PlanningProblem(start=np.array([0.1, 0.1]),
                           goal=np.array([0.9, 0.9]),
                           environment_id="t-free",
                           time_budget=budget_s, seed=seed)


def stub_rr(units, solved=True, provenance=RECALL_EXACT):
    """Recall stub that spends exactly `units` and optionally solves."""
    def solve(budget):
        budget.charge(units)
        if solved:
            return (PlanOutcome(SOLVED, tiny_path()),
                    RetrievalResult(tiny_path(), provenance))
        return PlanOutcome(NO_RECALL), None
    return solve


def stub_pfs(units, status=SOLVED):
    def solve(budget):
        try:
            budget.charge(units)
        except BudgetExhausted:
            return PlanOutcome(TIMEOUT)
        if status == SOLVED:
            return PlanOutcome(SOLVED, tiny_path())
        return PlanOutcome(status)
    return solve


# ------------------------------------------------------- deterministic race

def test_race_scratch_wins_when_strictly_cheaper():
    result = race_deterministic(stub_rr(100), stub_pfs(50),
                                make_problem(1.0), RATE)
    assert result.solver == SCRATCH
    assert result.solved
    assert result.wall_time == pytest.approx(50 / RATE)
    assert result.units_scratch == 50
    assert result.units_recall == 100


def test_race_tie_goes_to_recall():
    # scratch finishing in exactly recall's time must not displace it
    def pfs(budget):
        budget.charge(100)
        return PlanOutcome(SOLVED, tiny_path())
    result = race_deterministic(stub_rr(100), pfs, make_problem(1.0), RATE)
    assert result.solver == RECALL_EXACT
    assert result.wall_time == pytest.approx(100 / RATE)
    assert result.retrieval is not None


def test_race_scratch_capped_at_recall_spend():
    seen = {}
    def pfs(budget):
        seen["cap"] = budget.unit_cap
        budget.charge(budget.unit_cap)   # grinds to the deadline, no solve
        return PlanOutcome(TIMEOUT)
    result = race_deterministic(stub_rr(100), pfs, make_problem(1.0), RATE)
    assert seen["cap"] == 100            # not the full 1000-unit budget
    assert result.solver == RECALL_EXACT


def test_race_recall_failure_gives_scratch_the_full_cap():
    seen = {}
    def pfs(budget):
        seen["cap"] = budget.unit_cap
        budget.charge(500)
        return PlanOutcome(SOLVED, tiny_path())
    result = race_deterministic(stub_rr(30, solved=False), pfs,
                                make_problem(1.0), RATE)
    assert seen["cap"] == 1000
    assert result.solver == SCRATCH
    assert result.wall_time == pytest.approx(500 / RATE)


def test_race_both_fail_is_timeout_at_full_budget():
    result = race_deterministic(stub_rr(40, solved=False),
                                stub_pfs(60, status=TIMEOUT),
                                make_problem(1.0), RATE)
    assert result.status == TIMEOUT
    assert result.solver is None
    assert result.path is None
    assert result.wall_time == pytest.approx(1.0)


def test_race_invalid_query_passes_through():
    result = race_deterministic(stub_rr(5, solved=False),
                                stub_pfs(2, status=INVALID_QUERY),
                                make_problem(1.0), RATE)
    assert result.status == INVALID_QUERY


def test_race_wall_time_clamped_to_budget():
    # an interrupted smoothing pass can overshoot the cap with one bulk
    # charge yet still report a path; the clock must read the deadline
    def rr(budget):
        try:
            budget.charge(990)
            budget.charge(50)
        except BudgetExhausted:
            pass
        return (PlanOutcome(SOLVED, tiny_path()),
                RetrievalResult(tiny_path(), RECALL_EXACT))
    def pfs(budget):
        budget.charge(budget.unit_cap)
        return PlanOutcome(TIMEOUT)
    result = race_deterministic(rr, pfs, make_problem(1.0), RATE)
    assert result.solver == RECALL_EXACT
    assert result.units_recall == 1040
    assert result.wall_time == pytest.approx(1.0)


def test_race_provenance_survives_to_result():
    result = race_deterministic(stub_rr(10, provenance="recall-repaired"),
                                stub_pfs(999, status=TIMEOUT),
                                make_problem(1.0), RATE)
    assert result.solver == "recall-repaired"
    assert result.recalled
    assert result.retrieval.provenance == "recall-repaired"


# ------------------------------------------------------------ threaded race

def test_threaded_winner_cancels_loser():
    canceled = threading.Event()
    def rr(budget):
        budget.charge(3)
        return (PlanOutcome(SOLVED, tiny_path()),
                RetrievalResult(tiny_path(), RECALL_EXACT))
    def pfs(budget):
        try:
            while True:
                budget.charge(1)
                time.sleep(0.001)
        except PlanningInterrupted:
            canceled.set()
            return PlanOutcome(CANCELED)
    t0 = time.perf_counter()
    result = race_threaded(rr, pfs, make_problem(30.0), VIRTUAL_CHECK_RATE)
    elapsed = time.perf_counter() - t0
    assert result.solver == RECALL_EXACT
    assert canceled.is_set()
    assert elapsed < 5.0


def test_threaded_both_fail_is_timeout():
    def rr(budget):
        return PlanOutcome(NO_RECALL), None
    def pfs(budget):
        return PlanOutcome(TIMEOUT)
    result = race_threaded(rr, pfs, make_problem(1.0), VIRTUAL_CHECK_RATE)
    assert result.status == TIMEOUT
    assert result.solver is None


# ------------------------------------------------------------ config parsing

def test_config_from_file(tmp_path):
    p = tmp_path / "thunder.cfg"
    p.write_text("# race tuning\n"
                 "delta_fraction = 0.2\n"
                 "stretch = 1.5\n\n"
                 "queue_capacity = 8   # small queue\n"
                 "deterministic = false\n"
                 "seed = 3\n")
    cfg = ThunderConfig.from_file(str(p))
    assert cfg.delta_fraction == 0.2
    assert cfg.stretch == 1.5
    assert cfg.queue_capacity == 8
    assert cfg.deterministic is False
    assert cfg.seed == 3
    assert cfg.pair_cap == 10            # untouched default


def test_config_file_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("delta_fraction = 0.2\nwarp_speed = 9\n")
    with pytest.raises(ValueError, match=r"bad\.cfg:2: unknown key"):
        ThunderConfig.from_file(str(p))


def test_config_file_missing_equals(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("just some words\n")
    with pytest.raises(ValueError, match=r"bad\.cfg:1: expected"):
        ThunderConfig.from_file(str(p))


def test_config_validation():
    with pytest.raises(ValueError):
        ThunderConfig(delta_fraction=0.0)
    with pytest.raises(ValueError):
        ThunderConfig(stretch=1.0)


def test_config_with_overrides_skips_none():
    cfg = ThunderConfig().with_overrides(seed=9, stretch=None)
    assert cfg.seed == 9
    assert cfg.stretch == 1.2


# --------------------------------------------------------------- end to end

def open_planner(**cfg_kwargs):
    env = environment_by_id("pt-open")
    cfg = ThunderConfig(**cfg_kwargs)
    return ThunderPlanner([env], cfg), env


def test_cold_database_solves_from_scratch():
    planner, env = open_planner()
    try:
        result = planner.solve(random_problem(env, seed=11, time_budget=4.0))
        assert result.solved
        assert result.solver == SCRATCH
        assert result.units_recall < 5    # empty db: recall gave up instantly
    finally:
        planner.close()


def test_experience_round_trip_switches_to_recall():
    # use the maze: recall beats a from-scratch search there, whereas in
    # an open world a two-waypoint straight solve can win the race
    env = environment_by_id("pt-narrow")
    planner = ThunderPlanner([env], ThunderConfig())
    try:
        prob = random_problem(env, seed=13, time_budget=4.0)
        first = planner.solve(prob)
        assert first.solver == SCRATCH
        assert planner.submit_experience(first)
        planner.drain()
        assert planner.roadmap.n_nodes > 0
        second = planner.solve(prob)
        assert second.solved
        assert second.recalled
        assert second.retrieval is not None
    finally:
        planner.close()


def test_submit_rejects_non_scratch_results():
    planner, env = open_planner()
    try:
        prob = random_problem(env, seed=13, time_budget=4.0)
        recalled = PlanResult(SOLVED, RECALL_EXACT, tiny_path(), 0.1, prob)
        unsolved = PlanResult(TIMEOUT, None, None, 4.0, prob)
        assert not planner.submit_experience(recalled)
        assert not planner.submit_experience(unsolved)
        planner.drain()
        assert planner.roadmap.n_nodes == 0
    finally:
        planner.close()


def test_duplicate_insertion_adds_almost_nothing():
    planner, env = open_planner()
    try:
        prob = random_problem(env, seed=14, time_budget=4.0)
        first = planner.solve(prob)
        planner.submit_experience(first)
        planner.drain()
        before = planner.roadmap.n_nodes
        planner.submit_experience(first)
        planner.drain()
        after = planner.roadmap.n_nodes
        # the roadmap already covers this path; a rerun is nearly a no-op
        assert after - before <= 2
    finally:
        planner.close()


def test_unknown_environment_raises_with_known_ids():
    planner, _env = open_planner()
    try:
        prob = PlanningProblem(start=np.array([0.1, 0.1]),
                               goal=np.array([0.9, 0.9]),
                               environment_id="pt-nowhere",
                               time_budget=1.0, seed=0)
        with pytest.raises(KeyError, match="pt-open"):
            planner.solve(prob)
    finally:
        planner.close()


def test_stats_reconcile_with_activity():
    planner, env = open_planner()
    try:
        solved = 0
        for seed in (21, 22, 23):
            r = planner.solve(random_problem(env, seed=seed, time_budget=4.0))
            if r.solved and planner.submit_experience(r):
                solved += 1
        planner.drain()
        stats = planner.snapshot_stats()
        assert sum(stats["solve_counts"].values()) == 3
        assert stats["insertions"] == solved
        assert stats["queue_depth"] == 0
        assert stats["nodes"] == planner.roadmap.n_nodes
        assert stats["db_bytes"] > 0
        assert len(planner.insertion_reports) == solved
    finally:
        planner.close()


def test_queue_drops_oldest_when_full():
    planner, env = open_planner(queue_capacity=2)
    planner.close()                      # stop the consumer first
    prob = random_problem(env, seed=15, time_budget=4.0)
    r = PlanResult(SOLVED, SCRATCH, tiny_path(), 0.1, prob)
    for _ in range(3):
        assert planner.submit_experience(r)
    stats = planner.snapshot_stats()
    assert stats["queue_depth"] == 2
    assert stats["dropped"] == 1


def test_threaded_mode_end_to_end():
    planner, env = open_planner(deterministic=False)
    try:
        prob = random_problem(env, seed=16, time_budget=10.0)
        first = planner.solve(prob)
        assert first.solved
        assert first.solver == SCRATCH
        planner.submit_experience(first)
        planner.drain()
        second = planner.solve(prob)
        assert second.solved
        assert second.wall_time >= 0.0
    finally:
        planner.close()


def test_close_stops_background_worker():
    planner, _env = open_planner()
    worker = planner._worker
    assert worker.is_alive()
    planner.close()
    assert not worker.is_alive()


def test_solve_during_background_insertion_makes_progress():
    # a big queued insertion must not starve concurrent queries
    planner, env = open_planner()
    try:
        for seed in (31, 32):
            r = planner.solve(random_problem(env, seed=seed, time_budget=4.0))
            if r.solved:
                planner.submit_experience(r)
        result = planner.solve(random_problem(env, seed=33, time_budget=4.0))
        assert result.solved
        planner.drain()
    finally:
        planner.close()
