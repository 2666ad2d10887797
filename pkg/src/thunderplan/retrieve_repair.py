"""Retrieve and repair: recall a roadmap path and fix what the current
environment broke.

Recall works against a roadmap snapshot: connect the query endpoints to
nearby guards, A* over the graph, then validate the candidate's edges
against the *current* environment - obstacles were deliberately ignored
at insertion time. Invalid edges are disabled (per query only) and the
search repeats. If every candidate pair fails, the attempt with the
fewest invalid segments is repaired by running RRT-Connect across each
broken stretch.
"""

from __future__ import annotations

from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from .budget import PlannerBudget
from .cspace import GeometricPath, check_motion
from .environments import Environment, PlanningProblem
from .scratch import (CANCELED, NO_RECALL, SOLVED, TIMEOUT, PlanOutcome,
                      rrt_connect, smooth_path)
from .sparsdb import RoadmapSnapshot

RECALL_EXACT = "recall-exact"
RECALL_REPAIRED = "recall-repaired"

PAIR_CAP = 10  # candidate endpoint connections kept per side


@dataclass
class RetrievalResult:
    path: GeometricPath
    provenance: str                 # RECALL_EXACT | RECALL_REPAIRED
    disabled_edges: int = 0
    repair_segments: int = 0
    candidate_pairs_tried: int = 0


def connect_endpoints(q: np.ndarray, snap: RoadmapSnapshot, env: Environment,
                      budget: PlannerBudget | None = None,
                      cap: int = PAIR_CAP):
    """Guards within delta of q reachable by a straight env-valid motion.

    Returns (ids, distances) ascending by distance, at most cap entries;
    validation stops as soon as the cap is filled.
    """
    ids, dists = snap.nearest_within_delta(q)
    keep_ids, keep_d = [], []
    res = snap.space.collision_resolution
    for i, d in zip(ids, dists):
        if check_motion(q, snap.configs[int(i)], env.valid_mask, res, budget):
            keep_ids.append(int(i))
            keep_d.append(float(d))
            if len(keep_ids) >= cap:
                break
    return keep_ids, keep_d


def _edge_key(a: int, b: int):
    return (a, b) if a < b else (b, a)


def astar(snap: RoadmapSnapshot, src: int, dst: int, disabled: set):
    """A* over non-disabled edges; Euclidean heuristic, edge weight = length.

    Returns (node_ids, cost) or None. Deterministic: ties in f fall back
    to g and then node id.
    """
    goal_q = snap.configs[dst]
    h = np.sqrt(((snap.configs - goal_q) ** 2).sum(axis=1))
    g_best = {src: 0.0}
    came = {src: -1}
    heap = [(float(h[src]), 0.0, src)]
    closed = set()
    while heap:
        f, g, i = heappop(heap)
        if i in closed:
            continue
        if i == dst:
            chain = []
            while i != -1:
                chain.append(i)
                i = came[i]
            chain.reverse()
            return chain, g
        closed.add(i)
        for j, w in snap.neighbors(i).items():
            if j in closed or _edge_key(i, j) in disabled:
                continue
            ng = g + w
            if ng < g_best.get(j, np.inf):
                g_best[j] = ng
                came[j] = i
                heappush(heap, (ng + float(h[j]), ng, j))
    return None


class _EdgeValidator:
    """Per-query cache of edge validity against the current environment."""

    def __init__(self, snap: RoadmapSnapshot, env: Environment,
                 budget: PlannerBudget | None):
        self.snap = snap
        self.env = env
        self.budget = budget
        self.cache: dict = {}

    def valid(self, a: int, b: int) -> bool:
        key = _edge_key(a, b)
        hit = self.cache.get(key)
        if hit is None:
            hit = check_motion(self.snap.configs[a], self.snap.configs[b],
                               self.env.valid_mask,
                               self.snap.space.collision_resolution, self.budget)
            self.cache[key] = hit
        return hit


def lazy_search(snap: RoadmapSnapshot, src: int, dst: int,
                validator: _EdgeValidator, disabled: set,
                failed_candidates: list | None = None):
    """A* / validate / disable loop; returns a fully valid node path or None.

    Candidate paths that contained invalid edges are appended to
    failed_candidates as (invalid_count, cost, node_ids) for the repair
    fallback to pick over later.
    """
    while True:
        found = astar(snap, src, dst, disabled)
        if found is None:
            return None
        chain, cost = found
        bad = [(chain[k], chain[k + 1]) for k in range(len(chain) - 1)
               if not validator.valid(chain[k], chain[k + 1])]
        if not bad:
            return chain, cost
        for a, b in bad:
            disabled.add(_edge_key(a, b))
        if failed_candidates is not None:
            failed_candidates.append((len(bad), cost, chain))


def repair_waypoints(W: np.ndarray, seg_invalid: np.ndarray, env: Environment,
                     budget: PlannerBudget, rng: np.random.Generator):
    """Replace each maximal run of invalid segments with an RRT sub-plan.

    W is (N, d); seg_invalid is (N-1,) boolean. Every run must be flanked
    by env-valid waypoints (guaranteed when a segment is marked invalid
    whenever either endpoint is). Returns (waypoints, runs_repaired) or
    None when any sub-plan fails.
    """
    if not seg_invalid.any():
        return W, 0
    pieces = []
    runs = 0
    i = 0
    n_seg = seg_invalid.shape[0]
    while i < n_seg:
        if not seg_invalid[i]:
            pieces.append(W[i:i + 1])
            i += 1
            continue
        j = i
        while j < n_seg and seg_invalid[j]:
            j += 1
        # invalid run covers segments [i, j); flanks are W[i] and W[j]
        sub_problem = PlanningProblem(start=W[i], goal=W[j],
                                      environment_id=env.id,
                                      time_budget=1.0, seed=0)
        sub = rrt_connect(sub_problem, env, budget, rng)
        if not sub.solved:
            return None
        runs += 1
        pieces.append(sub.path.waypoints[:-1])
        i = j
    pieces.append(W[-1:])
    return np.vstack(pieces), runs


class RetrieveRepairPlanner:
    """The recall side of the race, bound to a live roadmap."""

    def __init__(self, roadmap, pair_cap: int = PAIR_CAP,
                 smoothing_rounds: int = 100):
        self.roadmap = roadmap
        self.pair_cap = pair_cap
        self.smoothing_rounds = smoothing_rounds

    def solve(self, problem: PlanningProblem, env: Environment,
              budget: PlannerBudget):
        """Returns (PlanOutcome, RetrievalResult | None)."""
        from .budget import BudgetExhausted, PlanningInterrupted
        try:
            result = retrieve(problem, self.roadmap.snapshot(), env, budget,
                              pair_cap=self.pair_cap,
                              smoothing_rounds=self.smoothing_rounds)
        except BudgetExhausted:
            return PlanOutcome(TIMEOUT), None
        except PlanningInterrupted:
            return PlanOutcome(CANCELED), None
        if result is None:
            return PlanOutcome(NO_RECALL), None
        return PlanOutcome(SOLVED, result.path), result


def retrieve(problem: PlanningProblem, snap: RoadmapSnapshot, env: Environment,
             budget: PlannerBudget | None = None, pair_cap: int = PAIR_CAP,
             smoothing_rounds: int = 100) -> RetrievalResult | None:
    """Full recall flow for one query against one roadmap snapshot.

    Candidate (start-guard, goal-guard) pairs are tried in ascending
    combined-connection-distance order. The first pair whose lazy search
    survives validation wins (recall-exact). If all pairs fail, the
    failed candidate with the fewest invalid segments - ties broken by
    shorter cost - is repaired (recall-repaired). Returns None when the
    database cannot help at all.
    """
    if snap.n_nodes == 0:
        return None
    if budget is None:
        budget = PlannerBudget()  # unlimited, never canceled
    rng = np.random.default_rng(np.random.SeedSequence((problem.seed, 0x4E7)))

    start_ids, start_d = connect_endpoints(problem.start, snap, env, budget, pair_cap)
    if not start_ids:
        return None
    goal_ids, goal_d = connect_endpoints(problem.goal, snap, env, budget, pair_cap)
    if not goal_ids:
        return None

    pairs = sorted(
        ((ds + dg, s, g)
         for s, ds in zip(start_ids, start_d)
         for g, dg in zip(goal_ids, goal_d)),
        key=lambda t: (t[0], t[1], t[2]))

    validator = _EdgeValidator(snap, env, budget)
    disabled: set = set()
    failed_candidates: list = []
    pairs_tried = 0

    start = np.asarray(problem.start, dtype=float)
    goal = np.asarray(problem.goal, dtype=float)

    def assemble(chain) -> GeometricPath:
        return GeometricPath(np.vstack([start[None, :], snap.configs[chain],
                                        goal[None, :]]))

    for _, s, g in pairs:
        if not snap.connected(s, g):
            continue
        pairs_tried += 1
        found = lazy_search(snap, s, g, validator, disabled, failed_candidates)
        if found is not None:
            chain, _cost = found
            path = smooth_path(assemble(chain), env, smoothing_rounds, rng, budget)
            return RetrievalResult(path, RECALL_EXACT,
                                   disabled_edges=len(disabled),
                                   candidate_pairs_tried=pairs_tried)

    if not failed_candidates:
        return None

    # repair fallback: fewest invalid segments, then cheapest
    failed_candidates.sort(key=lambda t: (t[0], t[1]))
    _, _, chain = failed_candidates[0]
    W = assemble(chain).waypoints
    if budget is not None:
        budget.charge(W.shape[0])
    wp_ok = env.valid_mask(W)
    seg_invalid = np.zeros(W.shape[0] - 1, dtype=bool)
    for k in range(W.shape[0] - 1):
        seg_invalid[k] = (not wp_ok[k]) or (not wp_ok[k + 1])
        if not seg_invalid[k]:
            if 0 < k < W.shape[0] - 2:
                seg_invalid[k] = not validator.valid(chain[k - 1], chain[k])
            else:
                # endpoint connections were validated by connect_endpoints
                seg_invalid[k] = False
    repaired = repair_waypoints(W, seg_invalid, env, budget, rng)
    if repaired is None:
        return None
    new_wp, runs = repaired
    path = smooth_path(GeometricPath(new_wp), env, smoothing_rounds, rng, budget)
    return RetrievalResult(path, RECALL_REPAIRED,
                           disabled_edges=len(disabled),
                           repair_segments=runs,
                           candidate_pairs_tried=pairs_tried)
