"""Plan-from-scratch: bidirectional RRT-Connect plus shortcut smoothing.

This is the fallback planner in the race - no prior experience, just two
trees grown toward each other with a greedy connect heuristic. All
collision effort passes through the shared budget, so a race can meter
and cancel it deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .budget import BudgetExhausted, PlannerBudget, PlanningInterrupted
from .cspace import GeometricPath, check_motion, distance
from .environments import Environment, PlanningProblem

# Tree extension step, as a multiple of the collision resolution: the
# planner explores at the same granularity it validates.
STEP_RESOLUTION_FACTOR = 5.0

SOLVED = "solved"
TIMEOUT = "timeout"
CANCELED = "canceled"
INVALID_QUERY = "invalid-query"
NO_RECALL = "no-recall"  # recall side only: the database cannot help


@dataclass
class PlanOutcome:
    status: str
    path: GeometricPath | None = None
    iterations: int = 0

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


class _Tree:
    """Append-only RRT tree over a growing numpy buffer."""

    def __init__(self, root: np.ndarray, capacity: int = 256):
        d = root.shape[0]
        self.q = np.empty((capacity, d))
        self.parent = np.empty(capacity, dtype=np.int64)
        self.q[0] = root
        self.parent[0] = -1
        self.n = 1

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.n == self.q.shape[0]:
            self.q = np.vstack([self.q, np.empty_like(self.q)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.q[self.n] = q
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def nearest(self, q: np.ndarray) -> int:
        diffs = self.q[:self.n] - q
        return int(np.argmin((diffs**2).sum(axis=1)))

    def chain(self, i: int):
        """Configurations from the root to node i, in that order."""
        out = []
        while i >= 0:
            out.append(self.q[i].copy())
            i = int(self.parent[i])
        out.reverse()
        return out


_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


def _extend(tree: _Tree, target: np.ndarray, env: Environment,
            budget: PlannerBudget, step: float):
    i = tree.nearest(target)
    qn = tree.q[i]
    d = distance(qn, target)
    if d <= step:
        q_new, reached = target, True
    else:
        q_new, reached = qn + (step / d) * (target - qn), False
    if check_motion(qn, q_new, env.valid_mask, env.space.collision_resolution, budget):
        idx = tree.add(q_new, i)
        return (_REACHED if reached else _ADVANCED), idx
    return _TRAPPED, -1


def _connect(tree: _Tree, target: np.ndarray, env: Environment,
             budget: PlannerBudget, step: float):
    while True:
        status, idx = _extend(tree, target, env, budget, step)
        if status != _ADVANCED:
            return status, idx


def rrt_connect(problem: PlanningProblem, env: Environment, budget: PlannerBudget,
                rng: np.random.Generator, step: float | None = None) -> PlanOutcome:
    """Bidirectional RRT-Connect; deterministic for a fixed rng state.

    The budget meters every collision check and carries the cancel
    signal; exhaustion reports timeout, cancellation reports canceled.
    """
    start = np.asarray(problem.start, dtype=float)
    goal = np.asarray(problem.goal, dtype=float)
    if step is None:
        step = STEP_RESOLUTION_FACTOR * env.space.collision_resolution

    try:
        budget.charge(2)
        ends_ok = env.valid_mask(np.stack([start, goal]))
        if not bool(ends_ok.all()):
            return PlanOutcome(INVALID_QUERY)
        if distance(start, goal) == 0.0:
            return PlanOutcome(SOLVED, GeometricPath(start[None, :]))

        tree_a = _Tree(start)
        tree_b = _Tree(goal)
        a_is_start = True
        lo, hi = env.space.bounds[:, 0], env.space.bounds[:, 1]
        iterations = 0
        while True:
            iterations += 1
            q_rand = rng.uniform(lo, hi)
            status, ia = _extend(tree_a, q_rand, env, budget, step)
            if status != _TRAPPED:
                q_new = tree_a.q[ia]
                status_b, ib = _connect(tree_b, q_new, env, budget, step)
                if status_b == _REACHED:
                    chain_a = tree_a.chain(ia)
                    chain_b = tree_b.chain(ib)
                    if a_is_start:
                        waypoints = chain_a + chain_b[-2::-1]
                    else:
                        waypoints = chain_b + chain_a[-2::-1]
                    return PlanOutcome(SOLVED, GeometricPath(np.array(waypoints)),
                                       iterations)
            tree_a, tree_b = tree_b, tree_a
            a_is_start = not a_is_start
    except BudgetExhausted:
        return PlanOutcome(TIMEOUT, iterations=0)
    except PlanningInterrupted:
        return PlanOutcome(CANCELED, iterations=0)


# Give up on smoothing after this many rounds in a row produce no splice:
# a converged path keeps drawing blocked or already-straight stretches,
# and re-checking those forever just burns the racer's budget.
SMOOTHING_FUTILE_CAP = 8


def smooth_path(path: GeometricPath, env: Environment, rounds: int,
                rng: np.random.Generator,
                budget: PlannerBudget | None = None,
                futile_cap: int = SMOOTHING_FUTILE_CAP) -> GeometricPath:
    """Randomized shortcutting: splice straight segments between random
    arc-length stations whenever the chord and both cut stubs validate.

    Length is non-increasing round over round. The loop ends early once
    futile_cap consecutive rounds fail to improve anything. If the
    budget runs out or the planner is canceled mid-smoothing, the best
    path so far is returned - a partially smoothed path is still a
    valid path, with every segment certified by its own motion check.
    """
    if path.waypoints.shape[0] < 3:
        return path  # a single segment (or single state) is already straight
    current = path
    res = env.space.collision_resolution
    futile = 0
    try:
        for _ in range(rounds):
            if futile >= futile_cap:
                break
            futile += 1
            total = current.length
            if total == 0.0:
                break
            s1, s2 = np.sort(rng.uniform(0.0, total, size=2))
            if s2 - s1 < res:
                continue
            p1 = current.point_at(s1)
            p2 = current.point_at(s2)
            if distance(p1, p2) >= (s2 - s1) - 1e-12:
                continue  # that stretch is already straight
            if not check_motion(p1, p2, env.valid_mask, res, budget):
                continue
            # splice: keep waypoints strictly before s1 and after s2
            arcs = np.concatenate([[0.0], np.cumsum(current.segment_lengths())])
            head = current.waypoints[arcs < s1 - 1e-12]
            tail = current.waypoints[arcs > s2 + 1e-12]
            # the cut stubs keep their line but become segments of their
            # own, with fresh check grids; certify them like the chord so
            # every segment of the result has passed a motion check
            if head.shape[0] and not check_motion(head[-1], p1,
                                                  env.valid_mask, res, budget):
                continue
            if tail.shape[0] and not check_motion(p2, tail[0],
                                                  env.valid_mask, res, budget):
                continue
            current = GeometricPath(np.vstack([head, p1[None, :], p2[None, :], tail]))
            # a near-converged path yields endless micro-shaves around its
            # obstacle-supported corners; only a real gain earns more rounds
            if total - current.length > 1e-3 * total:
                futile = 0
    except (BudgetExhausted, PlanningInterrupted):
        pass
    return current


class ScratchPlanner:
    """RRT-Connect with post-smoothing, within a single shared budget.

    workers=1, the default, runs a single seeded instance: this is the
    plan-from-scratch baseline, and also the from-scratch side of a
    planner race (which already occupies one logical worker). workers=2
    races two independently seeded instances and keeps the first raw
    finisher, for experiments that want a two-instance portfolio.
    """

    def __init__(self, smoothing_rounds: int = 100, step: float | None = None,
                 workers: int = 1):
        if workers not in (1, 2):
            raise ValueError("workers must be 1 or 2")
        self.smoothing_rounds = smoothing_rounds
        self.step = step
        self.workers = workers

    def _solve_raw(self, problem: PlanningProblem, env: Environment,
                   budget: PlannerBudget, salt):
        rng = np.random.default_rng(np.random.SeedSequence(salt))
        return rrt_connect(problem, env, budget, rng, step=self.step), rng

    def _smooth(self, outcome: PlanOutcome, env: Environment,
                budget: PlannerBudget, rng) -> PlanOutcome:
        if (self.smoothing_rounds and outcome.solved
                and outcome.path.waypoints.shape[0] > 2):
            outcome.path = smooth_path(outcome.path, env, self.smoothing_rounds,
                                       rng, budget)
        return outcome

    def _solve_one(self, problem: PlanningProblem, env: Environment,
                   budget: PlannerBudget, salt) -> PlanOutcome:
        outcome, rng = self._solve_raw(problem, env, budget, salt)
        return self._smooth(outcome, env, budget, rng)

    def solve(self, problem: PlanningProblem, env: Environment,
              budget: PlannerBudget) -> PlanOutcome:
        if self.workers == 1:
            return self._solve_one(problem, env, budget, (problem.seed, 0x5C2A))

        # Deterministic replay of a two-instance race: both instances make
        # one validity check per tick, so the first raw solution is
        # whichever took fewer work units. Run A under the full cap, then
        # B capped one unit below A's spend (B wins only by finishing
        # strictly earlier; ties keep A). The loser is canceled at that
        # point and the winner alone smooths its path, under the full
        # cap. Only the winner's units are charged to the caller: the
        # instances ran side by side.
        cap = budget.remaining
        bud_a = PlannerBudget(unit_cap=cap, cancel_event=budget.cancel_event)
        out_a, rng_a = self._solve_raw(problem, env, bud_a,
                                       (problem.seed, 0x5C2A, 0))
        if out_a.status in (INVALID_QUERY, CANCELED):
            budget.used += min(bud_a.used, cap) if cap is not None else bud_a.used
            return out_a

        cap_b = bud_a.used - 1 if out_a.solved else cap
        bud_b = PlannerBudget(unit_cap=cap_b, cancel_event=budget.cancel_event)
        out_b, rng_b = self._solve_raw(problem, env, bud_b,
                                       (problem.seed, 0x5C2A, 1))

        b_in_time = out_b.solved and (cap_b is None or bud_b.used <= cap_b)
        if b_in_time:
            winner, wbud, wrng = out_b, bud_b, rng_b
        elif out_a.solved:
            winner, wbud, wrng = out_a, bud_a, rng_a
        else:
            winner, wbud, wrng = out_a, None, None
        if wbud is not None:
            wbud.unit_cap = cap
            winner = self._smooth(winner, env, wbud, wrng)
            spent = wbud.used
        else:
            spent = cap if cap is not None else max(bud_a.used, bud_b.used)
        budget.used += min(spent, cap) if cap is not None else spent
        return winner
