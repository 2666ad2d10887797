"""The experience-planning orchestrator: race recall against scratch.

Every query runs two logical workers - plan-from-scratch and
retrieve-and-repair - and the first to finish wins; the loser is
canceled. Only scratch solutions are fed back into the experience
database, through a bounded background insertion queue, so the database
provably contains nothing that was itself recalled.

Two race executions are provided. The threaded race runs both sides on
real threads with cooperative cancellation. The deterministic race
meters both sides in virtual time (work units = validity checks) and
replays the same outcome on any machine; campaigns use it so metrics
files are byte-identical across runs.

Both racers run to a *raw* solution; the race is decided on
time-to-solution, the loser is canceled at that moment, and only then
is the winning path smoothed (under whatever remains of the query
budget). Polish work never decides who won.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .budget import VIRTUAL_CHECK_RATE, PlannerBudget
from .cspace import GeometricPath
from .environments import Environment, PlanningProblem
from .retrieve_repair import RetrievalResult, RetrieveRepairPlanner
from .scratch import (INVALID_QUERY, SOLVED, TIMEOUT, ScratchPlanner,
                      smooth_path)
from .sparsdb import SparseRoadmap, serialized_size

SCRATCH = "scratch"


@dataclass
class ThunderConfig:
    delta_fraction: float = 0.1
    stretch: float = 1.2
    smoothing_rounds: int = 100
    pair_cap: int = 10
    queue_capacity: int = 32
    seed: int = 0
    virtual_check_rate: int = VIRTUAL_CHECK_RATE
    deterministic: bool = True

    def __post_init__(self):
        if not 0.0 < self.delta_fraction < 1.0:
            raise ValueError("delta_fraction must be in (0, 1)")
        if self.stretch <= 1.0:
            raise ValueError("stretch must exceed 1")

    @classmethod
    def from_file(cls, path: str) -> "ThunderConfig":
        """Parse a key = value text file; unknown keys are an error."""
        values = {}
        casts = {f.name: f.type for f in fields(cls)}
        for line_no, raw in enumerate(open(path), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, _, val = (t.strip() for t in line.partition("="))
            if key not in casts:
                raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
            if casts[key] == "bool" or casts[key] is bool:
                values[key] = val.lower() in ("1", "true", "yes", "on")
            elif casts[key] == "float" or casts[key] is float:
                values[key] = float(val)
            else:
                values[key] = int(val)
        return cls(**values)

    def with_overrides(self, **kwargs) -> "ThunderConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


@dataclass
class PlanResult:
    """Outcome of one raced query."""

    status: str                     # solved | timeout | invalid-query
    solver: str | None              # scratch | recall-exact | recall-repaired
    path: GeometricPath | None
    wall_time: float                # seconds; virtual in deterministic mode
    problem: PlanningProblem
    units_scratch: int = 0
    units_recall: int = 0
    retrieval: RetrievalResult | None = None

    @property
    def solved(self) -> bool:
        return self.status == SOLVED

    @property
    def recalled(self) -> bool:
        return self.solver is not None and self.solver.startswith("recall")


def _polish(path, finish, budget: PlannerBudget, cap: int):
    """Apply the winner's finishing pass (smoothing) after the race.

    The loser is canceled at this point, so the winner may spend the
    rest of the full query cap, not just its race window.
    """
    if finish is None:
        return path
    budget.unit_cap = cap
    return finish(path, budget)


def race_deterministic(rr_solve, pfs_solve, problem: PlanningProblem,
                       rate: int, finish=None,
                       scratch_first: bool = False) -> PlanResult:
    """Virtual-time race: both sides metered in validity checks.

    One side runs first under the full unit cap; the other then gets
    min(cap, first side's spend) units, emulating the cancel a real
    parallel race delivers at the winner's finish. Scratch wins only by
    strictly beating recall's time, so ties go to experience. Both
    sides race to a raw path; the winner's is then handed to
    finish(path, budget) under the remainder of the cap. The declared
    winner is the same whichever side is simulated first (the decision
    only compares the two spends), so callers pick the order by cost:
    scratch_first=True saves real compute when recall is the expensive
    side, since recall then never runs past scratch's finish line. The
    replayed outcome equals a real race between the two metered
    workers, and it is identical on any machine.

    rr_solve(budget) returns (PlanOutcome, RetrievalResult | None);
    pfs_solve(budget) returns a PlanOutcome.
    """
    cap = int(problem.time_budget * rate)
    if scratch_first:
        pfs_budget = PlannerBudget(cap)
        pfs_outcome = pfs_solve(pfs_budget)
        rr_cap = min(cap, pfs_budget.used) if pfs_outcome.solved else cap
        rr_budget = PlannerBudget(rr_cap)
        rr_outcome, rr_result = rr_solve(rr_budget)
    else:
        rr_budget = PlannerBudget(cap)
        rr_outcome, rr_result = rr_solve(rr_budget)
        pfs_cap = min(cap, rr_budget.used) if rr_outcome.solved else cap
        pfs_budget = PlannerBudget(pfs_cap)
        pfs_outcome = pfs_solve(pfs_budget)

    if pfs_outcome.solved and (not rr_outcome.solved
                               or pfs_budget.used < rr_budget.used):
        path = _polish(pfs_outcome.path, finish, pfs_budget, cap)
        # a smoothing pass cut off at the cap may overshoot by one bulk
        # charge; the planner still finished at the deadline, not after it
        return PlanResult(SOLVED, SCRATCH, path,
                          min(pfs_budget.used, cap) / rate, problem,
                          units_scratch=pfs_budget.used,
                          units_recall=rr_budget.used)
    if rr_outcome.solved:
        path = _polish(rr_outcome.path, finish, rr_budget, cap)
        return PlanResult(SOLVED, rr_result.provenance, path,
                          min(rr_budget.used, cap) / rate, problem,
                          units_scratch=pfs_budget.used,
                          units_recall=rr_budget.used, retrieval=rr_result)
    status = INVALID_QUERY if pfs_outcome.status == INVALID_QUERY else TIMEOUT
    return PlanResult(status, None, None, problem.time_budget, problem,
                      units_scratch=pfs_budget.used,
                      units_recall=rr_budget.used)


def race_threaded(rr_solve, pfs_solve, problem: PlanningProblem,
                  rate: int, finish=None,
                  scratch_first: bool = False) -> PlanResult:
    """Two real workers; the first raw success cancels the other side.

    scratch_first is accepted for signature parity with the
    deterministic replay and ignored: both sides genuinely run at once.
    """
    cap = int(problem.time_budget * rate)
    rr_budget = PlannerBudget(cap)
    pfs_budget = PlannerBudget(cap)
    results: queue.Queue = queue.Queue()
    t0 = time.perf_counter()

    def run_rr():
        outcome, extra = rr_solve(rr_budget)
        results.put(("rr", outcome, extra, time.perf_counter() - t0))

    def run_pfs():
        outcome = pfs_solve(pfs_budget)
        results.put(("pfs", outcome, None, time.perf_counter() - t0))

    threads = [threading.Thread(target=run_rr, daemon=True),
               threading.Thread(target=run_pfs, daemon=True)]
    for t in threads:
        t.start()

    winner = None
    seen = []
    for _ in range(2):
        item = results.get()
        seen.append(item)
        if item[1].solved:
            winner = item
            break
    # cancel whoever is still running; the winner's budget stays live so
    # the finishing pass below can keep charging against it
    if winner is None or winner[0] == "pfs":
        rr_budget.cancel()
    if winner is None or winner[0] == "rr":
        pfs_budget.cancel()
    for t in threads:
        t.join()

    if winner is not None:
        side, outcome, extra, elapsed = winner
        path = outcome.path
        if finish is not None:
            path = finish(path, pfs_budget if side == "pfs" else rr_budget)
            elapsed = time.perf_counter() - t0
        solver = SCRATCH if side == "pfs" else extra.provenance
        return PlanResult(SOLVED, solver, path, elapsed, problem,
                          units_scratch=pfs_budget.used,
                          units_recall=rr_budget.used,
                          retrieval=extra if side == "rr" else None)
    statuses = {item[0]: item[1].status for item in seen}
    status = INVALID_QUERY if statuses.get("pfs") == INVALID_QUERY else TIMEOUT
    return PlanResult(status, None, None, time.perf_counter() - t0, problem,
                      units_scratch=pfs_budget.used,
                      units_recall=rr_budget.used)


_STOP = object()


class ThunderPlanner:
    """Race + experience database over one environment family.

    All environments passed in must share a configuration space and
    invariant predicate (the built-in suites do); the roadmap is bound
    to that family. solve() handles one query at a time.
    """

    def __init__(self, environments, config: ThunderConfig | None = None,
                 roadmap: SparseRoadmap | None = None):
        self.config = config if config is not None else ThunderConfig()
        self.environments = {env.id: env for env in environments}
        if not self.environments:
            raise ValueError("need at least one environment")
        family = next(iter(self.environments.values()))
        if roadmap is None:
            roadmap = SparseRoadmap(
                family.space, family.invariant_mask,
                delta=self.config.delta_fraction * family.space.diagonal,
                stretch=self.config.stretch)
        self.roadmap = roadmap
        # one worker each: the racers return raw paths (smoothing_rounds=0)
        # and the orchestrator smooths whichever path won the race
        self._pfs = ScratchPlanner(smoothing_rounds=0, workers=1)
        self._rr = RetrieveRepairPlanner(roadmap, pair_cap=self.config.pair_cap,
                                         smoothing_rounds=0)
        # background insertion
        self._queue: queue.Queue = queue.Queue(maxsize=self.config.queue_capacity)
        self._dropped = 0
        self._insert_count = 0
        self._insert_seconds = 0.0
        self._insert_reports: list = []
        self._solve_counts: dict = {}
        self._worker = threading.Thread(target=self._insert_loop, daemon=True)
        self._worker.start()

    # -- environment plumbing -------------------------------------------------

    def _env(self, problem: PlanningProblem) -> Environment:
        try:
            return self.environments[problem.environment_id]
        except KeyError:
            known = ", ".join(sorted(self.environments))
            raise KeyError(f"unknown environment {problem.environment_id!r}; "
                           f"this planner knows: {known}") from None

    # -- solving ---------------------------------------------------------------

    def solve(self, problem: PlanningProblem) -> PlanResult:
        env = self._env(problem)

        def finish(path, budget):
            """Smooth the race winner; the raw path survives a deadline cut."""
            if path is None or path.waypoints.shape[0] < 3:
                return path
            rng = np.random.default_rng(
                np.random.SeedSequence((problem.seed, 0xF1A)))
            return smooth_path(path, env, self.config.smoothing_rounds,
                               rng, budget)

        race = race_deterministic if self.config.deterministic else race_threaded
        result = race(lambda b: self._rr.solve(problem, env, b),
                      lambda b: self._pfs.solve(problem, env, b),
                      problem, self.config.virtual_check_rate, finish=finish)
        key = result.solver if result.solved else result.status
        self._solve_counts[key] = self._solve_counts.get(key, 0) + 1
        return result

    # -- experience feedback ----------------------------------------------------

    def submit_experience(self, result: PlanResult) -> bool:
        """Queue a solved result for background insertion.

        Only scratch solutions are accepted - recalled paths came from
        the database and would only echo it. A full queue drops the
        oldest pending path rather than blocking the solve path.
        """
        if not result.solved or result.solver != SCRATCH:
            return False
        item = (result.path, self._env(result.problem))
        while True:
            try:
                self._queue.put_nowait(item)
                return True
            except queue.Full:
                try:
                    self._queue.get_nowait()
                    self._queue.task_done()
                    self._dropped += 1
                except queue.Empty:
                    continue

    def _insert_loop(self):
        pace = lambda: time.sleep(0)  # yield to racing workers between states
        while True:
            item = self._queue.get()
            if item is _STOP:
                self._queue.task_done()
                return
            path, env = item
            rng = np.random.default_rng(
                np.random.SeedSequence((self.config.seed, 0x1D5, self._insert_count)))
            self._insert_count += 1
            report = self.roadmap.insert_experience_path(path, rng, pace=pace)
            self._insert_seconds += report.seconds
            self._insert_reports.append(report)
            self._queue.task_done()

    def drain(self):
        """Block until every queued insertion has been applied."""
        self._queue.join()

    def close(self):
        self._queue.put(_STOP)
        self._worker.join()

    # -- stats -------------------------------------------------------------------

    def snapshot_stats(self) -> dict:
        s = self.roadmap.stats()
        s.update({
            "queue_depth": self._queue.qsize(),
            "dropped": self._dropped,
            "solve_counts": dict(self._solve_counts),
            "insertions": self._insert_count,
            "insertion_seconds": self._insert_seconds,
            "db_bytes": serialized_size(s["nodes"], s["edges"], self.roadmap.space.dim),
        })
        return s

    @property
    def insertion_reports(self) -> list:
        return list(self._insert_reports)
