"""Path-store baseline: retrieve whole past paths and repair them.

This is the comparison target for the roadmap database. Experiences are
kept as literal executed paths (discretized to collision resolution),
deduplicated only by a dynamic-time-warping similarity filter, and
recalled by endpoint proximity. The race architecture is identical to
the roadmap planner's; what differs is the experience store and that
*every* returned solution - recalled-and-repaired ones included - is
offered back to the store.
"""

from __future__ import annotations

import struct
import threading
import time
import queue as queue_mod
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .budget import PlannerBudget
from .cspace import GeometricPath, check_motion, discretize_path
from .environments import Environment, PlanningProblem
from .retrieve_repair import RECALL_EXACT, RECALL_REPAIRED, RetrievalResult, repair_waypoints
from .scratch import (CANCELED, NO_RECALL, SOLVED, TIMEOUT, PlanOutcome,
                      ScratchPlanner, smooth_path)
from .thunder import (SCRATCH, PlanResult, ThunderConfig, race_deterministic,
                      race_threaded)

DTW_THRESHOLD = 4.0     # minimum dissimilarity a new path must clear to be kept
DTW_SAMPLES = 32        # paths are resampled to this many waypoints for scoring
TOP_N = 10              # candidate paths examined per query


def dtw_distance(p1: GeometricPath, p2: GeometricPath) -> float:
    """Dynamic-time-warping alignment cost between two waypoint sequences.

    Classic O(len1 * len2) dynamic program over Euclidean ground
    distances; symmetric, and zero exactly for identical sequences.
    """
    a, b = p1.waypoints, p2.waypoints
    cost = cdist(a, b)
    n, m = cost.shape
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        prev_up = np.minimum(D[i - 1, 1:], D[i - 1, :-1])
        for j in range(1, m + 1):
            D[i, j] = cost[i - 1, j - 1] + min(prev_up[j - 1], D[i, j - 1])
    return float(D[n, m])


def _batched_dtw(sig: np.ndarray, sigs: np.ndarray) -> np.ndarray:
    """DTW costs of one (n, d) signature against a (P, m, d) stack.

    Same recurrence as dtw_distance, swept along anti-diagonals so the
    whole stack advances in lockstep - the similarity filter scans
    hundreds of stored signatures per insertion, and cell-at-a-time
    python is far too slow for that.
    """
    n = sig.shape[0]
    P, m, _ = sigs.shape
    a_sq = (sig**2).sum(axis=1)
    b_sq = (sigs**2).sum(axis=2)
    dots = np.einsum("ik,pjk->pij", sig, sigs)
    C = np.sqrt(np.maximum(a_sq[None, :, None] + b_sq[:, None, :] - 2.0 * dots, 0.0))
    D = np.full((P, n + 1, m + 1), np.inf)
    D[:, 0, 0] = 0.0
    for s in range(2, n + m + 1):
        i = np.arange(max(1, s - m), min(n, s - 1) + 1)
        j = s - i
        best = np.minimum(np.minimum(D[:, i - 1, j], D[:, i, j - 1]), D[:, i - 1, j - 1])
        D[:, i, j] = C[:, i - 1, j - 1] + best
    return D[:, n, m]


@dataclass
class StoreStats:
    paths: int = 0
    states: int = 0
    rejected_similar: int = 0


class PathStore:
    """Append-only path library with a DTW similarity filter.

    The filter rejects a path when its raw DTW cost to some stored path
    is at most threshold * scale. scale defaults to 1 (raw DTW units);
    planners pass the space's collision resolution so the threshold
    reads as "resolution steps of total aligned deviation" and means
    the same thing in any space.

    Single-writer / multi-reader: only one thread may store paths, so
    the similarity scan can run outside the lock; readers take the lock
    only to copy out consistent views.
    """

    def __init__(self, dim: int, threshold: float = DTW_THRESHOLD,
                 scale: float = 1.0):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.dim = dim
        self.threshold = threshold
        self.scale = scale
        self.paths: list[GeometricPath] = []
        self._signatures = np.empty((0, DTW_SAMPLES, dim))  # resampled, stacked
        self._starts = np.empty((0, dim))
        self._goals = np.empty((0, dim))
        self.rejected_similar = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def state_count(self) -> int:
        return sum(p.waypoints.shape[0] for p in self.paths)

    def min_dtw(self, p: GeometricPath) -> float:
        """Smallest DTW cost between p's signature and any stored path's."""
        sig = p.resample(DTW_SAMPLES).waypoints
        with self._lock:
            sigs = self._signatures
        if sigs.shape[0] == 0:
            return np.inf
        best = np.inf
        for lo in range(0, sigs.shape[0], 256):
            chunk = _batched_dtw(sig, sigs[lo:lo + 256])
            best = min(best, float(chunk.min()))
            if best <= self.threshold * self.scale:
                break  # already similar enough to reject; no need to finish
        return best

    def maybe_store(self, p: GeometricPath, invariant_mask=None,
                    resolution: float | None = None) -> bool:
        """Keep p unless some stored path is DTW-similar to it.

        Similarity is scored on fixed-length resamplings so the
        threshold means the same thing for long and short paths. When a
        resolution is given the path is stored at that execution density
        (dense state sequences, the way paths are actually driven), and
        an invariant predicate, if also given, re-checks every state.
        """
        if resolution is not None:
            states, _ = discretize_path(p, resolution)
            if invariant_mask is not None and not bool(invariant_mask(states).all()):
                raise ValueError("path violates invariant constraints; not storable")
            p = GeometricPath(states)
        if self.min_dtw(p) <= self.threshold * self.scale:
            with self._lock:
                self.rejected_similar += 1
            return False
        self._append(p)
        return True

    def _append(self, p: GeometricPath) -> None:
        sig = p.resample(DTW_SAMPLES).waypoints
        with self._lock:
            self.paths.append(p)
            self._signatures = np.concatenate([self._signatures, sig[None]], axis=0)
            self._starts = np.vstack([self._starts, p.start[None, :]])
            self._goals = np.vstack([self._goals, p.goal[None, :]])

    def retrieve_top_n(self, start: np.ndarray, goal: np.ndarray,
                       n: int = TOP_N) -> list[int]:
        """Indices of the n paths with the closest endpoint pairs.

        Ranked ascending by distance(start, path start) + distance(goal,
        path goal); ties broken by insertion order.
        """
        with self._lock:
            if not self.paths:
                return []
            score = (np.sqrt(((self._starts - start) ** 2).sum(axis=1))
                     + np.sqrt(((self._goals - goal) ** 2).sum(axis=1)))
        order = np.lexsort((np.arange(score.shape[0]), score))
        return [int(i) for i in order[:n]]

    def stats(self) -> StoreStats:
        with self._lock:
            return StoreStats(paths=len(self.paths), states=self.state_count,
                              rejected_similar=self.rejected_similar)


def pscore(p: GeometricPath, env: Environment,
           budget: PlannerBudget | None = None) -> float:
    """Fraction of the path's discretized states invalid in env."""
    states, _ = discretize_path(p, env.space.collision_resolution)
    if budget is not None:
        budget.charge(states.shape[0])
    ok = env.valid_mask(states)
    return float(1.0 - ok.mean())


# ---------------------------------------------------------------------------
# persistence: magic LGHT, version, dim, path count, then per path the
# waypoint count and the waypoints themselves; little-endian throughout

_MAGIC = b"LGHT"
_VERSION = 1
_HEADER = struct.Struct("<4sII Q")


class StoreFormatError(ValueError):
    """File is not a loadable path store."""


def store_serialized_size(store: PathStore) -> int:
    return _HEADER.size + sum(8 + p.waypoints.size * 8 for p in store.paths)


def save_store(store: PathStore, path: str) -> int:
    parts = [_HEADER.pack(_MAGIC, _VERSION, store.dim, len(store.paths))]
    for p in store.paths:
        parts.append(struct.pack("<Q", p.waypoints.shape[0]))
        parts.append(np.ascontiguousarray(p.waypoints, dtype="<f8").tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_store(path: str, dim: int | None = None,
               threshold: float = DTW_THRESHOLD,
               scale: float = 1.0) -> PathStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise StoreFormatError("truncated store file: missing header")
    magic, version, file_dim, count = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise StoreFormatError(f"not a path store file (magic {magic!r})")
    if version != _VERSION:
        raise StoreFormatError(f"unsupported store format version {version}")
    if dim is not None and file_dim != dim:
        raise StoreFormatError(f"dimension mismatch: file has {file_dim}, expected {dim}")
    store = PathStore(file_dim, threshold, scale)
    off = _HEADER.size
    for _ in range(count):
        if off + 8 > len(blob):
            raise StoreFormatError("truncated store file: missing waypoint count")
        (k,) = struct.unpack_from("<Q", blob, off)
        off += 8
        nbytes = k * file_dim * 8
        if off + nbytes > len(blob):
            raise StoreFormatError("truncated store file: waypoints cut short")
        wp = np.frombuffer(blob, dtype="<f8", count=k * file_dim, offset=off)
        off += nbytes
        p = GeometricPath(wp.reshape(k, file_dim).copy())
        # bypass the similarity filter: a saved store loads verbatim
        store._append(p)
    return store


# ---------------------------------------------------------------------------
# the racing planner

_STOP = object()


class LightningPlanner:
    """Path-store experience planner with the same race architecture."""

    def __init__(self, environments, config: ThunderConfig | None = None,
                 store: PathStore | None = None):
        self.config = config if config is not None else ThunderConfig()
        self.environments = {env.id: env for env in environments}
        if not self.environments:
            raise ValueError("need at least one environment")
        family = next(iter(self.environments.values()))
        self.space = family.space
        self.invariant_mask = family.invariant_mask
        if store is None:
            # threshold in resolution steps of total aligned deviation: only
            # near-duplicates are dropped, so the library keeps absorbing
            # genuinely new routes instead of freezing once it covers the
            # workspace coarsely
            store = PathStore(family.space.dim,
                              scale=family.space.collision_resolution)
        self.store = store
        # raw racer; the orchestrator smooths the race winner
        self._pfs = ScratchPlanner(smoothing_rounds=0, workers=1)
        self._solve_counts: dict = {}
        self._queue: queue_mod.Queue = queue_mod.Queue(maxsize=self.config.queue_capacity)
        self._dropped = 0
        self._store_seconds = 0.0
        self._worker = threading.Thread(target=self._store_loop, daemon=True)
        self._worker.start()

    def _env(self, problem: PlanningProblem) -> Environment:
        try:
            return self.environments[problem.environment_id]
        except KeyError:
            known = ", ".join(sorted(self.environments))
            raise KeyError(f"unknown environment {problem.environment_id!r}; "
                           f"this planner knows: {known}") from None

    # -- recall side ------------------------------------------------------------

    def _recall(self, problem: PlanningProblem, env: Environment,
                budget: PlannerBudget):
        """Top-n retrieval, lowest-pscore selection, segment repair."""
        from .budget import BudgetExhausted, PlanningInterrupted
        try:
            result = self._recall_inner(problem, env, budget)
        except BudgetExhausted:
            return PlanOutcome(TIMEOUT), None
        except PlanningInterrupted:
            return PlanOutcome(CANCELED), None
        if result is None:
            return PlanOutcome(NO_RECALL), None
        return PlanOutcome(SOLVED, result.path), result

    def _recall_inner(self, problem: PlanningProblem, env: Environment,
                      budget: PlannerBudget) -> RetrievalResult | None:
        start = np.asarray(problem.start, dtype=float)
        goal = np.asarray(problem.goal, dtype=float)
        candidates = self.store.retrieve_top_n(start, goal, TOP_N)
        if not candidates:
            return None
        with self.store._lock:
            paths = [self.store.paths[i] for i in candidates]

        scores = [pscore(p, env, budget) for p in paths]
        best = int(np.argmin(scores))  # first minimum: closest endpoints win ties
        chosen = paths[best]

        rng = np.random.default_rng(np.random.SeedSequence((problem.seed, 0x11A)))
        res = env.space.collision_resolution
        # bolt the query endpoints onto the recalled path, then repair
        # every invalid stretch (including those connector segments);
        # interior segments are at most one resolution step long after
        # discretization, so endpoint validity decides them
        states, _ = discretize_path(chosen, res)
        W = np.vstack([start[None, :], states, goal[None, :]])
        budget.charge(W.shape[0])
        ok = env.valid_mask(W)
        seg_invalid = np.zeros(W.shape[0] - 1, dtype=bool)
        for k in range(W.shape[0] - 1):
            seg_invalid[k] = (not ok[k]) or (not ok[k + 1])
        if not seg_invalid[0]:
            seg_invalid[0] = not check_motion(W[0], W[1], env.valid_mask, res, budget)
        if not seg_invalid[-1]:
            seg_invalid[-1] = not check_motion(W[-2], W[-1], env.valid_mask, res, budget)

        repaired = repair_waypoints(W, seg_invalid, env, budget, rng)
        if repaired is None:
            return None
        new_wp, runs = repaired
        provenance = RECALL_REPAIRED if runs else RECALL_EXACT
        return RetrievalResult(GeometricPath(new_wp), provenance,
                               repair_segments=runs,
                               candidate_pairs_tried=len(candidates))

    # -- race -------------------------------------------------------------------

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
        # path-store recall repairs with full planner runs, so it is the
        # expensive side here; replaying scratch first keeps the emulated
        # cancel from running recall far past the finish line
        result = race(lambda b: self._recall(problem, env, b),
                      lambda b: self._pfs.solve(problem, env, b),
                      problem, self.config.virtual_check_rate, finish=finish,
                      scratch_first=True)
        key = result.solver if result.solved else result.status
        self._solve_counts[key] = self._solve_counts.get(key, 0) + 1
        return result

    # -- storage feedback ---------------------------------------------------------

    def submit_experience(self, result: PlanResult) -> bool:
        """Queue any solved result for storage - scratch and recall alike."""
        if not result.solved:
            return False
        while True:
            try:
                self._queue.put_nowait(result.path)
                return True
            except queue_mod.Full:
                try:
                    self._queue.get_nowait()
                    self._queue.task_done()
                    self._dropped += 1
                except queue_mod.Empty:
                    continue

    def _store_loop(self):
        while True:
            item = self._queue.get()
            if item is _STOP:
                self._queue.task_done()
                return
            t0 = time.perf_counter()
            self.store.maybe_store(item, self.invariant_mask,
                                   self.space.collision_resolution)
            self._store_seconds += time.perf_counter() - t0
            self._queue.task_done()

    def drain(self):
        self._queue.join()

    def close(self):
        self._queue.put(_STOP)
        self._worker.join()

    def snapshot_stats(self) -> dict:
        s = self.store.stats()
        return {
            "paths": s.paths,
            "states": s.states,
            "rejected_similar": s.rejected_similar,
            "queue_depth": self._queue.qsize(),
            "dropped": self._dropped,
            "solve_counts": dict(self._solve_counts),
            "store_seconds": self._store_seconds,
            "db_bytes": store_serialized_size(self.store),
        }
