"""Sparse roadmap experience database with typed guards.

The database is a sparse roadmap spanner: nodes ("guards") are kept only
when they serve coverage, connectivity, a visibility interface, or path
quality, so the graph stays near-constant in size once the space is
saturated. Edges are validated against the *invariant-only* predicate at
insertion time; obstacle validity is the retrieval side's problem.

Insertion of a full experience path runs three ordered phases: evenly
spaced candidates along the arc (spacing f*delta derived from the path
length), midpoints between consecutive candidates, and finally all
remaining discretized states in seeded-random order. The phase order is
what creates edges: naive in-order insertion of a dense state sequence
leaves disconnected coverage guards (kept available as a test mode).
"""

from __future__ import annotations

import struct
import threading
import time
from dataclasses import dataclass, field
from heapq import heappop, heappush

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .cspace import GeometricPath, SpaceDefinition, check_motion, discretize_path
from .environments import Environment

# guard types, in insertion-criterion order; values are the on-disk codes
COVERAGE = "coverage"
CONNECTIVITY = "connectivity"
INTERFACE = "interface"
QUALITY = "quality"
GUARD_TYPES = (COVERAGE, CONNECTIVITY, INTERFACE, QUALITY)
_TYPE_CODE = {t: i for i, t in enumerate(GUARD_TYPES)}

REJECTED = "rejected"

DELTA_FRACTION = 0.1   # visibility radius as a fraction of the space diagonal
STRETCH = 1.2          # allowed roadmap-path stretch over optimal
F_LOW = 1.0            # lower bound of the admissible guard-spacing factor

# how many nearest visible guards the interface/quality criteria inspect
_QUALITY_CANDIDATES = 4


@dataclass
class InsertionReport:
    """Counters from one experience-path insertion."""

    states_attempted: int = 0
    guards_added: dict = field(default_factory=lambda: {t: 0 for t in GUARD_TYPES})
    edges_added: int = 0
    start_goal_connected: bool = False
    seconds: float = 0.0
    # phase-candidate states, for debugging and spacing checks:
    # {"spacing": (n+1, d) array, "midpoints": (n, d) array}
    candidates: dict = field(default_factory=dict)

    @property
    def total_guards_added(self) -> int:
        return sum(self.guards_added.values())


def spacing_parameters(length: float, delta: float, f_low: float = F_LOW):
    """Guard count and spacing factor for a path of the given arc length.

    n = floor(length / (delta * f_low)); f = length / (n * delta), which
    lands in [1, 2) whenever n >= 1. n = 0 flags the degenerate
    endpoints-only case.
    """
    if length < 0 or delta <= 0:
        raise ValueError("need length >= 0 and delta > 0")
    n = int(np.floor(length / (delta * f_low)))
    if n < 1:
        return 0, float("nan")
    f = length / (n * delta)
    # mathematically already in [1, 2); clamp only against float dust
    f = min(max(f, 1.0), np.nextafter(2.0, 1.0))
    return n, f


class SparseRoadmap:
    """Mutable sparse roadmap over one configuration space.

    The invariant predicate is a vectorized validity mask covering only
    environment-independent constraints; every stored edge's straight
    motion satisfies it. Mutations and snapshots are serialized by an
    internal lock (single-writer / multi-reader contract).
    """

    def __init__(self, space: SpaceDefinition, invariant_mask,
                 delta: float | None = None, stretch: float = STRETCH):
        if delta is None:
            delta = DELTA_FRACTION * space.diagonal
        if delta <= 0:
            raise ValueError("delta must be positive")
        if stretch <= 1.0:
            raise ValueError("stretch must exceed 1")
        self.space = space
        self.invariant_mask = invariant_mask
        self.delta = float(delta)
        self.stretch = float(stretch)
        self._configs = np.empty((64, space.dim))
        self._types = np.empty(64, dtype=np.uint8)
        self.n_nodes = 0
        self._adj: dict[int, dict[int, float]] = {}
        self._components = DisjointSet()
        self.n_edges = 0
        self._lock = threading.Lock()

    # -- basic accessors ----------------------------------------------------

    @property
    def configs(self) -> np.ndarray:
        return self._configs[:self.n_nodes]

    @property
    def types(self) -> np.ndarray:
        return self._types[:self.n_nodes]

    @property
    def n_components(self) -> int:
        return self._components.n_subsets if self.n_nodes else 0

    def neighbors(self, i: int) -> dict[int, float]:
        return self._adj[i]

    def connected(self, a: int, b: int) -> bool:
        return bool(self._components.connected(a, b))

    def edges(self):
        """All edges as (a, b, weight) with a < b."""
        out = []
        for a, nbrs in self._adj.items():
            for b, w in nbrs.items():
                if a < b:
                    out.append((a, b, w))
        return out

    # -- geometric queries --------------------------------------------------

    def nearest_within_delta(self, q: np.ndarray):
        """Node ids with distance <= delta, ascending by (distance, id)."""
        q = np.asarray(q, dtype=float)
        if self.n_nodes == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        d = np.sqrt(((self.configs - q) ** 2).sum(axis=1))
        idx = np.flatnonzero(d <= self.delta)
        order = np.lexsort((idx, d[idx]))
        idx = idx[order]
        return idx, d[idx]

    def nearest_node(self, q: np.ndarray) -> int:
        if self.n_nodes == 0:
            raise ValueError("empty roadmap")
        d2 = ((self.configs - np.asarray(q, dtype=float)) ** 2).sum(axis=1)
        return int(np.argmin(d2))

    def visible(self, a: np.ndarray, b: np.ndarray, budget=None) -> bool:
        """Within delta and invariant-valid straight motion."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if float(np.linalg.norm(a - b)) > self.delta:
            return False
        return check_motion(a, b, self.invariant_mask, self.space.collision_resolution,
                            budget)

    # -- mutation -----------------------------------------------------------

    def _add_node(self, q: np.ndarray, guard_type: str) -> int:
        if self.n_nodes == self._configs.shape[0]:
            self._configs = np.vstack([self._configs, np.empty_like(self._configs)])
            self._types = np.concatenate([self._types, np.empty_like(self._types)])
        i = self.n_nodes
        self._configs[i] = q
        self._types[i] = _TYPE_CODE[guard_type]
        self.n_nodes += 1
        self._adj[i] = {}
        self._components.add(i)
        return i

    def _add_edge(self, a: int, b: int) -> None:
        w = float(np.linalg.norm(self._configs[a] - self._configs[b]))
        self._adj[a][b] = w
        self._adj[b][a] = w
        self._components.merge(a, b)
        self.n_edges += 1

    def try_add_state(self, q: np.ndarray, budget=None):
        """Apply the four insertion criteria in order.

        Returns (outcome, node_id, edges) where outcome is one of the
        guard type names or "rejected", node_id is -1 when no node was
        added, and edges lists the (a, b) pairs created. The caller must
        supply an invariant-valid q.
        """
        q = np.asarray(q, dtype=float)
        if not bool(self.invariant_mask(q[None, :])[0]):
            raise ValueError("candidate state violates invariant constraints")

        with self._lock:
            near_ids, _near_d = self.nearest_within_delta(q)

            # Visibility scan in distance order. When every nearby node is
            # in one component the connectivity rule cannot fire and the
            # later rules only look at the nearest few visible guards, so
            # the scan can stop early; otherwise scan everything to find
            # each component's closest visible representative.
            multi_comp = len({self._components[int(i)] for i in near_ids}) > 1
            visible_ids = []
            for i in near_ids:
                i = int(i)
                if check_motion(q, self._configs[i], self.invariant_mask,
                                self.space.collision_resolution, budget):
                    visible_ids.append(i)
                    if not multi_comp and len(visible_ids) >= _QUALITY_CANDIDATES:
                        break

            # 1) coverage: nothing can see q
            if not visible_ids:
                node = self._add_node(q, COVERAGE)
                return COVERAGE, node, []

            # 2) connectivity: visible guards span several components
            by_comp: dict = {}
            for i in visible_ids:
                by_comp.setdefault(self._components[i], i)  # first = closest
            if len(by_comp) >= 2:
                node = self._add_node(q, CONNECTIVITY)
                edges = []
                for rep in by_comp.values():
                    self._add_edge(node, rep)
                    edges.append((node, rep))
                return CONNECTIVITY, node, edges

            # 3) interface: the two nearest visible guards lack an edge
            if len(visible_ids) >= 2:
                u, v = visible_ids[0], visible_ids[1]
                if v not in self._adj[u]:
                    if self.visible(self._configs[u], self._configs[v], budget):
                        self._add_edge(u, v)
                        return REJECTED, -1, [(u, v)]
                    node = self._add_node(q, INTERFACE)
                    self._add_edge(node, u)
                    self._add_edge(node, v)
                    return INTERFACE, node, [(node, u), (node, v)]

            # 4) quality: q exposes a detour beating the stretch bound
            #    between some nearby guard pair. Only pairs farther apart
            #    than delta qualify: nearer pairs can still gain a direct
            #    edge through the interface rule, and patching them with
            #    midpoint guards re-creates violated pairs at ever finer
            #    spacing - the roadmap would never stop growing.
            front = visible_ids[:_QUALITY_CANDIDATES]
            for ai in range(len(front)):
                for bi in range(ai + 1, len(front)):
                    u, w = front[ai], front[bi]
                    if w in self._adj[u]:
                        continue
                    d_uw = float(np.linalg.norm(self._configs[u] - self._configs[w]))
                    if d_uw <= self.delta:
                        continue
                    through_q = (float(np.linalg.norm(self._configs[u] - q))
                                 + float(np.linalg.norm(q - self._configs[w])))
                    bound = self.stretch * through_q
                    if self._graph_distance(u, w, cutoff=bound) > bound:
                        node = self._add_node(q, QUALITY)
                        self._add_edge(node, u)
                        self._add_edge(node, w)
                        return QUALITY, node, [(node, u), (node, w)]

            return REJECTED, -1, []

    def _graph_distance(self, src: int, dst: int, cutoff: float) -> float:
        """Dijkstra distance src -> dst, early-exiting past cutoff."""
        dist = {src: 0.0}
        heap = [(0.0, src)]
        while heap:
            d, i = heappop(heap)
            if d > dist.get(i, np.inf):
                continue
            if i == dst:
                return d
            if d > cutoff:
                return np.inf
            for j, w in self._adj[i].items():
                nd = d + w
                if nd < dist.get(j, np.inf):
                    dist[j] = nd
                    heappush(heap, (nd, j))
        return np.inf

    # -- experience insertion ------------------------------------------------

    def insert_experience_path(self, path: GeometricPath,
                               rng: np.random.Generator | None = None,
                               budget=None, naive_in_order: bool = False,
                               pace=None) -> InsertionReport:
        """Insert one smoothed, invariant-valid experience path.

        Three phases: (i) candidates every f*delta of arc length from
        start to goal inclusive; (ii) midpoints of consecutive phase-one
        stations; (iii) every remaining state of the resolution-level
        discretization, shuffled by rng. naive_in_order replaces all of
        that with a plain front-to-back sweep of the discretized states
        (the failure mode the phased order exists to avoid).
        """
        if rng is None:
            rng = np.random.default_rng(0)
        t0 = time.perf_counter()
        report = InsertionReport()

        def attempt(state):
            # Arc-length stations land between the resolution-grid states
            # the planner validated; the sliver in between can violate a
            # thin invariant band. Those stations are skipped, not errors.
            if not bool(self.invariant_mask(np.asarray(state, dtype=float)[None, :])[0]):
                return
            outcome, _node, edges = self.try_add_state(state, budget)
            report.states_attempted += 1
            if outcome != REJECTED:
                report.guards_added[outcome] += 1
            report.edges_added += len(edges)
            if pace is not None:
                pace()  # let concurrent readers in between states

        if naive_in_order:
            states, _arcs = discretize_path(path, self.space.collision_resolution)
            for s in states:
                attempt(s)
        else:
            length = path.length
            n, f = spacing_parameters(length, self.delta)
            if n < 1:
                stations = [0.0] if length == 0.0 else [0.0, length]
                report.candidates["spacing"] = np.array([path.point_at(s) for s in stations])
                report.candidates["midpoints"] = np.empty((0, path.dim))
                for s in report.candidates["spacing"]:
                    attempt(s)
            else:
                spacing_states = np.array([path.point_at(k * f * self.delta)
                                           for k in range(n + 1)])
                midpoint_states = np.array([path.point_at((k + 0.5) * f * self.delta)
                                            for k in range(n)])
                report.candidates["spacing"] = spacing_states
                report.candidates["midpoints"] = midpoint_states
                for s in spacing_states:
                    attempt(s)
                for s in midpoint_states:
                    attempt(s)
                # phase iii: remaining discretized states, random order;
                # states within half a resolution step of an attempted
                # station already had their chance
                states, arcs = discretize_path(path, self.space.collision_resolution)
                attempted = np.concatenate([
                    (np.arange(n + 1)) * f * self.delta,
                    (np.arange(n) + 0.5) * f * self.delta,
                ])
                gaps = np.abs(arcs[:, None] - attempted[None, :]).min(axis=1)
                remaining = np.flatnonzero(gaps > 0.5 * self.space.collision_resolution)
                for k in rng.permutation(remaining):
                    attempt(states[k])

        if self.n_nodes:
            ns = self.nearest_node(path.start)
            ng = self.nearest_node(path.goal)
            report.start_goal_connected = self.connected(ns, ng)
        report.seconds = time.perf_counter() - t0
        return report

    # -- snapshots ----------------------------------------------------------

    def snapshot(self) -> "RoadmapSnapshot":
        """Immutable consistent copy for concurrent readers."""
        with self._lock:
            configs = self.configs.copy()
            types = self.types.copy()
            adj = {i: dict(nbrs) for i, nbrs in self._adj.items()}
            comp = np.array([self._components[i] for i in range(self.n_nodes)],
                            dtype=np.int64)
        return RoadmapSnapshot(configs, types, adj, comp, self.delta,
                               self.space, self.invariant_mask)

    def stats(self) -> dict:
        with self._lock:
            return {"nodes": self.n_nodes, "edges": self.n_edges,
                    "components": self.n_components}


class RoadmapSnapshot:
    """Frozen view of a roadmap: safe to read while the writer continues."""

    def __init__(self, configs, types, adj, comp, delta, space, invariant_mask):
        self.configs = configs
        self.types = types
        self.adj = adj
        self.comp = comp
        self.delta = delta
        self.space = space
        self.invariant_mask = invariant_mask

    @property
    def n_nodes(self) -> int:
        return self.configs.shape[0]

    def nearest_within_delta(self, q: np.ndarray):
        q = np.asarray(q, dtype=float)
        if self.n_nodes == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        d = np.sqrt(((self.configs - q) ** 2).sum(axis=1))
        idx = np.flatnonzero(d <= self.delta)
        order = np.lexsort((idx, d[idx]))
        idx = idx[order]
        return idx, d[idx]

    def connected(self, a: int, b: int) -> bool:
        return bool(self.comp[a] == self.comp[b])

    def neighbors(self, i: int) -> dict[int, float]:
        return self.adj[i]


# ---------------------------------------------------------------------------
# persistence: versioned little-endian binary, magic THDR

_MAGIC = b"THDR"
_VERSION = 1
_HEADER = struct.Struct("<4sII dd Q")   # magic, version, dim, delta, stretch, n_nodes


class RoadmapFormatError(ValueError):
    """File is not a loadable roadmap (bad magic/version/shape/truncation)."""


def serialized_size(n_nodes: int, n_edges: int, dim: int) -> int:
    """Exact byte size save_roadmap will produce."""
    return _HEADER.size + n_nodes * (8 + 1 + 8 * dim) + 8 + n_edges * 16


def save_roadmap(rm: SparseRoadmap, path: str) -> int:
    """Write the roadmap; returns bytes written."""
    with rm._lock:
        configs = rm.configs.copy()
        types = rm.types.copy()
        edge_list = rm.edges()
    parts = [_HEADER.pack(_MAGIC, _VERSION, configs.shape[1], rm.delta, rm.stretch,
                          configs.shape[0])]
    node_rec = struct.Struct(f"<QB{configs.shape[1]}d")
    for i in range(configs.shape[0]):
        parts.append(node_rec.pack(i, int(types[i]), *configs[i]))
    parts.append(struct.pack("<Q", len(edge_list)))
    for a, b, _w in edge_list:
        parts.append(struct.pack("<QQ", a, b))
    blob = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_roadmap(path: str, space: SpaceDefinition, invariant_mask) -> SparseRoadmap:
    """Read a roadmap written by save_roadmap and rebind its predicates."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise RoadmapFormatError("truncated roadmap file: missing header")
    magic, version, dim, delta, stretch, n_nodes = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise RoadmapFormatError(f"not a roadmap file (magic {magic!r})")
    if version != _VERSION:
        raise RoadmapFormatError(f"unsupported roadmap format version {version}")
    if dim != space.dim:
        raise RoadmapFormatError(f"dimension mismatch: file has {dim}, space has {space.dim}")

    rm = SparseRoadmap(space, invariant_mask, delta=delta, stretch=stretch)
    off = _HEADER.size
    node_rec = struct.Struct(f"<QB{dim}d")
    id_map = {}
    for _ in range(n_nodes):
        if off + node_rec.size > len(blob):
            raise RoadmapFormatError("truncated roadmap file: node section cut short")
        rec = node_rec.unpack_from(blob, off)
        off += node_rec.size
        node_id, type_code = rec[0], rec[1]
        if type_code >= len(GUARD_TYPES):
            raise RoadmapFormatError(f"unknown guard type code {type_code}")
        q = np.array(rec[2:], dtype=float)
        id_map[node_id] = rm._add_node(q, GUARD_TYPES[type_code])
    if off + 8 > len(blob):
        raise RoadmapFormatError("truncated roadmap file: missing edge count")
    (n_edges,) = struct.unpack_from("<Q", blob, off)
    off += 8
    edge_rec = struct.Struct("<QQ")
    for _ in range(n_edges):
        if off + edge_rec.size > len(blob):
            raise RoadmapFormatError("truncated roadmap file: edge section cut short")
        a, b = edge_rec.unpack_from(blob, off)
        off += edge_rec.size
        if a not in id_map or b not in id_map:
            raise RoadmapFormatError(f"edge references missing node ({a}, {b})")
        rm._add_edge(id_map[a], id_map[b])
    return rm


def text_dump(rm: SparseRoadmap) -> str:
    """One node/edge per line; handy for diffing two roadmaps."""
    lines = [f"roadmap delta={rm.delta!r} stretch={rm.stretch!r}"]
    for i in range(rm.n_nodes):
        coords = " ".join(repr(float(x)) for x in rm.configs[i])
        lines.append(f"node {i} {GUARD_TYPES[rm.types[i]]} {coords}")
    for a, b, w in sorted(rm.edges()):
        lines.append(f"edge {a} {b} {w!r}")
    return "\n".join(lines) + "\n"


def roadmap_for(env: Environment, delta: float | None = None,
                stretch: float = STRETCH) -> SparseRoadmap:
    """Fresh roadmap bound to an environment family's invariant predicate."""
    return SparseRoadmap(env.space, env.invariant_mask, delta=delta, stretch=stretch)
