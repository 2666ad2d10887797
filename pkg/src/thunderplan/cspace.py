"""Configuration-space primitives shared by every planner.

States are plain float64 numpy arrays of shape (d,). Validity predicates
are vectorized: they take an (N, d) array of states and return an (N,)
boolean mask. All motion validation is resolution-based: a straight
segment is valid iff every interpolated state at spacing <= resolution
(endpoints included) passes the predicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two configurations."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def interpolate(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    """State at fraction s in [0, 1] along the straight segment a -> b."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation fraction {s} outside [0, 1]")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a + s * (b - a)


def segment_states(a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    """All states along a -> b at spacing <= resolution, endpoints included.

    Returns an (k+1, d) array; k = ceil(dist / resolution), so a == b
    yields the single state a.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = float(np.linalg.norm(b - a))
    if d == 0.0:
        return a[None, :].copy()
    k = int(np.ceil(d / resolution - 1e-12))
    fractions = np.linspace(0.0, 1.0, k + 1)
    return a[None, :] + fractions[:, None] * (b - a)[None, :]


@dataclass(frozen=True)
class SpaceDefinition:
    """A bounded d-dimensional real configuration space.

    bounds is a (d, 2) array of per-axis [low, high]; collision_resolution
    is the spacing between successive validity checks along a segment.
    """

    bounds: np.ndarray
    collision_resolution: float

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ValueError("bounds must have shape (d, 2)")
        if not np.all(bounds[:, 0] < bounds[:, 1]):
            raise ValueError("each axis needs low < high")
        extents = bounds[:, 1] - bounds[:, 0]
        if self.collision_resolution <= 0:
            raise ValueError("collision_resolution must be positive")
        if self.collision_resolution >= extents.min():
            raise ValueError("collision_resolution must be below the shortest axis extent")
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def diagonal(self) -> float:
        """Maximum extent of the space (diagonal of the bounding box)."""
        return float(np.linalg.norm(self.bounds[:, 1] - self.bounds[:, 0]))

    def clip(self, coords) -> np.ndarray:
        """Construct a valid configuration by clamping coords into bounds."""
        q = np.asarray(coords, dtype=float)
        if q.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates, got shape {q.shape}")
        return np.clip(q, self.bounds[:, 0], self.bounds[:, 1])

    def contains(self, q: np.ndarray) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.bounds[:, 0]) and np.all(q <= self.bounds[:, 1]))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.bounds[:, 0], self.bounds[:, 1])


@dataclass
class GeometricPath:
    """An ordered waypoint sequence; the unit of experience.

    waypoints is an (N, d) array with N >= 1. Length is the sum of
    consecutive-pair distances, cached on first use.
    """

    waypoints: np.ndarray
    _length: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim == 1:
            wp = wp[None, :]
        if wp.ndim != 2 or wp.shape[0] < 1:
            raise ValueError("a path needs at least one waypoint of shape (N, d)")
        self.waypoints = wp

    @property
    def dim(self) -> int:
        return self.waypoints.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]

    @property
    def length(self) -> float:
        if self._length is None:
            diffs = np.diff(self.waypoints, axis=0)
            self._length = float(np.sqrt((diffs**2).sum(axis=1)).sum())
        return self._length

    def segment_lengths(self) -> np.ndarray:
        diffs = np.diff(self.waypoints, axis=0)
        return np.sqrt((diffs**2).sum(axis=1))

    def point_at(self, s: float) -> np.ndarray:
        """State at arc length s from the start (clamped to [0, length])."""
        seg = self.segment_lengths()
        s = min(max(s, 0.0), self.length)
        acc = 0.0
        for i, L in enumerate(seg):
            if L == 0.0:
                continue
            if s <= acc + L or i == len(seg) - 1:
                t = (s - acc) / L
                t = min(max(t, 0.0), 1.0)
                return self.waypoints[i] + t * (self.waypoints[i + 1] - self.waypoints[i])
            acc += L
        return self.waypoints[-1].copy()

    def resample(self, n: int) -> "GeometricPath":
        """Re-discretize to exactly n waypoints at uniform arc-length spacing."""
        if n < 1:
            raise ValueError("need n >= 1")
        if n == 1 or self.length == 0.0:
            return GeometricPath(np.repeat(self.waypoints[:1], n, axis=0))
        stations = np.linspace(0.0, self.length, n)
        return GeometricPath(np.array([self.point_at(s) for s in stations]))


def discretize_path(path: GeometricPath, resolution: float):
    """States covering the path at gaps <= resolution, original waypoints kept.

    Returns (states, arc_lengths): an (M, d) array in start-to-goal order
    and the arc-length station of each state. Consecutive duplicate
    waypoints collapse, so a zero-length path yields exactly one state.
    Each segment is sampled with segment_states, bit-for-bit the grid
    that motion checks use, so a checked path re-checks cleanly.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    wp = path.waypoints
    if wp.shape[0] == 0:
        raise ValueError("empty path")
    states = [wp[0][None, :]]
    arcs = [np.zeros(1)]
    acc = 0.0
    for i in range(wp.shape[0] - 1):
        a, b = wp[i], wp[i + 1]
        L = float(np.linalg.norm(b - a))
        if L == 0.0:
            continue
        seg = segment_states(a, b, resolution)
        states.append(seg[1:])
        k = seg.shape[0] - 1
        arcs.append(acc + L * (np.arange(1, k + 1) / k))
        acc += L
    return np.concatenate(states), np.concatenate(arcs)


def check_motion(a: np.ndarray, b: np.ndarray, valid_mask, resolution: float,
                 budget=None) -> bool:
    """True iff every state along a -> b at spacing <= resolution is valid.

    valid_mask takes an (N, d) array and returns an (N,) boolean mask.
    Endpoints are checked first: most invalid segments fail at an endpoint
    near an obstacle, and the early exit is cheap. When a budget is given,
    one work unit is charged per state actually evaluated.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    ends = valid_mask(np.stack([a, b]))
    if budget is not None:
        budget.charge(2)
    if not bool(ends.all()):
        return False
    states = segment_states(a, b, resolution)
    if states.shape[0] <= 2:
        return True
    interior = states[1:-1]
    if budget is not None:
        budget.charge(interior.shape[0])
    return bool(valid_mask(interior).all())
