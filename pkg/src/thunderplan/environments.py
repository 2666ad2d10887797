"""Benchmark worlds: obstacle sets, invariant predicates, problem generation.

Two suites are built in. "point2d-five" is a point robot on the unit
square with disc/box obstacles arranged as open space, rooms joined by
narrow doors, clutter, a wall with an offset gap, and a U-shaped trap.
"arm4-five" is
a 4-link planar arm whose invariant constraints (self-collision and a
balance proxy) carve a small valid manifold out of a large joint box,
planning around workspace obstacles.

Obstacles are the *variant* constraints - they differ per environment
and can change between queries. The invariant predicate never changes
and is what experience databases are allowed to rely on.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .cspace import SpaceDefinition

# ---------------------------------------------------------------------------
# obstacles

@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("disc radius must be positive")


@dataclass(frozen=True)
class Box:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("box needs min corner < max corner on both axes")


def points_hit_obstacle(P: np.ndarray, ob) -> np.ndarray:
    """Boolean mask over (N, 2) workspace points; boundary counts as a hit."""
    if isinstance(ob, Disc):
        dx = P[:, 0] - ob.cx
        dy = P[:, 1] - ob.cy
        return dx * dx + dy * dy <= ob.r * ob.r
    if isinstance(ob, Box):
        return ((P[:, 0] >= ob.x0) & (P[:, 0] <= ob.x1)
                & (P[:, 1] >= ob.y0) & (P[:, 1] <= ob.y1))
    raise TypeError(f"unknown obstacle type {type(ob).__name__}")


def _cross2(ux, uy, vx, vy):
    return ux * vy - uy * vx


def segments_cross(A: np.ndarray, B: np.ndarray, C: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Vectorized segment intersection test: does AB touch CD?

    All arguments are (N, 2) arrays; touching endpoints and collinear
    overlap count as intersections.
    """
    CD = D - C
    AB = B - A
    d1 = _cross2(CD[:, 0], CD[:, 1], A[:, 0] - C[:, 0], A[:, 1] - C[:, 1])
    d2 = _cross2(CD[:, 0], CD[:, 1], B[:, 0] - C[:, 0], B[:, 1] - C[:, 1])
    d3 = _cross2(AB[:, 0], AB[:, 1], C[:, 0] - A[:, 0], C[:, 1] - A[:, 1])
    d4 = _cross2(AB[:, 0], AB[:, 1], D[:, 0] - A[:, 0], D[:, 1] - A[:, 1])
    hit = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) \
        & (((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0)))

    def on_seg(P, Q, R):
        # R collinear with PQ assumed; is R within PQ's bounding box?
        return ((R[:, 0] >= np.minimum(P[:, 0], Q[:, 0])) & (R[:, 0] <= np.maximum(P[:, 0], Q[:, 0]))
                & (R[:, 1] >= np.minimum(P[:, 1], Q[:, 1])) & (R[:, 1] <= np.maximum(P[:, 1], Q[:, 1])))

    # the endpoint/collinear cases are exact float zeros, rare in random
    # batches, so test each only when some row actually needs it
    for dz, (P, Q, R) in ((d1, (C, D, A)), (d2, (C, D, B)),
                          (d3, (A, B, C)), (d4, (A, B, D))):
        z = dz == 0
        if z.any():
            hit |= z & on_seg(P, Q, R)
    return hit


def segments_hit_obstacle(A: np.ndarray, B: np.ndarray, ob) -> np.ndarray:
    """Boolean mask over (N,) segments A[i] -> B[i] against one obstacle."""
    if isinstance(ob, Disc):
        # distance from disc center to each segment
        c = np.array([ob.cx, ob.cy])
        AB = B - A
        L2 = (AB**2).sum(axis=1)
        t = np.zeros(A.shape[0])
        nz = L2 > 0
        t[nz] = ((c - A[nz]) * AB[nz]).sum(axis=1) / L2[nz]
        t = np.clip(t, 0.0, 1.0)
        closest = A + t[:, None] * AB
        d2 = ((closest - c) ** 2).sum(axis=1)
        return d2 <= ob.r * ob.r
    if isinstance(ob, Box):
        # Liang-Barsky clip of each segment against the box slab-by-slab
        n = A.shape[0]
        t0 = np.zeros(n)
        t1 = np.ones(n)
        alive = np.ones(n, dtype=bool)
        D = B - A
        for axis, (lo, hi) in enumerate(((ob.x0, ob.x1), (ob.y0, ob.y1))):
            p, q = A[:, axis], D[:, axis]
            par = q == 0
            alive &= ~(par & ((p < lo) | (p > hi)))
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (lo - p) / q
                tb = (hi - p) / q
            lo_t = np.where(q > 0, ta, tb)
            hi_t = np.where(q > 0, tb, ta)
            upd = alive & ~par
            t0[upd] = np.maximum(t0[upd], lo_t[upd])
            t1[upd] = np.minimum(t1[upd], hi_t[upd])
        return alive & (t0 <= t1)
    raise TypeError(f"unknown obstacle type {type(ob).__name__}")


# ---------------------------------------------------------------------------
# environments

class Environment:
    """A named world: a configuration space plus variant obstacles.

    valid_mask() is the full predicate (bounds, invariant constraints,
    obstacle collisions); invariant_mask() drops the obstacle part and is
    what experience insertion keys on, since obstacles vary per query.
    Both take an (N, d) array and return an (N,) boolean mask, and both
    are pure. Environments are immutable after construction.
    """

    def __init__(self, env_id: str, space: SpaceDefinition, obstacles=()):
        self.id = env_id
        self.space = space
        self.obstacles = tuple(obstacles)

    def _as_batch(self, Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 1:
            Q = Q[None, :]
        if Q.ndim != 2 or Q.shape[1] != self.space.dim:
            raise ValueError(f"expected states of dimension {self.space.dim}")
        return Q

    def _bounds_mask(self, Q: np.ndarray) -> np.ndarray:
        b = self.space.bounds
        return np.all((Q >= b[:, 0]) & (Q <= b[:, 1]), axis=1)

    def invariant_mask(self, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def valid_mask(self, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_valid(self, q: np.ndarray) -> bool:
        return bool(self.valid_mask(np.asarray(q, dtype=float)[None, :])[0])

    def __repr__(self):
        return f"{type(self).__name__}({self.id!r}, {len(self.obstacles)} obstacles)"


class PointEnvironment(Environment):
    """Point robot in the plane; the workspace mapping is the identity."""

    def invariant_mask(self, Q: np.ndarray) -> np.ndarray:
        Q = self._as_batch(Q)
        return self._bounds_mask(Q)

    def valid_mask(self, Q: np.ndarray) -> np.ndarray:
        Q = self._as_batch(Q)
        ok = self._bounds_mask(Q)
        for ob in self.obstacles:
            ok &= ~points_hit_obstacle(Q, ob)
        return ok


# Arm geometry: equal-length links, base pinned at the origin, joint
# angles cumulative. The balance proxy demands the center of mass
# (uniform link masses) projects within the base support interval,
# which is tightened by 10% from its nominal +-0.20 half-width.
ARM_LINKS = 4
ARM_LINK_LENGTH = 0.25
SUPPORT_HALF_WIDTH = 0.20 * 0.90


# non-adjacent link pairs; adjacent links share a joint and always "touch"
_ARM_PAIRS = [(i, j) for i in range(ARM_LINKS) for j in range(i + 2, ARM_LINKS)]
_PAIR_A = [i for i, _ in _ARM_PAIRS]
_PAIR_B = [j for _, j in _ARM_PAIRS]


class ArmEnvironment(Environment):
    """Planar 4-link arm; invariants are self-collision and balance.

    The mask methods run one forward-kinematics pass per batch and test
    all link pairs / link-obstacle combinations in single stacked calls:
    the planner feeds them many short batches, so per-call overhead is
    what actually sets the benchmark's wall-clock speed.
    """

    def fk_joints(self, Q: np.ndarray) -> np.ndarray:
        """Joint positions for each configuration: (N, links+1, 2)."""
        Q = self._as_batch(Q)
        ang = np.cumsum(Q, axis=1)
        steps = ARM_LINK_LENGTH * np.stack([np.cos(ang), np.sin(ang)], axis=2)
        joints = np.zeros((Q.shape[0], ARM_LINKS + 1, 2))
        joints[:, 1:] = np.cumsum(steps, axis=1)
        return joints

    def _self_collision(self, joints: np.ndarray) -> np.ndarray:
        # all non-adjacent pairs at once: (N * len(_ARM_PAIRS)) segments
        A = joints[:, _PAIR_A].reshape(-1, 2)
        B = joints[:, [i + 1 for i in _PAIR_A]].reshape(-1, 2)
        C = joints[:, _PAIR_B].reshape(-1, 2)
        D = joints[:, [j + 1 for j in _PAIR_B]].reshape(-1, 2)
        hit = segments_cross(A, B, C, D).reshape(-1, len(_ARM_PAIRS))
        return hit.any(axis=1)

    def _balanced(self, joints: np.ndarray) -> np.ndarray:
        midpoints_x = 0.5 * (joints[:, :-1, 0] + joints[:, 1:, 0])
        return np.abs(midpoints_x.mean(axis=1)) <= SUPPORT_HALF_WIDTH

    def _invariant_from_joints(self, Q: np.ndarray, joints: np.ndarray) -> np.ndarray:
        ok = self._bounds_mask(Q)
        ok &= ~self._self_collision(joints)
        ok &= self._balanced(joints)
        return ok

    def invariant_mask(self, Q: np.ndarray) -> np.ndarray:
        Q = self._as_batch(Q)
        return self._invariant_from_joints(Q, self.fk_joints(Q))

    def valid_mask(self, Q: np.ndarray) -> np.ndarray:
        Q = self._as_batch(Q)
        joints = self.fk_joints(Q)
        ok = self._invariant_from_joints(Q, joints)
        if self.obstacles:
            # all links against each obstacle in one stacked call
            A = joints[:, :ARM_LINKS].reshape(-1, 2)
            B = joints[:, 1:].reshape(-1, 2)
            hit = np.zeros(A.shape[0], dtype=bool)
            for ob in self.obstacles:
                hit |= segments_hit_obstacle(A, B, ob)
            ok &= ~hit.reshape(-1, ARM_LINKS).any(axis=1)
        return ok


# ---------------------------------------------------------------------------
# built-in suites

POINT_SPACE = SpaceDefinition(bounds=np.array([[0.0, 1.0], [0.0, 1.0]]),
                              collision_resolution=0.01)
ARM_SPACE = SpaceDefinition(bounds=np.array([[-np.pi, np.pi]] * ARM_LINKS),
                            collision_resolution=0.05)


def _point2d_five():
    # pt-narrow: eight rooms separated by thick walls, joined only by
    # 0.04-wide doorways (staggered so no straight line threads two of
    # them). Almost every start/goal pair must squeeze through at least
    # one door, which is exactly the regime where a sampling planner
    # struggles and a remembered path pays off.
    door = 0.04
    rooms = [
        # vertical slab x in [0.22, 0.30], doors at y 0.11-0.15 / 0.81-0.85
        Box(0.22, 0.00, 0.30, 0.11), Box(0.22, 0.15, 0.30, 0.81),
        Box(0.22, 0.85, 0.30, 1.00),
        # vertical slab x in [0.46, 0.54], doors at y 0.31-0.35 / 0.63-0.67
        Box(0.46, 0.00, 0.54, 0.31), Box(0.46, 0.35, 0.54, 0.63),
        Box(0.46, 0.67, 0.54, 1.00),
        # vertical slab x in [0.70, 0.78], doors at y 0.25-0.29 / 0.87-0.91
        Box(0.70, 0.00, 0.78, 0.25), Box(0.70, 0.29, 0.78, 0.87),
        Box(0.70, 0.91, 0.78, 1.00),
        # horizontal slab y in [0.46, 0.54], one door per column
        Box(0.00, 0.46, 0.07, 0.54), Box(0.11, 0.46, 0.37, 0.54),
        Box(0.41, 0.46, 0.59, 0.54), Box(0.63, 0.46, 0.89, 0.54),
        Box(0.93, 0.46, 1.00, 0.54),
    ]
    assert door > 3 * POINT_SPACE.collision_resolution  # doors stay passable
    return [
        PointEnvironment("pt-open", POINT_SPACE, []),
        PointEnvironment("pt-narrow", POINT_SPACE, rooms),
        PointEnvironment("pt-clutter", POINT_SPACE, [
            Disc(0.18, 0.18, 0.08), Disc(0.50, 0.14, 0.07), Disc(0.82, 0.20, 0.08),
            Disc(0.14, 0.52, 0.07), Disc(0.46, 0.46, 0.09), Disc(0.80, 0.52, 0.07),
            Disc(0.22, 0.84, 0.08), Disc(0.54, 0.80, 0.07), Disc(0.86, 0.84, 0.08),
            Disc(0.66, 0.66, 0.05), Disc(0.34, 0.66, 0.05), Disc(0.64, 0.34, 0.05),
        ]),
        PointEnvironment("pt-wallgap", POINT_SPACE, [
            Box(0.00, 0.48, 0.15, 0.52), Box(0.27, 0.48, 1.00, 0.52),
        ]),
        PointEnvironment("pt-utrap", POINT_SPACE, [
            Box(0.30, 0.30, 0.36, 0.70), Box(0.30, 0.30, 0.70, 0.36),
            Box(0.30, 0.64, 0.70, 0.70),
        ]),
    ]


def _arm4_five():
    return [
        ArmEnvironment("arm-free", ARM_SPACE, []),
        ArmEnvironment("arm-gate", ARM_SPACE, [
            Disc(-0.45, 0.55, 0.20), Disc(0.45, 0.55, 0.20),
        ]),
        ArmEnvironment("arm-posts", ARM_SPACE, [
            Disc(-0.55, 0.10, 0.15), Disc(0.55, 0.10, 0.15), Disc(0.00, 0.78, 0.14),
        ]),
        ArmEnvironment("arm-pockets", ARM_SPACE, [
            Disc(0.00, 0.45, 0.16), Disc(-0.60, 0.50, 0.15), Disc(0.60, 0.50, 0.15),
        ]),
        ArmEnvironment("arm-fence", ARM_SPACE, [
            Box(-0.85, -0.50, -0.55, 0.50), Box(0.55, -0.50, 0.85, 0.50),
        ]),
    ]


_BUILTIN_SETS = {
    "point2d-five": _point2d_five,
    "arm4-five": _arm4_five,
}


def builtin_environment_set(name: str):
    """The named 5-environment suite, freshly constructed."""
    try:
        factory = _BUILTIN_SETS[name]
    except KeyError:
        valid = ", ".join(sorted(_BUILTIN_SETS))
        raise KeyError(f"unknown environment set {name!r}; valid names: {valid}") from None
    return factory()


def environment_by_id(env_id: str) -> Environment:
    """Look up one built-in environment across all suites."""
    for factory in _BUILTIN_SETS.values():
        for env in factory():
            if env.id == env_id:
                return env
    raise KeyError(f"unknown environment id {env_id!r}")


# ---------------------------------------------------------------------------
# problems

@dataclass(frozen=True)
class PlanningProblem:
    start: np.ndarray
    goal: np.ndarray
    environment_id: str
    time_budget: float
    seed: int

    def __post_init__(self):
        if self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


_MAX_REJECTIONS = 10_000


def sample_valid_state(env: Environment, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample one fully valid configuration."""
    # batched draws: the arm's valid manifold is thin, so single-state
    # rejection would dominate campaign setup otherwise
    for _ in range(_MAX_REJECTIONS // 64 + 1):
        Q = rng.uniform(env.space.bounds[:, 0], env.space.bounds[:, 1], size=(64, env.space.dim))
        ok = env.valid_mask(Q)
        idx = np.flatnonzero(ok)
        if idx.size:
            return Q[idx[0]].copy()
    raise RuntimeError(f"environment {env.id!r} has no reachable free space found")


def random_problem(env: Environment, seed: int, time_budget: float = 10.0,
                   start: np.ndarray | None = None) -> PlanningProblem:
    """A planning problem with rejection-sampled valid endpoints.

    Deterministic for a fixed seed. When start is given (the fixed-start
    campaign shape) only the goal is drawn.
    """
    rng = np.random.default_rng(seed)
    if start is None:
        start = sample_valid_state(env, rng)
    else:
        start = np.asarray(start, dtype=float)
        if not env.is_valid(start):
            raise ValueError("supplied start is not valid in this environment")
    goal = sample_valid_state(env, rng)
    return PlanningProblem(start=start, goal=goal, environment_id=env.id,
                           time_budget=time_budget, seed=seed)


def canonical_start(env: Environment) -> np.ndarray:
    """A deterministic valid start state derived from the environment id."""
    rng = np.random.default_rng(zlib.crc32(env.id.encode()))
    return sample_valid_state(env, rng)


# ---------------------------------------------------------------------------
# plain-text environment files

def load_env_file(path: str):
    """Parse environments from a text description file.

    Grammar, one directive per line (blank lines and '#' comments skipped):

        env <id> dim <d> arm|point     -- starts a new environment
        disc <cx> <cy> <r>             -- adds a disc obstacle
        box <x0> <y0> <x1> <y1>        -- adds a box obstacle

    Point environments must declare dim 2, arm environments dim 4.
    Returns the environments in file order.
    """
    headers = []   # (line_no, env_id, dim, kind)
    shapes = []    # per-header list of obstacles
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "env":
                if len(tok) != 5 or tok[2] != "dim":
                    raise ValueError(f"{path}:{line_no}: expected 'env <id> dim <d> arm|point'")
                kind = tok[4]
                if kind not in ("arm", "point"):
                    raise ValueError(f"{path}:{line_no}: robot kind must be 'arm' or 'point'")
                dim = int(tok[3])
                want = 2 if kind == "point" else ARM_LINKS
                if dim != want:
                    raise ValueError(f"{path}:{line_no}: {kind} environments have dim {want}")
                headers.append((line_no, tok[1], dim, kind))
                shapes.append([])
            elif tok[0] in ("disc", "box"):
                if not headers:
                    raise ValueError(f"{path}:{line_no}: shape before any 'env' header")
                want_args = 3 if tok[0] == "disc" else 4
                if len(tok) != 1 + want_args:
                    raise ValueError(f"{path}:{line_no}: '{tok[0]}' takes {want_args} numbers")
                try:
                    nums = [float(x) for x in tok[1:]]
                except ValueError:
                    raise ValueError(f"{path}:{line_no}: malformed number") from None
                shapes[-1].append(Disc(*nums) if tok[0] == "disc" else Box(*nums))
            else:
                raise ValueError(f"{path}:{line_no}: unknown directive {tok[0]!r}")
    envs = []
    seen = set()
    for (line_no, env_id, _dim, kind), obs in zip(headers, shapes):
        if env_id in seen:
            raise ValueError(f"{path}:{line_no}: duplicate environment id {env_id!r}")
        seen.add(env_id)
        cls = PointEnvironment if kind == "point" else ArmEnvironment
        space = POINT_SPACE if kind == "point" else ARM_SPACE
        envs.append(cls(env_id, space, obs))
    return envs
