"""SVG rendering of roadmaps and environments.

Point-robot worlds draw in workspace coordinates directly. Arm worlds
are rendered by projecting each roadmap node through forward kinematics
to its end-effector position - a reduced image of the configuration,
enough to see coverage structure. Guard colors: coverage orange,
connectivity blue, interface green, quality purple.
"""

from __future__ import annotations

import numpy as np

from .environments import ArmEnvironment, Box, Disc, Environment
from .sparsdb import GUARD_TYPES, SparseRoadmap

GUARD_COLORS = {
    "coverage": "#e6882e",
    "connectivity": "#2e6fe6",
    "interface": "#2ea35b",
    "quality": "#8e44ad",
}

_CANVAS = 720.0
_MARGIN = 24.0


def _projector(env: Environment):
    """Map configs to workspace points, plus the workspace bounding box."""
    if isinstance(env, ArmEnvironment):
        reach = 1.05  # all joints extended plus margin
        def project(Q):
            return env.fk_joints(Q)[:, -1, :]
        return project, (-reach, -reach, reach, reach)
    b = env.space.bounds
    return (lambda Q: np.asarray(Q, dtype=float)), (b[0, 0], b[1, 0], b[0, 1], b[1, 1])


class _Canvas:
    def __init__(self, box):
        x0, y0, x1, y1 = box
        span = max(x1 - x0, y1 - y0)
        self.scale = (_CANVAS - 2 * _MARGIN) / span
        self.x0, self.y0, self.y1 = x0, y0, y1
        self.parts = []

    def pt(self, x, y):
        # flip y: SVG grows downward, the workspace grows upward
        return (_MARGIN + (x - self.x0) * self.scale,
                _MARGIN + (self.y1 - y) * self.scale)

    def add(self, element: str):
        self.parts.append(element)

    def tostring(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{_CANVAS:.0f}" height="{_CANVAS:.0f}" '
                f'viewBox="0 0 {_CANVAS:.0f} {_CANVAS:.0f}">\n'
                f'<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")


def _draw_obstacles(canvas: _Canvas, env: Environment):
    for ob in env.obstacles:
        if isinstance(ob, Disc):
            cx, cy = canvas.pt(ob.cx, ob.cy)
            canvas.add(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" '
                       f'r="{ob.r * canvas.scale:.2f}" fill="#c8c8c8" '
                       f'class="obstacle"/>')
        elif isinstance(ob, Box):
            x, y = canvas.pt(ob.x0, ob.y1)
            w = (ob.x1 - ob.x0) * canvas.scale
            h = (ob.y1 - ob.y0) * canvas.scale
            canvas.add(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" '
                       f'height="{h:.2f}" fill="#c8c8c8" class="obstacle"/>')


def render_roadmap_svg(rm: SparseRoadmap, env: Environment, out_path: str) -> dict:
    """Write an SVG of the roadmap in its environment.

    Returns element counts {"nodes": ..., "edges": ..., "obstacles": ...}
    so callers can reconcile them against database counts.
    """
    if rm.space.dim != env.space.dim:
        raise ValueError(f"roadmap dimension {rm.space.dim} does not match "
                         f"environment dimension {env.space.dim}")
    if not isinstance(env, ArmEnvironment) and env.space.dim != 2:
        raise ValueError("only 2-dimensional spaces and arm environments "
                         "have a rendering projection")
    project, box = _projector(env)
    canvas = _Canvas(box)
    _draw_obstacles(canvas, env)

    if rm.n_nodes:
        pts = project(rm.configs)
        for a, b, _w in rm.edges():
            xa, ya = canvas.pt(*pts[a])
            xb, yb = canvas.pt(*pts[b])
            canvas.add(f'<line x1="{xa:.2f}" y1="{ya:.2f}" x2="{xb:.2f}" '
                       f'y2="{yb:.2f}" stroke="#666" stroke-width="1" '
                       f'class="edge"/>')
        for i in range(rm.n_nodes):
            x, y = canvas.pt(*pts[i])
            color = GUARD_COLORS[GUARD_TYPES[rm.types[i]]]
            canvas.add(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" '
                       f'fill="{color}" class="node"/>')

    with open(out_path, "w") as fh:
        fh.write(canvas.tostring())
    return {"nodes": rm.n_nodes, "edges": rm.n_edges,
            "obstacles": len(env.obstacles)}


def render_store_svg(store, env: Environment, out_path: str) -> dict:
    """Write an SVG of a path store: every stored path as a polyline."""
    if not isinstance(env, ArmEnvironment) and env.space.dim != 2:
        raise ValueError("only 2-dimensional spaces and arm environments "
                         "have a rendering projection")
    project, box = _projector(env)
    canvas = _Canvas(box)
    _draw_obstacles(canvas, env)
    for p in store.paths:
        pts = project(p.waypoints)
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (canvas.pt(*w) for w in pts))
        canvas.add(f'<polyline points="{coords}" fill="none" stroke="#2e6fe6" '
                   f'stroke-width="1" stroke-opacity="0.45" class="path"/>')
    with open(out_path, "w") as fh:
        fh.write(canvas.tostring())
    return {"paths": len(store.paths), "obstacles": len(env.obstacles)}
