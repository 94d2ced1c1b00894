"""Static SVG rendering of refined partitions.

Each leaf piece is drawn as a polygon; per-action probability intervals
colour it through RGB channels with intensity equal to the interval
midpoint. Three-action environments with {noop, right, left} keep the
conventional mapping noop=red, right=green, left=blue.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .environments import Environment
from .geometry import Halfspace, vertices_2d
from .imdp import Imdp


class DimensionError(Exception):
    pass


def partition_dump(imdp: Imdp, env: Environment, config_echo: dict) -> dict:
    """JSON-ready description of every choice piece and its intervals."""
    template = None
    leaves = []
    for st in imdp.states:
        for ci, choice in enumerate(st.choices or []):
            poly = choice.piece
            if template is None:
                template = poly.template
            leaves.append({
                "state_id": st.id,
                "choice": ci,
                "depth": st.depth,
                "bounds": [float(b) for b in poly.bounds],
                "intervals": [[iv.lower, iv.upper] for iv in choice.intervals.intervals],
            })
    return {
        "environment": env.name,
        "actions": list(env.action_names),
        "state": list(env.state_names),
        "template": {
            "kind": template.kind if template else "rect",
            "directions": template.directions.tolist() if template else [],
        },
        "config": config_echo,
        "leaves": leaves,
    }


def write_partition(path, imdp: Imdp, env: Environment, config_echo: dict) -> None:
    Path(path).write_text(json.dumps(partition_dump(imdp, env, config_echo),
                                     sort_keys=True, indent=2))


def _channel_map(actions: list[str]) -> dict[int, int]:
    if len(actions) > 3:
        raise DimensionError("RGB channel plots support at most 3 actions")
    if set(actions) == {"noop", "right", "left"}:
        named = {"noop": 0, "right": 1, "left": 2}
        return {i: named[a] for i, a in enumerate(actions)}
    return {i: i for i in range(len(actions))}


def _project_rows(directions: np.ndarray, bounds, axes: tuple[int, int]):
    rows = []
    for d, b in zip(directions, bounds):
        mask = np.ones(len(d), dtype=bool)
        mask[list(axes)] = False
        if np.any(np.abs(d[mask]) > 1e-12):
            continue  # direction leaves the projection plane
        rows.append(Halfspace(np.array([d[axes[0]], d[axes[1]]]), float(b)))
    return rows


def render_partition_svg(dump: dict, axes: tuple[int, int] | None = None,
                         size: int = 640) -> str:
    directions = np.asarray(dump["template"]["directions"], dtype=float)
    dim = directions.shape[1] if directions.size else 2
    if axes is None:
        if dim != 2:
            raise DimensionError(f"{dim}-dimensional states need an explicit axes pair")
        axes = (0, 1)
    if len(axes) != 2 or max(axes) >= dim:
        raise DimensionError(f"invalid axes {axes} for dimension {dim}")
    channel = _channel_map(dump["actions"])

    polygons = []
    all_pts = []
    for leaf in dump["leaves"]:
        rows = _project_rows(directions, leaf["bounds"], axes)
        verts = vertices_2d(rows)
        if verts.shape[0] < 3:
            continue
        rgb = [0, 0, 0]
        for a, iv in enumerate(leaf["intervals"]):
            mid = 0.5 * (iv[0] + iv[1])
            rgb[channel[a]] = int(round(255 * mid))
        polygons.append((verts, rgb))
        all_pts.append(verts)

    if not polygons:
        raise DimensionError("nothing to draw: no leaf projects to a polygon")
    pts = np.vstack(all_pts)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    margin = 0.05 * size

    def to_svg(xy):
        sx = margin + (xy[0] - lo[0]) / span[0] * (size - 2 * margin)
        sy = size - (margin + (xy[1] - lo[1]) / span[1] * (size - 2 * margin))
        return f"{sx:.2f},{sy:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">']
    state_names = dump.get("state", ["x0", "x1"])
    parts.append(f"<!-- axes: x={state_names[axes[0]]} y={state_names[axes[1]]} -->")
    for verts, rgb in polygons:
        points = " ".join(to_svg(v) for v in verts)
        fill = f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"
        parts.append(f'<polygon points="{points}" fill="{fill}" '
                     f'stroke="black" stroke-width="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def plot_file(input_path, output_path, axes: tuple[int, int] | None = None) -> int:
    """Render a partition dump to SVG; returns the polygon count."""
    dump = json.loads(Path(input_path).read_text())
    svg = render_partition_svg(dump, axes)
    Path(output_path).write_text(svg)
    return svg.count("<polygon")
