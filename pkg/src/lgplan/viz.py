"""Deterministic SVG rendering of scenes, pattern priors, and plans.

World frame: +x right, +y away from the viewer, so the screen y axis is
flipped.  Prior densities render as a 64x64 grayscale grid, black for zero
probability and white for the maximum cell.  Output uses fixed-precision
coordinates, so identical inputs give byte-identical files.
"""

import math

from lgplan.patterns import prior_density
from lgplan.geometry import Pose

GRID_CELLS = 64
CANVAS = 640.0
MARGIN = 20.0

_FALLBACK_FILL = "#9aa0a6"
_NAMED = {
    "red": "#d93025", "green": "#188038", "blue": "#1a73e8",
    "yellow": "#f9ab00", "purple": "#9334e6", "orange": "#e8710a",
    "gray": "#5f6368", "grey": "#5f6368", "white": "#e8eaed",
    "black": "#202124", "brown": "#8d6e63", "pink": "#e91e63",
}


def _fill(color):
    return _NAMED.get(color.strip().lower(), _FALLBACK_FILL) if color else _FALLBACK_FILL


class _Mapper:
    def __init__(self, workspace):
        self.ws = workspace
        span = max(workspace.width, workspace.height)
        self.scale = (CANVAS - 2.0 * MARGIN) / span
        self.height = workspace.height * self.scale + 2.0 * MARGIN
        self.width = workspace.width * self.scale + 2.0 * MARGIN

    def to_screen(self, x, y):
        sx = MARGIN + (x - self.ws.x_min) * self.scale
        sy = MARGIN + (self.ws.y_max - y) * self.scale
        return sx, sy


def _poly_points(mapper, verts):
    pts = []
    for x, y in verts:
        sx, sy = mapper.to_screen(x, y)
        pts.append(f"{sx:.2f},{sy:.2f}")
    return " ".join(pts)


def _density_cells(ctx, workspace):
    """Cell density values for the prior heatmap, sampled at cell centers
    with the prior's own heading convention (level ignored for display)."""
    values = []
    cw = workspace.width / GRID_CELLS
    ch = workspace.height / GRID_CELLS
    level = ctx.k if ctx.pattern.kind == "tower" else 0
    for j in range(GRID_CELLS):
        row = []
        for i in range(GRID_CELLS):
            x = workspace.x_min + (i + 0.5) * cw
            y = workspace.y_min + (j + 0.5) * ch
            row.append(prior_density(ctx, Pose(x, y, 0.0, level)))
        values.append(row)
    return values


def _heatmap_svg(mapper, ctx):
    ws = mapper.ws
    values = _density_cells(ctx, ws)
    peak = max(max(row) for row in values)
    cw = ws.width / GRID_CELLS
    ch = ws.height / GRID_CELLS
    parts = []
    for j, row in enumerate(values):
        for i, v in enumerate(row):
            shade = 0 if peak <= 0.0 else int(round(255.0 * v / peak))
            x0, y0 = mapper.to_screen(ws.x_min + i * cw, ws.y_min + (j + 1) * ch)
            parts.append(
                f'<rect x="{x0:.2f}" y="{y0:.2f}" '
                f'width="{cw * mapper.scale:.2f}" height="{ch * mapper.scale:.2f}" '
                f'fill="rgb({shade},{shade},{shade})"/>'
            )
    return parts


def _scene_layers(mapper, scene):
    parts = []
    order = sorted(scene.ids(), key=lambda o: (scene.pose(o).level, o))
    for oid in order:
        pose = scene.pose(oid)
        verts = scene.placed(oid)
        fill = _fill(scene.object(oid).color)
        parts.append(
            f'<polygon points="{_poly_points(mapper, verts)}" fill="{fill}" '
            f'fill-opacity="0.85" stroke="#202124" stroke-width="1"/>'
        )
        sx, sy = mapper.to_screen(pose.x, pose.y)
        label = f"o{oid}" if pose.level == 0 else f"o{oid}^{pose.level}"
        parts.append(
            f'<text x="{sx:.2f}" y="{sy:.2f}" font-size="12" '
            f'font-family="monospace" text-anchor="middle" '
            f'dominant-baseline="middle" fill="#ffffff" stroke="#202124" '
            f'stroke-width="0.4">{label}</text>'
        )
    return parts


def _arrow(mapper, src, dst, number):
    x0, y0 = mapper.to_screen(src.x, src.y)
    x1, y1 = mapper.to_screen(dst.x, dst.y)
    dx, dy = x1 - x0, y1 - y0
    length = math.hypot(dx, dy)
    parts = [
        f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
        f'stroke="#c5221f" stroke-width="2"/>'
    ]
    if length > 1e-9:
        ux, uy = dx / length, dy / length
        for rot in (2.6, -2.6):
            c, s = math.cos(rot), math.sin(rot)
            hx = ux * c - uy * s
            hy = ux * s + uy * c
            parts.append(
                f'<line x1="{x1:.2f}" y1="{y1:.2f}" '
                f'x2="{x1 + 10.0 * hx:.2f}" y2="{y1 + 10.0 * hy:.2f}" '
                f'stroke="#c5221f" stroke-width="2"/>'
            )
    mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    parts.append(
        f'<circle cx="{mx:.2f}" cy="{my:.2f}" r="9" fill="#c5221f"/>'
        f'<text x="{mx:.2f}" y="{my:.2f}" font-size="11" '
        f'font-family="monospace" text-anchor="middle" '
        f'dominant-baseline="middle" fill="#ffffff">{number}</text>'
    )
    return parts


def render_svg(scene, plan=None, prior_ctx=None) -> str:
    """Compose a scene SVG, optionally under a prior heatmap and over
    numbered plan arrows (arrow k is the plan's k-th move, 1-based)."""
    mapper = _Mapper(scene.workspace)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{mapper.width:.0f}" height="{mapper.height:.0f}" '
        f'viewBox="0 0 {mapper.width:.0f} {mapper.height:.0f}">',
        f'<rect width="{mapper.width:.0f}" height="{mapper.height:.0f}" '
        f'fill="#ffffff"/>',
    ]
    x0, y0 = mapper.to_screen(scene.workspace.x_min, scene.workspace.y_max)
    parts.append(
        f'<rect x="{x0:.2f}" y="{y0:.2f}" '
        f'width="{scene.workspace.width * mapper.scale:.2f}" '
        f'height="{scene.workspace.height * mapper.scale:.2f}" '
        f'fill="none" stroke="#202124" stroke-width="2"/>'
    )
    if prior_ctx is not None:
        parts.extend(_heatmap_svg(mapper, prior_ctx))
    parts.extend(_scene_layers(mapper, scene))
    if plan is not None and plan.actions:
        current = scene
        for i, action in enumerate(plan.actions, start=1):
            src = current.pose(action.object_id)
            parts.extend(_arrow(mapper, src, action.pose, i))
            current = current.apply_action(action.object_id, action.pose)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_plan_frames(scene, plan) -> list:
    """One SVG per plan prefix: frame 0 is the start, frame k the scene
    after the k-th action (replayed, so invalid plans raise early)."""
    frames = [render_svg(scene)]
    current = scene
    for action in plan.actions:
        current = current.apply_action(action.object_id, action.pose)
        frames.append(render_svg(current))
    return frames


def save_svg(text: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
