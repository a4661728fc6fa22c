"""Plan replay and independent goal checking.

Replay applies a plan action by action, re-validating reachability,
bounds, collisions and support at every step.  Goal checking refits each
sub-goal's pattern to the final poses and accepts residuals up to
tol_sigma_mult times the pattern's sampling jitter, so any arrangement the
sampler can produce (jitter is truncated at 4 sigma) passes at the default
tolerance of 4.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from lgplan.geometry import footprints_overlap, in_workspace
from lgplan.instruction import GoalSpec
from lgplan.patterns import PatternDatabase, PatternError, spatial_region
from lgplan.scene import ActionError, Scene


@dataclass(frozen=True)
class ReplayReport:
    ok: bool
    steps: int
    failed_step: int = None
    reason: str = None
    final_scene: Scene = None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "steps": self.steps,
            "failed_step": self.failed_step,
            "reason": self.reason,
        }


def replay(scene: Scene, plan) -> ReplayReport:
    """Execute a plan's actions in order on a scene snapshot.

    Stops at the first invalid action; the report carries the 0-based step
    index and the failure reason.
    """
    current = scene
    for i, action in enumerate(plan.actions):
        try:
            current = current.apply_action(action.object_id, action.pose)
        except ActionError as exc:
            return ReplayReport(
                ok=False, steps=i, failed_step=i,
                reason=f"{exc.kind}: {exc}", final_scene=current,
            )
    return ReplayReport(ok=True, steps=len(plan.actions), final_scene=current)


# -- pattern refits ---------------------------------------------------------------


def fit_line(points: np.ndarray):
    """Total-least-squares line; returns (centroid, direction, residuals)."""
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    direction = eigvecs[:, int(np.argmax(eigvals))]
    normal = np.array([-direction[1], direction[0]])
    residuals = centered @ normal
    return mean, direction, residuals


def fit_circle(points: np.ndarray):
    """Algebraic least-squares circle; returns (center, radius, residuals)."""
    x, y = points[:, 0], points[:, 1]
    a = np.column_stack([2.0 * x, 2.0 * y, np.ones(len(points))])
    b = x * x + y * y
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy, c = sol
    r_sq = c + cx * cx + cy * cy
    if not np.isfinite(r_sq) or r_sq <= 0:
        return np.array([cx, cy]), math.inf, np.full(len(points), math.inf)
    r = math.sqrt(r_sq)
    residuals = np.hypot(x - cx, y - cy) - r
    return np.array([cx, cy]), r, residuals


def _rect_perimeter_distance(x, y, x0, x1, y0, y1):
    dx = max(x0 - x, 0.0, x - x1)
    dy = max(y0 - y, 0.0, y - y1)
    if dx > 0.0 or dy > 0.0:
        return math.hypot(dx, dy)
    return min(x - x0, x1 - x, y - y0, y1 - y)


def fit_rectangle(points: np.ndarray):
    """Best axis-aligned rectangle outline through two of the points.

    The sampler pins two opposite corners exactly, so the fit searches
    candidate corner pairs and keeps the one minimizing the worst
    perimeter distance.  Returns (bounds, residuals) or (None, inf).
    """
    n = len(points)
    best = None
    best_worst = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            x0, x1 = sorted((points[i, 0], points[j, 0]))
            y0, y1 = sorted((points[i, 1], points[j, 1]))
            if x1 - x0 < 1e-6 or y1 - y0 < 1e-6:
                continue
            worst = 0.0
            for k in range(n):
                d = _rect_perimeter_distance(points[k, 0], points[k, 1],
                                             x0, x1, y0, y1)
                if d > worst:
                    worst = d
                if worst >= best_worst:
                    break
            if worst < best_worst:
                best_worst = worst
                best = (x0, x1, y0, y1)
    if best is None:
        return None, np.array([math.inf])
    residuals = np.array([
        _rect_perimeter_distance(px, py, *best) for px, py in points
    ])
    return best, residuals


# -- goal checking ------------------------------------------------------------------


@dataclass(frozen=True)
class SubgoalCheck:
    pattern: str
    objects: tuple
    ok: bool
    detail: str

    def to_json(self) -> dict:
        return {
            "pattern": self.pattern,
            "objects": list(self.objects),
            "ok": self.ok,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class GoalCheckReport:
    satisfied: bool
    collision_free: bool
    subgoals: tuple

    def to_json(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "collision_free": self.collision_free,
            "subgoals": [sc.to_json() for sc in self.subgoals],
        }


def _scene_collision_free(scene: Scene) -> bool:
    ids = scene.ids()
    for i, a in enumerate(ids):
        if not in_workspace(scene.placed(a), scene.workspace):
            return False
        for b in ids[i + 1:]:
            if scene.pose(a).level != scene.pose(b).level:
                continue
            if footprints_overlap(scene.placed(a), scene.placed(b)):
                return False
    return True


def subgoal_ok(poses, footprints, workspace, sg, prior, tol_mult):
    """Check one sub-goal against a plain id->Pose map.

    Returns (ok, detail).  Shared by check_goal and the grid oracle, which
    evaluates arrangements without building Scene snapshots.
    """
    points = np.array([[poses[o].x, poses[o].y] for o in sg.objects])
    n = len(points)
    kind = prior.kind
    if kind == "spatial":
        try:
            region = spatial_region(
                prior.params["relation"],
                poses[sg.anchor],
                footprints[sg.anchor],
                workspace,
                prior.params.get("gap_min"),
                prior.params.get("gap_max"),
            )
        except PatternError as exc:
            return False, str(exc)
        outside = [
            o for o, (x, y) in zip(sg.objects, points)
            if not region.contains(x, y)
        ]
        if outside:
            return False, f"objects {outside} outside the {prior.params['relation']} region"
        return True, "in region"
    if kind == "tower":
        sigma = prior.resolve_sigma(workspace)
        tol = tol_mult * sigma
        levels = [poses[o].level for o in sg.objects]
        if levels != list(range(n)):
            return False, f"levels {levels} are not 0..{n - 1} bottom-first"
        base = points[0]
        drift = np.hypot(points[:, 0] - base[0], points[:, 1] - base[1])
        if float(drift.max()) > tol:
            return False, f"stack drift {drift.max():.4f} exceeds {tol:.4f}"
        return True, "stacked"
    sigma = prior.resolve_sigma(workspace)
    tol = tol_mult * sigma
    if kind == "line":
        if n <= 2:
            return True, "trivial line"
        _, _, residuals = fit_line(points)
        worst = float(np.abs(residuals).max())
        if worst > tol:
            return False, f"line residual {worst:.4f} exceeds {tol:.4f}"
        return True, f"line residual {worst:.4f}"
    if kind == "circle":
        if n <= 2:
            return True, "trivial circle"
        _, radius, residuals = fit_circle(points)
        if radius > workspace.diagonal:
            return False, f"fitted radius {radius:.3f} exceeds the workspace diagonal"
        worst = float(np.abs(residuals).max())
        if worst > tol:
            return False, f"circle residual {worst:.4f} exceeds {tol:.4f}"
        return True, f"circle residual {worst:.4f}"
    if kind == "rectangle":
        if n <= 2:
            return True, "trivial rectangle"
        _, residuals = fit_rectangle(points)
        worst = float(np.abs(residuals).max())
        if worst > tol:
            return False, f"rectangle residual {worst:.4f} exceeds {tol:.4f}"
        return True, f"rectangle residual {worst:.4f}"
    return False, f"no checker for pattern kind {kind!r}"


def check_goal(scene: Scene, goal: GoalSpec, db: PatternDatabase = None,
               tol_sigma_mult: float = 4.0) -> GoalCheckReport:
    """Verify a goal against a scene by refitting each pattern.

    Pattern checks are relabel-invariant for unordered patterns; towers
    additionally require bottom-first levels.  The report also carries a
    scene-wide collision and bounds audit.
    """
    if db is None:
        db = PatternDatabase()
    known = set(scene.ids())
    poses = {oid: scene.pose(oid) for oid in known}
    footprints = {oid: scene.object(oid).footprint for oid in known}
    checks = []
    for sg in goal.subgoals:
        prior = db.get(sg.pattern)
        missing = [o for o in sg.objects if o not in known]
        if missing:
            checks.append(SubgoalCheck(sg.pattern, sg.objects, False,
                                       f"unknown objects {missing}"))
            continue
        ok, detail = subgoal_ok(poses, footprints, scene.workspace, sg,
                                prior, tol_sigma_mult)
        checks.append(SubgoalCheck(sg.pattern, sg.objects, ok, detail))
    collision_free = _scene_collision_free(scene)
    satisfied = collision_free and all(c.ok for c in checks)
    return GoalCheckReport(
        satisfied=satisfied, collision_free=collision_free, subgoals=tuple(checks)
    )


def save_replay_report(report: ReplayReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
