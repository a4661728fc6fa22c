"""Brute-force ground truth for tiny rearrangement instances.

Breadth-first search over a discretized pose space: each movable object
sits either at its start pose or on a cell-center grid with orientation 0
or pi/2, scenes stay flat (level 0), and a move relocates one object to
any grid pose that is collision-free against the rest.  Pairwise
collisions are precomputed per pose pair, so the search itself is table
lookups.  BFS depth gives the minimal action count.
"""

import math
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from lgplan.geometry import Pose, footprints_overlap, in_workspace, poses_close, transform_footprint
from lgplan.execution import subgoal_ok
from lgplan.patterns import PatternDatabase

ORACLE_THETAS = (0.0, math.pi / 2.0)
STATE_CAP = 10 ** 6
MAX_MOVABLE = 3
MAX_CELLS = 12


class OracleError(RuntimeError):
    pass


class OracleOverflow(OracleError):
    def __init__(self):
        super().__init__("oracle overflow")


@dataclass(frozen=True)
class OracleResult:
    solvable: bool
    optimal_actions: int
    states_explored: int


def _grid_centers(workspace, nx, ny):
    cw = workspace.width / nx
    ch = workspace.height / ny
    xs = [workspace.x_min + (i + 0.5) * cw for i in range(nx)]
    ys = [workspace.y_min + (j + 0.5) * ch for j in range(ny)]
    return xs, ys


def oracle_solve(scene, goal, grid=(8, 8), frozen_ids=frozenset(),
                 db=None, tol_sigma_mult=4.0, state_cap=STATE_CAP):
    """Decide solvability and the minimal move count on a tiny instance.

    goal is either a GoalSpec or a fixed id->Pose map (the baseline
    planner's input); fixed goals are met when every listed object sits at
    its target pose.  Raises OracleOverflow past state_cap and OracleError
    when the instance is outside the oracle's envelope (too many movables,
    too fine a grid, stacked objects).
    """
    nx, ny = grid
    if not (1 <= nx <= MAX_CELLS and 1 <= ny <= MAX_CELLS):
        raise OracleError(f"grid must be at most {MAX_CELLS}x{MAX_CELLS}")
    if db is None:
        db = PatternDatabase()
    movable = [oid for oid in scene.ids() if oid not in frozen_ids]
    if len(movable) > MAX_MOVABLE:
        raise OracleError(f"oracle supports at most {MAX_MOVABLE} movable objects")
    if any(scene.pose(oid).level != 0 for oid in scene.ids()):
        raise OracleError("oracle requires a flat scene")

    ws = scene.workspace
    frozen_polys = [scene.placed(oid) for oid in scene.ids() if oid in frozen_ids]
    xs, ys = _grid_centers(ws, nx, ny)

    # pose 0 is the object's start pose; grid poses follow
    pose_lists = []
    poly_lists = []
    for oid in movable:
        fp = scene.object(oid).footprint
        poses = [scene.pose(oid)]
        polys = [scene.placed(oid)]
        for x in xs:
            for y in ys:
                for theta in ORACLE_THETAS:
                    pose = Pose(x, y, theta, 0)
                    poly = transform_footprint(fp, pose)
                    if not in_workspace(poly, ws):
                        continue
                    if any(footprints_overlap(poly, fz) for fz in frozen_polys):
                        continue
                    poses.append(pose)
                    polys.append(poly)
        pose_lists.append(poses)
        poly_lists.append(polys)

    m = len(movable)
    pair_clear = {}
    for a in range(m):
        for b in range(a + 1, m):
            table = np.ones((len(poly_lists[a]), len(poly_lists[b])), dtype=bool)
            for ia, pa in enumerate(poly_lists[a]):
                for ib, pb in enumerate(poly_lists[b]):
                    if footprints_overlap(pa, pb):
                        table[ia, ib] = False
            pair_clear[(a, b)] = table

    def ok_pair(a, ia, b, ib):
        if a > b:
            a, b, ia, ib = b, a, ib, ia
        return pair_clear[(a, b)][ia, ib]

    base_poses = {oid: scene.pose(oid) for oid in scene.ids()}
    footprints = {oid: scene.object(oid).footprint for oid in scene.ids()}
    fixed_mode = isinstance(goal, Mapping)
    if fixed_mode:
        relevant = sorted(goal)
    else:
        relevant = sorted({o for sg in goal.subgoals for o in sg.objects}
                          | {sg.anchor for sg in goal.subgoals
                             if sg.anchor is not None})
    relevant_idx = [movable.index(o) for o in relevant if o in movable]
    goal_cache = {}

    def goal_met(state):
        key = tuple(state[i] for i in relevant_idx)
        hit = goal_cache.get(key)
        if hit is not None:
            return hit
        poses = dict(base_poses)
        for i, oid in enumerate(movable):
            poses[oid] = pose_lists[i][state[i]]
        if fixed_mode:
            ok = all(poses_close(poses[oid], goal[oid]) for oid in goal)
        else:
            ok = all(
                subgoal_ok(poses, footprints, ws, sg, db.get(sg.pattern),
                           tol_sigma_mult)[0]
                for sg in goal.subgoals
            )
        goal_cache[key] = ok
        return ok

    start = tuple(0 for _ in movable)
    if goal_met(start):
        return OracleResult(True, 0, 1)

    radix = max((len(p) for p in pose_lists), default=1)

    def encode(state):
        code = 0
        for s in state:
            code = code * radix + s
        return code

    visited = {encode(start)}
    queue = deque([(start, 0)])
    while queue:
        state, depth = queue.popleft()
        for i in range(m):
            for target in range(1, len(pose_lists[i])):
                if target == state[i]:
                    continue
                if not all(ok_pair(i, target, j, state[j])
                           for j in range(m) if j != i):
                    continue
                nxt = state[:i] + (target,) + state[i + 1:]
                code = encode(nxt)
                if code in visited:
                    continue
                if len(visited) >= state_cap:
                    raise OracleOverflow()
                visited.add(code)
                if goal_met(nxt):
                    return OracleResult(True, depth + 1, len(visited))
                queue.append((nxt, depth + 1))
    return OracleResult(False, None, len(visited))
