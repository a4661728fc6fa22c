"""Monte Carlo tree search over pick-and-place actions.

Nodes hold a scene plus the remaining placement requirements (one per
object per sub-goal).  Expanding a node runs one simulation: either the
next goal object is placed by rejection-sampling its pattern prior against
free space, or an object in the way (a stack blocker or a collider at the
last rejected pose) is relocated to a uniform free pose.  The transition
reward is the number of satisfied requirements; the search returns the
first fully satisfied node that also passes the independent goal checker.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from lgplan.geometry import Pose, poses_close
from lgplan.instruction import GoalSpec, validate_goal
from lgplan.patterns import (
    CURVE_KINDS,
    TRUNCATION_SIGMAS,
    PatternDatabase,
    PatternError,
    SamplingContext,
    build_kappa,
    curve_point,
    fixed_prior,
    sample_prior,
    uniform_pose,
)

ACTION_KINDS = ("goal_placement", "relocation", "unstack")


class PlanningFailed(RuntimeError):
    """Search ended without a verified solution."""

    def __init__(self, message, best_reward, steps_used):
        super().__init__(message)
        self.best_reward = best_reward
        self.steps_used = steps_used


@dataclass(frozen=True)
class PlannerConfig:
    budget: int = 10000
    exploration: float = math.sqrt(2.0)
    action_width: int = 8
    pose_tries: int = 64
    relocation_tries: int = 64
    check_tolerance: float = 4.0
    frozen_ids: frozenset = frozenset()

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.exploration < 0:
            raise ValueError("exploration constant must be >= 0")
        for name in ("action_width", "pose_tries", "relocation_tries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Action:
    """Move one object to a pose."""

    object_id: int
    pose: Pose
    kind: str

    def to_json(self) -> dict:
        return {
            "object": self.object_id,
            "x": self.pose.x,
            "y": self.pose.y,
            "theta": self.pose.theta,
            "level": self.pose.level,
            "kind": self.kind,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Action":
        return cls(
            object_id=int(data["object"]),
            pose=Pose(data["x"], data["y"], data["theta"], data.get("level", 0)),
            kind=data["kind"],
        )


@dataclass(frozen=True)
class Plan:
    seed: int
    steps_used: int
    actions: tuple

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "steps_used": self.steps_used,
            "actions": [a.to_json() for a in self.actions],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Plan":
        return cls(
            seed=int(data["seed"]),
            steps_used=int(data["steps_used"]),
            actions=tuple(Action.from_json(a) for a in data["actions"]),
        )


def load_plan(path) -> Plan:
    with open(path, "r", encoding="utf-8") as fh:
        return Plan.from_json(json.load(fh))


def save_plan(plan: Plan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- per-sub-goal bookkeeping ----------------------------------------------------


@dataclass(frozen=True)
class SubgoalState:
    """Placement progress of one sub-goal.

    `placed` keeps (object_id, pose) pairs in draw order; the curve for
    later samples is defined by the first two entries.  `remaining` keeps
    the listed order, so the next object to place is remaining[0].
    """

    objects: tuple
    prior: object
    anchor: int = None
    placed: tuple = ()
    remaining: tuple = None

    def __post_init__(self):
        if self.remaining is None:
            object.__setattr__(self, "remaining", tuple(self.objects))

    @property
    def satisfied(self) -> bool:
        return not self.remaining

    def with_placed(self, oid, pose) -> "SubgoalState":
        return replace(
            self,
            placed=self.placed + ((oid, pose),),
            remaining=tuple(o for o in self.remaining if o != oid),
        )

    def without(self, oid) -> "SubgoalState":
        """Re-insert one object's requirement, keeping other draws."""
        if all(o != oid for o, _ in self.placed):
            return self
        pending = set(self.remaining) | {oid}
        return replace(
            self,
            placed=tuple(e for e in self.placed if e[0] != oid),
            remaining=tuple(o for o in self.objects if o in pending),
        )

    def cleared(self) -> "SubgoalState":
        """Re-insert every requirement (the anchor moved)."""
        if not self.placed:
            return self
        return replace(self, placed=(), remaining=tuple(self.objects))

    def context(self, scene) -> SamplingContext:
        anchor_pose = None
        anchor_fp = None
        if self.anchor is not None:
            anchor_pose = scene.pose(self.anchor)
            anchor_fp = scene.object(self.anchor).footprint
        return SamplingContext(
            pattern=self.prior,
            total=len(self.objects),
            workspace=scene.workspace,
            sampled_poses=tuple(p for _, p in self.placed),
            anchor_pose=anchor_pose,
            anchor_footprint=anchor_fp,
        )


def _total_requirements(subgoal_states) -> int:
    return sum(len(s.objects) for s in subgoal_states)


def _remaining_requirements(subgoal_states) -> int:
    return sum(len(s.remaining) for s in subgoal_states)


def dependency_gate(subgoal_states, sg: SubgoalState) -> bool:
    """A sub-goal may sample only when its anchor is not itself pending."""
    if sg.anchor is None:
        return True
    return all(sg.anchor not in other.remaining for other in subgoal_states)


def _advance_states(subgoal_states, action, serving_index):
    """Propagate an action's move into every sub-goal's bookkeeping.

    Goal placements advance only the sub-goal being served; relocations
    and unstacks re-insert the moved object's requirement wherever it was
    already placed, and invalidate sub-goals anchored on the moved object
    (their regions shifted).  Cross-sub-goal drift that slips past this
    bookkeeping is caught by terminal verification.
    """
    if action.kind == "goal_placement":
        out = list(subgoal_states)
        out[serving_index] = out[serving_index].with_placed(
            action.object_id, action.pose)
        return tuple(out)
    out = []
    for sg in subgoal_states:
        updated = sg.without(action.object_id)
        if sg.anchor == action.object_id:
            updated = updated.cleared()
        out.append(updated)
    return tuple(out)


def _outside_reach(point, ws, reach) -> bool:
    dx = max(ws.x_min - point[0], 0.0, point[0] - ws.x_max)
    dy = max(ws.y_min - point[1], 0.0, point[1] - ws.y_max)
    return math.hypot(dx, dy) > reach


def _hopeless(scene, subgoal_states) -> bool:
    """True when a curve sub-goal can never finish in this branch.

    Once the first two samples fix the curve, the remaining slot centers
    are deterministic; if any sits farther outside the workspace than the
    jitter truncation plus the object's circumradius (checking the
    half-slot nudge fallback too), or the curve itself is degenerate, no
    descendant can complete the sub-goal.  Pruning such nodes at birth
    forces the search to re-draw the curve higher up instead of burning
    budget below a doomed commitment.
    """
    for sg in subgoal_states:
        if not sg.remaining or len(sg.placed) < 2:
            continue
        if sg.prior.kind not in CURVE_KINDS:
            continue
        ctx = sg.context(scene)
        try:
            kappa = build_kappa(ctx)
        except PatternError:
            return True
        sigma = sg.prior.resolve_sigma(scene.workspace)
        n = ctx.total
        ws = scene.workspace
        for i, oid in enumerate(sg.remaining):
            k = len(sg.placed) + i
            reach = TRUNCATION_SIGMAS * sigma + scene.object(oid).footprint.circumradius
            t = (k / n) % 1.0
            nudged = (t + 1.0 / (2.0 * n)) % 1.0
            if (_outside_reach(curve_point(t, kappa), ws, reach)
                    and _outside_reach(curve_point(nudged, kappa), ws, reach)):
                return True
    return False


# -- search tree ------------------------------------------------------------------


class _Node:
    __slots__ = ("scene", "subgoals", "parent", "action", "action_id",
                 "children", "untried", "visits", "value", "dead")

    def __init__(self, scene, subgoals, parent, action, action_id, config):
        self.scene = scene
        self.subgoals = subgoals
        self.parent = parent
        self.action = action
        self.action_id = action_id
        self.children = []
        self.visits = 1
        self.value = 0.0
        self.dead = _hopeless(scene, subgoals)
        slots = []
        if not self.dead:
            for i, sg in enumerate(subgoals):
                if sg.remaining and dependency_gate(subgoals, sg):
                    slots.extend([i] * config.action_width)
        self.untried = slots

    @property
    def terminal(self) -> bool:
        return _remaining_requirements(self.subgoals) == 0


def ucb_select(node: _Node, exploration: float) -> _Node:
    """Pick the child maximizing w/n + c * sqrt(ln n(parent) / n(child)).

    Only live children are considered; ties go to the lowest action id.
    """
    log_parent = math.log(node.visits)
    best = None
    best_score = -math.inf
    for child in node.children:
        if child.dead:
            continue
        score = child.value / child.visits + exploration * math.sqrt(
            log_parent / child.visits
        )
        if score > best_score or (score == best_score and best is not None
                                  and child.action_id < best.action_id):
            best = child
            best_score = score
    if best is None:
        raise PlanningFailed("ucb_select on a node with no live children", 0, 0)
    return best


def _mark_dead_upward(node):
    while node is not None and not node.dead:
        if node.untried or any(not c.dead for c in node.children):
            return
        node.dead = True
        node = node.parent


def _uniform_free_pose(scene, oid, rng, tries):
    for _ in range(tries):
        pose = uniform_pose(scene.workspace, rng)
        if scene.f_free(oid, pose):
            return pose
    return None


def simulate_step(scene, subgoal_states, sg_index, rng, config):
    """One simulation: try to advance the chosen sub-goal by one action.

    Returns (action, scene', subgoal_states') or None when the attempt
    fails (no reachable blocker, rejection without an obstacle to blame,
    infeasible or degenerate prior, or relocation tries exhausted).
    """
    sg = subgoal_states[sg_index]
    oid = sg.remaining[0]
    serving = sg_index
    if not scene.is_reachable(oid):
        blockers = [
            b for b in scene.blockers_above(oid)
            if scene.is_reachable(b) and b not in config.frozen_ids
        ]
        if not blockers:
            return None
        mover = blockers[rng.integers(len(blockers))]
        pose = _uniform_free_pose(scene, mover, rng, config.relocation_tries)
        if pose is None:
            return None
        action = Action(mover, pose, "unstack")
    else:
        ctx = sg.context(scene)
        tries = 1 if sg.prior.kind == "fixed" else config.pose_tries
        action = None
        last_rejected = None
        for _ in range(tries):
            try:
                pose = sample_prior(ctx, rng)
            except PatternError:
                return None
            if scene.f_free(oid, pose) and scene.support_ok(oid, pose):
                action = Action(oid, pose, "goal_placement")
                break
            last_rejected = pose
        if action is None:
            colliders = [
                c for c in scene.collisions_at(oid, last_rejected)
                if scene.is_reachable(c) and c not in config.frozen_ids
            ]
            if not colliders:
                return None
            obstacle = colliders[rng.integers(len(colliders))]
            pose = _uniform_free_pose(scene, obstacle, rng, config.relocation_tries)
            if pose is None:
                return None
            action = Action(obstacle, pose, "relocation")
    new_scene = scene.apply_action(action.object_id, action.pose)
    new_states = _advance_states(subgoal_states, action, serving)
    return action, new_scene, new_states


def _extract_actions(node):
    actions = []
    while node.action is not None:
        actions.append(node.action)
        node = node.parent
    actions.reverse()
    return tuple(actions)


def _search(scene, subgoal_states, rng, config, seed, verify):
    """UCT loop shared by the pattern planner and the fixed-pose baseline."""
    root = _Node(scene, tuple(subgoal_states), None, None, -1, config)
    total = _total_requirements(root.subgoals)
    best_reward = total - _remaining_requirements(root.subgoals)
    if root.terminal:
        if verify(root.scene):
            return Plan(seed=seed, steps_used=0, actions=())
        raise PlanningFailed("goal check rejects the start state", best_reward, 0)
    steps = 0
    next_action_id = 0
    while steps < config.budget:
        if root.dead:
            raise PlanningFailed(
                "search space exhausted", best_reward, steps
            )
        node = root
        while not node.untried:
            node = ucb_select(node, config.exploration)
        slot_pos = int(rng.integers(len(node.untried)))
        sg_index = node.untried.pop(slot_pos)
        steps += 1
        result = simulate_step(node.scene, node.subgoals, sg_index, rng, config)
        if result is None:
            _mark_dead_upward(node)
            continue
        action, new_scene, new_states = result
        child = _Node(new_scene, new_states, node, action, next_action_id, config)
        next_action_id += 1
        node.children.append(child)
        reward = total - _remaining_requirements(new_states)
        best_reward = max(best_reward, reward)
        walker = node
        while walker is not None:
            walker.visits += 1
            walker.value += reward
            walker = walker.parent
        child.value = reward
        if child.dead:
            _mark_dead_upward(node)
            continue
        if child.terminal:
            if verify(new_scene):
                return Plan(seed=seed, steps_used=steps,
                            actions=_extract_actions(child))
            child.dead = True
            _mark_dead_upward(node)
    raise PlanningFailed("simulation budget exhausted", best_reward, steps)


def build_subgoal_states(goal: GoalSpec, db: PatternDatabase) -> tuple:
    return tuple(
        SubgoalState(objects=tuple(sg.objects), prior=db.get(sg.pattern),
                     anchor=sg.anchor)
        for sg in goal.subgoals
    )


def mcts_plan(scene, goal: GoalSpec, config: PlannerConfig = None,
              seed: int = None, db: PatternDatabase = None) -> Plan:
    """Plan a rearrangement satisfying `goal`, or raise PlanningFailed.

    The returned plan replays action for action on the start scene and its
    final arrangement passes the goal checker.  Identical inputs and seed
    give identical plans.
    """
    from lgplan.execution import check_goal  # deferred: execution replays plans

    if config is None:
        config = PlannerConfig()
    if db is None:
        db = PatternDatabase()
    if seed is None:
        seed = scene.seed
    validate_goal(goal, scene, db)
    subgoal_states = build_subgoal_states(goal, db)
    rng = np.random.default_rng(seed)

    def verify(final_scene):
        return check_goal(final_scene, goal, db, config.check_tolerance).satisfied

    return _search(scene, subgoal_states, rng, config, seed, verify)


def pmcts_plan(scene, fixed_poses: dict, config: PlannerConfig = None,
               seed: int = None) -> Plan:
    """Baseline planner: each object must reach a pre-specified pose.

    Uses the same search with Dirac priors at the fixed poses; relocations
    of obstacles are still sampled uniformly.  Objects already at their
    fixed pose are counted as satisfied from the start.
    """
    if config is None:
        config = PlannerConfig()
    if seed is None:
        seed = scene.seed
    states = []
    for oid in sorted(fixed_poses):
        pose = fixed_poses[oid]
        st = SubgoalState(objects=(oid,), prior=fixed_prior(pose))
        if poses_close(scene.pose(oid), pose, 1e-9):
            st = st.with_placed(oid, pose)
        states.append(st)
    rng = np.random.default_rng(seed)

    def verify(final_scene):
        return all(
            poses_close(final_scene.pose(oid), fixed_poses[oid], 1e-9)
            for oid in fixed_poses
        )

    return _search(scene, tuple(states), rng, config, seed, verify)
