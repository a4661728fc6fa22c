"""Seeded benchmark harness: task generation, metrics, suite files.

Every generated task carries a stored witness arrangement (a full id to
pose map that passes the goal checker), so the planning success rate
measures the planner rather than generator luck.  Suites, reports and the
CSV summary are all deterministic for a given seed; wall_ms is recorded
but excluded from reproducibility comparisons.
"""

import csv
import json
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from lgplan.execution import check_goal, replay
from lgplan.geometry import Footprint, Pose, Workspace, footprints_overlap, in_workspace, transform_footprint
from lgplan.instruction import GoalSpec, SubGoal
from lgplan.patterns import (
    PatternDatabase,
    PatternError,
    SamplingContext,
    sample_prior,
    uniform_pose,
)
from lgplan.planner import PlannerConfig, PlanningFailed, mcts_plan, pmcts_plan
from lgplan.scene import Scene, SceneObject

TAGS = ("single_pattern", "multi_pattern", "infeasible_start", "crowded")
CROWDED_FREE_RATIO = 0.35
CROWDED_PROBE_SAMPLES = 256

_SHAPES = ("cube", "bar", "disk", "wedge", "tile", "prism")
_COLORS = ("red", "green", "blue", "yellow", "purple", "orange", "gray")


class BenchError(RuntimeError):
    pass


class UngeneratableConfig(BenchError):
    def __init__(self, detail=""):
        message = "ungeneratable config"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


@dataclass(frozen=True)
class BenchConfig:
    n_goal_objects: int = 4
    n_distractors: int = 2
    workspace_size: float = 1.0
    pattern_pool: tuple = ("line", "circle", "rectangle", "spatial:left",
                           "spatial:right", "spatial:front", "spatial:behind")
    p_multi_pattern: float = 0.5
    p_infeasible_start: float = 0.2
    crowding_density: float = 0.0
    min_half_extent: float = 0.03
    max_half_extent: float = 0.06
    place_tries: int = 256
    witness_tries: int = 32

    def __post_init__(self):
        if self.n_goal_objects < 1:
            raise BenchError("n_goal_objects must be >= 1")
        if self.n_distractors < 0:
            raise BenchError("n_distractors must be >= 0")
        if self.workspace_size <= 0:
            raise BenchError("workspace_size must be positive")
        if not self.pattern_pool:
            raise BenchError("pattern_pool must be nonempty")
        for name in ("p_multi_pattern", "p_infeasible_start"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise BenchError(f"{name} must be in [0,1]")
        if not 0.0 <= self.crowding_density < 1.0:
            raise BenchError("crowding_density must be in [0,1)")
        if not 0 < self.min_half_extent <= self.max_half_extent:
            raise BenchError("half-extent bounds must be positive and ordered")
        if min(self.place_tries, self.witness_tries) < 1:
            raise BenchError("retry budgets must be >= 1")

    def to_json(self) -> dict:
        return {
            "n_goal_objects": self.n_goal_objects,
            "n_distractors": self.n_distractors,
            "workspace_size": self.workspace_size,
            "pattern_pool": list(self.pattern_pool),
            "p_multi_pattern": self.p_multi_pattern,
            "p_infeasible_start": self.p_infeasible_start,
            "crowding_density": self.crowding_density,
            "min_half_extent": self.min_half_extent,
            "max_half_extent": self.max_half_extent,
            "place_tries": self.place_tries,
            "witness_tries": self.witness_tries,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise BenchError(f"unknown bench config keys: {', '.join(unknown)}")
        kwargs = dict(data)
        if "pattern_pool" in kwargs:
            kwargs["pattern_pool"] = tuple(kwargs["pattern_pool"])
        return cls(**kwargs)


@dataclass(frozen=True)
class TaskInstance:
    scene: Scene
    goal: GoalSpec
    tags: tuple
    instance_seed: int
    witness: dict = field(compare=False)

    @property
    def goal_ids(self):
        seen = []
        for sg in self.goal.subgoals:
            for oid in sg.objects:
                if oid not in seen:
                    seen.append(oid)
        return tuple(seen)

    def fixed_goal_poses(self) -> dict:
        """Witness poses for every object the goal mentions.

        Anchors count: the witness generator may relocate one, and the
        certified relations hold against its witness pose, not its start.
        """
        ids = list(self.goal_ids)
        for sg in self.goal.subgoals:
            if sg.anchor is not None and sg.anchor not in ids:
                ids.append(sg.anchor)
        return {oid: self.witness[oid] for oid in ids}

    def to_json(self) -> dict:
        return {
            "scene": self.scene.to_json(),
            "goal": self.goal.to_json(),
            "tags": list(self.tags),
            "instance_seed": self.instance_seed,
            "witness": {str(oid): pose.to_json()
                        for oid, pose in sorted(self.witness.items())},
        }

    @classmethod
    def from_json(cls, data: dict) -> "TaskInstance":
        return cls(
            scene=Scene.from_json(data["scene"]),
            goal=GoalSpec.from_json(data["goal"]),
            tags=tuple(data["tags"]),
            instance_seed=int(data["instance_seed"]),
            witness={int(k): Pose.from_json(v)
                     for k, v in data["witness"].items()},
        )


def save_task(task: TaskInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(task.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_task(path) -> TaskInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return TaskInstance.from_json(json.load(fh))


# -- generation ---------------------------------------------------------------------


def _random_footprint(rng, config) -> Footprint:
    lo, hi = config.min_half_extent, config.max_half_extent
    if rng.random() < 0.6:
        w = 2.0 * rng.uniform(lo, hi)
        h = 2.0 * rng.uniform(lo, hi)
        return Footprint.box(w, h)
    sides = int(rng.integers(3, 7))
    return Footprint.regular(sides, rng.uniform(lo, hi))


def _collides_any(poly, others) -> bool:
    return any(footprints_overlap(poly, o) for o in others)


def _free_pose_ratio(probe: Footprint, ws, flat_polys, rng,
                     samples: int = CROWDED_PROBE_SAMPLES) -> float:
    """Fraction of uniform placements of `probe` that land collision-free.

    Raw covered-area ratios understate clutter: a scene can be hard to
    place into long before half the table is covered, because every
    obstacle blocks a whole dilated neighbourhood of centre poses.  This
    Monte Carlo probe measures the quantity that actually matters to the
    sampler, the chance that a fresh placement attempt survives.
    """
    free = 0
    for _ in range(samples):
        pose = uniform_pose(ws, rng)
        poly = transform_footprint(probe, pose)
        if in_workspace(poly, ws) and not _collides_any(poly, flat_polys):
            free += 1
    return free / samples


def _place_uniform(fp, ws, rng, taken_polys, tries):
    """Uniform collision-free flat pose, or None when the budget runs out."""
    for _ in range(tries):
        pose = uniform_pose(ws, rng)
        poly = transform_footprint(fp, pose)
        if not in_workspace(poly, ws):
            continue
        if _collides_any(poly, taken_polys):
            continue
        return pose, poly
    return None


def _draw_structure(config, rng, db):
    """Pick patterns, allot object ids, and return sub-goal blueprints.

    Returns (subgoal specs, anchor-only ids, next free id).  A spec is
    (pattern_name, object ids, anchor id or None).  In multi-pattern tasks
    only the second sub-goal may anchor on a member of the first, which
    keeps anchor dependencies acyclic by construction.
    """
    pool = list(config.pattern_pool)
    for name in pool:
        db.get(name)
    multi = len(pool) >= 2 and rng.random() < config.p_multi_pattern
    count = 2 if multi else 1
    picks = [pool[i] for i in rng.choice(len(pool), size=count, replace=False)]
    next_id = 1
    specs = []
    anchor_only = []
    for i, name in enumerate(picks):
        objects = tuple(range(next_id, next_id + config.n_goal_objects))
        next_id += config.n_goal_objects
        anchor = None
        if db.get(name).kind == "spatial":
            prev_objects = specs[0][1] if i == 1 else ()
            if prev_objects and rng.random() < 0.5:
                anchor = int(prev_objects[rng.integers(len(prev_objects))])
            else:
                anchor = next_id
                next_id += 1
                anchor_only.append(anchor)
        specs.append((name, objects, anchor))
    return specs, anchor_only, next_id


def _witness_for(scene, specs, db, rng, config):
    """Sample a full arrangement that the goal checker accepts.

    Goal objects are drawn from their pattern priors (anchored sub-goals
    after the sub-goal that owns their anchor); every other object keeps
    its start pose when collision-free, otherwise moves to a uniform free
    pose.  Objects starting above level 0 are always grounded.
    """
    ws = scene.workspace
    goal_ids = {oid for _, objects, _ in specs for oid in objects}
    order = sorted(range(len(specs)),
                   key=lambda i: specs[i][2] in goal_ids if specs[i][2] else False)
    for _ in range(config.witness_tries):
        witness = {}
        polys = {}
        ok = True
        for idx in order:
            name, objects, anchor = specs[idx]
            prior = db.get(name)
            if anchor is not None and anchor not in witness:
                pose = scene.pose(anchor)
                poly = scene.placed(anchor)
                flat = [p for o, p in polys.items() if witness[o].level == 0]
                if pose.level != 0 or _collides_any(poly, flat):
                    # start spot is stacked or already claimed by an earlier
                    # sub-goal; ground the anchor somewhere free instead
                    spot = _place_uniform(scene.object(anchor).footprint, ws,
                                          rng, flat, config.place_tries)
                    if spot is None:
                        ok = False
                        break
                    pose, poly = spot
                witness[anchor] = pose
                polys[anchor] = poly
            drawn = ()
            for oid in objects:
                fp = scene.object(oid).footprint
                ctx = SamplingContext(
                    pattern=prior, total=len(objects), workspace=ws,
                    sampled_poses=drawn,
                    anchor_pose=witness[anchor] if anchor is not None else None,
                    anchor_footprint=(scene.object(anchor).footprint
                                      if anchor is not None else None),
                )
                placed = None
                for _ in range(config.place_tries):
                    try:
                        pose = sample_prior(ctx, rng)
                    except PatternError:
                        break
                    poly = transform_footprint(fp, pose)
                    if not in_workspace(poly, ws):
                        continue
                    same_level = [p for o, p in polys.items()
                                  if witness[o].level == pose.level]
                    if _collides_any(poly, same_level):
                        continue
                    placed = pose, poly
                    break
                if placed is None:
                    ok = False
                    break
                witness[oid], polys[oid] = placed
                drawn = drawn + (placed[0],)
            if not ok:
                break
        if not ok:
            continue
        for oid in scene.ids():
            if oid in witness:
                continue
            pose = scene.pose(oid)
            poly = scene.placed(oid)
            grounded = pose.level == 0
            same_level = [p for o, p in polys.items() if witness[o].level == 0]
            if grounded and not _collides_any(poly, same_level):
                witness[oid], polys[oid] = pose, poly
                continue
            spot = _place_uniform(scene.object(oid).footprint, ws, rng,
                                  same_level, config.place_tries)
            if spot is None:
                ok = False
                break
            witness[oid], polys[oid] = spot
        if not ok:
            continue
        return witness
    return None


def gen_task(config: BenchConfig, seed: int, db: PatternDatabase = None) -> TaskInstance:
    """Generate one solvable task; raises UngeneratableConfig if the
    placement or witness budget runs out."""
    if db is None:
        db = PatternDatabase()
    rng = np.random.default_rng(seed)
    size = config.workspace_size
    ws = Workspace(0.0, size, 0.0, size)
    specs, anchor_only, next_id = _draw_structure(config, rng, db)

    objects = {}
    for _, goal_objs, _ in specs:
        for oid in goal_objs:
            objects[oid] = _random_footprint(rng, config)
    for oid in anchor_only:
        objects[oid] = _random_footprint(rng, config)
    for _ in range(config.n_distractors):
        objects[next_id] = _random_footprint(rng, config)
        next_id += 1

    poses = {}
    polys = []
    for oid, fp in objects.items():
        spot = _place_uniform(fp, ws, rng, polys, config.place_tries)
        if spot is None:
            raise UngeneratableConfig("start placement budget exhausted")
        poses[oid] = spot[0]
        polys.append(spot[1])

    tags = ["multi_pattern" if len(specs) > 1 else "single_pattern"]

    if rng.random() < config.p_infeasible_start:
        goal_ids = [oid for _, objs, _ in specs for oid in objs]
        target = goal_ids[rng.integers(len(goal_ids))]
        base = objects[target]
        # centered small box: its circumradius stays inside the supporter's
        # inscribed circle for any regular or box footprint, so the support
        # overlap rule holds for free
        half = 0.35 * base.circumradius
        objects[next_id] = Footprint.box(2.0 * half, 2.0 * half)
        poses[next_id] = Pose(poses[target].x, poses[target].y, 0.0, 1)
        next_id += 1
        tags.append("infeasible_start")

    if config.crowding_density > 0.0:
        occupied = sum(fp.area for oid, fp in objects.items()
                       if poses[oid].level == 0) / ws.area
        while occupied < config.crowding_density:
            fp = _random_footprint(rng, config)
            flat = [transform_footprint(objects[o], poses[o])
                    for o in objects if poses[o].level == 0]
            spot = _place_uniform(fp, ws, rng, flat, config.place_tries)
            if spot is None:
                break
            objects[next_id] = fp
            poses[next_id] = spot[0]
            next_id += 1
            occupied += fp.area / ws.area

    scene_objects = []
    for oid, fp in objects.items():
        shape = _SHAPES[int(rng.integers(len(_SHAPES)))]
        color = _COLORS[int(rng.integers(len(_COLORS)))]
        scene_objects.append(SceneObject(oid, f"{shape}{oid}", color, fp))
    scene = Scene(ws, scene_objects, poses, seed=int(seed) & 0xFFFFFFFF)

    # probe with the bulkiest goal object: the one the sampler will have
    # the hardest time fitting
    goal_ids = [oid for _, objs, _ in specs for oid in objs]
    probe = max((objects[oid] for oid in goal_ids), key=lambda fp: fp.area)
    flat = [transform_footprint(objects[o], poses[o])
            for o in objects if poses[o].level == 0]
    if _free_pose_ratio(probe, ws, flat, rng) < CROWDED_FREE_RATIO:
        tags.append("crowded")

    goal = GoalSpec(tuple(
        SubGoal(pattern=name, objects=objs, anchor=anchor)
        for name, objs, anchor in specs
    ))

    witness = _witness_for(scene, specs, db, rng, config)
    if witness is None:
        raise UngeneratableConfig("witness budget exhausted")
    witness_scene = Scene(ws, scene_objects, witness, seed=scene.seed)
    if not check_goal(witness_scene, goal, db).satisfied:
        raise UngeneratableConfig("witness rejected by the goal checker")

    return TaskInstance(scene=scene, goal=goal, tags=tuple(sorted(tags)),
                        instance_seed=int(seed), witness=witness)


def gen_suite(config: BenchConfig, n_tasks: int, suite_seed: int,
              db: PatternDatabase = None) -> list:
    """Deterministic task list; per-task seeds derive from the suite seed."""
    if n_tasks < 1:
        raise BenchError("n_tasks must be >= 1")
    seeds = np.random.SeedSequence(suite_seed).generate_state(n_tasks, np.uint64)
    tasks = []
    for raw in seeds:
        seed = int(raw)
        for bump in range(16):
            try:
                tasks.append(gen_task(config, (seed + bump) & (2 ** 64 - 1), db))
                break
            except UngeneratableConfig:
                if bump == 15:
                    raise
    return tasks


# -- evaluation ---------------------------------------------------------------------


@dataclass(frozen=True)
class TaskOutcome:
    seed: int
    tags: tuple
    planned: bool
    executed: bool
    goal_met: bool
    steps: int
    wall_ms: float

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "tags": list(self.tags),
            "planned": self.planned,
            "executed": self.executed,
            "goal_met": self.goal_met,
            "steps": self.steps,
            "wall_ms": self.wall_ms,
        }


@dataclass(frozen=True)
class BenchReport:
    outcomes: tuple
    sr_p: float
    sr_ep: float

    def to_json(self) -> dict:
        return {
            "n_tasks": len(self.outcomes),
            "sr_p": self.sr_p,
            "sr_ep": self.sr_ep,
            "outcomes": [o.to_json() for o in self.outcomes],
        }


def run_task(task: TaskInstance, config: PlannerConfig, pmcts: bool = False,
             db: PatternDatabase = None) -> TaskOutcome:
    start = time.perf_counter()
    planned = executed = goal_met = False
    steps = 0
    try:
        if pmcts:
            plan = pmcts_plan(task.scene, task.fixed_goal_poses(), config,
                              seed=task.instance_seed)
        else:
            plan = mcts_plan(task.scene, task.goal, config,
                             seed=task.instance_seed, db=db)
        planned = True
        steps = plan.steps_used
        report = replay(task.scene, plan)
        executed = report.ok
        if executed:
            goal_met = check_goal(report.final_scene, task.goal, db,
                                  config.check_tolerance).satisfied
    except PlanningFailed as exc:
        steps = exc.steps_used
    wall_ms = (time.perf_counter() - start) * 1000.0
    return TaskOutcome(seed=task.instance_seed, tags=task.tags,
                       planned=planned, executed=executed, goal_met=goal_met,
                       steps=steps, wall_ms=wall_ms)


def _run_task_payload(payload):
    task = TaskInstance.from_json(payload["task"])
    config = PlannerConfig(**payload["config"])
    return run_task(task, config, pmcts=payload["pmcts"]).to_json()


def evaluate(tasks, config: PlannerConfig = None, pmcts: bool = False,
             jobs: int = 1, db: PatternDatabase = None) -> BenchReport:
    """Run the planner over a suite and aggregate SR_p / SR_ep.

    Tasks are independent; with jobs > 1 they fan out to worker processes
    (results are re-sorted by seed, so parallelism does not change the
    report apart from wall_ms).
    """
    if not tasks:
        raise BenchError("task suite is empty")
    if config is None:
        config = PlannerConfig()
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        payloads = [{"task": t.to_json(),
                     "config": {f.name: getattr(config, f.name)
                                for f in fields(config)},
                     "pmcts": pmcts} for t in tasks]
        for p in payloads:
            p["config"]["frozen_ids"] = sorted(p["config"]["frozen_ids"])
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_run_task_payload, payloads))
        outcomes = [TaskOutcome(seed=r["seed"], tags=tuple(r["tags"]),
                                planned=r["planned"], executed=r["executed"],
                                goal_met=r["goal_met"], steps=r["steps"],
                                wall_ms=r["wall_ms"]) for r in raw]
    else:
        outcomes = [run_task(t, config, pmcts=pmcts, db=db) for t in tasks]
    outcomes.sort(key=lambda o: o.seed)
    n = len(outcomes)
    sr_p = sum(o.planned for o in outcomes) / n
    sr_ep = sum(o.planned and o.executed and o.goal_met for o in outcomes) / n
    return BenchReport(outcomes=tuple(outcomes), sr_p=sr_p, sr_ep=sr_ep)


# -- suite and report files ----------------------------------------------------------


def save_suite(tasks, config: BenchConfig, directory, suite_seed: int) -> str:
    """Write task_NNNN.json files plus a manifest; returns the manifest path."""
    import os
    os.makedirs(directory, exist_ok=True)
    names = []
    for i, task in enumerate(tasks):
        name = f"task_{i:04d}.json"
        save_task(task, os.path.join(directory, name))
        names.append(name)
    manifest = {
        "config": config.to_json(),
        "suite_seed": suite_seed,
        "tasks": names,
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_suite(manifest_path):
    """Returns (tasks, BenchConfig, suite_seed)."""
    import os
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))
    tasks = [load_task(os.path.join(base, name)) for name in manifest["tasks"]]
    config = BenchConfig.from_json(manifest["config"])
    return tasks, config, int(manifest["suite_seed"])


def save_report(report: BenchReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(report: BenchReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "tags", "planned", "executed", "goal_met",
                         "steps", "wall_ms"])
        for o in report.outcomes:
            writer.writerow([
                o.seed, "|".join(o.tags),
                str(o.planned).lower(), str(o.executed).lower(),
                str(o.goal_met).lower(), o.steps, f"{o.wall_ms:.3f}",
            ])
