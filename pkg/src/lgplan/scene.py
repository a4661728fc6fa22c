"""Scene state: objects with footprints, poses and discrete stacking.

A Scene is immutable; applying a pick-and-place action returns a new Scene.
Collisions are evaluated between objects at the same stack level only.
Support uses a footprint-overlap rule: an object at level k > 0 must rest on
exactly one object at level k - 1.
"""

import json
from dataclasses import dataclass

import numpy as np

from lgplan import kernels
from lgplan.geometry import (
    COLLISION_EPS,
    Footprint,
    GeometryError,
    Pose,
    Workspace,
    footprints_overlap,
    in_workspace,
    intersection_area,
    poses_close,
    transform_footprint,
)

# Fraction of the upper footprint's area that must rest on the supporter.
SUPPORT_AREA_FRACTION = 0.5


class SceneError(ValueError):
    """Ill-formed scene or scene file."""


class SceneFormatError(SceneError):
    """Scene file violates the format; carries a line number when known."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}: {message}" if col is None else (
                f"line {line}, column {col}: {message}"
            )
        super().__init__(message)


class ActionError(SceneError):
    """A pick-and-place action cannot be applied."""

    kind = "action"


class BlockedPickError(ActionError):
    kind = "blocked pick"


class BlockedPlaceError(ActionError):
    kind = "blocked place"


class OutOfBoundsError(ActionError):
    kind = "out of bounds"


@dataclass(frozen=True)
class SceneObject:
    """Identity and shape of a movable object."""

    id: int
    name: str
    color: str
    footprint: Footprint

    def __post_init__(self):
        if self.id < 0:
            raise SceneError(f"object id must be >= 0, got {self.id}")


class Scene:
    """Immutable tabletop snapshot: workspace, objects and their poses."""

    __slots__ = ("workspace", "seed", "_objects", "_poses", "_placed", "_packs",
                 "_on_top_of", "_direct_above")

    def __init__(self, workspace, objects, poses, seed=0, validate=True):
        self.workspace = workspace
        self.seed = int(seed)
        self._objects = {}
        for obj in objects:
            if obj.id in self._objects:
                raise SceneError(f"duplicate object id {obj.id}")
            self._objects[obj.id] = obj
        if set(poses) != set(self._objects):
            raise SceneError("poses must cover exactly the scene's object ids")
        self._poses = {oid: poses[oid] for oid in self._objects}
        self._placed = {}
        self._packs = {}
        self._rebuild_support()
        if validate:
            self._validate()

    # -- construction helpers -------------------------------------------------

    def _rebuild_support(self):
        on_top_of = {}
        direct_above = {oid: [] for oid in self._objects}
        for oid, pose in self._poses.items():
            if pose.level == 0:
                on_top_of[oid] = None
                continue
            below = [
                other
                for other, p in self._poses.items()
                if p.level == pose.level - 1
                and footprints_overlap(self.placed(other), self.placed(oid))
            ]
            if len(below) != 1:
                raise SceneError(
                    f"object {oid} at level {pose.level} must rest on exactly one "
                    f"object at level {pose.level - 1}, found {len(below)}"
                )
            on_top_of[oid] = below[0]
            direct_above[below[0]].append(oid)
        self._on_top_of = on_top_of
        self._direct_above = direct_above

    def _validate(self):
        ids = self.ids()
        for oid in ids:
            if not in_workspace(self.placed(oid), self.workspace):
                raise SceneError(f"object {oid} extends outside the workspace")
        for i, a in enumerate(ids):
            pa = self._poses[a]
            for b in ids[i + 1:]:
                if pa.level != self._poses[b].level:
                    continue
                if footprints_overlap(self.placed(a), self.placed(b)):
                    raise SceneError(
                        f"objects {a} and {b} overlap at level {pa.level}"
                    )

    # -- read access ----------------------------------------------------------

    def ids(self):
        return list(self._objects)

    def objects(self):
        return list(self._objects.values())

    def object(self, oid) -> SceneObject:
        try:
            return self._objects[oid]
        except KeyError:
            raise SceneError(f"no object with id {oid}") from None

    def pose(self, oid) -> Pose:
        self.object(oid)
        return self._poses[oid]

    def poses(self):
        return dict(self._poses)

    def placed(self, oid) -> np.ndarray:
        """Workspace-frame footprint vertices of an object (cached)."""
        placed = self._placed.get(oid)
        if placed is None:
            placed = transform_footprint(self.object(oid).footprint, self._poses[oid])
            self._placed[oid] = placed
        return placed

    def floor_occupancy_ratio(self) -> float:
        """Fraction of the table area covered by level-0 footprints."""
        occupied = sum(
            self._objects[oid].footprint.area
            for oid, p in self._poses.items()
            if p.level == 0
        )
        return occupied / self.workspace.area

    # -- stacking -------------------------------------------------------------

    def supporter_of(self, oid):
        self.object(oid)
        return self._on_top_of[oid]

    def is_reachable(self, oid) -> bool:
        """True iff nothing rests on the object, directly or transitively."""
        self.object(oid)
        return not self._direct_above[oid]

    def blockers_above(self, oid) -> list:
        """Objects transitively above `oid`, topmost first."""
        self.object(oid)
        found = []
        frontier = list(self._direct_above[oid])
        while frontier:
            found.extend(frontier)
            frontier = [b for a in frontier for b in self._direct_above[a]]
        found.sort(key=lambda b: (-self._poses[b].level, b))
        return found

    # -- collision queries ----------------------------------------------------

    def _level_pack(self, level, exclude):
        key = (level, exclude)
        pack = self._packs.get(key)
        if pack is None:
            ids = [o for o, p in self._poses.items() if p.level == level and o != exclude]
            parts = [self.placed(o) for o in ids]
            if parts:
                flat = np.ascontiguousarray(np.concatenate(parts))
                offsets = np.zeros(len(parts) + 1, dtype=np.int64)
                np.cumsum([len(p) for p in parts], out=offsets[1:])
                aabbs = np.empty((len(parts), 4))
                for i, p in enumerate(parts):
                    aabbs[i] = (p[:, 0].min(), p[:, 0].max(), p[:, 1].min(), p[:, 1].max())
            else:
                flat = np.empty((0, 2))
                offsets = np.zeros(1, dtype=np.int64)
                aabbs = np.empty((0, 4))
            pack = (ids, flat, offsets, aabbs)
            self._packs[key] = pack
        return pack

    def collisions_at(self, oid, pose) -> list:
        """Ids of objects overlapping `oid`'s footprint at a candidate pose."""
        placed = transform_footprint(self.object(oid).footprint, pose)
        ids, flat, offsets, aabbs = self._level_pack(pose.level, oid)
        if not ids:
            return []
        hits = kernels.collide_indices(placed, flat, offsets, aabbs, COLLISION_EPS)
        return [ids[i] for i in hits]

    def f_free(self, oid, pose) -> int:
        """Binary free-space factor: 1 iff the pose collides with nothing
        at its level and stays inside the workspace.  The object's own
        current pose is ignored."""
        placed = transform_footprint(self.object(oid).footprint, pose)
        if not in_workspace(placed, self.workspace):
            return 0
        ids, flat, offsets, aabbs = self._level_pack(pose.level, oid)
        if ids:
            hits = kernels.collide_indices(placed, flat, offsets, aabbs, COLLISION_EPS)
            if len(hits):
                return 0
        return 1

    def support_ok(self, oid, pose) -> bool:
        """True iff a pose at level k > 0 rests on exactly one reachable
        object at level k - 1 covering at least half the moved footprint."""
        if pose.level == 0:
            return True
        placed = transform_footprint(self.object(oid).footprint, pose)
        below = [
            other
            for other, p in self._poses.items()
            if other != oid and p.level == pose.level - 1
            and footprints_overlap(self.placed(other), placed)
        ]
        if len(below) != 1:
            return False
        supporter = below[0]
        support_clear = all(b == oid for b in self._direct_above[supporter])
        if not support_clear:
            return False
        needed = SUPPORT_AREA_FRACTION * self.object(oid).footprint.area
        return intersection_area(placed, self.placed(supporter)) >= needed

    def placement_ok(self, oid, pose) -> bool:
        """Collision-free, in-workspace and properly supported."""
        return bool(self.f_free(oid, pose)) and self.support_ok(oid, pose)

    # -- actions ----------------------------------------------------------------

    def apply_action(self, oid, pose) -> "Scene":
        """Pick `oid` and place it at `pose`, returning the successor scene.

        Raises BlockedPickError, OutOfBoundsError or BlockedPlaceError when
        the action is invalid in this scene.
        """
        obj = self.object(oid)
        if not self.is_reachable(oid):
            raise BlockedPickError(
                f"object {oid} is blocked by {self.blockers_above(oid)}"
            )
        placed = transform_footprint(obj.footprint, pose)
        if not in_workspace(placed, self.workspace):
            raise OutOfBoundsError(f"object {oid} would leave the workspace")
        collisions = self.collisions_at(oid, pose)
        if collisions:
            raise BlockedPlaceError(
                f"object {oid} would collide with {collisions} at level {pose.level}"
            )
        if not self.support_ok(oid, pose):
            raise BlockedPlaceError(
                f"object {oid} has no valid support at level {pose.level}"
            )
        return self._with_pose(oid, pose)

    def _with_pose(self, oid, pose) -> "Scene":
        # cheap successor: revalidation is skipped, the action checks suffice
        new = object.__new__(Scene)
        new.workspace = self.workspace
        new.seed = self.seed
        new._objects = self._objects
        poses = dict(self._poses)
        old_level = poses[oid].level
        poses[oid] = pose
        new._poses = poses
        placed = dict(self._placed)
        placed.pop(oid, None)
        new._placed = placed
        new._packs = {
            key: pack
            for key, pack in self._packs.items()
            if key[0] != old_level and key[0] != pose.level
        }
        on_top_of = dict(self._on_top_of)
        direct_above = {k: list(v) for k, v in self._direct_above.items()}
        old_support = on_top_of[oid]
        if old_support is not None:
            direct_above[old_support].remove(oid)
        if pose.level == 0:
            on_top_of[oid] = None
        else:
            supporter = new._find_supporter(oid, pose)
            on_top_of[oid] = supporter
            direct_above[supporter].append(oid)
        new._on_top_of = on_top_of
        new._direct_above = direct_above
        return new

    def _find_supporter(self, oid, pose):
        placed = transform_footprint(self.object(oid).footprint, pose)
        for other, p in self._poses.items():
            if other != oid and p.level == pose.level - 1:
                if footprints_overlap(self.placed(other), placed):
                    return other
        raise BlockedPlaceError(f"object {oid} has no support at level {pose.level}")

    # -- serialization ----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "workspace": self.workspace.to_json(),
            "objects": [
                {
                    "id": obj.id,
                    "name": obj.name,
                    "color": obj.color,
                    "footprint": obj.footprint.to_json(),
                    "pose": self._poses[obj.id].to_json(),
                }
                for obj in self._objects.values()
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data) -> "Scene":
        return _scene_from_data(data, text=None)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return scenes_equal(self, other)

    __hash__ = None


def scenes_equal(a: Scene, b: Scene, tol: float = 1e-9) -> bool:
    """Same workspace, objects and poses up to tol."""
    if a.workspace != b.workspace or a.ids() != b.ids():
        return False
    for oid in a.ids():
        if a.object(oid) != b.object(oid):
            return False
        if not poses_close(a.pose(oid), b.pose(oid), tol):
            return False
    return True


# -- file loading with line-precise diagnostics --------------------------------


def _element_lines(text, array_key):
    """Start line of each element of the top-level array under `array_key`."""
    marker = f'"{array_key}"'
    pos = text.find(marker)
    if pos < 0:
        return []
    pos = text.find("[", pos)
    if pos < 0:
        return []
    depth = 0
    in_str = False
    escape = False
    lines = []
    for i in range(pos, len(text)):
        ch = text[i]
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch in "[{":
            depth += 1
            if depth == 2 and ch == "{":
                lines.append(text.count("\n", 0, i) + 1)
        elif ch in "]}":
            depth -= 1
            if depth == 0:
                break
    return lines


def _scene_from_data(data, text):
    def entry_line(index):
        if text is None:
            return None
        lines = _element_lines(text, "objects")
        return lines[index] if index < len(lines) else None

    if not isinstance(data, dict):
        raise SceneFormatError("scene file must contain a JSON object")
    for key in ("workspace", "objects"):
        if key not in data:
            raise SceneFormatError(f"missing required key '{key}'")
    unknown = set(data) - {"workspace", "objects", "seed"}
    if unknown:
        raise SceneFormatError(f"unknown scene keys: {sorted(unknown)}")
    try:
        workspace = Workspace.from_json(data["workspace"])
    except (KeyError, TypeError, GeometryError) as exc:
        line = None
        if text is not None:
            pos = text.find('"workspace"')
            line = text.count("\n", 0, pos) + 1 if pos >= 0 else None
        raise SceneFormatError(f"bad workspace: {exc}", line=line) from None
    objects = []
    poses = {}
    if not isinstance(data["objects"], list):
        raise SceneFormatError("'objects' must be an array")
    for i, entry in enumerate(data["objects"]):
        try:
            obj = SceneObject(
                id=int(entry["id"]),
                name=str(entry.get("name", f"object {entry['id']}")),
                color=str(entry.get("color", "gray")),
                footprint=Footprint(entry["footprint"]),
            )
            pose = Pose.from_json(entry["pose"])
        except (KeyError, TypeError, GeometryError, SceneError) as exc:
            raise SceneFormatError(
                f"bad object entry {i}: {exc}", line=entry_line(i)
            ) from None
        if obj.id in poses:
            raise SceneFormatError(
                f"duplicate object id {obj.id}", line=entry_line(i)
            )
        objects.append(obj)
        poses[obj.id] = pose
    try:
        return Scene(workspace, objects, poses, seed=int(data.get("seed", 0)))
    except SceneError as exc:
        line = None
        msg = str(exc)
        if text is not None:
            for i, obj in enumerate(objects):
                if f"object {obj.id} " in msg or f"objects {obj.id} " in msg:
                    line = entry_line(i)
                    break
        raise SceneFormatError(msg, line=line) from None


def loads_scene(text: str) -> Scene:
    """Parse a scene from JSON text, reporting line-precise errors."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(exc.msg, line=exc.lineno, col=exc.colno) from None
    return _scene_from_data(data, text)


def load_scene(path) -> Scene:
    """Load a scene JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads_scene(fh.read())


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
