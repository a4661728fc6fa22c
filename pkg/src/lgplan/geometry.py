"""Planar geometry primitives for tabletop scenes.

Poses are (x, y, theta) in meters/radians plus a discrete stack level.
Footprints are convex polygons in a local frame whose origin is the
footprint centroid; collision checks run on footprints transformed into the
workspace frame.
"""

import math
from dataclasses import dataclass

import numpy as np

from lgplan import kernels

# Contacts shallower than this are treated as touching, not colliding.
COLLISION_EPS = 1e-6

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Raised for degenerate or ill-formed geometric inputs."""


def normalize_angle(theta: float) -> float:
    """Map an angle to the interval (-pi, pi]."""
    t = math.fmod(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    elif t > math.pi:
        t -= TWO_PI
    return t


@dataclass(frozen=True)
class Pose:
    """Object pose: planar position, heading and discrete stack level."""

    x: float
    y: float
    theta: float = 0.0
    level: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if self.level < 0:
            raise GeometryError(f"stack level must be >= 0, got {self.level}")

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "theta": self.theta, "level": self.level}

    @classmethod
    def from_json(cls, data: dict) -> "Pose":
        return cls(data["x"], data["y"], data.get("theta", 0.0), data.get("level", 0))


def poses_close(a: Pose, b: Pose, tol: float = 1e-9) -> bool:
    """Pose equality up to tol, with angles compared on the circle."""
    if a.level != b.level:
        return False
    dth = abs(normalize_angle(a.theta - b.theta))
    return abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol and dth <= tol


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned rectangular table region."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise GeometryError("workspace bounds must satisfy min < max")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def to_json(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Workspace":
        return cls(data["x_min"], data["x_max"], data["y_min"], data["y_max"])


def _shoelace_area(verts: np.ndarray) -> float:
    x = verts[:, 0]
    y = verts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class Footprint:
    """Convex polygon in a local frame, vertices counterclockwise.

    The constructor validates convexity and non-degeneracy.  Helper
    constructors center the polygon on its area centroid, which is the
    reference point poses move.
    """

    __slots__ = ("verts",)

    def __init__(self, vertices):
        verts = np.asarray(vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise GeometryError("footprint needs at least 3 planar vertices")
        area = _shoelace_area(verts)
        if area <= 1e-9:
            raise GeometryError(
                "footprint area must exceed 1e-9 m^2 with counterclockwise winding"
            )
        n = verts.shape[0]
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx, cy = verts[(i + 2) % n]
            cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
            if cross < -1e-12:
                raise GeometryError(f"footprint is not convex at vertex {(i + 1) % n}")
        self.verts = np.ascontiguousarray(verts)
        self.verts.setflags(write=False)

    @classmethod
    def box(cls, width: float, height: float) -> "Footprint":
        """Axis-aligned rectangle centered on the origin."""
        hw, hh = width / 2.0, height / 2.0
        return cls([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)])

    @classmethod
    def regular(cls, n_sides: int, radius: float) -> "Footprint":
        """Regular polygon centered on the origin."""
        angles = [TWO_PI * i / n_sides for i in range(n_sides)]
        return cls([(radius * math.cos(a), radius * math.sin(a)) for a in angles])

    @classmethod
    def centered(cls, vertices) -> "Footprint":
        """Build a footprint, shifting vertices so the centroid is the origin."""
        verts = np.asarray(vertices, dtype=np.float64)
        fp = cls(verts)
        cx, cy = fp.centroid
        if abs(cx) < 1e-12 and abs(cy) < 1e-12:
            return fp
        return cls(verts - [cx, cy])

    @property
    def area(self) -> float:
        return _shoelace_area(self.verts)

    @property
    def centroid(self) -> tuple:
        v = self.verts
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        cx = float(((x + xn) * cross).sum() / (6.0 * a))
        cy = float(((y + yn) * cross).sum() / (6.0 * a))
        return cx, cy

    @property
    def circumradius(self) -> float:
        return float(np.max(np.hypot(self.verts[:, 0], self.verts[:, 1])))

    def __len__(self):
        return self.verts.shape[0]

    def __eq__(self, other):
        return isinstance(other, Footprint) and np.array_equal(self.verts, other.verts)

    def __hash__(self):
        return hash(self.verts.tobytes())

    def to_json(self) -> list:
        return [[float(x), float(y)] for x, y in self.verts]


def transform_footprint(footprint: Footprint, pose: Pose) -> np.ndarray:
    """Footprint vertices in the workspace frame at the given pose."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return kernels.transform_polygon(footprint.verts, pose.x, pose.y, c, s)


def footprints_overlap(placed_a: np.ndarray, placed_b: np.ndarray,
                       eps: float = COLLISION_EPS) -> bool:
    """True iff two placed convex polygons overlap beyond the touch tolerance."""
    return kernels.polys_overlap(placed_a, placed_b, eps)


def in_workspace(placed: np.ndarray, workspace: Workspace) -> bool:
    """True iff the placed polygon lies fully inside the workspace (inclusive)."""
    return kernels.poly_in_bounds(
        placed, workspace.x_min, workspace.x_max, workspace.y_min, workspace.y_max
    )


def _clip_halfplane(poly, ax, ay, bx, by):
    # keep the side to the left of a->b
    out = []
    n = len(poly)
    ex, ey = bx - ax, by - ay
    for i in range(n):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % n]
        p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
        q_in = ex * (qy - ay) - ey * (qx - ax) >= 0.0
        if p_in:
            out.append((px, py))
        if p_in != q_in:
            denom = ex * (qy - py) - ey * (qx - px)
            if denom != 0.0:
                t = (ex * (ay - py) - ey * (ax - px)) / denom
                out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def intersection_area(placed_a: np.ndarray, placed_b: np.ndarray) -> float:
    """Area of the intersection of two placed convex polygons."""
    poly = [tuple(v) for v in placed_a]
    nb = placed_b.shape[0]
    for i in range(nb):
        ax, ay = placed_b[i]
        bx, by = placed_b[(i + 1) % nb]
        poly = _clip_halfplane(poly, ax, ay, bx, by)
        if len(poly) < 3:
            return 0.0
    return abs(_shoelace_area(np.asarray(poly)))
