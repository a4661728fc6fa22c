"""Pattern priors: spatial probability distributions over object poses.

Each sub-goal binds a pattern (row, circle, rectangle outline, tower, or a
relative placement such as "left of") to an ordered list of objects.  Poses
are drawn sequentially: the first object is free, the second is tethered to
the first within radius delta, and later objects follow a parametric curve
fitted through the first two draws, with Gaussian jitter of scale sigma.

Conventions: +x is "right", -x is "left", +y is "behind", -y is "front".
"""

import json
import math
from dataclasses import dataclass, field

from lgplan.geometry import Footprint, Pose, Workspace, normalize_angle, transform_footprint

# Workspace-relative defaults; both may be overridden per pattern, either as
# absolute meters (delta/sigma) or as scales in params.
DEFAULT_DELTA_SCALE = 0.25
DEFAULT_SIGMA_SCALE = 0.01
# Gaussian jitter is truncated at this many sigmas (Euclidean norm), which
# bounds the residuals goal checking must accept.
TRUNCATION_SIGMAS = 4.0

DEFAULT_GAP_MIN = 0.0
DEFAULT_GAP_MAX_SCALE = 0.3  # of workspace width
LATERAL_PAD = 0.05  # meters beyond the anchor half-extent

SPATIAL_RELATIONS = ("left", "right", "front", "behind")
SPATIAL_COMBOS = ("left_front", "right_front", "left_behind", "right_behind")

CURVE_KINDS = ("line", "circle", "rectangle")


class PatternError(ValueError):
    """Pattern lookup, construction or sampling failure."""


class DegenerateCurveError(PatternError):
    """The two defining poses are too close to define a curve."""


class InfeasibleRegionError(PatternError):
    """A spatial relation region is empty inside the workspace."""


class SamplingExhaustedError(PatternError):
    """Rejection sampling gave up."""


@dataclass(frozen=True)
class PatternPrior:
    """A named pose distribution family.

    delta and sigma are absolute meters when set; when None they default to
    workspace-relative scales (params may carry "delta_scale"/"sigma_scale"
    overrides).  params also holds per-kind settings such as the spatial
    relation name or the line stretch factor.
    """

    name: str
    kind: str
    keys: tuple = ()
    ordered: bool = False
    delta: float = None
    sigma: float = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.delta is not None and self.delta <= 0:
            raise PatternError(f"pattern {self.name}: delta must be > 0")
        if self.sigma is not None and self.sigma <= 0:
            raise PatternError(f"pattern {self.name}: sigma must be > 0")
        if self.kind not in CURVE_KINDS + ("tower", "spatial", "fixed"):
            raise PatternError(f"pattern {self.name}: unknown kind {self.kind!r}")
        if self.kind == "spatial":
            rel = self.params.get("relation")
            if rel not in SPATIAL_RELATIONS + SPATIAL_COMBOS:
                raise PatternError(
                    f"pattern {self.name}: bad spatial relation {rel!r}"
                )

    def resolve_delta(self, workspace: Workspace) -> float:
        if self.delta is not None:
            return self.delta
        scale = self.params.get("delta_scale", DEFAULT_DELTA_SCALE)
        return scale * workspace.diagonal

    def resolve_sigma(self, workspace: Workspace) -> float:
        if self.sigma is not None:
            return self.sigma
        scale = self.params.get("sigma_scale", DEFAULT_SIGMA_SCALE)
        return scale * workspace.diagonal

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "keys": list(self.keys),
            "ordered": self.ordered,
            "delta": self.delta,
            "sigma": self.sigma,
            "params": dict(self.params),
        }


@dataclass(frozen=True)
class SamplingContext:
    """Everything the sequential sampler needs for one sub-goal."""

    pattern: PatternPrior
    total: int
    workspace: Workspace
    sampled_poses: tuple = ()
    anchor_pose: Pose = None
    anchor_footprint: Footprint = None
    # curve/region scratch shared by repeated draws from the same context
    _memo: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.total < 1:
            raise PatternError("sub-goal must bind at least one object")
        if len(self.sampled_poses) > self.total:
            raise PatternError("more sampled poses than objects in the sub-goal")

    @property
    def k(self) -> int:
        return len(self.sampled_poses)

    def with_pose(self, pose: Pose) -> "SamplingContext":
        return SamplingContext(
            pattern=self.pattern,
            total=self.total,
            workspace=self.workspace,
            sampled_poses=self.sampled_poses + (pose,),
            anchor_pose=self.anchor_pose,
            anchor_footprint=self.anchor_footprint,
        )


# -- parametric curves ---------------------------------------------------------


def kappa_line(p0, p1, total, stretch=None):
    """Line through p0 toward p1, scaled so samples continue past both.

    With the default stretch (= total), the k-th sample sits at
    p0 + k * |p1 - p0| * unit(p1 - p0): evenly spaced with the first two.
    """
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    dist = math.hypot(dx, dy)
    if dist < 1e-6:
        raise DegenerateCurveError("line: defining poses coincide")
    if stretch is None:
        stretch = float(total)
    return {
        "kind": "line",
        "p0": (float(p0[0]), float(p0[1])),
        "u": (dx / dist, dy / dist),
        "length": stretch * dist,
    }


def kappa_circle(p0, p1, total):
    """Circle on which p0 and p1 are adjacent among `total` even stops.

    The center sits to the left of the p0 -> p1 direction, so walking
    counterclockwise from p0 reaches p1 after 1/total of a turn.
    """
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    dist = math.hypot(dx, dy)
    if dist < 1e-6:
        raise DegenerateCurveError("circle: defining poses coincide")
    n = max(int(total), 2)
    half_angle = math.pi / n
    radius = (dist / 2.0) / math.sin(half_angle)
    apothem = (dist / 2.0) / math.tan(half_angle) if n > 2 else 0.0
    ux, uy = dx / dist, dy / dist
    cx = (p0[0] + p1[0]) / 2.0 - uy * apothem
    cy = (p0[1] + p1[1]) / 2.0 + ux * apothem
    return {
        "kind": "circle",
        "center": (cx, cy),
        "radius": radius,
        "theta0": math.atan2(p0[1] - cy, p0[0] - cx),
    }


def kappa_rectangle(p0, p1, total=None):
    """Axis-aligned rectangle with p0 and p1 as opposite corners.

    The perimeter is parameterized by arc length, counterclockwise,
    starting at p0's corner.
    """
    if abs(p1[0] - p0[0]) < 1e-6 or abs(p1[1] - p0[1]) < 1e-6:
        raise DegenerateCurveError("rectangle: corners give a degenerate box")
    x0, x1 = sorted((float(p0[0]), float(p1[0])))
    y0, y1 = sorted((float(p0[1]), float(p1[1])))
    ccw = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    start = min(range(4), key=lambda i: math.hypot(ccw[i][0] - p0[0], ccw[i][1] - p0[1]))
    corners = ccw[start:] + ccw[:start]
    lengths = []
    for i in range(4):
        ax, ay = corners[i]
        bx, by = corners[(i + 1) % 4]
        lengths.append(math.hypot(bx - ax, by - ay))
    return {
        "kind": "rectangle",
        "corners": corners,
        "lengths": lengths,
        "perimeter": sum(lengths),
    }


def curve_point(t, kappa):
    """Point on the curve at parameter t (curves are defined on [0, 1])."""
    kind = kappa["kind"]
    if kind == "line":
        p0, u, length = kappa["p0"], kappa["u"], kappa["length"]
        return (p0[0] + t * length * u[0], p0[1] + t * length * u[1])
    if kind == "circle":
        cx, cy = kappa["center"]
        ang = kappa["theta0"] + 2.0 * math.pi * t
        r = kappa["radius"]
        return (cx + r * math.cos(ang), cy + r * math.sin(ang))
    if kind == "rectangle":
        s = (t % 1.0) * kappa["perimeter"]
        corners, lengths = kappa["corners"], kappa["lengths"]
        for i in range(4):
            if s <= lengths[i] or i == 3:
                ax, ay = corners[i]
                bx, by = corners[(i + 1) % 4]
                frac = s / lengths[i]
                return (ax + frac * (bx - ax), ay + frac * (by - ay))
            s -= lengths[i]
    raise PatternError(f"no curve for kind {kind!r}")


def curve_tangent(t, kappa):
    """Heading of the curve at parameter t: atan2 of the derivative.

    Rectangle corners resolve to the incoming edge.
    """
    kind = kappa["kind"]
    if kind == "line":
        u = kappa["u"]
        return math.atan2(u[1], u[0])
    if kind == "circle":
        ang = kappa["theta0"] + 2.0 * math.pi * t
        return normalize_angle(ang + math.pi / 2.0)
    if kind == "rectangle":
        s = (t % 1.0) * kappa["perimeter"]
        corners, lengths = kappa["corners"], kappa["lengths"]
        if s == 0.0:
            s = kappa["perimeter"]
        for i in range(4):
            if s <= lengths[i] or i == 3:
                ax, ay = corners[i]
                bx, by = corners[(i + 1) % 4]
                return math.atan2(by - ay, bx - ax)
            s -= lengths[i]
    raise PatternError(f"no curve for kind {kind!r}")


def build_kappa(ctx: SamplingContext):
    """Curve parameters from the context's first two sampled poses."""
    p0, p1 = ctx.sampled_poses[0], ctx.sampled_poses[1]
    kind = ctx.pattern.kind
    if kind == "line":
        return kappa_line(
            (p0.x, p0.y), (p1.x, p1.y), ctx.total, ctx.pattern.params.get("stretch")
        )
    if kind == "circle":
        return kappa_circle((p0.x, p0.y), (p1.x, p1.y), ctx.total)
    if kind == "rectangle":
        return kappa_rectangle((p0.x, p0.y), (p1.x, p1.y), ctx.total)
    raise PatternError(f"no curve for kind {kind!r}")


_build_kappa = build_kappa


def _curve_slot(ctx: SamplingContext, kappa):
    """Curve parameter for the next sample: k/total, stepping half a slot
    forward when the curve point lands exactly on an earlier sample (a
    rectangle's opposite corner is passed through at t = 1/2)."""
    t = ctx.k / ctx.total
    px, py = curve_point(t, kappa)
    for p in ctx.sampled_poses:
        if math.hypot(px - p.x, py - p.y) < 1e-9:
            return (t + 1.0 / (2.0 * ctx.total)) % 1.0
    return t


# -- spatial relation regions ----------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle, bounds inclusive."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def empty(self) -> bool:
        return self.x_max <= self.x_min or self.y_max <= self.y_min

    @property
    def area(self) -> float:
        if self.empty:
            return 0.0
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def intersect(self, other: "Region") -> "Region":
        return Region(
            max(self.x_min, other.x_min),
            min(self.x_max, other.x_max),
            max(self.y_min, other.y_min),
            min(self.y_max, other.y_max),
        )


def _anchor_box(anchor_pose: Pose, anchor_footprint: Footprint) -> Region:
    placed = transform_footprint(anchor_footprint, anchor_pose)
    return Region(
        float(placed[:, 0].min()),
        float(placed[:, 0].max()),
        float(placed[:, 1].min()),
        float(placed[:, 1].max()),
    )


def _relation_band(relation, box: Region, gap_min, gap_max):
    """Unbounded-side band for one primitive relation, with lateral slack."""
    cx = (box.x_min + box.x_max) / 2.0
    cy = (box.y_min + box.y_max) / 2.0
    half_x = (box.x_max - box.x_min) / 2.0
    half_y = (box.y_max - box.y_min) / 2.0
    if relation == "right":
        return Region(box.x_max + gap_min, box.x_max + gap_max,
                      cy - (half_y + LATERAL_PAD), cy + (half_y + LATERAL_PAD))
    if relation == "left":
        return Region(box.x_min - gap_max, box.x_min - gap_min,
                      cy - (half_y + LATERAL_PAD), cy + (half_y + LATERAL_PAD))
    if relation == "behind":
        return Region(cx - (half_x + LATERAL_PAD), cx + (half_x + LATERAL_PAD),
                      box.y_max + gap_min, box.y_max + gap_max)
    if relation == "front":
        return Region(cx - (half_x + LATERAL_PAD), cx + (half_x + LATERAL_PAD),
                      box.y_min - gap_max, box.y_min - gap_min)
    if relation in SPATIAL_COMBOS:
        # combined relations keep only the two gap bands; each band bounds
        # the other's open direction, so lateral slack is not needed
        side, depth = relation.split("_")
        x_band = _relation_band(side, box, gap_min, gap_max)
        y_band = _relation_band(depth, box, gap_min, gap_max)
        return Region(x_band.x_min, x_band.x_max, y_band.y_min, y_band.y_max)
    raise PatternError(f"unknown spatial relation {relation!r}")


def spatial_region(relation, anchor_pose: Pose, anchor_footprint: Footprint,
                   workspace: Workspace, gap_min=None, gap_max=None) -> Region:
    """Placement region for a relative relation, clipped to the workspace.

    Raises InfeasibleRegionError when the clipped region is empty.
    """
    if gap_min is None:
        gap_min = DEFAULT_GAP_MIN
    if gap_max is None:
        gap_max = DEFAULT_GAP_MAX_SCALE * workspace.width
    if gap_max <= gap_min:
        raise PatternError("spatial gap band must satisfy gap_min < gap_max")
    box = _anchor_box(anchor_pose, anchor_footprint)
    band = _relation_band(relation, box, gap_min, gap_max)
    clipped = band.intersect(
        Region(workspace.x_min, workspace.x_max, workspace.y_min, workspace.y_max)
    )
    if clipped.empty:
        raise InfeasibleRegionError(
            f"relation {relation!r} has no room inside the workspace"
        )
    return clipped


def region_for(ctx: SamplingContext) -> Region:
    """Spatial region for a spatial-pattern context."""
    region = ctx._memo.get("region")
    if region is not None:
        return region
    if ctx.anchor_pose is None or ctx.anchor_footprint is None:
        raise PatternError(f"pattern {ctx.pattern.name} needs an anchor")
    region = spatial_region(
        ctx.pattern.params["relation"],
        ctx.anchor_pose,
        ctx.anchor_footprint,
        ctx.workspace,
        ctx.pattern.params.get("gap_min"),
        ctx.pattern.params.get("gap_max"),
    )
    ctx._memo["region"] = region
    return region


def _curve_state(ctx: SamplingContext):
    """Slot point, tangent and jitter scale for a curve context (memoized:
    they are deterministic given the already-sampled poses)."""
    state = ctx._memo.get("curve")
    if state is None:
        kappa = build_kappa(ctx)
        t = _curve_slot(ctx, kappa)
        px, py = curve_point(t, kappa)
        theta = curve_tangent(t, kappa)
        sigma = ctx.pattern.resolve_sigma(ctx.workspace)
        state = (px, py, theta, sigma)
        ctx._memo["curve"] = state
    return state


# -- sampling and density ---------------------------------------------------------


def uniform_pose(workspace: Workspace, rng) -> Pose:
    """Uniform level-0 pose over the workspace with uniform heading."""
    x = rng.uniform(workspace.x_min, workspace.x_max)
    y = rng.uniform(workspace.y_min, workspace.y_max)
    theta = rng.uniform(-math.pi, math.pi)
    return Pose(x, y, theta, 0)


def _truncated_jitter(rng, sigma):
    limit_sq = (TRUNCATION_SIGMAS * sigma) ** 2
    while True:
        ex = rng.normal(0.0, sigma)
        ey = rng.normal(0.0, sigma)
        if ex * ex + ey * ey <= limit_sq:
            return ex, ey


def _disc_sample(ctx: SamplingContext, rng) -> Pose:
    center = ctx.sampled_poses[0]
    delta = ctx.pattern.resolve_delta(ctx.workspace)
    for _ in range(1024):
        r = delta * math.sqrt(rng.uniform())
        phi = rng.uniform(-math.pi, math.pi)
        x = center.x + r * math.cos(phi)
        y = center.y + r * math.sin(phi)
        if ctx.workspace.contains_point(x, y):
            return Pose(x, y, rng.uniform(-math.pi, math.pi), 0)
    raise SamplingExhaustedError(
        "tether disc does not intersect the workspace usefully"
    )


def sample_prior(ctx: SamplingContext, rng) -> Pose:
    """Draw the next pose for a sub-goal from its pattern prior.

    Sequential rule for curve patterns: the first pose is uniform over the
    workspace, the second uniform on a disc of radius delta around the
    first, and later poses follow the curve through the first two with
    truncated Gaussian jitter and tangent-aligned heading.
    """
    if ctx.k >= ctx.total:
        raise PatternError("all poses for this sub-goal are already sampled")
    kind = ctx.pattern.kind
    if kind == "fixed":
        return ctx.pattern.params["pose"]
    if kind == "spatial":
        region = region_for(ctx)
        x = rng.uniform(region.x_min, region.x_max)
        y = rng.uniform(region.y_min, region.y_max)
        return Pose(x, y, rng.uniform(-math.pi, math.pi), 0)
    if kind == "tower":
        if ctx.k == 0:
            return uniform_pose(ctx.workspace, rng)
        base = ctx.sampled_poses[0]
        sigma = ctx.pattern.resolve_sigma(ctx.workspace)
        ex, ey = _truncated_jitter(rng, sigma)
        theta = rng.uniform(-math.pi, math.pi)
        return Pose(base.x + ex, base.y + ey, theta, ctx.k)
    # curve kinds
    if ctx.k == 0:
        return uniform_pose(ctx.workspace, rng)
    if ctx.k == 1:
        return _disc_sample(ctx, rng)
    px, py, theta, sigma = _curve_state(ctx)
    ex, ey = _truncated_jitter(rng, sigma)
    return Pose(px + ex, py + ey, theta, 0)


def prior_density(ctx: SamplingContext, pose: Pose) -> float:
    """Unnormalized density of `pose` under the context's next-sample prior.

    Strictly positive exactly where sample_prior can land (Gaussian cases
    are truncated); uniform cases return 1.0 on their support.
    """
    kind = ctx.pattern.kind
    if kind == "fixed":
        fixed = ctx.pattern.params["pose"]
        same = (
            pose.level == fixed.level
            and abs(pose.x - fixed.x) <= 1e-9
            and abs(pose.y - fixed.y) <= 1e-9
            and abs(normalize_angle(pose.theta - fixed.theta)) <= 1e-9
        )
        return 1.0 if same else 0.0
    if kind == "spatial":
        region = region_for(ctx)
        return 1.0 if pose.level == 0 and region.contains(pose.x, pose.y) else 0.0
    if kind == "tower":
        if ctx.k == 0:
            ok = pose.level == 0 and ctx.workspace.contains_point(pose.x, pose.y)
            return 1.0 if ok else 0.0
        if pose.level != ctx.k:
            return 0.0
        base = ctx.sampled_poses[0]
        sigma = ctx.pattern.resolve_sigma(ctx.workspace)
        d = math.hypot(pose.x - base.x, pose.y - base.y)
        if d > TRUNCATION_SIGMAS * sigma:
            return 0.0
        return math.exp(-(d * d) / (2.0 * sigma * sigma))
    # curve kinds
    if pose.level != 0:
        return 0.0
    if ctx.k == 0:
        return 1.0 if ctx.workspace.contains_point(pose.x, pose.y) else 0.0
    if ctx.k == 1:
        center = ctx.sampled_poses[0]
        delta = ctx.pattern.resolve_delta(ctx.workspace)
        d = math.hypot(pose.x - center.x, pose.y - center.y)
        ok = d <= delta and ctx.workspace.contains_point(pose.x, pose.y)
        return 1.0 if ok else 0.0
    px, py, _, sigma = _curve_state(ctx)
    d = math.hypot(pose.x - px, pose.y - py)
    if d > TRUNCATION_SIGMAS * sigma:
        return 0.0
    return math.exp(-(d * d) / (2.0 * sigma * sigma))


# -- pattern database ---------------------------------------------------------------


def _spatial(name, relation, keys):
    return PatternPrior(
        name=name, kind="spatial", keys=keys, params={"relation": relation}
    )


def builtin_patterns() -> dict:
    """Built-in pattern database, keyed by canonical name."""
    entries = [
        PatternPrior(
            name="line", kind="line",
            keys=("line", "row", "straight", "straight line", "in a row", "queue"),
            params={"delta_scale": 0.15},
        ),
        PatternPrior(
            name="circle", kind="circle",
            keys=("circle", "ring", "round", "circular", "around"),
            params={"delta_scale": 0.12},
        ),
        PatternPrior(
            name="rectangle", kind="rectangle",
            keys=("rectangle", "rect", "square", "box", "perimeter"),
        ),
        PatternPrior(
            name="tower", kind="tower", ordered=True,
            keys=("tower", "stack", "pile", "stacked", "on top"),
        ),
        _spatial("spatial:left", "left", ("left", "left of", "to the left")),
        _spatial("spatial:right", "right", ("right", "right of", "to the right")),
        _spatial("spatial:front", "front", ("front", "in front", "in front of")),
        _spatial("spatial:behind", "behind", ("behind", "back", "in back of")),
        _spatial("spatial:left_front", "left_front", ("left front", "front left")),
        _spatial("spatial:right_front", "right_front", ("right front", "front right")),
        _spatial("spatial:left_behind", "left_behind", ("left behind", "behind left")),
        _spatial("spatial:right_behind", "right_behind",
                 ("right behind", "behind right")),
    ]
    return {p.name: p for p in entries}


class PatternDatabase:
    """Lookup table of pattern priors with synonym keys."""

    def __init__(self, patterns=None):
        self.patterns = dict(builtin_patterns() if patterns is None else patterns)

    def get(self, name: str) -> PatternPrior:
        try:
            return self.patterns[name]
        except KeyError:
            raise PatternError(f"unknown pattern {name!r}") from None

    def names(self):
        return list(self.patterns)

    def to_json(self) -> list:
        return [p.to_json() for p in self.patterns.values()]


def pattern_db_from_entries(entries) -> PatternDatabase:
    """Overlay pattern entries on the built-ins.

    Entries reuse the built-in kind for known names; new names must either
    carry params.kind or use the spatial:<relation> naming scheme.
    """
    patterns = builtin_patterns()
    for entry in entries:
        try:
            name = entry["name"]
        except (TypeError, KeyError):
            raise PatternError("pattern entries need a 'name'") from None
        params = dict(entry.get("params", {}))
        if name in patterns:
            kind = patterns[name].kind
            params = {**patterns[name].params, **params}
            if "relation" not in params and kind == "spatial":
                params["relation"] = patterns[name].params["relation"]
        elif "kind" in params:
            kind = params.pop("kind")
        elif name.startswith("spatial:"):
            kind = "spatial"
            params.setdefault("relation", name.split(":", 1)[1])
        else:
            raise PatternError(f"pattern {name!r}: cannot infer kind")
        base = patterns.get(name)
        patterns[name] = PatternPrior(
            name=name,
            kind=kind,
            keys=tuple(entry.get("keys", base.keys if base else ())),
            ordered=bool(entry.get("ordered", base.ordered if base else False)),
            delta=entry.get("delta", base.delta if base else None),
            sigma=entry.get("sigma", base.sigma if base else None),
            params=params,
        )
    return PatternDatabase(patterns)


def load_pattern_db(path) -> PatternDatabase:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise PatternError("pattern database must be a JSON array")
    return pattern_db_from_entries(data)


def fixed_prior(pose: Pose) -> PatternPrior:
    """Dirac prior pinning one object to one pose (baseline planner mode)."""
    return PatternPrior(name="fixed", kind="fixed", params={"pose": pose})
