"""Closed-loop execution of macro-actions in the 2D household world.

Per segment the runner classifies with the selected policy, then executes:
forward loops step/perceive/check until the end of the segment or an obstacle
inside the safety horizon; obstacle halts trigger the under-clearance routine
(traversable -> bulk under-obstacle advance, else the segment is skipped);
turns rotate by the commanded magnitude and then advance to the segment end;
cover_area sweeps boustrophedon lanes with per-lane obstacle handling.

A trial owns its state exclusively; trials are independent and replay
bit-identically from (scene, sketch, params, noise seed, trial index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import (  # noqa: F401  (re-exported formulas are part of this API)
    DEFAULT_PARAMS,
    DEFAULT_PLATFORM,
    ControlParams,
    PlatformProfile,
    required_clearance,
    stopping_distance,
)
from .errors import (
    DegenerateArea,
    EmptyRegion,
    SceneSketchScaleMismatch,
    UnsupportedTurn,
)
from .geometry import PixelProxy, Segment, Sketch, heading_deg, segment_sketch, wrap_deg
from .policy import (
    MacroAction,
    PerceptionSnapshot,
    PolicyDecision,
    PolicyInput,
    get_policy,
)
from .world import Command, NoiseModel, Pose2, SceneGrid, apply_command, trial_stream

LowLevelCommand = Command

_EPS = 1e-9


# ---------------------------------------------------------------------------
# outcome / result types
# ---------------------------------------------------------------------------

TERMINATIONS = ("completed", "obstructed_skipped", "under_maneuver_done",
                "safety_halt", "timeout")


@dataclass(frozen=True)
class SegmentOutcome:
    segment_index: int
    macro: str
    rule: str
    confidence: float
    termination: str
    trace_start: int
    trace_end: int
    commanded_turn_deg: float | None = None
    adherent: bool | None = None

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")

    @property
    def success(self) -> bool:
        return self.termination in ("completed", "under_maneuver_done")


@dataclass
class TrialResult:
    seed: int
    trial_index: int
    params: ControlParams
    noise: NoiseModel
    segments: list
    decisions: list
    outcomes: list
    pose_trace: list
    events: list
    steps_used: int
    step_budget: int

    @property
    def n_seg(self) -> int:
        return len(self.segments)

    @property
    def had_safety_halt(self) -> bool:
        return any(o.termination == "safety_halt" for o in self.outcomes)

    @property
    def had_timeout(self) -> bool:
        return any(o.termination == "timeout" for o in self.outcomes)

    def trace_xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.pose_trace])


# ---------------------------------------------------------------------------
# translator
# ---------------------------------------------------------------------------

def _turn_command(token: str, params: ControlParams, magnitude_deg: float | None) -> Command:
    action = MacroAction(token)
    magnitude = abs(magnitude_deg) if magnitude_deg is not None else abs(action.nominal_turn_deg)
    if not any(abs(magnitude - t) < 1e-9 for t in params.turn_set):
        raise UnsupportedTurn(f"turn magnitude {magnitude} not in turn set {params.turn_set}")
    return Command.rotate(action.turn_sign * magnitude)


def translate(macro, params: ControlParams, platform: PlatformProfile,
              magnitude_deg: float | None = None, area_segment: Segment | None = None,
              advance_m: float | None = None):
    """Expand one macro-action into low-level commands.

    forward yields an unbounded stream of steps (the consumer stops it);
    turns yield a single rotation; check_under yields nothing (sensing only);
    cover_area yields the open-loop serpentine expansion and needs the area
    segment; the pseudo-macros "halt" and "under_maneuver" are accepted for
    completeness.
    """
    token = macro.token if isinstance(macro, MacroAction) else str(macro)
    if token == "forward":
        def steps():
            while True:
                yield Command.step(params.d_step_m)
        return steps()
    if token.startswith("turn_"):
        return iter([_turn_command(token, params, magnitude_deg)])
    if token == "check_under":
        return iter(())
    if token == "halt":
        return iter([Command.halt()])
    if token == "under_maneuver":
        if advance_m is None:
            raise ValueError("under_maneuver needs advance_m")
        return iter([Command.under_maneuver(advance_m)])
    if token == "cover_area":
        if area_segment is None:
            raise ValueError("cover_area translation needs the area segment")
        return iter(_expand_serpentine(area_segment, params, platform))
    raise ValueError(f"unknown macro {token!r}")


def _expand_serpentine(segment: Segment, params: ControlParams, platform: PlatformProfile):
    cmds: list[Command] = []
    lanes = serpentine_lanes(segment, params)
    n_conn = max(1, int(round(params.lane_spacing_m / params.d_step_m)))
    for j, (a, b) in enumerate(lanes):
        n_steps = max(1, int(math.ceil(np.linalg.norm(b - a) / params.d_step_m - _EPS)))
        cmds.extend(Command.step(params.d_step_m) for _ in range(n_steps))
        if j < len(lanes) - 1:
            t1, t2 = _lane_change_turns(lanes, j)
            cmds.append(Command.rotate(t1))
            cmds.extend(Command.step(params.d_step_m) for _ in range(n_conn))
            cmds.append(Command.rotate(t2))
    return cmds


# ---------------------------------------------------------------------------
# perception
# ---------------------------------------------------------------------------

_OFFSETS_CACHE: dict[tuple[float, float], np.ndarray] = {}


def _disc_cell_offsets(radius_m: float, resolution_m: float) -> np.ndarray:
    key = (round(radius_m, 9), round(resolution_m, 9))
    got = _OFFSETS_CACHE.get(key)
    if got is None:
        n = int(math.ceil(radius_m / resolution_m)) + 1
        axis = np.arange(-n, n + 1)
        got = np.array([(dx, dy) for dy in axis for dx in axis], dtype=np.int64)
        _OFFSETS_CACHE[key] = got
    return got


def _footprint_hits(scene: SceneGrid, x: float, y: float, radius_m: float) -> np.ndarray:
    """Occupied (or out-of-bounds) cells under a disc footprint, as (ix, iy) rows."""
    res = scene.resolution_m
    offs = _disc_cell_offsets(radius_m, res)
    cix, ciy = int(math.floor(x / res)), int(math.floor(y / res))
    cells = offs + np.array([cix, ciy])
    centers = (cells + 0.5) * res
    within = (centers[:, 0] - x) ** 2 + (centers[:, 1] - y) ** 2 <= (radius_m + 1e-12) ** 2
    within |= (offs[:, 0] == 0) & (offs[:, 1] == 0)
    cells = cells[within]
    oob = (cells[:, 0] < 0) | (cells[:, 0] >= scene.nx) | (cells[:, 1] < 0) | (cells[:, 1] >= scene.ny)
    inb = cells[~oob]
    occ = scene.occupancy[inb[:, 1], inb[:, 0]]
    hits = inb[occ]
    if np.any(oob):
        marker = np.full((int(np.sum(oob)), 2), -1, dtype=np.int64)
        hits = np.concatenate([marker, hits]) if len(hits) else marker
    return hits


def probe_ahead(scene: SceneGrid, pose: Pose2, params: ControlParams,
                platform: PlatformProfile = DEFAULT_PLATFORM):
    """March the footprint along the heading up to d_safety (one vector pass).

    Returns (snapshot, hit_cell). hit_cell is the representative first
    obstacle cell (closest to the ray axis at the first contact distance) or
    None; out-of-bounds contact reports hit_cell None.
    """
    res = scene.resolution_m
    r = platform.footprint_radius_m
    hx, hy = pose.heading_vec()
    dt = res / 2.0
    n = int(math.ceil(params.d_safety_m / dt))
    ts = np.minimum(np.arange(1, n + 1) * dt, params.d_safety_m)
    cx = pose.x + ts * hx
    cy = pose.y + ts * hy
    offs = _disc_cell_offsets(r, res)
    base_x = np.floor(cx / res).astype(np.int64)
    base_y = np.floor(cy / res).astype(np.int64)
    cell_x = base_x[:, None] + offs[None, :, 0]
    cell_y = base_y[:, None] + offs[None, :, 1]
    cen_x = (cell_x + 0.5) * res
    cen_y = (cell_y + 0.5) * res
    within = ((cen_x - cx[:, None]) ** 2 + (cen_y - cy[:, None]) ** 2) <= (r + 1e-12) ** 2
    within |= (offs[None, :, 0] == 0) & (offs[None, :, 1] == 0)
    oob = (cell_x < 0) | (cell_x >= scene.nx) | (cell_y < 0) | (cell_y >= scene.ny)
    occ = scene.occupancy[np.clip(cell_y, 0, scene.ny - 1), np.clip(cell_x, 0, scene.nx - 1)]
    hit = within & (occ | oob)
    hit_rows = hit.any(axis=1)
    if not hit_rows.any():
        return PerceptionSnapshot(eta=1, obs_ahead=False), None
    ti = int(np.argmax(hit_rows))
    t = float(ts[ti])
    row = hit[ti]
    real = ~oob[ti] & row
    if not real.any():
        return PerceptionSnapshot(eta=1, obs_ahead=True, obstacle_distance_m=t,
                                  h_est_m=None, lateral_sign=0), None
    rx = cell_x[ti][real]
    ry = cell_y[ti][real]
    lateral = ((rx + 0.5) * res - pose.x) * (-hy) + ((ry + 0.5) * res - pose.y) * hx
    order = np.lexsort((rx, ry, np.abs(lateral)))
    best = order[0]
    cell = (int(rx[best]), int(ry[best]))
    lat = float(lateral[best])
    sign = 0 if abs(lat) < res / 2 else (1 if lat > 0 else -1)
    h = scene.clearance_at(*cell)
    return PerceptionSnapshot(eta=1, obs_ahead=True, obstacle_distance_m=t,
                              h_est_m=h, lateral_sign=sign), cell


def check_obstacle_ahead(scene: SceneGrid, pose: Pose2, params: ControlParams,
                         platform: PlatformProfile = DEFAULT_PLATFORM) -> PerceptionSnapshot:
    """Footprint ray-march within the safety horizon; eta is always 1."""
    snap, _ = probe_ahead(scene, pose, params, platform)
    return snap


def check_under_clearance(scene: SceneGrid, region, params: ControlParams) -> float | None:
    """Minimum clearance over annotated cells of the region; None if unknown."""
    cells = list(region)
    if not cells:
        raise EmptyRegion("clearance check needs a nonempty region")
    values = [scene.clearance_at(ix, iy) for ix, iy in cells]
    known = [v for v in values if v is not None]
    if not known:
        return None
    return min(known)


# ---------------------------------------------------------------------------
# serpentine coverage
# ---------------------------------------------------------------------------

def _closed_polygon(segment: Segment) -> np.ndarray:
    poly = np.asarray(segment.world_polyline, dtype=float)
    if np.linalg.norm(poly[0] - poly[-1]) > _EPS:
        poly = np.vstack([poly, poly[0]])
    return poly


def _shoelace_area(poly: np.ndarray) -> float:
    x, y = poly[:-1, 0], poly[:-1, 1]
    xn, yn = poly[1:, 0], poly[1:, 1]
    return 0.5 * float(np.sum(x * yn - xn * y))


def point_in_polygon(p, poly: np.ndarray) -> bool:
    """Even-odd rule; points on the boundary count as inside."""
    x, y = float(p[0]), float(p[1])
    inside = False
    n = len(poly) - 1
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[i + 1]
        # boundary check
        dx, dy = x2 - x1, y2 - y1
        t = ((x - x1) * dx + (y - y1) * dy) / (dx * dx + dy * dy + 1e-300)
        if 0.0 <= t <= 1.0:
            px, py = x1 + t * dx, y1 + t * dy
            if (px - x) ** 2 + (py - y) ** 2 < 1e-18:
                return True
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * dx / (dy if dy != 0 else 1e-300)
            if xc > x:
                inside = not inside
    return inside


def _line_crossings(poly: np.ndarray, axis: int, c: float) -> list[float]:
    """Sorted coordinates (along the other axis) where the polygon crosses
    the line {axis-coordinate == c}."""
    other = 1 - axis
    out = []
    for i in range(len(poly) - 1):
        a, b = poly[i], poly[i + 1]
        ya, yb = a[axis], b[axis]
        if (ya > c) == (yb > c):
            continue
        t = (c - ya) / (yb - ya)
        out.append(float(a[other] + t * (b[other] - a[other])))
    return sorted(out)


def serpentine_lanes(segment: Segment, params: ControlParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Ordered, direction-alternating lane endpoints covering the area polygon.

    Lanes run parallel to the longer bounding-box axis, spaced lane_spacing_m
    apart, clipped to the polygon (interval hull for non-convex slices). A
    trailing lane is added when the sweep extent is not an exact multiple of
    the spacing, so the tool face reaches the far edge.
    """
    if not segment.is_area:
        raise DegenerateArea("serpentine planning needs an area segment")
    poly = _closed_polygon(segment)
    if abs(_shoelace_area(poly)) < 1e-6:
        raise DegenerateArea("area polygon has (near-)zero area")
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    span = hi - lo
    lane_axis = 0 if span[0] >= span[1] else 1  # lanes run along this axis
    sweep_axis = 1 - lane_axis
    spacing = params.lane_spacing_m
    extent = span[sweep_axis]

    positions: list[float] = []
    c = lo[sweep_axis] + spacing / 2.0
    if extent <= spacing:
        positions.append(lo[sweep_axis] + extent / 2.0)
    else:
        while c <= hi[sweep_axis] - spacing / 2.0 + 1e-9:
            positions.append(c)
            c += spacing
        if hi[sweep_axis] - (positions[-1] + spacing / 2.0) > 1e-9:
            positions.append(hi[sweep_axis] - spacing / 2.0)

    lanes: list[tuple[np.ndarray, np.ndarray]] = []
    half = spacing / 2.0
    for c in positions:
        # the tool face sweeps a band of one spacing around the lane line, so
        # clip against the widest slice of that band (band edges suffice on
        # convex slices); this reaches slanted-edge corners
        ends: list[float] = []
        for offset in (c - half, c, c + half):
            sample = min(max(offset, lo[sweep_axis] + 1e-9), hi[sweep_axis] - 1e-9)
            ends.extend(_line_crossings(poly, sweep_axis, sample))
        if len(ends) < 2:
            continue
        a = np.zeros(2)
        b = np.zeros(2)
        a[sweep_axis] = b[sweep_axis] = c
        a[lane_axis], b[lane_axis] = min(ends), max(ends)
        if len(lanes) % 2 == 1:
            a, b = b, a
        lanes.append((a, b))
    if not lanes:
        raise DegenerateArea("no lane intersects the area polygon")
    return lanes


def _lane_change_turns(lanes, j: int) -> tuple[float, float]:
    """Signed 90-degree pair taking lane j's heading to lane j+1's heading."""
    a, b = lanes[j]
    c, d = lanes[j + 1]
    h_lane = heading_deg(a, b)
    h_conn = heading_deg(b, c)
    h_next = heading_deg(c, d)
    return wrap_deg(h_conn - h_lane), wrap_deg(h_next - h_conn)


def generate_serpentine_plan(area_segment: Segment, params: ControlParams) -> list[MacroAction]:
    """Macro-action plan: alternating forward runs and paired 90-degree turns."""
    lanes = serpentine_lanes(area_segment, params)
    plan = [MacroAction("forward")]
    for j in range(len(lanes) - 1):
        t1, t2 = _lane_change_turns(lanes, j)
        plan.append(MacroAction("turn_p90" if t1 > 0 else "turn_n90"))
        plan.append(MacroAction("forward"))
        plan.append(MacroAction("turn_p90" if t2 > 0 else "turn_n90"))
        plan.append(MacroAction("forward"))
    return plan


# ---------------------------------------------------------------------------
# trial execution
# ---------------------------------------------------------------------------

@dataclass
class _Trial:
    scene: SceneGrid
    params: ControlParams
    platform: PlatformProfile
    noise: NoiseModel
    rng: np.random.Generator
    pose: Pose2
    trace: list = field(default_factory=list)
    events: list = field(default_factory=list)
    steps_used: int = 0
    budget: int = 0
    maneuver_exempt: bool = False
    # clearance measurements by obstacle component (min cell), so a checked
    # obstacle is never re-queried as "unknown"; (-1, -1) keys the boundary
    measured: dict = field(default_factory=dict)

    def log(self, type_: str, **kw):
        self.events.append({"type": type_, **kw})

    def apply(self, cmd: Command, segment: int):
        self.pose = apply_command(self.pose, cmd, self.noise, self.rng)
        self.trace.append(self.pose)
        if cmd.kind == "step":
            self.steps_used += 1
            self.log("step", segment=segment, trace_index=len(self.trace) - 1)
        elif cmd.kind == "rotate":
            self.log("rotate", segment=segment, commanded_deg=cmd.degrees,
                     trace_index=len(self.trace) - 1)
        elif cmd.kind == "under_maneuver":
            self.steps_used += max(1, int(math.ceil(cmd.distance_m / self.params.d_step_m)))
            self.log("maneuver", segment=segment, advance_m=cmd.distance_m,
                     trace_index=len(self.trace) - 1)

    def over_budget(self) -> bool:
        return self.steps_used >= self.budget

    def footprint_safe(self) -> bool:
        hits = _footprint_hits(self.scene, self.pose.x, self.pose.y,
                               self.platform.footprint_radius_m)
        if len(hits) == 0:
            return True
        if not self.maneuver_exempt:
            return False
        # while passing under furniture, annotated-traversable cells are fine
        for ix, iy in hits:
            if ix < 0 or not self.scene.traversable_under(int(ix), int(iy), self.params.h_clearance_m):
                return False
        return True


def _reached_end(segment: Segment, pose: Pose2, d_step: float) -> bool:
    start = segment.chord_start
    end = segment.chord_end
    chord = end - start
    clen = float(np.linalg.norm(chord))
    if clen > _EPS:
        u = chord / clen
        proj = (pose.x - start[0]) * u[0] + (pose.y - start[1]) * u[1]
        if proj >= clen - 1e-9:
            return True
    # strict inequality with a tolerance: a pose exactly one step away takes
    # that step rather than terminating early on float round-off
    return math.hypot(pose.x - end[0], pose.y - end[1]) < d_step - 1e-9


def _handle_obstacle(t: _Trial, seg: Segment, hit_cell) -> str:
    """Halt, run the clearance routine, then maneuver under or skip.

    Returns the segment termination contribution: "under_maneuver_done",
    "obstructed_skipped", or "safety_halt" (landing violated the envelope).
    """
    t.apply(Command.halt(), seg.index)
    t.log("halt", segment=seg.index, trace_index=len(t.trace) - 1)
    if hit_cell is None:
        t.measured[(-1, -1)] = 0.0
        t.log("clearance_checked", segment=seg.index, h_est_m=None, region_size=0)
        t.log("obstacle_skipped", segment=seg.index)
        return "obstructed_skipped"
    region = t.scene.connected_component(*hit_cell)
    h = check_under_clearance(t.scene, region, t.params) if region else None
    t.measured[region[0] if region else (-1, -1)] = h if h is not None else 0.0
    t.log("clearance_checked", segment=seg.index,
          h_est_m=h, region_size=len(region))
    if h is None or h < t.params.h_clearance_m:
        t.log("obstacle_skipped", segment=seg.index)
        return "obstructed_skipped"
    advance = _maneuver_advance(t, region)
    if advance is None:
        t.log("obstacle_skipped", segment=seg.index, reason="no_exit")
        return "obstructed_skipped"
    t.log("maneuver_tool", segment=seg.index, phase="actuate")
    t.maneuver_exempt = True
    t.apply(Command.under_maneuver(advance), seg.index)
    safe = t.footprint_safe()
    t.maneuver_exempt = False
    t.log("maneuver_tool", segment=seg.index, phase="retract")
    if not safe:
        t.log("safety_violation", segment=seg.index, trace_index=len(t.trace) - 1)
        return "safety_halt"
    return "under_maneuver_done"


def _maneuver_advance(t: _Trial, region) -> float | None:
    """Advance distance that carries the footprint through the clearance region.

    Marches along the heading until the footprint is fully clear of occupied
    cells; aborts (None) if a non-traversable cell blocks the way or no exit
    exists within the cap.
    """
    res = t.scene.resolution_m
    hx, hy = t.pose.heading_vec()
    region_set = set(map(tuple, region))
    cells = np.array(region)
    extent = (cells.max(axis=0) - cells.min(axis=0) + 1).max() * res if len(cells) else 0.0
    cap = t.params.d_safety_m + extent + 4 * t.platform.footprint_radius_m + 0.2
    dt = res / 2.0
    n = int(math.ceil(cap / dt))
    entered = False
    for i in range(1, n + 1):
        d = i * dt
        cx, cy = t.pose.x + d * hx, t.pose.y + d * hy
        hits = _footprint_hits(t.scene, cx, cy, t.platform.footprint_radius_m)
        if len(hits) == 0:
            if entered:
                return d
            continue
        for ix, iy in hits:
            cell = (int(ix), int(iy))
            if ix < 0:
                return None
            if cell in region_set:
                entered = True
            elif not t.scene.traversable_under(*cell, t.params.h_clearance_m):
                return None
    return None


def _forward_phase(t: _Trial, seg: Segment, within_polygon: np.ndarray | None = None) -> str:
    """Step/perceive/check loop shared by forward segments and lane runs.

    Returns "completed" | "obstructed_skipped" | "under_maneuver_done" |
    "safety_halt" | "timeout" | "lane_done".
    """
    while True:
        if t.over_budget():
            return "timeout"
        snap, hit = probe_ahead(t.scene, t.pose, t.params, t.platform)
        if snap.obs_ahead:
            t.log("obstacle_detected", segment=seg.index,
                  distance_m=snap.obstacle_distance_m,
                  cell=list(hit) if hit else None,
                  trace_index=len(t.trace) - 1)
            outcome = _handle_obstacle(t, seg, hit)
            if within_polygon is not None and outcome == "under_maneuver_done":
                continue  # resume the lane beyond the furniture
            return outcome
        if within_polygon is None:
            if _reached_end(seg, t.pose, t.params.d_step_m):
                return "completed"
        else:
            hx, hy = t.pose.heading_vec()
            nxt = (t.pose.x + t.params.d_step_m * hx, t.pose.y + t.params.d_step_m * hy)
            if not point_in_polygon(nxt, within_polygon):
                return "lane_done"
        t.apply(Command.step(t.params.d_step_m), seg.index)
        if not t.footprint_safe():
            t.log("safety_violation", segment=seg.index, trace_index=len(t.trace) - 1)
            return "safety_halt"


def _align_heading(t: _Trial, target_deg: float, segment: int) -> None:
    """Greedy rotations from the allowed turn set toward a target heading."""
    for _ in range(8):
        err = wrap_deg(target_deg - t.pose.theta)
        if abs(err) < t.params.min_turn_deg / 2.0 - 1e-9 or abs(err) < 1e-9:
            return
        best = None
        for mag in t.params.turn_set:
            for sign in (1.0, -1.0):
                res = abs(wrap_deg(err - sign * mag))
                if best is None or res < best[0] - 1e-12:
                    best = (res, sign * mag)
        if best is None or best[0] >= abs(err) - 1e-9:
            return
        t.apply(Command.rotate(best[1]), segment)


def _run_cover_area(t: _Trial, seg: Segment) -> str:
    poly = _closed_polygon(seg)
    lanes = serpentine_lanes(seg, t.params)
    t.log("serpentine_plan", segment=seg.index, lanes=len(lanes))
    n_conn = max(1, int(round(t.params.lane_spacing_m / t.params.d_step_m)))
    # approach the first lane if we start away from it
    a0 = lanes[0][0]
    if math.hypot(t.pose.x - a0[0], t.pose.y - a0[1]) >= t.params.d_step_m:
        _align_heading(t, heading_deg((t.pose.x, t.pose.y), a0), seg.index)
        approach_budget = int(2 * math.hypot(t.pose.x - a0[0], t.pose.y - a0[1]) / t.params.d_step_m) + 2
        for _ in range(approach_budget):
            if t.over_budget():
                return "timeout"
            if math.hypot(t.pose.x - a0[0], t.pose.y - a0[1]) < t.params.d_step_m:
                break
            snap, _hit = probe_ahead(t.scene, t.pose, t.params, t.platform)
            if snap.obs_ahead:
                break
            t.apply(Command.step(t.params.d_step_m), seg.index)
            if not t.footprint_safe():
                return "safety_halt"
    for j, (a, b) in enumerate(lanes):
        t.log("lane_start", segment=seg.index, lane=j)
        _align_heading(t, heading_deg(a, b), seg.index)
        status = _forward_phase(t, seg, within_polygon=poly)
        if status in ("safety_halt", "timeout"):
            return status
        t.log("lane_end", segment=seg.index, lane=j, status=status)
        if j == len(lanes) - 1:
            break
        t1, t2 = _lane_change_turns(lanes, j)
        t.apply(Command.rotate(t1), seg.index)
        for _ in range(n_conn):
            if t.over_budget():
                return "timeout"
            snap, _hit = probe_ahead(t.scene, t.pose, t.params, t.platform)
            if snap.obs_ahead:
                break
            t.apply(Command.step(t.params.d_step_m), seg.index)
            if not t.footprint_safe():
                return "safety_halt"
        t.apply(Command.rotate(t2), seg.index)
    return "completed"


def _run_check_under(t: _Trial, seg: Segment) -> str:
    snap, hit = probe_ahead(t.scene, t.pose, t.params, t.platform)
    if hit is None:
        if snap.obs_ahead:
            t.measured[(-1, -1)] = 0.0
        t.log("clearance_checked", segment=seg.index, h_est_m=None, region_size=0)
    else:
        region = t.scene.connected_component(*hit)
        h = check_under_clearance(t.scene, region, t.params) if region else None
        t.measured[region[0] if region else (-1, -1)] = h if h is not None else 0.0
        t.log("clearance_checked", segment=seg.index, h_est_m=h, region_size=len(region))
    return "completed"


def run_trial(
    scene: SceneGrid,
    sketch: Sketch,
    params: ControlParams | None = None,
    noise: NoiseModel | None = None,
    policy: str = "rules",
    platform: PlatformProfile | None = None,
    trial_index: int = 0,
) -> TrialResult:
    """Run the full inference-and-execution loop for one sketch in one scene."""
    params = params or DEFAULT_PARAMS
    noise = noise or NoiseModel.zero()
    platform = platform or DEFAULT_PLATFORM
    if scene.scale is None:
        raise SceneSketchScaleMismatch("scene carries no pixel-to-world grounding")
    if isinstance(scene.scale, PixelProxy):
        if (scene.scale.image_width, scene.scale.image_height) != (sketch.image_width, sketch.image_height):
            raise SceneSketchScaleMismatch(
                f"scene proxy dims {scene.scale.image_width}x{scene.scale.image_height} "
                f"!= sketch dims {sketch.image_width}x{sketch.image_height}")
    scene.validate_start_pose(scene.start_pose, platform.footprint_radius_m)
    policy_fn = get_policy(policy)
    segments = segment_sketch(sketch, params, scene.scale)

    budget = max(1, 10 * sum(int(math.ceil(s.length_m / params.d_step_m)) for s in segments))
    t = _Trial(scene=scene, params=params, platform=platform, noise=noise,
               rng=trial_stream(noise.seed, trial_index), pose=scene.start_pose,
               budget=budget)
    t.trace.append(t.pose)

    decisions: list[PolicyDecision] = []
    outcomes: list[SegmentOutcome] = []
    timed_out = False
    for seg in segments:
        trace_start = len(t.trace) - 1
        if timed_out:
            outcomes.append(SegmentOutcome(seg.index, "forward", "rule3", 0.0, "timeout",
                                           trace_start, trace_start))
            decisions.append(None)
            continue
        snap, hit = probe_ahead(t.scene, t.pose, t.params, t.platform)
        if not snap.obs_ahead:
            snap = PerceptionSnapshot.off()
        else:
            # a previously measured component is never "unknown" again
            if hit is not None:
                comp = t.scene.connected_component(*hit)
                key = comp[0] if comp else (-1, -1)
            else:
                key = (-1, -1)
            if key in t.measured:
                snap = replace(snap, h_est_m=t.measured[key])
        inp = PolicyInput(
            segment_index=seg.index, n_seg=len(segments),
            is_path=seg.is_path, is_area=seg.is_area, is_closed=seg.is_closed,
            length_m=seg.length_m, delta_yaw_deg=seg.delta_yaw_deg,
            mean_curvature=seg.mean_curvature, corner_count=seg.corner_count,
            perception=snap, params=params,
        )
        decision = policy_fn(inp)
        decisions.append(decision)
        t.log("segment_start", segment=seg.index, action=decision.action.token,
              rule=decision.rule_fired, confidence=decision.confidence,
              trace_index=trace_start)

        token = decision.action.token
        commanded = None
        if token == "forward":
            termination = _forward_phase(t, seg)
        elif decision.action.is_turn:
            commanded = decision.signed_turn_deg
            for cmd in translate(decision.action, params, platform,
                                 magnitude_deg=decision.turn_magnitude_deg):
                t.apply(cmd, seg.index)
            termination = _forward_phase(t, seg)
        elif token == "check_under":
            termination = _run_check_under(t, seg)
        elif token == "cover_area":
            termination = _run_cover_area(t, seg)
        else:  # pragma: no cover - vocabulary is closed
            raise ValueError(f"unexpected macro {token!r}")

        if termination == "timeout":
            timed_out = True
        outcomes.append(SegmentOutcome(
            seg.index, token, decision.rule_fired, decision.confidence,
            termination, trace_start, len(t.trace) - 1, commanded_turn_deg=commanded))
        t.log("segment_end", segment=seg.index, termination=termination,
              trace_index=len(t.trace) - 1)

    return TrialResult(
        seed=noise.seed, trial_index=trial_index, params=params, noise=noise,
        segments=segments, decisions=decisions, outcomes=outcomes,
        pose_trace=t.trace, events=t.events,
        steps_used=t.steps_used, step_budget=budget,
    )
