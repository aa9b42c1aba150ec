"""Trajectory alignment and the success-rate metric suite.

DTW is the classic full-window dynamic program over planar Euclidean point
costs with match/insert/delete steps and aligned boundaries. Judgments:
per-segment success and strict adherence, whole-task completion (FTCR) and
strict path adherence within a lateral corridor (FTSPAR), plus the
under-obstacle handling rate (UOMS). Aggregation disaggregates by scene type
and task-length category and emits a failure-position histogram over
trajectory thirds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySequence, NoTrials, TraceMismatch
from .executor import TrialResult, point_in_polygon, _closed_polygon
from .geometry import Segment
from .world import Pose2, wrap_deg


@dataclass(frozen=True)
class ToleranceProfile:
    """Adherence tolerances; floor and tabletop presets per task band."""

    lateral_band_m: float = 0.25
    local_lateral_m: float = 0.05
    local_angular_deg: float = 5.0

    def __post_init__(self):
        if min(self.lateral_band_m, self.local_lateral_m, self.local_angular_deg) <= 0:
            raise ValueError("tolerances must be positive")

    @staticmethod
    def floor() -> "ToleranceProfile":
        return ToleranceProfile(lateral_band_m=0.25)

    @staticmethod
    def tabletop() -> "ToleranceProfile":
        return ToleranceProfile(lateral_band_m=0.05)


COVERAGE_THRESHOLD = 0.95


# ---------------------------------------------------------------------------
# DTW
# ---------------------------------------------------------------------------

def dtw(a, b) -> float:
    """Minimal accumulated alignment cost between two planar sequences.

    Full-window DP, Euclidean point cost, steps {match, insert, delete},
    boundary-aligned. The loop keeps the exact evaluation order of the naive
    recursion so results match a recursive oracle bit for bit.
    """
    pa = np.atleast_2d(np.asarray(a, dtype=float))
    pb = np.atleast_2d(np.asarray(b, dtype=float))
    if pa.size == 0 or pb.size == 0:
        raise EmptySequence("DTW needs nonempty sequences")
    n, m = len(pa), len(pb)
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    ax = pa[:, 0].tolist()
    ay = pa[:, 1].tolist()
    bx = pb[:, 0].tolist()
    by = pb[:, 1].tolist()
    hypot = math.hypot
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        x, y = ax[i - 1], ay[i - 1]
        for j in range(1, m + 1):
            c = hypot(x - bx[j - 1], y - by[j - 1])
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        prev = cur
    return prev[m]


def dtw_per_meter(a, b) -> tuple[float, float]:
    """(raw cost, cost per meter of reference length). Reference is `b`."""
    cost = dtw(a, b)
    ref = np.atleast_2d(np.asarray(b, dtype=float))
    length = float(np.sum(np.linalg.norm(np.diff(ref, axis=0), axis=1))) if len(ref) > 1 else 0.0
    return cost, (cost / length if length > 0 else cost)


# ---------------------------------------------------------------------------
# geometric helpers
# ---------------------------------------------------------------------------

def max_chord_deviation(points_xy: np.ndarray, start, end) -> float:
    """Largest perpendicular distance of the points from the chord line."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    chord = end - start
    clen = np.linalg.norm(chord)
    pts = np.atleast_2d(points_xy) - start
    if clen < 1e-12:
        return float(np.max(np.linalg.norm(pts, axis=1)))
    u = chord / clen
    return float(np.max(np.abs(pts[:, 0] * u[1] - pts[:, 1] * u[0])))


def polyline_distance(points_xy: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest polyline segment (vectorized)."""
    pts = np.atleast_2d(np.asarray(points_xy, dtype=float))
    poly = np.atleast_2d(np.asarray(polyline, dtype=float))
    if len(poly) == 1:
        return np.linalg.norm(pts - poly[0], axis=1)
    a = poly[:-1]
    d = poly[1:] - a
    dd = np.sum(d * d, axis=1)
    dd[dd == 0] = 1e-300
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.sum(rel * d[None, :, :], axis=2) / dd[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(pts[:, None, :] - proj, axis=2)
    return dist.min(axis=1)


def area_coverage(trial: TrialResult, outcome, scene=None, tool_width_m: float = 0.25,
                  cell_m: float = 0.05) -> float:
    """Fraction of the area polygon's target cells swept by the tool footprint.

    Target cells are polygon-interior cell centers (minus occupied cells when
    the scene is given); a cell counts as swept when the tool face overlaps
    the cell square, i.e. some trace point of the segment passes within
    tool_width/2 + cell/2 of the cell center.
    """
    seg = trial.segments[outcome.segment_index]
    poly = _closed_polygon(seg)
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    xs = np.arange(lo[0] + cell_m / 2, hi[0], cell_m)
    ys = np.arange(lo[1] + cell_m / 2, hi[1], cell_m)
    targets = []
    for y in ys:
        for x in xs:
            if not point_in_polygon((x, y), poly):
                continue
            if scene is not None:
                ix, iy = scene.cell_of(x, y)
                if scene.occupied_cell(ix, iy):
                    continue
            targets.append((x, y))
    if not targets:
        return 1.0
    targets = np.asarray(targets)
    slice_pts = np.array([[p.x, p.y] for p in
                          trial.pose_trace[outcome.trace_start:outcome.trace_end + 1]])
    if len(slice_pts) == 0:
        return 0.0
    d2 = np.min(
        (targets[:, None, 0] - slice_pts[None, :, 0]) ** 2
        + (targets[:, None, 1] - slice_pts[None, :, 1]) ** 2,
        axis=1,
    )
    swept = d2 <= (tool_width_m / 2.0 + cell_m / 2.0) ** 2 + 1e-12
    return float(np.mean(swept))


# ---------------------------------------------------------------------------
# judgments
# ---------------------------------------------------------------------------

def judge_segment(outcome, trace, segment: Segment, tol: ToleranceProfile):
    """(success, adherent). adherent is None when the segment failed.

    Forward adherence is the max lateral deviation from the segment chord;
    turns compare net achieved rotation with the commanded one. check_under
    and cover_area have no local geometric criterion here (cover_area is
    judged by coverage at task level) and count adherent when successful.
    """
    if not (0 <= outcome.trace_start <= outcome.trace_end < len(trace)):
        raise TraceMismatch(
            f"slice [{outcome.trace_start}, {outcome.trace_end}] outside trace of {len(trace)}")
    success = outcome.termination in ("completed", "under_maneuver_done")
    if not success:
        return False, None
    poses = trace[outcome.trace_start:outcome.trace_end + 1]
    if outcome.macro == "forward":
        pts = np.array([[p.x, p.y] for p in poses])
        dev = max_chord_deviation(pts, segment.chord_start, segment.chord_end)
        return True, bool(dev <= tol.local_lateral_m + 1e-12)
    if outcome.macro.startswith("turn_"):
        achieved = wrap_deg(poses[-1].theta - poses[0].theta)
        commanded = outcome.commanded_turn_deg or 0.0
        return True, bool(abs(wrap_deg(achieved - commanded)) <= tol.local_angular_deg + 1e-12)
    return True, True


def judge_task(trial: TrialResult, reference: np.ndarray, tol: ToleranceProfile,
               scene=None, tool_width_m: float = 0.25):
    """(ftcr_success, ftspar_success) for a complete trial."""
    if trial.had_safety_halt or trial.had_timeout:
        return False, False
    for outcome in trial.outcomes:
        if outcome.macro == "cover_area":
            if area_coverage(trial, outcome, scene, tool_width_m) < COVERAGE_THRESHOLD:
                return False, False
        elif outcome.termination not in ("completed", "under_maneuver_done"):
            return False, False
    trace = trial.trace_xy()
    ftspar = bool(np.all(polyline_distance(trace, np.asarray(reference)) <= tol.lateral_band_m + 1e-12))
    return True, ftspar


@dataclass
class JudgedTrial:
    """One trial's judged row, ready for aggregation and serialization."""

    seed: int
    trial_index: int
    n_segments: int
    successes: int
    adherent: int
    ftcr: bool
    ftspar: bool
    dtw_cost: float
    dtw_per_m: float
    uoms_encounters: int
    uoms_handled: int
    failure_third: int | None
    scene_type: str | None = None
    category: str | None = None
    segment_rows: list = field(default_factory=list)
    # failed-segment counts per trajectory third (first/middle/final)
    failure_thirds: tuple = (0, 0, 0)


def judge_trial(trial: TrialResult, reference: np.ndarray, tol: ToleranceProfile,
                scene=None, scene_type: str | None = None, category: str | None = None,
                tool_width_m: float = 0.25) -> JudgedTrial:
    successes = 0
    adherent = 0
    segment_rows = []
    first_failure = None
    thirds = [0, 0, 0]
    for outcome in trial.outcomes:
        seg = trial.segments[outcome.segment_index]
        ok, adh = judge_segment(outcome, trial.pose_trace, seg, tol)
        successes += int(ok)
        adherent += int(bool(adh))
        if not ok:
            thirds[min(2, 3 * outcome.segment_index // max(1, trial.n_seg))] += 1
            if first_failure is None:
                first_failure = outcome.segment_index
        segment_rows.append({
            "segment": outcome.segment_index,
            "macro": outcome.macro,
            "termination": outcome.termination,
            "success": ok,
            "adherent": adh,
        })
    ftcr, ftspar = judge_task(trial, reference, tol, scene, tool_width_m)
    cost, per_m = dtw_per_meter(trial.trace_xy(), reference)
    encounters = sum(1 for e in trial.events if e["type"] == "clearance_checked")
    bad_segments = {o.segment_index for o in trial.outcomes
                    if o.termination in ("safety_halt", "timeout")}
    handled = sum(1 for e in trial.events
                  if e["type"] == "clearance_checked" and e["segment"] not in bad_segments)
    if first_failure is None:
        third = None
    else:
        third = min(2, 3 * first_failure // max(1, trial.n_seg))
    return JudgedTrial(
        seed=trial.seed, trial_index=trial.trial_index, n_segments=trial.n_seg,
        successes=successes, adherent=adherent, ftcr=ftcr, ftspar=ftspar,
        dtw_cost=cost, dtw_per_m=per_m,
        uoms_encounters=encounters, uoms_handled=handled,
        failure_third=third, scene_type=scene_type, category=category,
        segment_rows=segment_rows, failure_thirds=tuple(thirds),
    )


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    trial_count: int
    sssr: float
    ssspar: float
    ssspar_all_denominator: float  # same numerator over all segments, for comparison
    ftcr: float
    ftspar: float
    uoms: float | None
    failure_histogram: list       # counts per trajectory third
    cells: dict                   # (scene_type, category) -> per-cell rates
    segment_count: int
    success_count: int

    def cell(self, scene_type: str, category: str) -> dict | None:
        return self.cells.get((scene_type, category))


def _rates(rows: list[JudgedTrial]) -> dict:
    n_seg = sum(r.n_segments for r in rows)
    n_ok = sum(r.successes for r in rows)
    n_adh = sum(r.adherent for r in rows)
    out = {
        "trials": len(rows),
        "segments": n_seg,
        "sssr": 100.0 * n_ok / n_seg if n_seg else None,
        "ssspar": 100.0 * n_adh / n_ok if n_ok else None,
        "ftcr": 100.0 * sum(r.ftcr for r in rows) / len(rows),
        "ftspar": 100.0 * sum(r.ftspar for r in rows) / len(rows),
        "dtw_per_m_mean": float(np.mean([r.dtw_per_m for r in rows])),
    }
    return out


def aggregate(judged: list[JudgedTrial]) -> MetricsReport:
    """Fold judged trials into the metric report; empty cells are absent."""
    if not judged:
        raise NoTrials("aggregate needs at least one judged trial")
    n_seg = sum(r.n_segments for r in judged)
    n_ok = sum(r.successes for r in judged)
    n_adh = sum(r.adherent for r in judged)
    encounters = sum(r.uoms_encounters for r in judged)
    handled = sum(r.uoms_handled for r in judged)
    hist = [0, 0, 0]
    for r in judged:
        for i in range(3):
            hist[i] += r.failure_thirds[i]
    cells = {}
    keys = sorted({(r.scene_type, r.category) for r in judged
                   if r.scene_type is not None and r.category is not None})
    for key in keys:
        rows = [r for r in judged if (r.scene_type, r.category) == key]
        if rows:
            cells[key] = _rates(rows)
    return MetricsReport(
        trial_count=len(judged),
        sssr=100.0 * n_ok / n_seg if n_seg else 0.0,
        ssspar=100.0 * n_adh / n_ok if n_ok else 0.0,
        ssspar_all_denominator=100.0 * n_adh / n_seg if n_seg else 0.0,
        ftcr=100.0 * sum(r.ftcr for r in judged) / len(judged),
        ftspar=100.0 * sum(r.ftspar for r in judged) / len(judged),
        uoms=(100.0 * handled / encounters) if encounters else None,
        failure_histogram=hist,
        cells=cells,
        segment_count=n_seg,
        success_count=n_ok,
    )
