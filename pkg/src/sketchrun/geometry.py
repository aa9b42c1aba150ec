"""Stroke geometry: segmentation into primitives, keypoints, and metric grounding.

Free-form strokes drawn over a scene photograph are split into ordered
primitives at sharp corners (windowed turning angle above a threshold, with
Schmitt-trigger hysteresis) and at a length cap, then grounded to meters via
either a ground-plane homography or a resolution-relative pixel proxy.

All operations are pure; every returned object is immutable by convention.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .control import ControlParams
from .errors import (
    DegenerateConfiguration,
    DegenerateStroke,
    EmptySketch,
    NonPositiveDims,
    PointAtInfinity,
    RankDeficient,
    ScaleUnavailable,
)

# Turning angles are evaluated over triplets spaced this many input points
# apart (clamped near stroke ends); robust to pixel jitter.
ANGLE_STRIDE = 3

# A stroke counts as closed when its endpoints lie within this fraction of
# the image diagonal.
CLOSURE_DIAG_FRACTION = 0.02

_EPS = 1e-9


# ---------------------------------------------------------------------------
# basic polyline helpers
# ---------------------------------------------------------------------------

def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def heading_deg(a, b) -> float:
    """Heading of the vector a->b in degrees."""
    return math.degrees(math.atan2(b[1] - a[1], b[0] - a[0]))


def wrap_deg(theta: float) -> float:
    t = math.fmod(theta, 360.0)
    if t <= -180.0:
        t += 360.0
    elif t > 180.0:
        t -= 360.0
    return t


def resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Arc-length uniform resampling, keeping first and last points."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2 or spacing <= 0:
        return pts.copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= _EPS:
        return pts[:1].copy()
    n = max(1, int(math.floor(total / spacing + 1e-9)))
    targets = np.arange(n + 1) * spacing
    targets[-1] = min(targets[-1], total)
    if total - targets[-1] > 1e-9:
        targets = np.append(targets, total)
    out = np.empty((len(targets), 2))
    out[:, 0] = np.interp(targets, cum, pts[:, 0])
    out[:, 1] = np.interp(targets, cum, pts[:, 1])
    return out


def turning_angles_windowed(points: np.ndarray, stride: int = ANGLE_STRIDE) -> np.ndarray:
    """Signed turning angle (degrees) at each vertex, windowed over `stride`.

    The angle at vertex i compares the incoming direction p[i-s] -> p[i] with
    the outgoing direction p[i] -> p[i+s], where s shrinks near endpoints.
    Endpoints get 0.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    angles = np.zeros(n)
    for i in range(1, n - 1):
        s = min(stride, i, n - 1 - i)
        a, b, c = pts[i - s], pts[i], pts[i + s]
        v_in = b - a
        v_out = c - b
        if np.dot(v_in, v_in) < 1e-24 or np.dot(v_out, v_out) < 1e-24:
            continue
        angles[i] = wrap_deg(
            math.degrees(math.atan2(v_out[1], v_out[0]) - math.atan2(v_in[1], v_in[0]))
        )
    return angles


def corner_events(
    points: np.ndarray,
    theta_turn_deg: float,
    hysteresis_deg: float,
    stride: int = ANGLE_STRIDE,
) -> list[int]:
    """Interior vertex indices where a corner fires, after hysteresis.

    Schmitt trigger over |windowed angle|: a run opens on a rising crossing of
    theta_turn and closes when the angle falls below theta_turn - hysteresis;
    each run contributes exactly one corner, placed at its peak-angle vertex
    (first index on ties) so the event sits on the geometric corner rather
    than wherever the window first grazes it.
    """
    angles = turning_angles_windowed(points, stride)
    fall = theta_turn_deg - hysteresis_deg
    events: list[int] = []
    run_peak = -1
    run_mag = -1.0
    for i in range(1, len(points) - 1):
        mag = abs(angles[i])
        if run_peak < 0:
            if mag > theta_turn_deg:
                run_peak, run_mag = i, mag
        else:
            if mag < fall:
                events.append(run_peak)
                run_peak, run_mag = -1, -1.0
            elif mag > run_mag:
                run_peak, run_mag = i, mag
    if run_peak >= 0:
        events.append(run_peak)
    return events


# ---------------------------------------------------------------------------
# metric grounding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)


class Homography:
    """Ground-plane -> image projective map, normalized so m[2][2] == 1."""

    def __init__(self, m: np.ndarray, reproj_rms_px: float | None = None):
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if abs(m[2, 2]) < 1e-12:
            raise RankDeficient("homography cannot be normalized (m[2][2] ~ 0)")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-9:
            raise RankDeficient(f"homography is singular (|det|={abs(np.linalg.det(m)):.3e})")
        self.m = m
        self.m.setflags(write=False)
        self.m_inv = np.linalg.inv(m)
        self.m_inv.setflags(write=False)
        self.reproj_rms_px = reproj_rms_px

    def to_world(self, points_px: np.ndarray) -> np.ndarray:
        """Map pixel points (N,2) to ground-plane meters via the inverse map."""
        pts = np.atleast_2d(np.asarray(points_px, dtype=float))
        h = np.column_stack([pts, np.ones(len(pts))]) @ self.m_inv.T
        w = h[:, 2]
        if np.any(np.abs(w) < 1e-12):
            raise PointAtInfinity("pixel maps to the plane at infinity")
        return h[:, :2] / w[:, None]

    def to_pixel(self, points_m: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points_m, dtype=float))
        h = np.column_stack([pts, np.ones(len(pts))]) @ self.m.T
        w = h[:, 2]
        if np.any(np.abs(w) < 1e-12):
            raise PointAtInfinity("world point maps to the image plane at infinity")
        return h[:, :2] / w[:, None]

    def world_length(self, p: PixelPoint | np.ndarray, delta_px: np.ndarray) -> float:
        """Metric length of a small pixel displacement at p: ||J_inv(p) @ delta||."""
        if isinstance(p, PixelPoint):
            p = p.as_array()
        u = np.array([p[0], p[1], 1.0])
        a = self.m_inv
        num_x, num_y, den = a[0] @ u, a[1] @ u, a[2] @ u
        if abs(den) < 1e-12:
            raise PointAtInfinity("Jacobian undefined at the plane at infinity")
        j = np.empty((2, 2))
        j[0, 0] = (a[0, 0] * den - num_x * a[2, 0]) / den**2
        j[0, 1] = (a[0, 1] * den - num_x * a[2, 1]) / den**2
        j[1, 0] = (a[1, 0] * den - num_y * a[2, 0]) / den**2
        j[1, 1] = (a[1, 1] * den - num_y * a[2, 1]) / den**2
        return float(np.linalg.norm(j @ np.asarray(delta_px, dtype=float)))

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))


def pixel_to_world(h: Homography, p: PixelPoint | tuple[float, float]) -> tuple[float, float]:
    if isinstance(p, PixelPoint):
        p = (p.u, p.v)
    out = h.to_world(np.array([p]))
    return float(out[0, 0]), float(out[0, 1])


def world_to_pixel(h: Homography, p: tuple[float, float]) -> tuple[float, float]:
    out = h.to_pixel(np.array([p]))
    return float(out[0, 0]), float(out[0, 1])


def pixel_proxy_lmax(width: float, height: float, kappa: float) -> float:
    """Pixel surrogate for the metric segment cap: kappa * image diagonal."""
    if width <= 0 or height <= 0:
        raise NonPositiveDims(f"image dims must be positive, got {width}x{height}")
    if not (0.06 <= kappa <= 0.10):
        warnings.warn(
            f"kappa={kappa} outside the recommended band [0.06, 0.10]",
            stacklevel=2,
        )
    return kappa * math.hypot(width, height)


@dataclass(frozen=True)
class PixelProxy:
    """Uniform pixel->meter grounding used when no camera calibration exists.

    The segment cap in pixels is kappa * diag; one such cap corresponds to
    l_max_m meters, which fixes the scale.
    """

    image_width: float
    image_height: float
    kappa: float = 0.08
    l_max_m: float = 0.5

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise NonPositiveDims("pixel proxy needs positive image dims")
        if self.kappa <= 0 or self.l_max_m <= 0:
            raise ValueError("kappa and l_max_m must be positive")

    @property
    def l_max_px(self) -> float:
        return pixel_proxy_lmax(self.image_width, self.image_height, self.kappa)

    @property
    def meters_per_pixel(self) -> float:
        return self.l_max_m / self.l_max_px

    def to_world(self, points_px: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(points_px, dtype=float)) * self.meters_per_pixel

    def to_pixel(self, points_m: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(points_m, dtype=float)) / self.meters_per_pixel


# ---------------------------------------------------------------------------
# strokes and sketches
# ---------------------------------------------------------------------------

class Stroke:
    """Ordered pixel polyline with an authoring kind ('path' | 'area')."""

    def __init__(self, points, kind: str = "path", closed: bool = False):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise DegenerateStroke("stroke needs at least two 2D points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("stroke points must be finite")
        dup = np.all(np.abs(np.diff(pts, axis=0)) < 1e-12, axis=1)
        if np.any(dup):
            pts = np.concatenate([pts[:1], pts[1:][~dup]])
        if len(pts) < 2:
            raise DegenerateStroke("stroke collapses to a single distinct point")
        if kind not in ("path", "area"):
            raise ValueError(f"stroke kind must be 'path' or 'area', got {kind!r}")
        self.points = pts
        self.points.setflags(write=False)
        self.kind = kind
        self.closed = bool(closed)

    def __len__(self) -> int:
        return len(self.points)


class Sketch:
    """Strokes over one scene photograph; the language note is inert metadata."""

    def __init__(self, strokes, image_width: int, image_height: int, language_note: str | None = None):
        if image_width <= 0 or image_height <= 0:
            raise NonPositiveDims("sketch image dims must be positive")
        strokes = list(strokes)
        if not strokes:
            raise EmptySketch("sketch must contain at least one stroke")
        for i, s in enumerate(strokes):
            pts = s.points
            if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > image_width - 1) or \
               np.any(pts[:, 1] < 0) or np.any(pts[:, 1] > image_height - 1):
                raise ValueError(f"stroke {i} has points outside image bounds")
        self.strokes = strokes
        self.image_width = int(image_width)
        self.image_height = int(image_height)
        self.language_note = language_note

    def stroke_effectively_closed(self, stroke: Stroke) -> bool:
        if stroke.closed:
            return True
        tol = CLOSURE_DIAG_FRACTION * math.hypot(self.image_width, self.image_height)
        return bool(np.linalg.norm(stroke.points[0] - stroke.points[-1]) <= tol)


@dataclass(frozen=True)
class Keypoint:
    loc: tuple[float, float]  # normalized coords
    kind: str  # "Start" | "End" | "Corner"


@dataclass(frozen=True)
class Segment:
    """One atomic geometric primitive of the ordered sequence."""

    index: int
    pixel_points: np.ndarray
    norm_points: np.ndarray
    world_polyline: np.ndarray
    length_m: float
    delta_yaw_deg: float
    mean_curvature: float
    corner_count: int
    is_path: bool
    is_area: bool
    is_closed: bool
    stroke_index: int = 0
    end_cause: str = "stroke_end"  # "corner" | "length" | "stroke_end"

    def __post_init__(self):
        for name in ("pixel_points", "norm_points", "world_polyline"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def chord_start(self) -> np.ndarray:
        return self.world_polyline[0]

    @property
    def chord_end(self) -> np.ndarray:
        return self.world_polyline[-1]

    @property
    def chord_length(self) -> float:
        return float(np.linalg.norm(self.chord_end - self.chord_start))


def normalize_points(points: np.ndarray) -> np.ndarray:
    """Aspect-preserving normalization: dominant bbox axis spans exactly [-1, 1].

    The minor axis is scaled by the same factor and centered, so angles are
    preserved and all coordinates stay inside [-1, 1]^2.
    """
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = hi - lo
    dom = int(np.argmax(span))
    minor = 1 - dom
    s_dom = span[dom]
    out = np.empty_like(pts)
    if s_dom <= _EPS:
        out[:] = 0.0
        return out
    out[:, dom] = (pts[:, dom] - lo[dom]) / s_dom * 2.0 - 1.0
    half_minor = span[minor] / s_dom
    out[:, minor] = (pts[:, minor] - lo[minor]) / s_dom * 2.0 - half_minor
    return out


def _mean_curvature(world_pts: np.ndarray, length_m: float) -> float:
    """Total absolute per-vertex turning (radians) per meter of polyline."""
    if length_m <= _EPS or len(world_pts) < 3:
        return 0.0
    total = 0.0
    for i in range(1, len(world_pts) - 1):
        v_in = world_pts[i] - world_pts[i - 1]
        v_out = world_pts[i + 1] - world_pts[i]
        if np.dot(v_in, v_in) < 1e-24 or np.dot(v_out, v_out) < 1e-24:
            continue
        total += abs(math.radians(
            wrap_deg(
                heading_deg(world_pts[i], world_pts[i + 1])
                - heading_deg(world_pts[i - 1], world_pts[i])
            )
        ))
    return total / length_m


def detect_keypoints(segment: Segment, params: ControlParams) -> list[Keypoint]:
    """Start, End, and hysteresis-filtered high-curvature Corner keypoints."""
    pts = segment.norm_points
    if len(pts) < 2:
        raise ValueError("segment needs at least two normalized points")
    kps = [Keypoint((float(pts[0, 0]), float(pts[0, 1])), "Start")]
    for i in corner_events(pts, params.theta_turn_deg, params.hysteresis_deg):
        kps.append(Keypoint((float(pts[i, 0]), float(pts[i, 1])), "Corner"))
    kps.append(Keypoint((float(pts[-1, 0]), float(pts[-1, 1])), "End"))
    return kps


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

@dataclass
class _Piece:
    world: list
    pixel: list
    end_cause: str


def _split_path_stroke(world: np.ndarray, pixel: np.ndarray, params: ControlParams, scale) -> list[_Piece]:
    corners = set(corner_events(world, params.theta_turn_deg, params.hysteresis_deg))
    l_max = params.l_max_m
    pieces: list[_Piece] = []
    cur_w = [world[0]]
    cur_p = [pixel[0]]
    cum = 0.0

    def close(cause: str, restart_w, restart_p):
        nonlocal cur_w, cur_p, cum
        if len(cur_w) >= 2:
            pieces.append(_Piece(cur_w, cur_p, cause))
        cur_w = [restart_w]
        cur_p = [restart_p]
        cum = 0.0

    for j in range(1, len(world)):
        target_w = world[j]
        pos_w = cur_w[-1]
        d = float(np.linalg.norm(target_w - pos_w))
        while cum + d > l_max + _EPS:
            remaining = l_max - cum
            if remaining > _EPS:
                t = remaining / d
                split_w = pos_w + t * (target_w - pos_w)
                split_p = scale.to_pixel(split_w[None, :])[0]
                cur_w.append(split_w)
                cur_p.append(split_p)
            else:
                # cap reached exactly at the current vertex: close without
                # fabricating a zero-length edge
                split_w = pos_w
                split_p = cur_p[-1]
            close("length", split_w, split_p)
            pos_w = split_w
            d = float(np.linalg.norm(target_w - pos_w))
        cur_w.append(target_w)
        cur_p.append(pixel[j])
        cum += d
        if j in corners and j < len(world) - 1:
            close("corner", target_w, pixel[j])
    if len(cur_w) >= 2:
        pieces.append(_Piece(cur_w, cur_p, "stroke_end"))
    elif pieces:
        pieces[-1].end_cause = "stroke_end"
    return pieces


def _merge_short_pieces(pieces: list[_Piece], merge_travel: float) -> list[_Piece]:
    """Fuse adjacent pieces whose combined polyline length is below the floor."""
    out = list(pieces)
    i = 0
    while i < len(out) - 1:
        a, b = out[i], out[i + 1]
        la = polyline_length(np.asarray(a.world))
        lb = polyline_length(np.asarray(b.world))
        if la + lb < merge_travel - _EPS:
            merged = _Piece(a.world + b.world[1:], a.pixel + b.pixel[1:], b.end_cause)
            out[i] = merged
            del out[i + 1]
        else:
            i += 1
    return out


def segment_sketch(sketch: Sketch, params: ControlParams, scale) -> list[Segment]:
    """Split all strokes into the ordered primitive sequence.

    Path strokes split at hysteresis-filtered corners and at the metric
    length cap (interpolating the split point exactly); area strokes (kind
    'area' or effectively closed) become single area segments. Adjacent path
    fragments whose combined length falls below the merge floor are fused.
    Deterministic: identical inputs give identical output.
    """
    if scale is None:
        raise ScaleUnavailable("segmentation needs a homography or pixel proxy")
    segments: list[Segment] = []
    index = 0
    for s_idx, stroke in enumerate(sketch.strokes):
        pixel = stroke.points
        world = scale.to_world(pixel)
        closed = sketch.stroke_effectively_closed(stroke)
        if stroke.kind == "area" or closed:
            segments.append(_finalize(index, s_idx, world, pixel, "stroke_end",
                                       is_area=True, is_closed=closed,
                                       entry_heading=None, params=params))
            index += 1
            continue
        pieces = _merge_short_pieces(
            _split_path_stroke(world, pixel, params, scale), params.merge_travel_m
        )
        entry_heading = None
        for piece in pieces:
            w = np.asarray(piece.world)
            p = np.asarray(piece.pixel)
            seg = _finalize(index, s_idx, w, p, piece.end_cause,
                            is_area=False, is_closed=False,
                            entry_heading=entry_heading, params=params)
            segments.append(seg)
            entry_heading = _edge_heading(w, from_end=True)
            index += 1
    return segments


def _edge_heading(world: np.ndarray, from_end: bool) -> float:
    """Heading of the last (or first) non-degenerate edge of a polyline."""
    n = len(world)
    indices = range(n - 2, -1, -1) if from_end else range(n - 1)
    for i in indices:
        if np.linalg.norm(world[i + 1] - world[i]) > 1e-12:
            return heading_deg(world[i], world[i + 1])
    return 0.0


def _finalize(index, stroke_index, world, pixel, end_cause, is_area, is_closed,
              entry_heading, params) -> Segment:
    world = np.asarray(world, dtype=float)
    pixel = np.asarray(pixel, dtype=float)
    length = polyline_length(world)
    exit_heading = _edge_heading(world, from_end=True)
    if entry_heading is None:
        entry_heading = _edge_heading(world, from_end=False)
    delta_yaw = wrap_deg(exit_heading - entry_heading)
    norm = normalize_points(world)
    corners = corner_events(world, params.theta_turn_deg, params.hysteresis_deg)
    return Segment(
        index=index,
        pixel_points=pixel,
        norm_points=norm,
        world_polyline=world,
        length_m=length,
        delta_yaw_deg=delta_yaw,
        mean_curvature=_mean_curvature(world, length),
        corner_count=len(corners),
        is_path=not is_area,
        is_area=is_area,
        is_closed=is_closed,
        stroke_index=stroke_index,
        end_cause=end_cause,
    )


def segment_from_polyline(
    world_points,
    params: ControlParams,
    pixel_points=None,
    index: int = 0,
    stroke_index: int = 0,
    is_area: bool = False,
    is_closed: bool = False,
    entry_heading: float | None = None,
) -> Segment:
    """Build a standalone segment from a world polyline (tests, direct API use)."""
    world = np.asarray(world_points, dtype=float)
    if len(world) < 2:
        raise DegenerateStroke("segment polyline needs at least two points")
    pixel = world if pixel_points is None else np.asarray(pixel_points, dtype=float)
    return _finalize(index, stroke_index, world, pixel, "stroke_end",
                     is_area=is_area, is_closed=is_closed,
                     entry_heading=entry_heading, params=params)


def stroke_corner_count(stroke_points: np.ndarray, params: ControlParams) -> int:
    """Hysteresis-filtered corner count over a whole stroke polyline."""
    return len(corner_events(np.asarray(stroke_points, dtype=float),
                             params.theta_turn_deg, params.hysteresis_deg))


# ---------------------------------------------------------------------------
# homography estimation (DLT)
# ---------------------------------------------------------------------------

def _normalizing_similarity(points: np.ndarray) -> np.ndarray:
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    dist = np.linalg.norm(points - centroid, axis=1).mean()
    s = math.sqrt(2.0) / dist if dist > 1e-12 else 1.0
    return np.array([[s, 0.0, -s * centroid[0]],
                     [0.0, s, -s * centroid[1]],
                     [0.0, 0.0, 1.0]])


def _any_three_collinear(points: np.ndarray) -> bool:
    n = len(points)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                ab = points[j] - points[i]
                ac = points[k] - points[i]
                cross = abs(ab[0] * ac[1] - ab[1] * ac[0])
                norm = np.linalg.norm(ab) * np.linalg.norm(ac)
                if norm < 1e-18 or cross / norm < 1e-9:
                    return True
    return False


def estimate_homography(correspondences) -> Homography:
    """Least-squares DLT fit of the ground->image homography.

    `correspondences` is a sequence of (pixel_point, world_point) pairs with
    at least four entries. Pixel/world points may be PixelPoint, tuples, or
    arrays. The result carries the RMS pixel reprojection error.
    """
    img = []
    wld = []
    for px, wp in correspondences:
        if isinstance(px, PixelPoint):
            px = (px.u, px.v)
        img.append([float(px[0]), float(px[1])])
        wld.append([float(wp[0]), float(wp[1])])
    img = np.asarray(img)
    wld = np.asarray(wld)
    n = len(img)
    if n < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {n}")
    for pts, side in ((img, "image"), (wld, "world")):
        d = pts[:, None, :] - pts[None, :, :]
        dist = np.linalg.norm(d, axis=2)
        np.fill_diagonal(dist, np.inf)
        if dist.min() < 1e-9:
            raise DegenerateConfiguration(f"duplicate {side} points")
    if n == 4 and (_any_three_collinear(img) or _any_three_collinear(wld)):
        raise DegenerateConfiguration("three of four correspondences are collinear")

    t_img = _normalizing_similarity(img)
    t_wld = _normalizing_similarity(wld)
    img_n = (np.column_stack([img, np.ones(n)]) @ t_img.T)[:, :2]
    wld_n = (np.column_stack([wld, np.ones(n)]) @ t_wld.T)[:, :2]

    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = wld_n[i]
        u, v = img_n[i]
        a[2 * i] = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-10 * sv[0]:
        raise RankDeficient("DLT system does not determine a unique homography")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_img) @ h_n @ t_wld
    if abs(h[2, 2]) < 1e-12:
        raise RankDeficient("estimated homography cannot be normalized")
    hom = Homography(h)
    reproj = hom.to_pixel(wld)
    rms = float(np.sqrt(np.mean(np.sum((reproj - img) ** 2, axis=1))))
    return Homography(h, reproj_rms_px=rms)
