"""Procedural scenario generation by scene type and task-length category.

Each scenario is a furnished occupancy grid, a collision-free reference path
with a category-banded corner count, and that path rendered as a pixel-space
sketch through the scene's grounding. Generation is pure in (spec, seed):
every random draw comes from a counter-based stream keyed by the seed and an
attempt counter, so identical specs reproduce identical scenarios anywhere.

Corner angles default to a mixed continuous range (drives the action-space
resolution study and long-horizon degradation); "snap" mode draws them from
the exactly-representable {45, 90} magnitudes for round-trip identities.
"""

from __future__ import annotations

import io as _io
import math
from dataclasses import dataclass

import numpy as np

from .control import ControlParams, DEFAULT_PARAMS
from .errors import GenerationFailed
from .geometry import PixelProxy, Sketch, Stroke, resample_polyline, stroke_corner_count
from .world import Pose2, SceneGrid, derive_stream

SCENE_TYPES = ("Bedroom", "Kitchen", "Living room", "Bathroom",
               "Corridor", "Staircase", "Region", "Other")
CATEGORIES = ("Short", "Medium", "Long")

CORNER_BANDS = {"Short": (0, 2), "Medium": (3, 5), "Long": (6, 9)}

IMAGE_W, IMAGE_H = 640, 480
RESOLUTION_M = 0.05

# sub-stream domains under the scenario seed
_DOM_SCENARIO = 7001


@dataclass(frozen=True)
class ScenarioSpec:
    length_category: str
    scene_type: str
    seed: int
    # "mixed": corners uniform in +-[40, 100] deg; "snap": exactly +-45/+-90
    corner_mode: str = "mixed"

    def __post_init__(self):
        if self.length_category not in CATEGORIES:
            raise ValueError(f"unknown category {self.length_category!r}")
        if self.scene_type not in SCENE_TYPES:
            raise ValueError(f"unknown scene type {self.scene_type!r}")
        if self.corner_mode not in ("mixed", "snap"):
            raise ValueError(f"unknown corner mode {self.corner_mode!r}")


# (count range, size range per axis, clearance probability, margin to path)
_TEMPLATES = {
    "Bedroom": dict(n=(3, 5), size=(0.3, 1.0), clear_p=0.4, margin=0.45),
    "Kitchen": dict(n=(4, 6), size=(0.25, 0.8), clear_p=0.3, margin=0.45),
    "Living room": dict(n=(2, 4), size=(0.4, 1.1), clear_p=0.5, margin=0.50),
    "Bathroom": dict(n=(3, 5), size=(0.25, 0.7), clear_p=0.2, margin=0.45),
    "Corridor": dict(n=(4, 7), size=(0.15, 1.6), clear_p=0.2, margin=0.40, elongated=True),
    "Staircase": dict(n=(5, 8), size=(0.15, 1.6), clear_p=0.1, margin=0.35, elongated=True),
    "Region": dict(n=(1, 2), size=(0.3, 0.7), clear_p=0.3, margin=0.55),
    "Other": dict(n=(2, 5), size=(0.3, 0.9), clear_p=0.3, margin=0.45),
}


def default_proxy(params: ControlParams = DEFAULT_PARAMS) -> PixelProxy:
    return PixelProxy(IMAGE_W, IMAGE_H, kappa=params.kappa, l_max_m=params.l_max_m)


def _arc_leg(pos: np.ndarray, heading_deg_: float, length: float, sweep_deg: float,
             step: float) -> tuple[list, float]:
    """Constant-curvature leg: points sampled every `step` of arc length."""
    h = math.radians(heading_deg_)
    sweep = math.radians(sweep_deg)
    radius = length / abs(sweep)
    sign = 1.0 if sweep > 0 else -1.0
    center = pos + radius * sign * np.array([-math.sin(h), math.cos(h)])
    phi0 = math.atan2(pos[1] - center[1], pos[0] - center[0])
    n = max(2, int(round(length / step)))
    pts = []
    for k in range(1, n + 1):
        phi = phi0 + sign * (length * k / n) / radius
        pts.append(center + radius * np.array([math.cos(phi), math.sin(phi)]))
    return pts, heading_deg_ + sweep_deg


def _sample_turn(rng, mode: str) -> float:
    sign = 1.0 if rng.random() < 0.5 else -1.0
    if mode == "snap":
        return sign * float(rng.choice((45.0, 90.0)))
    return sign * float(rng.uniform(40.0, 100.0))


def _synthesize_path(rng, spec: ScenarioSpec, params: ControlParams,
                     width_m: float, height_m: float):
    """Random-walk polyline with the category's corner count, inside margins.

    Mixed mode mixes straight legs with gentle constant-curvature arcs (their
    windowed turning angle stays far below the corner threshold, so they do
    not count as corners but do load the per-piece heading change).
    """
    lo_c, hi_c = CORNER_BANDS[spec.length_category]
    n_corners = int(rng.integers(lo_c, hi_c + 1))
    margin = 0.55
    d = params.d_step_m
    for _ in range(40):
        start = np.array([
            rng.uniform(margin, width_m - margin),
            rng.uniform(margin, height_m - margin),
        ])
        if spec.corner_mode == "snap":
            heading = 45.0 * rng.integers(0, 8)
        else:
            heading = rng.uniform(-180.0, 180.0)
        pts = [start]
        h = heading
        ok = True
        for leg in range(n_corners + 1):
            placed = False
            for _try in range(40):
                length = d * rng.integers(10, 29)  # 0.5 .. 1.4 m on the step grid
                use_arc = spec.corner_mode == "mixed" and rng.random() < 0.35
                sweep = (1.0 if rng.random() < 0.5 else -1.0) * rng.uniform(18.0, 34.0) \
                    if use_arc else 0.0
                if use_arc:
                    leg_pts, h_end = _arc_leg(pts[-1], h, length, sweep, d)
                else:
                    r = math.radians(h)
                    leg_pts = [pts[-1] + length * np.array([math.cos(r), math.sin(r)])]
                    h_end = h
                arr = np.asarray(leg_pts)
                if (np.all(arr[:, 0] >= margin) and np.all(arr[:, 0] <= width_m - margin)
                        and np.all(arr[:, 1] >= margin) and np.all(arr[:, 1] <= height_m - margin)):
                    pts.extend(leg_pts)
                    placed = True
                    break
                if leg == 0:
                    h = rng.uniform(-180.0, 180.0) if spec.corner_mode == "mixed" \
                        else 45.0 * rng.integers(0, 8)
                    heading = h
                else:
                    h = prev_exit + _sample_turn(rng, spec.corner_mode)
            if not placed:
                ok = False
                break
            prev_exit = h_end
            if leg < n_corners:
                h = prev_exit + _sample_turn(rng, spec.corner_mode)
        if ok:
            return np.asarray(pts), heading, n_corners
    return None


def _densify(pts: np.ndarray, step: float) -> np.ndarray:
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        d = float(np.linalg.norm(b - a))
        n = max(1, int(round(d / step)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.asarray(out)


def _rect_near_polyline(x0, y0, x1, y1, dense: np.ndarray, margin: float) -> bool:
    inside = ((dense[:, 0] >= x0 - margin) & (dense[:, 0] <= x1 + margin)
              & (dense[:, 1] >= y0 - margin) & (dense[:, 1] <= y1 + margin))
    return bool(np.any(inside))


def _place_furniture(rng, scene: SceneGrid, spec: ScenarioSpec, dense: np.ndarray,
                     start: np.ndarray) -> SceneGrid:
    tpl = _TEMPLATES[spec.scene_type]
    n = int(rng.integers(tpl["n"][0], tpl["n"][1] + 1))
    margin = tpl["margin"]
    placed = 0
    tries = 0
    while placed < n and tries < 80:
        tries += 1
        if tpl.get("elongated") and rng.random() < 0.6:
            w = rng.uniform(1.0, tpl["size"][1])
            hgt = rng.uniform(tpl["size"][0], 0.3)
            if rng.random() < 0.5:
                w, hgt = hgt, w
        else:
            w = rng.uniform(*tpl["size"])
            hgt = rng.uniform(*tpl["size"])
        x0 = rng.uniform(0.1, scene.width_m - 0.1 - w)
        y0 = rng.uniform(0.1, scene.height_m - 0.1 - hgt)
        x1, y1 = x0 + w, y0 + hgt
        if _rect_near_polyline(x0, y0, x1, y1, dense, margin):
            continue
        if x0 - margin <= start[0] <= x1 + margin and y0 - margin <= start[1] <= y1 + margin:
            continue
        clearance = None
        if rng.random() < tpl["clear_p"]:
            clearance = (float(rng.uniform(1.05, 1.40)) if rng.random() < 0.6
                         else float(rng.uniform(0.60, 0.95)))
        scene = scene.with_rect(x0, y0, x1, y1, clearance_m=clearance)
        placed += 1
    return scene


def generate_scenario(spec: ScenarioSpec, params: ControlParams = DEFAULT_PARAMS):
    """Deterministically build (scene, sketch, reference path) for a spec."""
    proxy = default_proxy(params)
    width_m = IMAGE_W * proxy.meters_per_pixel
    height_m = IMAGE_H * proxy.meters_per_pixel
    lo_c, hi_c = CORNER_BANDS[spec.length_category]
    for attempt in range(100):
        rng = derive_stream(spec.seed, _DOM_SCENARIO, attempt)
        synth = _synthesize_path(rng, spec, params, width_m, height_m)
        if synth is None:
            continue
        pts, heading0, n_corners = synth
        dense = _densify(pts, params.d_step_m)
        got = stroke_corner_count(dense, params)
        if not (lo_c <= got <= hi_c):
            continue

        nx = int(round(width_m / RESOLUTION_M))
        ny = int(round(height_m / RESOLUTION_M))
        occ = np.zeros((ny, nx), dtype=bool)
        occ[0, :] = occ[-1, :] = True
        occ[:, 0] = occ[:, -1] = True
        scene_id = f"{spec.scene_type.lower().replace(' ', '-')}-{spec.length_category.lower()}-{spec.seed}"
        scene = SceneGrid(RESOLUTION_M, occ, scale=proxy,
                          start_pose=Pose2(pts[0][0], pts[0][1], heading0),
                          scene_id=scene_id)
        scene = _place_furniture(rng, scene, spec, dense, pts[0])
        try:
            scene.validate_start_pose(scene.start_pose, 0.15)
        except Exception:
            continue
        sketch = Sketch([Stroke(proxy.to_pixel(dense), kind="path")], IMAGE_W, IMAGE_H)
        reference = resample_polyline(dense, params.d_step_m)
        return scene, sketch, reference
    raise GenerationFailed(f"no valid scenario for {spec} after 100 attempts")


# ---------------------------------------------------------------------------
# scene rendering (backdrop asset for the studio)
# ---------------------------------------------------------------------------

def render_scene_png(scene: SceneGrid) -> bytes:
    """Grayish top-down rendering of the grid at sketch-image resolution."""
    from PIL import Image

    proxy = scene.scale
    if isinstance(proxy, PixelProxy):
        w_px, h_px = int(proxy.image_width), int(proxy.image_height)
    else:
        w_px, h_px = IMAGE_W, IMAGE_H
    img = np.full((scene.ny, scene.nx, 3), 245, dtype=np.uint8)
    img[scene.occupancy] = (70, 70, 80)
    for (ix, iy), h in scene.clearance.items():
        img[iy, ix] = (120, 100, 60) if h >= 1.0 else (150, 90, 90)
    six, siy = scene.cell_of(scene.start_pose.x, scene.start_pose.y)
    if scene.in_bounds_cell(six, siy):
        img[siy, six] = (40, 160, 60)
    pil = Image.fromarray(img, mode="RGB").resize((w_px, h_px), Image.NEAREST)
    buf = _io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()
