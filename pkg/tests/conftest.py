"""Shared builders: a 640x480 pixel-proxy world (1 px = 0.0078125 m)."""

import math

import numpy as np

from sketchrun.geometry import PixelProxy, Sketch, Stroke
from sketchrun.world import Pose2, SceneGrid

PROXY = PixelProxy(640, 480, kappa=0.08, l_max_m=0.5)
MPP = PROXY.meters_per_pixel  # 0.0078125 m per pixel
SCENE_W_M = 640 * MPP  # 5.0
SCENE_H_M = 480 * MPP  # 3.75


def world_to_px(points_m):
    return np.asarray(points_m, dtype=float) / MPP


def make_scene(rects=(), start=(0.5, 0.5, 0.0), resolution=0.05):
    """Empty proxy-scaled scene plus (x0, y0, x1, y1[, clearance]) rectangles."""
    scene = SceneGrid.empty(SCENE_W_M, SCENE_H_M, resolution,
                            scale=PROXY, start_pose=Pose2(*start))
    for rect in rects:
        clearance = rect[4] if len(rect) > 4 else None
        scene = scene.with_rect(*rect[:4], clearance_m=clearance)
    return scene


def path_sketch(waypoints_m, dense_step_m=None):
    """Path sketch through metric waypoints (optionally densified)."""
    pts = [np.asarray(w, dtype=float) for w in waypoints_m]
    if dense_step_m:
        out = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            d = float(np.linalg.norm(b - a))
            n = max(1, int(round(d / dense_step_m)))
            out.extend(a + (b - a) * (k / n) for k in range(1, n + 1))
        pts = out
    return Sketch([Stroke(world_to_px(pts), kind="path")], 640, 480)


def straight_sketch(start_m=(0.5, 0.5), length_m=0.4, heading_deg=0.0):
    h = math.radians(heading_deg)
    end = (start_m[0] + length_m * math.cos(h), start_m[1] + length_m * math.sin(h))
    return path_sketch([start_m, end])


def area_sketch(x0, y0, x1, y1):
    ring = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    return Sketch([Stroke(world_to_px(ring), kind="area", closed=True)], 640, 480)
