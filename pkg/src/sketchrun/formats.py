"""Canonical document formats for sketches, scenes, params, trials, results.

One JSON dialect for every artifact: UTF-8, two-space indent, sorted keys,
floats in shortest round-trip decimal form, trailing newline. Canonical
serialization is byte-stable, so save -> load -> save is the identity and
golden files diff cleanly. Loaders validate and report a machine-readable
location path on failure. These documents are also the gateway's wire
payloads.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .control import ControlParams, PlatformProfile
from .errors import ParseError, SchemaVersionUnknown, ValidationFailed
from .executor import SegmentOutcome, TrialResult, generate_serpentine_plan, serpentine_lanes
from .geometry import (
    Homography,
    PixelProxy,
    Segment,
    Sketch,
    Stroke,
    detect_keypoints,
    resample_polyline,
    segment_sketch,
)
from .metrics import JudgedTrial, MetricsReport, aggregate
from .policy import PolicyDecision, get_policy, PolicyInput, PerceptionSnapshot
from .world import NoiseModel, Pose2, SceneGrid

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------

def _plain(obj):
    """Recursively convert to plain JSON types; reject non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if not math.isfinite(f):
            raise ValueError("non-finite float in document")
        return f
    if isinstance(obj, (np.integer, int)) or isinstance(obj, (bool, str)) or obj is None:
        return int(obj) if isinstance(obj, np.integer) else obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(doc: dict) -> str:
    return json.dumps(_plain(doc), sort_keys=True, indent=2,
                      ensure_ascii=False, allow_nan=False) + "\n"


def canonical_dump_bytes(doc: dict) -> bytes:
    return canonical_dumps(doc).encode("utf-8")


def _write(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_dumps(doc))


def _read(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_document(text, expected_kind=None)


def parse_document(text: str, expected_kind: str | None = None) -> dict:
    if not text.strip():
        raise ParseError("empty document")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("document root must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionUnknown(f"schema_version {version!r} not supported")
    if expected_kind is not None and doc.get("kind") != expected_kind:
        raise ValidationFailed(f"expected kind {expected_kind!r}, got {doc.get('kind')!r}", "kind")
    return doc


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def _need(doc: dict, key: str, types, loc: str):
    if key not in doc:
        raise ValidationFailed("missing field", f"{loc}.{key}" if loc else key)
    val = doc[key]
    if types is not None and not isinstance(val, types):
        raise ValidationFailed(
            f"expected {getattr(types, '__name__', types)}, got {type(val).__name__}",
            f"{loc}.{key}" if loc else key)
    return val


def _num(doc: dict, key: str, loc: str) -> float:
    val = _need(doc, key, (int, float), loc)
    if isinstance(val, bool):
        raise ValidationFailed("expected number, got bool", f"{loc}.{key}")
    return float(val)


# ---------------------------------------------------------------------------
# sketch documents
# ---------------------------------------------------------------------------

def sketch_to_doc(sketch: Sketch, correspondences=None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "sketch",
        "image_width": sketch.image_width,
        "image_height": sketch.image_height,
        "language_note": sketch.language_note,
        "strokes": [
            {
                "kind": s.kind,
                "closed": s.closed,
                "points": [[float(u), float(v)] for u, v in s.points],
            }
            for s in sketch.strokes
        ],
    }
    if correspondences is not None:
        doc["homography_correspondences"] = [
            [float(px[0]), float(px[1]), float(w[0]), float(w[1])]
            for px, w in correspondences
        ]
    return doc


def sketch_from_doc(doc: dict) -> Sketch:
    w = _num(doc, "image_width", "")
    h = _num(doc, "image_height", "")
    if w <= 0 or h <= 0:
        raise ValidationFailed("image dims must be positive", "image_width")
    strokes_doc = _need(doc, "strokes", list, "")
    if not strokes_doc:
        raise ValidationFailed("sketch needs at least one stroke", "strokes")
    strokes = []
    for i, sd in enumerate(strokes_doc):
        loc = f"strokes[{i}]"
        if not isinstance(sd, dict):
            raise ValidationFailed("stroke must be an object", loc)
        kind = _need(sd, "kind", str, loc)
        if kind not in ("path", "area"):
            raise ValidationFailed(f"stroke kind must be 'path' or 'area', got {kind!r}", f"{loc}.kind")
        closed = _need(sd, "closed", bool, loc)
        points = _need(sd, "points", list, loc)
        if len(points) < 2:
            raise ValidationFailed("stroke needs at least two points", f"{loc}.points")
        for j, p in enumerate(points):
            if (not isinstance(p, list) or len(p) != 2
                    or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)):
                raise ValidationFailed("point must be [u, v]", f"{loc}.points[{j}]")
            if not (0 <= p[0] <= w - 1) or not (0 <= p[1] <= h - 1):
                raise ValidationFailed(
                    f"point ({p[0]}, {p[1]}) outside image bounds", f"{loc}.points[{j}]")
        try:
            strokes.append(Stroke(points, kind=kind, closed=closed))
        except Exception as exc:
            raise ValidationFailed(str(exc), loc) from exc
    note = doc.get("language_note")
    if note is not None and not isinstance(note, str):
        raise ValidationFailed("language_note must be a string or null", "language_note")
    return Sketch(strokes, int(w), int(h), language_note=note)


def save_sketch(path, sketch: Sketch, correspondences=None) -> None:
    _write(path, sketch_to_doc(sketch, correspondences))


def load_sketch(path) -> Sketch:
    return sketch_from_doc(_read_kind(path, "sketch"))


def _read_kind(path, kind: str) -> dict:
    doc = _read(path)
    if doc.get("kind") != kind:
        raise ValidationFailed(f"expected kind {kind!r}, got {doc.get('kind')!r}", "kind")
    return doc


# ---------------------------------------------------------------------------
# scene documents
# ---------------------------------------------------------------------------

def _rle_encode(row: np.ndarray) -> list:
    runs = []
    count = 0
    current = bool(row[0])
    for v in row:
        if bool(v) == current:
            count += 1
        else:
            runs.append([count, int(current)])
            current = bool(v)
            count = 1
    runs.append([count, int(current)])
    return runs


def _rle_decode(runs: list, width: int, loc: str) -> np.ndarray:
    out = np.zeros(width, dtype=bool)
    pos = 0
    for r in runs:
        if not isinstance(r, list) or len(r) != 2:
            raise ValidationFailed("run must be [count, value]", loc)
        count, value = r
        if not isinstance(count, int) or count <= 0 or value not in (0, 1):
            raise ValidationFailed(f"bad run {r}", loc)
        if pos + count > width:
            raise ValidationFailed("runs exceed row width", loc)
        out[pos:pos + count] = bool(value)
        pos += count
    if pos != width:
        raise ValidationFailed(f"runs cover {pos} of {width} cells", loc)
    return out


def scale_to_doc(scale) -> dict:
    if isinstance(scale, PixelProxy):
        return {
            "type": "pixel_proxy",
            "image_width": float(scale.image_width),
            "image_height": float(scale.image_height),
            "kappa": scale.kappa,
            "l_max_m": scale.l_max_m,
        }
    if isinstance(scale, Homography):
        return {"type": "homography", "matrix": [[float(v) for v in row] for row in scale.m]}
    raise TypeError(f"unknown scale {type(scale).__name__}")


def scale_from_doc(doc: dict, loc: str = "scale"):
    kind = _need(doc, "type", str, loc)
    if kind == "pixel_proxy":
        return PixelProxy(_num(doc, "image_width", loc), _num(doc, "image_height", loc),
                          kappa=_num(doc, "kappa", loc), l_max_m=_num(doc, "l_max_m", loc))
    if kind == "homography":
        m = _need(doc, "matrix", list, loc)
        return Homography(np.asarray(m, dtype=float))
    raise ValidationFailed(f"unknown scale type {kind!r}", f"{loc}.type")


def scene_to_doc(scene: SceneGrid) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "scene",
        "scene_id": scene.scene_id,
        "resolution_m": scene.resolution_m,
        "width_cells": scene.nx,
        "height_cells": scene.ny,
        "occupancy_rle": [_rle_encode(scene.occupancy[iy]) for iy in range(scene.ny)],
        "clearance": [[ix, iy, float(h)] for (ix, iy), h in sorted(scene.clearance.items())],
        "scale": scale_to_doc(scene.scale) if scene.scale is not None else None,
        "start_pose": [scene.start_pose.x, scene.start_pose.y, scene.start_pose.theta],
        "scene_image_ref": scene.scene_image_ref,
    }


def scene_from_doc(doc: dict) -> SceneGrid:
    res = _num(doc, "resolution_m", "")
    nx = _need(doc, "width_cells", int, "")
    ny = _need(doc, "height_cells", int, "")
    rle = _need(doc, "occupancy_rle", list, "")
    if len(rle) != ny:
        raise ValidationFailed(f"expected {ny} rows, got {len(rle)}", "occupancy_rle")
    occ = np.zeros((ny, nx), dtype=bool)
    for iy, runs in enumerate(rle):
        occ[iy] = _rle_decode(runs, nx, f"occupancy_rle[{iy}]")
    clearance = {}
    for i, entry in enumerate(_need(doc, "clearance", list, "")):
        loc = f"clearance[{i}]"
        if not isinstance(entry, list) or len(entry) != 3:
            raise ValidationFailed("entry must be [ix, iy, height]", loc)
        ix, iy, h = entry
        if not isinstance(ix, int) or not isinstance(iy, int):
            raise ValidationFailed("cell indices must be integers", loc)
        if not (0 <= ix < nx and 0 <= iy < ny):
            raise ValidationFailed(f"cell ({ix},{iy}) outside grid", loc)
        if not occ[iy, ix]:
            raise ValidationFailed(f"clearance on free cell ({ix},{iy})", loc)
        clearance[(ix, iy)] = float(h)
    pose_doc = _need(doc, "start_pose", list, "")
    if len(pose_doc) != 3:
        raise ValidationFailed("start_pose must be [x, y, theta]", "start_pose")
    scale_doc = doc.get("scale")
    scale = scale_from_doc(scale_doc) if scale_doc is not None else None
    try:
        return SceneGrid(res, occ, clearance, scale,
                         Pose2(*[float(v) for v in pose_doc]),
                         doc.get("scene_image_ref"), doc.get("scene_id"))
    except ValueError as exc:
        raise ValidationFailed(str(exc), "") from exc


def save_scene(path, scene: SceneGrid) -> None:
    _write(path, scene_to_doc(scene))


def load_scene(path) -> SceneGrid:
    return scene_from_doc(_read_kind(path, "scene"))


# ---------------------------------------------------------------------------
# params / noise documents
# ---------------------------------------------------------------------------

_PARAM_FIELDS = (
    "l_max_m", "theta_turn_deg", "hysteresis_deg", "d_step_m", "d_safety_m",
    "h_clearance_m", "kappa", "merge_travel_m", "v_mps", "a_brake_mps2",
    "t_latency_s", "delta_sensor_m", "lane_spacing_m",
)


def params_to_doc(params: ControlParams) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "params"}
    for f in _PARAM_FIELDS:
        doc[f] = getattr(params, f)
    doc["turn_set"] = list(params.turn_set)
    return doc


def params_from_doc(doc: dict) -> ControlParams:
    kwargs = {f: _num(doc, f, "") for f in _PARAM_FIELDS}
    turn_set = _need(doc, "turn_set", list, "")
    try:
        return ControlParams(turn_set=tuple(float(t) for t in turn_set), **kwargs)
    except ValueError as exc:
        raise ValidationFailed(str(exc), "") from exc


def save_params(path, params: ControlParams) -> None:
    _write(path, params_to_doc(params))


def load_params(path) -> ControlParams:
    return params_from_doc(_read_kind(path, "params"))


def noise_to_doc(noise: NoiseModel) -> dict:
    return {
        "sigma_long_m": noise.sigma_long_m,
        "sigma_lat_m": noise.sigma_lat_m,
        "sigma_turn_deg": noise.sigma_turn_deg,
        "seed": noise.seed,
    }


def noise_from_doc(doc: dict, loc: str = "noise") -> NoiseModel:
    try:
        return NoiseModel(_num(doc, "sigma_long_m", loc), _num(doc, "sigma_lat_m", loc),
                          _num(doc, "sigma_turn_deg", loc), int(_num(doc, "seed", loc)))
    except ValueError as exc:
        raise ValidationFailed(str(exc), loc) from exc


# ---------------------------------------------------------------------------
# plan / trial documents
# ---------------------------------------------------------------------------

def _segment_summary(seg: Segment) -> dict:
    return {
        "index": seg.index,
        "stroke_index": seg.stroke_index,
        "is_path": seg.is_path,
        "is_area": seg.is_area,
        "is_closed": seg.is_closed,
        "length_m": seg.length_m,
        "delta_yaw_deg": seg.delta_yaw_deg,
        "mean_curvature": seg.mean_curvature,
        "corner_count": seg.corner_count,
        "end_cause": seg.end_cause,
        "world_polyline": [[float(x), float(y)] for x, y in seg.world_polyline],
        "pixel_points": [[float(u), float(v)] for u, v in seg.pixel_points],
    }


def _keypoint_docs(seg: Segment, params: ControlParams, scale) -> list:
    """Keypoints with normalized, world, and pixel coordinates."""
    norm = seg.norm_points
    out = []
    for kp in detect_keypoints(seg, params):
        d2 = np.sum((norm - np.asarray(kp.loc)) ** 2, axis=1)
        i = int(np.argmin(d2))
        wx, wy = seg.world_polyline[i]
        px = scale.to_pixel(np.array([[wx, wy]]))[0]
        out.append({
            "kind": kp.kind,
            "x": float(kp.loc[0]), "y": float(kp.loc[1]),
            "world_x": float(wx), "world_y": float(wy),
            "u": float(px[0]), "v": float(px[1]),
        })
    return out


def build_plan_doc(sketch: Sketch, params: ControlParams, scale,
                   policy: str = "rules", platform: PlatformProfile | None = None) -> dict:
    """Segment the sketch and classify each segment; the CLI/gateway payload."""
    platform = platform or PlatformProfile()
    policy_fn = get_policy(policy)
    segments = segment_sketch(sketch, params, scale)
    rows = []
    for seg in segments:
        inp = PolicyInput(
            segment_index=seg.index, n_seg=len(segments),
            is_path=seg.is_path, is_area=seg.is_area, is_closed=seg.is_closed,
            length_m=seg.length_m, delta_yaw_deg=seg.delta_yaw_deg,
            mean_curvature=seg.mean_curvature, corner_count=seg.corner_count,
            perception=PerceptionSnapshot.off(), params=params,
        )
        decision = policy_fn(inp)
        row = _segment_summary(seg)
        row["action"] = decision.action.token
        row["confidence"] = decision.confidence
        row["rule"] = decision.rule_fired
        row["turn_magnitude_deg"] = decision.turn_magnitude_deg
        row["keypoints"] = _keypoint_docs(seg, params, scale)
        row["lane_count"] = (len(serpentine_lanes(seg, params)) if seg.is_area else None)
        rows.append(row)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "plan",
        "policy": policy,
        "n_segments": len(segments),
        "segments": rows,
    }


def trial_to_doc(trial: TrialResult, scale=None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "trial",
        "seed": trial.seed,
        "trial_index": trial.trial_index,
        "params": params_to_doc(trial.params),
        "noise": noise_to_doc(trial.noise),
        "segments": [_segment_summary(s) for s in trial.segments],
        "decisions": [
            None if d is None else {
                "action": d.action.token,
                "confidence": d.confidence,
                "rule": d.rule_fired,
                "turn_magnitude_deg": d.turn_magnitude_deg,
            }
            for d in trial.decisions
        ],
        "outcomes": [
            {
                "segment_index": o.segment_index,
                "macro": o.macro,
                "rule": o.rule,
                "confidence": o.confidence,
                "termination": o.termination,
                "trace_start": o.trace_start,
                "trace_end": o.trace_end,
                "commanded_turn_deg": o.commanded_turn_deg,
            }
            for o in trial.outcomes
        ],
        "pose_trace": [[p.x, p.y, p.theta] for p in trial.pose_trace],
        "events": trial.events,
        "steps_used": trial.steps_used,
        "step_budget": trial.step_budget,
    }
    if scale is not None:
        xy = trial.trace_xy()
        px = scale.to_pixel(xy)
        doc["pose_trace_px"] = [[float(u), float(v)] for u, v in px]
    return doc


def save_trial(path, trial: TrialResult, scale=None) -> None:
    _write(path, trial_to_doc(trial, scale))


def execute_and_document(scene: SceneGrid, sketch: Sketch, params: ControlParams,
                         noise: NoiseModel, policy: str, tolerance) -> dict:
    """Run one trial and build the judged trial document.

    Shared by the CLI and the gateway so their structured outputs are
    byte-identical for identical inputs.
    """
    from .executor import run_trial
    from .metrics import judge_trial

    trial = run_trial(scene, sketch, params, noise, policy=policy)
    world = np.concatenate([scene.scale.to_world(s.points) for s in sketch.strokes])
    reference = resample_polyline(world, params.d_step_m)
    judged = judge_trial(trial, reference, tolerance, scene)
    doc = trial_to_doc(trial, scale=scene.scale)
    doc["judgment"] = judged_to_row(judged)
    return doc


# ---------------------------------------------------------------------------
# results documents
# ---------------------------------------------------------------------------

def judged_to_row(j: JudgedTrial) -> dict:
    return {
        "seed": j.seed,
        "trial_index": j.trial_index,
        "scene_type": j.scene_type,
        "category": j.category,
        "n_segments": j.n_segments,
        "successes": j.successes,
        "adherent": j.adherent,
        "ftcr": j.ftcr,
        "ftspar": j.ftspar,
        "dtw_cost": j.dtw_cost,
        "dtw_per_m": j.dtw_per_m,
        "uoms_encounters": j.uoms_encounters,
        "uoms_handled": j.uoms_handled,
        "failure_third": j.failure_third,
        "failure_thirds": list(j.failure_thirds),
    }


def judged_from_row(row: dict, loc: str) -> JudgedTrial:
    try:
        return JudgedTrial(
            seed=row["seed"], trial_index=row["trial_index"],
            n_segments=row["n_segments"], successes=row["successes"],
            adherent=row["adherent"], ftcr=row["ftcr"], ftspar=row["ftspar"],
            dtw_cost=row["dtw_cost"], dtw_per_m=row["dtw_per_m"],
            uoms_encounters=row["uoms_encounters"], uoms_handled=row["uoms_handled"],
            failure_third=row["failure_third"],
            scene_type=row.get("scene_type"), category=row.get("category"),
            failure_thirds=tuple(row["failure_thirds"]),
        )
    except KeyError as exc:
        raise ValidationFailed(f"missing field {exc}", loc) from exc


def report_to_doc(report: MetricsReport) -> dict:
    return {
        "trial_count": report.trial_count,
        "segment_count": report.segment_count,
        "success_count": report.success_count,
        "sssr": report.sssr,
        "ssspar": report.ssspar,
        "ssspar_all_denominator": report.ssspar_all_denominator,
        "ftcr": report.ftcr,
        "ftspar": report.ftspar,
        "uoms": report.uoms,
        "failure_histogram": list(report.failure_histogram),
        "cells": {
            f"{scene}|{cat}": rates for (scene, cat), rates in sorted(report.cells.items())
        },
    }


def results_to_doc(judged: list, params: ControlParams, noise: NoiseModel,
                   tolerance) -> dict:
    report = aggregate(judged)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "results",
        "params": params_to_doc(params),
        "noise": noise_to_doc(noise),
        "tolerance": {
            "lateral_band_m": tolerance.lateral_band_m,
            "local_lateral_m": tolerance.local_lateral_m,
            "local_angular_deg": tolerance.local_angular_deg,
        },
        "rows": [judged_to_row(j) for j in judged],
        "aggregate": report_to_doc(report),
    }


def write_results(path, judged: list, params: ControlParams, noise: NoiseModel, tolerance) -> None:
    _write(path, results_to_doc(judged, params, noise, tolerance))


def read_results(path) -> dict:
    """Load a results document, recomputing the aggregate to verify it."""
    doc = _read_kind(path, "results")
    rows = _need(doc, "rows", list, "")
    judged = [judged_from_row(r, f"rows[{i}]") for i, r in enumerate(rows)]
    recomputed = _plain(report_to_doc(aggregate(judged)))
    if recomputed != _plain(doc.get("aggregate")):
        raise ValidationFailed("aggregate does not match rows", "aggregate")
    return doc
