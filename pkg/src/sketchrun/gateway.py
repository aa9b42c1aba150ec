"""JSON-over-HTTP gateway for the studio UI; stateless per request.

Every request carries {"request_id": ..., "payload": ...}; every response
echoes the request id and holds either a payload or an error object
{code, message, location}. Payloads are the canonical document formats, and
for identical inputs the serialized payload is byte-identical to the CLI's
structured output. Errors never return partial results.
"""

from __future__ import annotations

import os
import uuid

from fastapi import FastAPI, Request, Response

from . import formats
from .control import ControlParams
from .errors import ParseError, SchemaVersionUnknown, SketchRunError, ValidationFailed
from .metrics import ToleranceProfile
from .scenario import ScenarioSpec, generate_scenario
from .world import NoiseModel


def _envelope_bytes(request_id, payload=None, error=None) -> bytes:
    doc = {"request_id": request_id}
    if error is not None:
        doc["error"] = error
    else:
        doc["payload"] = payload
    return formats.canonical_dump_bytes(doc)


def _json_response(request_id, payload=None, error=None, status=200) -> Response:
    return Response(content=_envelope_bytes(request_id, payload, error),
                    media_type="application/json", status_code=status)


def _error(request_id, status, code, message, location=""):
    return _json_response(request_id,
                          error={"code": code, "message": message, "location": location},
                          status=status)


class _SceneStore:
    """Read-mostly view of the data directory; rescanned per request."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir

    def scene_ids(self) -> list[str]:
        ids = []
        try:
            names = os.listdir(self.data_dir)
        except OSError:
            return []
        for name in sorted(names):
            if name.startswith("scene-") and name.endswith(".json"):
                ids.append(name[len("scene-"):-len(".json")])
        return ids

    def scene_path(self, scene_id: str) -> str | None:
        path = os.path.join(self.data_dir, f"scene-{scene_id}.json")
        return path if os.path.isfile(path) else None

    def asset_path(self, asset_id: str) -> str | None:
        if "/" in asset_id or "\\" in asset_id or ".." in asset_id:
            return None
        path = os.path.join(self.data_dir, "assets", f"{asset_id}.png")
        return path if os.path.isfile(path) else None


async def _parse_envelope(request: Request):
    try:
        body = await request.json()
    except Exception as exc:
        raise ParseError(f"invalid JSON body: {exc}") from exc
    if not isinstance(body, dict):
        raise ParseError("request body must be an object")
    request_id = body.get("request_id")
    payload = body.get("payload")
    if not isinstance(payload, dict):
        raise ValidationFailed("missing payload object", "payload")
    return request_id, payload


def _resolve_inputs(store: _SceneStore, payload: dict):
    sketch = formats.sketch_from_doc(formats_check(payload, "sketch"))
    if "scene" in payload and payload["scene"] is not None:
        scene = formats.scene_from_doc(formats_check(payload, "scene"))
    else:
        ref = payload.get("scene_ref")
        if not isinstance(ref, str):
            raise ValidationFailed("need scene or scene_ref", "payload.scene_ref")
        path = store.scene_path(ref)
        if path is None:
            raise FileNotFoundError(ref)
        scene = formats.load_scene(path)
    params_doc = payload.get("params")
    params = formats.params_from_doc(params_doc) if params_doc else ControlParams()
    policy = payload.get("policy") or "rules"
    if not isinstance(policy, str):
        raise ValidationFailed("policy must be a string", "payload.policy")
    return sketch, scene, params, policy


def formats_check(payload: dict, key: str) -> dict:
    doc = payload.get(key)
    if not isinstance(doc, dict):
        raise ValidationFailed(f"missing {key} document", f"payload.{key}")
    if doc.get("schema_version") != formats.SCHEMA_VERSION:
        raise SchemaVersionUnknown(f"schema_version {doc.get('schema_version')!r} not supported")
    return doc


def create_app(data_dir: str = ".", cors_origin: str | None = None,
               studio_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="sketchrun gateway", docs_url=None, redoc_url=None)
    store = _SceneStore(data_dir)

    if cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(CORSMiddleware, allow_origins=[cors_origin],
                           allow_methods=["*"], allow_headers=["*"])
    if studio_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/studio", StaticFiles(directory=studio_dir, html=True), name="studio")

    def guarded(handler):
        async def run(request: Request):
            request_id = None
            try:
                request_id, payload = await _parse_envelope(request)
                return handler(request_id, payload)
            except (ValidationFailed, ParseError, SchemaVersionUnknown) as exc:
                location = getattr(exc, "location", "")
                return _error(request_id, 400, "validation",
                              getattr(exc, "reason", str(exc)), location)
            except FileNotFoundError as exc:
                return _error(request_id, 404, "not_found", f"unknown id {exc}", "")
            except (SketchRunError, ValueError, KeyError) as exc:
                return _error(request_id, 400, "validation", str(exc), "")
            except Exception:  # pragma: no cover - defensive
                opaque = uuid.uuid4().hex[:12]
                return _error(request_id, 500, "internal",
                              f"internal error (id {opaque})", "")
        return run

    @app.post("/plan")
    @guarded
    def plan(request_id, payload):
        sketch, scene, params, policy = _resolve_inputs(store, payload)
        doc = formats.build_plan_doc(sketch, params, scene.scale, policy=policy)
        return _json_response(request_id, doc)

    @app.post("/execute")
    @guarded
    def execute(request_id, payload):
        sketch, scene, params, policy = _resolve_inputs(store, payload)
        seed = payload.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ValidationFailed("seed must be an integer", "payload.seed")
        noise_doc = payload.get("noise")
        noise = (formats.noise_from_doc({**noise_doc, "seed": seed}, "payload.noise")
                 if noise_doc else NoiseModel.zero(seed))
        profile = payload.get("tolerance_profile", "floor")
        if profile not in ("floor", "tabletop"):
            raise ValidationFailed("tolerance_profile must be floor or tabletop",
                                   "payload.tolerance_profile")
        tol = ToleranceProfile.tabletop() if profile == "tabletop" else ToleranceProfile.floor()
        doc = formats.execute_and_document(scene, sketch, params, noise, policy, tol)
        return _json_response(request_id, doc)

    @app.post("/scenario")
    @guarded
    def scenario(request_id, payload):
        category = payload.get("length_category")
        scene_type = payload.get("scene_type")
        seed = payload.get("seed", 0)
        corner_mode = payload.get("corner_mode", "mixed")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ValidationFailed("seed must be an integer", "payload.seed")
        spec = ScenarioSpec(str(category), str(scene_type), seed=seed,
                            corner_mode=str(corner_mode))
        scene, sketch, reference = generate_scenario(spec)
        doc = {
            "scene": formats.scene_to_doc(scene),
            "sketch": formats.sketch_to_doc(sketch),
            "reference_path": [[float(x), float(y)] for x, y in reference],
        }
        return _json_response(request_id, doc)

    @app.get("/scenes")
    def scenes(request_id: str | None = None):
        return _json_response(request_id, {"scenes": store.scene_ids()})

    @app.get("/scene/{scene_id}")
    def scene(scene_id: str, request_id: str | None = None):
        path = store.scene_path(scene_id)
        if path is None:
            return _error(request_id, 404, "not_found", f"unknown scene {scene_id!r}", "")
        try:
            doc = formats.scene_to_doc(formats.load_scene(path))
        except (ValidationFailed, ParseError, SchemaVersionUnknown) as exc:
            return _error(request_id, 400, "validation", str(exc),
                          getattr(exc, "location", ""))
        return _json_response(request_id, doc)

    @app.get("/asset/{asset_id}")
    def asset(asset_id: str):
        path = store.asset_path(asset_id)
        if path is None:
            return Response(status_code=404)
        with open(path, "rb") as fh:
            return Response(content=fh.read(), media_type="image/png")

    return app
