"""Command-line entry points: plan, run, batch, gen, report, serve.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 internal
error. Progress goes to stderr; results go to stdout or files. Identical
invocations produce identical outputs; batches are deterministic in the seed
list regardless of --jobs.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import formats
from .control import ControlParams
from .errors import ParseError, SchemaVersionUnknown, SketchRunError, ValidationFailed
from .executor import run_trial
from .metrics import JudgedTrial, ToleranceProfile, aggregate, judge_trial
from .scenario import (
    CATEGORIES,
    SCENE_TYPES,
    ScenarioSpec,
    generate_scenario,
    render_scene_png,
)
from .world import NoiseModel, derive_stream

DATA_DIR_ENV = "SKETCHRUN_DATA_DIR"

_ALG_DEFAULTS = ("defaults: segment cap 0.5 m, corner threshold 30 deg, "
                 "step 0.05 m, safety horizon 0.30 m, clearance 1.00 m")


def _noise_arg(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("noise must be sigma_long,sigma_lat,sigma_turn")
    return tuple(float(p) for p in parts)


def _turn_set_arg(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _list_arg(valid, name):
    def parse(text: str):
        items = [p.strip() for p in text.split(",") if p.strip()]
        for item in items:
            if item not in valid:
                raise argparse.ArgumentTypeError(f"unknown {name} {item!r} (valid: {', '.join(valid)})")
        return items
    return parse


def _load_params(args) -> ControlParams:
    params = formats.load_params(args.params) if args.params else ControlParams()
    if getattr(args, "turn_set", None):
        params = params.with_turn_set(args.turn_set)
    return params


def _tolerance(args) -> ToleranceProfile:
    return ToleranceProfile.tabletop() if args.tolerance_profile == "tabletop" \
        else ToleranceProfile.floor()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchrun",
        description=f"Sketch-to-action runtime ({_ALG_DEFAULTS})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_io(p, scene_required=True):
        p.add_argument("--sketch", required=True, help="sketch document path")
        p.add_argument("--scene", required=scene_required, help="scene document path")
        p.add_argument("--params", help="params document path (default: built-in defaults)")
        p.add_argument("--turn-set", type=_turn_set_arg,
                       help="allowed turn magnitudes, e.g. 45,90 (default 45,90)")
        p.add_argument("--policy", default="rules", help="registered policy name (default rules)")
        p.add_argument("--format", choices=("text", "structured"), default="text",
                       help="human table or canonical JSON")

    p_plan = sub.add_parser("plan", help=f"segment a sketch and print macro-actions ({_ALG_DEFAULTS})")
    common_io(p_plan)

    p_run = sub.add_parser("run", help=f"execute one trial closed-loop ({_ALG_DEFAULTS})")
    common_io(p_run)
    p_run.add_argument("--seed", type=int, default=0, help="noise stream seed (default 0)")
    p_run.add_argument("--noise", type=_noise_arg, default=(0.0, 0.0, 0.0),
                       help="sigma_long,sigma_lat,sigma_turn (default zero noise)")
    p_run.add_argument("--out", help="write the trial document here")
    p_run.add_argument("--tolerance-profile", choices=("floor", "tabletop"), default="floor")

    p_batch = sub.add_parser("batch", help=f"run seeded scenario batches ({_ALG_DEFAULTS})")
    p_batch.add_argument("--categories", type=_list_arg(CATEGORIES, "category"),
                         default=list(CATEGORIES), help="comma list (default all)")
    p_batch.add_argument("--scenes", type=_list_arg(SCENE_TYPES, "scene type"),
                         default=list(SCENE_TYPES), help="comma list (default all)")
    p_batch.add_argument("--trials", type=int, default=10, help="trials per (scene, category)")
    p_batch.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p_batch.add_argument("--noise", type=_noise_arg, default=(0.005, 0.005, 1.0),
                         help="default 0.005,0.005,1.0")
    p_batch.add_argument("--turn-set", type=_turn_set_arg)
    p_batch.add_argument("--params", help="params document path")
    p_batch.add_argument("--policy", default="rules")
    p_batch.add_argument("--corner-mode", choices=("mixed", "snap"), default="mixed")
    p_batch.add_argument("--jobs", type=int, default=0, help="parallel workers (0 = cpu count)")
    p_batch.add_argument("--tolerance-profile", choices=("floor", "tabletop"), default="floor")
    p_batch.add_argument("--out", required=True, help="results document path")

    p_gen = sub.add_parser("gen", help="generate scenario files")
    p_gen.add_argument("--category", choices=CATEGORIES, required=True)
    p_gen.add_argument("--scene-type", choices=SCENE_TYPES, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--count", type=int, default=1)
    p_gen.add_argument("--corner-mode", choices=("mixed", "snap"), default="mixed")
    p_gen.add_argument("--out-dir", default=os.environ.get(DATA_DIR_ENV, "."),
                       help=f"output directory (default ${DATA_DIR_ENV} or .)")
    p_gen.add_argument("--render-png", action="store_true", help="also write scene backdrops")

    p_rep = sub.add_parser("report", help="print metric tables from results files")
    p_rep.add_argument("results", nargs="+", help="results document paths")
    p_rep.add_argument("--csv", action="store_true", help="CSV instead of aligned text")

    p_srv = sub.add_parser("serve", help="run the HTTP gateway")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8543)
    p_srv.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV, "."),
                       help=f"scene/asset directory (default ${DATA_DIR_ENV} or .)")
    p_srv.add_argument("--cors-origin", default=None, help="allowed studio origin")
    p_srv.add_argument("--studio-dir", default=None, help="serve this static directory at /studio")

    return parser


# ---------------------------------------------------------------------------
# plan / run
# ---------------------------------------------------------------------------

def _cmd_plan(args) -> int:
    params = _load_params(args)
    sketch = formats.load_sketch(args.sketch)
    scene = formats.load_scene(args.scene)
    doc = formats.build_plan_doc(sketch, params, scene.scale, policy=args.policy)
    if args.format == "structured":
        sys.stdout.write(formats.canonical_dumps(doc))
        return 0
    print(f"{'seg':>4} {'len_m':>7} {'dyaw':>8} {'corners':>7} {'rule':>6} "
          f"{'action':>11} {'conf':>5} {'lanes':>5}")
    for row in doc["segments"]:
        lanes = row["lane_count"] if row["lane_count"] is not None else "-"
        print(f"{row['index']:>4} {row['length_m']:>7.3f} {row['delta_yaw_deg']:>8.2f} "
              f"{row['corner_count']:>7} {row['rule']:>6} {row['action']:>11} "
              f"{row['confidence']:>5.2f} {lanes:>5}")
    return 0


def _cmd_run(args) -> int:
    params = _load_params(args)
    sketch = formats.load_sketch(args.sketch)
    scene = formats.load_scene(args.scene)
    noise = NoiseModel(*args.noise, seed=args.seed)
    doc = formats.execute_and_document(scene, sketch, params, noise, args.policy,
                                       _tolerance(args))
    if args.out:
        formats._write(args.out, doc)
    if args.format == "structured":
        sys.stdout.write(formats.canonical_dumps(doc))
    else:
        j = doc["judgment"]
        outcomes = ",".join(o["termination"] for o in doc["outcomes"])
        print(f"segments={len(doc['segments'])} successes={j['successes']} "
              f"ftcr={j['ftcr']} ftspar={j['ftspar']} "
              f"dtw_per_m={j['dtw_per_m']:.4f} outcomes=[{outcomes}]")
    return 0


# ---------------------------------------------------------------------------
# batch
# ---------------------------------------------------------------------------

def _batch_trial(task) -> JudgedTrial:
    (scene_type, category, seed, trial_index, params, noise_sigmas,
     corner_mode, tol, policy) = task
    spec = ScenarioSpec(category, scene_type, seed=seed, corner_mode=corner_mode)
    scene, sketch, reference = generate_scenario(spec, params)
    noise = NoiseModel(*noise_sigmas, seed=seed)
    trial = run_trial(scene, sketch, params, noise, policy=policy)
    judged = judge_trial(trial, reference, tol, scene,
                         scene_type=scene_type, category=category)
    judged.trial_index = trial_index
    judged.segment_rows = []  # not serialized in results rows
    return judged


def _derived_seed(base: int, scene_i: int, cat_i: int, trial_i: int) -> int:
    return int(derive_stream(base, 9202, scene_i, cat_i, trial_i).integers(0, 2**63 - 1))


def run_batch(scenes, categories, trials, base_seed, noise_sigmas, params,
              corner_mode, tol, policy="rules", jobs=0, progress=None):
    tasks = []
    for s_i, scene_type in enumerate(scenes):
        for c_i, category in enumerate(categories):
            for t_i in range(trials):
                seed = _derived_seed(base_seed, s_i, c_i, t_i)
                tasks.append((scene_type, category, seed, t_i, params,
                              tuple(noise_sigmas), corner_mode, tol, policy))
    jobs = jobs or os.cpu_count() or 1
    judged: list[JudgedTrial] = []
    if jobs <= 1 or len(tasks) < 4:
        for i, task in enumerate(tasks):
            judged.append(_batch_trial(task))
            if progress and (i + 1) % 50 == 0:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, row in enumerate(pool.map(_batch_trial, tasks, chunksize=8)):
                judged.append(row)
                if progress and (i + 1) % 50 == 0:
                    progress(i + 1, len(tasks))
    return judged


def _cmd_batch(args) -> int:
    params = _load_params(args)
    tol = _tolerance(args)

    def progress(done, total):
        print(f"{done}/{total} trials", file=sys.stderr, flush=True)

    judged = run_batch(args.scenes, args.categories, args.trials, args.seed,
                       args.noise, params, args.corner_mode, tol,
                       policy=args.policy, jobs=args.jobs, progress=progress)
    noise = NoiseModel(*args.noise, seed=args.seed)
    formats.write_results(args.out, judged, params, noise, tol)
    report = aggregate(judged)
    print(f"trials={report.trial_count} sssr={report.sssr:.1f} ssspar={report.ssspar:.1f} "
          f"ftcr={report.ftcr:.1f} ftspar={report.ftspar:.1f}")
    return 0


# ---------------------------------------------------------------------------
# gen / report
# ---------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    for i in range(args.count):
        seed = args.seed + i
        spec = ScenarioSpec(args.category, args.scene_type, seed=seed,
                            corner_mode=args.corner_mode)
        scene, sketch, _ = generate_scenario(spec)
        scene_path = os.path.join(args.out_dir, f"scene-{scene.scene_id}.json")
        sketch_path = os.path.join(args.out_dir, f"sketch-{scene.scene_id}.json")
        if args.render_png:
            asset_dir = os.path.join(args.out_dir, "assets")
            os.makedirs(asset_dir, exist_ok=True)
            with open(os.path.join(asset_dir, f"{scene.scene_id}.png"), "wb") as fh:
                fh.write(render_scene_png(scene))
            scene = type(scene)(scene.resolution_m, scene.occupancy, scene.clearance,
                                scene.scale, scene.start_pose, scene.scene_id, scene.scene_id)
        formats.save_scene(scene_path, scene)
        formats.save_sketch(sketch_path, sketch)
        print(scene_path)
        print(sketch_path)
    return 0


def _fmt_cell(value) -> str:
    return "-" if value is None else f"{value:.1f}"


def _cmd_report(args) -> int:
    docs = [formats.read_results(p) for p in args.results]
    for path, doc in zip(args.results, docs):
        agg = doc["aggregate"]
        print(f"# {path}")
        print(f"turn_set={doc['params']['turn_set']} trials={agg['trial_count']}")
        print(f"overall: sssr={_fmt_cell(agg['sssr'])} ssspar={_fmt_cell(agg['ssspar'])} "
              f"ftcr={_fmt_cell(agg['ftcr'])} ftspar={_fmt_cell(agg['ftspar'])} "
              f"uoms={_fmt_cell(agg['uoms'])}")
        hist = agg["failure_histogram"]
        total = sum(hist) or 1
        shares = [100.0 * h / total for h in hist]
        print(f"failure position thirds: first={shares[0]:.1f}% middle={shares[1]:.1f}% "
              f"final={shares[2]:.1f}% (n={sum(hist)})")
        scenes = sorted({key.split("|")[0] for key in agg["cells"]})
        cats = [c for c in CATEGORIES if any(k.endswith(f"|{c}") for k in agg["cells"])]
        if scenes:
            header = ["scene"] + [f"{m}/{c}" for m in ("sssr", "ssspar", "ftcr", "ftspar")
                                  for c in cats]
            rows = []
            for scene in scenes:
                row = [scene]
                for metric in ("sssr", "ssspar", "ftcr", "ftspar"):
                    for cat in cats:
                        cell = agg["cells"].get(f"{scene}|{cat}")
                        row.append(_fmt_cell(cell[metric]) if cell else "-")
                rows.append(row)
            if args.csv:
                print(",".join(header))
                for row in rows:
                    print(",".join(row))
            else:
                widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
                print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
                for row in rows:
                    print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
        print()
    if len(docs) > 1:
        print("# comparison")
        print("turn_set        sssr   ssspar  ftcr   ftspar")
        for path, doc in zip(args.results, docs):
            agg = doc["aggregate"]
            ts = ",".join(str(t) for t in doc["params"]["turn_set"])
            print(f"{ts:<15} {_fmt_cell(agg['sssr']):>6} {_fmt_cell(agg['ssspar']):>7} "
                  f"{_fmt_cell(agg['ftcr']):>6} {_fmt_cell(agg['ftspar']):>7}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .gateway import create_app

    app = create_app(data_dir=args.data_dir, cors_origin=args.cors_origin,
                     studio_dir=args.studio_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "plan": _cmd_plan,
    "run": _cmd_run,
    "batch": _cmd_batch,
    "gen": _cmd_gen,
    "report": _cmd_report,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; those are validation failures here
        raise SystemExit(1 if exc.code not in (0, None) else 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationFailed, ParseError, SchemaVersionUnknown) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except (SketchRunError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
