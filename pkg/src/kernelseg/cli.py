"""Command-line entry point: ``kernelseg {gen,run,ablate,eval}``.

Config files are plain text, one ``section.key = value`` per line, with sections
``scene`` (:class:`SceneConfig`), ``noise`` (:class:`NoiseSpec`) and ``pipeline``
(:class:`PipelineConfig`). ``#`` starts a comment. Values are Python literals;
bare words are strings and comma-separated values become tuples. Unknown keys are
an error. ``KERNELSEG_SEED`` overrides the pipeline and noise seeds and the
default generation seed.

Exit codes: 0 success, 1 some scenes failed, 2 invalid invocation.
"""

from __future__ import annotations

import argparse
import ast
import colorsys
import csv
import dataclasses
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .metrics import GTInstance, MetricsReport, PredictedInstance, map_suite
from .pipeline import (
    PipelineConfig,
    ablation_csv,
    gt_instances,
    predictions_for,
    run_pipeline,
)
from .scene import NoiseSpec, SceneConfig, SceneGenerationError, generate_scene
from .sceneio import load_scene, save_scene, write_ply

SEED_ENV = "KERNELSEG_SEED"
SECTIONS = {"scene": SceneConfig, "noise": NoiseSpec, "pipeline": PipelineConfig}
# fields of PipelineConfig that are built from other sections
_NESTED = {"noise"}


class UsageError(Exception):
    """Invalid invocation or configuration (exit code 2)."""


# ---------------------------------------------------------------- config files

def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if "," in text:
            return tuple(parse_value(p) for p in text.split(",") if p.strip())
        return text


def _allowed_keys(section):
    return {f.name for f in dataclasses.fields(SECTIONS[section])} - (_NESTED if section == "pipeline" else set())


def parse_assignment(line: str, lineno: int, source: str):
    if "=" not in line:
        raise UsageError(f"{source}:{lineno}: expected 'section.key = value'")
    key, value = (p.strip() for p in line.split("=", 1))
    if key == "variant":
        return None, key, value
    section, _, name = key.partition(".")
    if section not in SECTIONS or not name:
        raise UsageError(f"{source}:{lineno}: unknown section in key {key!r}")
    if name not in _allowed_keys(section):
        raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
    return section, name, parse_value(value)


def _lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``{section: {key: value}}`` from a flat config file."""
    out = {s: {} for s in SECTIONS}
    for lineno, line in _lines(text):
        section, key, value = parse_assignment(line, lineno, source)
        if section is None:
            raise UsageError(f"{source}:{lineno}: 'variant' only belongs in a matrix config")
        out[section][key] = value
    return out


def parse_matrix_text(text: str, source: str = "<matrix>"):
    """Base overrides plus an ordered list of ``(variant name, overrides)``."""
    base = {s: {} for s in SECTIONS}
    variants = []
    current = base
    for lineno, line in _lines(text):
        section, key, value = parse_assignment(line, lineno, source)
        if section is None:
            name = str(value)
            if any(name == v for v, _ in variants):
                raise UsageError(f"{source}:{lineno}: duplicate variant {name!r}")
            current = {s: {} for s in SECTIONS}
            variants.append((name, current))
            continue
        current[section][key] = value
    if not variants:
        raise UsageError(f"{source}: no 'variant = name' entries")
    return base, variants


def _merge(*dicts):
    out = {s: {} for s in SECTIONS}
    for d in dicts:
        for s in SECTIONS:
            out[s].update(d.get(s, {}))
    return out


def build_configs(sections: dict, env=None):
    """Instantiate ``(SceneConfig, PipelineConfig)``; bad values raise :class:`UsageError`."""
    env = os.environ if env is None else env
    scene_kw = dict(sections.get("scene", {}))
    noise_kw = dict(sections.get("noise", {}))
    pipe_kw = dict(sections.get("pipeline", {}))
    if env.get(SEED_ENV):
        seed = _env_seed(env)
        noise_kw["seed"] = seed
        pipe_kw["seed"] = seed
    try:
        scene_cfg = SceneConfig(**scene_kw)
        noise = NoiseSpec(**noise_kw)
        pipe_cfg = PipelineConfig(noise=noise, **pipe_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    return scene_cfg, pipe_cfg


def _env_seed(env):
    try:
        return int(env[SEED_ENV])
    except ValueError as exc:
        raise UsageError(f"{SEED_ENV} must be an integer") from exc


def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def load_config(path):
    if path is None:
        return build_configs({})
    return build_configs(parse_config_text(_read_text(path), str(path)))


# ---------------------------------------------------------------- output helpers

def _round(obj):
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_round(obj), indent=2, sort_keys=True) + "\n"


def instance_palette(n: int) -> np.ndarray:
    """Fixed colours: golden-ratio hue steps at full saturation."""
    hues = (np.arange(n) * 0.618033988749895) % 1.0
    return np.array([colorsys.hsv_to_rgb(h, 0.75, 0.95) for h in hues]).reshape(n, 3)


def label_colors(labels) -> np.ndarray:
    labels = np.asarray(labels)
    colors = np.full((len(labels), 3), 0.5)
    n = int(labels.max()) + 1 if len(labels) else 0
    if n > 0:
        pal = instance_palette(n)
        fg = labels >= 0
        colors[fg] = pal[labels[fg]]
    return colors


def scene_dirs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise UsageError(f"{root} is not a directory")
    if (root / "labels.json").exists():
        return [root]
    return sorted(p for p in root.iterdir() if p.is_dir())


def _jobs(value):
    return value if value and value > 0 else (os.cpu_count() or 1)


def _pmap(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- per-scene work

def _process_scene(args):
    """Load and segment one scene; returns a plain dict (picklable, error-safe)."""
    path, config, index = args
    try:
        scene, pred = load_scene(path)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        return {"name": Path(path).name, "error": f"{type(exc).__name__}: {exc}"}
    regenerated = pred is None
    if regenerated:
        pred = predictions_for(scene, config, index)
    result = run_pipeline(scene, pred, config)
    preds = result.instances()
    gts = gt_instances(scene)
    # compact per-instance labelling: ids follow the instances() order
    labels = np.full(scene.n_points, -1, dtype=np.int64)
    instances = []
    for new_id, k in enumerate(k for k in range(len(result.kept)) if (result.hard_labels == k).any()):
        mask = result.hard_labels == k
        labels[mask] = new_id
        instances.append({"id": new_id, "class": int(result.semantic[k]),
                          "confidence": float(result.confidences[k]), "n_points": int(mask.sum())})
    return {
        "name": Path(path).name,
        "positions": scene.positions,
        "labels": labels,
        "instances": instances,
        "preds": preds,
        "gts": gts,
        "losses": result.losses,
        "timings": result.timings,
        "flags": result.flags + (["predictions-regenerated"] if regenerated else []),
        "n_candidates": result.n_candidates,
    }


def _write_scene_output(out_dir: Path, rec: dict):
    d = out_dir / rec["name"]
    d.mkdir(parents=True, exist_ok=True)
    scene_metrics = map_suite([rec["preds"]], [rec["gts"]]).summary()
    (d / "result.json").write_text(dump_json({
        "labels": rec["labels"].tolist(),
        "instances": rec["instances"],
        "metrics": scene_metrics,
        "losses": rec["losses"],
        "flags": rec["flags"],
        "n_candidates": rec["n_candidates"],
    }))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "seconds"])
    for stage, sec in rec["timings"].items():
        w.writerow([stage, f"{sec:.6f}"])
    (d / "timings.csv").write_text(buf.getvalue())
    write_ply(d / "masks.ply", rec["positions"], label_colors(rec["labels"]))


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    scene_cfg, pipe_cfg = load_config(args.config)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    seed = args.seed
    if seed is None:
        seed = _env_seed(os.environ) if os.environ.get(SEED_ENV) else 0
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc}") from exc
    width = max(4, len(str(seed + args.count - 1)))
    for i in range(args.count):
        s = seed + i
        try:
            scene = generate_scene(scene_cfg, s)
        except SceneGenerationError as exc:
            print(f"error: seed {s}: {exc}", file=sys.stderr)
            return 1
        pred = None if args.no_predictions else predictions_for(scene, pipe_cfg, i)
        save_scene(scene, out / f"scene_{s:0{width}d}", pred)
    print(f"wrote {args.count} scene(s) to {out}")
    return 0


def _run_all(paths, config, jobs):
    return _pmap(_process_scene, [(p, config, i) for i, p in enumerate(paths)], jobs)


def cmd_run(args) -> int:
    _, config = load_config(args.config)
    paths = scene_dirs(args.scenes)
    if not paths:
        raise UsageError(f"no scenes under {args.scenes}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = _run_all(paths, config, _jobs(args.jobs))
    ok = [r for r in records if "error" not in r]
    failed = [r for r in records if "error" in r]
    for rec in ok:
        _write_scene_output(out, rec)
    report = map_suite([r["preds"] for r in ok], [r["gts"] for r in ok]) if ok else MetricsReport()
    (out / "metrics.json").write_text(dump_json({
        **report.to_dict(),
        "n_scenes": len(ok),
        "failed": {r["name"]: r["error"] for r in failed},
    }))
    for r in failed:
        print(f"error: {r['name']}: {r['error']}", file=sys.stderr)
    print(report.to_table())
    return 1 if failed else 0


def cmd_ablate(args) -> int:
    base, variants = parse_matrix_text(_read_text(args.matrix_config), str(args.matrix_config))
    configs = [(name, build_configs(_merge(base, over))[1]) for name, over in variants]
    paths = scene_dirs(args.scenes)
    if not paths:
        raise UsageError(f"no scenes under {args.scenes}")
    jobs = _jobs(args.jobs)
    rows, failed = [], set()
    for name, config in configs:
        records = _run_all(paths, config, jobs)
        ok = [r for r in records if "error" not in r]
        failed.update(r["name"] for r in records if "error" in r)
        report = map_suite([r["preds"] for r in ok], [r["gts"] for r in ok]) if ok else MetricsReport()
        row = {"variant": name, **report.summary()}
        row["mean_instances"] = float(np.mean([len(r["preds"]) for r in ok])) if ok else 0.0
        row["mean_candidates"] = float(np.mean([r["n_candidates"] for r in ok])) if ok else 0.0
        rows.append(row)
    text = ablation_csv(rows)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(text)
    for name in sorted(failed):
        print(f"error: scene {name} failed", file=sys.stderr)
    sys.stdout.write(text)
    return 1 if failed else 0


def load_prediction_dir(path: Path, n_points: int):
    data = json.loads((path / "result.json").read_text())
    labels = np.asarray(data["labels"], dtype=np.int64)
    if len(labels) != n_points:
        raise UsageError(f"{path}: {len(labels)} labels for {n_points} points")
    return [PredictedInstance(labels == inst["id"], int(inst["class"]), float(inst["confidence"]))
            for inst in data["instances"]]


def cmd_eval(args) -> int:
    pred_dirs = [p for p in sorted(Path(args.pred_dir).iterdir()) if (p / "result.json").exists()] \
        if Path(args.pred_dir).is_dir() else []
    gt_dirs = scene_dirs(args.gt_dir)
    if not gt_dirs:
        raise UsageError(f"no scenes under {args.gt_dir}")
    if len(pred_dirs) != len(gt_dirs):
        raise UsageError(f"{len(pred_dirs)} prediction dirs vs {len(gt_dirs)} ground-truth scenes")
    preds, gts = [], []
    for p, g in zip(pred_dirs, gt_dirs):
        labels = json.loads((g / "labels.json").read_text())
        ids = np.asarray(labels["instance_ids"], dtype=np.int64)
        gts.append([GTInstance(ids == inst["id"], int(inst["class"])) for inst in labels["instances"]])
        preds.append(load_prediction_dir(p, len(ids)))
    report = map_suite(preds, gts)
    if args.out:
        Path(args.out).write_text(dump_json(report.to_dict()))
    print(report.to_table())
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelseg", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic scenes")
    g.add_argument("--config", type=Path)
    g.add_argument("--out-dir", required=True, type=Path)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int)
    g.add_argument("--no-predictions", action="store_true", help="skip writing pred.bin")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="segment scenes and write results")
    r.add_argument("--scenes", required=True, type=Path)
    r.add_argument("--config", type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--jobs", type=int, default=0, help="worker processes (default: all cores)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("ablate", help="run a matrix of config variants")
    a.add_argument("--scenes", required=True, type=Path)
    a.add_argument("--matrix-config", required=True, type=Path)
    a.add_argument("--out", required=True, type=Path)
    a.add_argument("--jobs", type=int, default=0)
    a.set_defaults(func=cmd_ablate)

    e = sub.add_parser("eval", help="score saved results against ground truth")
    e.add_argument("--pred-dir", required=True, type=Path)
    e.add_argument("--gt-dir", required=True, type=Path)
    e.add_argument("--out", type=Path)
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
