"""Command-line front end.

Five verbs: enroll builds a lookup table from labeled silhouettes,
identify matches frames against a table, measure reports features for a
single part, gen renders synthetic test images, and bench times the
extraction stages.  Reports are JSON with all wall-clock timings
isolated in a separate section so two runs over the same inputs are
byte-identical everywhere else.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from .errors import (
    BoltVisionError,
    ConfigError,
    CsvFormatError,
    EmptyInputError,
    EnrollmentError,
    ParameterError,
    PgmFormatError,
    ReportFormatError,
    StageError,
)
from .identify import enroll, load_table, nearest_match, save_table
from .imagecore import (
    BinaryImage,
    Component,
    Otsu,
    PixelPoint,
    connected_components,
    count_white,
    read_pgm,
    threshold,
    write_binary_pgm,
)
from .pipeline import BoltFeatures, PipelineConfig, extract_features
from .synth import RenderParams, load_catalog, render_bolt, standard_catalog

REPORT_SCHEMA = "boltvision-report/1"
DEFAULT_PX_PER_MM = 12.42

_CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(PipelineConfig))
_INT_KEYS = frozenset({"thresh", "nudge", "min_component_area"})
_STAGES = ("orient", "axes", "area", "perimeter", "head", "threading", "pitch")


# -- config handling ---------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat key=value lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for n, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got '{line}'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"line {n}: unknown config key '{key}'")
        out[key] = value.strip()
    return out


def build_config(path: str | None, sets: list[str]) -> PipelineConfig:
    """Merge defaults, an optional config file, and --set overrides."""
    kv: dict[str, str] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        kv.update(parse_config_text(text))
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got '{item}'")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown config key '{key}'")
        kv[key] = value.strip()

    typed: dict[str, int | float] = {}
    for key, value in kv.items():
        try:
            typed[key] = int(value) if key in _INT_KEYS else float(value)
        except ValueError as exc:
            want = "an integer" if key in _INT_KEYS else "a number"
            raise ConfigError(f"config key '{key}' expects {want}, got '{value}'") from exc
    try:
        return PipelineConfig(**typed)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


# -- shared plumbing ---------------------------------------------------------

def _load_binary(path: str) -> BinaryImage:
    with open(path, "rb") as fh:
        data = fh.read()
    return threshold(read_pgm(data), Otsu())


def _bolt_components(img: BinaryImage, cfg: PipelineConfig) -> list[Component]:
    # connected_components is already row-major by bounding-rect origin
    return [
        c for c in connected_components(img)
        if count_white(c.mask) >= cfg.min_component_area
    ]


def _largest(comps: list[Component]) -> Component:
    return max(comps, key=lambda c: count_white(c.mask))


def _read_manifest(path: str) -> list[dict[str, str]]:
    """Manifest CSV: header starting `file,name`, extra columns kept."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    lines = [l for l in text.split("\n") if l != ""]
    if not lines:
        raise ConfigError(f"manifest {path} is empty")
    header = lines[0].split(",")
    if header[:2] != ["file", "name"]:
        raise ConfigError("manifest header must start with 'file,name'")
    rows = []
    for n, raw in enumerate(lines[1:], start=2):
        fields = raw.split(",")
        if len(fields) < 2:
            raise ConfigError(f"manifest line {n}: expected at least file,name")
        rows.append(dict(zip(header, fields)))
    if not rows:
        raise ConfigError(f"manifest {path} has no rows")
    return rows


def _feature_dict(f: BoltFeatures, ppm: float) -> dict:
    return {
        "major_px": f.major_px,
        "minor_px": f.minor_px,
        "threading": f.threading.value,
        "pitch_px": f.pitch_px,
        "area_px": f.area_px,
        "perimeter_px": f.perimeter_px,
        "major_mm": f.major_px / ppm,
        "minor_mm": f.minor_px / ppm,
        "pitch_mm": None if f.pitch_px is None else f.pitch_px / ppm,
    }


def make_report(
    command: str,
    cfg: PipelineConfig,
    ppm: float,
    images: list[dict],
    summary: dict,
    timings: dict,
) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "command": command,
        "config": dataclasses.asdict(cfg),
        "px_per_mm": ppm,
        "images": images,
        "summary": summary,
        "timings": timings,
    }


def report_to_json(report: dict) -> bytes:
    return (json.dumps(report, indent=2) + "\n").encode("utf-8")


def report_from_json(data: bytes) -> dict:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ReportFormatError(f"not valid report JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != REPORT_SCHEMA:
        raise ReportFormatError(f"expected a '{REPORT_SCHEMA}' document")
    return doc


def _write_report(report: dict, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(report_to_json(report))


# -- verbs -------------------------------------------------------------------

def cmd_enroll(args: argparse.Namespace) -> int:
    cfg = build_config(args.config, args.set)
    ppm = args.px_per_mm if args.px_per_mm is not None else DEFAULT_PX_PER_MM
    rows = _read_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))

    seen: set[str] = set()
    samples: list[tuple[str, BinaryImage]] = []
    for row in rows:
        name = row["name"]
        if name in seen:
            raise ConfigError(f"duplicate name '{name}' in manifest")
        seen.add(name)
        path = os.path.join(base, row["file"])
        if not os.path.isfile(path):
            raise ConfigError(f"manifest names a missing file: {row['file']}")
        comps = _bolt_components(_load_binary(path), cfg)
        if not comps:
            raise EnrollmentError(name, "no component above the area floor")
        samples.append((name, _largest(comps).mask))

    table = enroll(samples, cfg, px_per_mm=ppm)
    with open(args.out, "wb") as fh:
        fh.write(save_table(table))
    print(f"enrolled {len(table.entries)} templates -> {args.out}")
    return 0


def cmd_identify(args: argparse.Namespace) -> int:
    cfg = build_config(args.config, args.set)
    try:
        with open(args.table, "rb") as fh:
            table = load_table(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read table: {exc}") from exc
    except CsvFormatError as exc:
        raise ConfigError(f"table: {exc}") from exc
    ppm = args.px_per_mm if args.px_per_mm is not None else table.px_per_mm

    truth: dict[str, str] | None = None
    if args.truth is not None:
        truth = {
            os.path.basename(r["file"]): r["name"] for r in _read_manifest(args.truth)
        }

    records: list[dict] = []
    timing_rows: list[dict] = []
    failed_files = 0
    for path in args.images:
        try:
            img = _load_binary(path)
        except (OSError, PgmFormatError) as exc:
            records.append({
                "path": path, "component": None, "rect": None,
                "features": None, "match": None, "error": str(exc),
            })
            failed_files += 1
            continue
        comps = _bolt_components(img, cfg)
        if not comps:
            print(f"warning: no components in {path}", file=sys.stderr)
            continue
        for i, comp in enumerate(comps):
            rec = {
                "path": path, "component": i,
                "rect": [comp.rect.x, comp.rect.y, comp.rect.w, comp.rect.h],
                "features": None, "match": None, "error": None,
            }
            stages: dict[str, float] = {}
            t0 = time.perf_counter()
            try:
                feats = extract_features(comp.mask, cfg, timings=stages)
            except StageError as exc:
                rec["error"] = str(exc)
            else:
                m = nearest_match(feats, table, reject_frac=args.reject_frac)
                rec["features"] = _feature_dict(feats, ppm)
                rec["match"] = {
                    "name": m.name,
                    "distance_px": m.distance_px,
                    "threading_agreed": m.threading_agreed,
                }
            timing_rows.append({
                "path": path, "component": i,
                "stages_ms": {k: v * 1000.0 for k, v in stages.items()},
                "total_ms": (time.perf_counter() - t0) * 1000.0,
            })
            records.append(rec)

    matched = [r for r in records if r["match"] is not None]
    named = [r for r in matched if r["match"]["name"] is not None]
    summary: dict = {
        "images": len(args.images),
        "components": sum(1 for r in records if r["component"] is not None),
        "identified": len(named),
        "unknown": len(matched) - len(named),
        "errors": sum(1 for r in records if r["error"] is not None),
    }
    if truth is not None:
        have = [r for r in matched if os.path.basename(r["path"]) in truth]
        correct = sum(
            1 for r in have
            if r["match"]["name"] == truth[os.path.basename(r["path"])]
        )
        summary["truth_total"] = len(have)
        summary["truth_correct"] = correct
        summary["accuracy"] = correct / len(have) if have else 0.0

    timings = {
        "per_component": timing_rows,
        "total_ms": sum(r["total_ms"] for r in timing_rows),
    }
    report = make_report("identify", cfg, ppm, records, summary, timings)
    if args.json is not None:
        _write_report(report, args.json)

    for r in records:
        if r["error"] is not None:
            tag = r["path"] if r["component"] is None else f"{r['path']}#{r['component']}"
            print(f"{tag}: error: {r['error']}")
        elif r["match"]["name"] is not None:
            print(
                f"{r['path']}#{r['component']}: {r['match']['name']} "
                f"(distance {r['match']['distance_px']:.2f}px)"
            )
        else:
            print(f"{r['path']}#{r['component']}: unknown")
    line = (
        f"{summary['components']} components in {summary['images']} images: "
        f"{summary['identified']} identified, {summary['unknown']} unknown, "
        f"{summary['errors']} errors"
    )
    if "accuracy" in summary:
        line += f", accuracy {100.0 * summary['accuracy']:.1f}%"
    print(line)

    if args.images and failed_files == len(args.images):
        return 1
    return 0


def cmd_measure(args: argparse.Namespace) -> int:
    cfg = build_config(args.config, args.set)
    ppm = args.px_per_mm if args.px_per_mm is not None else DEFAULT_PX_PER_MM
    img = _load_binary(args.image)
    comps = _bolt_components(img, cfg)
    if comps:
        idx = max(range(len(comps)), key=lambda i: count_white(comps[i].mask))
        mask, rect = comps[idx].mask, comps[idx].rect
    else:
        # let the pipeline report the canonical empty-input failure
        idx, mask, rect = 0, img, None

    stages: dict[str, float] = {}
    t0 = time.perf_counter()
    feats = extract_features(mask, cfg, timings=stages)
    total_ms = (time.perf_counter() - t0) * 1000.0

    print(f"major: {feats.major_px:.1f} px = {feats.major_px / ppm:.2f} mm")
    print(f"minor: {feats.minor_px:.1f} px = {feats.minor_px / ppm:.2f} mm")
    print(f"threading: {feats.threading.value}")
    if feats.pitch_px is None:
        print("pitch: n/a")
    else:
        print(f"pitch: {feats.pitch_px:.2f} px = {feats.pitch_px / ppm:.3f} mm")

    if args.json is not None:
        record = {
            "path": args.image, "component": idx,
            "rect": None if rect is None else [rect.x, rect.y, rect.w, rect.h],
            "features": _feature_dict(feats, ppm),
            "match": None, "error": None,
        }
        timings = {
            "per_component": [{
                "path": args.image, "component": idx,
                "stages_ms": {k: v * 1000.0 for k, v in stages.items()},
                "total_ms": total_ms,
            }],
            "total_ms": total_ms,
        }
        summary = {"images": 1, "components": len(comps), "errors": 0}
        _write_report(make_report("measure", cfg, ppm, [record], summary, timings),
                      args.json)
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    ppm = args.px_per_mm if args.px_per_mm is not None else DEFAULT_PX_PER_MM
    if args.angles < 1:
        raise ParameterError(f"--angles must be >= 1, got {args.angles}")
    if args.count is not None and args.count < 1:
        raise ParameterError(f"--count must be >= 1, got {args.count}")

    if args.catalog is None:
        catalog = standard_catalog()
    else:
        try:
            with open(args.catalog, "rb") as fh:
                catalog = load_catalog(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read catalog: {exc}") from exc
        except CsvFormatError as exc:
            raise ConfigError(f"catalog: {exc}") from exc

    os.makedirs(args.out, exist_ok=True)
    rows: list[tuple[str, str, float, float]] = []

    if args.count is None:
        # full sweep: every spec at evenly spaced angles
        idx = 0
        for spec in catalog:
            diag = math.hypot(spec.length_mm * ppm, spec.head_width_mm * ppm)
            side = math.ceil(diag) + 10
            for k in range(args.angles):
                angle = 360.0 * k / args.angles
                params = RenderParams(
                    side, side, PixelPoint(side // 2, side // 2),
                    angle_deg=angle, px_per_mm=ppm,
                    noise=args.noise, seed=args.seed + idx,
                )
                img, _ = render_bolt(spec, params)
                fname = f"{spec.name}_a{int(round(angle)) % 360:03d}.pgm"
                with open(os.path.join(args.out, fname), "wb") as fh:
                    fh.write(write_binary_pgm(img))
                rows.append((fname, spec.name, angle, args.noise))
                idx += 1
    else:
        rng = np.random.default_rng(args.seed)
        for i in range(args.count):
            spec = catalog[int(rng.integers(len(catalog)))]
            angle = float(rng.uniform(0.0, 360.0))
            diag = math.hypot(spec.length_mm * ppm, spec.head_width_mm * ppm)
            side = math.ceil(diag) + 40
            cx = side // 2 + int(rng.integers(-12, 13))
            cy = side // 2 + int(rng.integers(-12, 13))
            params = RenderParams(
                side, side, PixelPoint(cx, cy),
                angle_deg=angle, px_per_mm=ppm,
                noise=args.noise, seed=int(rng.integers(2**31)),
            )
            img, _ = render_bolt(spec, params)
            fname = f"{i:04d}_{spec.name}.pgm"
            with open(os.path.join(args.out, fname), "wb") as fh:
                fh.write(write_binary_pgm(img))
            rows.append((fname, spec.name, angle, args.noise))

    manifest = "file,name,angle_deg,noise\n" + "".join(
        f"{f},{n},{a!r},{z!r}\n" for f, n, a, z in rows
    )
    with open(os.path.join(args.out, "manifest.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(manifest)
    print(f"wrote {len(rows)} images and manifest.csv -> {args.out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = build_config(args.config, args.set)
    if args.reps < 1:
        raise ParameterError(f"--reps must be >= 1, got {args.reps}")

    masks: list[BinaryImage] = []
    for path in args.images:
        comps = _bolt_components(_load_binary(path), cfg)
        if not comps:
            raise EmptyInputError(f"no component above the area floor in {path}")
        masks.append(_largest(comps).mask)

    per_stage: dict[str, list[float]] = {s: [] for s in _STAGES}
    totals: list[float] = []
    for mask in masks:
        for _ in range(args.reps):
            stages: dict[str, float] = {}
            t0 = time.perf_counter()
            extract_features(mask, cfg, timings=stages)
            totals.append((time.perf_counter() - t0) * 1000.0)
            for s in _STAGES:
                per_stage[s].append(stages.get(s, 0.0) * 1000.0)

    def mean(v: list[float]) -> float:
        return sum(v) / len(v)

    def p95(v: list[float]) -> float:
        s = sorted(v)
        return s[min(len(s) - 1, math.ceil(0.95 * len(s)) - 1)]

    for s in _STAGES:
        print(f"{s},{mean(per_stage[s]):.3f},{p95(per_stage[s]):.3f}")
    print(f"total,{mean(totals):.3f},{p95(totals):.3f}")
    return 0


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boltvision",
        description="Measure and identify bolts from backlit silhouette images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", metavar="PATH",
                        help="pipeline config file, flat key=value lines")
        sp.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override one config key (repeatable)")
        sp.add_argument("--px-per-mm", dest="px_per_mm", type=float, default=None,
                        help="pixels per millimeter for mm conversions")

    p = sub.add_parser("enroll", help="build a lookup table from labeled images")
    common(p)
    p.add_argument("--manifest", required=True,
                   help="CSV mapping file,name; paths relative to the manifest")
    p.add_argument("--out", required=True, help="lookup table CSV to write")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="match frames against a lookup table")
    common(p)
    p.add_argument("images", nargs="+", help="PGM frames to identify")
    p.add_argument("--table", required=True, help="lookup table CSV")
    p.add_argument("--json", metavar="PATH", help="write the JSON report here")
    p.add_argument("--truth", metavar="PATH",
                   help="ground-truth manifest; adds accuracy to the summary")
    p.add_argument("--reject-frac", dest="reject_frac", type=float, default=0.1,
                   help="unknown when distance exceeds this fraction of the "
                        "major axis (inf to disable)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("measure", help="report features for a single part")
    common(p)
    p.add_argument("image", help="PGM frame holding one part")
    p.add_argument("--json", metavar="PATH", help="write the JSON report here")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("gen", help="render synthetic silhouettes plus a manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--catalog", metavar="PATH",
                   help="catalog CSV (default: built-in catalog)")
    p.add_argument("--angles", type=int, default=12,
                   help="angles per spec in sweep mode (default 12)")
    p.add_argument("--count", type=int, default=None,
                   help="random mode: total number of renders")
    p.add_argument("--noise", type=float, default=0.0,
                   help="salt-and-pepper flip rate (default 0)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--px-per-mm", dest="px_per_mm", type=float, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="time the extraction stages")
    common(p)
    p.add_argument("images", nargs="+", help="PGM frames to time")
    p.add_argument("--reps", type=int, default=20,
                   help="repetitions per image (default 20)")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BoltVisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
