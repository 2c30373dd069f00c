"""Command-line entry point.

Subcommands: generate, annotate, evaluate, sweep, stats, fetch-tiles.
Exit codes: 0 success, 1 partial failure / warnings, 2 usage error.
Progress goes to stderr; the final machine-readable summary line to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from maptext import annotate as annotate_mod
from maptext import dataset_io, metrics, pipeline
from maptext.geodata import TileAddress, fetch_tile
from maptext.raster import read_png

log = logging.getLogger("maptext")


def _parse_scene(value: str) -> tuple[int, int]:
    x, y = value.split(",")
    return (int(x), int(y))


def _parse_bbox(value: str) -> tuple[float, float, float, float]:
    parts = [float(v) for v in value.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox needs min_lon,min_lat,max_lon,max_lat")
    return tuple(parts)  # type: ignore[return-value]


def _parse_grid(value: str) -> list[float]:
    """start:stop:step threshold grid, inclusive of both ends."""
    try:
        start, stop, step = (float(v) for v in value.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("grid must be start:stop:step") from exc
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("grid must be ascending with step > 0")
    out = []
    v = start
    while v <= stop + 1e-9:
        out.append(round(v, 10))
        v += step
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maptext",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate an annotated scene dataset")
    g.add_argument("--config", help="JSON config file (flags override it)")
    g.add_argument("--seed", type=int, help="master RNG seed (required)")
    g.add_argument("--vector", dest="vector_path", help="feature collection path")
    g.add_argument("--zoom", type=int)
    g.add_argument("--tile-dir", dest="tile_dir", help="local z/x/y.png tile tree")
    g.add_argument("--tile-template", dest="tile_template",
                   help="URL template with {z}/{x}/{y}")
    g.add_argument("--cache-dir", dest="cache_dir")
    g.add_argument("--font-config", dest="font_config",
                   help="16-line font set file (default: builtin fonts)")
    g.add_argument("--out", dest="out_dir")
    g.add_argument("--scene", dest="scenes", action="append", type=_parse_scene,
                   metavar="X,Y", help="origin tile of a 2x2 scene (repeatable)")
    g.add_argument("--bbox", type=_parse_bbox, help="min_lon,min_lat,max_lon,max_lat")
    g.add_argument("--alpha", type=float, help="alpha-shape parameter")
    g.add_argument("--interpolation-distance", dest="interpolation_distance",
                   type=float, help="centerline border density (px)")
    g.add_argument("--noise-sigma", dest="noise_sigma", type=float,
                   help="worn-out noise std in 8-bit units")
    g.add_argument("--letter-spacing", dest="letter_spacing", type=float)
    g.add_argument("--jobs", type=int, help="parallel scenes")
    g.add_argument("--debug-overlays", dest="debug_overlays", action="store_const",
                   const=True, help="write polygon/centerline overlays")
    g.add_argument("--print-config", action="store_true",
                   help="print the effective config and exit")

    a = sub.add_parser("annotate", help="annotate a directory of colored layers")
    a.add_argument("colored_dir")
    a.add_argument("out_dir")
    a.add_argument("--alpha", type=float, default=annotate_mod.DEFAULT_ALPHA)
    a.add_argument("--interpolation-distance", dest="interpolation_distance",
                   type=float, default=annotate_mod.DEFAULT_INTERPOLATION_DISTANCE)
    a.add_argument("--transcriptions",
                   help="JSON file mapping image id -> {color_index: text}")

    e = sub.add_parser("evaluate", help="score detections against ground truth")
    e.add_argument("gt_dir")
    e.add_argument("det_dir")
    e.add_argument("--t-r", dest="t_r", type=float, default=0.5)
    e.add_argument("--t-p", dest="t_p", type=float, default=0.5)
    e.add_argument("--k", type=float, default=1.0)
    e.add_argument("--out", default="report.csv")
    e.add_argument("--series-map", dest="series_map",
                   help="JSON file mapping image id -> series id")
    e.add_argument("--sweep", type=_parse_grid, metavar="START:STOP:STEP",
                   help="also write a threshold-sweep CSV over this grid")
    e.add_argument("--sweep-out", dest="sweep_out", default="sweep.csv")

    s = sub.add_parser("sweep", help="threshold-sweep table of F1 scores")
    s.add_argument("gt_dir")
    s.add_argument("det_dir")
    s.add_argument("--grid", type=_parse_grid, default=_parse_grid("0.1:0.9:0.1"))
    s.add_argument("--k", type=float, default=1.0)
    s.add_argument("--out", default="sweep.csv")

    st = sub.add_parser("stats", help="recount a dataset and verify its manifest")
    st.add_argument("dataset_dir")

    f = sub.add_parser("fetch-tiles", help="prefetch tiles into a cache")
    f.add_argument("--template", required=True)
    f.add_argument("--zoom", type=int, required=True)
    f.add_argument("--cache-dir", dest="cache_dir", required=True)
    f.add_argument("--bbox", type=_parse_bbox, required=True)
    return parser


def cmd_generate(args) -> int:
    file_cfg = None
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cli = {k: v for k, v in vars(args).items()
           if k not in ("command", "config", "print_config")}
    try:
        config = pipeline.RunConfig.from_sources(cli, file_cfg)
    except (TypeError, ValueError) as exc:
        log.error("bad configuration: %s", exc)
        return 2
    if args.print_config:
        doc = {k: (list(v) if isinstance(v, (list, tuple)) else v)
               for k, v in vars(config).items()}
        print(json.dumps(doc, indent=2, sort_keys=True, default=list))
        return 0
    if config.seed is None or not config.vector_path:
        log.error("generate requires --seed and --vector")
        return 2
    if not config.tile_dir and not config.tile_template:
        log.error("generate requires --tile-dir or --tile-template")
        return 2
    if not Path(config.vector_path).exists():
        log.error("vector input %s does not exist", config.vector_path)
        return 2
    try:
        manifest, n_ok, n_failed = pipeline.generate_dataset(config)
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    print(json.dumps({"scenes_ok": n_ok, "scenes_failed": n_failed,
                      "regions": manifest.region_total,
                      "manifest_hash": dataset_io.manifest_hash(manifest)}))
    if n_ok == 0:
        return 1
    return 1 if n_failed else 0


def cmd_annotate(args) -> int:
    colored_dir = Path(args.colored_dir)
    out_root = Path(args.out_dir)
    sidecar = {}
    if args.transcriptions:
        sidecar = json.loads(Path(args.transcriptions).read_text(encoding="utf-8"))
    pngs = sorted(colored_dir.glob("*.png"))
    if not pngs:
        log.error("no .png layers under %s", colored_dir)
        return 2
    failures = 0
    total_regions = 0
    for path in pngs:
        image_id = path.stem
        try:
            colored = read_png(path)
            names = {int(k): v for k, v in sidecar.get(image_id, {}).items()}
            records = []
            for idx in sorted(annotate_mod.discover_label_colors(colored)):
                records.append(annotate_mod.annotate_label(
                    colored, idx, names.get(idx, "###"), alpha=args.alpha,
                    interpolation_distance=args.interpolation_distance))
            scene = dataset_io.SceneRecord(scene_id=image_id, image_path=path,
                                           size=(colored.width, colored.height),
                                           records=records)
            dataset_io.export_extended(scene, out_root / "gt_ext" / f"{image_id}.txt")
            dataset_io.export_icdar_gt(scene,
                                       out_root / "gt_icdar" / f"gt_{image_id}.txt")
            total_regions += len(records)
            log.info("scene=%s regions=%d status=ok", image_id, len(records))
        except Exception as exc:
            failures += 1
            log.error("scene=%s status=failed error=%s", image_id, exc)
    print(json.dumps({"images": len(pngs), "failed": failures,
                      "regions": total_regions}))
    return 1 if failures else 0


def _load_polygon_dirs(gt_dir: str, det_dir: str):
    gt = dataset_io.import_detections(gt_dir)
    det = dataset_io.import_detections(det_dir)
    shared = sorted(set(gt.per_image) & set(det.per_image))
    missing = sorted(set(gt.per_image) ^ set(det.per_image))
    return gt, det, shared, missing


def cmd_evaluate(args) -> int:
    try:
        cfg = metrics.EvalConfig(t_r=args.t_r, t_p=args.t_p, k=args.k)
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    gt, det, shared, missing = _load_polygon_dirs(args.gt_dir, args.det_dir)
    for err in gt.errors + det.errors:
        log.warning("parse: %s", err)
    for image_id in missing:
        log.warning("image %s present in only one directory; excluded", image_id)
    if not shared:
        log.error("no images shared between %s and %s", args.gt_dir, args.det_dir)
        return 2
    grouping = None
    if args.series_map:
        grouping = json.loads(Path(args.series_map).read_text(encoding="utf-8"))
    scores = [metrics.score(gt.per_image[i], det.per_image[i], cfg, image_id=i)
              for i in shared]
    report = metrics.aggregate(scores, grouping, cfg)
    metrics.write_report_csv(report, args.out)
    o = report.overall

    def pct(v):
        return "n/a" if v is None else f"{100.0 * v:.2f}%"

    print(f"All: precision={pct(o.precision)} recall={pct(o.recall)} "
          f"f1={pct(o.f1)} images={o.n_images}")
    if args.sweep:
        grid = args.sweep
        table = _mean_sweep(gt, det, shared, grid, args.k)
        metrics.write_sweep_csv(grid, grid, table, args.sweep_out)
    return 1 if (missing or gt.errors or det.errors) else 0


def _mean_sweep(gt, det, shared, grid, k):
    import numpy as np

    acc = np.zeros((len(grid), len(grid)))
    counts = np.zeros((len(grid), len(grid)))
    for image_id in shared:
        table = metrics.sweep(gt.per_image[image_id], det.per_image[image_id],
                              grid, grid, k)
        good = ~np.isnan(table)
        acc[good] += table[good]
        counts[good] += 1
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, acc / np.maximum(counts, 1), np.nan)


def cmd_sweep(args) -> int:
    gt, det, shared, missing = _load_polygon_dirs(args.gt_dir, args.det_dir)
    if not shared:
        log.error("no images shared between %s and %s", args.gt_dir, args.det_dir)
        return 2
    table = _mean_sweep(gt, det, shared, args.grid, args.k)
    metrics.write_sweep_csv(args.grid, args.grid, table, args.out)
    print(f"sweep written to {args.out} over {len(shared)} images")
    return 1 if missing else 0


def cmd_stats(args) -> int:
    root = Path(args.dataset_dir)
    counts = dataset_io.recount_dataset(root)
    doc = {"scene_count": len(counts), "region_total": sum(counts.values()),
           "per_scene": counts}
    consistent = None
    if (root / "manifest").exists():
        manifest = dataset_io.read_manifest(root)
        consistent = (manifest.per_scene == counts
                      and manifest.region_total == doc["region_total"])
        doc["manifest_consistent"] = consistent
    print(json.dumps(doc, sort_keys=True))
    return 0 if consistent in (True, None) else 1


def cmd_fetch_tiles(args) -> int:
    scenes = pipeline.scenes_from_bbox(args.bbox, args.zoom)
    failures = 0
    fetched = 0
    for ox, oy in scenes:
        for dx in (0, 1):
            for dy in (0, 1):
                tile = TileAddress(zoom=args.zoom, x=ox + dx, y=oy + dy)
                try:
                    fetch_tile(args.template, tile, args.cache_dir)
                    fetched += 1
                except Exception as exc:
                    failures += 1
                    log.error("tile z=%d x=%d y=%d failed: %s",
                              tile.zoom, tile.x, tile.y, exc)
    print(json.dumps({"fetched": fetched, "failed": failures}))
    return 1 if failures else 0


COMMANDS = {
    "generate": cmd_generate,
    "annotate": cmd_annotate,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
    "fetch-tiles": cmd_fetch_tiles,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
