"""Scene generation: background tiles -> placed labels -> rendered layers ->
annotations -> dataset files.

Every step is deterministic for a fixed RunConfig (seed included): font
styles derive from (seed, fclass), per-scene noise seeds from
(seed, scene_id), and all outputs are written atomically (temp + rename).
"""

from __future__ import annotations

import hashlib
import io
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from maptext import annotate as annotate_mod
from maptext import dataset_io, placement, raster
from maptext.geodata import (GeoFeature, PointGeom, PolygonSet, PolylineSet,
                             TileAddress, TileSource, assign_style,
                             parse_features, project_to_pixel)
from maptext.glyphs import load_font_config

log = logging.getLogger("maptext")

SCENE_TILES = 2  # scenes are 2x2 tiles


@dataclass
class RunConfig:
    seed: int | None = None
    zoom: int = 16
    tile_px: int = 256
    vector_path: str | None = None
    tile_template: str | None = None
    tile_dir: str | None = None
    cache_dir: str | None = None
    font_config: str | None = None
    out_dir: str = "dataset"
    scenes: list[tuple[int, int]] = field(default_factory=list)
    bbox: tuple[float, float, float, float] | None = None
    alpha: float = annotate_mod.DEFAULT_ALPHA
    interpolation_distance: float = annotate_mod.DEFAULT_INTERPOLATION_DISTANCE
    noise_sigma: float = 0.0
    letter_spacing: float = 1.0
    jobs: int = 1
    debug_overlays: bool = False
    t_r: float = 0.5
    t_p: float = 0.5
    k: float = 1.0

    def __post_init__(self):
        if self.zoom < 0 or self.tile_px <= 0:
            raise ValueError("zoom/tile_px out of range")
        if self.alpha < 0 or self.interpolation_distance <= 0:
            raise ValueError("alpha/interpolation_distance out of range")
        if self.noise_sigma < 0 or self.letter_spacing <= 0 or self.jobs < 1:
            raise ValueError("noise_sigma/letter_spacing/jobs out of range")
        for name in ("t_r", "t_p", "k"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} outside [0, 1]")

    @property
    def scene_px(self) -> int:
        return self.tile_px * SCENE_TILES

    def snapshot(self, font_hash: str) -> dict:
        return {
            "seed": self.seed,
            "zoom": self.zoom,
            "tile_px": self.tile_px,
            "alpha": self.alpha,
            "interpolation_distance": self.interpolation_distance,
            "noise_sigma": self.noise_sigma,
            "letter_spacing": self.letter_spacing,
            "font_hash": font_hash,
        }

    @classmethod
    def from_sources(cls, cli: dict, file_cfg: dict | None = None) -> "RunConfig":
        """Flags beat the config file, which beats the defaults."""
        merged: dict = {}
        known = {f.name for f in fields(cls)}
        for src in (file_cfg or {}), cli:
            for key, value in src.items():
                if key in known and value is not None:
                    merged[key] = value
        if "scenes" in merged:
            merged["scenes"] = [tuple(s) for s in merged["scenes"]]
        if "bbox" in merged and merged["bbox"] is not None:
            merged["bbox"] = tuple(merged["bbox"])
        return cls(**merged)


def scene_id_for(zoom: int, x: int, y: int) -> str:
    return f"{zoom}_{x}_{y}"


def derive_seed(base: int, *parts: str) -> int:
    digest = hashlib.sha256(("|".join([str(base), *parts])).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def scenes_from_bbox(bbox: tuple[float, float, float, float], zoom: int,
                     tile_px: int = 256) -> list[tuple[int, int]]:
    """Top-left origins of the 2x2 tile blocks covering a lon/lat bbox."""
    min_lon, min_lat, max_lon, max_lat = bbox
    probe = TileAddress(zoom=zoom, x=0, y=0, tile_px=tile_px)
    x0, y1 = project_to_pixel((min_lon, min_lat), probe)  # south -> larger y
    x1, y0 = project_to_pixel((max_lon, max_lat), probe)
    tx0, tx1 = int(x0 // tile_px), int(math.ceil(x1 / tile_px))
    ty0, ty1 = int(y0 // tile_px), int(math.ceil(y1 / tile_px))
    out = []
    for ty in range(ty0, max(ty0 + 1, ty1), SCENE_TILES):
        for tx in range(tx0, max(tx0 + 1, tx1), SCENE_TILES):
            out.append((tx, ty))
    return out


def _write_atomic(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _png_bytes(image: raster.TileImage) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def project_feature(feature: GeoFeature, origin: TileAddress):
    """Feature geometry in scene pixel coordinates (origin tile top-left)."""
    g = feature.geometry
    if isinstance(g, PointGeom):
        return project_to_pixel(g.lonlat, origin)
    if isinstance(g, PolylineSet):
        return [[project_to_pixel(p, origin) for p in part] for part in g.parts]
    if isinstance(g, PolygonSet):
        return [[[project_to_pixel(p, origin) for p in ring] for ring in rings]
                for rings in g.polygons]
    raise TypeError(f"unsupported geometry {type(g)!r}")


def _near_canvas(projected, kind: str, scene_px: int, margin: float = 64.0) -> bool:
    if kind == "point":
        x, y = projected
        return -margin <= x <= scene_px + margin and -margin <= y <= scene_px + margin
    if kind == "line":
        pts = [p for part in projected for p in part]
    else:
        pts = [p for rings in projected for ring in rings for p in ring]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return not (max(xs) < -margin or min(xs) > scene_px + margin
                or max(ys) < -margin or min(ys) > scene_px + margin)


def candidates_for_feature(feature: GeoFeature, origin: TileAddress,
                           config: RunConfig, fonts) -> list[placement.PlacedLabel]:
    """Placement candidates for one feature on the scene canvas."""
    spec = assign_style(feature.fclass, config.seed or 0)
    provider = fonts[spec.font_id]
    canvas = (float(config.scene_px), float(config.scene_px))
    projected = project_feature(feature, origin)
    g = feature.geometry
    if isinstance(g, PointGeom):
        if not _near_canvas(projected, "point", config.scene_px):
            return []
        return placement.place_point_label(feature.id, feature.name, projected,
                                           spec, provider, canvas,
                                           config.letter_spacing)
    if isinstance(g, PolylineSet):
        if not _near_canvas(projected, "line", config.scene_px):
            return []
        return placement.place_line_label(feature.id, feature.name, projected,
                                          spec, provider, canvas,
                                          config.letter_spacing)
    if not _near_canvas(projected, "area", config.scene_px):
        return []
    return placement.place_area_label(feature.id, feature.name, projected,
                                      spec, provider, canvas,
                                      config.letter_spacing)


@dataclass
class SceneResult:
    scene_id: str
    n_regions: int
    image_path: Path


def generate_scene(config: RunConfig, origin_xy: tuple[int, int],
                   features: list[GeoFeature], fonts, tile_source: TileSource,
                   out_root: Path) -> SceneResult:
    ox, oy = origin_xy
    origin = TileAddress(zoom=config.zoom, x=ox, y=oy, tile_px=config.tile_px)
    sid = scene_id_for(config.zoom, ox, oy)

    grid = [[tile_source.get(TileAddress(config.zoom, ox + dx, oy + dy,
                                         config.tile_px))
             for dx in (0, 1)] for dy in (0, 1)]
    background = raster.concat_tiles(grid)

    candidate_lists = [candidates_for_feature(f, origin, config, fonts)
                       for f in sorted(features, key=lambda f: f.id)]
    accepted = placement.resolve_collisions(candidate_lists)
    labels = placement.assign_color_indices(accepted)

    size = (config.scene_px, config.scene_px)
    colored = raster.render_colored_layer(labels, size, fonts)
    gray = raster.render_gray_layer(colored)
    scene_img = raster.composite(background, gray)
    if config.noise_sigma > 0:
        mask = gray.opaque_mask()
        noise_seed = derive_seed(config.seed or 0, sid, "noise")
        scene_img = raster.add_wornout_noise(scene_img, mask,
                                             config.noise_sigma, noise_seed)

    records = []
    for lab in labels:
        try:
            rec = annotate_mod.annotate_label(
                colored, lab.color_index, lab.text, alpha=config.alpha,
                interpolation_distance=config.interpolation_distance,
                overflow=lab.overflow)
        except annotate_mod.LabelAbsent:
            continue
        records.append(rec)

    image_path = out_root / "images" / f"{sid}.png"
    _write_atomic(image_path, _png_bytes(scene_img))
    scene = dataset_io.SceneRecord(scene_id=sid, image_path=image_path,
                                   size=size, records=records)
    dataset_io.export_icdar_gt(scene, out_root / "gt_icdar" / f"gt_{sid}.txt")
    dataset_io.export_extended(scene, out_root / "gt_ext" / f"{sid}.txt")
    if config.debug_overlays:
        overlay = annotate_mod.overlay_annotations(scene_img, records)
        _write_atomic(out_root / "overlays" / f"{sid}.png", _png_bytes(overlay))
    return SceneResult(scene_id=sid, n_regions=len(records), image_path=image_path)


def build_tile_source(config: RunConfig) -> TileSource:
    if config.tile_dir:
        return TileSource(directory=config.tile_dir)
    if config.tile_template:
        cache = config.cache_dir or os.environ.get("MAPTEXT_CACHE_DIR") \
            or str(Path(config.out_dir) / "tile_cache")
        return TileSource(template=config.tile_template, cache_dir=cache)
    raise ValueError("no tile source configured (need tile_dir or tile_template)")


def generate_dataset(config: RunConfig) -> tuple[dataset_io.DatasetManifest, int, int]:
    """Run all scenes; returns (manifest, n_ok, n_failed)."""
    if config.seed is None:
        raise ValueError("generation requires a seed")
    if not config.vector_path:
        raise ValueError("generation requires a vector input path")
    scenes = list(config.scenes)
    if not scenes and config.bbox:
        scenes = scenes_from_bbox(config.bbox, config.zoom, config.tile_px)
    if not scenes:
        raise ValueError("no scenes requested (give scenes or a bbox)")

    parsed = parse_features(Path(config.vector_path).read_bytes())
    if parsed.skipped_empty_name or parsed.skipped_geometry:
        log.info("skipped %d empty-name and %d unsupported-geometry features",
                 parsed.skipped_empty_name, parsed.skipped_geometry)
    fonts, font_hash = load_font_config(config.font_config)
    source = build_tile_source(config)
    out_root = Path(config.out_dir)

    def run_one(origin):
        return generate_scene(config, origin, parsed.features, fonts, source,
                              out_root)

    results: list[SceneResult] = []
    failures = 0
    if config.jobs == 1:
        outcomes = []
        for origin in scenes:
            try:
                outcomes.append(run_one(origin))
            except Exception as exc:  # per-scene isolation
                outcomes.append((origin, exc))
    else:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            futures = [(origin, pool.submit(run_one, origin)) for origin in scenes]
            outcomes = []
            for origin, fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:
                    outcomes.append((origin, exc))
    for outcome in outcomes:
        if isinstance(outcome, SceneResult):
            results.append(outcome)
            log.info("scene=%s regions=%d status=ok", outcome.scene_id,
                     outcome.n_regions)
        else:
            origin, exc = outcome
            failures += 1
            log.error("scene=%s status=failed error=%s",
                      scene_id_for(config.zoom, *origin), exc)

    per_scene = {r.scene_id: r.n_regions for r in results}
    manifest = dataset_io.stats(per_scene, config.snapshot(font_hash))
    dataset_io.write_manifest(manifest, out_root)
    return manifest, len(results), failures
