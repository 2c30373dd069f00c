"""Dataset serialization: ICDAR-convention polygon files, the extended
centerline/height records, detector-output ingestion, and manifests.

Layout of a generated dataset:

    <root>/images/<scene_id>.png
    <root>/gt_icdar/gt_<scene_id>.txt
    <root>/gt_ext/<scene_id>.txt
    <root>/manifest

All files are UTF-8 with LF line endings.  Polygon coordinates are exported
as integers (rounded half away from zero); centerline points and local
heights as reals with 2 decimals.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from maptext.annotate import AnnotationRecord, BoundingPolygon, Centerline

EXTENDED_HEADER = "# maptext extended ground truth v1"
FLAG_NAMES = ("multi_component", "self_intersecting", "overflow")


@dataclass
class SceneRecord:
    scene_id: str
    image_path: Path | None
    size: tuple[int, int]  # (width, height)
    records: list[AnnotationRecord]


@dataclass
class DatasetManifest:
    scene_count: int
    region_total: int
    per_scene: dict[str, int]
    config: dict

    def __post_init__(self):
        if self.region_total != sum(self.per_scene.values()):
            raise ValueError("manifest totals inconsistent with per-scene counts")


@dataclass
class DetectionImport:
    per_image: dict[str, list[BoundingPolygon]]
    errors: list[str] = field(default_factory=list)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def _clip_to_bounds(polygon: BoundingPolygon, size: tuple[int, int]) -> list[tuple[float, float]]:
    from maptext import geom

    w, h = size
    bounds = ((0.0, 0.0), (float(w), 0.0), (float(w), float(h)), (0.0, float(h)))
    clipped = geom.clip_convex(list(polygon.vertices), bounds)
    if len(clipped) < 3:
        return []
    return geom.ensure_clockwise(clipped)


def icdar_line(vertices, transcription: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    coords: list = []
    for x, y in vertices:
        coords.extend([_round_half_away(x), _round_half_away(y)])
    writer.writerow(coords + [transcription])
    return buf.getvalue()


def export_icdar_gt(scene: SceneRecord, out: Path | str) -> Path:
    """One text line per region: x1,y1,...,xn,yn,transcription (clockwise
    integer vertices, transcription quoted when it contains commas).
    Polygons are clipped to the image bounds; fully outside regions are
    dropped."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in scene.records:
        ring = _clip_to_bounds(rec.polygon, scene.size)
        if not ring:
            continue
        lines.append(icdar_line(ring, rec.transcription))
    out.write_text("".join(lines), encoding="utf-8", newline="")
    return out


def parse_icdar_line(line: str) -> tuple[list[tuple[float, float]], str]:
    """(vertices, transcription) from one ICDAR-convention line.  The
    transcription field is optional: a line of an even number of plain
    numbers is all coordinates."""
    row = next(csv.reader([line]))
    if not row:
        raise ValueError("empty line")
    fields = list(row)
    transcription = ""

    def _all_numeric(vals) -> bool:
        try:
            [float(v) for v in vals]
        except ValueError:
            return False
        return True

    if not (_all_numeric(fields) and len(fields) % 2 == 0):
        transcription = fields[-1]
        fields = fields[:-1]
    if len(fields) < 6 or len(fields) % 2 != 0 or not _all_numeric(fields):
        raise ValueError(f"expected an even number (>= 6) of coordinates, got {len(fields)}")
    nums = [float(v) for v in fields]
    vertices = [(nums[i], nums[i + 1]) for i in range(0, len(nums), 2)]
    return vertices, transcription


def import_icdar_file(path: Path | str) -> tuple[list[BoundingPolygon], list[str], list[str]]:
    """(polygons, transcriptions, errors) from one ground-truth/detection
    file; malformed lines are reported and skipped."""
    from shapely.geometry import Polygon as ShapelyPolygon

    polygons: list[BoundingPolygon] = []
    transcriptions: list[str] = []
    errors: list[str] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            vertices, transcription = parse_icdar_line(line)
        except ValueError as exc:
            errors.append(f"{path}:{lineno}: {exc}")
            continue
        simple = ShapelyPolygon(vertices).is_simple
        polygons.append(BoundingPolygon.from_ring(vertices,
                                                  self_intersecting=not simple))
        transcriptions.append(transcription)
    return polygons, transcriptions, errors


def image_id_from_filename(name: str) -> str:
    stem = Path(name).stem
    for prefix in ("gt_", "res_"):
        if stem.startswith(prefix):
            return stem[len(prefix):]
    return stem


def import_detections(directory: Path | str) -> DetectionImport:
    """Parse every .txt polygon file in a directory, normalizing orientation
    to clockwise and flagging self-intersections for metric-side repair."""
    directory = Path(directory)
    result = DetectionImport(per_image={})
    for path in sorted(directory.glob("*.txt")):
        polys, _, errors = import_icdar_file(path)
        result.per_image[image_id_from_filename(path.name)] = polys
        result.errors.extend(errors)
    return result


def _fmt_flags(flags: dict) -> str:
    return " ".join(f"{name}={1 if flags.get(name) else 0}" for name in FLAG_NAMES)


def export_extended(scene: SceneRecord, out: Path | str) -> Path:
    """Structured per-region document: polygon, centerline, local height,
    transcription, and flags."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [EXTENDED_HEADER,
             f"scene: {scene.scene_id}",
             f"regions: {len(scene.records)}"]
    for n, rec in enumerate(scene.records, start=1):
        poly = ";".join(f"{_round_half_away(x)},{_round_half_away(y)}"
                        for x, y in rec.polygon.vertices)
        center = ";".join(f"{x:.2f},{y:.2f}" for x, y in rec.centerline.points)
        lines.extend([
            "---",
            f"region: {n}",
            f"transcription: {rec.transcription}",
            f"polygon: {poly}",
            f"centerline: {center}",
            f"local_height: {rec.local_height:.2f}",
            f"flags: {_fmt_flags(rec.flags)}",
        ])
    out.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")
    return out


def _centerline_axis(points: list[tuple[float, float]]) -> str:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_mono = all(b > a for a, b in zip(xs, xs[1:]))
    y_mono = all(b > a for a, b in zip(ys, ys[1:]))
    if x_mono and not y_mono:
        return "x"
    if y_mono and not x_mono:
        return "y"
    return "x" if (max(xs) - min(xs)) >= (max(ys) - min(ys)) else "y"


def import_extended(path: Path | str) -> SceneRecord:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != EXTENDED_HEADER:
        raise ValueError(f"{path}: not an extended ground-truth document")
    scene_id = ""
    records: list[AnnotationRecord] = []
    current: dict | None = None

    def finish(cur: dict):
        poly = BoundingPolygon.from_ring(
            cur["polygon"],
            self_intersecting=bool(cur["flags"].get("self_intersecting")),
            multi_component=bool(cur["flags"].get("multi_component")))
        axis = _centerline_axis(cur["centerline"])
        k = 0 if axis == "x" else 1
        points: list[tuple[float, float]] = []
        for pt in cur["centerline"]:
            # 2-decimal rounding can tie consecutive points on the axis.
            if not points or pt[k] > points[-1][k]:
                points.append(pt)
        if len(points) < 2:
            raise ValueError(f"region {cur.get('region')}: degenerate centerline")
        centerline = Centerline(points=tuple(points), axis=axis)
        records.append(AnnotationRecord(
            label_id=cur["region"], transcription=cur["transcription"],
            polygon=poly, centerline=centerline,
            local_height=cur["local_height"], flags=cur["flags"]))

    for line in lines[1:]:
        if line.startswith("scene: "):
            scene_id = line[len("scene: "):]
        elif line == "---":
            if current is not None:
                finish(current)
            current = {"flags": {}}
        elif current is not None:
            key, _, value = line.partition(": ")
            if key == "region":
                current["region"] = int(value)
            elif key == "transcription":
                current["transcription"] = value
            elif key == "polygon":
                current["polygon"] = [tuple(float(v) for v in pt.split(","))
                                      for pt in value.split(";")]
            elif key == "centerline":
                current["centerline"] = [tuple(float(v) for v in pt.split(","))
                                         for pt in value.split(";")]
            elif key == "local_height":
                current["local_height"] = float(value)
            elif key == "flags":
                current["flags"] = {kv.split("=")[0]: kv.split("=")[1] == "1"
                                    for kv in value.split()}
    if current is not None:
        finish(current)
    return SceneRecord(scene_id=scene_id, image_path=None, size=(0, 0),
                       records=records)


def stats(per_scene: dict[str, int], config: dict) -> DatasetManifest:
    return DatasetManifest(
        scene_count=len(per_scene),
        region_total=sum(per_scene.values()),
        per_scene=dict(sorted(per_scene.items())),
        config=config,
    )


def manifest_json(manifest: DatasetManifest) -> str:
    doc = {
        "scene_count": manifest.scene_count,
        "region_total": manifest.region_total,
        "per_scene": manifest.per_scene,
        "config": manifest.config,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def manifest_hash(manifest: DatasetManifest) -> str:
    return hashlib.sha256(manifest_json(manifest).encode("utf-8")).hexdigest()


def write_manifest(manifest: DatasetManifest, root: Path | str) -> Path:
    path = Path(root) / "manifest"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest_json(manifest), encoding="utf-8", newline="")
    return path


def read_manifest(root: Path | str) -> DatasetManifest:
    doc = json.loads((Path(root) / "manifest").read_text(encoding="utf-8"))
    return DatasetManifest(scene_count=doc["scene_count"],
                           region_total=doc["region_total"],
                           per_scene=doc["per_scene"], config=doc["config"])


def recount_dataset(root: Path | str) -> dict[str, int]:
    """Per-scene region counts from the gt_ext files on disk."""
    root = Path(root)
    counts: dict[str, int] = {}
    ext_dir = root / "gt_ext"
    if not ext_dir.is_dir():
        return counts
    for path in sorted(ext_dir.glob("*.txt")):
        scene = import_extended(path)
        counts[scene.scene_id or path.stem] = len(scene.records)
    return counts
