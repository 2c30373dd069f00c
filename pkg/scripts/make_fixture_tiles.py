#!/usr/bin/env python3
"""Regenerate the bundled fixture tiles and vector features.

Writes 8 parchment-style 256px tiles (two 2x2 scenes at zoom 16) under
fixtures/tiles/ and a matching feature collection at fixtures/features.json.
Deterministic; safe to re-run.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from maptext.geodata import TileAddress, pixel_to_lonlat  # noqa: E402

ZOOM = 16
ORIGINS = [(32221, 21794), (32223, 21794)]  # two 2x2 scenes, side by side
BASE = np.array([231, 222, 197], dtype=np.float64)  # aged-paper tone


def tile_pixels(x: int, y: int) -> np.ndarray:
    rng = np.random.default_rng(x * 100003 + y)
    img = np.tile(BASE, (256, 256, 1))
    img += rng.normal(0.0, 5.0, size=(256, 256, 3))
    # A few darker contour-like strokes.
    yy, xx = np.mgrid[0:256, 0:256].astype(np.float64)
    for _ in range(6):
        cx, cy = rng.uniform(0, 256, 2)
        freq = rng.uniform(0.02, 0.05)
        phase = rng.uniform(0, 2 * np.pi)
        band = np.abs((yy - cy) - 40.0 * np.sin(freq * (xx - cx) + phase))
        img[band < 1.2] -= 28.0
    # Soft blotches.
    for _ in range(3):
        cx, cy = rng.uniform(0, 256, 2)
        r = rng.uniform(25, 70)
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        img[d2 < r * r] -= 8.0
    out = np.empty((256, 256, 4), dtype=np.uint8)
    out[:, :, :3] = np.clip(img, 0, 255).astype(np.uint8)
    out[:, :, 3] = 255
    return out


def write_tiles() -> None:
    for ox, oy in ORIGINS:
        for dx in (0, 1):
            for dy in (0, 1):
                x, y = ox + dx, oy + dy
                path = ROOT / "fixtures" / "tiles" / str(ZOOM) / str(x) / f"{y}.png"
                path.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(tile_pixels(x, y), mode="RGBA").save(path)


def scene_lonlat(origin: tuple[int, int], px: float, py: float):
    tile = TileAddress(zoom=ZOOM, x=origin[0], y=origin[1])
    lon, lat = pixel_to_lonlat((px, py), tile)
    return [round(lon, 10), round(lat, 10)]


def feature(fid, name, fclass, geometry):
    return {"type": "Feature", "id": fid,
            "properties": {"name": name, "fclass": fclass},
            "geometry": geometry}


def line_geometry(origin, pts):
    return {"type": "MultiLineString",
            "coordinates": [[scene_lonlat(origin, x, y) for x, y in pts]]}


def polygon_geometry(origin, ring):
    coords = [scene_lonlat(origin, x, y) for x, y in ring]
    coords.append(coords[0])
    return {"type": "MultiPolygon", "coordinates": [[coords]]}


def point_geometry(origin, x, y):
    return {"type": "Point", "coordinates": scene_lonlat(origin, x, y)}


def wavy(x0, y0, x1, amp, n=24):
    xs = np.linspace(x0, x1, n)
    return [(float(x), float(y0 + amp * np.sin((x - x0) / 55.0))) for x in xs]


def write_features() -> None:
    a, b = ORIGINS
    features = [
        feature("a01", "BRISTOL", "city", point_geometry(a, 256, 90)),
        feature("a02", "CLIFTON", "village", point_geometry(a, 300, 250)),
        feature("a03", "AVON", "stream", line_geometry(a, wavy(30, 360, 480, 14))),
        feature("a04", "PARK ROW", "street", line_geometry(a, wavy(60, 460, 430, 8))),
        feature("b01", "BATH", "city", point_geometry(b, 200, 120)),
        feature("b02", "FROME", "stream", line_geometry(b, wavy(25, 230, 490, 12))),
        feature("b03", "HIGH ST", "street", line_geometry(b, wavy(70, 310, 440, 6))),
        feature("b04", "ORCHARD", "farm",
                polygon_geometry(b, [(60, 360), (330, 350), (340, 490), (70, 500)])),
        feature("b05", "KEYNSHAM", "town", point_geometry(b, 256, 440)),
    ]
    doc = {"type": "FeatureCollection", "features": features}
    out = ROOT / "fixtures" / "features.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    write_tiles()
    write_features()
    print("fixtures written under", ROOT / "fixtures")
