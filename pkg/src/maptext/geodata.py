"""Vector-feature ingestion, font-group styling, and slippy-tile access.

Features come in as a GeoJSON-style feature collection with per-feature
``name`` and ``fclass`` string properties.  Feature classes drive the font
group (Large / Medium / Small); tile math follows the standard Web-Mercator
z/x/y pyramid with 256-px tiles.
"""

from __future__ import annotations

import json
import math
import os
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:
    from maptext.raster import TileImage

LonLat = tuple[float, float]

# Web-Mercator validity limit for latitudes (open interval).
MERCATOR_LAT_LIMIT = 85.06

LARGE_CLASSES = frozenset({
    "canal", "city", "county", "town", "village",
    "waterfall", "wetland", "island",
})
# "rail river" in the source table is read as the two classes rail and river.
MEDIUM_CLASSES = frozenset({
    "airfield", "airport", "allotment", "archaeological",
    "battlefield", "camp site", "camp_site", "cliff", "dock",
    "farmland", "farm", "forest", "fort", "hamlet",
    "nature reserve", "nature_reserve", "reservoir", "ruins",
    "vineyard", "rail", "river", "stream",
})

FONT_GROUP_SIZES = {"Large": (60, 80), "Medium": (35, 45), "Small": (20, 30)}
FONT_GROUP_PRIORITY = {"Large": 0, "Medium": 1, "Small": 2}
FONT_SET_SIZE = 16


class FeatureParseError(ValueError):
    """Malformed feature-collection document.

    ``offset`` is the character offset into the document where decoding
    failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class TileFetchError(RuntimeError):
    """Tile download failed; ``retriable`` hints whether retrying makes sense."""

    def __init__(self, message: str, url: str, status: int | None = None,
                 retriable: bool = False):
        super().__init__(message)
        self.url = url
        self.status = status
        self.retriable = retriable


class TileFormatError(ValueError):
    """Fetched payload is not a decodable tile image of the expected size."""


@dataclass(frozen=True)
class PointGeom:
    lonlat: LonLat

    def __post_init__(self):
        _check_lonlat(self.lonlat)


@dataclass(frozen=True)
class PolylineSet:
    parts: tuple[tuple[LonLat, ...], ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("polyline set has no parts")
        for part in self.parts:
            if len(part) < 2:
                raise ValueError("polyline part needs at least 2 points")
            for p in part:
                _check_lonlat(p)


@dataclass(frozen=True)
class PolygonSet:
    """Polygons as tuples of rings; ring 0 is the exterior, rings are closed."""

    polygons: tuple[tuple[tuple[LonLat, ...], ...], ...]

    def __post_init__(self):
        if not self.polygons:
            raise ValueError("polygon set has no polygons")
        for rings in self.polygons:
            if not rings:
                raise ValueError("polygon has no rings")
            for ring in rings:
                if len(ring) < 4 or ring[0] != ring[-1]:
                    raise ValueError("polygon rings must be closed (first == last)")
                for p in ring:
                    _check_lonlat(p)


Geometry = Union[PointGeom, PolylineSet, PolygonSet]


def _check_lonlat(p: LonLat) -> None:
    lon, lat = p
    if not (-180.0 <= lon <= 180.0):
        raise ValueError(f"longitude {lon} outside [-180, 180]")
    if not (-MERCATOR_LAT_LIMIT < lat < MERCATOR_LAT_LIMIT):
        raise ValueError(f"latitude {lat} outside Web-Mercator range")


@dataclass(frozen=True)
class GeoFeature:
    id: str
    name: str
    geometry: Geometry
    fclass: str

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("feature name is empty")


@dataclass(frozen=True)
class FontSpec:
    group: str  # Large | Medium | Small
    size_pt: int
    font_id: int

    def __post_init__(self):
        if self.group not in FONT_GROUP_SIZES:
            raise ValueError(f"unknown font group {self.group!r}")
        lo, hi = FONT_GROUP_SIZES[self.group]
        if not (lo <= self.size_pt <= hi):
            raise ValueError(f"size {self.size_pt} outside {self.group} range [{lo},{hi}]")
        if not (0 <= self.font_id < FONT_SET_SIZE):
            raise ValueError(f"font_id {self.font_id} outside [0, {FONT_SET_SIZE - 1}]")

    @property
    def priority(self) -> int:
        return FONT_GROUP_PRIORITY[self.group]


@dataclass(frozen=True)
class TileAddress:
    zoom: int
    x: int
    y: int
    tile_px: int = 256

    def __post_init__(self):
        if self.zoom < 0:
            raise ValueError("zoom must be >= 0")
        n = 1 << self.zoom
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise ValueError(f"tile ({self.x},{self.y}) outside zoom {self.zoom} grid")
        if self.tile_px <= 0:
            raise ValueError("tile_px must be positive")


@dataclass
class ParseResult:
    features: list[GeoFeature]
    skipped_empty_name: int = 0
    skipped_geometry: int = 0
    line_errors: list[str] = field(default_factory=list)


def parse_features(data: bytes | str, fmt: str = "geojson") -> ParseResult:
    """Parse a GeoJSON-style feature collection into GeoFeatures.

    Features with empty (or whitespace-only) names are skipped and counted;
    unsupported geometry types are skipped and counted.  LineString and
    Polygon geometries are promoted to their Multi forms.
    """
    if fmt != "geojson":
        raise ValueError(f"unsupported format {fmt!r}")
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FeatureParseError(f"malformed document: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict) or "features" not in doc:
        raise FeatureParseError("document is not a feature collection")

    result = ParseResult(features=[])
    for idx, feat in enumerate(doc["features"]):
        props = feat.get("properties") or {}
        name = str(props.get("name") or "")
        if not name.strip():
            result.skipped_empty_name += 1
            continue
        fclass = str(props.get("fclass") or "")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        try:
            geometry = _build_geometry(gtype, coords)
        except ValueError as exc:
            result.skipped_geometry += 1
            result.line_errors.append(f"feature {idx}: {exc}")
            continue
        if geometry is None:
            result.skipped_geometry += 1
            continue
        fid = str(feat.get("id", props.get("osm_id", idx)))
        result.features.append(GeoFeature(id=fid, name=name.strip(),
                                          geometry=geometry, fclass=fclass))
    return result


def _build_geometry(gtype: str | None, coords) -> Geometry | None:
    if gtype == "Point":
        return PointGeom(lonlat=(float(coords[0]), float(coords[1])))
    if gtype == "LineString":
        coords = [coords]
        gtype = "MultiLineString"
    if gtype == "MultiLineString":
        parts = tuple(tuple((float(x), float(y)) for x, y in part) for part in coords)
        return PolylineSet(parts=parts)
    if gtype == "Polygon":
        coords = [coords]
        gtype = "MultiPolygon"
    if gtype == "MultiPolygon":
        polys = tuple(
            tuple(tuple((float(x), float(y)) for x, y in ring) for ring in rings)
            for rings in coords
        )
        return PolygonSet(polygons=polys)
    return None  # unsupported type -> skipped


def font_group_for_class(fclass: str) -> str:
    if fclass in LARGE_CLASSES:
        return "Large"
    if fclass in MEDIUM_CLASSES:
        return "Medium"
    return "Small"  # "others", e.g. streets


def assign_style(fclass: str, rng_seed: int) -> FontSpec:
    """Deterministic font spec for a feature class.

    Same (fclass, seed) always yields the same spec, so every label of one
    feature class shares a font and size across the whole dataset.
    """
    if not fclass:
        fclass = "<none>"
    group = font_group_for_class(fclass)
    lo, hi = FONT_GROUP_SIZES[group]
    rng = random.Random(f"{rng_seed}|{fclass}")
    size_pt = rng.randint(lo, hi)
    font_id = rng.randrange(FONT_SET_SIZE)
    return FontSpec(group=group, size_pt=size_pt, font_id=font_id)


def project_to_pixel(lonlat: LonLat, tile: TileAddress) -> tuple[float, float]:
    """Fractional pixel position of a lon/lat point relative to a tile's
    top-left corner."""
    _check_lonlat(lonlat)
    lon, lat = lonlat
    n = float(1 << tile.zoom)
    lat_rad = math.radians(lat)
    wx = (lon + 180.0) / 360.0 * n * tile.tile_px
    wy = (1.0 - math.log(math.tan(lat_rad) + 1.0 / math.cos(lat_rad)) / math.pi) / 2.0 \
        * n * tile.tile_px
    return (wx - tile.x * tile.tile_px, wy - tile.y * tile.tile_px)


def pixel_to_lonlat(pixel: tuple[float, float], tile: TileAddress) -> LonLat:
    """Inverse of project_to_pixel."""
    n = float(1 << tile.zoom)
    wx = pixel[0] + tile.x * tile.tile_px
    wy = pixel[1] + tile.y * tile.tile_px
    lon = wx / (n * tile.tile_px) * 360.0 - 180.0
    merc_y = math.pi * (1.0 - 2.0 * wy / (n * tile.tile_px))
    lat = math.degrees(math.atan(math.sinh(merc_y)))
    return (lon, lat)


def tile_cache_path(cache_dir: Path | str, tile: TileAddress) -> Path:
    return Path(cache_dir) / str(tile.zoom) / str(tile.x) / f"{tile.y}.png"


def fetch_tile(template: str, tile: TileAddress, cache_dir: Path | str,
               timeout: float = 20.0) -> "TileImage":
    """Fetch one tile from a ``{z}/{x}/{y}`` template server, with caching.

    A cache hit returns the stored file without touching the network.  The
    cache write goes through a temp file + rename so concurrent fetches of
    the same tile cannot interleave partial writes (payloads are identical,
    last write wins).
    """
    from maptext import raster  # local import: raster depends on TileAddress

    for placeholder in ("{z}", "{x}", "{y}"):
        if placeholder not in template:
            raise ValueError(f"tile template missing {placeholder} placeholder")

    path = tile_cache_path(cache_dir, tile)
    if path.exists():
        img = raster.read_png(path)
        img.address = tile
        return img

    import requests

    url = template.format(z=tile.zoom, x=tile.x, y=tile.y)
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise TileFetchError(f"fetch failed for {url}: {exc}", url=url,
                             retriable=True) from exc
    if resp.status_code != 200:
        raise TileFetchError(f"HTTP {resp.status_code} for {url}", url=url,
                             status=resp.status_code,
                             retriable=resp.status_code >= 500)

    img = _decode_tile_payload(resp.content, tile)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(resp.content)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cache write failed for {path}: {exc}") from exc
    return img


def _decode_tile_payload(payload: bytes, tile: TileAddress) -> "TileImage":
    import io

    from PIL import Image, UnidentifiedImageError

    from maptext import raster

    try:
        with Image.open(io.BytesIO(payload)) as im:
            im = im.convert("RGBA")
            if im.size != (tile.tile_px, tile.tile_px):
                raise TileFormatError(
                    f"tile payload is {im.size}, expected {tile.tile_px} square")
            import numpy as np

            pixels = np.asarray(im, dtype=np.uint8).copy()
    except UnidentifiedImageError as exc:
        raise TileFormatError(f"payload is not an image: {exc}") from exc
    return raster.TileImage(width=tile.tile_px, height=tile.tile_px,
                            pixels=pixels, address=tile)


class TileSource:
    """Uniform access to background tiles from a URL template or a local
    directory laid out as ``<root>/<z>/<x>/<y>.png``."""

    def __init__(self, template: str | None = None,
                 directory: Path | str | None = None,
                 cache_dir: Path | str | None = None):
        if (template is None) == (directory is None):
            raise ValueError("provide exactly one of template or directory")
        if template is not None and cache_dir is None:
            raise ValueError("a template source needs a cache_dir")
        self.template = template
        self.directory = Path(directory) if directory is not None else None
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None

    def get(self, tile: TileAddress) -> "TileImage":
        from maptext import raster

        if self.directory is not None:
            path = tile_cache_path(self.directory, tile)
            if not path.exists():
                raise FileNotFoundError(f"no tile at {path}")
            img = raster.read_png(path)
            if img.width != tile.tile_px or img.height != tile.tile_px:
                raise TileFormatError(
                    f"tile {path} is {img.width}x{img.height}, expected {tile.tile_px}")
            img.address = tile
            return img
        assert self.template is not None and self.cache_dir is not None
        return fetch_tile(self.template, tile, self.cache_dir)
