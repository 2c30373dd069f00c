"""Ground-truth derivation from the colored text layer.

Per label: exact-color pixel extraction, alpha-shape bounding polygon,
Voronoi-skeleton centerline smoothed by a cubic fit along the wider axis,
distance-transform local height over the polygon-filled mask, and ribbon
reconstruction of the polygon from (centerline, height).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import Delaunay, QhullError, Voronoi

from maptext import geom
from maptext.raster import ColorIndexMap, TileImage

Point = tuple[float, float]

DEFAULT_ALPHA = 0.02
DEFAULT_INTERPOLATION_DISTANCE = 9.0


class LabelAbsent(ValueError):
    """No pixels carry the requested label color (label was dropped)."""


@dataclass(frozen=True)
class BoundingPolygon:
    """Simple polygon, vertices clockwise on screen (positive shoelace sum
    under y-down coordinates)."""

    vertices: tuple[Point, ...]
    multi_component: bool = False
    degenerate: bool = False
    self_intersecting: bool = False

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")

    @classmethod
    def from_ring(cls, ring, **flags) -> "BoundingPolygon":
        pts = geom.ensure_clockwise([(float(x), float(y)) for x, y in ring])
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts = pts[:-1]
        return cls(vertices=tuple(pts), **flags)

    @property
    def area(self) -> float:
        return geom.polygon_area(self.vertices)

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))


@dataclass(frozen=True)
class Skeleton:
    """Raw (possibly branching) centerline graph inside a polygon."""

    segments: tuple[tuple[Point, Point], ...]
    polygon: BoundingPolygon
    interpolation_distance: float
    too_thin: bool = False

    @property
    def is_empty(self) -> bool:
        return len(self.segments) == 0

    def points(self) -> np.ndarray:
        if self.is_empty:
            return np.zeros((0, 2))
        pts = {p for seg in self.segments for p in seg}
        return np.array(sorted(pts))


@dataclass(frozen=True)
class Centerline:
    points: tuple[Point, ...]
    axis: str  # 'x' or 'y': the independent fitting variable
    reduced_degree: bool = False

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("centerline needs at least 2 points")
        if self.axis not in ("x", "y"):
            raise ValueError("axis must be 'x' or 'y'")
        k = 0 if self.axis == "x" else 1
        vals = [p[k] for p in self.points]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("centerline points must be strictly monotone "
                             f"in {self.axis}")


@dataclass
class AnnotationRecord:
    label_id: int
    transcription: str
    polygon: BoundingPolygon
    centerline: Centerline
    local_height: float
    flags: dict[str, bool] = field(default_factory=dict)


def extract_label_pixels(colored: TileImage, color_index: int,
                         color_map: ColorIndexMap | None = None) -> np.ndarray:
    """(N, 2) array of (x, y) pixel coordinates whose RGB matches the label
    color exactly and whose alpha is opaque."""
    if color_index < 1:
        raise ValueError("color_index must be >= 1")
    cmap = color_map or ColorIndexMap()
    r, g, b = cmap.color_for_index(color_index)
    px = colored.pixels
    hit = (px[:, :, 3] == 255) & (px[:, :, 0] == r) & (px[:, :, 1] == g) \
        & (px[:, :, 2] == b)
    ys, xs = np.nonzero(hit)
    if xs.size == 0:
        raise LabelAbsent(f"no pixels for label color index {color_index}")
    return np.column_stack([xs, ys]).astype(np.int64)


def discover_label_colors(colored: TileImage,
                          color_map: ColorIndexMap | None = None) -> dict[int, int]:
    """Map color_index -> opaque pixel count for every label present."""
    cmap = color_map or ColorIndexMap()
    px = colored.pixels
    opaque = px[:, :, 3] == 255
    rgb = px[opaque][:, :3].astype(np.int64)
    values, counts = np.unique(rgb[:, 0] * 65536 + rgb[:, 1] * 256 + rgb[:, 2],
                               return_counts=True)
    out: dict[int, int] = {}
    for v, c in zip(values, counts):
        try:
            idx = cmap.index_for_color(((v >> 16) & 255, (v >> 8) & 255, v & 255))
        except ValueError:
            continue
        out[idx] = int(c)
    return out


def _oriented_rect_fallback(pts: np.ndarray, **flags) -> BoundingPolygon:
    """1-px dilated oriented rectangle around (nearly) degenerate input."""
    p0 = pts.astype(np.float64)
    center = p0.mean(axis=0)
    d = p0 - center
    # Principal direction; falls back to x for a single point.
    cov = d.T @ d
    w, v = np.linalg.eigh(cov)
    direction = v[:, int(np.argmax(w))]
    if np.allclose(direction, 0):
        direction = np.array([1.0, 0.0])
    t = d @ direction
    lo, hi = float(t.min()) - 1.0, float(t.max()) + 1.0
    n = np.array([-direction[1], direction[0]])
    s = d @ n
    nlo, nhi = float(s.min()) - 1.0, float(s.max()) + 1.0
    corners = [center + lo * direction + nlo * n,
               center + hi * direction + nlo * n,
               center + hi * direction + nhi * n,
               center + lo * direction + nhi * n]
    return BoundingPolygon.from_ring([(c[0], c[1]) for c in corners],
                                     degenerate=True, **flags)


def concave_hull(pixels: np.ndarray, alpha: float = DEFAULT_ALPHA) -> BoundingPolygon:
    """Alpha-shape boundary of a pixel set as one clockwise simple polygon.

    Triangles of the Delaunay triangulation with circumradius < 1/alpha are
    kept (alpha <= 0 keeps everything, i.e. the convex hull); the boundary of
    the kept complex is assembled and the largest component returned, with
    ``multi_component`` set when detached components were discarded.
    Degenerate input (collinear / fewer than 3 points) falls back to a
    1-px-dilated oriented rectangle, flagged ``degenerate``.
    """
    from shapely.geometry import MultiLineString
    from shapely.ops import polygonize

    pts = np.unique(np.asarray(pixels, dtype=np.float64), axis=0)
    if pts.shape[0] < 3:
        return _oriented_rect_fallback(pts)
    try:
        tri = Delaunay(pts)
    except QhullError:
        return _oriented_rect_fallback(pts)

    simplices = tri.simplices
    tpts = pts[simplices]
    a = np.linalg.norm(tpts[:, 0] - tpts[:, 1], axis=1)
    b = np.linalg.norm(tpts[:, 1] - tpts[:, 2], axis=1)
    c = np.linalg.norm(tpts[:, 2] - tpts[:, 0], axis=1)
    s = (a + b + c) / 2.0
    area_sq = np.maximum(s * (s - a) * (s - b) * (s - c), 0.0)
    areas = np.sqrt(area_sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        circum = np.where(areas > 0, a * b * c / (4.0 * areas), np.inf)
    if alpha <= 0.0:
        kept = areas > 0
    else:
        kept = (circum < 1.0 / alpha) & (areas > 0)
    if not kept.any():
        return _oriented_rect_fallback(pts)

    edge_count: dict[tuple[int, int], int] = {}
    for simplex in simplices[kept]:
        i, j, k = sorted(int(v) for v in simplex)
        for e in ((i, j), (j, k), (i, k)):
            edge_count[e] = edge_count.get(e, 0) + 1
    boundary = [(tuple(pts[i]), tuple(pts[j]))
                for (i, j), n in edge_count.items() if n == 1]
    polys = list(polygonize(MultiLineString(boundary)))
    if not polys:
        return _oriented_rect_fallback(pts)
    largest = max(polys, key=lambda p: p.area)
    multi = any(p is not largest and not largest.contains(p.representative_point())
                for p in polys)
    return BoundingPolygon.from_ring(list(largest.exterior.coords),
                                     multi_component=multi)


def _densify_ring(ring: list[Point], spacing: float) -> np.ndarray:
    samples: list[Point] = []
    n = len(ring)
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        length = math.hypot(bx - ax, by - ay)
        steps = max(1, math.ceil(length / spacing))
        for k in range(steps):
            t = k / steps
            samples.append((ax + t * (bx - ax), ay + t * (by - ay)))
    return np.array(samples)


def compute_raw_centerline(polygon: BoundingPolygon,
                           interpolation_distance: float = DEFAULT_INTERPOLATION_DISTANCE,
                           ) -> Skeleton:
    """Voronoi skeleton of the polygon: the boundary is densified at the
    interpolation distance and Voronoi edges fully interior to the polygon
    are kept.  Smaller distances give more detail (and more branches)."""
    import shapely
    from shapely.geometry import Polygon as ShapelyPolygon

    if interpolation_distance <= 0:
        raise ValueError("interpolation distance must be positive")
    samples = _densify_ring(list(polygon.vertices), interpolation_distance)
    if samples.shape[0] < 4:
        return Skeleton(segments=(), polygon=polygon,
                        interpolation_distance=interpolation_distance, too_thin=True)
    shell = ShapelyPolygon(polygon.vertices)
    if not shell.is_valid:
        shell = shell.buffer(0)
    try:
        vor = Voronoi(samples)
    except QhullError:
        return Skeleton(segments=(), polygon=polygon,
                        interpolation_distance=interpolation_distance, too_thin=True)

    verts = vor.vertices
    if verts.size:
        inside = shapely.contains_xy(shell, verts[:, 0], verts[:, 1])
    else:
        inside = np.zeros(0, dtype=bool)
    segments = []
    for v0, v1 in vor.ridge_vertices:
        if v0 < 0 or v1 < 0:
            continue
        if inside[v0] and inside[v1]:
            a = (float(verts[v0, 0]), float(verts[v0, 1]))
            b = (float(verts[v1, 0]), float(verts[v1, 1]))
            if a != b:
                segments.append((a, b))
    return Skeleton(segments=tuple(segments), polygon=polygon,
                    interpolation_distance=interpolation_distance,
                    too_thin=not segments)


def fit_centerline(raw: Skeleton, sample_step: float = 5.0) -> Centerline:
    """Least-squares cubic through the skeleton points.

    The independent variable is the axis with the larger coordinate range
    (ties go to x); the fitted curve is sampled at fixed arc steps across the
    skeleton's extent and clipped to the polygon.  Fewer than 4 distinct
    points reduce the fit degree, flagged ``reduced_degree``.
    """
    import shapely
    from shapely.geometry import Polygon as ShapelyPolygon

    pts = raw.points()
    if pts.shape[0] == 0:
        raise ValueError("cannot fit a centerline on an empty skeleton")
    x_var = float(pts[:, 0].max() - pts[:, 0].min())
    y_var = float(pts[:, 1].max() - pts[:, 1].min())
    axis = "x" if x_var >= y_var else "y"
    if axis == "x":
        t, u = pts[:, 0], pts[:, 1]
    else:
        t, u = pts[:, 1], pts[:, 0]

    n_distinct = np.unique(t).size
    degree = min(3, max(1, min(pts.shape[0], n_distinct) - 1))
    poly = np.polynomial.Polynomial.fit(t, u, degree)

    t0, t1 = float(t.min()), float(t.max())
    dense_t = np.linspace(t0, t1, 512)
    dense_u = poly(dense_t)
    if axis == "x":
        dense = np.column_stack([dense_t, dense_u])
    else:
        dense = np.column_stack([dense_u, dense_t])
    seg = np.hypot(np.diff(dense[:, 0]), np.diff(dense[:, 1]))
    arclen = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(arclen[-1])
    n_samples = max(2, int(math.ceil(total / sample_step)) + 1)
    targets = np.linspace(0.0, total, n_samples)
    sample_t = np.interp(targets, arclen, dense_t)
    sample_t = np.unique(sample_t)
    sample_u = poly(sample_t)
    if axis == "x":
        samples = np.column_stack([sample_t, sample_u])
    else:
        samples = np.column_stack([sample_u, sample_t])

    shell = ShapelyPolygon(raw.polygon.vertices)
    if not shell.is_valid:
        shell = shell.buffer(0)
    keep = shapely.intersects_xy(shell, samples[:, 0], samples[:, 1])
    clipped = samples[keep]
    if clipped.shape[0] < 2:
        clipped = samples  # curve left the polygon almost everywhere
    points = tuple((float(px), float(py)) for px, py in clipped)
    return Centerline(points=points, axis=axis, reduced_degree=degree < 3)


def local_height(pixels: np.ndarray, extent: tuple[int, int]) -> float:
    """Max of the Euclidean distance transform over the foreground set:
    h = max_f min_b ||f - b||, background = extent pixels not in the set."""
    pts = np.asarray(pixels, dtype=np.int64)
    if pts.size == 0:
        raise ValueError("foreground is empty")
    w, h = extent
    pad = 2
    x0 = max(0, int(pts[:, 0].min()) - pad)
    y0 = max(0, int(pts[:, 1].min()) - pad)
    x1 = min(w - 1, int(pts[:, 0].max()) + pad)
    y1 = min(h - 1, int(pts[:, 1].max()) + pad)
    mask = np.zeros((y1 - y0 + 1 + 2 * pad, x1 - x0 + 1 + 2 * pad), dtype=bool)
    mask[pts[:, 1] - y0 + pad, pts[:, 0] - x0 + pad] = True
    # Cells of the working window that fall outside the image extent are not
    # valid background; mark them foreground so they never attract the EDT.
    if y0 == 0:
        mask[:pad, :] |= True
    if x0 == 0:
        mask[:, :pad] |= True
    if y1 == h - 1:
        mask[-pad:, :] |= True
    if x1 == w - 1:
        mask[:, -pad:] |= True
    if mask.all():
        raise ValueError("background is empty")
    dist = distance_transform_edt(mask)
    fg_dist = dist[pts[:, 1] - y0 + pad, pts[:, 0] - x0 + pad]
    return float(fg_dist.max())


def polygon_pixels(polygon: BoundingPolygon, extent: tuple[int, int]) -> np.ndarray:
    """Rasterize the polygon interior into (x, y) pixel coordinates (the
    binarized mask M of the annotation pipeline)."""
    from PIL import Image, ImageDraw

    w, h = extent
    im = Image.new("1", (w, h), 0)
    draw = ImageDraw.Draw(im)
    draw.polygon([(p[0], p[1]) for p in polygon.vertices], fill=1)
    mask = np.asarray(im, dtype=bool)
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs, ys]).astype(np.int64)


def _resample_polyline(pts: np.ndarray, n: int) -> np.ndarray:
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    arclen = np.concatenate([[0.0], np.cumsum(seg)])
    total = arclen[-1]
    if total == 0.0:
        return pts[[0, -1]]
    targets = np.linspace(0.0, total, n)
    xs = np.interp(targets, arclen, pts[:, 0])
    ys = np.interp(targets, arclen, pts[:, 1])
    return np.column_stack([xs, ys])


def reconstruct_polygon(centerline: Centerline, h: float,
                        n_samples: int = 12) -> BoundingPolygon:
    """Ribbon polygon from a centerline and local height.

    The centerline is downsampled, both ends are extended by h along the
    local direction, and perpendicular half-length-h segments at each
    cross-section are joined into a closed clockwise polygon.  Collinear
    vertices are pruned, so a straight centerline yields a plain rectangle.
    """
    from shapely.geometry import Polygon as ShapelyPolygon

    if h <= 0:
        raise ValueError("local height must be positive")
    pts = _resample_polyline(np.asarray(centerline.points, dtype=np.float64),
                             max(2, n_samples))
    dirs = np.diff(pts, axis=0)
    norms = np.hypot(dirs[:, 0], dirs[:, 1])
    norms[norms == 0] = 1.0
    dirs = dirs / norms[:, None]

    sections: list[tuple[np.ndarray, np.ndarray]] = []
    start = pts[0] - h * dirs[0]
    sections.append((start, dirs[0]))
    mids = (pts[:-1] + pts[1:]) / 2.0
    for mid, d in zip(mids, dirs):
        sections.append((mid, d))
    end = pts[-1] + h * dirs[-1]
    sections.append((end, dirs[-1]))

    lefts, rights = [], []
    for center, d in sections:
        n = np.array([-d[1], d[0]])
        lefts.append(center + h * n)
        rights.append(center - h * n)
    ring = [(float(p[0]), float(p[1])) for p in lefts] \
        + [(float(p[0]), float(p[1])) for p in reversed(rights)]
    ring = geom.prune_collinear(ring, tol=1e-6)
    shape = ShapelyPolygon(ring)
    return BoundingPolygon.from_ring(ring, self_intersecting=not shape.is_simple)


def annotate_label(colored: TileImage, color_index: int, transcription: str,
                   alpha: float = DEFAULT_ALPHA,
                   interpolation_distance: float = DEFAULT_INTERPOLATION_DISTANCE,
                   color_map: ColorIndexMap | None = None,
                   overflow: bool = False) -> AnnotationRecord:
    """Full annotation for one label on the colored layer."""
    pixels = extract_label_pixels(colored, color_index, color_map)
    polygon = concave_hull(pixels, alpha)
    extent = (colored.width, colored.height)
    region = polygon_pixels(polygon, extent)
    if region.size == 0:
        region = pixels
    h = local_height(region, extent)
    skeleton = compute_raw_centerline(polygon, interpolation_distance)
    if skeleton.is_empty:
        centerline = _fallback_centerline(polygon)
    else:
        centerline = fit_centerline(skeleton)
    return AnnotationRecord(
        label_id=color_index,
        transcription=transcription,
        polygon=polygon,
        centerline=centerline,
        local_height=h,
        flags={
            "multi_component": polygon.multi_component,
            "self_intersecting": polygon.self_intersecting,
            "overflow": overflow,
        },
    )


def _fallback_centerline(polygon: BoundingPolygon) -> Centerline:
    """Midline of the bounding box along its longer side (used when the
    polygon is too thin for a Voronoi skeleton)."""
    x0, y0, x1, y1 = polygon.bounds()
    if (x1 - x0) >= (y1 - y0):
        cy = (y0 + y1) / 2.0
        return Centerline(points=((x0, cy), (x1, cy)), axis="x",
                          reduced_degree=True)
    cx = (x0 + x1) / 2.0
    return Centerline(points=((cx, y0), (cx, y1)), axis="y", reduced_degree=True)


def overlay_annotations(scene: TileImage, records: list[AnnotationRecord]) -> TileImage:
    """Debug overlay: bounding polygons in blue, centerlines in red."""
    from PIL import Image, ImageDraw

    im = Image.fromarray(scene.pixels, mode="RGBA").copy()
    draw = ImageDraw.Draw(im)
    for rec in records:
        ring = list(rec.polygon.vertices) + [rec.polygon.vertices[0]]
        draw.line([(p[0], p[1]) for p in ring], fill=(0, 0, 255, 255), width=1)
        draw.line([(p[0], p[1]) for p in rec.centerline.points],
                  fill=(255, 0, 0, 255), width=1)
    px = np.asarray(im, dtype=np.uint8).copy()
    return TileImage(scene.width, scene.height, px, scene.address)
