"""Collision-free label placement over scene pixel space.

Mirrors the observable behaviour of a PAL-style engine: point labels get 8
compass candidates around the point (right of the point preferred), line
labels hug the path tangent centred on the arclength midpoint, area labels
sit on an interior representative point, and a greedy priority pass keeps
accepted footprints pairwise interior-disjoint.

All inputs are in scene pixel coordinates (callers project lon/lat before
placement).  Anchors use the glyph's baseline advance-midpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from maptext import geom
from maptext.geodata import FontSpec
from maptext.glyphs import GlyphProvider, tofu_glyph

Point = tuple[float, float]
Quad = tuple[Point, Point, Point, Point]

# Interior overlap below this area (px^2) counts as disjoint.
CLIP_EPS = 1e-7

POINT_OFFSET_ORDER = ("E", "NE", "SE", "N", "S", "NW", "SW", "W")


@dataclass(frozen=True)
class GlyphPose:
    char: str
    anchor: Point  # baseline midpoint of the glyph's advance
    rotation_rad: float
    advance_px: float

    def __post_init__(self):
        if not (-math.pi < self.rotation_rad <= math.pi):
            raise ValueError(f"rotation {self.rotation_rad} outside (-pi, pi]")


@dataclass(frozen=True)
class PlacedLabel:
    feature_id: str
    text: str
    font: FontSpec
    poses: tuple[GlyphPose, ...]
    priority: int
    footprint: tuple[Quad, ...]  # per-glyph convex boxes (+ anchor box for points)
    color_index: int = 0  # assigned per scene after collision resolution
    overflow: bool = False


@dataclass
class TextMetrics:
    advances: list[float]
    ascent: float
    descent: float

    @property
    def width(self) -> float:
        return sum(self.advances)

    @property
    def height(self) -> float:
        return self.ascent + self.descent


def text_metrics(text: str, font: FontSpec, provider: GlyphProvider,
                 letter_spacing: float = 1.0) -> TextMetrics:
    ascent, descent = provider.line_metrics(font.size_pt)
    advances = []
    for ch in text:
        g = provider.glyph(ch, font.size_pt)
        if g is None:
            g = tofu_glyph(font.size_pt)
        advances.append(g.advance * letter_spacing)
    return TextMetrics(advances=advances, ascent=ascent, descent=descent)


def _glyph_quad(anchor: Point, rotation: float, advance: float,
                ascent: float, descent: float) -> Quad:
    hx = advance / 2.0
    corners = ((-hx, -ascent), (hx, -ascent), (hx, descent), (-hx, descent))
    if rotation == 0.0:
        return tuple((anchor[0] + cx, anchor[1] + cy) for cx, cy in corners)
    return tuple(geom.rotate_about((anchor[0] + cx, anchor[1] + cy), anchor, rotation)
                 for cx, cy in corners)


def _horizontal_label(feature_id: str, text: str, font: FontSpec,
                      metrics: TextMetrics, left: float, baseline: float,
                      extra_quads: tuple[Quad, ...] = (),
                      overflow: bool = False) -> PlacedLabel:
    poses = []
    quads = []
    pen = left
    for ch, adv in zip(text, metrics.advances):
        anchor = (pen + adv / 2.0, baseline)
        poses.append(GlyphPose(char=ch, anchor=anchor, rotation_rad=0.0,
                               advance_px=adv))
        quads.append(_glyph_quad(anchor, 0.0, adv, metrics.ascent, metrics.descent))
        pen += adv
    return PlacedLabel(feature_id=feature_id, text=text, font=font,
                       poses=tuple(poses), priority=font.priority,
                       footprint=tuple(quads) + extra_quads, overflow=overflow)


def _quads_in_canvas(quads, canvas: tuple[float, float]) -> bool:
    w, h = canvas
    return all(0.0 <= x <= w and 0.0 <= y <= h for quad in quads for x, y in quad)


def place_point_label(feature_id: str, text: str, point: Point, font: FontSpec,
                      provider: GlyphProvider, canvas: tuple[float, float],
                      letter_spacing: float = 1.0, gap: float = 2.0,
                      ) -> list[PlacedLabel]:
    """Candidates at 8 compass offsets around the point, E first.

    Every candidate's footprint carries a small anchor box on the point
    itself, so alternative placements of co-located labels exclude each
    other; the anchor box is exempt from the canvas-containment filter.
    """
    m = text_metrics(text, font, provider, letter_spacing)
    if m.width > canvas[0]:
        return []
    px, py = point
    w = m.width
    centered = py + (m.ascent - m.descent) / 2.0
    positions = {
        "E": (px + gap, centered),
        "W": (px - gap - w, centered),
        "N": (px - w / 2.0, py - gap - m.descent),
        "S": (px - w / 2.0, py + gap + m.ascent),
        "NE": (px + gap, py - gap - m.descent),
        "NW": (px - gap - w, py - gap - m.descent),
        "SE": (px + gap, py + gap + m.ascent),
        "SW": (px - gap - w, py + gap + m.ascent),
    }
    a = max(gap, 1.0)
    anchor_box: Quad = ((px - a, py - a), (px + a, py - a),
                        (px + a, py + a), (px - a, py + a))
    out = []
    for name in POINT_OFFSET_ORDER:
        left, baseline = positions[name]
        label = _horizontal_label(feature_id, text, font, m, left, baseline,
                                  extra_quads=(anchor_box,))
        if _quads_in_canvas(label.footprint[:-1], canvas):
            out.append(label)
    return out


class _PathWalker:
    """Arclength lookup over a polyline."""

    def __init__(self, pts: list[Point]):
        self.pts = pts
        self.cum = [0.0]
        for a, b in zip(pts, pts[1:]):
            self.cum.append(self.cum[-1] + math.hypot(b[0] - a[0], b[1] - a[1]))

    @property
    def length(self) -> float:
        return self.cum[-1]

    def at(self, s: float) -> tuple[Point, float]:
        """Point and tangent angle at arclength s (clamped to the path)."""
        s = min(max(s, 0.0), self.length)
        lo, hi = 0, len(self.cum) - 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if self.cum[mid] <= s:
                lo = mid
            else:
                hi = mid
        a, b = self.pts[lo], self.pts[lo + 1]
        seg = self.cum[lo + 1] - self.cum[lo]
        t = 0.0 if seg == 0.0 else (s - self.cum[lo]) / seg
        p = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
        angle = math.atan2(b[1] - a[1], b[0] - a[0])
        return p, geom.normalize_angle(angle)


def place_line_label(feature_id: str, text: str, parts: list[list[Point]],
                     font: FontSpec, provider: GlyphProvider,
                     canvas: tuple[float, float], letter_spacing: float = 1.0,
                     ) -> list[PlacedLabel]:
    """One candidate: glyphs on the longest part, centred about its
    arclength midpoint, rotated to the local tangent.  Paths whose mean
    tangent points leftward are traversed in reverse so text reads
    left-to-right."""
    m = text_metrics(text, font, provider, letter_spacing)
    best: list[Point] | None = None
    best_len = -1.0
    for part in parts:
        walker = _PathWalker(list(part))
        if walker.length > best_len:
            best_len = walker.length
            best = list(part)
    if best is None or best_len < m.width:
        return []
    if best[-1][0] - best[0][0] < 0.0:  # mean tangent points leftward
        best = best[::-1]
    walker = _PathWalker(best)

    s = walker.length / 2.0 - m.width / 2.0
    poses = []
    quads = []
    for ch, adv in zip(text, m.advances):
        center_s = s + adv / 2.0
        anchor, angle = walker.at(center_s)
        poses.append(GlyphPose(char=ch, anchor=anchor, rotation_rad=angle,
                               advance_px=adv))
        quads.append(_glyph_quad(anchor, angle, adv, m.ascent, m.descent))
        s += adv
    label = PlacedLabel(feature_id=feature_id, text=text, font=font,
                        poses=tuple(poses), priority=font.priority,
                        footprint=tuple(quads))
    if not _quads_in_canvas(label.footprint, canvas):
        return []
    return [label]


def place_area_label(feature_id: str, text: str,
                     polygons: list[list[list[Point]]], font: FontSpec,
                     provider: GlyphProvider, canvas: tuple[float, float],
                     letter_spacing: float = 1.0) -> list[PlacedLabel]:
    """Horizontal candidates on the largest ring's representative interior
    point, with one-line vertical offsets as fallbacks.  A label larger than
    its polygon is still produced, flagged ``overflow``."""
    from shapely.geometry import Polygon as ShapelyPolygon
    from shapely.geometry import box

    m = text_metrics(text, font, provider, letter_spacing)
    best_ring: list[Point] | None = None
    best_area = 0.0
    for rings in polygons:
        if not rings:
            continue
        area = geom.polygon_area(rings[0])
        if area > best_area:
            best_area = area
            best_ring = list(rings[0])
    if best_ring is None or best_area <= 0.0:
        return []
    shell = ShapelyPolygon(best_ring)
    if not shell.is_valid:
        shell = shell.buffer(0)
        if shell.is_empty:
            return []
        if shell.geom_type == "MultiPolygon":
            shell = max(shell.geoms, key=lambda g: g.area)
    rep = shell.representative_point()
    cx, cy = rep.x, rep.y

    out = []
    for dy in (0.0, -m.height, m.height):
        left = cx - m.width / 2.0
        baseline = cy + (m.ascent - m.descent) / 2.0 + dy
        rect = box(left, baseline - m.ascent, left + m.width, baseline + m.descent)
        overflow = not shell.contains(rect)
        label = _horizontal_label(feature_id, text, font, m, left, baseline,
                                  overflow=overflow)
        if _quads_in_canvas(label.footprint, canvas):
            out.append(label)
    return out


def _quad_bbox(q: Quad) -> tuple[float, float, float, float]:
    xs = [p[0] for p in q]
    ys = [p[1] for p in q]
    return (min(xs), min(ys), max(xs), max(ys))


def footprints_disjoint(a: PlacedLabel, b: PlacedLabel, eps: float = CLIP_EPS) -> bool:
    """True when the two footprints' interiors do not overlap."""
    for qa in a.footprint:
        ax0, ay0, ax1, ay1 = _quad_bbox(qa)
        for qb in b.footprint:
            bx0, by0, bx1, by1 = _quad_bbox(qb)
            if ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0:
                continue
            if geom.convex_intersection_area(qa, qb) >= eps:
                return False
    return True


def resolve_collisions(candidates: list[list[PlacedLabel]],
                       eps: float = CLIP_EPS) -> list[PlacedLabel]:
    """Greedy selection in priority order (Large, Medium, Small), feature id
    ascending within a priority class.  The first candidate whose footprint
    interior is disjoint from everything accepted wins; features with no
    acceptable candidate are dropped."""
    ordered = sorted(
        (lst for lst in candidates if lst),
        key=lambda lst: (lst[0].priority, lst[0].feature_id),
    )
    accepted: list[PlacedLabel] = []
    for options in ordered:
        for cand in options:
            if all(footprints_disjoint(cand, prev, eps) for prev in accepted):
                accepted.append(cand)
                break
    return accepted


def assign_color_indices(labels: list[PlacedLabel]) -> list[PlacedLabel]:
    """Stamp 1-based color indices in list order (unique per scene)."""
    return [replace(lab, color_index=i + 1) for i, lab in enumerate(labels)]


def dump_footprints(labels: list[PlacedLabel]) -> str:
    """Debug dump: one clockwise convex-hull polygon per accepted footprint,
    in the integer ``x1,y1,...,xn,yn,text`` line format."""
    from scipy.spatial import ConvexHull

    lines = []
    for lab in labels:
        pts = [p for quad in lab.footprint for p in quad]
        hull = ConvexHull(pts)
        ring = geom.ensure_clockwise([pts[i] for i in hull.vertices])
        coords = ",".join(f"{round(x)},{round(y)}" for x, y in ring)
        lines.append(f"{coords},{lab.text}")
    return "\n".join(lines) + ("\n" if lines else "")
