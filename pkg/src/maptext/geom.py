"""Small 2D helpers shared across placement and annotation.

Coordinates are image-style throughout the package: x grows right, y grows
down.  "Clockwise" always means clockwise as seen on screen, which under
y-down coordinates is the orientation with a positive shoelace sum.
"""

from __future__ import annotations

import math
from typing import Sequence

Point = tuple[float, float]


def shoelace_sum(vertices: Sequence[Point]) -> float:
    """Return sum(x_i*y_{i+1} - x_{i+1}*y_i) over the closed ring."""
    total = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return total


def polygon_area(vertices: Sequence[Point]) -> float:
    return abs(shoelace_sum(vertices)) / 2.0


def is_clockwise(vertices: Sequence[Point]) -> bool:
    """Screen-clockwise under y-down coordinates (positive shoelace sum)."""
    return shoelace_sum(vertices) > 0.0


def ensure_clockwise(vertices: Sequence[Point]) -> list[Point]:
    pts = [(float(x), float(y)) for x, y in vertices]
    if shoelace_sum(pts) < 0.0:
        pts.reverse()
    return pts


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


def rotate_about(p: Point, center: Point, angle_rad: float) -> Point:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    dx, dy = p[0] - center[0], p[1] - center[1]
    return (center[0] + c * dx - s * dy, center[1] + s * dx + c * dy)


def clip_convex(subject: Sequence[Point], clip: Sequence[Point]) -> list[Point]:
    """Sutherland-Hodgman: clip a polygon against a convex clip polygon.

    The clip polygon must be convex; the subject may be any polygon.  Both
    may wind in either direction.
    """
    clip_pts = list(clip)
    if shoelace_sum(clip_pts) < 0.0:
        clip_pts.reverse()

    def inside(p: Point, a: Point, b: Point) -> bool:
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0

    def intersect(p: Point, q: Point, a: Point, b: Point) -> Point:
        # Line ab crossed with segment pq; callers guarantee non-parallelism.
        dx1, dy1 = q[0] - p[0], q[1] - p[1]
        dx2, dy2 = b[0] - a[0], b[1] - a[1]
        denom = dx1 * dy2 - dy1 * dx2
        t = ((a[0] - p[0]) * dy2 - (a[1] - p[1]) * dx2) / denom
        return (p[0] + t * dx1, p[1] + t * dy1)

    output = list(subject)
    n = len(clip_pts)
    for i in range(n):
        if not output:
            break
        a, b = clip_pts[i], clip_pts[(i + 1) % n]
        inputs, output = output, []
        prev = inputs[-1]
        prev_in = inside(prev, a, b)
        for cur in inputs:
            cur_in = inside(cur, a, b)
            if cur_in:
                if not prev_in:
                    output.append(intersect(prev, cur, a, b))
                output.append(cur)
            elif prev_in:
                output.append(intersect(prev, cur, a, b))
            prev, prev_in = cur, cur_in
    return output


def convex_intersection_area(a: Sequence[Point], b: Sequence[Point]) -> float:
    """Intersection area of two convex polygons."""
    clipped = clip_convex(a, b)
    if len(clipped) < 3:
        return 0.0
    return polygon_area(clipped)


def prune_collinear(vertices: Sequence[Point], tol: float = 1e-9) -> list[Point]:
    """Drop vertices that sit on the segment joining their neighbours."""
    pts = [(float(x), float(y)) for x, y in vertices]
    # Remove consecutive duplicates first.
    dedup: list[Point] = []
    for p in pts:
        if not dedup or abs(p[0] - dedup[-1][0]) > tol or abs(p[1] - dedup[-1][1]) > tol:
            dedup.append(p)
    if len(dedup) > 1 and abs(dedup[0][0] - dedup[-1][0]) <= tol and abs(dedup[0][1] - dedup[-1][1]) <= tol:
        dedup.pop()
    if len(dedup) < 3:
        return dedup
    out: list[Point] = []
    n = len(dedup)
    for i in range(n):
        a, b, c = dedup[i - 1], dedup[i], dedup[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) > tol:
            out.append(b)
    return out if len(out) >= 3 else dedup
