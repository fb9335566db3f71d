"""Planar geometry primitives for link classification and ray construction.

Coordinates are meters in a local planar projection.  All predicates use an
absolute tolerance of 1e-9 m.  Every type is immutable and every operation is
a pure function, so the module is safe for concurrent readers.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Optional

EPS = 1e-9


class Point2(NamedTuple):
    x: float
    y: float


class Segment2(NamedTuple):
    a: Point2
    b: Point2

    @property
    def length(self) -> float:
        return math.hypot(self.b.x - self.a.x, self.b.y - self.a.y)

    def point_at(self, t: float) -> Point2:
        return Point2(self.a.x + t * (self.b.x - self.a.x),
                      self.a.y + t * (self.b.y - self.a.y))


def _cross(ox: float, oy: float, ax: float, ay: float, bx: float, by: float) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _dist_point_segment(p: Point2, a: Point2, b: Point2) -> float:
    dx, dy = b.x - a.x, b.y - a.y
    dd = dx * dx + dy * dy
    if dd <= EPS * EPS:
        return math.hypot(p.x - a.x, p.y - a.y)
    t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / dd
    t = min(1.0, max(0.0, t))
    return math.hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy))


def _segments_touch(a: Point2, b: Point2, c: Point2, d: Point2) -> bool:
    """True when segments ab and cd share any point (within tolerance)."""
    d1 = _cross(c.x, c.y, d.x, d.y, a.x, a.y)
    d2 = _cross(c.x, c.y, d.x, d.y, b.x, b.y)
    d3 = _cross(a.x, a.y, b.x, b.y, c.x, c.y)
    d4 = _cross(a.x, a.y, b.x, b.y, d.x, d.y)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
       ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    return (_dist_point_segment(a, c, d) < EPS or _dist_point_segment(b, c, d) < EPS
            or _dist_point_segment(c, a, b) < EPS or _dist_point_segment(d, a, b) < EPS)


class Polygon2:
    """Simple closed polygon, vertices normalized to counterclockwise order.

    Rejects rings with fewer than 3 distinct vertices, near-zero area, or
    self-intersections.
    """

    __slots__ = ("vertices", "_area", "_centroid", "_bounds")

    def __init__(self, vertices):
        pts = [Point2(float(x), float(y)) for x, y in vertices]
        if len(pts) >= 2 and math.hypot(pts[0].x - pts[-1].x, pts[0].y - pts[-1].y) < EPS:
            pts = pts[:-1]  # accept explicitly closed rings
        if len(pts) < 3:
            raise ValueError("degenerate polygon: fewer than 3 distinct vertices")
        for p in pts:
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ValueError("degenerate polygon: non-finite vertex")
        signed = 0.0
        n = len(pts)
        for i in range(n):
            j = (i + 1) % n
            signed += pts[i].x * pts[j].y - pts[j].x * pts[i].y
        signed *= 0.5
        if abs(signed) < EPS:
            raise ValueError("degenerate polygon: zero area")
        if signed < 0.0:
            pts.reverse()
            signed = -signed
        for i in range(n):
            a, b = pts[i], pts[(i + 1) % n]
            if math.hypot(b.x - a.x, b.y - a.y) < EPS:
                raise ValueError("degenerate polygon: zero-length edge")
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_touch(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                    raise ValueError("self-intersecting polygon")
        self.vertices = tuple(pts)
        self._area = signed
        cx = cy = 0.0
        for i in range(n):
            j = (i + 1) % n
            w = pts[i].x * pts[j].y - pts[j].x * pts[i].y
            cx += (pts[i].x + pts[j].x) * w
            cy += (pts[i].y + pts[j].y) * w
        self._centroid = Point2(cx / (6.0 * signed), cy / (6.0 * signed))
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        self._bounds = (min(xs), min(ys), max(xs), max(ys))

    @property
    def area(self) -> float:
        return self._area

    @property
    def centroid(self) -> Point2:
        return self._centroid

    @property
    def bounds(self):
        """(min_x, min_y, max_x, max_y)"""
        return self._bounds

    def edges(self):
        n = len(self.vertices)
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]

    def on_boundary(self, p: Point2) -> bool:
        return any(_dist_point_segment(p, a, b) < EPS for a, b in self.edges())

    def contains_interior(self, p: Point2) -> bool:
        """Strictly inside: boundary points do not count."""
        if not (self._bounds[0] - EPS <= p.x <= self._bounds[2] + EPS
                and self._bounds[1] - EPS <= p.y <= self._bounds[3] + EPS):
            return False
        if self.on_boundary(p):
            return False
        inside = False
        n = len(self.vertices)
        for i in range(n):
            a, b = self.vertices[i], self.vertices[(i + 1) % n]
            if (a.y > p.y) != (b.y > p.y):
                x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
                if p.x < x_cross:
                    inside = not inside
        return inside

    def __repr__(self):
        return f"Polygon2({len(self.vertices)} vertices, area={self._area:.3f})"


class Ellipse2(NamedTuple):
    """Ellipse given by its two foci and the major-diameter length."""
    focus_a: Point2
    focus_b: Point2
    major_diameter: float

    @property
    def focal_distance(self) -> float:
        return math.hypot(self.focus_b.x - self.focus_a.x, self.focus_b.y - self.focus_a.y)


class IntersectionResult(NamedTuple):
    intersects: bool
    inside_length: float
    intervals: tuple  # ((t0, t1), ...) parameter spans of seg inside the polygon


def _crossing_params(seg: Segment2, a: Point2, b: Point2, seg_len: float):
    """Parameters t on seg where it meets edge ab, including collinear overlap ends."""
    r_x, r_y = seg.b.x - seg.a.x, seg.b.y - seg.a.y
    s_x, s_y = b.x - a.x, b.y - a.y
    denom = r_x * s_y - r_y * s_x
    qp_x, qp_y = a.x - seg.a.x, a.y - seg.a.y
    eps_t = EPS / max(seg_len, EPS)
    if abs(denom) > EPS * max(1.0, seg_len):
        t = (qp_x * s_y - qp_y * s_x) / denom
        u = (qp_x * r_y - qp_y * r_x) / denom
        if -eps_t <= t <= 1.0 + eps_t and -1e-12 <= u <= 1.0 + 1e-12:
            return [min(1.0, max(0.0, t))]
        return []
    if abs(qp_x * r_y - qp_y * r_x) > EPS * max(1.0, seg_len):
        return []  # parallel, not collinear
    rr = r_x * r_x + r_y * r_y
    if rr <= 0.0:
        return []
    t0 = (qp_x * r_x + qp_y * r_y) / rr
    t1 = t0 + (s_x * r_x + s_y * r_y) / rr
    lo, hi = min(t0, t1), max(t0, t1)
    lo, hi = max(0.0, lo), min(1.0, hi)
    return [lo, hi] if lo <= hi else []


def segment_polygon_intersection(seg: Segment2, poly: Polygon2) -> IntersectionResult:
    """Clip seg against poly's interior.

    inside_length sums the portions of seg strictly inside the polygon;
    contact that merely grazes the boundary (zero interior length) reports
    intersects=False so that shared map vertices never flip a link state.
    """
    if not isinstance(poly, Polygon2):
        raise ValueError("degenerate polygon")
    seg_len = seg.length
    if seg_len < EPS:
        raise ValueError("degenerate segment")
    ts = {0.0, 1.0}
    for a, b in poly.edges():
        for t in _crossing_params(seg, a, b, seg_len):
            ts.add(t)
    order = sorted(ts)
    inside_length = 0.0
    intervals = []
    for i in range(len(order) - 1):
        t0, t1 = order[i], order[i + 1]
        if t1 - t0 <= 1e-12:
            continue
        mid = seg.point_at(0.5 * (t0 + t1))
        if poly.contains_interior(mid):
            inside_length += (t1 - t0) * seg_len
            if intervals and abs(intervals[-1][1] - t0) < 1e-12:
                intervals[-1] = (intervals[-1][0], t1)
            else:
                intervals.append((t0, t1))
    return IntersectionResult(inside_length > EPS, inside_length, tuple(intervals))


def ellipse_contains(e: Ellipse2, p: Point2) -> bool:
    """Focal-sum membership test: |p-A| + |p-B| <= major diameter."""
    s = (math.hypot(p.x - e.focus_a.x, p.y - e.focus_a.y)
         + math.hypot(p.x - e.focus_b.x, p.y - e.focus_b.y))
    return s <= e.major_diameter + EPS


def ellipse_area(e: Ellipse2) -> float:
    r = e.major_diameter
    d = e.focal_distance
    if r <= d:
        return 0.0
    return math.pi * r * math.sqrt(r * r - d * d) / 4.0


def ellipse_bounds(e: Ellipse2):
    """Axis-aligned bounding box (min_x, min_y, max_x, max_y)."""
    r = e.major_diameter
    d = e.focal_distance
    cx = 0.5 * (e.focus_a.x + e.focus_b.x)
    cy = 0.5 * (e.focus_a.y + e.focus_b.y)
    a = 0.5 * r
    b = 0.5 * math.sqrt(max(0.0, r * r - d * d))
    if d < EPS:
        return (cx - a, cy - a, cx + a, cy + a)
    ux = (e.focus_b.x - e.focus_a.x) / d
    uy = (e.focus_b.y - e.focus_a.y) / d
    hx = math.sqrt(a * a * ux * ux + b * b * uy * uy)
    hy = math.sqrt(a * a * uy * uy + b * b * ux * ux)
    return (cx - hx, cy - hy, cx + hx, cy + hy)


def fresnel_radius(d1: float, d2: float, wavelength: float) -> float:
    """First-Fresnel-zone radius at a point splitting the path into d1 + d2."""
    if d1 <= 0.0 or d2 <= 0.0:
        return 0.0
    return math.sqrt(wavelength * d1 * d2 / (d1 + d2))


def mirror_point(p: Point2, wall: Segment2) -> Point2:
    dx, dy = wall.b.x - wall.a.x, wall.b.y - wall.a.y
    dd = dx * dx + dy * dy
    if dd <= EPS * EPS:
        raise ValueError("wall has zero length")
    t = ((p.x - wall.a.x) * dx + (p.y - wall.a.y) * dy) / dd
    fx, fy = wall.a.x + t * dx, wall.a.y + t * dy
    return Point2(2.0 * fx - p.x, 2.0 * fy - p.y)


def specular_reflection_point(tx: Point2, rx: Point2, wall: Segment2) -> Optional[Point2]:
    """Image-method reflection point on the finite wall, or None.

    None when tx/rx sit on opposite sides of (or on) the wall line, or when
    the image ray meets the line outside the wall segment.
    """
    side_tx = _cross(wall.a.x, wall.a.y, wall.b.x, wall.b.y, tx.x, tx.y)
    side_rx = _cross(wall.a.x, wall.a.y, wall.b.x, wall.b.y, rx.x, rx.y)
    scale = max(wall.length, EPS)
    if side_tx * side_rx <= 0.0 or abs(side_tx) < EPS * scale or abs(side_rx) < EPS * scale:
        return None
    img = mirror_point(tx, wall)
    r_x, r_y = rx.x - img.x, rx.y - img.y
    s_x, s_y = wall.b.x - wall.a.x, wall.b.y - wall.a.y
    denom = r_x * s_y - r_y * s_x
    if abs(denom) < EPS:
        return None
    qp_x, qp_y = wall.a.x - img.x, wall.a.y - img.y
    u = (qp_x * r_y - qp_y * r_x) / denom
    eps_u = EPS / scale
    if u < -eps_u or u > 1.0 + eps_u:
        return None
    u = min(1.0, max(0.0, u))
    return Point2(wall.a.x + u * s_x, wall.a.y + u * s_y)


def polygon_area(poly: Polygon2) -> float:
    return poly.area


def oriented_rectangle(center: Point2, heading: float, length: float, width: float) -> Polygon2:
    """Footprint of a vehicle: rectangle centered at `center`, long axis along `heading`."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    corners = []
    for lx, ly in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        corners.append((center.x + lx * c - ly * s, center.y + lx * s + ly * c))
    return Polygon2(corners)
