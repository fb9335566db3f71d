"""Deterministic large-scale received power per link type.

Models
------
LOS     two-ray ground reflection with exact antenna heights and a fitted
        effective ground permittivity; evaluated as a coherent phasor sum.
NLOSv   knife-edge diffraction over obstructing-vehicle roofs plus around
        their left/right sides; multiple edges cascade with per-edge losses
        summed between neighboring edges (Epstein-Peterson).  The emitted
        power follows the dominant (least-loss) of the three paths.
NLOSb   single-bounce wall/vehicle reflections by the method of images and
        horizontal-plane knife-edge diffraction off convex building corners,
        coherently combined; the result is floored by a log-distance curve.
        Links blocked only by foliage instead take the LOS model minus a
        per-meter transmission loss.

All E-field phasors use the envelope convention: amplitude coefficient *
E0d0 / pathLength at phase -2*pi*pathLength/wavelength.  Powers are dBm.
"""
from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass

from .geom import EPS, Point2, Segment2, fresnel_radius, segment_polygon_intersection, \
    specular_reflection_point
from .linkclass import LinkRecord, LinkType, SUB_FOLIAGE_ONLY
from .scenario import RadioConfig, WorldState
from .sindex import Rect

log = logging.getLogger(__name__)

MODEL_TWO_RAY = "twoRay"
MODEL_NLOSV = "knifeEdgeNLOSv"
MODEL_NLOSB_RAYS = "raysNLOSb"
MODEL_LOG_DISTANCE = "logDistance"
MODEL_FOLIAGE = "foliage-augmented"

KIND_LOS = "LOS"
KIND_GROUND = "groundReflection"
KIND_WALL = "wallReflection"
KIND_VEHICLE_REFL = "vehicleReflection"
KIND_BUILDING_DIFF = "buildingDiffraction"
KIND_VEHICLE_TOP = "vehicleDiffractionTop"
KIND_VEHICLE_SIDE = "vehicleDiffractionSide"


@dataclass(frozen=True)
class Ray:
    kind: str
    path_length: float
    coefficient: float  # amplitude factor in [-1, 1]


@dataclass(frozen=True)
class PowerResult:
    large_scale_dbm: float
    rays: tuple
    model_used: str


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w * 1000.0)


def reference_field(tx_power_w: float) -> float:
    """E0*d0 of an isotropic radiator: free-space field at d0 = 1 m."""
    if tx_power_w <= 0.0:
        raise ValueError("transmit power must be > 0 W")
    return math.sqrt(30.0 * tx_power_w)


def reflection_coefficient_perp(grazing_angle: float, eps_r: float) -> float:
    """Perpendicular-polarization reflection coefficient; angle from the surface."""
    s = math.sin(grazing_angle)
    c = math.cos(grazing_angle)
    root = math.sqrt(max(0.0, eps_r - c * c))
    return (s - root) / (s + root)


def reflection_coefficient_par(grazing_angle: float, eps_r: float) -> float:
    """Parallel-polarization counterpart, kept for completeness."""
    s = math.sin(grazing_angle)
    c = math.cos(grazing_angle)
    root = math.sqrt(max(0.0, eps_r - c * c))
    return (eps_r * s - root) / (eps_r * s + root)


def antenna_gains_db(cfg: RadioConfig) -> float:
    return cfg.antenna_gain_tx_dbi + cfg.antenna_gain_rx_dbi


def two_ray_power(d2d: float, h_tx: float, h_rx: float, cfg: RadioConfig) -> PowerResult:
    """Coherent direct + ground-reflected field for an unobstructed path."""
    if d2d <= 0.0 or h_tx <= 0.0 or h_rx <= 0.0:
        raise ValueError("two-ray model needs d2d > 0 and positive antenna heights")
    lam = cfg.wavelength
    d_los = math.hypot(d2d, h_tx - h_rx)
    d_ground = math.hypot(d2d, h_tx + h_rx)
    grazing = math.atan2(h_tx + h_rx, d2d)
    r_ground = reflection_coefficient_perp(grazing, cfg.epsilon_r_ground)
    e0 = reference_field(dbm_to_watts(cfg.tx_power_dbm))
    e = (e0 / d_los * cmath.exp(-2j * math.pi * d_los / lam)
         + r_ground * e0 / d_ground * cmath.exp(-2j * math.pi * d_ground / lam))
    p_w = abs(e) ** 2 * lam ** 2 / (480.0 * math.pi ** 2)
    rays = (Ray(KIND_LOS, d_los, 1.0), Ray(KIND_GROUND, d_ground, r_ground))
    return PowerResult(watts_to_dbm(p_w) + antenna_gains_db(cfg), rays, MODEL_TWO_RAY)


def knife_edge_loss_single(v: float) -> float:
    """Knife-edge loss J(v), dB; 0 below the v = -0.78 validity bound."""
    if v <= -0.78:
        return 0.0
    return 6.9 + 20.0 * math.log10(math.sqrt((v - 0.1) ** 2 + 1.0) + v - 0.1)


def fresnel_nu(excess_h: float, d1: float, d2: float, wavelength: float) -> float:
    d1 = max(d1, 1e-6)
    d2 = max(d2, 1e-6)
    return excess_h * math.sqrt(2.0 * (d1 + d2) / (wavelength * d1 * d2))


def multiple_knife_edge_loss(edges, h_start: float, h_end: float,
                             span: float, wavelength: float) -> float:
    """Cascade loss over ordered edges [(position, tip height), ...], dB.

    Each edge's Fresnel parameter is taken between its neighboring edge tips
    (path endpoints for the outermost edges); the per-edge losses add up.
    Edges outside the open (0, span) interval cannot stand between the
    endpoints and are ignored.
    """
    pts = [(0.0, h_start)]
    pts += sorted((x, h) for x, h in edges if 0.0 < x < span)
    pts.append((span, h_end))
    total = 0.0
    for i in range(1, len(pts) - 1):
        x0, h0 = pts[i - 1]
        x1, h1 = pts[i]
        x2, h2 = pts[i + 1]
        d1 = max(x1 - x0, 1e-6)
        d2 = max(x2 - x1, 1e-6)
        line_h = h0 + (h2 - h0) * d1 / (d1 + d2)
        total += knife_edge_loss_single(fresnel_nu(h1 - line_h, d1, d2, wavelength))
    return total


def _polyline_length_3d(points) -> float:
    total = 0.0
    for (x0, y0, z0), (x1, y1, z1) in zip(points, points[1:]):
        total += math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2 + (z1 - z0) ** 2)
    return total


def nlosv_power(link: LinkRecord, state: WorldState, cfg: RadioConfig) -> PowerResult:
    """Received power for a vehicle-obstructed link.

    Three diffraction paths are built: over the obstructing roofs in the
    vertical plane, and around the outline corners protruding left/right of
    the Tx-Rx vertical plane.  The emitted power is the two-ray reference
    attenuated by the least of the three cascade losses.
    """
    if link.link_type is not LinkType.NLOSV:
        raise ValueError("nlosv_power requires an NLOSv link")
    if not link.obstructing_vehicle_ids:
        raise ValueError("NLOSv link without obstructing vehicles")
    tx = state.vehicle_by_id[link.tx_id]
    rx = state.vehicle_by_id[link.rx_id]
    a, b = tx.antenna_pos, rx.antenna_pos
    seg = Segment2(a, b)
    span = seg.length
    lam = cfg.wavelength
    h_tx, h_rx = tx.antenna_height, rx.antenna_height
    ux, uy = (b.x - a.x) / span, (b.y - a.y) / span

    top_edges = []
    left_edges = []
    right_edges = []
    for vid in link.obstructing_vehicle_ids:
        v = state.vehicle_by_id[vid]
        res = segment_polygon_intersection(seg, v.outline)
        if not res.intersects:
            continue
        t_mid = 0.5 * (res.intervals[0][0] + res.intervals[-1][1])
        top_edges.append((t_mid * span, v.height))
        for p in v.outline.vertices:
            along = (p.x - a.x) * ux + (p.y - a.y) * uy
            if not (0.0 < along < span):
                continue
            lateral = (p.y - a.y) * ux - (p.x - a.x) * uy
            if lateral > 1e-9:
                left_edges.append((along, lateral))
            elif lateral < -1e-9:
                right_edges.append((along, -lateral))

    loss_top = multiple_knife_edge_loss(top_edges, h_tx, h_rx, span, lam)
    loss_left = multiple_knife_edge_loss(left_edges, 0.0, 0.0, span, lam)
    loss_right = multiple_knife_edge_loss(right_edges, 0.0, 0.0, span, lam)

    def height_at(x):
        return h_tx + (h_rx - h_tx) * x / span

    top_pts = [(0.0, 0.0, h_tx)] + [(x, 0.0, h) for x, h in sorted(top_edges)] \
        + [(span, 0.0, h_rx)]
    left_pts = [(0.0, 0.0, h_tx)] + [(x, s, height_at(x)) for x, s in sorted(left_edges)] \
        + [(span, 0.0, h_rx)]
    right_pts = [(0.0, 0.0, h_tx)] + [(x, -s, height_at(x)) for x, s in sorted(right_edges)] \
        + [(span, 0.0, h_rx)]
    rays = (
        Ray(KIND_VEHICLE_TOP, _polyline_length_3d(top_pts), 10.0 ** (-loss_top / 20.0)),
        Ray(KIND_VEHICLE_SIDE, _polyline_length_3d(left_pts), 10.0 ** (-loss_left / 20.0)),
        Ray(KIND_VEHICLE_SIDE, _polyline_length_3d(right_pts), 10.0 ** (-loss_right / 20.0)),
    )
    base = two_ray_power(link.distance_2d, h_tx, h_rx, cfg)
    loss = min(loss_top, loss_left, loss_right)
    return PowerResult(base.large_scale_dbm - loss, rays, MODEL_NLOSV)


# ------------------------------------------------------------------ NLOSb rays

def _blocked_by_static(state, sub: Segment2) -> bool:
    if sub.length < EPS:
        return False
    for oid in state.static_tree.query_segment(sub):
        if segment_polygon_intersection(sub, state.static_by_id[oid].outline).intersects:
            return True
    return False


def _blocked_by_vehicles(state, link, legs, h_tx, h_rx, lam) -> bool:
    """Fresnel-clearance test along an unfolded multi-leg path."""
    total = sum(s.length for s in legs)
    offset = 0.0
    for sub in legs:
        sub_len = sub.length
        if sub_len < EPS:
            continue
        for vid in state.vehicle_tree.query_segment(sub):
            if vid == link.tx_id or vid == link.rx_id:
                continue
            v = state.vehicle_by_id[vid]
            res = segment_polygon_intersection(sub, v.outline)
            if not res.intersects:
                continue
            t_mid = 0.5 * (res.intervals[0][0] + res.intervals[-1][1])
            x = offset + t_mid * sub_len
            line_h = h_tx + (h_rx - h_tx) * x / total
            if v.height > line_h - 0.6 * fresnel_radius(x, total - x, lam):
                return True
        offset += sub_len
    return False


def _candidate_objects(state, ellipse):
    from .geom import ellipse_bounds, ellipse_contains
    region = Rect(*ellipse_bounds(ellipse))

    def in_ellipse(outline):
        if ellipse_contains(ellipse, outline.centroid):
            return True
        return any(ellipse_contains(ellipse, p) for p in outline.vertices)

    statics = [state.static_by_id[oid] for oid in sorted(state.static_tree.query_region(region))
               if in_ellipse(state.static_by_id[oid].outline)]
    vehicles = [state.vehicle_by_id[vid] for vid in sorted(state.vehicle_tree.query_region(region))
                if in_ellipse(state.vehicle_by_id[vid].outline)]
    return statics, vehicles


def nlosb_rays(link: LinkRecord, state: WorldState, cfg: RadioConfig):
    """Single-bounce ray set for a building-blocked link.

    Wall reflections come from building edges facing both endpoints, vehicle
    reflections from the long faces of vehicles taller than both antennas,
    and diffractions from convex building corners visible from both ends.
    Every sub-path must clear buildings/foliage outright and vehicles by the
    0.6-Fresnel-zone criterion.  The search is bounded by the NLOSb ellipse.
    """
    from .geom import Ellipse2
    tx = state.vehicle_by_id[link.tx_id]
    rx = state.vehicle_by_id[link.rx_id]
    a, b = tx.antenna_pos, rx.antenna_pos
    h_tx, h_rx = tx.antenna_height, rx.antenna_height
    lam = cfg.wavelength
    span = math.hypot(b.x - a.x, b.y - a.y)
    ellipse = Ellipse2(a, b, cfg.r_nlosb)
    statics, vehicles = _candidate_objects(state, ellipse)
    dh = h_rx - h_tx
    rays = []

    def try_reflection(wall: Segment2, eps_r: float, kind: str):
        pt = specular_reflection_point(a, b, wall)
        if pt is None:
            return
        leg1, leg2 = Segment2(a, pt), Segment2(pt, b)
        if leg1.length < EPS or leg2.length < EPS:
            return
        if _blocked_by_static(state, leg1) or _blocked_by_static(state, leg2):
            return
        if _blocked_by_vehicles(state, link, (leg1, leg2), h_tx, h_rx, lam):
            return
        wl = wall.length
        wx, wy = (wall.b.x - wall.a.x) / wl, (wall.b.y - wall.a.y) / wl
        l1 = leg1.length
        ix, iy = (pt.x - a.x) / l1, (pt.y - a.y) / l1
        grazing = math.asin(min(1.0, abs(ix * wy - iy * wx)))
        coeff = reflection_coefficient_perp(grazing, eps_r)
        unfolded = l1 + leg2.length
        rays.append(Ray(kind, math.hypot(unfolded, dh), coeff))

    for obj in statics:
        if obj.kind != "building":
            continue
        for wa, wb in obj.outline.edges():
            try_reflection(Segment2(wa, wb), cfg.epsilon_r_wall, KIND_WALL)

    for v in vehicles:
        if v.id == link.tx_id or v.id == link.rx_id:
            continue
        if not (v.height > h_tx and v.height > h_rx):
            continue
        for wa, wb in v.outline.edges():
            if abs(math.hypot(wb.x - wa.x, wb.y - wa.y) - v.length) < 1e-6:
                try_reflection(Segment2(wa, wb), cfg.epsilon_r_wall, KIND_VEHICLE_REFL)

    for obj in statics:
        if obj.kind != "building":
            continue
        verts = obj.outline.vertices
        n = len(verts)
        for i in range(n):
            prev, cur, nxt = verts[i - 1], verts[i], verts[(i + 1) % n]
            convex = ((cur.x - prev.x) * (nxt.y - cur.y)
                      - (cur.y - prev.y) * (nxt.x - cur.x)) > 0.0
            if not convex:
                continue
            ux, uy = (b.x - a.x) / span, (b.y - a.y) / span
            along = (cur.x - a.x) * ux + (cur.y - a.y) * uy
            if not (0.0 < along < span):
                continue
            leg1, leg2 = Segment2(a, cur), Segment2(cur, b)
            if leg1.length < EPS or leg2.length < EPS:
                continue
            if _blocked_by_static(state, leg1) or _blocked_by_static(state, leg2):
                continue
            if _blocked_by_vehicles(state, link, (leg1, leg2), h_tx, h_rx, lam):
                continue
            lateral = abs((cur.y - a.y) * ux - (cur.x - a.x) * uy)
            nu = fresnel_nu(lateral, along, span - along, lam)
            loss = knife_edge_loss_single(nu)
            unfolded = leg1.length + leg2.length
            rays.append(Ray(KIND_BUILDING_DIFF, math.hypot(unfolded, dh),
                            10.0 ** (-loss / 20.0)))
    return rays


def combine_e_field(rays, cfg: RadioConfig) -> float:
    """Envelope magnitude of the coherent phasor sum over the given rays."""
    if not rays:
        raise ValueError("cannot combine an empty ray list")
    lam = cfg.wavelength
    e0 = reference_field(dbm_to_watts(cfg.tx_power_dbm))
    total = 0j
    for ray in rays:
        total += ray.coefficient * e0 / ray.path_length \
            * cmath.exp(-2j * math.pi * ray.path_length / lam)
    return abs(total)


def field_to_power(e_mag: float, cfg: RadioConfig) -> float:
    """|E| (V/m) to received watts at the configured wavelength."""
    if e_mag < 0.0:
        raise ValueError("field magnitude must be >= 0")
    return e_mag ** 2 * cfg.wavelength ** 2 / (480.0 * math.pi ** 2)


def log_distance_power(d: float, cfg: RadioConfig) -> float:
    """Log-distance received power (dBm) with the configured exponent."""
    if d < 1.0:
        log.warning("log-distance model called with d=%.3f m < d0=1 m; clamping", d)
        d = 1.0
    pl = cfg.pl_d0 + 10.0 * cfg.gamma_nlosb * math.log10(d)
    return cfg.tx_power_dbm - pl + antenna_gains_db(cfg)


def mel_db_per_meter(frequency_hz: float) -> float:
    """Mean excess loss of foliage transmission, dB per traversed meter."""
    return 0.79 * (frequency_hz / 1e9) ** 0.61


def nlosb_power(link: LinkRecord, state: WorldState, cfg: RadioConfig) -> PowerResult:
    if link.link_type is not LinkType.NLOSB:
        raise ValueError("nlosb_power requires an NLOSb link")
    tx = state.vehicle_by_id[link.tx_id]
    rx = state.vehicle_by_id[link.rx_id]
    if link.sub_cause == SUB_FOLIAGE_ONLY:
        base = two_ray_power(link.distance_2d, tx.antenna_height, rx.antenna_height, cfg)
        loss = mel_db_per_meter(cfg.frequency_hz) * link.foliage_traversal
        return PowerResult(base.large_scale_dbm - loss, base.rays, MODEL_FOLIAGE)
    floor = log_distance_power(link.distance_3d, cfg)
    if not cfg.nlosb_rays:
        return PowerResult(floor, (), MODEL_LOG_DISTANCE)
    rays = tuple(nlosb_rays(link, state, cfg))
    if not rays:
        return PowerResult(floor, (), MODEL_LOG_DISTANCE)
    ray_dbm = watts_to_dbm(field_to_power(combine_e_field(rays, cfg), cfg)) \
        + antenna_gains_db(cfg)
    if ray_dbm >= floor:
        return PowerResult(ray_dbm, rays, MODEL_NLOSB_RAYS)
    return PowerResult(floor, rays, MODEL_LOG_DISTANCE)


def large_scale_power(link: LinkRecord, state: WorldState, cfg: RadioConfig) -> PowerResult:
    """Model dispatch by link type; reflections/diffractions only for NLOSb."""
    if link.link_type is LinkType.LOS:
        tx = state.vehicle_by_id[link.tx_id]
        rx = state.vehicle_by_id[link.rx_id]
        return two_ray_power(link.distance_2d, tx.antenna_height, rx.antenna_height, cfg)
    if link.link_type is LinkType.NLOSV:
        return nlosv_power(link, state, cfg)
    return nlosb_power(link, state, cfg)
