"""Link classification: LOS / NLOSv / NLOSb plus neighborhood statistics.

Classification order is fixed: static blockers are tested first and, when a
building or foliage blocks the path, the vehicle tree is never consulted.
Vehicles obstruct only when they pierce 60% of the first Fresnel zone below
the straight antenna-to-antenna line.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .geom import (
    Ellipse2,
    Point2,
    Segment2,
    ellipse_area,
    ellipse_bounds,
    ellipse_contains,
    fresnel_radius,
    segment_polygon_intersection,
)
from .scenario import RadioConfig, WorldState
from .sindex import Rect


class LinkType(enum.Enum):
    LOS = "LOS"
    NLOSV = "NLOSv"
    NLOSB = "NLOSb"


SUB_BUILDING = "building"
SUB_FOLIAGE_ONLY = "foliageOnly"


@dataclass(frozen=True)
class LinkRecord:
    time: float
    tx_id: str
    rx_id: str
    distance_2d: float
    distance_3d: float
    link_type: LinkType
    sub_cause: Optional[str] = None  # NLOSb only: building | foliageOnly
    obstructing_vehicle_ids: tuple = ()
    blocking_static_ids: tuple = ()
    foliage_traversal: float = 0.0
    ellipse: Optional[Ellipse2] = None
    nv: Optional[float] = None  # vehicles per km^2 inside the ellipse
    as_frac: Optional[float] = None  # built-area fraction inside the ellipse


class Stats(NamedTuple):
    nv: float
    as_frac: float
    ellipse: Ellipse2


def radius_for(link_type: LinkType, cfg: RadioConfig) -> float:
    if link_type is LinkType.LOS:
        return cfg.r_los
    if link_type is LinkType.NLOSV:
        return cfg.r_nlosv
    return cfg.r_nlosb


def enumerate_pairs(state: WorldState, cfg: RadioConfig):
    """Unordered candidate pairs within the global maximum radius."""
    rmax = cfg.max_radius
    margin = 20.0  # vehicle outlines extend past their centers
    pairs = []
    for v in state.vehicles:
        c = v.antenna_pos
        region = Rect(c.x - rmax - margin, c.y - rmax - margin,
                      c.x + rmax + margin, c.y + rmax + margin)
        for other_id in state.vehicle_tree.query_region(region):
            if other_id <= v.id:
                continue
            o = state.vehicle_by_id[other_id]
            if math.hypot(o.antenna_pos.x - c.x, o.antenna_pos.y - c.y) > rmax:
                continue
            if not ((v.can_transmit and o.can_receive)
                    or (o.can_transmit and v.can_receive)):
                continue
            pairs.append((v.id, other_id))
    pairs.sort()
    return pairs


def classify(state: WorldState, tx_id: str, rx_id: str, cfg: RadioConfig) -> Optional[LinkRecord]:
    """Classify one pair; None when the link is out of range for its type."""
    if tx_id == rx_id:
        raise ValueError("tx and rx must differ")
    tx = state.vehicle_by_id[tx_id]
    rx = state.vehicle_by_id[rx_id]
    a, b = tx.antenna_pos, rx.antenna_pos
    seg = Segment2(a, b)
    d2d = seg.length
    d3d = math.hypot(d2d, rx.antenna_height - tx.antenna_height)

    blocking_buildings = []
    foliage_traversal = 0.0
    for oid in state.static_tree.query_segment(seg):
        obj = state.static_by_id[oid]
        res = segment_polygon_intersection(seg, obj.outline)
        if not res.intersects:
            continue
        if obj.kind == "building":
            blocking_buildings.append(oid)
        else:
            foliage_traversal += res.inside_length

    if blocking_buildings or foliage_traversal > 0.0:
        if blocking_buildings:
            sub = SUB_BUILDING
        else:
            sub = SUB_FOLIAGE_ONLY
        link_type = LinkType.NLOSB
        record = LinkRecord(
            time=state.time, tx_id=tx_id, rx_id=rx_id,
            distance_2d=d2d, distance_3d=d3d, link_type=link_type, sub_cause=sub,
            blocking_static_ids=tuple(sorted(blocking_buildings)),
            foliage_traversal=foliage_traversal)
    else:
        # rule: the vehicle tree is only reached when nothing static blocks
        obstructors = obstructing_vehicles(state, tx_id, rx_id, seg,
                                           tx.antenna_height, rx.antenna_height, cfg)
        if obstructors:
            record = LinkRecord(
                time=state.time, tx_id=tx_id, rx_id=rx_id,
                distance_2d=d2d, distance_3d=d3d, link_type=LinkType.NLOSV,
                obstructing_vehicle_ids=tuple(vid for _, vid in obstructors))
        else:
            record = LinkRecord(
                time=state.time, tx_id=tx_id, rx_id=rx_id,
                distance_2d=d2d, distance_3d=d3d, link_type=LinkType.LOS)

    if d2d > radius_for(record.link_type, cfg):
        return None
    return record


def obstructing_vehicles(state, tx_id, rx_id, seg, h_tx, h_rx, cfg):
    """(t_mid, id) of vehicles piercing the 0.6-Fresnel clearance, path-ordered."""
    wavelength = cfg.wavelength
    d2d = seg.length
    hits = []
    for vid in state.vehicle_tree.query_segment(seg):
        if vid == tx_id or vid == rx_id:
            continue
        v = state.vehicle_by_id[vid]
        res = segment_polygon_intersection(seg, v.outline)
        if not res.intersects:
            continue
        t_mid = 0.5 * (res.intervals[0][0] + res.intervals[-1][1])
        d1 = t_mid * d2d
        d2 = (1.0 - t_mid) * d2d
        line_h = h_tx + t_mid * (h_rx - h_tx)
        clearance = line_h - 0.6 * fresnel_radius(d1, d2, wavelength)
        if v.height > clearance:
            hits.append((t_mid, vid))
    hits.sort()
    return hits


def neighborhood_stats(state: WorldState, tx_id: str, rx_id: str,
                       cfg: RadioConfig, link_type: LinkType) -> Stats:
    """Vehicle density (per km^2) and built-area fraction inside the link ellipse."""
    tx = state.vehicle_by_id[tx_id]
    rx = state.vehicle_by_id[rx_id]
    r = radius_for(link_type, cfg)
    e = Ellipse2(tx.antenna_pos, rx.antenna_pos, r)
    if e.focal_distance >= r:
        raise ValueError("degenerate ellipse: distance >= link-type radius")
    area_m2 = ellipse_area(e)
    bounds = ellipse_bounds(e)
    region = Rect(*bounds)

    count = 0
    for vid in state.vehicle_tree.query_region(region):
        if vid == tx_id or vid == rx_id:
            continue
        if ellipse_contains(e, state.vehicle_by_id[vid].center):
            count += 1
    nv = count / area_m2 * 1e6

    built = 0.0
    for oid in state.static_tree.query_region(region):
        obj = state.static_by_id[oid]
        if ellipse_contains(e, obj.outline.centroid):
            built += obj.outline.area
    as_frac = built / area_m2
    return Stats(nv=nv, as_frac=as_frac, ellipse=e)


def with_stats(record: LinkRecord, stats: Stats) -> LinkRecord:
    return replace(record, ellipse=stats.ellipse, nv=stats.nv, as_frac=stats.as_frac)
