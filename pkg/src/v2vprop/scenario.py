"""Scenario ingestion: static outlines, vehicle traces, radio configuration.

File formats are plain delimited text with a header row so that runs diff
cleanly.  Coordinates are meters in a local planar frame (any geographic
projection happens upstream); declared round-trip precision is 1e-6 m for
lengths and 1e-3 s for timestamps.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

from .geom import Point2, Polygon2, oriented_rectangle
from .sindex import Rect, RTree

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0

# 2009 Toyota Corolla: height / width / length
DEFAULT_VEHICLE_HEIGHT = 1.466
DEFAULT_VEHICLE_WIDTH = 1.762
DEFAULT_VEHICLE_LENGTH = 4.539


class InputError(ValueError):
    """Malformed scenario input (file level or record level)."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration values."""


@dataclass(frozen=True)
class StaticObject:
    id: str
    kind: str  # "building" | "foliage"
    outline: Polygon2
    height: float | None = None

    def bounding_rect(self) -> Rect:
        return Rect(*self.outline.bounds)


@dataclass(frozen=True)
class VehicleOutline:
    id: str
    center: Point2
    heading: float
    length: float = DEFAULT_VEHICLE_LENGTH
    width: float = DEFAULT_VEHICLE_WIDTH
    height: float = DEFAULT_VEHICLE_HEIGHT
    antenna_height: float | None = None
    can_transmit: bool = True
    can_receive: bool = True

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0 or self.height <= 0:
            raise InputError(f"vehicle {self.id}: non-positive dimensions")
        if self.antenna_height is None:
            object.__setattr__(self, "antenna_height", self.height + 0.01)

    @cached_property
    def outline(self) -> Polygon2:
        return oriented_rectangle(self.center, self.heading, self.length, self.width)

    def bounding_rect(self) -> Rect:
        return Rect(*self.outline.bounds)

    @property
    def antenna_pos(self) -> Point2:
        return self.center


@dataclass
class RadioConfig:
    frequency_hz: float = 5.9e9
    tx_power_dbm: float = 10.0
    antenna_gain_tx_dbi: float = 0.0
    antenna_gain_rx_dbi: float = 0.0
    reception_threshold_dbm: float = -92.0
    epsilon_r_ground: float = 1.003
    epsilon_r_wall: float = 4.5
    gamma_nlosb: float = 2.9
    pl_d0_db: float | None = None  # None: free-space loss at 1 m for frequency_hz
    r_los_urban: float = 500.0
    r_los_open: float = 1000.0
    r_nlosv: float = 400.0
    r_nlosb: float = 300.0
    sigma_los_min: float = 3.3
    sigma_los_max: float = 5.2
    sigma_nlosv_min: float = 3.8
    sigma_nlosv_max: float = 5.3
    sigma_nlosb_min_rays: float = 0.0
    sigma_nlosb_min_no_rays: float = 4.1
    sigma_nlosb_max: float = 6.8
    nv_max: float | None = None  # vehicles per km^2; None: derived from scenario
    as_max: float | None = None  # built-area fraction; None: derived from scenario
    environment: str = "urban"
    nlosb_rays: bool = True
    tall_vehicle_height_threshold: float = 2.0
    antenna_offset: float = 0.01

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ConfigError("frequency_hz must be > 0")
        if self.environment not in ("urban", "open"):
            raise ConfigError(f"environment must be urban or open, got {self.environment!r}")
        for name in ("r_los_urban", "r_los_open", "r_nlosv", "r_nlosb"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for lo, hi in (("sigma_los_min", "sigma_los_max"),
                       ("sigma_nlosv_min", "sigma_nlosv_max"),
                       ("sigma_nlosb_min_rays", "sigma_nlosb_max"),
                       ("sigma_nlosb_min_no_rays", "sigma_nlosb_max")):
            if getattr(self, lo) < 0 or getattr(self, lo) > getattr(self, hi):
                raise ConfigError(f"require 0 <= {lo} <= {hi}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def r_los(self) -> float:
        return self.r_los_urban if self.environment == "urban" else self.r_los_open

    @property
    def max_radius(self) -> float:
        return max(self.r_los, self.r_nlosv, self.r_nlosb)

    @property
    def pl_d0(self) -> float:
        """Path loss at the 1 m reference distance, dB."""
        if self.pl_d0_db is not None:
            return self.pl_d0_db
        return 20.0 * math.log10(4.0 * math.pi / self.wavelength)


_CONFIG_INPUT_KEYS = ("static_file", "trace_file", "origin_lon", "origin_lat")


def _parse_value(name: str, raw: str, kind):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "on", "yes"):
            return True
        if raw.lower() in ("0", "false", "off", "no"):
            return False
        raise ConfigError(f"{name}: expected boolean, got {raw!r}")
    if raw.lower() in ("none", ""):
        return None
    if kind is float:
        return float(raw)
    return raw


def load_config(path):
    """Parse a flat key=value file into (RadioConfig, input-paths dict)."""
    fields = {f.name: f for f in dataclasses.fields(RadioConfig)}
    values = {}
    inputs = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    errors = []
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"line {ln}: expected key=value, got {line!r}")
            continue
        key, _, raw = line.partition("=")
        key = key.strip()
        if key in _CONFIG_INPUT_KEYS:
            inputs[key] = raw.strip() if key.endswith("_file") else float(raw)
            continue
        f = fields.get(key)
        if f is None:
            errors.append(f"line {ln}: unknown config key {key!r}")
            continue
        kind = float
        if f.type in ("bool",):
            kind = bool
        elif f.type in ("str",):
            kind = str
        try:
            values[key] = _parse_value(key, raw, kind)
        except (ValueError, ConfigError) as e:
            errors.append(f"line {ln}: {e}")
    if errors:
        raise InputError(f"bad config {path}:\n" + "\n".join(errors))
    try:
        cfg = RadioConfig(**values)
    except ConfigError as e:
        raise InputError(f"bad config {path}: {e}") from e
    return cfg, inputs


def dump_config(cfg: RadioConfig, extras: dict | None = None) -> str:
    """Resolved-parameter echo, one key=value per line, sorted."""
    pairs = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    pairs["pl_d0_db"] = cfg.pl_d0
    if extras:
        pairs.update(extras)
    out = []
    for k in sorted(pairs):
        v = pairs[k]
        if isinstance(v, bool):
            v = "on" if v else "off"
        out.append(f"{k}={v}")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------- static file

STATIC_HEADER = "id,kind,height,outline"


def load_static_objects(path) -> list[StaticObject]:
    """Read `id,kind,height,x1 y1 x2 y2 ...` records; collect all bad records."""
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as e:
        raise InputError(f"cannot read static objects {path}: {e}") from e
    if not lines or lines[0].strip() != STATIC_HEADER:
        raise InputError(f"{path}: missing header {STATIC_HEADER!r}")
    out = []
    errors = []
    seen = set()
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            errors.append(f"line {ln}: expected 4 comma-separated fields")
            continue
        oid, kind, height_s, coords_s = (p.strip() for p in parts)
        if oid in seen:
            errors.append(f"line {ln}: duplicate id {oid!r}")
            continue
        if kind not in ("building", "foliage"):
            errors.append(f"line {ln}: unknown kind {kind!r}")
            continue
        try:
            height = float(height_s) if height_s else None
            if height is not None and not math.isfinite(height):
                raise ValueError("non-finite height")
            coords = [float(v) for v in coords_s.split()]
            if len(coords) % 2 != 0:
                raise ValueError("odd coordinate count")
            ring = list(zip(coords[0::2], coords[1::2]))
            outline = Polygon2(ring)
        except ValueError as e:
            errors.append(f"line {ln}: {e}")
            continue
        seen.add(oid)
        out.append(StaticObject(id=oid, kind=kind, outline=outline, height=height))
    if errors:
        raise InputError(f"bad static objects {path}:\n" + "\n".join(errors))
    return out


def dump_static_objects(objects) -> str:
    lines = [STATIC_HEADER]
    for o in objects:
        h = f"{o.height:.6f}" if o.height is not None else ""
        ring = " ".join(f"{p.x:.6f} {p.y:.6f}" for p in o.outline.vertices)
        lines.append(f"{o.id},{o.kind},{h},{ring}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- trace file

TRACE_HEADER = "time,id,x,y,heading,length,width,height,antenna_height"


class Trace:
    """Time-indexed vehicle states, quantized to 1e-3 s."""

    def __init__(self, by_time: dict):
        self.by_time = {t: sorted(vs, key=lambda v: v.id) for t, vs in by_time.items()}
        self.times = sorted(self.by_time)

    def vehicles_at(self, t: float):
        key = round(float(t), 3)
        if key not in self.by_time:
            raise InputError(f"no trace records at t={t}")
        return self.by_time[key]


def load_trace(path, antenna_offset: float = 0.01) -> Trace:
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as e:
        raise InputError(f"cannot read trace {path}: {e}") from e
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise InputError(f"{path}: missing header {TRACE_HEADER!r}")
    by_time: dict = {}
    seen = set()
    errors = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 9:
            errors.append(f"line {ln}: expected 9 comma-separated fields")
            continue
        t_s, vid, x_s, y_s, heading_s, length_s, width_s, height_s, ant_s = parts
        try:
            t = round(float(t_s), 3)
            x, y = float(x_s), float(y_s)
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(t)):
                raise ValueError("non-finite time or coordinates")
            heading = float(heading_s) if heading_s else 0.0
            length = float(length_s) if length_s else DEFAULT_VEHICLE_LENGTH
            width = float(width_s) if width_s else DEFAULT_VEHICLE_WIDTH
            height = float(height_s) if height_s else DEFAULT_VEHICLE_HEIGHT
            antenna_height = float(ant_s) if ant_s else height + antenna_offset
        except ValueError as e:
            errors.append(f"line {ln}: {e}")
            continue
        if (t, vid) in seen:
            errors.append(f"line {ln}: duplicate record for (t={t}, id={vid!r})")
            continue
        seen.add((t, vid))
        try:
            v = VehicleOutline(id=vid, center=Point2(x, y), heading=heading,
                               length=length, width=width, height=height,
                               antenna_height=antenna_height)
        except InputError as e:
            errors.append(f"line {ln}: {e}")
            continue
        by_time.setdefault(t, []).append(v)
    if errors:
        raise InputError(f"bad trace {path}:\n" + "\n".join(errors))
    return Trace(by_time)


def dump_trace(trace: Trace) -> str:
    lines = [TRACE_HEADER]
    for t in trace.times:
        for v in trace.by_time[t]:
            lines.append(
                f"{t:.3f},{v.id},{v.center.x:.6f},{v.center.y:.6f},{v.heading:.6f},"
                f"{v.length:.6f},{v.width:.6f},{v.height:.6f},{v.antenna_height:.6f}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- world state

@dataclass(frozen=True)
class WorldState:
    time: float
    vehicles: tuple
    vehicle_by_id: dict
    static_objects: tuple
    static_by_id: dict
    static_tree: RTree
    vehicle_tree: RTree


def build_static_tree(static_objects) -> RTree:
    return RTree([(o.id, o.bounding_rect()) for o in static_objects])


def make_state(time, vehicles, static_objects, static_tree=None) -> WorldState:
    """Build a per-timestep snapshot; vehicle tree always rebuilt fresh."""
    vehicles = tuple(sorted(vehicles, key=lambda v: v.id))
    static_objects = tuple(static_objects)
    if static_tree is None:
        static_tree = build_static_tree(static_objects)
    vehicle_tree = RTree([(v.id, v.bounding_rect()) for v in vehicles])
    return WorldState(
        time=round(float(time), 3),
        vehicles=vehicles,
        vehicle_by_id={v.id: v for v in vehicles},
        static_objects=static_objects,
        static_by_id={o.id: o for o in static_objects},
        static_tree=static_tree,
        vehicle_tree=vehicle_tree,
    )


DENSITY_CELL_M = 250.0


def density_maxima(static_objects, vehicle_lists):
    """Reference maxima for the neighborhood densities, from the scenario itself.

    Partitions the scene into 250 m cells (anchored at the floored scene
    minimum) and takes the busiest cell over every supplied timestep list:
    vehicle count normalized to per km^2, and built-area fraction of the
    cell. The cell is sized near the link-ellipse scale so local densities
    rarely exceed the reference; floors keep sparse scenes usable.
    """
    pts = [o.outline.centroid for o in static_objects]
    for vs in vehicle_lists:
        pts.extend(v.center for v in vs)
    if not pts:
        return 1.0, 1e-6
    side = DENSITY_CELL_M
    cell_area = side * side
    x0 = math.floor(min(p.x for p in pts) / side) * side
    y0 = math.floor(min(p.y for p in pts) / side) * side

    def cell(p):
        return (int((p.x - x0) // side), int((p.y - y0) // side))

    nv_max = 0.0
    for vs in vehicle_lists:
        counts = {}
        for v in vs:
            c = cell(v.center)
            counts[c] = counts.get(c, 0) + 1
        if counts:
            nv_max = max(nv_max, max(counts.values()) / cell_area * 1e6)
    areas = {}
    for o in static_objects:
        c = cell(o.outline.centroid)
        areas[c] = areas.get(c, 0.0) + o.outline.area
    as_max = max(areas.values()) / cell_area if areas else 0.0
    return max(nv_max, 1.0), max(as_max, 1e-6)


class Scenario:
    """Static objects + trace + config, with per-timestep snapshots."""

    def __init__(self, static_objects, trace: Trace, cfg: RadioConfig):
        self.static_objects = tuple(static_objects)
        self.trace = trace
        self.cfg = cfg
        self.static_tree = build_static_tree(self.static_objects)

    @property
    def times(self):
        return self.trace.times

    def step_state(self, t: float) -> WorldState:
        vehicles = self.trace.vehicles_at(t)
        return make_state(t, vehicles, self.static_objects, self.static_tree)
