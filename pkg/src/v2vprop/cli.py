"""Command-line front end.

Runs a scenario and writes per-link records (delimited text), a resolved
config echo, a JSON run report, and summary figures; optionally a KML
overlay of the scene with links color- and height-coded by received power.
With --bench it times the pipeline across synthetic scene sizes instead.
"""

import dataclasses
import json
import math
import os
import sys
from typing import NamedTuple
from xml.sax.saxutils import escape

import click

from .engine import PHASES, benchmark, resolve_density_maxima, run
from .scenario import (ConfigError, InputError, RadioConfig, Scenario, Trace,
                       dump_config, load_config, load_static_objects, load_trace)

RECORD_COLUMNS = ("time", "tx_id", "rx_id", "distance_m", "link_type", "model_used",
                  "large_scale_dbm", "sigma_db", "sampled_dbm", "below_threshold")


class OutputRecord(NamedTuple):
    time: float
    tx_id: str
    rx_id: str
    distance_m: float
    link_type: str
    model_used: str
    large_scale_dbm: float
    sigma_db: float
    sampled_dbm: float
    below_threshold: bool


def record_from_result(r) -> OutputRecord:
    return OutputRecord(
        time=r.link.time, tx_id=r.link.tx_id, rx_id=r.link.rx_id,
        distance_m=r.link.distance_2d, link_type=r.link.link_type.value,
        model_used=r.power.model_used, large_scale_dbm=r.power.large_scale_dbm,
        sigma_db=r.sigma_db, sampled_dbm=r.sampled_dbm,
        below_threshold=r.below_threshold)


def format_records(records) -> str:
    # repr() floats survive a parse round trip byte-exactly
    lines = [",".join(RECORD_COLUMNS)]
    for r in records:
        lines.append(",".join((
            repr(r.time), r.tx_id, r.rx_id, repr(r.distance_m), r.link_type,
            r.model_used, repr(r.large_scale_dbm), repr(r.sigma_db),
            repr(r.sampled_dbm), "1" if r.below_threshold else "0")))
    return "\n".join(lines) + "\n"


def parse_records(text: str):
    lines = text.splitlines()
    if not lines or lines[0] != ",".join(RECORD_COLUMNS):
        raise InputError("records file missing canonical header")
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(RECORD_COLUMNS):
            raise InputError(f"records line {ln}: expected {len(RECORD_COLUMNS)} columns")
        out.append(OutputRecord(
            time=float(parts[0]), tx_id=parts[1], rx_id=parts[2],
            distance_m=float(parts[3]), link_type=parts[4], model_used=parts[5],
            large_scale_dbm=float(parts[6]), sigma_db=float(parts[7]),
            sampled_dbm=float(parts[8]), below_threshold=parts[9] == "1"))
    return out


def write_run_report(report, path):
    doc = {
        "timesteps": [
            {"time": ts.time, "counts": ts.counts, "timings": ts.timings,
             "n_records": ts.n_records}
            for ts in report.timesteps],
        "totals": {
            "counts": report.total_counts(),
            "timings": report.total_timings(),
            "n_records": report.total_records(),
            "wall_s": report.total_wall_s,
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ------------------------------------------------------------------- figures

LINK_COLORS = {"LOS": "tab:blue", "NLOSv": "tab:orange", "NLOSb": "tab:red"}


def render_figures(records, fig_dir):
    """Scatter, per-type counts, and sampled-power histogram as PNG files."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(fig_dir, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for lt, color in LINK_COLORS.items():
        xs = [r.distance_m for r in records if r.link_type == lt]
        ys = [r.sampled_dbm for r in records if r.link_type == lt]
        if xs:
            ax.scatter(xs, ys, s=6, alpha=0.5, color=color, label=lt)
    ax.set_xlabel("distance [m]")
    ax.set_ylabel("sampled power [dBm]")
    ax.set_title("Received power vs distance")
    if records:
        ax.legend()
    ax.grid(True, alpha=0.3)
    p = os.path.join(fig_dir, "power_vs_distance.png")
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5, 4))
    counts = {lt: sum(1 for r in records if r.link_type == lt) for lt in LINK_COLORS}
    ax.bar(list(counts), list(counts.values()),
           color=[LINK_COLORS[k] for k in counts])
    ax.set_ylabel("links")
    ax.set_title("Link count by class")
    p = os.path.join(fig_dir, "link_counts.png")
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    if records:
        ax.hist([r.sampled_dbm for r in records], bins=40, color="tab:purple", alpha=0.8)
    ax.set_xlabel("sampled power [dBm]")
    ax.set_ylabel("links")
    ax.set_title("Sampled power distribution")
    p = os.path.join(fig_dir, "power_histogram.png")
    fig.savefig(p, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)
    return paths


# ------------------------------------------------------------------- overlay

KML_HEADER = """<?xml version="1.0" encoding="UTF-8"?>
<kml xmlns="http://www.opengis.net/kml/2.2">
<Document>
<name>{name}</name>
"""

KML_FOOTER = """</Document>
</kml>
"""

KML_STYLE = """<Style id="{sid}">
<LineStyle><color>{color}</color><width>{width}</width></LineStyle>
<PolyStyle><color>{fill}</color></PolyStyle>
</Style>
"""

KML_POLYGON = """<Placemark>
<name>{name}</name>
<styleUrl>#{sid}</styleUrl>
<Polygon>
<extrude>1</extrude>
<altitudeMode>relativeToGround</altitudeMode>
<outerBoundaryIs><LinearRing><coordinates>
{coords}
</coordinates></LinearRing></outerBoundaryIs>
</Polygon>
</Placemark>
"""

KML_LINE = """<Placemark>
<name>{name}</name>
<description>{desc}</description>
<styleUrl>#{sid}</styleUrl>
<LineString>
<altitudeMode>relativeToGround</altitudeMode>
<coordinates>
{coords}
</coordinates>
</LineString>
</Placemark>
"""

# cold-to-warm KML line colors (aabbggrr)
POWER_PALETTE = ("ffff0000", "ffffff00", "ff00ff00", "ff00ffff", "ff0080ff", "ff0000ff")
EARTH_M_PER_DEG = 111320.0


class KmlOverlayWriter:
    """Scene overlay for an Earth viewer.

    Local meters are mapped to lon/lat by an equirectangular projection
    around the configured origin. Warmer link colors and higher line
    altitudes mean higher sampled power; each receiver gets a small circle
    at the link's altitude.
    """

    def __init__(self, origin_lon=0.0, origin_lat=0.0):
        self.origin_lon = origin_lon
        self.origin_lat = origin_lat
        self._cos_lat = math.cos(math.radians(origin_lat)) or 1e-12

    def to_lonlat(self, x, y):
        lon = self.origin_lon + x / (EARTH_M_PER_DEG * self._cos_lat)
        lat = self.origin_lat + y / EARTH_M_PER_DEG
        return lon, lat

    def _ring(self, points, alt=0.0):
        pts = list(points) + [points[0]]
        return " ".join("%.8f,%.8f,%.2f" % (*self.to_lonlat(p.x, p.y), alt) for p in pts)

    def _power_scale(self, records):
        powers = [r.sampled_dbm for r, _ in records]
        lo, hi = min(powers), max(powers)
        if hi - lo < 1e-9:
            lo, hi = lo - 1.0, hi + 1.0
        return lo, hi

    def render(self, records, static_objects, vehicles) -> str:
        parts = [KML_HEADER.format(name="v2v propagation overlay")]
        parts.append(KML_STYLE.format(sid="building", color="ffffffff",
                                      width=1, fill="c0f0f0f0"))
        parts.append(KML_STYLE.format(sid="foliage", color="ff00b000",
                                      width=1, fill="8000c000"))
        parts.append(KML_STYLE.format(sid="vehicle", color="ff0000ff",
                                      width=1, fill="c00000ff"))
        for i, c in enumerate(POWER_PALETTE):
            parts.append(KML_STYLE.format(sid=f"pw{i}", color=c, width=3, fill=c))

        parts.append("<Folder>\n<name>static</name>\n")
        for obj in static_objects:
            parts.append(KML_POLYGON.format(
                name=escape(obj.id), sid=obj.kind,
                coords=self._ring(obj.outline.vertices, alt=obj.height or 2.0)))
        parts.append("</Folder>\n")

        parts.append("<Folder>\n<name>vehicles</name>\n")
        for v in vehicles:
            parts.append(KML_POLYGON.format(
                name=escape(v.id), sid="vehicle",
                coords=self._ring(v.outline.vertices, alt=v.height)))
        parts.append("</Folder>\n")

        parts.append("<Folder>\n<name>links</name>\n")
        if records:
            lo, hi = self._power_scale(records)
            for r, (a, b) in records:
                frac = (r.sampled_dbm - lo) / (hi - lo)
                frac = min(max(frac, 0.0), 1.0)
                sid = f"pw{min(int(frac * len(POWER_PALETTE)), len(POWER_PALETTE) - 1)}"
                alt = 2.0 + 48.0 * frac
                coords = "%.8f,%.8f,%.2f %.8f,%.8f,%.2f" % (
                    *self.to_lonlat(a.x, a.y), alt, *self.to_lonlat(b.x, b.y), alt)
                desc = escape(f"{r.tx_id}->{r.rx_id}: {r.sampled_dbm:.1f} dBm "
                              f"(large-scale {r.large_scale_dbm:.1f} dBm, {r.link_type})")
                parts.append(KML_LINE.format(name=escape(f"{r.tx_id}-{r.rx_id}"),
                                             desc=desc, sid=sid, coords=coords))
                parts.append(self._receiver_circle(b, alt, sid))
        parts.append("</Folder>\n")
        parts.append(KML_FOOTER)
        return "".join(parts)

    def _receiver_circle(self, center, alt, sid, radius=2.0, n=16):
        from .geom import Point2
        ring = [Point2(center.x + radius * math.cos(2 * math.pi * i / n),
                       center.y + radius * math.sin(2 * math.pi * i / n))
                for i in range(n)]
        return KML_POLYGON.format(name="rx", sid=sid, coords=self._ring(ring, alt=alt))


def emit_overlay(records, static_objects, trace: Trace, origin_lon=0.0, origin_lat=0.0) -> str:
    """KML text for a finished run.

    Vehicle outlines are drawn at the first trace time; every record draws
    one link line between the antenna positions at its own timestep.
    """
    writer = KmlOverlayWriter(origin_lon, origin_lat)
    vehicles = trace.vehicles_at(trace.times[0]) if trace.times else []
    located = []
    for r in records:
        by_id = {v.id: v for v in trace.vehicles_at(r.time)}
        located.append((r, (by_id[r.tx_id].antenna_pos, by_id[r.rx_id].antenna_pos)))
    return writer.render(located, static_objects, vehicles)


# ----------------------------------------------------------------------- cli

def _resolve_input(path, config_path):
    if os.path.isabs(path):
        return path
    return os.path.join(os.path.dirname(os.path.abspath(config_path)), path)


def _do_run(config_path, seed, nlosb_rays, environment, out_dir, overlay):
    if config_path is None:
        raise InputError("--config is required (unless --bench)")
    cfg, inputs = load_config(config_path)
    overrides = {}
    if nlosb_rays is not None:
        overrides["nlosb_rays"] = nlosb_rays == "on"
    if environment is not None:
        overrides["environment"] = environment
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    for key in ("static_file", "trace_file"):
        if key not in inputs:
            raise InputError(f"config {config_path} must set {key}")

    statics = load_static_objects(_resolve_input(inputs["static_file"], config_path))
    trace = load_trace(_resolve_input(inputs["trace_file"], config_path),
                       antenna_offset=cfg.antenna_offset)
    cfg = resolve_density_maxima(cfg, statics,
                                 [trace.vehicles_at(t) for t in trace.times])
    scenario = Scenario(statics, trace, cfg)
    results, report = run(scenario, seed=seed)
    records = [record_from_result(r) for r in results]

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "records.csv"), "w", encoding="utf-8") as f:
        f.write(format_records(records))
    with open(os.path.join(out_dir, "config_echo.txt"), "w", encoding="utf-8") as f:
        f.write(dump_config(cfg, extras=inputs))
    write_run_report(report, os.path.join(out_dir, "run_report.json"))
    render_figures(records, os.path.join(out_dir, "figures"))
    if overlay:
        kml = emit_overlay(records, statics, trace,
                           origin_lon=inputs.get("origin_lon", 0.0),
                           origin_lat=inputs.get("origin_lat", 0.0))
        with open(os.path.join(out_dir, "overlay.kml"), "w", encoding="utf-8") as f:
            f.write(kml)
    click.echo(f"wrote {len(records)} records over {len(report.timesteps)} "
               f"timesteps to {out_dir}")


def _do_bench(out_dir, seed, sizes_text):
    try:
        sizes = [int(s) for s in sizes_text.split(",") if s.strip()]
    except ValueError as e:
        raise InputError(f"bad --bench-sizes {sizes_text!r}: {e}") from e
    if not sizes:
        raise InputError("--bench-sizes is empty")
    rows, violations = benchmark(sizes, seed=seed)

    columns = ["size", "n_vehicles", "n_static", "links"] + \
        [f"{p}_s" for p in PHASES] + ["total_s"]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(
            str(row[c]) if isinstance(row[c], int) else "%.6f" % row[c]
            for c in columns))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "bench_report.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    click.echo("\n".join(lines))
    if violations:
        for v in violations:
            click.echo(f"trend violation: {v}", err=True)
        sys.exit(2)
    click.echo(f"trend assertions passed; report at {path}")


@click.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Flat key=value config naming static_file and trace_file.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Run seed for the stochastic power draws.")
@click.option("--nlosb-rays", type=click.Choice(["on", "off"]), default=None,
              help="Override reflection/diffraction ray tracing for blocked links.")
@click.option("--environment", type=click.Choice(["urban", "open"]), default=None,
              help="Override the clear-path range profile.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out",
              show_default=True, help="Output directory.")
@click.option("--bench", is_flag=True, help="Time the pipeline on synthetic scenes.")
@click.option("--overlay", is_flag=True, help="Also write an Earth-viewer overlay.")
@click.option("--bench-sizes", default="1000,2000,4000", show_default=True,
              help="Comma-separated object counts for --bench.")
def main(config_path, seed, nlosb_rays, environment, out_dir, bench, overlay, bench_sizes):
    """Geometry-based V2V radio propagation runs, reports, and benchmarks."""
    try:
        if bench:
            _do_bench(out_dir, seed, bench_sizes)
        else:
            _do_run(config_path, seed, nlosb_rays, environment, out_dir, overlay)
    except (InputError, ConfigError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    except OSError as e:
        click.echo(f"i/o error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
