"""Static CSV/SVG emission of the road diagrams.

Two figures per network: the density-flow fundamental diagram (triangular,
one triangle per autonomy level) and the flow-latency relation (flat
free-flow branch plus the congested hyperbola).  The SVG is written by hand
so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .network import RoadNetwork, critical_density, free_flow_latency, max_flow, latency

ALPHAS = (0.0, 0.5, 1.0)


def fundamental_diagram_rows(network: RoadNetwork) -> list[tuple]:
    """(road, alpha, density, flow) breakpoints of the triangular diagram."""
    rows = []
    for idx, road in enumerate(network.roads, start=1):
        for alpha in ALPHAS:
            n_crit = critical_density(road, alpha)
            rows.append((idx, alpha, 0.0, 0.0))
            rows.append((idx, alpha, n_crit, road.speed * n_crit))
            rows.append((idx, alpha, road.max_density, 0.0))
    return rows


def flow_latency_rows(network: RoadNetwork, samples: int = 40) -> list[tuple]:
    """(road, alpha, flow, latency) curves: free-flow leg then congested leg."""
    rows = []
    for idx, road in enumerate(network.roads, start=1):
        a = free_flow_latency(road)
        for alpha in ALPHAS:
            cap = max_flow(road, alpha)
            rows.append((idx, alpha, 0.0, a))
            rows.append((idx, alpha, cap, a))
            f_h_share = 1.0 - alpha
            for frac in np.linspace(1.0, 0.05, samples):
                flow = cap * frac
                lat = latency(road, flow * f_h_share, flow * alpha, 1)
                rows.append((idx, alpha, flow, lat))
    return rows


def write_csv(rows: list[tuple], header: list[str], path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_polyline(points: list[tuple[float, float]], color: str, dash: str = "") -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1.5"'
            f'{dash_attr} points="{coords}" />')


def write_svg(curves: list[tuple[str, int, list[tuple[float, float]]]],
              x_label: str, y_label: str, path: Path,
              width: int = 640, height: int = 420) -> None:
    """Render labeled (dash_style, color_index, points) curves to an SVG file."""
    margin = 50.0
    xs = [x for _, _, pts in curves for x, _ in pts]
    ys = [y for _, _, pts in curves for _, y in pts]
    x_max = max(xs) if xs else 1.0
    y_max = max(ys) if ys else 1.0
    x_max = x_max if x_max > 0 else 1.0
    y_max = y_max if y_max > 0 else 1.0

    def tx(x: float) -> float:
        return margin + (x / x_max) * (width - 2 * margin)

    def ty(y: float) -> float:
        return height - margin - (y / y_max) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white" />',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black" />',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black" />',
        f'<text x="{width / 2:.0f}" y="{height - 12}" font-size="13" '
        f'text-anchor="middle">{x_label}</text>',
        f'<text x="14" y="{height / 2:.0f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 14 {height / 2:.0f})">{y_label}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" font-size="11" '
        f'text-anchor="end">{x_max:.4g}</text>',
        f'<text x="{margin - 6}" y="{margin + 4}" font-size="11" '
        f'text-anchor="end">{y_max:.4g}</text>',
    ]
    for dash, color_idx, pts in curves:
        scaled = [(tx(x), ty(y)) for x, y in pts]
        parts.append(_svg_polyline(scaled, _PALETTE[color_idx % len(_PALETTE)], dash))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def emit_network_diagrams(network: RoadNetwork, out_dir: Path,
                          eq_latency: float | None = None) -> list[Path]:
    """Write the CSV/SVG diagram pair; optionally overlay an equilibrium latency."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fd_rows = fundamental_diagram_rows(network)
    fd_csv = out_dir / "fundamental_diagram.csv"
    write_csv(fd_rows, ["road", "alpha", "density", "flow"], fd_csv)
    written.append(fd_csv)
    curves = []
    for idx in range(1, network.n + 1):
        for j, alpha in enumerate(ALPHAS):
            pts = [(d, f) for r, a, d, f in fd_rows if r == idx and a == alpha]
            curves.append(("" if alpha == 0.0 else ("6,3" if alpha == 1.0 else "2,2"),
                           idx - 1, pts))
    fd_svg = out_dir / "fundamental_diagram.svg"
    write_svg(curves, "density", "flow", fd_svg)
    written.append(fd_svg)

    fl_rows = flow_latency_rows(network)
    fl_csv = out_dir / "flow_latency.csv"
    write_csv(fl_rows, ["road", "alpha", "flow", "latency"], fl_csv)
    written.append(fl_csv)
    curves = []
    lat_cap = 0.0
    for idx in range(1, network.n + 1):
        for alpha in ALPHAS:
            pts = [(f, l) for r, a, f, l in fl_rows if r == idx and a == alpha]
            lat_cap = max(lat_cap, max(l for _, l in pts))
            curves.append(("" if alpha == 0.0 else ("6,3" if alpha == 1.0 else "2,2"),
                           idx - 1, pts))
    if eq_latency is not None:
        flow_max = max(max_flow(r, 1.0) for r in network.roads)
        curves.append(("1,3", 5, [(0.0, eq_latency), (flow_max, eq_latency)]))
    fl_svg = out_dir / "flow_latency.svg"
    write_svg(curves, "flow", "latency", fl_svg)
    written.append(fl_svg)
    return written
