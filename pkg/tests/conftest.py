"""Shared instance generators and brute-force oracles for the test suite.

The oracles deliberately avoid the library's LP/NLP machinery: equilibrium
feasibility is checked by exhaustive grids over discretized flows (with the
per-road congestion algebra solved exactly), and instance generators use 2-D
polygon geometry to keep test demands comfortably away from feasibility
boundaries so grid oracles and exact solvers cannot disagree on knife edges.
"""

from __future__ import annotations

import math

import numpy as np
from shapely.geometry import Point, Polygon
from shapely.ops import unary_union

from mixedroads.network import DemandSpec, Road, RoadNetwork


def random_road(rng: np.random.Generator, target_a: float) -> Road:
    speed = rng.uniform(0.5, 2.0)
    lanes = float(rng.integers(1, 3))
    h_h = rng.uniform(0.03, 0.06)
    h_a = h_h * rng.uniform(0.35, 0.9)
    n_bar = (lanes / h_a) * rng.uniform(1.5, 3.0)
    return Road(length=target_a * speed, speed=speed, lanes=lanes,
                headway_human=h_h, headway_auto=h_a, max_density=n_bar)


def random_network(rng: np.random.Generator, n: int) -> RoadNetwork:
    if n <= 4:
        gaps = rng.uniform(0.25, 1.2, size=n)
    else:
        gaps = rng.uniform(0.05, 0.3, size=n)
    a = 0.5 + np.cumsum(gaps)
    return RoadNetwork(tuple(random_road(rng, float(ai)) for ai in a))


def congestion_coeffs(road: Road, ell: float) -> tuple[float, float, float]:
    """(c_h, c_a, rhs) of the fixed-latency congestion line, derived afresh."""
    a = road.length / road.speed
    scale = road.length * road.max_density / (road.speed * road.lanes)
    return ((ell - a) + scale * road.headway_human,
            (ell - a) + scale * road.headway_auto,
            road.length * road.max_density)


def ne_demand_polygon(network: RoadNetwork, m: int) -> Polygon:
    """Exact set of (lambda_h, lambda_a) demands routable at equilibrium road m.

    Roads below m are pinned to their congestion line at road m's free-flow
    latency (a segment in flow space); road m contributes its free-flow
    capacity triangle.  The achievable demand pairs form the Minkowski sum,
    computed as the convex hull of all vertex sums.
    """
    a_m = network.road(m).free_flow_latency
    vertex_sets: list[list[tuple[float, float]]] = []
    for i in range(1, m):
        road = network.road(i)
        c_h, c_a, rhs = congestion_coeffs(road, a_m)
        vertex_sets.append([(rhs / c_h, 0.0), (0.0, rhs / c_a)])
    road = network.road(m)
    cap = road.speed * road.lanes
    vertex_sets.append([(0.0, 0.0), (cap / road.headway_human, 0.0),
                        (0.0, cap / road.headway_auto)])
    sums = [(0.0, 0.0)]
    for verts in vertex_sets:
        sums = [(x + vx, y + vy) for x, y in sums for vx, vy in verts]
    hull = unary_union([Point(p) for p in sums]).convex_hull
    if isinstance(hull, Polygon):
        return hull
    return Point(sums[0]).buffer(0.0)  # degenerate: empty polygon


def demand_with_margin(rng: np.random.Generator, network: RoadNetwork,
                       margin_frac: float = 0.08,
                       max_tries: int = 400) -> DemandSpec | None:
    """Draw demands feasible at some equilibrium and far from every boundary.

    The margin keeps grid-based feasibility oracles in agreement with exact
    solvers; instances near a polygon boundary are redrawn.
    """
    polygons = [ne_demand_polygon(network, m) for m in range(1, network.n + 1)]
    bound_h = max((p.bounds[2] for p in polygons if not p.is_empty), default=1.0)
    bound_a = max((p.bounds[3] for p in polygons if not p.is_empty), default=1.0)
    for _ in range(max_tries):
        lam_h = rng.uniform(0.05 * bound_h, 0.95 * bound_h)
        lam_a = rng.uniform(0.05 * bound_a, 0.95 * bound_a)
        point = Point(lam_h, lam_a)
        margin = margin_frac * (lam_h + lam_a)
        inside_any = False
        ok = True
        for poly in polygons:
            if poly.is_empty:
                continue
            if poly.exterior.distance(point) < margin:
                ok = False
                break
            if poly.contains(point):
                inside_any = True
        if ok and inside_any:
            return DemandSpec(lam_h, lam_a)
    return None


def grid_ne_feasible(network: RoadNetwork, demand: DemandSpec, m: int,
                     steps: int = 100, tol: float = 1e-9) -> bool:
    """Grid oracle: is some equilibrium routing with road m in free-flow
    feasible, scanning human flows at resolution lambda_h / steps?

    Human flow splits over roads 1..m on a simplex grid; autonomous flows on
    congested roads follow exactly from the per-road congestion line, and the
    remainder must fit road m's free-flow capacity.
    """
    a_m = network.road(m).free_flow_latency
    lam_h, lam_a = demand.lambda_h, demand.lambda_a

    if m == 1:
        human_grids = np.array([[lam_h]])
    else:
        axes = [np.arange(steps + 1) for _ in range(m - 1)]
        mesh = np.meshgrid(*axes, indexing="ij")
        counts = np.stack([g.ravel() for g in mesh], axis=1)
        counts = counts[counts.sum(axis=1) <= steps]
        human_grids = np.column_stack([
            counts * (lam_h / steps),
            lam_h - counts.sum(axis=1) * (lam_h / steps),
        ]) if lam_h > 0 else np.zeros((1, m))

    f_a_pinned = np.zeros((human_grids.shape[0], m - 1))
    feasible = np.ones(human_grids.shape[0], dtype=bool)
    for i in range(1, m):
        road = network.road(i)
        c_h, c_a, rhs = congestion_coeffs(road, a_m)
        f_a_i = (rhs - c_h * human_grids[:, i - 1]) / c_a
        f_a_pinned[:, i - 1] = f_a_i
        feasible &= f_a_i >= -tol
    f_a_m = lam_a - f_a_pinned.sum(axis=1)
    feasible &= f_a_m >= -tol
    road_m = network.road(m)
    cap = road_m.speed * road_m.lanes
    feasible &= (road_m.headway_human * human_grids[:, m - 1]
                 + road_m.headway_auto * np.maximum(f_a_m, 0.0)) <= cap + tol
    return bool(feasible.any())


def grid_bne_oracle(network: RoadNetwork, demand: DemandSpec,
                    steps: int = 100) -> int | None:
    """Exhaustive scan: smallest equilibrium road index feasible on the grid."""
    for m in range(1, network.n + 1):
        if grid_ne_feasible(network, demand, m, steps):
            return m
    return None


# -- flexible-equilibrium brute force -----------------------------------------


def profile_phi(levels: list[tuple[float, float]], kappa: float) -> float:
    """Rejecting fraction of a step profile, reimplemented for the oracle."""
    for k, p in levels:
        if kappa <= k:
            return p
    return 1.0


def oracle_critical_latencies(network: RoadNetwork, m: int,
                              levels: list[tuple[float, float]]) -> list[float]:
    lat = network.free_flow_latencies
    a_m = lat[m - 1]
    upper = lat[m] if m < network.n else math.inf
    out = {a_m}
    for i in range(m + 1, network.n + 1):
        for kappa, _ in levels:
            if not math.isfinite(kappa):
                continue
            v = lat[i - 1] / kappa
            if a_m < v < upper:
                out.add(v)
    return sorted(out, reverse=True)


def _max_autonomous_grid(network: RoadNetwork, m: int, ell: float,
                         demand: DemandSpec, coarse: int = 40,
                         refinements: int = 5) -> float | None:
    """Best autonomous volume on roads 1..m at latency ell, by refined grid.

    Human splits are gridded (all but the last road free), pinned autonomous
    flows follow the congestion lines, and road m takes the line value or its
    free-flow capacity leftover.  The objective is concave piecewise-linear in
    the human split, so refining around the best point converges.
    """
    lam_h, lam_a = demand.lambda_h, demand.lambda_a
    a_m = network.road(m).free_flow_latency
    at_free_flow = abs(ell - a_m) <= 1e-9 * max(1.0, a_m)
    lines = [congestion_coeffs(network.road(i), ell) for i in range(1, m)]
    road_m = network.road(m)
    cap_m = road_m.speed * road_m.lanes

    def evaluate(human: np.ndarray) -> np.ndarray:
        """human: (num_points, m); returns placed volume or nan if infeasible."""
        placed = np.zeros(human.shape[0])
        ok = np.ones(human.shape[0], dtype=bool)
        for i, (c_h, c_a, rhs) in enumerate(lines):
            f_a = (rhs - c_h * human[:, i]) / c_a
            ok &= f_a >= -1e-9
            placed += np.maximum(f_a, 0.0)
        ok &= placed <= lam_a + 1e-9
        if at_free_flow:
            room = (cap_m - road_m.headway_human * human[:, m - 1]) \
                / road_m.headway_auto
            ok &= room >= -1e-9
            placed += np.minimum(np.maximum(room, 0.0), lam_a - placed)
        else:
            c_h, c_a, rhs = congestion_coeffs(road_m, ell)
            f_a = (rhs - c_h * human[:, m - 1]) / c_a
            ok &= f_a >= -1e-9
            placed += np.maximum(f_a, 0.0)
            ok &= placed <= lam_a + 1e-9
        out = np.where(ok, placed, np.nan)
        return out

    if m == 1:
        result = evaluate(np.array([[lam_h]]))
        return None if np.isnan(result[0]) else float(result[0])

    free_dims = m - 1
    lo = np.zeros(free_dims)
    hi = np.full(free_dims, lam_h)
    best_point = None
    best_val = -np.inf
    for _ in range(refinements):
        axes = [np.linspace(lo[d], hi[d], coarse + 1) for d in range(free_dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        last = lam_h - pts.sum(axis=1)
        valid = last >= -1e-12
        pts = pts[valid]
        last = last[valid]
        if pts.size == 0:
            break
        human = np.column_stack([pts, np.maximum(last, 0.0)])
        vals = evaluate(human)
        if np.isnan(vals).all():
            # refine around the least-infeasible point: fall back to coarse center
            span = (hi - lo) / 2.0
            center = (hi + lo) / 2.0
            lo = np.maximum(center - span / 2.0, 0.0)
            hi = np.minimum(center + span / 2.0, lam_h)
            continue
        idx = int(np.nanargmax(vals))
        if vals[idx] > best_val:
            best_val = float(vals[idx])
            best_point = pts[idx]
        step = (hi - lo) / coarse
        lo = np.maximum(best_point - 2 * step, 0.0)
        hi = np.minimum(best_point + 2 * step, lam_h)
    return None if best_point is None else best_val


def brute_force_bfne_cost(network: RoadNetwork, demand: DemandSpec,
                          levels: list[tuple[float, float]]) -> float | None:
    """Brute-force best flexible-equilibrium cost over (m, latency, flows).

    Enumerates every equilibrium road and critical latency, grids the flow
    split, spills leftover autonomous volume greedily over the remaining
    roads at their all-autonomous capacity, and checks the volume condition
    of the flexibility profile on a dense latency sweep.
    """
    lam_h, lam_a = demand.lambda_h, demand.lambda_a
    lat = network.free_flow_latencies
    best = None
    for m in range(1, network.n + 1):
        for ell in oracle_critical_latencies(network, m, levels):
            placed = _max_autonomous_grid(network, m, ell, demand)
            if placed is None:
                continue
            placed = min(placed, lam_a)
            remaining = lam_a - placed
            cost = ell * (lam_h + placed)
            volumes = [(ell, placed)]
            feasible = True
            for j in range(m + 1, network.n + 1):
                if remaining <= 1e-9:
                    break
                road = network.road(j)
                cap = road.speed * road.lanes / road.headway_auto
                take = min(cap, remaining)
                cost += lat[j - 1] * take
                volumes.append((lat[j - 1], take))
                remaining -= take
            if remaining > 1e-9:
                feasible = False
            if not feasible:
                continue
            # flexibility volume condition on a dense latency sweep
            lat_max = max(v for v, _ in volumes)
            probes = np.linspace(ell, lat_max * 1.05 + 1e-9, 2000).tolist()
            for kappa, _ in levels:
                if math.isfinite(kappa):
                    probes.append(kappa * ell * (1 + 1e-9))
                    probes.append(kappa * ell * (1 + 1e-6))
            ok = True
            if lam_a > 1e-12:
                for probe in probes:
                    need = profile_phi(levels, probe / ell) * lam_a
                    have = sum(v for l, v in volumes if l <= probe * (1 + 1e-9))
                    if have < need - 1e-7 * max(1.0, lam_a):
                        ok = False
                        break
            if not ok:
                continue
            if best is None or cost < best:
                best = cost
    return best
