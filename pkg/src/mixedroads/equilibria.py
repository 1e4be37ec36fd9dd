"""Equilibrium benchmarks for selfish and flexible routing.

Two reference points bracket what pricing can achieve on a parallel network:

* the best-case Nash equilibrium (BNE), where every vehicle is selfish and we
  pick the equilibrium with minimum total latency, and
* the best-case flexible Nash equilibrium (BFNE), where a profiled share of
  autonomous users tolerates latencies up to given multiples of the
  equilibrium latency.

Both solvers exploit the ordered structure of parallel roads: in the best
selfish equilibrium some prefix of roads is congested at a common latency,
one road runs in free-flow, and everything above is empty.  The flexible
variant additionally fills roads beyond the equilibrium prefix with
autonomous flow at their all-autonomous maximum.  The continuous subproblems
reduce to small linear programs because holding a road congested at a fixed
latency is an affine constraint on its flows (see network.congestion_line).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import (
    DemandSpec,
    RoadNetwork,
    Routing,
    congestion_line,
    max_flow,
    routing_latencies,
    total_latency,
)
from .simplex import solve_lp

LATENCY_RTOL = 1e-6     # latency equality comparisons
VOLUME_ATOL = 1e-9      # flexibility volume comparisons


class InfeasibleDemandError(ValueError):
    """Demand cannot be routed at any equilibrium of the network."""


@dataclass(frozen=True)
class FlexibilityProfile:
    """Step profile of how far autonomous users will stretch beyond the minimum.

    ``levels`` is an ordered tuple of (kappa, phi) pairs with kappa >= 1
    strictly increasing and phi nondecreasing in [0, 1].  phi(k) equals the
    first level's phi for k <= kappa_1, the j-th level's phi on
    (kappa_{j-1}, kappa_j], and 1 beyond the last kappa: a fraction phi(k) of
    autonomous users rejects any latency above k times the equilibrium
    latency.  A level kappa of ``inf`` makes everyone below it arbitrarily
    flexible.
    """

    levels: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        levels = tuple((float(k), float(p)) for k, p in self.levels)
        if not levels:
            raise ValueError("profile needs at least one flexibility level")
        kappas = [k for k, _ in levels]
        phis = [p for _, p in levels]
        if any(k < 1.0 for k in kappas):
            raise ValueError("flexibility ratios must be at least 1")
        if any(k2 <= k1 for k1, k2 in zip(kappas, kappas[1:])):
            raise ValueError("flexibility ratios must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for p in phis):
            raise ValueError("rejecting fractions must lie in [0, 1]")
        if any(p2 < p1 for p1, p2 in zip(phis, phis[1:])):
            raise ValueError("rejecting fractions must be nondecreasing")
        object.__setattr__(self, "levels", levels)

    @property
    def kappas(self) -> tuple[float, ...]:
        return tuple(k for k, _ in self.levels)

    def rejecting_fraction(self, kappa: float) -> float:
        """phi(kappa): fraction of users rejecting latency kappa times the minimum."""
        if kappa < 0:
            raise ValueError("latency ratio must be nonnegative")
        for k, p in self.levels:
            if kappa <= k:
                return p
        return 1.0

    def volume_requirements(self) -> list[tuple[float, float]]:
        """Finite check set equivalent to the for-all-latency volume condition.

        Returns (kappa, required_fraction) pairs: at least required_fraction
        of the autonomous volume must travel at latency <= kappa times the
        equilibrium latency.  One entry guards the value at ratio 1, then one
        entry per upward jump of the profile (the implicit final jump to 1
        included).  Ratios of ``inf`` impose nothing and are dropped.
        """
        checks = [(1.0, self.rejecting_fraction(1.0))]
        for j, (kappa, _) in enumerate(self.levels):
            post = self.levels[j + 1][1] if j + 1 < len(self.levels) else 1.0
            if math.isfinite(kappa):
                checks.append((kappa, post))
        merged: dict[float, float] = {}
        for kappa, frac in checks:
            merged[kappa] = max(frac, merged.get(kappa, 0.0))
        return sorted(merged.items())


def fully_flexible_profile() -> FlexibilityProfile:
    """Profile under which autonomous users accept any latency."""
    return FlexibilityProfile(levels=((math.inf, 0.0),))


@dataclass(frozen=True)
class EquilibriumResult:
    """Solved equilibrium: routing, structural indices, and its total cost."""

    routing: Routing
    m_eq: int
    m_all: int
    eq_latency: float
    cost: float

    def to_dict(self) -> dict:
        return {
            "m_eq": self.m_eq,
            "m_all": self.m_all,
            "eq_latency": self.eq_latency,
            "cost": self.cost,
            "routing": self.routing.to_dict(),
        }


def check_nash(network: RoadNetwork, routing: Routing, rtol: float = LATENCY_RTOL) -> bool:
    """True when no road with human flow is slower than any other road."""
    lat = routing_latencies(network, routing)
    human_used = routing.f_h > 0
    if not human_used.any():
        return True
    worst_used = lat[human_used].max()
    return bool(worst_used <= lat.min() * (1.0 + rtol))


def _eq_prefix_lp(network: RoadNetwork, m_eq: int, eq_latency: float,
                  lambda_h: float, lambda_a: float, *,
                  autonomous_equality: bool, objective_max_autonomous: bool):
    """LP over flows on roads 1..m_eq with the prefix held at eq_latency.

    Roads below m_eq are congested at eq_latency (affine equality).  Road
    m_eq sits at eq_latency too: when eq_latency equals its free-flow latency
    this is the plain capacity constraint (covering both the free-flow regime
    and the congested boundary at maximum flow), otherwise the road must be
    congested and the equality pins it.  Human flow must sum to lambda_h;
    autonomous flow sums to lambda_a exactly or at most, per
    ``autonomous_equality``.

    Returns (f_h, f_a, s_m) over the prefix, or None when infeasible.
    """
    m = m_eq
    road_m = network.road(m)
    a_m = road_m.free_flow_latency
    n_var = 2 * m  # f_h[1..m] then f_a[1..m]
    a_eq_rows, b_eq = [], []
    a_ub_rows, b_ub = [], []

    for i in range(1, m):
        line = congestion_line(network.road(i), eq_latency)
        row = np.zeros(n_var)
        row[i - 1] = line.c_h
        row[m + i - 1] = line.c_a
        a_eq_rows.append(row)
        b_eq.append(line.rhs)

    at_free_flow = abs(eq_latency - a_m) <= LATENCY_RTOL * max(1.0, a_m)
    if at_free_flow:
        row = np.zeros(n_var)
        row[m - 1] = road_m.headway_human
        row[2 * m - 1] = road_m.headway_auto
        a_ub_rows.append(row)
        b_ub.append(road_m.speed * road_m.lanes)
        s_m = 0
    else:
        line = congestion_line(road_m, eq_latency)
        row = np.zeros(n_var)
        row[m - 1] = line.c_h
        row[2 * m - 1] = line.c_a
        a_eq_rows.append(row)
        b_eq.append(line.rhs)
        s_m = 1

    row = np.zeros(n_var)
    row[:m] = 1.0
    a_eq_rows.append(row)
    b_eq.append(lambda_h)

    row = np.zeros(n_var)
    row[m:] = 1.0
    if autonomous_equality:
        a_eq_rows.append(row)
        b_eq.append(lambda_a)
    else:
        a_ub_rows.append(row)
        b_ub.append(lambda_a)

    c = np.zeros(n_var)
    if objective_max_autonomous:
        c[m:] = 1.0
    res = solve_lp(c, np.array(a_eq_rows), np.array(b_eq),
                   np.array(a_ub_rows) if a_ub_rows else None,
                   np.array(b_ub) if b_ub else None,
                   maximize=objective_max_autonomous)
    if not res.ok:
        return None
    x = np.clip(res.x, 0.0, None)
    return x[:m], x[m:], s_m


def _prefix_routing(network: RoadNetwork, m_eq: int, f_h: np.ndarray,
                    f_a: np.ndarray, s_m: int) -> Routing:
    n = network.n
    full_h = np.zeros(n)
    full_a = np.zeros(n)
    s = np.zeros(n, dtype=int)
    full_h[:m_eq] = f_h
    full_a[:m_eq] = f_a
    s[:m_eq - 1] = 1
    s[m_eq - 1] = s_m
    return Routing(full_h, full_a, s)


def ne_feasible(network: RoadNetwork, demand: DemandSpec, m_eq: int) -> Routing | None:
    """A selfish equilibrium routing with longest equilibrium road m_eq, if any.

    Roads below m_eq run congested at that road's free-flow latency, road
    m_eq runs in free-flow, roads above stay empty, and both demands are met
    exactly.  Returns None when no such routing exists.
    """
    if not 1 <= m_eq <= network.n:
        raise IndexError(f"road index {m_eq} out of range 1..{network.n}")
    a_m = network.road(m_eq).free_flow_latency
    sol = _eq_prefix_lp(network, m_eq, a_m, demand.lambda_h, demand.lambda_a,
                        autonomous_equality=True, objective_max_autonomous=False)
    if sol is None:
        return None
    f_h, f_a, _ = sol
    return _prefix_routing(network, m_eq, f_h, f_a, s_m=0)


def solve_bne(network: RoadNetwork, demand: DemandSpec) -> EquilibriumResult:
    """Best-case Nash equilibrium: minimum total latency among selfish routings.

    Scans candidate equilibrium roads in order of free-flow latency and stops
    at the first feasible one; every equilibrium routing at that index costs
    the same because all flow travels at the same latency.
    """
    for m_eq in range(1, network.n + 1):
        routing = ne_feasible(network, demand, m_eq)
        if routing is not None:
            return EquilibriumResult(
                routing=routing,
                m_eq=m_eq,
                m_all=m_eq,
                eq_latency=network.road(m_eq).free_flow_latency,
                cost=total_latency(network, routing),
            )
    raise InfeasibleDemandError(
        f"demand ({demand.lambda_h}, {demand.lambda_a}) exceeds network capacity "
        "at every selfish equilibrium")


def critical_latency_candidates(network: RoadNetwork, m_eq: int,
                                profile: FlexibilityProfile) -> list[float]:
    """Candidate equilibrium latencies for a flexible equilibrium at road m_eq.

    The road's own free-flow latency plus every ratio a_i / kappa_j that
    falls strictly inside the admissible latency window; sorted descending.
    """
    if not 1 <= m_eq <= network.n:
        raise IndexError(f"road index {m_eq} out of range 1..{network.n}")
    lat = network.free_flow_latencies
    a_m = lat[m_eq - 1]
    upper = lat[m_eq] if m_eq < network.n else math.inf
    candidates = {a_m}
    for i in range(m_eq + 1, network.n + 1):
        for kappa in profile.kappas:
            if not math.isfinite(kappa):
                continue
            value = lat[i - 1] / kappa
            if a_m < value < upper:
                candidates.add(value)
    return sorted(candidates, reverse=True)


def max_autonomous_on_eq_roads(network: RoadNetwork, m_eq: int, eq_latency: float,
                               demand: DemandSpec):
    """Fit as much autonomous flow as possible on the equilibrium prefix.

    All human demand rides the prefix; autonomous flow on it may fall short
    of the total demand, with the remainder routed over the roads above
    m_eq.  Returns (f_h, f_a, s_m) over roads 1..m_eq or None if infeasible.
    """
    a_m = network.road(m_eq).free_flow_latency
    upper = (network.road(m_eq + 1).free_flow_latency
             if m_eq < network.n else math.inf)
    if not (a_m - 1e-12 <= eq_latency < upper + 1e-12):
        raise ValueError(
            f"equilibrium latency {eq_latency} outside [{a_m}, {upper})")
    return _eq_prefix_lp(network, m_eq, eq_latency, demand.lambda_h,
                         demand.lambda_a, autonomous_equality=False,
                         objective_max_autonomous=True)


def longest_used_road(network: RoadNetwork, m_eq: int, autonomous_placed: float,
                      demand: DemandSpec) -> int:
    """Smallest index from m_eq up whose prefix absorbs the autonomous demand.

    Roads strictly between m_eq and the result take their all-autonomous
    maximum flow; the remainder lands on the returned road.
    """
    if autonomous_placed > demand.lambda_a * (1 + 1e-9) + 1e-12:
        raise ValueError("placed autonomous flow exceeds demand")
    remaining = demand.lambda_a - autonomous_placed
    if remaining <= VOLUME_ATOL:
        return m_eq
    acc = 0.0
    for j in range(m_eq + 1, network.n + 1):
        acc += max_flow(network.road(j), 1.0)
        if acc >= remaining - VOLUME_ATOL:
            return j
    raise InfeasibleDemandError(
        "autonomous demand exceeds the free-flow capacity of the remaining roads")


def check_fne(network: RoadNetwork, routing: Routing, profile: FlexibilityProfile,
              eq_latency: float) -> bool:
    """Flexible-equilibrium check for a feasible routing.

    1. Every road carrying human flow runs at the common minimum latency of
       the network (selfish humans), and
    2. for every flexibility threshold kappa of the profile, the autonomous
       volume traveling at latency <= kappa * eq_latency covers the fraction
       of users unwilling to go beyond it.  Checking at the profile's jump
       ratios is exactly equivalent to quantifying over all latency levels.
    """
    lat = routing_latencies(network, routing)
    lat_min = lat.min()
    human_used = routing.f_h > 0
    if human_used.any():
        worst = lat[human_used].max()
        if worst > lat_min * (1.0 + LATENCY_RTOL):
            return False
    total_a = routing.f_a.sum()
    if total_a <= VOLUME_ATOL:
        return True
    for kappa, required in profile.volume_requirements():
        threshold = kappa * eq_latency
        volume = routing.f_a[lat <= threshold * (1.0 + LATENCY_RTOL)].sum()
        if volume < required * total_a - VOLUME_ATOL:
            return False
    return True


def solve_bfne(network: RoadNetwork, demand: DemandSpec,
               profile: FlexibilityProfile) -> EquilibriumResult:
    """Best-case flexible Nash equilibrium.

    Enumerates the equilibrium road, then each candidate equilibrium latency
    (descending), packs the equilibrium prefix with autonomous flow via the
    LP, spills the remainder greedily over the following roads at their
    all-autonomous maximum, and keeps the cheapest candidate passing the
    flexibility check.  Ties break toward the smaller equilibrium road, then
    the larger equilibrium latency.
    """
    best: EquilibriumResult | None = None
    n = network.n
    for m_eq in range(1, n + 1):
        for eq_lat in critical_latency_candidates(network, m_eq, profile):
            prefix = max_autonomous_on_eq_roads(network, m_eq, eq_lat, demand)
            if prefix is None:
                continue
            f_h, f_a, s_m = prefix
            placed = float(f_a.sum())
            full_h = np.zeros(n)
            full_a = np.zeros(n)
            s = np.zeros(n, dtype=int)
            full_h[:m_eq] = f_h
            full_a[:m_eq] = f_a
            s[:m_eq - 1] = 1
            s[m_eq - 1] = s_m
            remaining = demand.lambda_a - placed
            m_all = m_eq
            feasible = True
            if remaining > VOLUME_ATOL:
                for j in range(m_eq + 1, n + 1):
                    take = min(max_flow(network.road(j), 1.0), remaining)
                    full_a[j - 1] = take
                    remaining -= take
                    m_all = j
                    if remaining <= VOLUME_ATOL:
                        break
                if remaining > VOLUME_ATOL:
                    feasible = False
            if not feasible:
                continue
            routing = Routing(full_h, full_a, s)
            if not check_fne(network, routing, profile, eq_lat):
                continue
            cost = total_latency(network, routing)
            if best is None or cost < best.cost * (1.0 - 1e-12):
                best = EquilibriumResult(routing=routing, m_eq=m_eq, m_all=m_all,
                                         eq_latency=eq_lat, cost=cost)
    if best is None:
        raise InfeasibleDemandError(
            f"demand ({demand.lambda_h}, {demand.lambda_a}) admits no flexible "
            "equilibrium under the given profile")
    return best
