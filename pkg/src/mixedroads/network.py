"""Physical model of parallel mixed-autonomy roads.

A road carries human-driven and autonomous (platooning) vehicle flow.  The
flow/latency behavior follows the triangular fundamental diagram: flow rises
linearly with density up to a critical density that grows with the autonomy
level (autonomous vehicles keep shorter headways), then falls linearly to zero
at the jam density.  Latency is constant in free-flow and increases as flow
*decreases* on the congested branch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Capacity comparisons are absolute; demand/flow equalities relative.
# Downstream LP/NLP solutions are only accurate to roughly these levels.
CAPACITY_TOL = 1e-9
FLOW_EQ_RTOL = 1e-7


class NetworkError(ValueError):
    """Invalid road or network description."""


class InfeasibleRoutingError(ValueError):
    """Routing violates capacity or demand constraints."""


@dataclass(frozen=True)
class Road:
    """One road of a parallel network.

    length:         distance covered by the road
    speed:          nominal (free-flow) speed
    lanes:          number of lanes
    headway_human:  distance per human-driven vehicle at nominal speed
    headway_auto:   distance per autonomous vehicle, at most headway_human
    max_density:    jam density at which flow stops entirely
    """

    length: float
    speed: float
    lanes: float
    headway_human: float
    headway_auto: float
    max_density: float

    # Construction is deliberately permissive so that validate_network can
    # report violations instead of the constructor throwing half-way through
    # loading a file.

    @property
    def free_flow_latency(self) -> float:
        return self.length / self.speed

    def to_dict(self) -> dict:
        return {
            "d": self.length,
            "v": self.speed,
            "b": self.lanes,
            "h_h": self.headway_human,
            "h_a": self.headway_auto,
            "n_bar": self.max_density,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Road":
        try:
            return cls(
                length=float(doc["d"]),
                speed=float(doc["v"]),
                lanes=float(doc["b"]),
                headway_human=float(doc["h_h"]),
                headway_auto=float(doc["h_a"]),
                max_density=float(doc["n_bar"]),
            )
        except KeyError as missing:
            raise NetworkError(f"road document missing key {missing}") from None


def free_flow_latency(road: Road) -> float:
    """Travel time at nominal speed."""
    return road.free_flow_latency


def critical_density(road: Road, alpha: float) -> float:
    """Density at which the road tips into congestion, at autonomy level alpha.

    Equals lanes / (alpha * headway_auto + (1 - alpha) * headway_human); the
    denominator is the average rear-bumper-to-rear-bumper spacing.
    Nondecreasing in alpha.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"autonomy level must lie in [0, 1], got {alpha}")
    spacing = alpha * road.headway_auto + (1.0 - alpha) * road.headway_human
    return road.lanes / spacing


def max_flow(road: Road, alpha: float) -> float:
    """Maximum sustainable flow at autonomy level alpha: speed * critical density."""
    return road.speed * critical_density(road, alpha)


def alpha_from_flows(f_h: float, f_a: float) -> float:
    """Autonomy level of a road given its flows; 0 by convention when empty."""
    total = f_h + f_a
    if total <= 0.0:
        return 0.0
    return f_a / total


def flow_from_density(road: Road, n_h: float, n_a: float) -> float:
    """Total flow as a function of per-type densities (triangular diagram).

    Rises at the nominal speed up to the critical density, then descends
    linearly to zero at the jam density.
    """
    if n_h < 0 or n_a < 0:
        raise ValueError("densities must be nonnegative")
    n = n_h + n_a
    alpha = 0.0 if n <= 0 else n_a / n
    n_crit = critical_density(road, alpha)
    if n <= n_crit:
        return road.speed * n
    if n <= road.max_density:
        return road.speed * n_crit * (road.max_density - n) / (road.max_density - n_crit)
    return 0.0


def latency(road: Road, f_h: float, f_a: float, congested: int) -> float:
    """Latency given flows and the congestion flag of the road.

    Free-flow (congested=0) latency is constant.  On the congested branch the
    latency is

        d * ( n_bar / (f_h + f_a) + (n_crit(alpha) - n_bar) / (v * n_crit(alpha)) )

    which decreases strictly as total flow grows toward the maximum flow, where
    it meets the free-flow latency.
    """
    if f_h < 0 or f_a < 0:
        raise ValueError("flows must be nonnegative")
    if congested not in (0, 1):
        raise ValueError("congestion flag must be 0 or 1")
    if congested == 0:
        return road.free_flow_latency
    total = f_h + f_a
    if total <= 0.0:
        raise ValueError("congested latency is undefined at zero flow")
    alpha = f_a / total
    cap = max_flow(road, alpha)
    if total > cap + CAPACITY_TOL:
        raise InfeasibleRoutingError(
            f"flow {total} exceeds maximum flow {cap} at autonomy level {alpha:.4f}")
    n_crit = critical_density(road, alpha)
    return road.length * (road.max_density / total
                          + (n_crit - road.max_density) / (road.speed * n_crit))


@dataclass(frozen=True)
class CongestionLine:
    """Affine form of the fixed-latency congestion constraint of one road.

    Holding a road congested at a target latency L constrains its flows to
    the line  c_h * f_h + c_a * f_a = rhs,  obtained by substituting the
    congested-latency expression and clearing the critical-density
    denominator.  Valid for L >= free-flow latency; both coefficients are then
    strictly positive, so the line never passes through the origin.
    """

    c_h: float
    c_a: float
    rhs: float


def congestion_line(road: Road, target_latency: float) -> CongestionLine:
    a = road.free_flow_latency
    if target_latency < a - 1e-12 * max(1.0, a):
        raise ValueError("a congested road cannot be faster than free-flow")
    scale = road.length * road.max_density / (road.speed * road.lanes)
    return CongestionLine(
        c_h=(target_latency - a) + scale * road.headway_human,
        c_a=(target_latency - a) + scale * road.headway_auto,
        rhs=road.length * road.max_density,
    )


@dataclass(frozen=True)
class RoadNetwork:
    """Ordered collection of parallel roads, indexed 1..N by rising free-flow latency."""

    roads: tuple[Road, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "roads", tuple(self.roads))

    @property
    def n(self) -> int:
        return len(self.roads)

    @property
    def free_flow_latencies(self) -> np.ndarray:
        return np.array([r.free_flow_latency for r in self.roads])

    def road(self, index: int) -> Road:
        """Road by 1-based index."""
        if not 1 <= index <= self.n:
            raise IndexError(f"road index {index} out of range 1..{self.n}")
        return self.roads[index - 1]

    def to_dict(self) -> dict:
        return {"roads": [r.to_dict() for r in self.roads]}


def validate_network(network: RoadNetwork) -> list[str]:
    """Return a list of invariant violations (empty when the network is valid).

    Covers per-road positivity/headway/jam-density checks and the strict
    ordering of free-flow latencies across roads.  Never raises.
    """
    violations: list[str] = []
    if network.n == 0:
        violations.append("network has no roads")
        return violations
    for i, road in enumerate(network.roads, start=1):
        positive = True
        for name in ("length", "speed", "lanes", "headway_human",
                     "headway_auto", "max_density"):
            if not getattr(road, name) > 0:
                violations.append(f"road {i}: field {name!r} not strictly positive")
                positive = False
        if not positive:
            continue
        if road.headway_auto > road.headway_human:
            violations.append(f"road {i}: autonomous headway exceeds human headway")
        if not road.max_density > road.lanes / road.headway_auto:
            violations.append(
                f"road {i}: jam density does not exceed all-autonomous critical density")
    if all(r.length > 0 and r.speed > 0 for r in network.roads):
        lat = [r.free_flow_latency for r in network.roads]
        for i in range(1, len(lat)):
            if not lat[i] > lat[i - 1]:
                violations.append(
                    f"roads {i} and {i + 1}: free-flow latencies not strictly "
                    f"increasing ({lat[i - 1]} vs {lat[i]})")
    return violations


@dataclass(frozen=True)
class DemandSpec:
    """Total flow demands of the two vehicle types."""

    lambda_h: float
    lambda_a: float

    def __post_init__(self) -> None:
        if self.lambda_h < 0 or self.lambda_a < 0:
            raise ValueError("demands must be nonnegative")


@dataclass(frozen=True)
class Routing:
    """Network state: per-road human/autonomous flows plus congestion flags."""

    f_h: np.ndarray
    f_a: np.ndarray
    s: np.ndarray

    def __post_init__(self) -> None:
        f_h = np.asarray(self.f_h, dtype=float)
        f_a = np.asarray(self.f_a, dtype=float)
        s = np.asarray(self.s, dtype=int)
        if not (f_h.shape == f_a.shape == s.shape) or f_h.ndim != 1:
            raise ValueError("routing vectors must be 1-d and of equal length")
        if (f_h < 0).any() or (f_a < 0).any():
            raise ValueError("flows must be nonnegative")
        if not np.isin(s, (0, 1)).all():
            raise ValueError("congestion flags must be 0 or 1")
        object.__setattr__(self, "f_h", f_h)
        object.__setattr__(self, "f_a", f_a)
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> int:
        return self.f_h.size

    def to_dict(self) -> dict:
        return {
            "f_h": self.f_h.tolist(),
            "f_a": self.f_a.tolist(),
            "s": self.s.tolist(),
        }


def routing_latencies(network: RoadNetwork, routing: Routing) -> np.ndarray:
    """Per-road latencies under a routing (1-based road i at position i-1)."""
    if routing.n != network.n:
        raise ValueError("routing length does not match network")
    return np.array([
        latency(road, routing.f_h[i], routing.f_a[i], int(routing.s[i]))
        for i, road in enumerate(network.roads)
    ])


def is_feasible_routing(network: RoadNetwork, routing: Routing,
                        demand: DemandSpec, elastic_autonomous: bool = False) -> bool:
    """Check capacities and demand satisfaction.

    With elastic autonomous demand the autonomous total may fall short of
    lambda_a but never exceed it.
    """
    if routing.n != network.n:
        raise ValueError("routing length does not match network")
    for i, road in enumerate(network.roads):
        total = routing.f_h[i] + routing.f_a[i]
        cap = max_flow(road, alpha_from_flows(routing.f_h[i], routing.f_a[i]))
        if total > cap + CAPACITY_TOL:
            return False
    tol_h = FLOW_EQ_RTOL * max(1.0, demand.lambda_h)
    tol_a = FLOW_EQ_RTOL * max(1.0, demand.lambda_a)
    if abs(routing.f_h.sum() - demand.lambda_h) > tol_h:
        return False
    total_a = routing.f_a.sum()
    if elastic_autonomous:
        return total_a <= demand.lambda_a + tol_a
    return abs(total_a - demand.lambda_a) <= tol_a


def total_latency(network: RoadNetwork, routing: Routing) -> float:
    """Aggregate vehicle-time cost: sum over roads of flow times latency."""
    if routing.n != network.n:
        raise ValueError("routing length does not match network")
    cost = 0.0
    for i, road in enumerate(network.roads):
        total = routing.f_h[i] + routing.f_a[i]
        if total <= 0.0:
            continue
        cost += total * latency(road, routing.f_h[i], routing.f_a[i], int(routing.s[i]))
    return cost


def load_network(source: str | Path | dict) -> RoadNetwork:
    """Parse a network document, validating it on load.

    Format: {"roads": [{"d", "v", "b", "h_h", "h_a", "n_bar"}, ...]} with roads
    listed in increasing free-flow-latency order.
    """
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text())
    else:
        doc = source
    if not isinstance(doc, dict) or "roads" not in doc:
        raise NetworkError("network document must contain a 'roads' array")
    try:
        roads = tuple(Road.from_dict(rd) for rd in doc["roads"])
    except NetworkError:
        raise
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"malformed road entry: {exc}") from None
    network = RoadNetwork(roads)
    violations = validate_network(network)
    if violations:
        raise NetworkError("invalid network: " + "; ".join(violations))
    return network


def save_network(network: RoadNetwork, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network.to_dict(), indent=2, sort_keys=True) + "\n")
