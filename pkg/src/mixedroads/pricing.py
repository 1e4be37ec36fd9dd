"""Social-planner pricing of autonomous routes on a parallel network.

The planner prices each route, indirectly steering elastic autonomous demand
through the logit choice model while human-driven demand routes selfishly.
The objective trades average travel time against total road usage:

    J = (sum of flow * latency) / (total flow) - theta * (total flow)

Structure searched: the longest human-used road k splits the network into a
congested prefix (selfishness forces equal latencies, roads below k run
congested at road k's latency) and a free-flow tail without human flow.  Road
k itself may run in free-flow or congested; when every sampled user has a
positive money weight there is an optimal solution with road k in free-flow,
so only that branch is searched.  For each (k, flag) branch a multistart
augmented-Lagrangian solve optimizes flows and prices jointly, with the
choice coupling handled as equality constraints and the dominated-option set
frozen per restart (its membership is enforced by explicit price-ordering
constraints and re-verified on the exact model afterwards).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .auglag import minimize_auglag
from .choice import (
    PopulationSamples,
    RouteOffer,
    _reward_matrix,
    _reward_matrix_raw,
    _softmax_rows,
    dominated_set,
    load_population,
)
from .equilibria import solve_bne, InfeasibleDemandError
from .network import (
    DemandSpec,
    RoadNetwork,
    Routing,
    latency,
    load_network,
    total_latency,
)

STRUCTURE_RTOL = 1e-4  # latency-equality tolerance for structure verification


class InfeasiblePricingError(ValueError):
    """No candidate satisfied the constraints; carries the best residuals seen."""

    def __init__(self, message: str, residuals: "ConstraintResiduals | None" = None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class PricingProblem:
    """Inputs of the planner's optimization."""

    network: RoadNetwork
    lambda_h: float
    lambda_a: float
    theta: float
    profit_floor: float
    fuel_cost: float
    alt_latency: float
    population: PopulationSamples
    uncontrolled_lambda_b: float | None = None

    def __post_init__(self) -> None:
        for name in ("lambda_h", "lambda_a", "theta", "fuel_cost", "alt_latency"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.uncontrolled_lambda_b is not None and self.uncontrolled_lambda_b < 0:
            raise ValueError("uncontrolled demand must be nonnegative")


@dataclass(frozen=True)
class SolverConfig:
    """Multistart and tolerance settings for solve_pricing."""

    restarts: int = 100
    seed: int = 0
    constraint_tol: float = 1e-6
    optimality_tol: float = 1e-6
    max_inner_iterations: int = 500
    accept_tol: float = 1e-5
    price_cap: float | None = None
    force_theorem1: bool | None = None


@dataclass(frozen=True)
class ConstraintResiduals:
    """Signed residuals of the pricing constraints for one candidate.

    Equality rows report (achieved - required); inequality rows report slack,
    so negative values are violations.  ``normalized_max`` is the worst
    violation after dividing each row by its natural scale.
    """

    entries: tuple[tuple[str, float], ...]
    normalized_max: float

    def by_name(self, prefix: str) -> list[tuple[str, float]]:
        return [(n, v) for n, v in self.entries if n.startswith(prefix)]


@dataclass(frozen=True)
class PricingSolution:
    """Solved pricing problem: flows, prices, and bookkeeping."""

    routing: Routing
    prices: np.ndarray
    k: int
    objective: float
    q: np.ndarray
    profit: float
    f_b: np.ndarray | None
    restarts_used: int
    max_residual: float

    def combined_routing(self) -> Routing:
        """Routing with planner and uncontrolled autonomous flow merged."""
        if self.f_b is None:
            return self.routing
        return Routing(self.routing.f_h, self.routing.f_a + self.f_b, self.routing.s)

    def to_dict(self) -> dict:
        doc = {
            "routing": self.routing.to_dict(),
            "prices": self.prices.tolist(),
            "k": self.k,
            "objective": self.objective,
            "q": self.q.tolist(),
            "profit": self.profit,
            "restarts_used": self.restarts_used,
            "max_residual": self.max_residual,
        }
        doc["f_b"] = self.f_b.tolist() if self.f_b is not None else None
        return doc


def social_objective(network: RoadNetwork, routing: Routing, theta: float) -> float:
    """Average latency minus theta times throughput; undefined at zero flow."""
    flow = float((routing.f_h + routing.f_a).sum())
    if flow <= 0.0:
        raise ValueError("the social objective is undefined at zero total flow")
    return total_latency(network, routing) / flow - theta * flow


def default_price_cap(problem: PricingProblem) -> float:
    """Upper bound of the price search box.

    Ten times the worst-case fuel cost plus ten times the largest free-flow
    latency scaled by the population's steepest time/money tradeoff (ratio
    capped at 1e3 so a money-indifferent sample cannot blow up the box).
    """
    d_max = max(r.length for r in problem.network.roads)
    a_max = max(r.free_flow_latency for r in problem.network.roads)
    omega1_max = float(problem.population.values[:, 0].max())
    omega2_min = float(problem.population.values[:, 1].min())
    ratio = omega1_max / omega2_min if omega2_min > 0 else math.inf
    ratio = min(ratio, 1e3)
    return max(1.0, 10.0 * problem.fuel_cost * d_max + 10.0 * a_max * ratio)


def _fractions_fixed_dominance(population: PopulationSamples, latencies: np.ndarray,
                               prices: np.ndarray, alt_latency: float,
                               dominated_mask: np.ndarray) -> np.ndarray:
    """Expected fractions with a frozen dominated set (index 0 declines)."""
    rewards = _reward_matrix_raw(population.values, latencies, prices,
                                 alt_latency, dominated_mask)
    return _softmax_rows(rewards).mean(axis=0)


class _Branch:
    """One (k, road-k congestion flag) structure with a frozen dominated set."""

    def __init__(self, problem: PricingProblem, k: int, s_k: int,
                 dominated: frozenset[int], price_cap: float, lambda_b: float):
        self.problem = problem
        self.network = problem.network
        self.k = k
        self.s_k = s_k
        self.dominated = dominated
        self.price_cap = price_cap
        self.lambda_b = lambda_b
        self.n = problem.network.n
        self.has_b = lambda_b > 0.0
        self.a = problem.network.free_flow_latencies
        self.a_next = self.a[k] if k < self.n else math.inf
        self.price_scale = max(1.0, price_cap / 10.0)
        self.margin = 1e-6 * self.price_scale
        self.dominated_mask = np.zeros(self.n, dtype=bool)
        for i in dominated:
            self.dominated_mask[i - 1] = True
        # Variable layout: f_h (k) | f_a (n) | f_b (k, only when present) | p (n)
        self.n_fb = k if self.has_b else 0
        self.dim = k + self.n + self.n_fb + self.n

    def split(self, x: np.ndarray):
        k, n, n_fb = self.k, self.n, self.n_fb
        f_h = x[:k]
        f_a = x[k:k + n]
        f_b = x[k + n:k + n + n_fb]
        p = x[k + n + n_fb:]
        return f_h, f_a, f_b, p

    def latencies(self, f_h: np.ndarray, f_a: np.ndarray, f_b: np.ndarray) -> np.ndarray:
        """Menu latencies under the branch's congestion profile.

        Congested roads use the congested-branch formula with the total flow
        floored away from the singularity at zero; the enormous latencies that
        produces near zero flow act as a barrier the optimizer retreats from.
        """
        lat = self.a.copy()
        congested_upto = self.k - 1 + (1 if self.s_k == 1 else 0)
        for i in range(congested_upto):
            road = self.network.roads[i]
            human = f_h[i]
            auto = f_a[i] + (f_b[i] if self.has_b and i < self.n_fb else 0.0)
            total = max(human + auto, 1e-9)
            share_a = auto / total
            share_h = 1.0 - share_a  # floored total counts the gap as human
            spacing = share_a * road.headway_auto + share_h * road.headway_human
            n_crit = road.lanes / spacing
            lat[i] = road.length * (road.max_density / total
                                    + (n_crit - road.max_density)
                                    / (road.speed * n_crit))
        return lat

    def fractions(self, lat: np.ndarray, p: np.ndarray) -> np.ndarray:
        return _fractions_fixed_dominance(self.problem.population, lat, p,
                                          self.problem.alt_latency,
                                          self.dominated_mask)

    def objective(self, x: np.ndarray) -> float:
        f_h, f_a, f_b, p = self.split(x)
        lat = self.latencies(f_h, f_a, f_b)
        totals = f_a.copy()
        totals[:self.k] += f_h
        if self.has_b:
            totals[:self.k] += f_b
        flow = totals.sum()
        if flow <= 1e-12:
            return 1e9
        return float((totals * lat).sum() / flow - self.problem.theta * flow)

    def equalities(self, x: np.ndarray) -> np.ndarray:
        prob = self.problem
        f_h, f_a, f_b, p = self.split(x)
        lat = self.latencies(f_h, f_a, f_b)
        q = self.fractions(lat, p)
        norm_h = max(1.0, prob.lambda_h)
        norm_a = max(1.0, prob.lambda_a)
        rows = [(f_h.sum() - prob.lambda_h) / norm_h]
        if self.has_b:
            rows.append((f_b.sum() - self.lambda_b) / max(1.0, self.lambda_b))
        ell_k = lat[self.k - 1]
        for i in range(self.k - 1):
            rows.append((lat[i] - ell_k) / self.a[self.k - 1])
        coupled = [i for i in range(self.k + 1, self.n + 1)] \
            + [i for i in sorted(self.dominated) if i <= self.k]
        for i in coupled:
            rows.append((f_a[i - 1] - prob.lambda_a * q[i]) / norm_a)
        free_pool = [i for i in range(1, self.k + 1) if i not in self.dominated]
        if free_pool:
            pooled_flow = sum(f_a[i - 1] for i in free_pool)
            pooled_q = sum(q[i] for i in free_pool)
            rows.append((pooled_flow - prob.lambda_a * pooled_q) / norm_a)
        # undominated routes sharing the equilibrium latency share one price
        anchor = free_pool[0] if free_pool else None
        if anchor is not None:
            for i in free_pool[1:]:
                rows.append((p[i - 1] - p[anchor - 1]) / self.price_scale)
        return np.array(rows)

    def inequalities(self, x: np.ndarray) -> np.ndarray:
        prob = self.problem
        f_h, f_a, f_b, p = self.split(x)
        lat = self.latencies(f_h, f_a, f_b)
        rows = []
        a_k = self.a[self.k - 1]
        if self.s_k == 1:
            rows.append((lat[self.k - 1] - a_k) / a_k)
            if math.isfinite(self.a_next):
                rows.append((self.a_next - lat[self.k - 1]) / a_k)
        for i, road in enumerate(self.network.roads):
            human = f_h[i] if i < self.k else 0.0
            auto = f_a[i] + (f_b[i] if self.has_b and i < self.n_fb else 0.0)
            cap = road.speed * road.lanes
            rows.append((cap - road.headway_human * human
                         - road.headway_auto * auto) / cap)
        profit = float((f_a * (p - np.array([r.length for r in self.network.roads])
                               * prob.fuel_cost)).sum())
        rows.append((profit - prob.profit_floor) / max(1.0, abs(prob.profit_floor)))
        rows.extend(self._pattern_rows(p))
        return np.array(rows)

    def _latency_position(self, i: int) -> int:
        """Menu ordering rank: the equilibrium prefix ties at rank 0."""
        return 0 if i <= self.k else i - self.k

    def _pattern_rows(self, p: np.ndarray) -> list[float]:
        """Price-ordering slack terms that keep the frozen dominated set valid."""
        rows: list[float] = []
        undominated = [j for j in range(1, self.n + 1) if j not in self.dominated]
        for j in undominated:
            pos_j = self._latency_position(j)
            for i in range(1, self.n + 1):
                if i == j:
                    continue
                pos_i = self._latency_position(i)
                if pos_i > pos_j:
                    continue
                if pos_i < pos_j:
                    rows.append((p[i - 1] - p[j - 1] - self.margin) / self.price_scale)
                elif i in self.dominated:
                    rows.append((p[i - 1] - p[j - 1]) / self.price_scale)
                elif i < j:
                    pass  # handled by the shared-price equality
        for j in sorted(self.dominated):
            witness = self._dominator_witness(j)
            if witness is None:
                continue
            i, strict = witness
            slack = p[j - 1] - p[i - 1] - (self.margin if strict else 0.0)
            rows.append(slack / self.price_scale)
        return rows

    def _dominator_witness(self, j: int) -> tuple[int, bool] | None:
        """Pick the road that must keep dominating j: the fastest undominated one.

        Returns (index, strict) where strict marks an equal-latency pair that
        needs a strictly cheaper dominator.
        """
        pos_j = self._latency_position(j)
        candidates = [i for i in range(1, self.n + 1)
                      if i != j and i not in self.dominated
                      and self._latency_position(i) <= pos_j]
        if not candidates:
            return None
        i = min(candidates, key=self._latency_position)
        return i, self._latency_position(i) == pos_j

    def bounds(self) -> list[tuple[float, float]]:
        prob = self.problem
        out: list[tuple[float, float]] = []
        out += [(0.0, max(prob.lambda_h, 1e-9))] * self.k
        out += [(0.0, max(prob.lambda_a, 1e-9))] * self.n
        out += [(0.0, max(self.lambda_b, 1e-9))] * self.n_fb
        out += [(0.0, self.price_cap)] * self.n
        return out

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        prob = self.problem
        f_h = prob.lambda_h * rng.dirichlet(np.ones(self.k))
        f_a = prob.lambda_a * rng.dirichlet(np.ones(self.n + 1))[:self.n]
        parts = [f_h, f_a]
        if self.has_b:
            parts.append(self.lambda_b * rng.dirichlet(np.ones(self.k)))
        parts.append(rng.uniform(0.0, self.price_cap, size=self.n))
        return np.concatenate(parts)

    def free_ride_start(self) -> np.ndarray:
        """Deterministic start near the high-ridership corner: zero prices,
        demand split evenly, autonomous flow following the choice model."""
        prob = self.problem
        prices = np.zeros(self.n)
        menu = _nominal_menu(self.network, self.k)
        q = self.fractions(menu, prices)
        f_h = np.full(self.k, prob.lambda_h / self.k)
        f_a = prob.lambda_a * q[1:]
        parts = [f_h, f_a]
        if self.has_b:
            parts.append(np.full(self.k, self.lambda_b / self.k))
        parts.append(prices)
        return np.concatenate(parts)

    def assemble(self, x: np.ndarray) -> tuple[Routing, np.ndarray, np.ndarray | None]:
        f_h, f_a, f_b, p = self.split(x)
        full_h = np.zeros(self.n)
        full_h[:self.k] = np.clip(f_h, 0.0, None)
        s = np.zeros(self.n, dtype=int)
        s[:self.k - 1] = 1
        s[self.k - 1] = self.s_k
        routing = Routing(full_h, np.clip(f_a, 0.0, None), s)
        full_b = None
        if self.has_b:
            full_b = np.zeros(self.n)
            full_b[:self.k] = np.clip(f_b, 0.0, None)
        return routing, p.copy(), full_b


def _nominal_menu(network: RoadNetwork, k: int) -> np.ndarray:
    """Latency ordering used to freeze dominance: prefix tied at road k's latency."""
    lat = network.free_flow_latencies.copy()
    lat[:k] = lat[k - 1]
    return lat


def _candidate_latencies(problem: PricingProblem, routing: Routing,
                         f_b: np.ndarray | None) -> np.ndarray:
    flows_a = routing.f_a + (f_b if f_b is not None else 0.0)
    out = np.empty(problem.network.n)
    for i, road in enumerate(problem.network.roads):
        if routing.s[i] == 1 and routing.f_h[i] + flows_a[i] <= 0:
            out[i] = math.inf  # congested flag without flow: broken candidate
        else:
            out[i] = latency(road, routing.f_h[i], flows_a[i], int(routing.s[i]))
    return out


def evaluate_constraints(problem: PricingProblem,
                         candidate: PricingSolution) -> ConstraintResiduals:
    """Exact-model residuals of all pricing constraints for a candidate.

    The expected fractions are recomputed from the candidate's menu with
    dominance re-derived, so a candidate whose frozen dominated set drifted
    from the true menu shows up here as a violation.
    """
    prob = problem
    net = prob.network
    n = net.n
    k = candidate.k
    routing = candidate.routing
    f_b = candidate.f_b
    lat = _candidate_latencies(prob, routing, f_b)
    offer = RouteOffer(latencies=np.where(np.isfinite(lat), lat, 1e12),
                       prices=candidate.prices, alt_latency=prob.alt_latency)
    dominated = dominated_set(offer)
    rewards = _reward_matrix(prob.population.values, offer,
                             np.array([i + 1 in dominated for i in range(n)]))
    q = _softmax_rows(rewards).mean(axis=0)

    entries: list[tuple[str, float]] = []
    normalized: list[float] = []

    def eq(name: str, value: float, scale: float) -> None:
        entries.append((name, value))
        normalized.append(abs(value) / scale)

    def ineq(name: str, slack: float, scale: float) -> None:
        entries.append((name, slack))
        normalized.append(max(0.0, -slack) / scale)

    norm_h = max(1.0, prob.lambda_h)
    norm_a = max(1.0, prob.lambda_a)
    eq("c13_human_demand", float(routing.f_h.sum() - prob.lambda_h), norm_h)
    if f_b is not None:
        lam_b = prob.uncontrolled_lambda_b or 0.0
        eq("c13b_uncontrolled_demand", float(f_b.sum() - lam_b), max(1.0, lam_b))
    for i in range(k + 1, n + 1):
        eq(f"c14_choice_road_{i}", float(routing.f_a[i - 1] - prob.lambda_a * q[i]),
           norm_a)
    for i in sorted(dominated):
        if i <= k:
            eq(f"c14_choice_dominated_road_{i}",
               float(routing.f_a[i - 1] - prob.lambda_a * q[i]), norm_a)
    pool = [i for i in range(1, k + 1) if i not in dominated]
    if pool:
        eq("c15_pooled_choice",
           float(sum(routing.f_a[i - 1] for i in pool)
                 - prob.lambda_a * sum(q[i] for i in pool)), norm_a)
    a = net.free_flow_latencies
    ell_k = lat[k - 1]
    ineq("c16_latency_lower", float(ell_k - a[k - 1]), max(1.0, a[k - 1]))
    if k < n:
        ineq("c16_latency_upper", float(a[k] - ell_k), max(1.0, a[k - 1]))
    for i in range(k + 1, n + 1):
        eq(f"c17_no_humans_road_{i}", float(routing.f_h[i - 1]), norm_h)
    for i in range(1, k):
        eq(f"c18_equal_latency_road_{i}", float(lat[i - 1] - ell_k),
           max(1.0, a[k - 1]))
    for i, road in enumerate(net.roads):
        auto = routing.f_a[i] + (f_b[i] if f_b is not None else 0.0)
        cap = road.speed * road.lanes
        ineq(f"c19_capacity_road_{i + 1}",
             float(cap - road.headway_human * routing.f_h[i]
                   - road.headway_auto * auto), cap)
    lengths = np.array([r.length for r in net.roads])
    profit = float((routing.f_a * (candidate.prices - lengths * prob.fuel_cost)).sum())
    ineq("c20_profit", profit - prob.profit_floor, max(1.0, abs(prob.profit_floor)))
    return ConstraintResiduals(entries=tuple(entries),
                               normalized_max=float(max(normalized)))


def _score_candidate(problem: PricingProblem, branch: _Branch,
                     x: np.ndarray) -> tuple[PricingSolution, ConstraintResiduals]:
    routing, prices, f_b = branch.assemble(x)
    lat = _candidate_latencies(problem, routing, f_b)
    if not np.isfinite(lat).all():
        raise ValueError("candidate routes congested flow of size zero")
    offer = RouteOffer(latencies=lat, prices=prices, alt_latency=problem.alt_latency)
    dominated = dominated_set(offer)
    q = _softmax_rows(_reward_matrix(
        problem.population.values, offer,
        np.array([i + 1 in dominated for i in range(problem.network.n)]))).mean(axis=0)
    totals = routing.f_h + routing.f_a + (f_b if f_b is not None else 0.0)
    flow = float(totals.sum())
    if flow <= 1e-12:
        raise ValueError("candidate carries no flow")
    objective = float((totals * lat).sum() / flow - problem.theta * flow)
    lengths = np.array([r.length for r in problem.network.roads])
    profit = float((routing.f_a * (prices - lengths * problem.fuel_cost)).sum())
    solution = PricingSolution(
        routing=routing, prices=prices, k=branch.k, objective=objective,
        q=q, profit=profit, f_b=f_b, restarts_used=0, max_residual=math.nan)
    residuals = evaluate_constraints(problem, solution)
    solution = replace(solution, max_residual=residuals.normalized_max)
    return solution, residuals


def _baseline_candidate(problem: PricingProblem, lambda_b: float,
                        price_cap: float) -> tuple[int, np.ndarray] | None:
    """All-decline candidate: humans (plus uncontrolled flow) at their best
    selfish equilibrium, prices at the cap, planner flow following the tiny
    residual demand the choice model still sends.  Returns (k, x)."""
    try:
        bne = solve_bne(problem.network, DemandSpec(problem.lambda_h, lambda_b))
    except InfeasibleDemandError:
        return None
    k = bne.m_eq
    n = problem.network.n
    prices = np.full(n, price_cap)
    menu = _nominal_menu(problem.network, k)
    offer = RouteOffer(latencies=menu, prices=prices, alt_latency=problem.alt_latency)
    dominated = dominated_set(offer)
    q = _softmax_rows(_reward_matrix(
        problem.population.values, offer,
        np.array([i + 1 in dominated for i in range(n)]))).mean(axis=0)
    f_a = problem.lambda_a * q[1:]
    parts = [bne.routing.f_h[:k], f_a]
    if lambda_b > 0:
        parts.append(bne.routing.f_a[:k])
    parts.append(prices)
    return k, np.concatenate(parts)


def _branch_dominated(problem: PricingProblem, k: int,
                      prices: np.ndarray) -> frozenset[int]:
    menu = _nominal_menu(problem.network, k)
    offer = RouteOffer(latencies=menu, prices=prices, alt_latency=problem.alt_latency)
    return frozenset(dominated_set(offer))


def solve_pricing(problem: PricingProblem,
                  config: SolverConfig = SolverConfig()) -> PricingSolution:
    """Locally solve the pricing optimization by structured multistart search.

    Enumerates the longest human-used road and road-k congestion flag, runs
    ``config.restarts`` augmented-Lagrangian solves per branch from random
    starting points, rescored on the exact choice model, and returns the best
    candidate within ``config.accept_tol``.  Ties prefer smaller k, then the
    free-flow branch.  Deterministic given problem, config, and seed.
    """
    if problem.uncontrolled_lambda_b not in (None, 0, 0.0):
        raise ValueError(
            "problem carries uncontrolled demand; use solve_pricing_partial_control")
    return _solve(problem, 0.0, config)


def solve_pricing_partial_control(problem: PricingProblem,
                                  config: SolverConfig = SolverConfig()) -> PricingSolution:
    """Pricing with a share of autonomous flow outside the planner's control.

    The uncontrolled flow must be routed in full, rides only the human-used
    prefix (it is selfish), joins the controlled flow in the latency and
    capacity constraints, and earns no revenue.
    """
    if problem.uncontrolled_lambda_b is None:
        raise ValueError("problem does not define uncontrolled_lambda_b")
    return _solve(problem, float(problem.uncontrolled_lambda_b), config)


def _solve(problem: PricingProblem, lambda_b: float,
           config: SolverConfig) -> PricingSolution:
    price_cap = (config.price_cap if config.price_cap is not None
                 else default_price_cap(problem))
    theorem1 = (config.force_theorem1 if config.force_theorem1 is not None
                else bool((problem.population.values[:, 1] > 0).all()))
    flags = (0,) if theorem1 else (0, 1)
    rng = np.random.default_rng(config.seed)

    best: PricingSolution | None = None
    nearest_residuals: ConstraintResiduals | None = None
    nearest_violation = math.inf
    restarts_used = 0
    baseline = _baseline_candidate(problem, lambda_b, price_cap)

    for k in range(1, problem.network.n + 1):
        for s_k in flags:
            probe = _Branch(problem, k, s_k, frozenset(), price_cap, lambda_b)
            starts = [probe.free_ride_start()]
            starts += [probe.initial_point(rng) for _ in range(config.restarts)]

            candidates: list[np.ndarray] = []
            if s_k == 0 and baseline is not None and baseline[0] == k:
                candidates.append(baseline[1])
            for x0 in starts:
                _, _, _, p0 = probe.split(x0)
                dominated = _branch_dominated(problem, k, p0)
                branch = _Branch(problem, k, s_k, dominated, price_cap, lambda_b)
                result = minimize_auglag(
                    branch.objective, x0, branch.bounds(),
                    eq_constraints=branch.equalities,
                    ineq_constraints=branch.inequalities,
                    constraint_tol=config.constraint_tol,
                    optimality_tol=config.optimality_tol,
                    max_inner_iterations=config.max_inner_iterations,
                )
                restarts_used += 1
                candidates.append(result.x)

            for x in candidates:
                try:
                    solution, residuals = _score_candidate(problem, probe, x)
                except ValueError:
                    continue
                if residuals.normalized_max < nearest_violation:
                    nearest_violation = residuals.normalized_max
                    nearest_residuals = residuals
                if residuals.normalized_max > config.accept_tol:
                    continue
                if best is None or solution.objective < best.objective - 1e-12:
                    best = solution

    if best is None:
        raise InfeasiblePricingError(
            "no feasible pricing candidate found "
            f"(closest normalized violation {nearest_violation:.3g})",
            nearest_residuals)
    return replace(best, restarts_used=restarts_used)


@dataclass(frozen=True)
class StructureReport:
    """Free-flow equilibrium structure checks on a solved instance."""

    free_flow_road: bool
    equal_prefix_latencies: bool
    no_humans_beyond_k: bool

    @property
    def passed(self) -> bool:
        return (self.free_flow_road and self.equal_prefix_latencies
                and self.no_humans_beyond_k)


def verify_structure(problem: PricingProblem, solution: PricingSolution,
                     rtol: float = STRUCTURE_RTOL) -> StructureReport:
    """Check the free-flow-road structure of an optimal solution.

    Valid whenever every sampled user weighs money positively: some road k
    runs in free-flow, all roads up to k share its latency, and no human
    flow rides beyond k.
    """
    k = solution.k
    lat = _candidate_latencies(problem, solution.routing, solution.f_b)
    ell_k = lat[k - 1]
    free_flow = solution.routing.s[k - 1] == 0
    equal = bool(np.all(np.abs(lat[:k] - ell_k) <= rtol * max(ell_k, 1e-12)))
    tol_h = 1e-9 * max(1.0, problem.lambda_h)
    no_humans = bool((solution.routing.f_h[k:] <= tol_h).all())
    return StructureReport(free_flow_road=free_flow,
                           equal_prefix_latencies=equal,
                           no_humans_beyond_k=no_humans)


def load_problem(path: str | Path) -> PricingProblem:
    """Read a pricing problem document.

    {"network": <network doc>, "lambda_h", "lambda_a", "theta",
     "profit_floor", "fuel_cost", "alt_latency", "population": "<jsonl path>",
     "lambda_b": optional}
    The population path resolves relative to the problem file.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    network = load_network(doc["network"])
    pop_ref = doc["population"]
    pop_path = Path(pop_ref)
    if not pop_path.is_absolute():
        pop_path = path.parent / pop_path
    population = load_population(pop_path)
    return PricingProblem(
        network=network,
        lambda_h=float(doc["lambda_h"]),
        lambda_a=float(doc["lambda_a"]),
        theta=float(doc["theta"]),
        profit_floor=float(doc["profit_floor"]),
        fuel_cost=float(doc["fuel_cost"]),
        alt_latency=float(doc["alt_latency"]),
        population=population,
        uncontrolled_lambda_b=(float(doc["lambda_b"])
                               if doc.get("lambda_b") is not None else None),
    )
