import json

import numpy as np
import pytest

from mixedroads.network import (
    CAPACITY_TOL,
    DemandSpec,
    InfeasibleRoutingError,
    NetworkError,
    Road,
    RoadNetwork,
    Routing,
    alpha_from_flows,
    congestion_line,
    critical_density,
    flow_from_density,
    free_flow_latency,
    is_feasible_routing,
    latency,
    load_network,
    max_flow,
    routing_latencies,
    save_network,
    total_latency,
    validate_network,
)

ROAD = Road(length=1, speed=1, lanes=1, headway_human=0.04, headway_auto=0.02,
            max_density=100)


def make_road(**kwargs) -> Road:
    base = dict(length=1.0, speed=1.0, lanes=1.0, headway_human=0.04,
                headway_auto=0.02, max_density=100.0)
    base.update(kwargs)
    return Road(**base)


def random_valid_road(rng: np.random.Generator) -> Road:
    h_h = rng.uniform(0.02, 0.08)
    h_a = h_h * rng.uniform(0.3, 1.0)
    lanes = float(rng.integers(1, 4))
    return Road(length=rng.uniform(0.2, 5.0), speed=rng.uniform(0.3, 3.0),
                lanes=lanes, headway_human=h_h, headway_auto=h_a,
                max_density=(lanes / h_a) * rng.uniform(1.2, 4.0))


class TestFreeFlowLatency:
    def test_identity_ratio(self):
        assert free_flow_latency(make_road(length=1, speed=1)) == 1

    def test_direct_ratio(self):
        assert free_flow_latency(make_road(length=2, speed=1)) == 2

    def test_fractional_speed(self):
        assert free_flow_latency(make_road(length=3, speed=1.5)) == 2


class TestCriticalDensity:
    def test_all_human(self):
        assert critical_density(ROAD, 0.0) == pytest.approx(25.0)

    def test_all_autonomous(self):
        assert critical_density(ROAD, 1.0) == pytest.approx(50.0)

    def test_mixed(self):
        assert critical_density(ROAD, 0.5) == pytest.approx(100.0 / 3.0)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            critical_density(ROAD, 1.5)
        with pytest.raises(ValueError):
            critical_density(ROAD, -0.1)

    def test_nondecreasing_in_alpha(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            road = random_valid_road(rng)
            alphas = np.sort(rng.uniform(0, 1, 10))
            values = [critical_density(road, a) for a in alphas]
            assert all(v2 >= v1 - 1e-12 for v1, v2 in zip(values, values[1:]))


class TestMaxFlow:
    def test_all_human(self):
        assert max_flow(ROAD, 0.0) == pytest.approx(25.0)

    def test_all_autonomous(self):
        assert max_flow(ROAD, 1.0) == pytest.approx(50.0)

    def test_linear_in_speed(self):
        assert max_flow(make_road(speed=2), 0.0) == pytest.approx(50.0)

    def test_nondecreasing_in_alpha(self):
        rng = np.random.default_rng(1)
        road = random_valid_road(rng)
        alphas = np.linspace(0, 1, 20)
        values = [max_flow(road, a) for a in alphas]
        assert all(v2 >= v1 - 1e-12 for v1, v2 in zip(values, values[1:]))


class TestFlowFromDensity:
    def test_free_flow_branch(self):
        assert flow_from_density(ROAD, 10.0, 0.0) == pytest.approx(10.0)

    def test_jam_density(self):
        assert flow_from_density(ROAD, 60.0, 40.0) == pytest.approx(0.0)

    def test_branch_boundary_is_max_flow(self):
        n_crit = critical_density(ROAD, 1.0)
        assert flow_from_density(ROAD, 0.0, n_crit) == pytest.approx(
            ROAD.speed * n_crit)

    def test_beyond_jam_density(self):
        assert flow_from_density(ROAD, 120.0, 0.0) == 0.0

    def test_continuity_at_breakpoints(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            road = random_valid_road(rng)
            alpha = rng.uniform(0, 1)
            n_crit = critical_density(road, alpha)
            for n_star in (n_crit, road.max_density):
                below = flow_from_density(road, n_star * (1 - alpha) * (1 - 1e-9),
                                          n_star * alpha * (1 - 1e-9))
                above = flow_from_density(road, n_star * (1 - alpha) * (1 + 1e-9),
                                          n_star * alpha * (1 + 1e-9))
                assert below == pytest.approx(above, abs=1e-5 * max(1.0, below))

    def test_piecewise_linear(self):
        # fixed alpha: midpoints of each branch lie on the chord
        road = ROAD
        alpha = 0.25
        n_crit = critical_density(road, alpha)

        def f(n):
            return flow_from_density(road, n * (1 - alpha), n * alpha)

        for lo, hi in ((0, n_crit), (n_crit, road.max_density)):
            mid = (lo + hi) / 2
            assert f(mid) == pytest.approx((f(lo) + f(hi)) / 2, abs=1e-9)


class TestLatency:
    def test_continuity_at_max_flow(self):
        assert latency(ROAD, 25.0, 0.0, 1) == pytest.approx(1.0, abs=1e-12)

    def test_congested_hand_value(self):
        # d*(n_bar/f + (n_crit - n_bar)/(v*n_crit)) = 100/20 - 75/25 = 2
        assert latency(ROAD, 20.0, 0.0, 1) == pytest.approx(2.0)

    def test_free_flow_branch_ignores_flow(self):
        for f_h, f_a in ((0, 0), (5, 3), (20, 4)):
            assert latency(ROAD, f_h, f_a, 0) == pytest.approx(1.0)

    def test_zero_flow_congested_is_error(self):
        with pytest.raises(ValueError):
            latency(ROAD, 0.0, 0.0, 1)

    def test_over_capacity_is_error(self):
        with pytest.raises(InfeasibleRoutingError):
            latency(ROAD, 26.0, 0.0, 1)

    def test_congested_strictly_decreasing_in_flow(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            road = random_valid_road(rng)
            alpha = rng.uniform(0, 1)
            cap = max_flow(road, alpha)
            flows = np.sort(rng.uniform(0.05, 1.0, 6)) * cap
            lats = [latency(road, f * (1 - alpha), f * alpha, 1) for f in flows]
            assert all(l2 < l1 for l1, l2 in zip(lats, lats[1:]))


class TestCongestionLine:
    def test_points_on_line_achieve_target_latency(self):
        rng = np.random.default_rng(4)
        for _ in range(60):
            road = random_valid_road(rng)
            target = road.free_flow_latency * rng.uniform(1.0, 4.0)
            line = congestion_line(road, target)
            # pick a point on the line with both flows nonnegative
            t = rng.uniform(0, 1)
            f_h = t * line.rhs / line.c_h
            f_a = (line.rhs - line.c_h * f_h) / line.c_a
            assert f_a >= -1e-9
            assert latency(road, f_h, max(f_a, 0.0), 1) == pytest.approx(
                target, rel=1e-9)

    def test_below_free_flow_rejected(self):
        with pytest.raises(ValueError):
            congestion_line(ROAD, 0.5)


class TestValidateNetwork:
    def test_ordered_network_passes(self):
        net = RoadNetwork((make_road(length=1), make_road(length=2)))
        assert validate_network(net) == []

    def test_ordering_violation(self):
        net = RoadNetwork((make_road(length=2), make_road(length=1)))
        assert any("increasing" in v for v in validate_network(net))

    def test_headway_violation(self):
        bad = make_road(headway_auto=0.05)  # exceeds human headway 0.04
        net = RoadNetwork((bad,))
        assert any("headway" in v for v in validate_network(net))

    def test_positivity_violation(self):
        net = RoadNetwork((make_road(speed=0.0),))
        assert any("positive" in v for v in validate_network(net))


class TestFeasibility:
    def test_single_road_demand_met(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([10.0]), np.array([0.0]), np.array([0]))
        assert is_feasible_routing(net, routing, DemandSpec(10, 0))

    def test_demand_shortfall(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([9.0]), np.array([0.0]), np.array([0]))
        assert not is_feasible_routing(net, routing, DemandSpec(10, 0))

    def test_elastic_allows_shortfall(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([10.0]), np.array([5.0]), np.array([0]))
        assert is_feasible_routing(net, routing, DemandSpec(10, 10),
                                   elastic_autonomous=True)
        assert not is_feasible_routing(net, routing, DemandSpec(10, 10))

    def test_capacity_violation(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([26.0]), np.array([0.0]), np.array([0]))
        assert not is_feasible_routing(net, routing, DemandSpec(26, 0))


class TestTotalLatency:
    def test_zero_flow(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([0.0]), np.array([0.0]), np.array([0]))
        assert total_latency(net, routing) == 0.0

    def test_free_flow_cost(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([10.0]), np.array([0.0]), np.array([0]))
        assert total_latency(net, routing) == pytest.approx(10.0)

    def test_congested_cost(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([20.0]), np.array([0.0]), np.array([1]))
        assert total_latency(net, routing) == pytest.approx(40.0)

    def test_infeasible_routing_raises(self):
        net = RoadNetwork((make_road(),))
        routing = Routing(np.array([26.0]), np.array([0.0]), np.array([1]))
        with pytest.raises(InfeasibleRoutingError):
            total_latency(net, routing)

    def test_permutation_symmetry_on_duplicate_roads(self):
        # identical roads violate the ordering assumption, which only
        # validate_network enforces; cost must not care about which twin
        # carries the flow
        net = RoadNetwork((make_road(), make_road()))
        r1 = Routing(np.array([12.0, 5.0]), np.array([3.0, 1.0]), np.array([1, 1]))
        r2 = Routing(np.array([5.0, 12.0]), np.array([1.0, 3.0]), np.array([1, 1]))
        assert total_latency(net, r1) == pytest.approx(total_latency(net, r2))


class TestRoutingType:
    def test_negative_flow_rejected(self):
        with pytest.raises(ValueError):
            Routing(np.array([-1.0]), np.array([0.0]), np.array([0]))

    def test_bad_flag_rejected(self):
        with pytest.raises(ValueError):
            Routing(np.array([1.0]), np.array([0.0]), np.array([2]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Routing(np.array([1.0, 2.0]), np.array([0.0]), np.array([0]))

    def test_negative_demand_rejected(self):
        with pytest.raises(ValueError):
            DemandSpec(-1.0, 0.0)

    def test_alpha_zero_flow_convention(self):
        assert alpha_from_flows(0.0, 0.0) == 0.0
        assert alpha_from_flows(1.0, 3.0) == pytest.approx(0.75)


class TestNetworkIO:
    def test_round_trip(self, tmp_path):
        net = RoadNetwork((make_road(length=1), make_road(length=2)))
        path = tmp_path / "net.json"
        save_network(net, path)
        loaded = load_network(path)
        assert loaded == net

    def test_load_rejects_unordered(self, tmp_path):
        doc = {"roads": [make_road(length=2).to_dict(),
                         make_road(length=1).to_dict()]}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(NetworkError):
            load_network(path)

    def test_load_rejects_missing_key(self):
        with pytest.raises(NetworkError):
            load_network({"roads": [{"d": 1.0}]})

    def test_routing_latencies_match_scalar_op(self):
        net = RoadNetwork((make_road(length=1), make_road(length=2)))
        routing = Routing(np.array([20.0, 0.0]), np.array([0.0, 5.0]),
                          np.array([1, 0]))
        lats = routing_latencies(net, routing)
        assert lats[0] == pytest.approx(2.0)
        assert lats[1] == pytest.approx(2.0)
