import json
from pathlib import Path

import numpy as np
import pytest

from mixedroads.cli import main
from mixedroads.equilibria import FlexibilityProfile, solve_bfne, solve_bne
from mixedroads.network import DemandSpec, load_network


def desk_files(tmp_path: Path) -> dict[str, Path]:
    net = {"roads": [
        {"d": 1, "v": 1, "b": 1, "h_h": 0.04, "h_a": 0.02, "n_bar": 100},
        {"d": 2, "v": 1, "b": 2, "h_h": 0.04, "h_a": 0.02, "n_bar": 200},
        {"d": 3, "v": 1, "b": 1, "h_h": 0.04, "h_a": 0.02, "n_bar": 100},
    ]}
    paths = {"network": tmp_path / "net.json",
             "profile": tmp_path / "profile.json",
             "population": tmp_path / "pop.jsonl",
             "problem": tmp_path / "problem.json",
             "params": tmp_path / "true.jsonl"}
    paths["network"].write_text(json.dumps(net))
    paths["profile"].write_text(json.dumps(
        {"levels": [{"kappa": 2.0, "phi": 0.0}]}))
    pop = [{"omega1": 1.0, "omega2": 0.5, "zeta": 0.6},
           {"omega1": 1.6, "omega2": 0.25, "zeta": 0.9}]
    paths["population"].write_text("\n".join(json.dumps(p) for p in pop) + "\n")
    paths["problem"].write_text(json.dumps({
        "network": net, "lambda_h": 10, "lambda_a": 20, "theta": 0.05,
        "profit_floor": 0, "fuel_cost": 0, "alt_latency": 3.0,
        "population": "pop.jsonl"}))
    paths["params"].write_text(json.dumps(
        {"omega1": 1.2, "omega2": 0.8, "zeta": 1.0}) + "\n")
    return paths


class TestBne:
    def test_matches_library_and_round_trips(self, tmp_path, capsys):
        paths = desk_files(tmp_path)
        out = tmp_path / "out"
        code = main(["bne", str(paths["network"]), "--lambda-h", "10",
                     "--lambda-a", "40", "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "bne.json").read_text())
        network = load_network(paths["network"])
        result = solve_bne(network, DemandSpec(10, 40))
        assert doc["m_eq"] == result.m_eq
        assert doc["cost"] == pytest.approx(result.cost)
        assert json.loads(json.dumps(doc)) == doc

    def test_infeasible_exit_code(self, tmp_path):
        paths = desk_files(tmp_path)
        assert main(["bne", str(paths["network"]), "--lambda-h", "1e6",
                     "--lambda-a", "0"]) == 2

    def test_malformed_file_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"roads\": [{\"d\": 1}]}")
        assert main(["bne", str(bad), "--lambda-h", "1", "--lambda-a", "0"]) == 1


class TestBfne:
    def test_matches_library(self, tmp_path):
        paths = desk_files(tmp_path)
        out = tmp_path / "out"
        code = main(["bfne", str(paths["network"]), "--lambda-h", "10",
                     "--lambda-a", "40", "--profile", str(paths["profile"]),
                     "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "bfne.json").read_text())
        network = load_network(paths["network"])
        result = solve_bfne(network, DemandSpec(10, 40),
                            FlexibilityProfile(levels=((2.0, 0.0),)))
        assert doc["cost"] == pytest.approx(result.cost)
        assert doc["m_eq"] == result.m_eq

    def test_infeasible_exit_code(self, tmp_path):
        paths = desk_files(tmp_path)
        assert main(["bfne", str(paths["network"]), "--lambda-h", "1e6",
                     "--lambda-a", "0", "--profile", str(paths["profile"])]) == 2


class TestPrice:
    def test_smoke_and_baseline_row(self, tmp_path, capsys):
        paths = desk_files(tmp_path)
        out = tmp_path / "out"
        code = main(["price", str(paths["problem"]), "--seed", "3",
                     "--restarts", "4", "--out", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "benchmark bne" in printed
        doc = json.loads((out / "price.json").read_text())
        assert doc["k"] >= 1
        assert "benchmark_avg_latency" in doc

    def test_missing_population_exit_code(self, tmp_path):
        paths = desk_files(tmp_path)
        paths["population"].unlink()
        assert main(["price", str(paths["problem"]), "--seed", "1"]) == 1


class TestLearnSim:
    def test_budget_one_single_row(self, tmp_path):
        paths = desk_files(tmp_path)
        out = tmp_path / "sim"
        code = main(["learn-sim", str(paths["params"]), "--budget", "1",
                     "--seed", "4", "--restarts", "4", "--num-samples", "40",
                     "--out", str(out)])
        assert code == 0
        for name in ("active_000.csv", "random_000.csv"):
            lines = (out / name).read_text().splitlines()
            assert lines[0] == "query_index,posterior_mean_error,trace_covariance"
            assert len(lines) == 2
        summary = (out / "summary.csv").read_text().splitlines()
        assert len(summary) == 2

    def test_byte_determinism(self, tmp_path):
        paths = desk_files(tmp_path)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"sim_{run}"
            assert main(["learn-sim", str(paths["params"]), "--budget", "2",
                         "--seed", "9", "--restarts", "3",
                         "--num-samples", "30", "--out", str(out)]) == 0
            outs.append((out / "active_000.csv").read_bytes()
                        + (out / "random_000.csv").read_bytes()
                        + (out / "summary.csv").read_bytes())
        assert outs[0] == outs[1]


class TestReport:
    def test_emits_csv_svg_pairs(self, tmp_path):
        paths = desk_files(tmp_path)
        out = tmp_path / "report"
        code = main(["report", str(paths["network"]), "--lambda-h", "10",
                     "--lambda-a", "10", "--out", str(out)])
        assert code == 0
        for name in ("fundamental_diagram.csv", "fundamental_diagram.svg",
                     "flow_latency.csv", "flow_latency.svg"):
            assert (out / name).exists()
        svg = (out / "flow_latency.svg").read_text()
        assert svg.startswith("<svg")

    def test_byte_determinism(self, tmp_path):
        paths = desk_files(tmp_path)
        blobs = []
        for run in ("a", "b"):
            out = tmp_path / f"rep_{run}"
            main(["report", str(paths["network"]), "--out", str(out)])
            blobs.append((out / "fundamental_diagram.svg").read_bytes())
        assert blobs[0] == blobs[1]

    def test_bad_network_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("not json")
        assert main(["report", str(bad)]) == 1
