import json
import math
import os

import numpy as np
import pytest

from edgeplan.cli import main
from edgeplan.quant import WeightTensor, save_weight_tensor

from conftest import data_path


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_weights(directory, tensors):
    os.makedirs(directory, exist_ok=True)
    for name, values in tensors.items():
        v = np.asarray(values, dtype=np.float32)
        save_weight_tensor(WeightTensor(name, v, v.shape), directory)


class TestGen:
    def test_deterministic_bytes(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            code, _, _ = run(["gen", "--seed", "7", "-m", "4", "-l", "3",
                              "--out-dir", str(out)], capsys)
            assert code == 0
        assert (a / "cluster.json").read_bytes() == (b / "cluster.json").read_bytes()
        assert (a / "model.json").read_bytes() == (b / "model.json").read_bytes()

    def test_heterogeneous_profile_spreads_throughput(self, tmp_path, capsys):
        code, _, _ = run(["gen", "--seed", "3", "-m", "5", "-l", "3",
                          "--profile", "heterogeneous",
                          "--out-dir", str(tmp_path)], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "cluster.json").read_text())
        ccs = [s["ccs_flops"] for s in doc["servers"]]
        assert max(ccs) / min(ccs) >= 4.0

    def test_more_layers_than_servers_rejected(self, tmp_path, capsys):
        code, _, err = run(["gen", "--seed", "1", "-m", "2", "-l", "3",
                            "--out-dir", str(tmp_path)], capsys)
        assert code == 2
        assert "layers" in err


class TestQuantize:
    def test_golden_layer(self, tmp_path, capsys):
        wdir = tmp_path / "w"
        write_weights(wdir, {"layer0": [-2.0, 1.0, 2.0]})
        out = tmp_path / "report.json"
        code, stdout, _ = run(["quantize", "--weights-dir", str(wdir),
                               "--bits", "2,3,8", "--delta", "0.2",
                               "--scheme", "symmetric",
                               "--out", str(out),
                               "--stats-out", str(tmp_path / "stats.json")],
                              capsys)
        assert code == 0
        assert "layer0: feasible bits {8}" in stdout
        # single layer feasible only at 8 of 32 original bits
        assert "quantization ratio: 25.00%" in stdout
        records = json.loads(out.read_text())["records"]
        by_bits = {r["bits"]: r for r in records}
        assert by_bits[3]["max_abs_error"] == pytest.approx(1.0 / 3.0, rel=1e-6)
        assert [b for b in by_bits if by_bits[b]["feasible"]] == [8]
        stats = json.loads((tmp_path / "stats.json").read_text())["layers"]
        assert stats[0]["count"] == 3

    def test_infinite_delta_admits_min_bits(self, tmp_path, capsys):
        wdir = tmp_path / "w"
        write_weights(wdir, {"a": [-1.0, 1.0], "b": [0.0, 5.0]})
        code, stdout, _ = run(["quantize", "--weights-dir", str(wdir),
                               "--bits", "2,8", "--delta", "inf",
                               "--out", str(tmp_path / "r.json")], capsys)
        assert code == 0
        assert "quantization ratio: 6.25%" in stdout  # 2 of 32 bits everywhere

    def test_empty_dir_is_input_error(self, tmp_path, capsys):
        code, _, err = run(["quantize", "--weights-dir", str(tmp_path),
                            "--bits", "8", "--delta", "0.1",
                            "--out", str(tmp_path / "r.json")], capsys)
        assert code == 2
        assert ".bin" in err and ".json" in err

    def test_malformed_tensor_reported_but_continues(self, tmp_path, capsys):
        wdir = tmp_path / "w"
        write_weights(wdir, {"good": [-1.0, 1.0]})
        (wdir / "bad.json").write_text("{}")
        out = tmp_path / "r.json"
        code, stdout, err = run(["quantize", "--weights-dir", str(wdir),
                                 "--bits", "8", "--delta", "inf",
                                 "--out", str(out)], capsys)
        assert code == 0
        assert "bad.json" in err
        assert json.loads(out.read_text())["records"]


class TestPlan:
    def plan_args(self, out, solver="bnb"):
        return ["plan", "--cluster", data_path("cluster_2x2.json"),
                "--model", data_path("model_2x2.json"),
                "--bits", "8", "--tokens", "1",
                "--solver", solver, "--out", str(out)]

    def test_golden_objective(self, tmp_path, capsys):
        out = tmp_path / "plan.json"
        code, stdout, _ = run(self.plan_args(out), capsys)
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["objective"]["total_s"] == pytest.approx(3.0, rel=1e-12)
        assert [(a["server"], a["bits"]) for a in doc["assignments"]] == \
            [(0, 8), (1, 8)]

    @pytest.mark.parametrize("seed", range(10))
    def test_bnb_and_brute_agree(self, tmp_path, capsys, seed):
        gen_dir = tmp_path / "inst"
        run(["gen", "--seed", str(seed), "-m", "4", "-l", "3",
             "--bits", "4,8", "--out-dir", str(gen_dir)], capsys)
        docs = {}
        for solver in ("brute", "bnb"):
            out = tmp_path / f"{solver}.json"
            code, _, _ = run(["plan", "--cluster", str(gen_dir / "cluster.json"),
                              "--model", str(gen_dir / "model.json"),
                              "--bits", "4,8", "--tokens", "4",
                              "--solver", solver, "--out", str(out)], capsys)
            assert code == 0
            doc = json.loads(out.read_text())
            doc.pop("meta")
            doc.pop("solver")
            docs[solver] = doc
        assert docs["brute"] == docs["bnb"]

    def test_relaxed_solver_reports_bound(self, tmp_path, capsys):
        out = tmp_path / "plan.json"
        code, stdout, _ = run(self.plan_args(out, solver="relaxed"), capsys)
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["relaxed"] is True
        assert doc["objective"]["lower_bound_s"] == pytest.approx(3.0)

    def test_infeasible_exit_code(self, tmp_path, capsys):
        code, stdout, _ = run(
            ["plan", "--cluster", data_path("cluster_2x2.json"),
             "--model", data_path("model_l3.json"),  # 3 layers, 2 servers
             "--bits", "8", "--out", str(tmp_path / "p.json")], capsys)
        assert code == 3
        assert json.loads(stdout.strip())["status"] == "infeasible"

    def test_budget_exit_code(self, tmp_path, capsys):
        gen_dir = tmp_path / "inst"
        run(["gen", "--seed", "5", "-m", "6", "-l", "4", "--bits", "4,8,16",
             "--out-dir", str(gen_dir)], capsys)
        code, stdout, _ = run(
            ["plan", "--cluster", str(gen_dir / "cluster.json"),
             "--model", str(gen_dir / "model.json"),
             "--bits", "4,8,16", "--solver", "bnb", "--budget", "1",
             "--out", str(tmp_path / "p.json")], capsys)
        assert code == 4


class TestSimulateCommand:
    def make_plan(self, tmp_path, capsys):
        out = tmp_path / "plan.json"
        code, _, _ = run(["plan", "--cluster", data_path("cluster_2x2.json"),
                          "--model", data_path("model_2x2.json"),
                          "--bits", "8", "--tokens", "1",
                          "--solver", "brute", "--out", str(out)], capsys)
        assert code == 0
        return out

    def test_replay_matches_plan(self, tmp_path, capsys):
        plan = self.make_plan(tmp_path, capsys)
        code, stdout, _ = run(
            ["simulate", "--plan", str(plan),
             "--cluster", data_path("cluster_2x2.json"),
             "--model", data_path("model_2x2.json"),
             "--out", str(tmp_path / "timeline.csv"),
             "--summary", str(tmp_path / "summary.json")], capsys)
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["completion_time_s"] == pytest.approx(3.0, rel=1e-12)
        rows = (tmp_path / "timeline.csv").read_text().strip().split("\n")
        assert len(rows) == 1 + 3

    def test_tampered_objective_is_mismatch(self, tmp_path, capsys):
        plan = self.make_plan(tmp_path, capsys)
        doc = json.loads(plan.read_text())
        doc["objective"]["total_s"] = 2.0
        plan.write_text(json.dumps(doc))
        code, _, err = run(
            ["simulate", "--plan", str(plan),
             "--cluster", data_path("cluster_2x2.json"),
             "--model", data_path("model_2x2.json"),
             "--out", str(tmp_path / "t.csv")], capsys)
        assert code == 5
        assert "mismatch" in err

    def test_stale_inputs_are_digest_mismatch(self, tmp_path, capsys):
        plan = self.make_plan(tmp_path, capsys)
        stale = tmp_path / "cluster.json"
        doc = json.loads(open(data_path("cluster_2x2.json")).read())
        doc["servers"][0]["ccs_flops"] = 123.0
        stale.write_text(json.dumps(doc))
        code, _, err = run(
            ["simulate", "--plan", str(plan), "--cluster", str(stale),
             "--model", data_path("model_2x2.json"),
             "--out", str(tmp_path / "t.csv")], capsys)
        assert code == 6
        assert "digest" in err


class TestExportLp:
    def args(self, out, model="model_2x2.json"):
        return ["export-lp", "--cluster", data_path("cluster_2x2.json"),
                "--model", data_path(model), "--bits", "8",
                "--tokens", "1", "--out", str(out)]

    def test_matches_frozen_golden(self, tmp_path, capsys):
        out = tmp_path / "out.lp"
        code, _, _ = run(self.args(out), capsys)
        assert code == 0
        assert out.read_bytes() == open(data_path("golden_2x2.lp"), "rb").read()

    def test_byte_identical_across_runs(self, tmp_path, capsys):
        a, b = tmp_path / "a.lp", tmp_path / "b.lp"
        run(self.args(a), capsys)
        run(self.args(b), capsys)
        assert a.read_bytes() == b.read_bytes()

    def test_round_trip_parse(self, tmp_path, capsys):
        from edgeplan.ilp import parse_lp, model_as_parsed, build_ilp
        from edgeplan.delay import build_delay_table
        from conftest import make_2x2_instance
        out = tmp_path / "out.lp"
        run(self.args(out), capsys)
        inst = make_2x2_instance()
        model = build_ilp(inst, build_delay_table(inst))
        assert parse_lp(out.read_text()) == model_as_parsed(model)

    def test_oversized_layer_is_infeasible(self, tmp_path, capsys):
        cluster = {"servers": [{"id": 0, "ccs_flops": 1.0, "storage_bytes": 1.0},
                               {"id": 1, "ccs_flops": 1.0, "storage_bytes": 1.0}],
                   "links": [{"src": 0, "dst": 1, "capacity_bps": 1.0}]}
        cpath = tmp_path / "cluster.json"
        cpath.write_text(json.dumps(cluster))
        code, stdout, _ = run(
            ["export-lp", "--cluster", str(cpath),
             "--model", data_path("model_2x2.json"), "--bits", "8",
             "--out", str(tmp_path / "o.lp")], capsys)
        assert code == 3
        assert json.loads(stdout.strip())["layer"] == 0


class TestPlanWithWeights:
    def test_weight_filter_narrows_bits(self, tmp_path, capsys):
        wdir = tmp_path / "w"
        write_weights(wdir, {"l0": [-2.0, 1.0, 2.0], "l1": [-2.0, 1.0, 2.0]})
        model = {"batch_size": 1, "embedding_size": 4, "layers": [
            {"flops": 100.0, "param_count": 10, "output_size": 4.0,
             "original_precision": 32, "weights": "l0"},
            {"flops": 200.0, "param_count": 10, "output_size": 4.0,
             "original_precision": 32, "weights": "l1"},
        ]}
        mpath = tmp_path / "model.json"
        mpath.write_text(json.dumps(model))
        out = tmp_path / "plan.json"
        code, _, _ = run(
            ["plan", "--cluster", data_path("cluster_2x2.json"),
             "--model", str(mpath), "--bits", "3,8", "--delta", "0.2",
             "--scheme", "symmetric", "--weights-dir", str(wdir),
             "--tokens", "1", "--out", str(out)], capsys)
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["options"]["feasible_bits"] == [[8], [8]]
        assert all(a["bits"] == 8 for a in doc["assignments"])
