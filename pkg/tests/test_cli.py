import csv
import json

import pytest

from masim import cli


def run_cli(*argv):
    return cli.main(list(argv))


def load_report(path):
    with open(path) as fh:
        return json.load(fh)


class TestRun:
    def test_small_exact_run(self, tmp_path):
        out = tmp_path / "r.json"
        assert run_cli("run", "--shape", "8x8x8", "--np", "1", "--si", "8",
                       "--out", str(out)) == 0
        rep = load_report(out)
        assert rep["checks"]["oracle_ok"] is True
        assert rep["checks"]["bounds_ok"] is True
        assert rep["checks"]["max_rel_error"] < 1e-4
        assert rep["sim"]["gflops"] > 0
        assert len(rep["arrays"]) == 1

    def test_conv2_report_contents(self, tmp_path):
        out = tmp_path / "r.json"
        assert run_cli("run", "--preset", "conv-2", "--np", "2", "--si", "128",
                       "--fast-numerics", "--no-verify", "--out", str(out)) == 0
        rep = load_report(out)
        est, sim = rep["estimate"], rep["sim"]
        assert est["lower_seconds"] * (1 - 1e-3) <= sim["time_seconds"] \
            <= est["upper_seconds"] * (1 + 1e-9)
        assert {"work_per_array", "load_seconds", "transfer_seconds",
                "compute_seconds", "gflops_upper", "gflops_lower"} \
            <= est.keys()
        stats_keys = {"compute_cycles", "stall_cycles", "prefetch_cycles",
                      "blocks_executed", "idle_cycles"}
        assert stats_keys <= rep["arrays"][0].keys()

    def test_rectangular_blocks(self, tmp_path):
        out = tmp_path / "r.json"
        assert run_cli("run", "--shape", "48x32x40", "--np", "2", "--si", "16",
                       "--sj", "8", "--out", str(out)) == 0
        rep = load_report(out)
        assert rep["config"]["block_cols"] == 8
        assert rep["checks"]["oracle_ok"] is True

    def test_auto_matches_explore_argmin(self, tmp_path):
        rep_path = tmp_path / "r.json"
        table_path = tmp_path / "t.json"
        assert run_cli("run", "--preset", "fc-6", "--auto", "--fast-numerics",
                       "--no-verify", "--out", str(rep_path)) == 0
        assert run_cli("explore", "--preset", "fc-6", "--out", str(table_path)) == 0
        rep = load_report(rep_path)
        best = load_report(table_path)["best"]
        assert rep["config"]["n_arrays"] == best["n_arrays"]
        assert rep["config"]["block_rows"] == best["block_rows"]

    def test_infeasible_point_fails_with_table(self, capsys):
        assert run_cli("run", "--shape", "8x8x8", "--np", "3", "--si", "100") == 2
        err = capsys.readouterr().err
        assert "infeasible" in err
        assert "block rows" in err      # the feasibility rows are listed

    def test_requires_problem(self):
        assert run_cli("run", "--np", "1", "--si", "8") == 2

    def test_unknown_preset(self):
        assert run_cli("run", "--preset", "conv-9", "--np", "1", "--si", "8") == 2

    def test_trace_file(self, tmp_path):
        trace = tmp_path / "trace.csv"
        assert run_cli("run", "--shape", "16x16x8", "--np", "2", "--si", "8",
                       "--trace", str(trace), "--out", str(tmp_path / "r.json")) == 0
        with open(trace) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["cycle", "array", "event", "block"]
        assert len(rows) > 1


class TestDeterminism:
    def strip_timestamp(self, path):
        rep = load_report(path)
        del rep["created_at"]
        return json.dumps(rep, indent=2, sort_keys=True)

    def test_same_seed_byte_identical(self, tmp_path):
        args = ("run", "--shape", "40x56x24", "--np", "3", "--si", "8",
                "--seed", "11")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(*args, "--out", str(a)) == 0
        assert run_cli(*args, "--out", str(b)) == 0
        assert self.strip_timestamp(a) == self.strip_timestamp(b)


class TestExplore:
    def test_csv_table(self, tmp_path):
        out = tmp_path / "table.csv"
        assert run_cli("explore", "--preset", "conv-1", "--out", str(out)) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) > 5
        uppers = [float(r["upper_seconds"]) for r in rows]
        assert uppers == sorted(uppers)
        assert rows[0]["rank"] == "0"

    def test_single_candidate(self, tmp_path):
        out = tmp_path / "one.csv"
        assert run_cli("explore", "--shape", "64x64x64", "--candidates", "256",
                       "--out", str(out)) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert rows[0]["n_arrays"] == "1"

    def test_simulate_adds_measured_columns(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert run_cli("explore", "--shape", "64x48x64", "--simulate",
                       "--candidates", "8,16,32", "--out", str(out)) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            assert row["in_bounds"] == "True"
            assert float(row["measured_seconds"]) > 0


class TestPresets:
    def test_exactly_eight_layers(self):
        from masim import LAYER_PRESETS
        assert LAYER_PRESETS == {
            "conv-1": (96, 363, 3025),
            "conv-2": (128, 1200, 729),
            "conv-3": (384, 2304, 169),
            "conv-4": (192, 1728, 169),
            "conv-5": (128, 1728, 169),
            "fc-6": (128, 9216, 4096),
            "fc-7": (128, 4096, 4096),
            "fc-8": (128, 4096, 1000),
        }

    def test_table_over_all_presets(self, tmp_path):
        from masim import LAYER_PRESETS
        for name in LAYER_PRESETS:
            out = tmp_path / f"{name}.csv"
            assert run_cli("explore", "--preset", name, "--out", str(out)) == 0
            with open(out) as fh:
                best = next(csv.DictReader(fh))
            assert best["rank"] == "0" and best["feasible"] == "True"
            assert float(best["lower_seconds"]) <= float(best["upper_seconds"])


class TestCalibrate:
    def test_accepts_monotone_table(self, tmp_path, capsys):
        src = tmp_path / "cal.csv"
        src.write_text("n_p,s_i,bytes_per_second\n"
                       "1,16,8e8\n1,64,1.5e9\n2,16,5e8\n2,64,1.1e9\n")
        out = tmp_path / "val.csv"
        assert run_cli("calibrate", str(src), "--out", str(out)) == 0
        assert "accepted" in capsys.readouterr().out
        with open(out) as fh:
            assert len(list(csv.DictReader(fh))) == 4

    def test_rejects_rising_with_array_count(self, tmp_path, capsys):
        src = tmp_path / "cal.csv"
        src.write_text("n_p,s_i,bytes_per_second\n1,64,1.5e9\n2,64,1.6e9\n")
        assert run_cli("calibrate", str(src)) == 2
        assert "n_p=1 to n_p=2" in capsys.readouterr().err

    def test_rejects_empty_file(self, tmp_path):
        src = tmp_path / "cal.csv"
        src.write_text("")
        assert run_cli("calibrate", str(src)) == 2


class TestBandwidthSpecs:
    def test_parametric_with_arguments(self, tmp_path):
        out = tmp_path / "r.json"
        assert run_cli("run", "--shape", "8x8x8", "--np", "1", "--si", "8",
                       "--bw-model", "parametric:2e9,32,0.5",
                       "--out", str(out)) == 0
        assert load_report(out)["config"]["bw_model"] == "parametric:2e9,32,0.5"

    def test_ideal_keyword(self, tmp_path):
        out = tmp_path / "r.json"
        assert run_cli("run", "--shape", "8x8x8", "--np", "1", "--si", "8",
                       "--bw-model", "ideal", "--out", str(out)) == 0

    def test_table_file(self, tmp_path):
        cal = tmp_path / "cal.csv"
        cal.write_text("n_p,s_i,bytes_per_second\n1,8,8e8\n")
        out = tmp_path / "r.json"
        assert run_cli("run", "--shape", "8x8x8", "--np", "1", "--si", "8",
                       "--bw-model", str(cal), "--out", str(out)) == 0

    def test_bad_spec(self):
        assert run_cli("run", "--shape", "8x8x8", "--np", "1", "--si", "8",
                       "--bw-model", "no-such-file.csv") == 2
