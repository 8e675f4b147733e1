"""Command-line interface: exit codes, artifacts, manifests, golden rows."""

import json
import time

import pytest

from specflow import cli

TINY_CONFIG = """\
[model]
name = tiny
fft_size = 8
alpha = 4

[layer a]
in_channels = 2
out_channels = 8
h_in = 12
w_in = 12
k = 3

[layer b]
in_channels = 8
out_channels = 8
h_in = 12
w_in = 12
k = 3
"""


def data_rows(path):
    """CSV rows without comment lines and the header."""
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return lines[1:]


@pytest.fixture()
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY_CONFIG)
    return str(p)


class TestAnalyze:
    def test_emits_four_flows_per_optimized_layer(self, tmp_path):
        out = tmp_path / "o"
        rc = cli.main(["analyze", "--out", str(out)])
        assert rc == 0
        rows = data_rows(out / "analyze.csv")
        assert len(rows) == 12 * 4
        doc = json.loads((out / "analyze.json").read_text())
        assert doc["manifest"]["command"] == "analyze"
        assert len(doc["reports"]) == 48

    def test_rows_are_reproducible(self, tmp_path):
        rc1 = cli.main(["analyze", "--out", str(tmp_path / "a")])
        rc2 = cli.main(["analyze", "--out", str(tmp_path / "b")])
        assert rc1 == rc2 == 0
        assert data_rows(tmp_path / "a" / "analyze.csv") == data_rows(
            tmp_path / "b" / "analyze.csv"
        )

    def test_golden_rows_for_builtin(self, tmp_path):
        # Frozen from an independent recomputation: 3,473,408 words
        # (inputs 64*112*112*2, kernels 2*131072, outputs 128*112*112)
        # over this layer's share of the 20 ms budget.
        out = tmp_path / "o"
        cli.main(["analyze", "--out", str(out)])
        rows = set(data_rows(out / "analyze.csv"))
        assert "conv2_1,flow1,1882,1605632,131072,1605632,6.44923" in rows
        assert "conv5_1,flow2,163,100352,4194304,100352,19.9906" in rows

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[model]\nfft_size = 8\nalpha = 4\n")
        rc = cli.main(["analyze", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert rc == cli.EXIT_CONFIG

    def test_missing_file_exit_code(self, tmp_path):
        rc = cli.main(["analyze", "--config", "/nonexistent.cfg", "--out", str(tmp_path)])
        assert rc == cli.EXIT_CONFIG


class TestOptimize:
    def test_round_trips_through_json(self, tiny_cfg, tmp_path):
        out = tmp_path / "o"
        rc = cli.main(["optimize", "--config", tiny_cfg, "--out", str(out),
                       "--p-par-candidates", "2", "--n-par-candidates", "4",
                       "--replicas", "2"])
        assert rc == 0
        doc = json.loads((out / "optimize.json").read_text())
        from specflow.flowopt import OptResult

        back = OptResult.from_dict(doc["result"])
        assert back.arch.p_par == 2 and back.arch.n_par == 4
        rows = data_rows(out / "optimize.csv")
        assert len(rows) == 2

    def test_infeasible_budget(self, tiny_cfg, tmp_path, capsys):
        rc = cli.main(["optimize", "--config", tiny_cfg, "--out", str(tmp_path / "o"),
                       "--bram-budget", "3", "--p-par-candidates", "2",
                       "--n-par-candidates", "4", "--replicas", "2"])
        assert rc == cli.EXIT_INFEASIBLE
        assert "a" in capsys.readouterr().err

    def test_vgg_headline(self, tmp_path):
        out = tmp_path / "o"
        rc = cli.main(["optimize", "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "optimize.json").read_text())
        assert doc["result"]["bw_max_gbps"] < 25.0


class TestSchedule:
    def test_sweep_rows(self, tiny_cfg, tmp_path):
        out = tmp_path / "o"
        rc = cli.main(["schedule", "--config", tiny_cfg, "--out", str(out),
                       "--n-kernels", "8", "--r", "2,4", "--seeds", "0,1",
                       "--methods", "greedy"])
        assert rc == 0
        rows = data_rows(out / "schedule.csv")
        # methods x r x seeds x (2 layers + 1 average row)
        assert len(rows) == 1 * 2 * 2 * 3
        assert (out / "schedule_tables.bin").exists()

    def test_two_seeds_give_two_rows_per_point(self, tiny_cfg, tmp_path):
        out = tmp_path / "o"
        cli.main(["schedule", "--config", tiny_cfg, "--out", str(out),
                  "--n-kernels", "8", "--r", "4", "--seeds", "3,4",
                  "--methods", "random"])
        rows = [r for r in data_rows(out / "schedule.csv") if r.split(",")[3] == "a"]
        assert len(rows) == 2

    def test_bad_pattern_rejected(self, tiny_cfg, tmp_path):
        rc = cli.main(["schedule", "--config", tiny_cfg, "--out", str(tmp_path),
                       "--pattern", "zigzag"])
        assert rc == cli.EXIT_CONFIG


class TestSimulate:
    def test_trace_and_agreement(self, tiny_cfg, tmp_path):
        out = tmp_path / "o"
        rc = cli.main(["simulate", "--config", tiny_cfg, "--out", str(out),
                       "--layer", "a", "--p-par", "2", "--n-par", "4",
                       "--ps", "4", "--ns", "8"])
        assert rc == 0
        doc = json.loads((out / "simulate.json").read_text())
        agree = doc["model_agreement"]
        for cls in ("inputs", "kernels", "outputs"):
            assert agree[cls]["simulated"] == agree[cls]["model"]

    def test_unknown_layer(self, tiny_cfg, tmp_path):
        rc = cli.main(["simulate", "--config", tiny_cfg, "--out", str(tmp_path),
                       "--layer", "zz", "--ps", "4", "--ns", "8"])
        assert rc == cli.EXIT_CONFIG


class TestVerify:
    def test_tiny_run_passes_quickly(self, tmp_path):
        t0 = time.time()
        rc = cli.main(["verify", "--sizes", "tiny", "--out", str(tmp_path / "o")])
        elapsed = time.time() - t0
        assert rc == 0
        assert elapsed < 10.0
        doc = json.loads((tmp_path / "o" / "verify.json").read_text())
        assert doc["pass"] is True
        assert len(doc["checks"]) == 5

    def test_zero_tolerance_fails_fft_check(self, tmp_path):
        rc = cli.main(["verify", "--sizes", "tiny", "--fft-tol", "0",
                       "--out", str(tmp_path / "o")])
        assert rc == cli.EXIT_VERIFY
        doc = json.loads((tmp_path / "o" / "verify.json").read_text())
        failed = [c for c in doc["checks"] if not c["pass"]]
        assert [c["name"] for c in failed] == ["fft-vs-direct-dft"]


class TestManifest:
    def test_embedded_in_csv_and_json(self, tmp_path):
        out = tmp_path / "o"
        cli.main(["analyze", "--out", str(out)])
        head = (out / "analyze.csv").read_text().splitlines()[:2]
        assert head[0].startswith("# specflow-csv-schema: analyze.")
        manifest = json.loads(head[1].split("# manifest: ")[1])
        assert manifest["version"]
        assert manifest["config"] == "vgg16-k8"
