import json
import os

import numpy as np
import pytest

from hetavg.cli import main


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().strip().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestQueueAlpha:
    def test_reference_point_reports_both_paths(self, tmp_path):
        out = tmp_path / "alpha.csv"
        code = main([
            "queue-alpha", "--k", "8", "--lambda", "28", "--mu-bar", "5",
            "--output", str(out),
        ])
        assert code == 0
        payload = json.loads((tmp_path / "alpha.json").read_text())
        head = payload["headline"]
        assert head["alpha_numeric"] == pytest.approx(0.00837, abs=1e-4)
        assert head["alpha_published"] == pytest.approx(0.00837, abs=1e-4)
        assert head["alpha_numeric"] == pytest.approx(
            head["alpha_published"], rel=1e-5
        )
        assert payload["config"]["lam"] == 28.0
        header, rows = read_csv(out)
        assert header == ["k", "lambda", "mu_bar", "alpha_numeric",
                          "richardson_residual", "alpha_published"]
        assert len(rows) == 1

    def test_non_eight_server_count_has_no_published_value(self, tmp_path):
        out = tmp_path / "alpha4.csv"
        assert main([
            "queue-alpha", "--k", "4", "--lambda", "14", "--mu-bar", "5",
            "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "alpha4.json").read_text())
        assert payload["headline"]["alpha_published"] is None


class TestQueueExact:
    def test_distribution_table(self, tmp_path):
        out = tmp_path / "exact.csv"
        assert main([
            "queue-exact", "--lambda", "1", "--rates", "0.8,1.2",
            "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "exact.json").read_text())
        assert payload["headline"]["expected_customers"] == pytest.approx(
            1.3513513513, rel=1e-9
        )
        header, rows = read_csv(out)
        assert header == ["n", "probability"]
        total = sum(float(r[1]) for r in rows)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_invalid_config_exits_nonzero_without_output(self, tmp_path, capsys):
        out = tmp_path / "bad.csv"
        code = main([
            "queue-exact", "--lambda", "5", "--rates", "1,1",
            "--output", str(out),
        ])
        assert code == 2
        assert "unstable" in capsys.readouterr().err
        assert not out.exists()
        assert not (tmp_path / "bad.json").exists()
        assert not any(p.suffix == ".tmp" for p in tmp_path.iterdir())


class TestQueueSim:
    def test_fig1_columns_and_reproducibility(self, tmp_path):
        args = [
            "queue-sim", "--fig1", "--horizon", "2000", "--warmup", "100",
            "--replications", "2", "--seed", "7",
            "--eps", "0,0.5,1.0",
        ]
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        assert main(args + ["--output", str(out1)]) == 0
        assert main(args + ["--output", str(out2)]) == 0
        header, rows = read_csv(out1)
        assert header == ["epsilon", "rel_error", "improved_rel_error"]
        assert [r[0] for r in rows] == ["0.0", "0.5", "1.0"]
        # identical config + seed -> byte-identical CSV
        assert out1.read_bytes() == out2.read_bytes()

    def test_explicit_simulation_rows(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert main([
            "queue-sim", "--lambda", "1", "--rates", "0.8,1.2",
            "--horizon", "3000", "--warmup", "300", "--replications", "4",
            "--seed", "3", "--output", str(out),
        ]) == 0
        header, rows = read_csv(out)
        assert header == ["replication", "time_avg_customers", "mean_sojourn",
                          "throughput"]
        assert len(rows) == 4


class TestAuction:
    def test_revenue_check(self, tmp_path):
        out = tmp_path / "auction.csv"
        assert main([
            "auction", "--check", "revenue", "--k", "2",
            "--family", "uniform", "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "auction.json").read_text())
        assert payload["headline"]["r_symmetric"] == pytest.approx(1 / 3, abs=1e-9)
        assert payload["headline"]["r_asymmetric"] == pytest.approx(1 / 3, abs=1e-5)

    def test_averaging_check_slope(self, tmp_path):
        out = tmp_path / "avg.csv"
        assert main([
            "auction", "--check", "averaging", "--k", "2",
            "--perturbations", "0.5*bump,-0.5*bump",
            "--eps", "0.05,0.1,0.2,0.4", "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "avg.json").read_text())
        assert payload["headline"]["gap_slope"] == pytest.approx(2.0, abs=0.1)
        assert payload["headline"]["max_rel_gap"] < 0.01
        header, rows = read_csv(out)
        assert header == ["epsilon", "r_asym", "r_homog_mean", "gap"]
        assert len(rows) == 4

    def test_unknown_perturbation_rejected(self, tmp_path, capsys):
        # argparse reports bad type conversions itself and exits with 2
        with pytest.raises(SystemExit) as info:
            main([
                "auction", "--check", "averaging", "--k", "2",
                "--perturbations", "wiggle,bump",
                "--output", str(tmp_path / "x.csv"),
            ])
        assert info.value.code == 2
        assert not (tmp_path / "x.csv").exists()


class TestDiffusion:
    def test_weak_check(self, tmp_path):
        out = tmp_path / "weak.csv"
        assert main([
            "diffusion", "--check", "weak", "--network", "torus:3",
            "--p-bar", "0.1", "--q-bar", "0.4",
            "--p-tilde", "0.17", "--q-tilde", "0.25",
            "--times", "0:20:9", "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "weak.json").read_text())
        assert payload["headline"]["max_deviation"] <= 1e-10

    def test_compare_check(self, tmp_path):
        out = tmp_path / "cmp.csv"
        assert main([
            "diffusion", "--check", "compare", "--network", "circle2:6",
            "--p-bar", "0.15", "--q-bar", "0.4", "--times", "0:10:6",
            "--replications", "400", "--seed", "5", "--output", str(out),
        ]) == 0
        header, rows = read_csv(out)
        assert header == ["time", "exact", "simulated", "std_error", "z"]
        payload = json.loads((tmp_path / "cmp.json").read_text())
        assert payload["headline"]["worst_z"] <= 4.0

    def test_averaging_check(self, tmp_path):
        out = tmp_path / "davg.csv"
        assert main([
            "diffusion", "--check", "averaging", "--network", "circle2:6",
            "--p-bar", "0.1", "--q-bar", "0.4",
            "--hp", "0.05,-0.05,0.025,-0.025,0.01,-0.01",
            "--hq", "0.1,-0.1,0.2,-0.2,0.05,-0.05",
            "--eps", "0.0125,0.025,0.05,0.1",
            "--times", "0:30:7", "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "davg.json").read_text())
        assert payload["headline"]["gap_slope"] == pytest.approx(2.0, abs=0.1)


class TestAveragingSweep:
    def test_queue_exact_sweep(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main([
            "averaging-sweep", "--model", "queue-exact", "--k", "4",
            "--lambda", "14", "--mu-bar", "5", "--h", "1,2,-0.5,-2.5",
            "--eps", "0.0125,0.025,0.05,0.1", "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "sweep.json").read_text())
        assert payload["headline"]["slope"] == pytest.approx(2.0, abs=0.05)
        assert payload["headline"]["improved_slope"] == pytest.approx(3.0, abs=0.15)
        header, rows = read_csv(out)
        assert header == ["epsilon", "abs_error", "improved_residual"]

    def test_nonzero_sum_direction_rejected(self, tmp_path, capsys):
        code = main([
            "averaging-sweep", "--model", "queue-exact", "--k", "4",
            "--lambda", "14", "--mu-bar", "5", "--h", "1,1,1,1",
            "--output", str(tmp_path / "x.csv"),
        ])
        assert code == 2
        assert "sum to zero" in capsys.readouterr().err


class TestVerify:
    def test_subset_run_reports_and_exits_zero(self, tmp_path, capsys):
        report = tmp_path / "report.json"
        code = main(["verify", "--only", "1,3,4", "--output", str(report)])
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("[PASS]") == 3
        assert "criterion  1" in out and "criterion  4" in out
        payload = json.loads(report.read_text())
        assert [c["id"] for c in payload["criteria"]] == [1, 3, 4]
        assert all(c["passed"] for c in payload["criteria"])
        assert payload["criteria"][0]["measured"]["L"] == pytest.approx(
            6.2314, abs=5e-4
        )


class TestConfigFileAndPlot:
    def test_config_json_equivalent_to_flags(self, tmp_path):
        conf = {
            "experiment": "queue-alpha",
            "k": 8,
            "lambda": 28,
            "mu_bar": 5,
            "output": str(tmp_path / "c.csv"),
        }
        conf_path = tmp_path / "conf.json"
        conf_path.write_text(json.dumps(conf))
        assert main(["--config", str(conf_path)]) == 0
        payload = json.loads((tmp_path / "c.json").read_text())
        assert payload["headline"]["alpha_numeric"] == pytest.approx(
            0.00837, abs=1e-4
        )

    def test_plot_writes_figure(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main([
            "averaging-sweep", "--model", "queue-exact", "--k", "4",
            "--lambda", "14", "--mu-bar", "5", "--h", "1,2,-0.5,-2.5",
            "--eps", "0.0125,0.025,0.05,0.1", "--plot",
            "--output", str(out),
        ]) == 0
        png = tmp_path / "sweep.png"
        assert png.exists()
        assert png.stat().st_size > 1000

    def test_metadata_echoes_parameters(self, tmp_path):
        out = tmp_path / "exact.csv"
        assert main([
            "queue-exact", "--lambda", "1", "--k", "2", "--mu-bar", "1",
            "--output", str(out),
        ]) == 0
        payload = json.loads((tmp_path / "exact.json").read_text())
        config = payload["config"]
        for key in ("lam", "k", "mu_bar", "seed", "output"):
            assert key in config
        assert "version" in payload and "wall_clock_s" in payload
