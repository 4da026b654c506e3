"""Command-line interface: config resolution, subcommands, exit codes."""
import json

import pytest

from wiretaplab import cli


def _run(*argv):
    return cli.main(list(argv))


class TestConfigResolution:
    def test_defaults_then_file_then_set(self, tmp_path):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text(json.dumps({"system.k": 2, "seed": 7}))
        args = cli.make_parser().parse_args(
            ["oracle", "--config", str(cfgfile), "--set", "system.k=4"])
        cfg = cli.resolve_config(args)
        assert cfg["system.k"] == 4       # --set beats the file
        assert cfg["seed"] == 7           # file beats the default
        assert cfg["system.b"] == 1       # untouched default survives

    def test_seed_flag_beats_file(self, tmp_path):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text(json.dumps({"seed": 7}))
        args = cli.make_parser().parse_args(
            ["oracle", "--config", str(cfgfile), "--seed", "9"])
        assert cli.resolve_config(args)["seed"] == 9

    def test_missing_config_file(self, tmp_path):
        assert _run("oracle", "--config", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path / "o")) == cli.EXIT_MISSING

    def test_invalid_json_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert _run("oracle", "--config", str(bad),
                    "--out", str(tmp_path / "o")) == cli.EXIT_CONFIG

    def test_malformed_set(self, tmp_path):
        assert _run("oracle", "--set", "systemk4",
                    "--out", str(tmp_path / "o")) == cli.EXIT_CONFIG

    def test_bad_code_spec(self, tmp_path):
        assert _run("oracle", "--set", "system.code=bch:15",
                    "--out", str(tmp_path / "o")) == cli.EXIT_CONFIG

    def test_sweep_range_and_list(self):
        assert cli._sweep_values({"sweep.values": "0.0:0.2:0.1"}) == \
            [0.0, 0.1, 0.2]
        assert cli._sweep_values({"sweep.values": "0.1,0.3"}) == [0.1, 0.3]
        assert cli._sweep_values({"sweep.values": [0.25]}) == [0.25]


class TestGenDataEstimate:
    def test_roundtrip_and_half_channel_zero(self, tmp_path):
        out = tmp_path / "gen"
        assert _run("gen-data", "--set", "system.channel_eve=bsc:0.5",
                    "--set", "data.count=500", "--out", str(out)) == 0
        est = tmp_path / "est"
        assert _run("estimate", "--data", str(out / "dataset.wtp"),
                    "--out", str(est)) == 0
        payload = json.loads((est / "estimate.json").read_text())["result"]
        assert abs(payload["mi_raw_bits"]) < 1e-9
        assert payload["mi_projected_bits"] == 0.0
        assert payload["samples"] == 500

    def test_estimate_missing_dataset(self, tmp_path):
        assert _run("estimate", "--data", str(tmp_path / "none.wtp"),
                    "--out", str(tmp_path / "o")) == cli.EXIT_MISSING

    def test_estimate_code_mismatch(self, tmp_path):
        out = tmp_path / "gen"
        assert _run("gen-data", "--set", "data.count=100",
                    "--out", str(out)) == 0
        assert _run("estimate", "--data", str(out / "dataset.wtp"),
                    "--set", "system.code=bch:15:5",
                    "--out", str(tmp_path / "o")) == cli.EXIT_CONFIG


class TestOracleCommand:
    def test_writes_exact_result(self, tmp_path):
        out = tmp_path / "o"
        assert _run("oracle", "--set", "system.channel_eve=bsc:0.2",
                    "--out", str(out)) == 0
        doc = json.loads((out / "oracle.json").read_text())
        assert doc["result"]["mi"]["value_bits"] == \
            pytest.approx(1.283110988484205, abs=1e-12)
        assert (out / "config.json").is_file()

    def test_budget_exit_code(self, tmp_path, monkeypatch):
        from wiretaplab import oracle

        def boom(*a, **kw):
            raise oracle.EnumerationBudgetError("too large")
        monkeypatch.setattr(oracle, "exact_mi", boom)
        assert _run("oracle",
                    "--out", str(tmp_path / "o")) == cli.EXIT_BUDGET


class TestSweeps:
    def test_ber_sweep_rows_and_provenance(self, tmp_path):
        out = tmp_path / "o"
        assert _run("ber-sweep", "--set", "sweep.values=0.0:0.2:0.1",
                    "--set", "ber.count=2000", "--out", str(out)) == 0
        lines = (out / "ber_sweep.csv").read_text().strip().split("\n")
        assert lines[0].startswith("# config: ")
        assert lines[1].split(",")[0] == "snr_db_or_pe"
        assert len(lines) == 2 + 3
        assert float(lines[2].split(",")[3]) == 0.0  # clean channel, no errors

    def test_leakage_sweep_uhf_grid(self, tmp_path):
        out = tmp_path / "o"
        assert _run("leakage-sweep", "--set", "sweep.values=0.1,0.5",
                    "--set", "ber.count=2000", "--out", str(out)) == 0
        lines = (out / "leakage_sweep.csv").read_text().strip().split("\n")
        rows = [l.split(",") for l in lines[2:]]
        assert len(rows) == 4  # 2 difficulties x uhf on/off
        assert {r[2] for r in rows} == {"0", "1"}
        for r in rows:
            if r[0] == "0.5":
                assert abs(float(r[3])) < 1e-9

    def test_reruns_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert _run("ber-sweep", "--set", "sweep.values=0.1,0.2",
                        "--set", "ber.count=2000", "--out", str(out)) == 0
        assert (a / "ber_sweep.csv").read_bytes() == \
            (b / "ber_sweep.csv").read_bytes()


class TestBoundsCommand:
    def test_grid_and_report(self, tmp_path):
        out = tmp_path / "o"
        assert _run("bounds", "--set", "system.channel_eve=bsc:0.2",
                    "--set", "bounds.samples=3000", "--out", str(out)) == 0
        lines = (out / "bounds_grid.csv").read_text().strip().split("\n")
        assert lines[1] == "epsilon,B_bits,mean_psi,accept_frac"
        assert len(lines) > 4
        doc = json.loads((out / "bounds.json").read_text())
        assert 0.0 < doc["result"]["eps_star"] < 1.0


class TestDesignHash:
    def test_oracle_design_end_to_end(self, tmp_path):
        out = tmp_path / "o"
        assert _run("design-hash", "--set", "system.channel_eve=bsc:0.2",
                    "--set", "design.max_leakage=1.0", "--out", str(out)) == 0
        doc = json.loads((out / "design_trace.json").read_text())["result"]
        assert doc["final_k"] == 2
        assert doc["termination"] == "sign-change"
        assert doc["budget_met"]

    def test_unmet_budget_exit_code(self, tmp_path):
        # noiseless eavesdropper: every k leaks fully, budget can't be met
        assert _run("design-hash", "--set", "system.channel_eve=bsc:0.0",
                    "--set", "design.max_leakage=0.5",
                    "--out", str(tmp_path / "o")) == cli.EXIT_INVARIANT


class TestTrainCommand:
    def test_short_fixed_training_writes_artifacts(self, tmp_path):
        out = tmp_path / "o"
        assert _run("train", "--set", "train.epochs=2",
                    "--set", "train.curriculum=fixed",
                    "--set", "train.samples=600",
                    "--set", "train.eval_samples=300",
                    "--set", "train.batch_size=128",
                    "--set", "system.channel_eve=bsc:0.1",
                    "--out", str(out)) == 0
        assert (out / "model.cnb").is_file()
        lines = (out / "train_trace.jsonl").read_text().strip().split("\n")
        assert len(lines) == 2
        rec = json.loads(lines[-1])
        for key in ("epoch", "difficulty", "mi_raw_bits", "mi_proj_per_bit",
                    "loss", "secret_ber"):
            assert key in rec

    def test_estimate_with_trained_model(self, tmp_path):
        train_out = tmp_path / "t"
        common = ["--set", "train.epochs=2",
                  "--set", "train.curriculum=fixed",
                  "--set", "train.samples=600",
                  "--set", "train.eval_samples=300",
                  "--set", "train.batch_size=128",
                  "--set", "system.channel_eve=bsc:0.1"]
        assert _run("train", *common, "--out", str(train_out)) == 0
        gen_out = tmp_path / "g"
        assert _run("gen-data", "--set", "system.channel_eve=bsc:0.1",
                    "--set", "data.count=400", "--out", str(gen_out)) == 0
        est_out = tmp_path / "e"
        assert _run("estimate", "--data", str(gen_out / "dataset.wtp"),
                    "--model", str(train_out / "model.cnb"),
                    "--set", "estimator=cnbmm", "--out", str(est_out)) == 0
        payload = json.loads((est_out / "estimate.json").read_text())["result"]
        assert 0.0 <= payload["mi_projected_bits"] <= payload["k"]
