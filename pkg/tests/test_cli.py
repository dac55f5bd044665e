import json

import pytest
from click.testing import CliRunner

from fuzzyrl.cli import main
from fuzzyrl.experiment import (ConfigError, ExperimentError, compare_fronts,
                                run_experiment, validate_config)
from fuzzyrl.reporting import read_compare_csv, read_eval_csv

MINI = {
    "seed": 5,
    "dataset": {"n_traj": 8, "traj_len": 25},
    "model": {"kind": "exact"},
    "fitness": {"horizon": 40, "gamma": 0.99, "n_start_states": 5,
                "n_test_states": 8},
    "fpsrl": {"rules": 2, "features": [[0, 1, 2, 3]], "particles": 12,
              "iterations": 15},
    "fgprl": {"population": 20, "generations": 4},
    "feature_selection": {"horizon": 8, "swarm_size": 8, "iterations": 8,
                          "n_states": 110},
    "local_search": {"swarm_size": 8, "iterations": 6},
}


@pytest.fixture(scope="module")
def mini_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mini")
    summary = run_experiment(MINI, out)
    return out, summary


class TestConfigValidation:
    def test_defaults_valid(self):
        cfg = validate_config({})
        assert cfg["fitness"]["horizon"] == 300

    def test_ratio_error_names_field(self):
        bad = {"fgprl": {"ratios": {"crossover": 0.5, "reproduction": 0.5,
                                    "mutation": 0.2, "random": 0.2}}}
        with pytest.raises(ConfigError, match="fgprl.ratios"):
            validate_config(bad)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="no_such"):
            validate_config({"no_such": 1})
        with pytest.raises(ConfigError, match="fitness.no_such"):
            validate_config({"fitness": {"no_such": 1}})

    def test_bad_values_name_fields(self):
        with pytest.raises(ConfigError, match="fitness.horizon"):
            validate_config({"fitness": {"horizon": 1}})
        with pytest.raises(ConfigError, match="model.kind"):
            validate_config({"model": {"kind": "neural"}})
        with pytest.raises(ConfigError, match="stages"):
            validate_config({"stages": ["gen-data", "frobnicate"]})


class TestPipeline:
    def test_all_artifacts_present(self, mini_run):
        out, summary = mini_run
        for name in ("dataset.jsonl", "model.json", "ranking.json",
                     "fpsrl_policy.json", "fpsrl_curve.csv", "pareto.jsonl",
                     "fgprl_curve.csv", "front.csv", "pareto_tuned.jsonl",
                     "evaluation.csv", "compare.csv", "budget.json",
                     "manifest.json", "timings.json",
                     "fpsrl_curve.png", "fgprl_curve.png", "front.png",
                     "compare.png"):
            assert (out / name).exists(), name

    def test_budgets_all_match(self, mini_run):
        out, _ = mini_run
        budget = json.loads((out / "budget.json").read_text())
        assert budget["all_match"] is True
        assert budget["stages"]["fpsrl"]["declared"] == 12 * 15
        assert budget["stages"]["fpsrl"]["counted"] == 12 * 15

    def test_penalty_is_negated_fitness(self, mini_run):
        out, _ = mini_run
        rows = read_eval_csv(out / "evaluation.csv")
        assert rows
        for row in rows:
            assert row["penalty_model"] == -row["fitness_model"]
            assert row["penalty_real"] == -row["fitness_real"]

    def test_exact_model_gap_zero(self, mini_run):
        out, _ = mini_run
        for row in read_eval_csv(out / "evaluation.csv"):
            assert row["gap"] == 0.0

    def test_compare_single_run_min_median_max_equal(self, mini_run):
        out, _ = mini_run
        for row in read_compare_csv(out / "compare.csv"):
            assert row["penalty_model_min"] == row["penalty_model_median"] \
                == row["penalty_model_max"]

    def test_bundle_reproducible(self, mini_run, tmp_path):
        out, _ = mini_run
        again = tmp_path / "again"
        run_experiment(MINI, again)
        volatile = {"timings.json"}
        for path in sorted(out.iterdir()):
            if path.name in volatile or path.suffix == ".png":
                continue
            other = again / path.name
            assert other.exists(), path.name
            assert path.read_bytes() == other.read_bytes(), path.name

    def test_stage_failure_writes_error_manifest(self, tmp_path):
        bad = dict(MINI)
        bad = json.loads(json.dumps(MINI))
        bad["stages"] = ["fpsrl"]  # no dataset/model prepared
        with pytest.raises(ExperimentError):
            run_experiment(bad, tmp_path)
        manifest = json.loads((tmp_path / "error_manifest.json").read_text())
        assert manifest["failed_stage"] == "fpsrl"
        assert manifest["stages_completed"] == []

    def test_seed_changes_results(self, mini_run, tmp_path):
        out, _ = mini_run
        other_cfg = json.loads(json.dumps(MINI))
        other_cfg["seed"] = 6
        other = tmp_path / "other"
        run_experiment(other_cfg, other)
        assert (out / "dataset.jsonl").read_bytes() != \
            (other / "dataset.jsonl").read_bytes()


class TestCompareFronts:
    def test_even_count_median(self):
        runs = [[{"complexity": 63, "penalty_model": float(i), "penalty_real": 0.0}]
                for i in range(1, 11)]
        table = compare_fronts(runs, [])
        row = table[0]
        assert row["n"] == 10
        assert row["penalty_model_min"] == 1.0
        assert row["penalty_model_median"] == 5.5
        assert row["penalty_model_max"] == 10.0

    def test_methods_grouped_and_sorted(self):
        fpsrl = [[{"complexity": 63, "penalty_model": 2.0, "penalty_real": 2.5}]]
        fgprl = [[{"complexity": 12, "penalty_model": 4.0, "penalty_real": 4.5},
                  {"complexity": 40, "penalty_model": 3.0, "penalty_real": 3.5}]]
        table = compare_fronts(fpsrl, fgprl)
        assert [(r["method"], r["complexity"]) for r in table] == \
            [("fpsrl", 63), ("fgprl", 12), ("fgprl", 40)]


class TestCliSurface:
    def test_staged_invocations_compose(self, tmp_path):
        runner = CliRunner()
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(MINI))
        out_dir = tmp_path / "run"
        for args in (
            ["gen-data", "--config", str(cfg_path), "--out-dir", str(out_dir)],
            ["fit-model", "--config", str(cfg_path), "--out-dir", str(out_dir)],
            ["select-features", "--config", str(cfg_path), "--out-dir", str(out_dir)],
            ["fpsrl", "--config", str(cfg_path), "--out-dir", str(out_dir),
             "--particles", "10", "--iterations", "10"],
            ["fgprl", "--config", str(cfg_path), "--out-dir", str(out_dir),
             "--population", "16", "--generations", "2"],
            ["tune", "--config", str(cfg_path), "--out-dir", str(out_dir),
             "--swarm-size", "6", "--iterations", "4"],
            ["evaluate", "--config", str(cfg_path), "--out-dir", str(out_dir)],
            ["compare", "--config", str(cfg_path), "--out-dir", str(out_dir)],
        ):
            result = runner.invoke(main, args, catch_exceptions=False)
            assert result.exit_code == 0, (args, result.output)
        assert (out_dir / "compare.csv").exists()
        budget = json.loads((out_dir / "budget.json").read_text())
        assert budget["stages"]["fpsrl"]["declared"] == 100

    def test_run_command(self, tmp_path):
        runner = CliRunner()
        cfg = json.loads(json.dumps(MINI))
        cfg["stages"] = ["gen-data", "fit-model"]
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(cfg))
        result = runner.invoke(main, ["run", "--config", str(cfg_path),
                                      "--out-dir", str(tmp_path / "r")],
                               catch_exceptions=False)
        assert result.exit_code == 0
        assert (tmp_path / "r" / "model.json").exists()

    def test_gen_data_flags(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "d"
        result = runner.invoke(main, ["gen-data", "--out-dir", str(out),
                                      "--n-traj", "2", "--traj-len", "3",
                                      "--n-irrelevant", "2", "--seed", "3"],
                               catch_exceptions=False)
        assert result.exit_code == 0
        lines = (out / "dataset.jsonl").read_text().strip().split("\n")
        assert len(lines) == 1 + 6
        header = json.loads(lines[0])
        assert header["state_dim"] == 6

    def test_fpsrl_explicit_features_flag(self, tmp_path):
        runner = CliRunner()
        cfg = json.loads(json.dumps(MINI))
        cfg["stages"] = ["gen-data", "fit-model"]
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "r"
        runner.invoke(main, ["run", "--config", str(cfg_path),
                             "--out-dir", str(out)], catch_exceptions=False)
        result = runner.invoke(main, ["fpsrl", "--config", str(cfg_path),
                                      "--out-dir", str(out),
                                      "--features", "0,2",
                                      "--rules", "2", "--particles", "8",
                                      "--iterations", "6"],
                               catch_exceptions=False)
        assert result.exit_code == 0
        doc = json.loads((out / "fpsrl_policy.json").read_text())
        assert doc["meta"]["structure"]["features"] == [[0, 2]]
