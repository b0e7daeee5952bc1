import json
import math
import os

import pandas as pd
import pytest

from dataset import load_csv
from emo import EngineConfig
from experiment_config import ExperimentConfig
from harness import (STATS_COLUMNS, HarnessError, load_results, main, read_result, result_stem, run_experiment,
                     run_single, summarize)
from metrics import GenerationStats, RunResult
from semantic_emo import SemanticConfig, SemanticConfigError


def tiny_config(dataset, out, **overrides):
    settings = dict(dataset_path=dataset, gp=EngineConfig(pop_size=16, generations=3), seeds=[0, 1],
                    output_dir=str(out))
    settings.update(overrides)
    return ExperimentConfig(**settings)


def files_in(directory):
    return sorted(name for name in os.listdir(directory) if not name.startswith("."))


def test_two_seeds_give_two_result_sets(synthetic_csv, tmp_path):
    results = run_experiment(tiny_config(synthetic_csv, tmp_path))
    assert [r.seed for r in results] == [0, 1]
    assert files_in(tmp_path) == ["nsga2_canonical_l0.01_u0.5_s0.csv", "nsga2_canonical_l0.01_u0.5_s0.json",
                                  "nsga2_canonical_l0.01_u0.5_s1.csv", "nsga2_canonical_l0.01_u0.5_s1.json"]
    assert all(len(r.stats) == 3 for r in results)


def test_reruns_are_byte_identical(synthetic_csv, tmp_path):
    semantic = SemanticConfig(approach="sdo")
    run_experiment(tiny_config(synthetic_csv, tmp_path / "a", semantic=semantic))
    run_experiment(tiny_config(synthetic_csv, tmp_path / "b", semantic=semantic, n_workers=4, run_workers=2))
    names = files_in(tmp_path / "a")
    assert names == files_in(tmp_path / "b")
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_result_files_round_trip(synthetic_csv, tmp_path):
    cfg = tiny_config(synthetic_csv, tmp_path, engine="spea2", semantic=SemanticConfig(approach="ssc"), seeds=[4])
    result = run_single(cfg, 4, load_csv(synthetic_csv))
    path = tmp_path / (result_stem(result) + ".json")
    assert read_result(str(path)) == result
    assert load_results(str(tmp_path)) == [result]
    stats = pd.read_csv(tmp_path / (result_stem(result) + ".csv"))
    assert list(stats.columns) == STATS_COLUMNS
    assert stats["generation"].tolist() == [0, 1, 2]


def test_result_metadata(synthetic_csv, tmp_path):
    result = run_experiment(tiny_config(synthetic_csv, tmp_path, seeds=[2]))[0]
    data = json.loads((tmp_path / (result_stem(result) + ".json")).read_text())
    assert data["reference_point"] == [1.01, 1.01]
    assert data["hypervolume_space"] == "raw (1-TPR, 1-TNR)"
    assert data["wall_time"] is None
    assert data["config"]["seeds"] == [2]
    assert "output_dir" not in data["config"]
    for member in data["front"]:
        assert len(member["objectives"]) == 2
        assert member["tpr"] == pytest.approx(1.0 - member["objectives"][0])
        assert member["tnr"] == pytest.approx(1.0 - member["objectives"][1])
        assert member["test_tpr"] == pytest.approx(1.0 - member["test_objectives"][0])
        assert member["test_tnr"] == pytest.approx(1.0 - member["test_objectives"][1])


def test_wall_time_recorded_on_request(synthetic_csv, tmp_path):
    result = run_experiment(tiny_config(synthetic_csv, tmp_path, seeds=[0], record_wall_time=True))[0]
    assert result.wall_time > 0


def test_unbounded_ubss_result_is_strict_json(synthetic_csv, tmp_path):
    semantic = SemanticConfig(approach="sdo", bounds=(0.0, math.inf))
    result = run_experiment(tiny_config(synthetic_csv, tmp_path, semantic=semantic, seeds=[1]))[0]
    assert result_stem(result) == "nsga2_sdo_l0.0_uinf_s1"
    text = (tmp_path / "nsga2_sdo_l0.0_uinf_s1.json").read_text()
    assert "Infinity" not in text
    assert json.loads(text)["config"]["semantic"]["ubss"] is None
    assert read_result(str(tmp_path / "nsga2_sdo_l0.0_uinf_s1.json")) == result


def test_config_echo_reproduces_run(synthetic_csv, tmp_path):
    first = run_experiment(tiny_config(synthetic_csv, tmp_path / "a", seeds=[3]))[0]
    echo = dict(first.config, output_dir=str(tmp_path / "b"))
    second = run_experiment(ExperimentConfig.from_dict(echo))[0]
    assert second.front == first.front
    assert second.stats == first.stats


def test_bad_combination_fails_before_running(synthetic_csv, tmp_path):
    cfg = tiny_config(synthetic_csv, tmp_path / "out", engine="moead", semantic=SemanticConfig(approach="scd"))
    with pytest.raises(SemanticConfigError):
        run_experiment(cfg)
    assert not (tmp_path / "out").exists()


def test_canonical_hypervolume_never_degrades(synthetic_csv, tmp_path):
    cfg = tiny_config(synthetic_csv, tmp_path, gp=EngineConfig(pop_size=50, generations=10), seeds=list(range(10)))
    for result in run_experiment(cfg):
        assert result.final.hypervolume >= result.stats[0].hypervolume


def fake_result(approach, unique_count, hypervolume=0.5, mean_nodes=9.0, seed=0):
    stats = [GenerationStats(0, hypervolume, unique_count, mean_nodes, unique_count)]
    return RunResult(seed, "nsga2", approach, [], stats, config={"semantic": {"lbss": 0.01, "ubss": 0.5}})


def test_summary_of_single_run():
    table = summarize([fake_result("canonical", 4, hypervolume=0.7, mean_nodes=12.5)]).table
    row = table.loc["nsga2/canonical"]
    assert row["runs"] == 1
    assert row["hypervolume_mean"] == row["hypervolume_median"] == row["hypervolume_max"] == 0.7
    assert row["mean_nodes_min"] == 12.5


def test_summary_median_and_ratio():
    summary = summarize([fake_result("canonical", 4, seed=0), fake_result("canonical", 4, seed=1),
                         fake_result("sdo", 8, seed=0), fake_result("sdo", 12, seed=1)])
    assert summary.table.loc["nsga2/sdo [0.01, 0.5]", "unique_count_median"] == 10
    assert summary.table.loc["nsga2/canonical", "unique_count_median"] == 4
    assert summary.ratios.loc["nsga2/sdo [0.01, 0.5]", "nsga2/canonical"] == 2.5
    assert summary.ratios.loc["nsga2/canonical", "nsga2/canonical"] == 1.0


def test_summary_of_two_runs_takes_median():
    table = summarize([fake_result("sdo", 4), fake_result("sdo", 6, seed=1)]).table
    assert table.loc["nsga2/sdo [0.01, 0.5]", "unique_count_median"] == 5


def test_summary_needs_results(tmp_path):
    with pytest.raises(HarnessError):
        summarize([])
    with pytest.raises(HarnessError):
        load_results(str(tmp_path))


def test_cli_end_to_end(tmp_path, capsys):
    data = str(tmp_path / "synth.csv")
    assert main(["gen-synth", "--out", data, "--n", "120", "--imbalance", "5", "--seed", "2"]) == 0
    assert len(load_csv(data)) == 120

    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"dataset": {"path": data}, "gp": {"pop_size": 10, "generations": 2}}))
    out = str(tmp_path / "results")
    assert main(["run", "--config", str(config), "--approach", "sdo", "--seed", "7", "--out", out]) == 0
    assert files_in(out) == ["nsga2_sdo_l0.01_u0.5_s7.csv", "nsga2_sdo_l0.01_u0.5_s7.json"]

    assert main(["summarize", "--in", out]) == 0
    assert os.path.exists(os.path.join(out, "summary.csv"))
    assert os.path.exists(os.path.join(out, "ratios.csv"))
    assert "nsga2/sdo" in capsys.readouterr().out


def test_cli_errors_return_nonzero(tmp_path, capsys):
    assert main(["run"]) == 1
    assert main(["run", "--dataset", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1
    assert main(["summarize", "--in", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--engine", "nsga3"])
