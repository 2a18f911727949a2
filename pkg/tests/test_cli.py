import csv
import hashlib
import json

import pytest

from kgstruct import cli, datasets
from kgstruct.checkpoint import read_checkpoint
from kgstruct.results import read_results
from kgstruct.twig import read_records


def run(*argv):
    return cli.main([str(a) for a in argv])


def feature_rows(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


def test_features_reproduce_worked_row(tmp_path):
    assert run("features", "--dataset", "example", "--out", tmp_path) == 0
    comment, rows = feature_rows(tmp_path / "features-example-train.csv")
    assert comment.startswith("# seed=0 config_hash=")
    row = next(r for r in rows if (r["subject"], r["predicate"], r["object"]) == ("Gondor", "At-War-With", "Isengard"))
    assert [row[k] for k in ("s_deg", "o_deg", "p_freq", "sp_cofreq", "op_cofreq", "so_cofreq")] == list("752121")
    assert row["s_mean_deg_nbr"] == "3.4" and row["o_mean_deg_nbr"] == "5.75"


def test_oracle_evaluation_row(tmp_path):
    assert run("evaluate", "--dataset", "example", "--split", "test", "--scorer", "oracle", "--out", tmp_path) == 0
    rows = {r["metric"]: r for r in read_results(tmp_path / "results.csv")}
    assert rows["test_mrr"]["value"] == 1.0
    assert rows["test_mrr"]["seed"] == "0" and rows["test_mrr"]["git_describe"]


def test_grid_two_by_two_writes_four_records(tmp_path):
    spec = {"scoring": "DistMult", "epochs": 1,
            "base": {"sampler": "basic", "npp": 2},
            "axes": {"loss": ["BCEL"], "sampler": ["basic"], "npp": [2], "reg": [1e-2],
                     "dim": [4, 8], "lr": [1e-2, 1e-4]}}
    (tmp_path / "g.json").write_text(json.dumps(spec), encoding="utf-8")
    assert run("grid", "--dataset", "nations", "--spec", tmp_path / "g.json", "--out", tmp_path) == 0
    lines = (tmp_path / "records-nations.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    assert len(read_records(tmp_path)) == 4
    assert all(json.loads(line)["seed"] == json.loads(line)["config"]["seed"] for line in lines)


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert run("bogus") == 1
        assert "invalid choice" in capsys.readouterr().err

    def test_unknown_flag(self, tmp_path):
        assert run("features", "--dataset", "example", "--frobnicate", "--out", tmp_path) == 1

    def test_missing_required(self, tmp_path, capsys):
        assert run("features", "--out", tmp_path) == 1
        assert "--dataset" in capsys.readouterr().err

    def test_missing_dataset_dir(self, tmp_path):
        assert run("features", "--dataset", tmp_path / "absent", "--out", tmp_path) == 2

    def test_bad_config_contents(self, tmp_path):
        (tmp_path / "c.json").write_text('{"nonsense": 1}', encoding="utf-8")
        assert run("features", "--dataset", "example", "--config", tmp_path / "c.json", "--out", tmp_path) == 2
        (tmp_path / "bad.json").write_text("{", encoding="utf-8")
        assert run("features", "--dataset", "example", "--config", tmp_path / "bad.json", "--out", tmp_path) == 2

    def test_invalid_hyperparameter(self, tmp_path):
        assert run("train-kgem", "--dataset", "example", "--dim", "0", "--out", tmp_path) == 2

    def test_evaluate_needs_one_source(self, tmp_path):
        assert run("evaluate", "--dataset", "example", "--out", tmp_path) == 1

    def test_empty_report(self, tmp_path):
        assert run("report", "--out", tmp_path) == 2

    def test_divergence_is_runtime(self, tmp_path, monkeypatch):
        from kgstruct.exceptions import TrainingDivergedError

        def boom(*a, **k):
            raise TrainingDivergedError("nan")
        monkeypatch.setattr(cli, "cmd_features", boom)
        monkeypatch.setitem(cli.COMMANDS, "features", boom)
        assert run("features", "--dataset", "example", "--out", tmp_path) == 3


def test_config_file_then_flags(tmp_path):
    cfg = {"features": {"dataset": "example", "split": "test", "seed": 5}}
    (tmp_path / "c.json").write_text(json.dumps(cfg), encoding="utf-8")
    assert run("features", "--config", tmp_path / "c.json", "--out", tmp_path) == 0
    assert (tmp_path / "features-example-test.csv").is_file()
    assert run("features", "--config", tmp_path / "c.json", "--split", "train", "--seed", 6, "--out", tmp_path) == 0
    comment, _ = feature_rows(tmp_path / "features-example-train.csv")
    assert comment.startswith("# seed=6 ")


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert run("features", "--dataset", "example") == 0
    assert (tmp_path / "envout" / "results.csv").is_file()


def test_train_evaluate_finetune_pipeline(tmp_path):
    out = tmp_path / "o"
    assert run("train-kgem", "--dataset", "nations", "--scoring", "TransE", "--epochs", 1, "--dim", 4,
               "--npp", 2, "--checkpoint", out / "k.ckpt", "--out", out) == 0
    header, _ = read_checkpoint(out / "k.ckpt", "kgem")
    assert header["meta"]["config"]["seed"] == 0
    assert run("evaluate", "--dataset", "nations", "--checkpoint", out / "k.ckpt", "--out", out) == 0
    # a checkpoint from another graph is rejected
    assert run("evaluate", "--dataset", "umls", "--checkpoint", out / "k.ckpt", "--out", out) == 2

    assert run("train-twigi", "--dataset", "nations", "--epochs", 1, "--drop", "so_cofreq",
               "--checkpoint", out / "t.ckpt", "--out", out) == 0
    assert run("finetune", "--dataset", "kinships", "--checkpoint", out / "t.ckpt", "--epochs", 1,
               "--save", out / "ft.ckpt", "--out", out) == 0
    header, _ = read_checkpoint(out / "ft.ckpt", "twigi")
    assert header["meta"]["stages"] == 2 and header["meta"]["kg_name"] == "kinships"
    assert run("evaluate", "--dataset", "umls", "--checkpoint", out / "ft.ckpt", "--split", "test", "--out", out) == 0
    commands = {r["command"] for r in read_results(out / "results.csv")}
    assert commands == {"train-kgem", "evaluate", "train-twigi", "finetune"}


def test_ablate_and_report(tmp_path):
    assert run("ablate", "--dataset", "nations", "--epochs", 1, "--masks", "none", "all_coarse",
               "--out", tmp_path) == 0
    with open(tmp_path / "ablation-nations.csv", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    rows = list(csv.DictReader(lines[1:]))
    assert [(r["mask"], r["n_features"]) for r in rows] == [("none", "22"), ("all_coarse", "6")]
    assert run("ablate", "--dataset", "nations", "--masks", "nope", "--out", tmp_path) == 2
    assert run("report", "--out", tmp_path) == 0
    text = (tmp_path / "summary.txt").read_text(encoding="utf-8")
    assert text.startswith("== nations ==")
    before = (tmp_path / "summary.csv").read_bytes()
    assert run("report", "--out", tmp_path) == 0
    assert (tmp_path / "summary.csv").read_bytes() == before


def test_simulate_writes_artifacts(tmp_path):
    spec = {"scoring": "DistMult", "epochs": 1,
            "axes": {"loss": ["BCEL"], "sampler": ["basic"], "npp": [2], "reg": [1e-2],
                     "dim": [4], "lr": [1e-2, 1e-3, 1e-4, 1e-6]}}
    (tmp_path / "g.json").write_text(json.dumps(spec), encoding="utf-8")
    assert run("grid", "--dataset", "nations", "--spec", tmp_path / "g.json", "--out", tmp_path) == 0
    assert run("simulate", "--records", tmp_path / "records-nations.jsonl", "--pct", 50,
               "--phase1-epochs", 1, "--phase2-epochs", 1, "--out", tmp_path) == 0
    assert list(tmp_path.glob("twig-*.ckpt"))
    scatter = next(tmp_path.glob("simulate-scatter-*.csv")).read_text(encoding="utf-8").splitlines()
    assert scatter[0].startswith("# seed=0 config_hash=") and len(scatter) == 2 + 2
    assert any(r["metric"] == "r2" for r in read_results(tmp_path / "results.csv"))


def test_dataset_files_untouched(tmp_path):
    path = datasets.dataset_path("example")
    before = {f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in path.iterdir()}
    run("features", "--dataset", "example", "--out", tmp_path)
    run("train-twigi", "--dataset", "example", "--epochs", 1, "--out", tmp_path)
    after = {f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in path.iterdir()}
    assert before == after
