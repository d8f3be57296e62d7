import csv
import json
import subprocess
import sys

import pytest

from codemix_hate.cli import main
from codemix_hate.corpus import load_dataset
from codemix_hate.evaluate import load_report, validate_report

SMALL = ["--cell", "lstm", "--units", "6", "--dim", "8", "--max-length", "20", "--epochs", "3"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """gen-synthetic -> preprocess -> split -> augment -> train -> evaluate on a tiny corpus."""
    d = tmp_path_factory.mktemp("chain")
    assert run("gen-synthetic", "--output", d / "raw.tsv", "--per-class", 20, "--seed", 1) == 0
    assert run("preprocess", "--input", d / "raw.tsv", "--output", d / "proc.tsv") == 0
    assert run("split", "--input", d / "proc.tsv", "--out-dir", d, "--seed", 0) == 0
    assert run("augment", "--input", d / "train.tsv", "--output", d / "aug.tsv",
               "--lexicon", d / "raw.lexicon.tsv", "--seed", 0) == 0
    assert run("train", "--train", d / "aug.tsv", "--out-dir", d / "run", *SMALL, "--seed", 0) == 0
    assert run("evaluate", "--checkpoint", d / "run" / "model.ckpt", "--test", d / "test.tsv",
               "--out-dir", d / "eval") == 0
    return d


def test_chain_outputs(chain):
    for name in ("raw.tsv", "raw.tsv.meta.json", "raw.lexicon.tsv", "proc.tsv", "train.tsv",
                 "test.tsv", "split.meta.json", "aug.tsv",
                 "run/model.ckpt", "run/model.ckpt.last", "run/history.jsonl", "run/summary.json",
                 "run/vocab.tsv", "run/history.png",
                 "eval/report.json", "eval/report.txt", "eval/report.csv", "eval/report.png"):
        assert (chain / name).exists(), name
    report = json.loads((chain / "eval" / "report.json").read_text())
    validate_report(report)
    assert sum(report["support"]) == len(load_dataset(chain / "test.tsv"))
    assert (chain / "eval" / "report.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert len((chain / "run" / "history.jsonl").read_text().splitlines()) == 3


def test_augmented_counts_follow_multipliers(chain):
    train = load_dataset(chain / "train.tsv")
    aug = load_dataset(chain / "aug.tsv")
    assert aug.counts == tuple(m * n for m, n in zip((4, 7, 2), train.counts))
    meta = json.loads((chain / "aug.tsv.meta.json").read_text())
    assert meta["seed"] == 0 and len(meta["config_hash"]) == 16


def test_rerun_is_byte_identical(chain, tmp_path):
    assert run("augment", "--input", chain / "train.tsv", "--output", tmp_path / "aug.tsv",
               "--lexicon", chain / "raw.lexicon.tsv", "--seed", 0) == 0
    assert (tmp_path / "aug.tsv").read_bytes() == (chain / "aug.tsv").read_bytes()
    assert run("train", "--train", chain / "aug.tsv", "--out-dir", tmp_path / "run", *SMALL,
               "--seed", 0) == 0
    for name in ("model.ckpt", "history.jsonl", "vocab.tsv"):
        assert (tmp_path / "run" / name).read_bytes() == (chain / "run" / name).read_bytes()


def test_resume_continues_training(chain, tmp_path, capsys):
    assert run("train", "--train", chain / "aug.tsv", "--out-dir", tmp_path,
               "--resume", chain / "run" / "model.ckpt.last", *SMALL[:-1], 5, "--seed", 0) == 0
    assert len((tmp_path / "history.jsonl").read_text().splitlines()) == 5


def test_predict(chain, capsys):
    assert run("predict", "--checkpoint", chain / "run" / "model.ckpt",
               "--text", "Mujhe mat sikha", "--text", "@x hello") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("label\t")
    assert len(lines) == 3
    assert lines[1].split("\t")[0] in ("Non-Offensive", "Offensive", "Hate-Inducing")


def test_predict_without_input_is_usage_error(chain):
    assert run("predict", "--checkpoint", chain / "run" / "model.ckpt") == 1


def test_frozen_preprocess_golden(data_dir, tmp_path):
    assert run("preprocess", "--input", data_dir / "sample_raw.tsv", "--output", tmp_path / "p.tsv") == 0
    assert (tmp_path / "p.tsv").read_bytes() == (data_dir / "sample_processed.tsv").read_bytes()


def test_split_with_explicit_counts(tmp_path, capsys):
    assert run("gen-synthetic", "--output", tmp_path / "raw.tsv", "--counts", "10,6,12") == 0
    assert run("split", "--input", tmp_path / "raw.tsv", "--out-dir", tmp_path,
               "--test-counts", "2,1,3") == 0
    assert load_dataset(tmp_path / "test.tsv").counts == (2, 1, 3)


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["train", "--out-dir", "x"],
    ["split", "--input", "x", "--out-dir", "y", "--test-counts", "1,2"],
])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


@pytest.mark.parametrize("lr", ["0", "-0.01"])
def test_nonpositive_learning_rate_rejected(chain, tmp_path, lr, capsys):
    assert run("train", "--train", chain / "aug.tsv", "--out-dir", tmp_path, "--lr", lr) == 1
    assert "initial_learning_rate" in capsys.readouterr().err


def test_bad_config_field_exit_1(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("model:\n  hiden_units: 3\n")
    assert run("preprocess", "--input", "x", "--output", "y", "--config", tmp_path / "c.yaml") == 1
    assert "model.hiden_units" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    (tmp_path / "empty.tsv").write_text("label\ttext\n")
    assert run("preprocess", "--input", tmp_path / "empty.tsv", "--output", tmp_path / "o.tsv") == 2
    assert "empty dataset" in capsys.readouterr().err
    assert run("preprocess", "--input", tmp_path / "missing.tsv", "--output", tmp_path / "o.tsv") == 2
    (tmp_path / "bad.ckpt").write_bytes(b"nope")
    assert run("predict", "--checkpoint", tmp_path / "bad.ckpt", "--text", "x") == 2


def test_all_empty_after_preprocessing(tmp_path):
    (tmp_path / "d.tsv").write_text("label\ttext\nOffensive\t@a http://b.c :)\n")
    assert run("preprocess", "--input", tmp_path / "d.tsv", "--output", tmp_path / "o.tsv") == 2


GRID = """\
model: {embedding_dimension: 8, hidden_units: 6, max_length: 20}
schedule: {epochs: 2}
data: {lexicon: LEX}
grid:
  model.cell_kind: [lstm, gru]
  augment.enabled: [true, false]
"""


@pytest.fixture(scope="module")
def grid_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("grid")
    assert run("gen-synthetic", "--output", d / "raw.tsv", "--per-class", 15, "--seed", 2) == 0
    return d


def test_grid_four_cells_and_resume(grid_data, tmp_path, capsys):
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(GRID.replace("LEX", str(grid_data / "raw.lexicon.tsv")))
    assert run("grid", "--data", grid_data / "raw.tsv", "--out-dir", tmp_path / "g", "--config", cfg) == 0
    rows = list(csv.reader((tmp_path / "g" / "comparison.csv").read_text().splitlines()))
    assert len(rows) == 5
    assert [r[0] for r in rows[1:]] == ["cell_kind=lstm,enabled=True", "cell_kind=lstm,enabled=False",
                                        "cell_kind=gru,enabled=True", "cell_kind=gru,enabled=False"]
    assert (tmp_path / "g" / "comparison.png").exists()
    first = (tmp_path / "g" / "comparison.csv").read_bytes()
    capsys.readouterr()
    # a rerun skips finished cells and reproduces the table
    (tmp_path / "g" / "cells" / "cell_kind=gru,enabled=False" / "report.json").unlink()
    assert run("grid", "--data", grid_data / "raw.tsv", "--out-dir", tmp_path / "g", "--config", cfg) == 0
    out = capsys.readouterr().out
    assert out.count("[skip]") == 3 and out.count("[done]") == 1
    assert (tmp_path / "g" / "comparison.csv").read_bytes() == first


def test_single_point_grid_matches_chained_commands(grid_data, tmp_path):
    cfg = tmp_path / "one.yaml"
    cfg.write_text("model: {cell_kind: lstm, embedding_dimension: 8, hidden_units: 6, max_length: 20}\n"
                   f"schedule: {{epochs: 2}}\ndata: {{lexicon: {grid_data / 'raw.lexicon.tsv'}}}\n")
    assert run("grid", "--data", grid_data / "raw.tsv", "--out-dir", tmp_path / "g", "--config", cfg) == 0
    grid_report = load_report(tmp_path / "g" / "cells" / "base" / "report.json")

    d = tmp_path / "chain"
    assert run("preprocess", "--input", grid_data / "raw.tsv", "--output", d / "proc.tsv") == 0
    assert run("split", "--input", d / "proc.tsv", "--out-dir", d, "--config", cfg) == 0
    assert run("augment", "--input", d / "train.tsv", "--output", d / "aug.tsv", "--config", cfg) == 0
    assert run("train", "--train", d / "aug.tsv", "--out-dir", d / "run", "--config", cfg) == 0
    assert run("evaluate", "--checkpoint", d / "run" / "model.ckpt", "--test", d / "test.tsv",
               "--out-dir", d / "eval", "--config", cfg) == 0
    chain_report = load_report(d / "eval" / "report.json")
    assert chain_report.confusion == grid_report.confusion
    assert chain_report.config_hash == grid_report.config_hash


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "codemix_hate", "gen-synthetic", "--output",
                           str(tmp_path / "r.tsv"), "--per-class", "2"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "codemix_hate", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-synthetic" in proc.stdout
