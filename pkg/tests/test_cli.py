import csv
import json
import subprocess
import sys

import pytest

from gridcluster import __version__
from gridcluster.cli import main

from conftest import IRIS


def run(workdir, *args):
    return main(["--workdir", str(workdir), *map(str, args)])


@pytest.fixture
def iris_pipeline(tmp_path):
    assert run(tmp_path, "bin", "--k", 5, IRIS) == 0
    assert run(tmp_path, "pairs") == 0
    assert run(tmp_path, "cocluster", "--seed", 0, "--restarts", 4, "--budget-seconds", 60) == 0
    return tmp_path


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["bin", str(IRIS)])  # --k missing
    assert exc.value.code == 1


def test_bad_parameter_value_exit_1(tmp_path, capsys):
    assert run(tmp_path, "bin", "--k", 1, IRIS) == 1
    assert "k must be" in capsys.readouterr().err


def test_empty_pairs_exit_2(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(tmp_path, "cocluster", "--pairs", empty) == 2
    assert "empty" in capsys.readouterr().err


def test_missing_stage_exit_2(tmp_path, capsys):
    assert run(tmp_path, "pairs") == 2
    assert "not found" in capsys.readouterr().err


def test_schema_infer(tmp_path):
    assert run(tmp_path, "schema", "infer", IRIS) == 0
    doc = json.loads((tmp_path / "schema.json").read_text())
    assert [v["kind"] for v in doc["variables"]] == ["numeric"] * 4 + ["categorical"]


def test_bin_then_pairs_750_rows(tmp_path):
    assert run(tmp_path, "bin", "--k", 5, IRIS) == 0
    assert run(tmp_path, "pairs") == 0
    with (tmp_path / "pairs.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["IdInstance", "IdVarPart"]
    assert len(rows) - 1 == 750


def test_end_to_end_iris(iris_pipeline, capsys):
    wd = iris_pipeline
    capsys.readouterr()
    assert run(wd, "report", "--top", 3, "--format", "json") == 0
    out = capsys.readouterr().out
    assert out.count("instance cluster") == 3
    doc = json.loads((wd / "report.json").read_text())
    assert len(doc["profiles"]["row"]) == 3
    assert doc["manifest"] == "manifest.json"
    for fmt in ("csv", "svg"):
        assert run(wd, "report", "--format", fmt) == 0
        assert (wd / f"report.{fmt}").is_file()

    assert run(wd, "coarsen", "--info", 0.7) == 0
    coarse = json.loads((wd / "coarse.json").read_text())
    assert coarse["info"] >= 0.7
    assert run(wd, "coarsen", "--rows", 2, "--cols", 2) == 0
    coarse = json.loads((wd / "coarse.json").read_text())
    assert coarse["I"] <= 2 and coarse["J"] <= 2

    assert run(wd, "mca", "--axes", 5, "--svg", wd / "plane.svg") == 0
    assert run(wd, "kmeans", "--k", 3, "--axes", 2, "--seed", 0) == 0
    assert run(wd, "partition") == 0
    assert run(wd, "compare", wd / "partition.csv", wd / "kmeans.csv", "--weights", "chi2") == 0
    rep = json.loads((wd / "compare.json").read_text())
    assert len(rep["matching"]) == 3

    manifest = json.loads((wd / "manifest.json").read_text())
    commands = [h["command"] for h in manifest["history"]]
    assert commands[:3] == ["bin", "pairs", "cocluster"]
    assert manifest["parameters"]["k"] == 5
    assert all("timestamp" in h for h in manifest["history"])
    assert str(IRIS) in manifest["inputs"]


def test_coarsen_rows_without_cols_is_usage_error(iris_pipeline):
    assert run(iris_pipeline, "coarsen", "--rows", 2) == 1


def test_json_artifacts_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for wd in (a, b):
        run(wd, "bin", "--k", 5, IRIS)
        run(wd, "pairs")
        run(wd, "cocluster", "--seed", 7, "--restarts", 2)
        run(wd, "coarsen", "--info", 0.5)
        run(wd, "report")
        run(wd, "mca")
        run(wd, "kmeans", "--k", 3, "--axes", 2, "--seed", 1)
    for name in ("binning.json", "model.json", "hierarchy.json", "coarse.json",
                 "report.json", "mca.json", "kmeans.json", "pairs.csv", "binned.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gridcluster.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
