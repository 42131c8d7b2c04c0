import json

import numpy as np
import pytest

from msgmm import cli
from msgmm.core import read_json, read_model_json
from msgmm.errors import NumericalFailure


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run("simulate", "--n-components", 30, "--n-samples", 6, "--seed", 5, "--out", data) == 0
    out = root / "run"
    assert run("pipeline", data, "--out-dir", out, "--truth", data / "truth.json") == 0
    return data, out


def test_pipeline_outputs(dataset):
    _, out = dataset
    for name in ("corrected.csv", "peaks.csv", "partition.json", "residual.csv", "model_raw.json",
                 "model.json", "diagnostics.json", "model.svg", "report.json"):
        assert (out / name).is_file(), name
    report = read_json(out / "report.json")
    assert 0.0 <= report["f1"] <= 1.0
    model, _ = read_model_json(out / "model.json")
    assert read_json(out / "diagnostics.json")["K_final"] == model.K


def test_stages_match_pipeline(dataset, tmp_path):
    data, out = dataset
    t = tmp_path
    assert run("preprocess", data, "--out", t / "corrected.csv") == 0
    assert run("detect", t / "corrected.csv", "--out", t / "peaks.csv") == 0
    assert run("partition", t / "corrected.csv", "--peaks", t / "peaks.csv", "--out", t / "partition.json",
               "--residual", t / "residual.csv") == 0
    assert run("decompose", t / "corrected.csv", "--partition", t / "partition.json",
               "--out", t / "model_raw.json") == 0
    assert run("postprocess", t / "model_raw.json", "--out", t / "model.json") == 0
    for name in ("corrected.csv", "peaks.csv", "partition.json", "residual.csv", "model_raw.json", "model.json"):
        assert (t / name).read_bytes() == (out / name).read_bytes(), name


def test_evaluate_csv_and_json(dataset, tmp_path):
    data, out = dataset
    truth = data / "truth.json"
    assert run("evaluate", out / "model.json", "--truth", truth, "--out", tmp_path / "a.json") == 0
    assert read_json(tmp_path / "a.json") == read_json(out / "report.json")
    assert run("evaluate", out / "peaks.csv", "--truth", truth, "--out", tmp_path / "b.json") == 0
    assert read_json(tmp_path / "b.json")["n_detected"] > 0


def test_evaluate_sweep(dataset, tmp_path):
    data, out = dataset
    code = run("evaluate", "--truth", data / "truth.json", "--spectrum", out / "corrected.csv",
               "--sweep", "mz_thr=0,0.3", "--sweep-csv", tmp_path / "sweep.csv",
               "--sweep-plot", tmp_path / "sweep.svg", "--out", tmp_path / "sweep.json")
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("mz_thr")
    assert read_json(tmp_path / "sweep.json")["best_value"] in (0.0, 0.3)
    assert (tmp_path / "sweep.svg").read_text().lstrip().startswith("<?xml")


def test_no_postprocess_keeps_more_components(dataset, tmp_path):
    data, out = dataset
    assert run("pipeline", out / "corrected.csv", "--out-dir", tmp_path, "--no-baseline",
               "--no-postprocess", "--no-plot") == 0
    plain, _ = read_model_json(tmp_path / "model.json")
    default, _ = read_model_json(out / "model.json")
    assert plain.K >= default.K
    assert (tmp_path / "model.json").read_bytes() == (tmp_path / "model_raw.json").read_bytes()


def test_config_file_and_flag_precedence(dataset, tmp_path):
    _, out = dataset
    (tmp_path / "run.cfg").write_text("mz_thr = 0\nmerge = true\n")
    raw = out / "model_raw.json"
    assert run("postprocess", raw, "--config", tmp_path / "run.cfg", "--no-filter", "--out", tmp_path / "a.json") == 0
    assert run("postprocess", raw, "--no-filter", "--no-merge", "--out", tmp_path / "b.json") == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert run("postprocess", raw, "--config", tmp_path / "run.cfg", "--mz-thr", 0.3, "--no-filter",
               "--out", tmp_path / "c.json") == 0
    a, _ = read_model_json(tmp_path / "a.json")
    c, _ = read_model_json(tmp_path / "c.json")
    assert c.K <= a.K


def test_plot_subcommand(dataset, tmp_path):
    _, out = dataset
    spectrum = out / "corrected.csv"
    assert run("plot", spectrum, "--model", out / "model.json", "--peaks", out / "peaks.csv",
               "--mz-min", 3000, "--mz-max", 4000, "--out", tmp_path / "a.svg") == 0
    assert "component-" in (tmp_path / "a.svg").read_text()
    assert run("plot", spectrum, "--mz-min", 4000, "--mz-max", 3000, "--out", tmp_path / "b.svg") == 3


def test_exit_codes(dataset, tmp_path, monkeypatch, capsys):
    data, out = dataset
    assert run("detect", tmp_path / "missing.csv", "--out", tmp_path / "p.csv") == 3
    (tmp_path / "bad.cfg").write_text("no_such_key = 1\n")
    assert run("postprocess", out / "model.json", "--config", tmp_path / "bad.cfg", "--out", tmp_path / "m.json") == 2
    assert run("postprocess", out / "model.json", "--mz-thr", -1, "--out", tmp_path / "m.json") == 2
    assert run("evaluate", "--truth", data / "truth.json", "--out", tmp_path / "e.json") == 2
    with pytest.raises(SystemExit) as info:
        run("detect")
    assert info.value.code == 2

    def fail(*args, **kwargs):
        raise NumericalFailure("non-finite log-likelihood during EM")

    monkeypatch.setattr(cli, "decompose_stage", fail)
    assert run("pipeline", out / "corrected.csv", "--no-baseline", "--out-dir", tmp_path / "x") == 4
    assert "non-finite" in capsys.readouterr().err


@pytest.mark.slow
def test_simulated_dataset_f1(tmp_path):
    data = tmp_path / "data"
    assert run("simulate", "--n-components", 100, "--n-samples", 100, "--seed", 42, "--out", data) == 0
    assert run("pipeline", data, "--out-dir", tmp_path / "run", "--truth", data / "truth.json", "--no-plot") == 0
    assert read_json(tmp_path / "run" / "report.json")["f1"] > 0.75
