import csv
import json

import pytest

from trendlearner.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps({"count": 90, "n": 30, "seed": 5}))
    assert main(["synth", "--config", str(d / "cfg.json"), "--out", str(d / "data.ndjson")]) == 0
    return d


def test_pipeline_end_to_end(workdir):
    d = str(workdir)
    assert main(["extract-trends", "--input", f"{d}/data.ndjson", "--k", "3", "--out", f"{d}/trends.json"]) == 0
    assert main(["learn-params", "--input", f"{d}/data.ndjson", "--trends", f"{d}/trends.json",
                 "--target-macro-f1", "0.8", "--out", f"{d}/params.json"]) == 0
    assert main(["train", "--input", f"{d}/data.ndjson", "--trends", f"{d}/trends.json",
                 "--params", f"{d}/params.json", "--n-min", "2", "--trees", "5", "--out", f"{d}/model.json"]) == 0
    assert main(["predict", "--input", f"{d}/data.ndjson", "--model", f"{d}/model.json",
                 "--out", f"{d}/pred.csv"]) == 0
    rows = read_csv(f"{d}/pred.csv")
    assert len(rows) == 90
    assert list(rows[0]) == ["object_id", "t", "label", "p_only", "p_ertree", "ertree",
                             "p_class0", "p_class1", "p_class2", "decided"]
    assert main(["evaluate", "--predictions", f"{d}/pred.csv", "--truth", f"{d}/data.ndjson",
                 "--trends", f"{d}/trends.json", "--out", f"{d}/report.json"]) == 0
    report = json.loads((workdir / "report.json").read_text())
    assert 0 <= report["macro_f1"] <= 1
    assert (workdir / "report_ri_ccdf.csv").exists() and len(read_csv(f"{d}/report_scatter.csv")) == 90
    assert main(["regress", "--input", f"{d}/data.ndjson", "--model", f"{d}/model.json", "--deltas", "1,7",
                 "--folds", "3", "--n-examples", "5", "--out", f"{d}/reg.csv"]) == 0
    reg = read_csv(f"{d}/reg.csv")
    assert {(r["strategy"], r["delta"]) for r in reg} == {
        (s, str(x)) for s in ("general_ml", "general_mrbf", "specialized_ml", "specialized_mrbf") for x in (1, 7)}


def test_run_experiment(workdir):
    d = str(workdir)
    assert main(["run", "--input", f"{d}/data.ndjson", "--folds", "2", "--k", "3",
                 "--target-macro-f1", "0.8", "--out-dir", f"{d}/exp"]) == 0
    assert len(read_csv(f"{d}/exp/folds.csv")) == 2
    summary = json.loads((workdir / "exp" / "summary.json").read_text())
    assert summary["config"]["folds"] == 2 and "trendlearner.macro_f1" in summary["summary"]


def test_extract_with_beta_cv_writes_curve(workdir):
    d = str(workdir)
    main(["extract-trends", "--input", f"{d}/data.ndjson", "--k-max", "5", "--out", f"{d}/auto.json"])
    curve = read_csv(f"{d}/auto_beta_cv.csv")
    assert [r["k"] for r in curve] == ["2", "3", "4", "5"] and curve[0]["beta_cv"] == ""


def test_exit_codes(workdir, tmp_path):
    d = str(workdir)
    (tmp_path / "bad.json").write_text(json.dumps({"weights": [1, 1, 0, 0]}))
    assert main(["synth", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "x")]) == 2
    assert main(["extract-trends", "--input", str(tmp_path / "missing"), "--k", "3", "--out", "x"]) == 1
    (tmp_path / "broken.ndjson").write_text("{nope\n")
    assert main(["extract-trends", "--input", str(tmp_path / "broken.ndjson"), "--k", "3",
                 "--out", str(tmp_path / "t.json")]) == 1
    assert main(["regress", "--input", f"{d}/data.ndjson", "--model", str(tmp_path / "none.json"), "--deltas", "a",
                 "--out", str(tmp_path / "r.csv")]) == 2
    with pytest.raises(SystemExit):
        main(["no-such-command"])
