import json

import numpy as np
import pytest
from click.testing import CliRunner

from cpmkm.cli import main
from cpmkm.shiftlab import gaussian_mixture_pool


@pytest.fixture(scope="module")
def pool_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "pool.csv"
    pool = gaussian_mixture_pool(1200, seed=5)
    lines = ["x0,x1,label"]
    for row, lab in zip(pool.features, pool.labels):
        lines.append(f"{float(row[0])!r},{float(row[1])!r},{int(lab)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


FAST = ["--c-grid", "1.0", "--g-grid", "1.0", "--folds", "3"]


def test_adapt_no_shift_toy(pool_csv, tmp_path):
    res = run("simulate", "--pool", pool_csv, "--np", "300", "--nq", "300",
              "--nt", "60", "--alpha", "1000000", "--seed", "1",
              "--out-dir", tmp_path / "scen")
    assert res.exit_code == 0
    out = tmp_path / "adapted.json"
    res = run("adapt", "--source", tmp_path / "scen" / "source.csv",
              "--target", tmp_path / "scen" / "target.csv",
              "--no-standardize", "--out", out, *FAST)
    assert res.exit_code == 0, res.output
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1
    w = np.array(doc["w_hat"])
    assert np.abs(w - 1.0).max() <= 0.35  # near-uniform Dirichlet, modest n
    assert len(doc["target_labels"]) == 300


def test_adapt_missing_file(tmp_path):
    res = run("adapt", "--source", tmp_path / "nope.csv",
              "--target", tmp_path / "nope2.csv")
    assert res.exit_code == 1
    assert "nope.csv" in res.output


def test_adapt_wrong_feature_count(pool_csv, tmp_path):
    bad = tmp_path / "bad_target.csv"
    bad.write_text("x0\n0.1\n0.2\n")
    res = run("adapt", "--source", pool_csv, "--target", bad, *FAST)
    assert res.exit_code == 1


def test_adapt_unknown_config_key(pool_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"bogus_key": 1}')
    res = run("adapt", "--source", pool_csv, "--target", pool_csv,
              "--config", cfg)
    assert res.exit_code == 1
    assert "bogus_key" in res.output


def test_benchmark_single_report(pool_csv, tmp_path):
    out = tmp_path / "bench.json"
    res = run("benchmark", "--pool", pool_csv, "--np", "150", "--nq", "100",
              "--nt", "100", "--methods", "cpmkm", "--source-reps", "1",
              "--target-reps", "1", "--out", out, *FAST)
    assert res.exit_code == 0, res.output
    doc = json.loads(out.read_text())
    assert len(doc["reports"]) == 1
    assert doc["reports"][0]["method"] == "cpmkm"


def test_benchmark_deterministic(pool_csv, tmp_path):
    args = ["benchmark", "--pool", pool_csv, "--np", "150", "--nq", "100",
            "--nt", "100", "--methods", "cpmkm,bbse", "--source-reps", "1",
            "--target-reps", "2", "--seed", "9", *FAST]
    docs = []
    for name in ("b1.json", "b2.json"):
        res = run(*args, "--out", tmp_path / name)
        assert res.exit_code == 0, res.output
        doc = json.loads((tmp_path / name).read_text())
        doc.pop("timestamp")
        docs.append(doc)
    assert docs[0] == docs[1]


def test_benchmark_unknown_method(pool_csv, tmp_path):
    res = run("benchmark", "--pool", pool_csv, "--methods", "kmm",
              "--out", tmp_path / "x.json")
    assert res.exit_code == 1
    assert "kmm" in res.output


def test_evaluate_metrics(tmp_path):
    (tmp_path / "pred.csv").write_text("label\n1\n2\n2\n")
    (tmp_path / "true.csv").write_text("label\n1\n2\n1\n")
    (tmp_path / "qh.json").write_text('{"q_hat": [0.6, 0.4]}')
    (tmp_path / "qt.json").write_text('{"q_true": [0.5, 0.5]}')
    res = run("evaluate", "--predictions", tmp_path / "pred.csv",
              "--truth", tmp_path / "true.csv",
              "--q-hat", tmp_path / "qh.json", "--q-true", tmp_path / "qt.json")
    assert res.exit_code == 0, res.output
    assert "ACC: 0.666667" in res.output
    assert "MSE: 0.01000000" in res.output


def test_plot_data(pool_csv, tmp_path):
    out = tmp_path / "b.json"
    res = run("benchmark", "--pool", pool_csv, "--np", "120", "--nq", "80",
              "--nt", "80", "--methods", "cpmkm", "--source-reps", "1",
              "--target-reps", "1", "--out", out, *FAST)
    assert res.exit_code == 0, res.output
    csv_out = tmp_path / "plot.csv"
    res = run("plot-data", "--reports", out, "--out", csv_out)
    assert res.exit_code == 0
    lines = csv_out.read_text().strip().splitlines()
    assert lines[0] == "method,n_q,mean,std"
    assert lines[1].startswith("cpmkm,80,")


def test_selftest_passes():
    r1 = run("selftest")
    r2 = run("selftest")
    assert r1.exit_code == 0
    assert r1.output == r2.output


def test_selftest_injected_fault():
    res = run("selftest", "--inject-fault", "truncation")
    assert res.exit_code == 3
    assert "FAIL" in res.output
