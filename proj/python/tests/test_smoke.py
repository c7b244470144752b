import json
import math

import pytest

import expforce


@pytest.fixture(scope="module")
def pool_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pool")
    assert expforce.synth_pool(40, str(d), seed=3) == 40
    return d


def test_load_pool(pool_dir):
    records = expforce.load_pool(str(pool_dir))
    assert len(records) == 40
    assert records[0]["id"] == "syn-0000"
    assert all(r["f_star_n"] >= 0.25 for r in records)


def test_grasp_oracle():
    assert expforce.closed_form_fstar(0.236, 2.0) == 1.25
    assert expforce.adaptive_force_search(0.236, 2.0) == (1.25, 4)


def test_retrieval():
    assert expforce.cosine_similarity([1, 2, 3], [4, 5, 6]) == pytest.approx(0.9746318461970762, abs=1e-15)
    table = {"a": [1.0, 0.0], "b": [1.0, 0.0], "c": [0.0, 1.0]}
    assert [i for i, _ in expforce.top_k("q", [1.0, 0.0], table, 2)] == ["a", "b"]


def test_metrics_and_outcomes():
    m = expforce.compute_metrics([(2, 1), (1, 3), (2, 2)])
    assert m["mae_n"] == pytest.approx(1.0)
    assert m["rmse_n"] == pytest.approx(math.sqrt(5 / 3))
    assert expforce.classify_outcome(7.0, 1.0, True) == "Overestimate"
    assert expforce.classify_outcome(3.0, 1.0, True) == "Appropriate"
    assert expforce.classify_outcome(0.5, 1.0) == "Insufficient"


def test_parse_and_lint():
    assert expforce.parse_force("FORCE_N: 35") == (20.0, 35.0, True)
    assert expforce.lint_template("the friction coefficient")
    assert expforce.lint_template("Estimate the force.") == []


def test_errors_carry_codes(tmp_path):
    with pytest.raises(expforce.ExpforceError) as info:
        expforce.load_pool(str(tmp_path))
    assert info.value.args[0] == "MissingManifest"


def test_predict(pool_dir):
    image = pool_dir / "images" / "syn-0005.png"
    a = expforce.predict(str(pool_dir), str(image), backend="expforce", k=3, query_id="syn-0005")
    b = expforce.predict(str(pool_dir), str(image), backend="knn-average", k=3, query_id="syn-0005")
    assert a["f_hat_n"] == b["f_hat_n"]
    assert len(a["retrieved"]) == 3
    assert "syn-0005" not in [i for i, _ in a["retrieved"]]


def test_cv_and_sweep(pool_dir, tmp_path):
    report = expforce.run_cv(pool_dir, backend="knn-average", k=3, seed=1, out_dir=tmp_path / "cv")
    assert report["kind"] == "cv"
    assert report["queries"] == 40
    assert (tmp_path / "cv" / "report.md").exists()
    again = expforce.run_cv(pool_dir, backend="knn-average", k=3, seed=1, concurrency=1)
    assert json.dumps(again, sort_keys=True) == json.dumps(report, sort_keys=True)
    sweep = expforce.run_sweep(pool_dir, backend="knn-average", ks=[1, 3], out_dir=tmp_path / "sw")
    assert [p["k"] for p in sweep["points"]] == [1, 3]
    assert (tmp_path / "sw" / "sweep.csv").read_text().startswith("k,mae_n,std_n\n")


def test_cli(tmp_path):
    rc, out, _ = expforce.cli(["synth-pool", "--n", "10", "--out", str(tmp_path / "p")])
    assert rc == 0 and out.startswith("config-fingerprint: ")
    rc, _, err = expforce.cli(["eval", "cv"])
    assert rc == 2 and "error" in err
