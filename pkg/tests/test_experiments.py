import csv
import math
from dataclasses import replace

import pytest

from robust_policy import experiments as ex
from robust_policy.core import RunConfig

FAST = RunConfig(policy="mlp", policy_hidden=(4,), optimizer="adam", lr=1e-2, iterations=15)


def small_grid(**kw):
    args = dict(name="t", gamma_stars=(1.0, 3.0), ns=(300,), seeds=(0, 1), estimators=("efficient", "dr"),
                run=FAST)
    args.update(kw)
    return ex.ExperimentGrid(**args)


@pytest.mark.parametrize("kw", [dict(seeds=()), dict(seeds=(1, 1)), dict(estimators=("magic",)),
                                dict(gamma_stars=(0.5,)), dict(gammas=()), dict(objective="loss"),
                                dict(ns=())])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        small_grid(**kw)


def test_cells_cross_product():
    g = small_grid(gammas=(2.0, 5.0))
    assert len(g.cells()) == 2 * 2 * 1 * 2
    assert small_grid().cells()[:2] == [(1.0, 1.0, 300, 0), (1.0, 1.0, 300, 1)]


def test_study_designs():
    assert ex.confounding_grid().gamma_stars == (1.0, 5.0, 7.0, 10.0)
    m = ex.misspecification_grid()
    assert m.gamma_stars == (7.0,) and m.gammas == (2.0, 7.0, 20.0, 100.0)
    s = ex.sample_size_grid()
    assert s.ns == (500, 2000, 8000) and s.estimators == ("efficient", "plugin")
    assert ex.confounding_grid().seeds == tuple(range(10))


@pytest.fixture(scope="module")
def swept(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    rows = ex.sweep(replace(small_grid(), output=str(out)), workers=1)
    return out, rows


def test_sweep_files_and_order(swept):
    out, rows = swept
    assert len(rows) == 4 * 2
    assert [(r.gamma_star, r.seed, r.estimator) for r in rows[:4]] == [
        (1.0, 0, "efficient"), (1.0, 0, "dr"), (1.0, 1, "efficient"), (1.0, 1, "dr")]
    header = (out / "results.csv").read_text().splitlines()[0]
    assert header == "experiment,seed,gamma_star,gamma,n,estimator,objective,estimate,se,true_value,true_regret"
    assert (out / "errors.txt").read_text() == ""
    assert all(math.isfinite(r.true_regret) for r in rows)


def test_sweep_is_deterministic_and_worker_independent(swept, tmp_path):
    out, _ = swept
    grid = replace(small_grid(), output=str(tmp_path))
    ex.sweep(grid, workers=2)
    assert (tmp_path / "results.csv").read_bytes() == (out / "results.csv").read_bytes()
    assert (tmp_path / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()


def test_summary_recomputes_from_results(swept):
    out, _ = swept
    rows = ex.read_results(out / "results.csv")
    with (out / "summary.csv").open() as fh:
        summary = list(csv.DictReader(fh))
    assert len(summary) == 4
    for s in summary:
        members = [r for r in rows if r.gamma_star == float(s["gamma_star"]) and r.estimator == s["estimator"]]
        vals = [r.true_regret for r in members]
        mean = sum(vals) / len(vals)
        sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / (len(vals) - 1))
        assert float(s["mean_true_regret"]) == pytest.approx(mean, abs=1e-15)
        assert float(s["sd_true_regret"]) == pytest.approx(sd, abs=1e-15)
        assert int(s["count"]) == 2 and int(s["failed"]) == 0
    assert ex.mean_regret(rows, "dr", gamma_star=3.0) == pytest.approx(
        next(float(s["mean_true_regret"]) for s in summary if s["estimator"] == "dr" and s["gamma_star"] == "3.0"))


def test_failures_are_recorded_and_the_sweep_continues(tmp_path, monkeypatch):
    real = ex.train

    def flaky(cfg, data, estimator="efficient", **kw):
        if estimator == "dr" and cfg.seed == 1:
            raise RuntimeError("boom")
        return real(cfg, data, estimator=estimator, **kw)

    monkeypatch.setattr(ex, "train", flaky)
    rows = ex.sweep(replace(small_grid(gamma_stars=(2.0,)), output=str(tmp_path)), workers=1)
    bad = [r for r in rows if r.error]
    assert len(bad) == 1 and "boom" in bad[0].error and math.isnan(bad[0].true_regret)
    assert "boom" in (tmp_path / "errors.txt").read_text()
    summary = {r[4]: r for r in ex.summarize(rows)}
    assert summary["dr"][6:8] == ["1", "1"]


def test_worker_width_env(monkeypatch):
    monkeypatch.setenv("ROBUST_POLICY_THREADS", "3")
    assert ex.worker_width(8) == 3 and ex.worker_width(None) == 3 and ex.worker_width(0) == 1
