import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affectkit import annotations as ann
from affectkit import metrics
from affectkit.annotations import TaskKind
from affectkit.harness.data import dataset_from_manifest
from affectkit.harness.experiment import (
    EmptySubset, RunResult, compare, read_epochs_csv, run_comparison, run_preset, subset_indices,
)
from affectkit.harness.presets import PRESETS, get_preset
from affectkit.harness.synthetic import SyntheticConfig, generate_synthetic
from affectkit.mtl.checkpoint import load_checkpoint

SMALL = SyntheticConfig(n_train=400, n_val=150, feature_noise_std=0.02, seed=7)


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(SMALL)


class TestSubset:
    @given(st.integers(1, 500), st.floats(0.001, 1.0), st.integers(0, 2**32 - 1))
    def test_size_and_uniqueness(self, n, frac, seed):
        size = round(frac * n)
        if size == 0:
            with pytest.raises(EmptySubset):
                subset_indices(n, frac, np.random.default_rng(seed))
            return
        idx = subset_indices(n, frac, np.random.default_rng(seed))
        assert idx.size == size and np.unique(idx).size == size
        assert idx.min() >= 0 and idx.max() < n

    def test_zero_fraction(self, data):
        with pytest.raises(EmptySubset):
            run_preset("va-uni", *data, subset_fraction=0.0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            subset_indices(10, 1.5, np.random.default_rng(0))


class TestPresets:
    def test_recipes(self):
        assert set(PRESETS) == {"va-uni", "expr-uni", "au-uni", "mtl"}
        va, ex, au, mtl = (PRESETS[k].train for k in ("va-uni", "expr-uni", "au-uni", "mtl"))
        assert va.optimizer == "adam" and va.scheduler is not None and va.loss_weights == (0, 0, 1)
        assert ex.optimizer == "sgd" and ex.balance_expr and ex.loss_weights == (1, 0, 0)
        assert au.optimizer == "adam" and au.au_loss_kind == "bce" and au.balance_au and au.scheduler is not None
        assert mtl.optimizer == "adam" and mtl.au_loss_kind == "mse" and mtl.loss_weights == (1, 1, 1)
        assert PRESETS["mtl"].tasks == frozenset(TaskKind)

    def test_unknown(self):
        with pytest.raises(ValueError):
            get_preset("resnet")


def test_va_uni_loss_decreases(data):
    run = run_preset(get_preset("va-uni").with_train(epochs=5), *data)
    losses = [e.train_loss_va for e in run.epochs]
    assert all(b < a for a, b in zip(losses, losses[1:]))


@pytest.mark.parametrize("uni,head", [("expr-uni", "expr"), ("au-uni", "au"), ("va-uni", "va")])
def test_mtl_masked_matches_uni(data, uni, head):
    uni_preset = get_preset(uni).with_train(epochs=4)
    u = uni_preset.train
    mtl = get_preset("mtl").with_train(
        epochs=4, optimizer=u.optimizer, learning_rate=u.learning_rate, momentum=u.momentum,
        scheduler=u.scheduler, loss_weights=u.loss_weights, au_loss_kind=u.au_loss_kind,
        balance_expr=u.balance_expr, balance_au=u.balance_au,
    )
    a = run_preset(uni_preset, *data)
    b = run_preset(mtl, *data)
    for ea, eb in zip(a.epochs, b.epochs):
        assert abs(getattr(ea, f"train_loss_{head}") - getattr(eb, f"train_loss_{head}")) <= 1e-9
        assert abs(getattr(ea, f"val_loss_{head}") - getattr(eb, f"val_loss_{head}")) <= 1e-9
        assert ea.lr == eb.lr


def test_run_outputs(tmp_path, data):
    run = run_preset(get_preset("mtl").with_train(epochs=3), *data, subset_fraction=0.5, out_dir=tmp_path)
    d = tmp_path / "mtl"
    assert {p.name for p in d.iterdir()} == {"epochs.csv", "report.json", "model.ckpt", "curves.png"}
    assert read_epochs_csv(d / "epochs.csv") == run.epochs
    assert (d / "epochs.csv").read_text().splitlines()[0] == (
        "epoch,train_loss_expr,train_loss_au,train_loss_va,val_loss_expr,val_loss_au,val_loss_va,lr")
    report = json.loads((d / "report.json").read_text())
    assert report["n_train"] == 200 and report["n_val"] == 75
    assert set(report["metrics"]) == {"va", "expr", "au"}
    assert "wall_time" not in json.dumps(report)
    ckpt = load_checkpoint(d / "model.ckpt")
    assert ckpt["params"].to_bytes() == run.params.to_bytes() and ckpt["epoch"] == 3


def test_reports_come_from_metrics_module(data):
    from affectkit.harness.experiment import predict

    run = run_preset(get_preset("mtl").with_train(epochs=2), *data)
    _, val = data
    preds = predict(run.params, val.features)
    assert run.reports[TaskKind.EXPR] == metrics.report_expr(preds[TaskKind.EXPR], val.expr)
    assert run.reports[TaskKind.AU] == metrics.report_au(preds[TaskKind.AU], val.au)
    assert run.reports[TaskKind.VA] == metrics.report_va(preds[TaskKind.VA], val.va)
    assert np.abs(preds[TaskKind.VA]).max() <= 1.0


def test_pipeline_reproducible(data):
    a = run_preset(get_preset("au-uni").with_train(epochs=3), *data, subset_fraction=0.7)
    b = run_preset(get_preset("au-uni").with_train(epochs=3), *data, subset_fraction=0.7)
    assert a.reports == b.reports and a.params.to_bytes() == b.params.to_bytes()


def _fake(name, **scores):
    reports = {}
    for task, s in scores.items():
        t = TaskKind(task)
        reports[t] = metrics.MetricsReport(t, s, 1)
    return RunResult(name, reports, [], None, None, 0, 0)


class TestCompare:
    def test_marks_multi_higher_for_expression(self):
        rep = compare([_fake("expr-uni", expr=0.2035), _fake("mtl", expr=0.2208, au=0.0865, va=0.0274)])
        assert rep.best["expr"] == "mtl"
        assert rep.deltas["mtl"]["expr"] == pytest.approx(0.0173, abs=1e-12)
        line = next(ln for ln in rep.to_text().splitlines() if ln.startswith("mtl"))
        assert "0.2208*" in line

    def test_single_report(self):
        with pytest.raises(ValueError):
            compare([_fake("a", expr=0.1)])

    def test_identical_reports_zero_deltas(self):
        rep = compare([_fake("a", expr=0.3, va=0.2), _fake("b", expr=0.3, va=0.2)])
        assert all(d in (0.0, None) for row in rep.deltas.values() for d in row.values())

    def test_json_schema(self):
        rep = compare([_fake("a", va=0.5), _fake("b", au=0.1)])
        d = json.loads(rep.to_json())
        assert set(d) == {"presets", "scores", "best", "deltas", "references", "reports", "wall_time", "curves"}
        assert d["scores"]["a"] == {"va": 0.5, "expr": None, "au": None}


def test_run_comparison_layout(tmp_path):
    cfg = SyntheticConfig(n_train=120, n_val=60, seed=3)
    rep = run_comparison(["va-uni", "mtl"], cfg, tmp_path, figures=False, train_overrides={"epochs": 2})
    assert (tmp_path / "comparison.json").is_file() and (tmp_path / "comparison.txt").is_file()
    for p in ("va-uni", "mtl"):
        assert (tmp_path / p / "epochs.csv").is_file() and (tmp_path / p / "report.json").is_file()
    assert rep.curves == {"va-uni": "va-uni/epochs.csv", "mtl": "mtl/epochs.csv"}


def test_parallel_jobs_match_serial(tmp_path):
    cfg = SyntheticConfig(n_train=120, n_val=60, seed=3)
    kw = dict(figures=False, train_overrides={"epochs": 2})
    run_comparison(["va-uni", "expr-uni"], cfg, tmp_path / "s", jobs=1, **kw)
    run_comparison(["va-uni", "expr-uni"], cfg, tmp_path / "p", jobs=2, **kw)
    for p in ("va-uni", "expr-uni"):
        assert (tmp_path / "s" / p / "report.json").read_bytes() == (tmp_path / "p" / p / "report.json").read_bytes()


def test_manifest_backed_dataset():
    recs = [ann.FrameRecord("v", i + 1, ann.ExprLabel(i % 8), True) for i in range(16)]
    m = ann.make_manifest(TaskKind.EXPR, recs)
    ds = dataset_from_manifest(m, np.random.default_rng(0).normal(size=(16, 20)))
    assert ds.masks.expr.all() and not ds.masks.va.any() and not ds.masks.au.any()
    run = run_preset(get_preset("expr-uni").with_train(epochs=2, batch_size=4), ds, ds)
    assert set(run.reports) == {TaskKind.EXPR}
