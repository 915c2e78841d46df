from affectkit import annotations as ann
from affectkit.harness.experiment import EpochRecord, compare
from affectkit.plotting import plot_comparison, plot_distribution, plot_epoch_curves
from test_experiment import _fake

PNG = b"\x89PNG\r\n\x1a\n"


def test_epoch_curves(tmp_path):
    epochs = [EpochRecord(i, 1 / i, 0.5 / i, 0.2 / i, 1.1 / i, 0.6 / i, 0.3 / i, 1e-3) for i in range(1, 6)]
    path = plot_epoch_curves(epochs, tmp_path / "sub" / "c.png", title="mtl")
    assert path.read_bytes()[:8] == PNG


def test_comparison(tmp_path):
    rep = compare([_fake("va-uni", va=0.4), _fake("mtl", va=0.3, expr=0.2, au=0.5)])
    assert plot_comparison(rep, tmp_path / "c.png").read_bytes()[:8] == PNG


def test_distribution_each_task(golden, tmp_path):
    for task in ("va", "expr", "au"):
        stats = ann.dataset_stats(ann.build_manifest(golden / task, task))
        assert plot_distribution(stats, tmp_path / f"{task}.png").read_bytes()[:8] == PNG


def test_figures_are_reproducible(tmp_path):
    epochs = [EpochRecord(i, 1 / i, 0.5, 0.2, 1.1, 0.6, 0.3, 1e-3) for i in range(1, 4)]
    a = plot_epoch_curves(epochs, tmp_path / "a.png").read_bytes()
    b = plot_epoch_curves(epochs, tmp_path / "b.png").read_bytes()
    assert a == b
