import numpy as np
import pandas as pd
import pytest

from adaroute.errors import DimensionError, NumericalError
from adaroute.model import FineTuneModel, accuracy, build_model, miou, train


def test_zero_steps_records_initial_state(tiny):
    config = tiny()
    report = train(build_model(config), config, steps=0)
    assert list(report.frame.columns) == ["step", "loss", "metric", "lr"]
    assert len(report.frame) == 1
    assert report.frame["step"].iloc[0] == 0
    assert report.frame["lr"].iloc[0] == config.train.lr
    assert report.state.step == 0


def test_one_row_per_update(tiny):
    config = tiny()
    report = train(build_model(config), config)
    assert list(report.frame["step"]) == [0, 1, 2, 3]
    assert report.state.step == 3
    assert report.frozen_unchanged
    assert np.isfinite(report.losses).all()
    assert 0.0 <= report.final_metric <= 1.0
    lrs = report.frame["lr"].to_numpy()
    assert (np.diff(lrs) < 0).all()


def test_zero_learning_rate_keeps_loss_constant(tiny):
    config = tiny(train__lr=0.0, task__train_pool=2)
    report = train(build_model(config), config, steps=4)
    np.testing.assert_array_equal(report.losses, np.full(5, report.losses[0]))


def test_loss_falls_on_a_fixed_batch(tiny):
    config = tiny(task__train_pool=2, train__steps=15)
    report = train(build_model(config), config)
    assert report.final_loss < report.losses[0]


def test_static_routing_trains(tiny):
    config = tiny(adapter__routing="static", adapter__static_expert=1)
    report = train(build_model(config), config, steps=2)
    assert np.isfinite(report.losses).all()
    assert report.frozen_unchanged


def test_head_only_baseline(tiny):
    config = tiny(adapter__enabled=False)
    graph = build_model(config)
    assert not graph.has_adapters
    assert graph.count_trainable() == 0
    report = train(graph, config, steps=2)
    assert report.frozen_unchanged


def test_classification_task(tiny):
    config = tiny(task__kind="stripe_cls")
    graph = build_model(config)
    assert graph.forward(FineTuneModel(graph, config).eval_data.inputs).shape == (4, 3)
    report = train(graph, config, steps=2)
    assert 0.0 <= report.final_metric <= 1.0


def test_non_finite_loss_is_reported(tiny):
    config = tiny()
    graph = build_model(config)
    graph.head["s0.weight"].data[...] = np.inf
    with pytest.raises(NumericalError):
        train(graph, config, steps=1)


def test_report_csv(tiny, tmp_path):
    config = tiny()
    report = train(build_model(config), config, steps=1)
    path = str(tmp_path / "report.csv")
    report.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["step", "loss", "metric", "lr"]
    np.testing.assert_array_equal(frame["loss"].to_numpy(), report.losses)


def test_miou_by_hand():
    target = np.array([1, 1, 1, 1, 1, 0, 0, 0, 0, 0])
    pred = np.array([1, 1, 1, 0, 0, 1, 0, 0, 0, 0])
    assert miou(pred, target, 2) == pytest.approx((0.5 + 4.0 / 7.0) / 2, rel=1e-12)


def test_miou_skips_absent_classes():
    target = np.array([[0, 2], [2, 2]])
    assert miou(target, target, 5) == 1.0
    assert miou(np.zeros(0, dtype=int), np.zeros(0, dtype=int), 3) == 1.0
    with pytest.raises(DimensionError):
        miou(np.zeros(3, dtype=int), np.zeros(4, dtype=int), 2)
    with pytest.raises(DimensionError):
        miou(np.array([3]), np.array([0]), 2)


def test_accuracy():
    assert accuracy(np.array([0, 1, 2, 2]), np.array([0, 1, 1, 2])) == 0.75
