"""Long end-to-end runs, skipped unless pytest is given --runslow."""
import numpy as np
import pytest

from adaroute.checkpoint import load_checkpoint, save_checkpoint
from adaroute.config import AdapterConfig, BackboneConfig
from adaroute.diagnostics import DEFAULT_PROBES, erf_of_model, probe_images
from adaroute.experiments import AblationGrid, run_ablation
from adaroute.model import build_model, train

pytestmark = pytest.mark.slow

FULL_GRID = {
    "tradeoff": ["4L", "2L", "L", "L/2"],
    "group_size": [1, None],
    "top_k": [1, 2],
    "kernel_set": ["3", "5", "7", "3,5", "3,5,7", "3,5,7+SA"],
    "layout": ["parallel", "sequential_res", "sequential_nores"],
    "router_activation": ["softmax", "relu", "sigmoid"],
    "router_hidden": [2, 8],
    "init": ["trunc_normal", "kaiming_normal", "kaiming_uniform"],
    "routing": ["dynamic", "static"],
    "variant": ["full", "no_spatial"],
}


def test_memorization(tiny):
    config = tiny(task__train_pool=4, train__batch_size=4, train__steps=500)
    report = train(build_model(config), config)
    assert report.final_loss < 0.1 * report.losses[0]


def test_long_run_keeps_backbone_frozen(tiny):
    config = tiny(train__steps=2000)
    report = train(build_model(config), config)
    assert report.frozen_unchanged
    assert np.isfinite(report.losses).all()


def test_checkpoint_resume_after_one_hundred_steps(tiny, tmp_path):
    config = tiny(train__steps=200, train__total_steps=200)
    straight_graph = build_model(config)
    straight = train(straight_graph, config)
    graph = build_model(config)
    first = train(graph, config, steps=100)
    save_checkpoint(graph, str(tmp_path), config, first.state)
    ckpt = load_checkpoint(str(tmp_path))
    second = train(ckpt.graph, ckpt.config, steps=100, state=ckpt.state)
    np.testing.assert_array_equal(second.losses, straight.losses[100:])
    for name, t in straight_graph.tensors.items():
        np.testing.assert_array_equal(ckpt.graph.tensors[name].data, t.data)


def test_fine_tuned_erf_support_strictly_contains_backbone_support(tiny):
    common = dict(backbone=BackboneConfig(style="convnext_like", depths=[1], dims=[16], patch=[1]),
                  task__image_size=16, task__eval_size=4, train__steps=300, train__batch_size=4,
                  train__eval_every=300)
    probes = probe_images(DEFAULT_PROBES, 3, 16, seed=0)
    plain = erf_of_model(build_model(tiny(adapter__enabled=False, **common)), probes)
    config = tiny(adapter=AdapterConfig(latent=8, router_hidden=4), **common)
    graph = build_model(config)
    train(graph, config)
    adapted = erf_of_model(graph, probes)
    assert plain.support_size() == 9
    assert adapted.support()[plain.support()].all()
    assert adapted.support_size() > plain.support_size()


def test_adapters_beat_the_head_only_baseline_by_ten_points(tiny):
    adapted, baseline = [], []
    for seed in (0, 1, 2):
        common = dict(seed=seed, task__image_size=16, task__eval_size=16,
                      train__steps=1200, train__batch_size=8, train__lr=1.5e-3, train__eval_every=1200)
        config = tiny(**common)
        adapted.append(train(build_model(config), config).final_metric)
        config = tiny(adapter__enabled=False, **common)
        baseline.append(train(build_model(config), config).final_metric)
    assert 100 * (np.mean(adapted) - np.mean(baseline)) >= 10


def test_full_ablation_grid_is_reproducible(tiny, tmp_path):
    two_block_stage = BackboneConfig(style="swin_like", depths=[2, 1], dims=[8, 16], patch=[2, 2], head_dim=4)
    data = {"base": tiny(backbone=two_block_stage).to_dict(), "axes": FULL_GRID, "steps": 2}
    first = str(tmp_path / "first.csv")
    second = str(tmp_path / "second.csv")
    frame = run_ablation(AblationGrid.from_dict(data), first)
    run_ablation(AblationGrid.from_dict(data), second)
    assert len(frame) == 1 + sum(len(values) for values in FULL_GRID.values())
    with open(first, "rb") as a, open(second, "rb") as b:
        assert a.read() == b.read()
