import json
import os

import pandas as pd
import pytest

from adaroute.errors import ConfigurationError
from adaroute.experiments import AblationGrid, load_grid, run_ablation


def grid_dict(tiny, axes, steps=1, **overrides):
    return {"base": tiny(**overrides).to_dict(), "axes": axes, "steps": steps}


def test_unknown_axis_is_rejected(tiny):
    with pytest.raises(ConfigurationError):
        AblationGrid.from_dict(grid_dict(tiny, {"dropout": [0.1]}))
    with pytest.raises(ConfigurationError):
        AblationGrid.from_dict(grid_dict(tiny, {"layout": []}))
    with pytest.raises(ConfigurationError):
        AblationGrid.from_dict(dict(grid_dict(tiny, {}), seeds=[1, 2]))


def test_invalid_value_fails_before_any_run(tiny, tmp_path):
    grid = AblationGrid.from_dict(grid_dict(tiny, {"router_hidden": [2], "layout": ["parallel", "cascade"]}))
    output = str(tmp_path / "ablation.csv")
    with pytest.raises(ConfigurationError) as info:
        run_ablation(grid, output)
    assert 'layout="cascade"' in str(info.value)
    assert not os.path.exists(output)


def test_steps_override_the_base(tiny):
    grid = AblationGrid.from_dict(grid_dict(tiny, {"layout": ["parallel"]}, steps=7))
    assert all(cell.config.train.steps == 7 for cell in grid.cells())


def test_tradeoff_scales_latent(tiny):
    grid = AblationGrid.from_dict(grid_dict(tiny, {"tradeoff": ["4L", "2L", "L", "L/2"]}))
    cells = {cell.value: cell.config.adapter for cell in grid.cells() if cell.axis}
    assert [(cells[v].capacity_multiplier, cells[v].latent) for v in ("4L", "2L", "L", "L/2")] == [
        (4.0, 1), (2.0, 2), (1.0, 4), (0.5, 6)]


def test_kernel_set_axis(tiny, tmp_path):
    kernel_sets = ["3", "5", "7", "3,5", "3,5,7", "3,5,7+SA"]
    grid = AblationGrid.from_dict(grid_dict(tiny, {"kernel_set": kernel_sets}, adapter__use_sa=False))
    configs = [cell.config.adapter for cell in grid.cells()]
    assert [a.kernel_sizes for a in configs[1:]] == [[3], [5], [7], [3, 5], [3, 5, 7], [3, 5, 7]]
    assert [a.use_sa for a in configs[1:]] == [False] * 5 + [True]

    output = str(tmp_path / "ablation.csv")
    frame = run_ablation(grid, output)
    assert len(frame) == 7
    written = pd.read_csv(output, keep_default_na=False)
    assert list(written["cell"]) == ["base"] + ["kernel_set=" + json.dumps(k) for k in kernel_sets]
    assert written["frozen_unchanged"].all()
    params = dict(zip(written["cell"], written["trainable_params"]))
    assert params['kernel_set="3,5,7+SA"'] > params['kernel_set="3,5,7"']
    assert params['kernel_set="3"'] < params['kernel_set="7"']


def test_top_k_at_capacity_reproduces_the_base(tiny, tmp_path):
    grid = AblationGrid.from_dict(grid_dict(tiny, {"top_k": [1, 2]}, steps=2,
                                            adapter__capacity_multiplier=2.0))
    frame = run_ablation(grid, str(tmp_path / "top_k.csv"))
    rows = frame.set_index("cell")
    assert rows.loc["top_k=2", "final_loss"] == rows.loc["base", "final_loss"]
    assert rows.loc["top_k=2", "final_metric"] == rows.loc["base", "final_metric"]
    assert rows.loc["top_k=1", "trainable_params"] == rows.loc["base", "trainable_params"]


def test_variant_without_spatial_mixing(tiny):
    grid = AblationGrid.from_dict(grid_dict(tiny, {"variant": ["full", "no_spatial"]}))
    adapters = [cell.config.adapter for cell in grid.cells()]
    assert adapters[1].active_kernel_sizes == [3, 5, 7]
    assert adapters[2].active_kernel_sizes == []
    with pytest.raises(ConfigurationError):
        AblationGrid.from_dict(grid_dict(tiny, {"variant": ["linear"]})).cells()


def test_load_grid(tiny, tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(grid_dict(tiny, {"init": ["kaiming_normal"]})))
    grid = load_grid(str(path))
    assert [cell.name for cell in grid.cells()] == ["base", 'init="kaiming_normal"']
    with pytest.raises(ConfigurationError):
        load_grid(str(tmp_path / "missing.json"))


@pytest.mark.parametrize("axis, value", [
    ("top_k", "2"), ("router_hidden", 2.5), ("group_size", [1]), ("tradeoff", ["L"]), ("variant", 0)])
def test_mistyped_axis_values_are_config_errors(tiny, axis, value):
    grid = AblationGrid.from_dict(grid_dict(tiny, {axis: [value]}))
    with pytest.raises(ConfigurationError):
        grid.cells()
