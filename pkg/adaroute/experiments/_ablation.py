# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Ablation - One-factor-at-a-time study grid over adapter design axes.
#
# Copyright (C) 2026  The adaroute developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import copy
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from ..artifacts import write_frame
from ..config import RunConfig
from ..errors import AdaRouteError, ConfigurationError
from ..model import build_model, train

# Capacity multiplier and latent width relative to a latent of 128 for
# the capacity/latent trade-off rows.
TRADEOFFS = {
    "4L": (4.0, 40),
    "2L": (2.0, 72),
    "L": (1.0, 128),
    "L/2": (0.5, 192),
}
REFERENCE_LATENT = 128
VARIANTS = ("full", "no_spatial")


def _kernel_set(config: RunConfig, value) -> None:
    text = str(value).replace(" ", "")
    use_sa = text.upper().endswith("+SA")
    sizes = text[:-3] if use_sa else text
    try:
        config.adapter.kernel_sizes = [int(k) for k in sizes.split(",")]
    except ValueError:
        raise ConfigurationError("Kernel set '{}' is not a comma-separated list of sizes".format(value))
    config.adapter.use_sa = use_sa
    config.adapter.use_spatial = True


def _tradeoff(config: RunConfig, value) -> None:
    if not isinstance(value, str) or value not in TRADEOFFS:
        raise ConfigurationError("Unknown trade-off '{}', expected one of {}".format(value, list(TRADEOFFS)))
    multiplier, latent = TRADEOFFS[value]
    base = config.adapter.latent
    config.adapter.capacity_multiplier = multiplier
    config.adapter.latent = max(1, int(round(base * latent / REFERENCE_LATENT)))
    if config.adapter.latent_per_stage is not None:
        config.adapter.latent_per_stage = [max(1, int(round(c * latent / REFERENCE_LATENT)))
                                           for c in config.adapter.latent_per_stage]


def _variant(config: RunConfig, value) -> None:
    if not isinstance(value, str) or value not in VARIANTS:
        raise ConfigurationError("Unknown variant '{}', expected one of {}".format(value, list(VARIANTS)))
    config.adapter.use_spatial = value == "full"


def _setter(name: str) -> Callable[[RunConfig, Any], None]:
    def apply(config: RunConfig, value) -> None:
        setattr(config.adapter, name, value)
    return apply


AXES: Dict[str, Callable[[RunConfig, Any], None]] = {
    "tradeoff": _tradeoff,
    "group_size": _setter("group_size"),
    "top_k": _setter("top_k"),
    "kernel_set": _kernel_set,
    "layout": _setter("layout"),
    "router_activation": _setter("router_activation"),
    "router_hidden": _setter("router_hidden"),
    "init": _setter("init"),
    "routing": _setter("routing"),
    "variant": _variant,
}


@dataclass
class AblationCell:
    name: str
    axis: Optional[str]
    value: Any
    config: RunConfig


@dataclass
class AblationGrid:
    """A base run and the axis values varied one at a time around it.

    Arguments:
        base: the reference configuration.
        axes: axis name -> values, each value giving one cell.
        include_base: whether the unmodified base is a cell of its own.
    """
    base: RunConfig
    axes: Dict[str, List[Any]] = field(default_factory=dict)
    include_base: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "AblationGrid":
        data = dict(data)
        unknown = sorted(set(data) - {"base", "axes", "steps", "include_base"})
        if unknown:
            raise ConfigurationError("Unknown keys in ablation grid: " + ", ".join(unknown))
        base = RunConfig.from_dict(data.get("base", {}))
        if "steps" in data:
            base.train.steps = data["steps"]
        axes = data.get("axes", {})
        if not isinstance(axes, dict):
            raise ConfigurationError("Ablation 'axes' must map axis names to value lists")
        for axis, values in axes.items():
            if axis not in AXES:
                raise ConfigurationError("Unknown ablation axis '{}', expected one of {}".format(axis, sorted(AXES)))
            if not isinstance(values, list) or not values:
                raise ConfigurationError("Ablation axis '{}' needs a non-empty list of values".format(axis))
        return cls(base, {axis: list(values) for axis, values in axes.items()},
                   bool(data.get("include_base", True)))

    def cells(self) -> List[AblationCell]:
        """Every cell with a validated config; any invalid value fails here."""
        self.base.validate()
        cells = []
        if self.include_base or not self.axes:
            cells.append(AblationCell("base", None, None, copy.deepcopy(self.base)))
        for axis, values in self.axes.items():
            for value in values:
                config = copy.deepcopy(self.base)
                AXES[axis](config, value)
                name = "{}={}".format(axis, json.dumps(value))
                try:
                    config.validate()
                except ConfigurationError as e:
                    raise ConfigurationError("Ablation cell {}: {}".format(name, e))
                cells.append(AblationCell(name, axis, value, config))
        return cells


def load_grid(path: str) -> AblationGrid:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationError("Cannot read ablation grid {}: {}".format(path, e.strerror or e))
    except json.JSONDecodeError as e:
        raise ConfigurationError("Ablation grid {} is not valid JSON: {}".format(path, e))
    if not isinstance(data, dict):
        raise ConfigurationError("Ablation grid {} must hold a JSON object".format(path))
    return AblationGrid.from_dict(data)


def run_cell(cell: AblationCell) -> Dict[str, Any]:
    graph = build_model(cell.config)
    report = train(graph, cell.config)
    return {
        "cell": cell.name,
        "axis": cell.axis if cell.axis is not None else "",
        "value": json.dumps(cell.value) if cell.axis is not None else "",
        "seed": cell.config.seed,
        "steps": cell.config.train.steps,
        "trainable_params": graph.count_trainable(),
        "final_loss": report.final_loss,
        "final_metric": report.final_metric,
        "frozen_unchanged": report.frozen_unchanged,
    }


def run_ablation(grid: AblationGrid, output: str, workers: int = 1) -> pd.DataFrame:
    """Runs every cell and writes one consolidated CSV row per cell.

    All cells are validated before the first run. Rows keep cell order
    whatever the number of workers, and the CSV only appears once
    complete.
    """
    cells = grid.cells()
    logging.info("Running ablation grid with " + str(len(cells)) + " cells")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = []
        for cell in cells:
            logging.info("Ablation cell " + cell.name)
            try:
                rows.append(run_cell(cell))
            except AdaRouteError:
                logging.error("Ablation cell " + cell.name + " failed")
                raise
    frame = pd.DataFrame(rows)
    write_frame(frame, output)
    return frame
