# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Expert Map - Mean gate distributions per adapter site of a stage.
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

from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd

from ..backbones import ForwardTaps, ModelGraph
from ..errors import ConfigurationError
from ..router import GateHead, parse_head
from ..tensor import Tensor


@dataclass
class ActivationMap:
    """Rows are adapter sites in layer order, columns are experts.

    Sites whose center holds fewer experts than the widest one are
    padded with NaN.
    """
    sites: List[str]
    head: GateHead
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        columns = ["expert_{}".format(m) for m in range(self.values.shape[1])]
        return pd.DataFrame(self.values, index=self.sites, columns=columns)


def expert_activation_map(graph: ModelGraph, images, head, stage: int) -> ActivationMap:
    """Mean over images of one head's gates at every adapter site of a stage."""
    head = parse_head(head)
    sites = graph.stage_sites(stage)
    if not sites:
        raise ConfigurationError("Stage {} has no adapters".format(stage))
    images = images if isinstance(images, Tensor) else Tensor(images)
    taps = ForwardTaps()
    graph.features(images, taps)
    rows = []
    for site in sites:
        gate = taps.gates[site].head(head).data
        rows.append(gate.mean(axis=0) if gate.ndim == 2 else gate)
    values = np.full((len(rows), max(len(r) for r in rows)), np.nan)
    for i, row in enumerate(rows):
        values[i, :len(row)] = row
    return ActivationMap(sites, head, values)
