# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# ERF - Effective receptive field from input gradients of a central unit.
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
from typing import Callable, Optional

import numpy as np
import pandas as pd

from ..backbones import ForwardTaps, ModelGraph
from ..errors import ConfigurationError, DimensionError
from ..tensor import Tensor, backward

DEFAULT_PROBES = 16
SUPPORT_THRESHOLD = 0.01


@dataclass
class ERFMap:
    """Accumulated |d centre / d input| per pixel, scaled to a maximum of 1."""
    values: np.ndarray

    def support(self, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
        return self.values > threshold

    def support_size(self, threshold: float = SUPPORT_THRESHOLD) -> int:
        return int(np.count_nonzero(self.support(threshold)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values)


def erf_map(forward_fn: Callable[[Tensor], Tensor], probes: np.ndarray) -> ERFMap:
    """ERF of the output of forward_fn over a set of probe images.

    The adjoint is seeded with 1 at the centre position of every output
    channel, propagated back to the input and accumulated as absolute
    values over probes and input channels.

    Arguments:
        forward_fn: maps a (1, C, H, W) image to a (1, C', H', W') map.
        probes: (N, C, H, W) images.
    """
    probes = np.asarray(probes, dtype=np.float64)
    if probes.ndim != 4 or probes.shape[0] < 1:
        raise DimensionError("Probes must be a non-empty (N, C, H, W) batch, got {}".format(probes.shape))
    total = np.zeros(probes.shape[-2:])
    for i in range(probes.shape[0]):
        x = Tensor(probes[i:i + 1], requires_grad=True)
        out = forward_fn(x)
        if out.ndim != 4:
            raise DimensionError("ERF needs a spatially resolved output, got shape {}".format(out.shape))
        h, w = out.shape[-2:]
        backward(out[0, :, h // 2, w // 2].sum())
        total += np.abs(x.grad[0]).sum(axis=0)
    peak = total.max()
    if peak > 0:
        total = total / peak
    return ERFMap(total)


def probe_images(n: int, channels: int, size: int, seed: int) -> np.ndarray:
    """Seeded standard-normal probe images."""
    return np.random.default_rng([seed, n]).standard_normal((n, channels, size, size))


def erf_of_model(graph: ModelGraph, probes: np.ndarray, layer: Optional[str] = None) -> ERFMap:
    """ERF of one block's output; the last block when layer is None."""
    names = [b.name for b in graph.blocks]
    layer = names[-1] if layer is None else layer
    if layer not in names:
        raise ConfigurationError("Unknown layer '{}', expected one of {}".format(layer, names))

    def forward_fn(x: Tensor) -> Tensor:
        taps = ForwardTaps()
        graph.features(x, taps)
        return taps.features[layer]

    try:
        return erf_map(forward_fn, probes)
    finally:
        graph.zero_grad()
