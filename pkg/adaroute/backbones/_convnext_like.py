# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# ConvNeXt-like Block - Depthwise 3x3 convolution and pointwise MLP in one residual unit.
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

import numpy as np

from ..tensor import Tensor, affine, dwconv2d, gelu, layer_norm
from ._graph import Adapt, Block, from_tokens, lecun_normal, to_tokens

KERNEL_SIZE = 3


class ConvNeXtLikeBlock(Block):
    """x + MLP(LN(dwconv3x3(x))), adapted once after the whole block."""
    units = ("block",)

    def __init__(self, name: str, stage: int, channels: int, mlp_ratio: int,
                 rng: np.random.Generator):
        super().__init__(name, stage, channels)
        c = channels
        hidden = mlp_ratio * c
        k = KERNEL_SIZE
        self._param("dwconv.weight", lecun_normal(rng, (c, k, k), k * k))
        self._param("dwconv.bias", np.zeros(c))
        self._param("norm.gamma", np.ones(c))
        self._param("norm.beta", np.zeros(c))
        self._param("pwconv1.weight", lecun_normal(rng, (c, hidden), c))
        self._param("pwconv1.bias", np.zeros(hidden))
        self._param("pwconv2.weight", lecun_normal(rng, (hidden, c), hidden))
        self._param("pwconv2.bias", np.zeros(c))

    def forward(self, x: Tensor, adapt: Adapt) -> Tensor:
        p = self.params
        c, h, w = x.shape[-3:]
        y = dwconv2d(x, p["dwconv.weight"]) + p["dwconv.bias"].reshape(c, 1, 1)
        t = layer_norm(to_tokens(y), p["norm.gamma"], p["norm.beta"])
        t = affine(gelu(affine(t, p["pwconv1.weight"], p["pwconv1.bias"])),
                   p["pwconv2.weight"], p["pwconv2.bias"])
        return adapt("block", x + from_tokens(t, h, w))
