# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Swin-like Block - Full self-attention token mixer and MLP channel mixer.
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

import math

import numpy as np

from ..errors import ConfigurationError
from ..tensor import Tensor, affine, gelu, layer_norm, matmul, softmax
from ._graph import Adapt, Block, from_tokens, lecun_normal, to_tokens


class SwinLikeBlock(Block):
    """Pre-norm multi-head self-attention over the whole grid, then a pre-norm MLP.

    Both residual units are adapter sites: 'attn' after the token mixer
    and 'mlp' after the channel mixer.

    Arguments:
        name: block name, e.g. 's0.b1'.
        channels: token width C.
        head_dim: channels per attention head.
        mlp_ratio: hidden width of the MLP as a multiple of C.
    """
    units = ("attn", "mlp")

    def __init__(self, name: str, stage: int, channels: int, head_dim: int, mlp_ratio: int,
                 rng: np.random.Generator):
        super().__init__(name, stage, channels)
        if channels % head_dim:
            raise ConfigurationError("Width {} is not a multiple of head_dim {}".format(channels, head_dim))
        self.n_heads = channels // head_dim
        self.head_dim = head_dim
        hidden = mlp_ratio * channels
        c = channels
        self._param("norm1.gamma", np.ones(c))
        self._param("norm1.beta", np.zeros(c))
        self._param("attn.qkv.weight", lecun_normal(rng, (c, 3 * c), c))
        self._param("attn.qkv.bias", np.zeros(3 * c))
        self._param("attn.proj.weight", lecun_normal(rng, (c, c), c))
        self._param("attn.proj.bias", np.zeros(c))
        self._param("norm2.gamma", np.ones(c))
        self._param("norm2.beta", np.zeros(c))
        self._param("mlp.fc1.weight", lecun_normal(rng, (c, hidden), c))
        self._param("mlp.fc1.bias", np.zeros(hidden))
        self._param("mlp.fc2.weight", lecun_normal(rng, (hidden, c), hidden))
        self._param("mlp.fc2.bias", np.zeros(c))

    def _split_heads(self, t: Tensor) -> Tensor:
        b, n, _ = t.shape
        return t.reshape(b, n, self.n_heads, self.head_dim).transpose(0, 2, 1, 3)

    def attention(self, t: Tensor) -> Tensor:
        p = self.params
        b, n, c = t.shape
        qkv = affine(t, p["attn.qkv.weight"], p["attn.qkv.bias"])
        q = self._split_heads(qkv[..., 0:c])
        k = self._split_heads(qkv[..., c:2 * c])
        v = self._split_heads(qkv[..., 2 * c:3 * c])
        scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.head_dim))
        out = matmul(softmax(scores, axis=-1), v).transpose(0, 2, 1, 3).reshape(b, n, c)
        return affine(out, p["attn.proj.weight"], p["attn.proj.bias"])

    def mlp(self, t: Tensor) -> Tensor:
        p = self.params
        hidden = gelu(affine(t, p["mlp.fc1.weight"], p["mlp.fc1.bias"]))
        return affine(hidden, p["mlp.fc2.weight"], p["mlp.fc2.bias"])

    def forward(self, x: Tensor, adapt: Adapt) -> Tensor:
        p = self.params
        h, w = x.shape[-2:]
        t = to_tokens(x)
        t = t + self.attention(layer_norm(t, p["norm1.gamma"], p["norm1.beta"]))
        x = adapt("attn", from_tokens(t, h, w))
        t = to_tokens(x)
        t = t + self.mlp(layer_norm(t, p["norm2.gamma"], p["norm2.beta"]))
        return adapt("mlp", from_tokens(t, h, w))
