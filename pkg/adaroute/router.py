# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Router - Lightweight gating network producing expert-mixing distributions.
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
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError
from .expert_center import truncated_normal
from .tensor import Tensor, accumulate_grad, affine, gap2d, relu, sigmoid, softmax

DEFAULT_HIDDEN = 24
CHANNEL_HEADS = ("G1", "G2")
SPATIAL_HEADS = ("GA", "GB", "GC")


class RouterActivation(Enum):
    SOFTMAX = "softmax"
    RELU = "relu"
    SIGMOID = "sigmoid"

    def __str__(self):
        return self.value


class GateHead(Enum):
    G1 = "G1"
    G2 = "G2"
    GA = "GA"
    GB = "GB"
    GC = "GC"

    def __str__(self):
        return self.value


def parse_activation(activation) -> RouterActivation:
    if isinstance(activation, RouterActivation):
        return activation
    try:
        return RouterActivation(activation)
    except ValueError:
        raise ConfigurationError("Unknown router activation '{}'".format(activation))


def parse_head(head) -> GateHead:
    if isinstance(head, GateHead):
        return head
    try:
        return GateHead(str(head).replace("_", ""))
    except ValueError:
        raise ConfigurationError("Unknown gate head '{}', expected one of G1, G2, GA, GB, GC".format(head))


@dataclass
class GatingVectors:
    """The gates of one router invocation, each (M,) or (B, M).

    GA, GB and GC are None when the adapter has fewer kernel sizes.
    """
    G1: Tensor
    G2: Tensor
    GA: Optional[Tensor] = None
    GB: Optional[Tensor] = None
    GC: Optional[Tensor] = None

    @property
    def spatial(self) -> List[Tensor]:
        return [g for g in (self.GA, self.GB, self.GC) if g is not None]

    def head(self, head) -> Tensor:
        gate = getattr(self, str(parse_head(head)))
        if gate is None:
            raise ConfigurationError("Head {} is not produced by this router".format(head))
        return gate

    def as_dict(self) -> Dict[str, Tensor]:
        return {name: getattr(self, name) for name in CHANNEL_HEADS + SPATIAL_HEADS
                if getattr(self, name) is not None}


class RouterParams:
    """Weights of one router: a shared hidden layer feeding parallel heads.

    Arguments:
        hidden_weight: (C, h)
        hidden_bias: (h,)
        heads: head name -> (weight (h, M), bias (M,)), channel heads first.
        activation: how head logits become gates.
    """

    def __init__(self, hidden_weight: Tensor, hidden_bias: Tensor,
                 heads: Dict[str, Tuple[Tensor, Tensor]],
                 activation=RouterActivation.SOFTMAX):
        capacities = {w.shape[1] for w, _ in heads.values()}
        if len(capacities) != 1:
            raise DimensionError("Router heads disagree on expert count: {}".format(sorted(capacities)))
        for name in heads:
            if name not in CHANNEL_HEADS + SPATIAL_HEADS:
                raise ConfigurationError("Unknown router head '{}'".format(name))
        self.hidden_weight = hidden_weight
        self.hidden_bias = hidden_bias
        self.heads = dict(heads)
        self.activation = parse_activation(activation)

    @property
    def channels(self) -> int:
        return self.hidden_weight.shape[0]

    @property
    def hidden(self) -> int:
        return self.hidden_weight.shape[1]

    @property
    def capacity(self) -> int:
        return next(iter(self.heads.values()))[0].shape[1]

    def parameters(self) -> Dict[str, Tensor]:
        params = {"hidden.weight": self.hidden_weight, "hidden.bias": self.hidden_bias}
        for name, (weight, bias) in self.heads.items():
            params[name + ".weight"] = weight
            params[name + ".bias"] = bias
        return params


def init_router(channels: int, capacity: int, hidden: int = DEFAULT_HIDDEN, n_spatial: int = 3,
                activation=RouterActivation.SOFTMAX, seed: int = 0) -> RouterParams:
    """Truncated-normal weights and zero biases for a router with 2 + n_spatial heads."""
    if hidden < 1:
        raise ConfigurationError("Router hidden width must be positive, got {}".format(hidden))
    rng = np.random.default_rng(seed)
    hidden_weight = Tensor(truncated_normal(rng, (channels, hidden)), requires_grad=True)
    hidden_bias = Tensor(np.zeros(hidden), requires_grad=True)
    heads = {}
    for name in CHANNEL_HEADS + SPATIAL_HEADS[:n_spatial]:
        heads[name] = (Tensor(truncated_normal(rng, (hidden, capacity)), requires_grad=True),
                       Tensor(np.zeros(capacity), requires_grad=True))
    return RouterParams(hidden_weight, hidden_bias, heads, activation)


def _activate(logits: Tensor, activation: RouterActivation) -> Tensor:
    if activation is RouterActivation.SOFTMAX:
        return softmax(logits, axis=-1)
    if activation is RouterActivation.RELU:
        return relu(logits)
    return sigmoid(logits)


def route(x: Tensor, params: RouterParams, top_k: Optional[int] = None,
          renormalize: bool = True) -> GatingVectors:
    """Gates for every head of params from the pooled input feature.

    Arguments:
        x: (C, H, W) or (B, C, H, W).
        top_k: keep only the K largest entries of every gate. K >= M
               leaves the gates untouched.
    """
    if x.ndim not in (3, 4) or x.shape[-3] != params.channels:
        raise DimensionError("Router expects {} channels, got input {}".format(params.channels, x.shape))
    pooled = gap2d(x)
    hidden = affine(pooled, params.hidden_weight, params.hidden_bias)
    gates = {}
    for name, (weight, bias) in params.heads.items():
        g = _activate(affine(hidden, weight, bias), params.activation)
        if top_k is not None and top_k < params.capacity:
            g = top_k_sparsify(g, top_k, renormalize)
        gates[name] = g
    return GatingVectors(**gates)


def top_k_sparsify(g: Tensor, k: int, renormalize: bool = True) -> Tensor:
    """Zeroes all but the k largest entries along the last axis.

    Ties go to the lower index. Survivors are rescaled to sum 1 unless
    renormalize is off or they sum to zero. Gradients pass straight
    through to survivors and are zero for dropped entries. k == M returns
    g itself.
    """
    capacity = g.shape[-1]
    if not 1 <= k <= capacity:
        raise ConfigurationError("top-K needs 1 <= K <= {}, got {}".format(capacity, k))
    if k == capacity:
        return g
    order = np.argsort(-g.data, axis=-1, kind="stable")
    mask = np.zeros_like(g.data)
    np.put_along_axis(mask, order[..., :k], 1.0, axis=-1)
    kept = g.data * mask
    if renormalize:
        total = kept.sum(axis=-1, keepdims=True)
        kept = kept / np.where(total > 0, total, 1.0)

    def _backward(grad):
        accumulate_grad(g, grad * mask)
    return Tensor.from_op(kept, (g,), "top_k", _backward)
