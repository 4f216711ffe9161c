# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Adapter - The AdaRoute module: routed low-rank projection and multi-scale mixing.
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

import logging
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError
from .expert_center import (DynamicWeights, ExpertCenter, compose_channel_weights,
                            compose_spatial_kernels, truncated_normal)
from .router import (DEFAULT_HIDDEN, GatingVectors, RouterActivation, RouterParams,
                     init_router, route)
from .tensor import Tensor, affine, dwconv2d, gelu, matmul, softmax


class Layout(Enum):
    """How the dynamic depthwise convolutions are chained."""
    SEQUENTIAL_RES = "sequential_res"
    SEQUENTIAL_NORES = "sequential_nores"
    PARALLEL = "parallel"

    def __str__(self):
        return self.value


class Nonlinearity(Enum):
    GELU = "gelu"
    NONE = "none"

    def __str__(self):
        return self.value


class RoutingMode(Enum):
    """DYNAMIC asks the router; STATIC always picks one fixed expert."""
    DYNAMIC = "dynamic"
    STATIC = "static"

    def __str__(self):
        return self.value


def _parse(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        raise ConfigurationError("Unknown {} '{}', expected one of {}".format(
            enum_cls.__name__, value, [str(v) for v in enum_cls]))


def parse_layout(layout) -> Layout:
    return _parse(Layout, layout)


def parse_nonlinearity(nonlinearity) -> Nonlinearity:
    return _parse(Nonlinearity, nonlinearity)


def parse_routing(routing) -> RoutingMode:
    return _parse(RoutingMode, routing)


class AdaRouteModule:
    """One adapter site: a router bound to a (possibly shared) expert center.

    The module owns its router and the 1x1 SA projection; the center is
    only referenced, since several sites share it.

    Arguments:
        name: site name, unique within a model.
        center: the expert center this site draws its weights from.
        router: gate network; its expert count must equal the center's.
        sa_weight: (latent, n_kernels) SA projection, or None without SA.
        sa_bias: (n_kernels,) SA bias, or None without SA.
        static_expert: expert index used when routing is STATIC.
        top_k: sparsify gates to the K largest entries, None for dense.
    """

    def __init__(self, name: str, center: ExpertCenter, router: RouterParams,
                 sa_weight: Optional[Tensor] = None, sa_bias: Optional[Tensor] = None,
                 layout=Layout.SEQUENTIAL_RES, nonlinearity=Nonlinearity.GELU,
                 routing=RoutingMode.DYNAMIC, static_expert: int = 0,
                 top_k: Optional[int] = None, renormalize: bool = True):
        if router.capacity != center.capacity:
            raise DimensionError("Router routes {} experts but the center holds {}".format(
                router.capacity, center.capacity))
        if router.channels != center.channels:
            raise DimensionError("Router expects {} channels but the center has {}".format(
                router.channels, center.channels))
        n_kernels = len(center.kernel_sizes)
        if len(router.heads) != 2 + n_kernels:
            raise DimensionError("Router has {} heads, the center needs {}".format(len(router.heads), 2 + n_kernels))
        if (sa_weight is None) != (sa_bias is None):
            raise ConfigurationError("SA weight and bias must be given together")
        if sa_weight is not None:
            if n_kernels < 2:
                raise ConfigurationError("SA needs at least two kernel sizes, got {}".format(center.kernel_sizes))
            if sa_weight.shape != (center.latent, n_kernels) or sa_bias.shape != (n_kernels,):
                raise DimensionError("SA projection {} / {} does not fit latent {} and {} scales".format(
                    sa_weight.shape, sa_bias.shape, center.latent, n_kernels))
        if not 0 <= static_expert < center.capacity:
            raise ConfigurationError("Static expert {} outside 0..{}".format(static_expert, center.capacity - 1))
        if top_k is not None and top_k < 1:
            raise ConfigurationError("top-K must be positive, got {}".format(top_k))

        self.name = name
        self.center = center
        self.router = router
        self.sa_weight = sa_weight
        self.sa_bias = sa_bias
        self.layout = parse_layout(layout)
        self.nonlinearity = parse_nonlinearity(nonlinearity)
        self.routing = parse_routing(routing)
        self.static_expert = static_expert
        self.top_k = top_k
        self.renormalize = renormalize

    def __str__(self):
        return "AdaRouteModule {} ({} routing, {}, SA {})".format(
            self.name, self.routing, self.layout, "on" if self.use_sa else "off")

    @property
    def use_sa(self) -> bool:
        return self.sa_weight is not None

    @property
    def use_spatial(self) -> bool:
        return len(self.center.kernel_sizes) > 0

    def parameters(self) -> Dict[str, Tensor]:
        """Router and SA tensors; the center's pools are owned by the model."""
        params = {"router." + name: t for name, t in self.router.parameters().items()}
        if self.use_sa:
            params["sa.weight"] = self.sa_weight
            params["sa.bias"] = self.sa_bias
        return params


def init_adapter(name: str, center: ExpertCenter, hidden: int = DEFAULT_HIDDEN,
                 activation=RouterActivation.SOFTMAX, layout=Layout.SEQUENTIAL_RES,
                 use_sa: bool = True, nonlinearity=Nonlinearity.GELU,
                 routing=RoutingMode.DYNAMIC, static_expert: int = 0,
                 top_k: Optional[int] = None, renormalize: bool = True,
                 seed: int = 0) -> AdaRouteModule:
    """Builds an adapter site with a fresh router and SA projection.

    SA is only created when there are at least two kernel sizes.
    """
    n_kernels = len(center.kernel_sizes)
    router = init_router(center.channels, center.capacity, hidden, n_kernels, activation, seed)
    sa_weight = sa_bias = None
    if use_sa and n_kernels > 1:
        rng = np.random.default_rng([seed, 1])
        sa_weight = Tensor(truncated_normal(rng, (center.latent, n_kernels)), requires_grad=True)
        sa_bias = Tensor(np.zeros(n_kernels), requires_grad=True)
    module = AdaRouteModule(name, center, router, sa_weight, sa_bias, layout, nonlinearity,
                            routing, static_expert, top_k, renormalize)
    logging.debug("Created " + str(module))
    return module


def static_gates(module: AdaRouteModule) -> GatingVectors:
    """Constant one-hot gates selecting module.static_expert on every head."""
    one_hot = np.zeros(module.center.capacity)
    one_hot[module.static_expert] = 1.0
    gates = {name: Tensor(one_hot) for name in module.router.heads}
    return GatingVectors(**gates)


def adapter_gates(x: Tensor, module: AdaRouteModule) -> GatingVectors:
    """The gates this site uses for input x."""
    if module.routing is RoutingMode.STATIC:
        return static_gates(module)
    return route(x, module.router, module.top_k, module.renormalize)


def compose_dynamic_weights(center: ExpertCenter, gates: GatingVectors) -> DynamicWeights:
    W1, W2 = compose_channel_weights(center, gates.G1, gates.G2)
    kernels = compose_spatial_kernels(center, *gates.spatial) if center.kernel_sizes else []
    return DynamicWeights(W1, W2, kernels)


def _channels_last(t: Tensor) -> Tensor:
    if t.ndim == 4:
        return t.transpose(0, 2, 3, 1)
    return t.transpose(1, 2, 0)


def _channels_first(t: Tensor) -> Tensor:
    if t.ndim == 4:
        return t.transpose(0, 3, 1, 2)
    return t.transpose(2, 0, 1)


def sa_maps(u: Tensor, sa_weight: Tensor, sa_bias: Tensor) -> Tensor:
    """Per-pixel softmax over scales of a 1x1 projection of u.

    u is (latent, H, W) or (B, latent, H, W); the result has one map per
    scale in place of the latent axis.
    """
    logits = affine(_channels_last(u), sa_weight, sa_bias)
    return _channels_first(softmax(logits, axis=-1))


def multiscale_mix(z: Tensor, kernels: List[Tensor], layout=Layout.SEQUENTIAL_RES,
                   sa: Optional[Tuple[Tensor, Tensor]] = None) -> Tensor:
    """Chains or parallels the depthwise convolutions, then aggregates.

    With SA the scale outputs are weighted by per-pixel attention maps
    computed from their sum, otherwise they are averaged. A single kernel
    returns its one scale output.

    Arguments:
        z: (latent, H, W) or (B, latent, H, W).
        kernels: ascending sizes, each (latent, K, K) or (B, latent, K, K).
        sa: (weight, bias) of the SA projection, or None.
    """
    layout = parse_layout(layout)
    sizes = [k.shape[-1] for k in kernels]
    if not sizes:
        raise ConfigurationError("multiscale_mix needs at least one kernel")
    if any(a >= b for a, b in zip(sizes, sizes[1:])):
        raise ConfigurationError("Kernel sizes must ascend, got {}".format(sizes))

    outputs = []
    previous = z
    for kernel in kernels:
        if layout is Layout.PARALLEL:
            y = dwconv2d(z, kernel) + z
        elif layout is Layout.SEQUENTIAL_RES:
            y = dwconv2d(previous, kernel) + previous
        else:
            y = dwconv2d(previous, kernel)
        outputs.append(y)
        previous = y

    if len(outputs) == 1:
        return outputs[0]
    total = outputs[0]
    for y in outputs[1:]:
        total = total + y
    if sa is None:
        return total / float(len(outputs))

    maps = sa_maps(total, *sa)
    mixed = None
    for i, y in enumerate(outputs):
        weighted = maps[..., i:i + 1, :, :] * y
        mixed = weighted if mixed is None else mixed + weighted
    return mixed


def adaroute_forward(x: Tensor, module: AdaRouteModule,
                     gates: Optional[GatingVectors] = None) -> Tensor:
    """y = x + up(nonlinearity(mix(down(x)))) with routed weights.

    Arguments:
        x: (C, H, W) or (B, C, H, W).
        gates: use these instead of asking the router.
    """
    center = module.center
    if x.ndim not in (3, 4) or x.shape[-3] != center.channels:
        raise DimensionError("Adapter {} expects {} channels, got input {}".format(
            module.name, center.channels, x.shape))
    batched = x.ndim == 4
    xb = x if batched else x.reshape((1,) + x.shape)
    b, c, h, w = xb.shape
    if gates is None:
        gates = adapter_gates(xb, module)
    weights = compose_dynamic_weights(center, gates)

    tokens = xb.reshape(b, c, h * w).transpose(0, 2, 1)
    z = matmul(tokens, weights.W1).transpose(0, 2, 1).reshape(b, center.latent, h, w)
    if module.use_spatial:
        sa = (module.sa_weight, module.sa_bias) if module.use_sa else None
        z = multiscale_mix(z, weights.kernels, module.layout, sa)
    if module.nonlinearity is Nonlinearity.GELU:
        z = gelu(z)
    latent_tokens = z.reshape(b, center.latent, h * w).transpose(0, 2, 1)
    delta = matmul(latent_tokens, weights.W2).transpose(0, 2, 1).reshape(b, c, h, w)
    y = xb + delta
    return y if batched else y.reshape(x.shape)
