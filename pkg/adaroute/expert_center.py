# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Expert Center - Shared pools of trainable parameter matrices.
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
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import Tensor, matmul

TRUNC_NORMAL_STD = 0.02
SPATIAL_POOLS = ("S_A", "S_B", "S_C")


class InitMethod(Enum):
    TRUNC_NORMAL = "trunc_normal"
    KAIMING_NORMAL = "kaiming_normal"
    KAIMING_UNIFORM = "kaiming_uniform"

    def __str__(self):
        return self.value


def truncated_normal(rng: np.random.Generator, shape, std: float = TRUNC_NORMAL_STD,
                     bound: float = 2.0) -> np.ndarray:
    """N(0, std^2) restricted to [-bound*std, bound*std] by redrawing outliers."""
    out = rng.normal(0.0, std, size=shape)
    outside = np.abs(out) > bound * std
    while outside.any():
        out[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(out) > bound * std
    return out


def init_array(rng: np.random.Generator, init: InitMethod, shape, fan_in: int) -> np.ndarray:
    """Draws one parameter array. Kaiming variants use gain sqrt(2)."""
    if init is InitMethod.TRUNC_NORMAL:
        return truncated_normal(rng, shape)
    if init is InitMethod.KAIMING_NORMAL:
        return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def parse_init(init) -> InitMethod:
    if isinstance(init, InitMethod):
        return init
    try:
        return InitMethod(init)
    except ValueError:
        raise ConfigurationError("Unknown init method '{}', expected one of {}".format(
            init, [str(m) for m in InitMethod]))


def check_center_extents(capacity: int, channels: int, latent: int,
                         kernel_sizes: Sequence[int]) -> None:
    if capacity < 1:
        raise ConfigurationError("Expert center capacity must be at least 1, got {}".format(capacity))
    if not 1 <= latent < channels:
        raise ConfigurationError(
            "Latent width must satisfy 1 <= latent < channels, got latent={} channels={}".format(latent, channels))
    if len(kernel_sizes) > len(SPATIAL_POOLS):
        raise ConfigurationError("At most {} kernel sizes are supported, got {}".format(
            len(SPATIAL_POOLS), list(kernel_sizes)))
    for k in kernel_sizes:
        if k < 1 or k % 2 == 0:
            raise ConfigurationError("Kernel sizes must be odd and positive, got {}".format(list(kernel_sizes)))
    if any(a >= b for a, b in zip(kernel_sizes, kernel_sizes[1:])):
        raise ConfigurationError("Kernel sizes must be strictly ascending, got {}".format(list(kernel_sizes)))


@dataclass
class DynamicWeights:
    """Input-dependent weights composed from one router invocation."""
    W1: Tensor
    W2: Tensor
    kernels: List[Tensor]


class ExpertCenter:
    """A pool of experts shared by every adapter site in its scope.

    Holds E_A (M, C, latent) and E_B (M, latent, C) for the channel
    projections, plus one spatial pool S_i (M, latent, K_i * K_i) per
    kernel size. Kernels are stored flattened row-major.

    Arguments:
        channels: the stage width C.
        latent: the bottleneck width (C-hat).
        kernel_sizes: ascending odd sizes; empty disables spatial pools.
        pools: name -> Tensor, in the order E_A, E_B, S_A, S_B, S_C.
        scope: names of the adapter sites sharing this center.
    """

    def __init__(self, channels: int, latent: int, kernel_sizes: Sequence[int],
                 pools: Dict[str, Tensor], scope: Sequence[str] = ()):
        capacity = pools["E_A"].shape[0]
        check_center_extents(capacity, channels, latent, kernel_sizes)
        expected = {"E_A": (capacity, channels, latent), "E_B": (capacity, latent, channels)}
        for name, k in zip(SPATIAL_POOLS, kernel_sizes):
            expected[name] = (capacity, latent, k * k)
        if set(pools) != set(expected):
            raise DimensionError("Expert center pools {} do not match kernel sizes {}".format(
                sorted(pools), list(kernel_sizes)))
        for name, shape in expected.items():
            if pools[name].shape != shape:
                raise DimensionError("Pool {} has shape {}, expected {}".format(name, pools[name].shape, shape))

        self.capacity = capacity
        self.channels = channels
        self.latent = latent
        self.kernel_sizes = list(kernel_sizes)
        self.pools = {name: pools[name] for name in expected}
        self.scope = list(scope)

    def __str__(self):
        return "ExpertCenter M={}, C={}, latent={}, kernels={}, scope={}".format(
            self.capacity, self.channels, self.latent, self.kernel_sizes, len(self.scope))

    @property
    def E_A(self) -> Tensor:
        return self.pools["E_A"]

    @property
    def E_B(self) -> Tensor:
        return self.pools["E_B"]

    @property
    def spatial(self) -> List[Tensor]:
        return [self.pools[name] for name in SPATIAL_POOLS[:len(self.kernel_sizes)]]

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.pools)

    def detached(self) -> "ExpertCenter":
        """A view of this center whose pools are constants sharing storage.

        An adapter bound to the view still reads the current expert values
        but contributes nothing to their gradients.
        """
        pools = {name: t.detach() for name, t in self.pools.items()}
        return ExpertCenter(self.channels, self.latent, self.kernel_sizes, pools, self.scope)


def init_center(capacity: int, channels: int, latent: int,
                kernel_sizes: Sequence[int] = (3, 5, 7),
                init=InitMethod.TRUNC_NORMAL, seed: int = 0,
                scope: Sequence[str] = ()) -> ExpertCenter:
    """Creates a center with freshly drawn pools.

    trunc_normal draws N(0, 0.02^2) truncated at two standard deviations.
    The kaiming variants use the number of inputs of one output of an
    expert matrix as fan-in: C for E_A, latent for E_B, K*K for S_i.
    """
    init = parse_init(init)
    check_center_extents(capacity, channels, latent, kernel_sizes)
    rng = np.random.default_rng(seed)
    pools = {
        "E_A": Tensor(init_array(rng, init, (capacity, channels, latent), channels), requires_grad=True),
        "E_B": Tensor(init_array(rng, init, (capacity, latent, channels), latent), requires_grad=True),
    }
    for name, k in zip(SPATIAL_POOLS, kernel_sizes):
        pools[name] = Tensor(init_array(rng, init, (capacity, latent, k * k), k * k), requires_grad=True)
    center = ExpertCenter(channels, latent, kernel_sizes, pools, scope)
    logging.debug("Created " + str(center) + " with " + str(init))
    return center


def mix_experts(gates: Tensor, pool: Tensor) -> Tensor:
    """Gate-weighted sum over the leading (expert) axis of pool.

    gates is (M,) or (B, M); the result is pool.shape[1:] or
    (B,) + pool.shape[1:].
    """
    capacity = pool.shape[0]
    if gates.ndim not in (1, 2) or gates.shape[-1] != capacity:
        raise DimensionError("Gate shape {} does not match {} experts".format(gates.shape, capacity))
    rest = pool.shape[1:]
    flat = pool.reshape(capacity, int(np.prod(rest)))
    if gates.ndim == 1:
        return matmul(gates.reshape(1, capacity), flat).reshape(rest)
    return matmul(gates, flat).reshape((gates.shape[0],) + rest)


def compose_channel_weights(center: ExpertCenter, G1: Tensor, G2: Tensor) -> Tuple[Tensor, Tensor]:
    """W1 = sum_m G1[m] E_A[m] and W2 = sum_m G2[m] E_B[m]."""
    return mix_experts(G1, center.E_A), mix_experts(G2, center.E_B)


def compose_spatial_kernels(center: ExpertCenter, *gates: Tensor) -> List[Tensor]:
    """kernel_i = sum_m G_i[m] S_i[m], unflattened to (latent, K_i, K_i)."""
    if len(gates) != len(center.kernel_sizes):
        raise DimensionError("Got {} spatial gates for {} kernel sizes".format(len(gates), len(center.kernel_sizes)))
    kernels = []
    for g, pool, k in zip(gates, center.spatial, center.kernel_sizes):
        mixed = mix_experts(g, pool)
        kernels.append(mixed.reshape(mixed.shape[:-1] + (k, k)))
    return kernels


def partition_scope(sites: Sequence, group_size: Optional[int]) -> List[list]:
    """Splits ordered sites into consecutive groups of group_size.

    The last group holds the remainder when group_size does not divide
    the number of sites. None keeps every site in one group.
    """
    sites = list(sites)
    if group_size is None:
        return [sites]
    if group_size <= 0:
        raise ConfigurationError("Group size must be positive, got {}".format(group_size))
    return [sites[i:i + group_size] for i in range(0, len(sites), group_size)]


def center_param_counts(capacity: int, channels: int, latent: int,
                        kernel_sizes: Sequence[int]) -> Dict[str, int]:
    """Closed-form trainable scalar counts per pool plus 'total'."""
    counts = {"E_A": capacity * channels * latent, "E_B": capacity * latent * channels}
    for name, k in zip(SPATIAL_POOLS, kernel_sizes):
        counts[name] = capacity * latent * k * k
    counts["total"] = sum(counts.values())
    return counts


def count_params(center: ExpertCenter) -> Dict[str, int]:
    """Per-pool and total trainable scalar counts of an instantiated center."""
    counts = {name: int(t.size) for name, t in center.pools.items()}
    counts["total"] = sum(counts.values())
    return counts
