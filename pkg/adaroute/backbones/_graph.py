# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Model Graph - Frozen backbone, inserted adapters and the freeze mask.
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
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..adapter import AdaRouteModule, adapter_gates, adaroute_forward
from ..config import AdapterConfig, BackboneConfig
from ..errors import ConfigurationError, DimensionError, UsageError
from ..expert_center import ExpertCenter
from ..router import GatingVectors
from ..tensor import Tensor, affine, gap2d, layer_norm, space_to_depth, upsample2d


class TensorCategory(Enum):
    """Every tensor of a ModelGraph belongs to exactly one category."""
    BACKBONE = "backbone"
    HEAD = "head"
    CENTER = "center"
    ROUTER = "router"
    SA = "sa"

    def __str__(self):
        return self.value


class HeadKind(Enum):
    SEGMENTATION = "segmentation"
    CLASSIFICATION = "classification"

    def __str__(self):
        return self.value


def derive_seed(*keys: int) -> int:
    """A 32-bit seed determined by the key path only."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def lecun_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(1.0 / fan_in), size=shape)


def to_tokens(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, H*W, C)."""
    b, c, h, w = x.shape
    return x.reshape(b, c, h * w).transpose(0, 2, 1)


def from_tokens(t: Tensor, h: int, w: int) -> Tensor:
    """(B, H*W, C) -> (B, C, H, W)."""
    b, n, c = t.shape
    return t.transpose(0, 2, 1).reshape(b, c, h, w)


Adapt = Callable[[str, Tensor], Tensor]


class Block:
    """A backbone block with named adapter sites after its residual units."""
    units: Tuple[str, ...] = ()

    def __init__(self, name: str, stage: int, channels: int):
        self.name = name
        self.stage = stage
        self.channels = channels
        self.params: Dict[str, Tensor] = {}

    def __str__(self):
        return "{} {} (C={})".format(type(self).__name__, self.name, self.channels)

    def _param(self, key: str, data: np.ndarray) -> Tensor:
        t = Tensor(data)
        self.params[key] = t
        return t

    def site(self, unit: str) -> str:
        return self.name + "." + unit

    @property
    def sites(self) -> List[str]:
        return [self.site(u) for u in self.units]

    def forward(self, x: Tensor, adapt: Adapt) -> Tensor:
        raise NotImplementedError


class Stage:
    """Patch embedding followed by a run of blocks at one resolution.

    The embedding is space-to-depth by `patch`, a linear map to
    `channels` and a layer norm.
    """

    def __init__(self, index: int, in_channels: int, channels: int, patch: int,
                 rng: np.random.Generator):
        self.index = index
        self.name = "s{}".format(index)
        self.in_channels = in_channels
        self.channels = channels
        self.patch = patch
        fan_in = in_channels * patch * patch
        self.params: Dict[str, Tensor] = {
            "embed.weight": Tensor(lecun_normal(rng, (fan_in, channels), fan_in)),
            "embed.bias": Tensor(np.zeros(channels)),
            "embed.norm.gamma": Tensor(np.ones(channels)),
            "embed.norm.beta": Tensor(np.zeros(channels)),
        }
        self.blocks: List[Block] = []

    def embed(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise DimensionError("Stage {} expects {} input channels, got {}".format(self.index, self.in_channels, c))
        p = self.params
        tokens = affine(space_to_depth(x, self.patch), p["embed.weight"], p["embed.bias"])
        tokens = layer_norm(tokens, p["embed.norm.gamma"], p["embed.norm.beta"])
        return from_tokens(tokens, h // self.patch, w // self.patch)


@dataclass
class ForwardTaps:
    """What a forward pass records besides its logits.

    features: block name -> block output after its adapters, in order.
    gates: adapter site -> the gates used there.
    stages: output of every stage.
    """
    features: Dict[str, Tensor] = field(default_factory=dict)
    gates: Dict[str, GatingVectors] = field(default_factory=dict)
    stages: List[Tensor] = field(default_factory=list)


class ModelGraph:
    """A frozen toy backbone, its prediction head and any inserted adapters.

    Every tensor is registered under a unique dotted name with a
    category. The freeze mask starts out freezing exactly the backbone
    category; set_trainable() can change that for individual tensors.

    Arguments:
        config: the backbone shape.
        stages: built stages with their blocks.
        head_kind: dense logits for segmentation, pooled for classification.
        n_classes: output classes of the head.
        seed: seed the backbone was built from.
    """

    def __init__(self, config: BackboneConfig, stages: List[Stage], head_kind: HeadKind,
                 n_classes: int, head: Dict[str, Tensor], seed: int):
        self.config = config
        self.stages = stages
        self.head_kind = head_kind
        self.n_classes = n_classes
        self.seed = seed
        self.tensors: Dict[str, Tensor] = {}
        self.categories: Dict[str, TensorCategory] = {}
        self.frozen: Dict[str, bool] = {}
        self.adapters: Dict[str, AdaRouteModule] = {}
        self.centers: Dict[str, ExpertCenter] = {}
        self.adapter_config: Optional[AdapterConfig] = None

        for stage in stages:
            for key, t in stage.params.items():
                self.register(stage.name + "." + key, t, TensorCategory.BACKBONE)
            for block in stage.blocks:
                for key, t in block.params.items():
                    self.register(block.name + "." + key, t, TensorCategory.BACKBONE)
        for key, t in head.items():
            self.register("head." + key, t, TensorCategory.HEAD)
        self.head = head

    def __str__(self):
        return "ModelGraph {} depths={} dims={} ({} adapters, {} centers)".format(
            self.config.style, self.config.depths, self.config.dims, len(self.adapters), len(self.centers))

    def register(self, name: str, tensor: Tensor, category: TensorCategory) -> None:
        if name in self.tensors:
            raise UsageError("Tensor '{}' is already registered".format(name))
        self.tensors[name] = tensor
        self.categories[name] = category
        self.frozen[name] = category is TensorCategory.BACKBONE
        tensor.requires_grad = not self.frozen[name]

    def set_trainable(self, name: str, trainable: bool = True) -> None:
        if name not in self.tensors:
            raise ConfigurationError("No tensor named '{}'".format(name))
        self.frozen[name] = not trainable
        self.tensors[name].requires_grad = trainable

    @property
    def blocks(self) -> List[Block]:
        return [b for s in self.stages for b in s.blocks]

    @property
    def sites(self) -> List[str]:
        return [site for b in self.blocks for site in b.sites]

    @property
    def has_adapters(self) -> bool:
        return bool(self.adapters)

    def trainable_tensors(self) -> Dict[str, Tensor]:
        return {name: t for name, t in self.tensors.items() if not self.frozen[name]}

    def frozen_tensors(self) -> Dict[str, Tensor]:
        return {name: t for name, t in self.tensors.items() if self.frozen[name]}

    def count_trainable(self, include_head: bool = False) -> int:
        return sum(t.size for name, t in self.trainable_tensors().items()
                   if include_head or self.categories[name] is not TensorCategory.HEAD)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def stage_sites(self, stage: int) -> List[str]:
        if not 0 <= stage < len(self.stages):
            raise ConfigurationError("Stage {} outside 0..{}".format(stage, len(self.stages) - 1))
        return [site for b in self.stages[stage].blocks for site in b.sites if site in self.adapters]

    def _adapter(self, taps: Optional[ForwardTaps]) -> Adapt:
        def adapt(site: str, x: Tensor) -> Tensor:
            module = self.adapters.get(site)
            if module is None:
                return x
            gates = adapter_gates(x, module)
            if taps is not None:
                taps.gates[site] = gates
            return adaroute_forward(x, module, gates)
        return adapt

    def features(self, x: Tensor, taps: Optional[ForwardTaps] = None) -> List[Tensor]:
        """Runs the stages on images x (B, C_in, H, W); returns every stage output."""
        if x.ndim != 4:
            raise DimensionError("Expected a (B, C, H, W) batch, got {}".format(x.shape))
        adapt = self._adapter(taps)
        outputs = []
        h = x
        for stage in self.stages:
            h = stage.embed(h)
            for block in stage.blocks:
                h = block.forward(h, lambda unit, f, _b=block: adapt(_b.site(unit), f))
                if taps is not None:
                    taps.features[block.name] = h
            outputs.append(h)
        if taps is not None:
            taps.stages = list(outputs)
        return outputs

    def forward(self, x: Tensor, taps: Optional[ForwardTaps] = None) -> Tensor:
        """Logits (B, K, H, W) for segmentation or (B, K) for classification."""
        outputs = self.features(x, taps)
        if self.head_kind is HeadKind.CLASSIFICATION:
            return affine(gap2d(outputs[-1]), self.head["weight"], self.head["bias"])
        height = x.shape[-2]
        logits = None
        for i, out in enumerate(outputs):
            stage_logits = affine(out.transpose(0, 2, 3, 1), self.head["s{}.weight".format(i)],
                                  self.head["s{}.bias".format(i)]).transpose(0, 3, 1, 2)
            stage_logits = upsample2d(stage_logits, height // out.shape[-2])
            logits = stage_logits if logits is None else logits + stage_logits
        return logits


def snapshot(g: ModelGraph) -> Dict[str, bytes]:
    """Raw bytes of every tensor frozen at the time of the call."""
    return {name: t.data.tobytes() for name, t in g.frozen_tensors().items()}


def freeze_check(g: ModelGraph, snap: Dict[str, bytes]) -> bool:
    """True iff every tensor in the snapshot is bitwise unchanged."""
    for name, raw in snap.items():
        t = g.tensors.get(name)
        if t is None or t.data.tobytes() != raw:
            return False
    return True
