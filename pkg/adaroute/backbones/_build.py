# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Build - Backbone construction and AdaRoute insertion.
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
from typing import Dict, List, Sequence

import numpy as np

from ..adapter import init_adapter
from ..config import AdapterConfig, BackboneConfig, BackboneStyle, parse_style
from ..errors import UsageError
from ..expert_center import init_center, partition_scope, truncated_normal
from ..tensor import Tensor
from ._convnext_like import ConvNeXtLikeBlock
from ._graph import HeadKind, ModelGraph, Stage, TensorCategory, derive_seed
from ._swin_like import SwinLikeBlock

SITE_UNITS = {
    BackboneStyle.SWIN_LIKE: SwinLikeBlock.units,
    BackboneStyle.CONVNEXT_LIKE: ConvNeXtLikeBlock.units,
}


def block_name(stage: int, index: int) -> str:
    return "s{}.b{}".format(stage, index)


def build_backbone(cfg: BackboneConfig, seed: int, n_classes: int = 3,
                   head_kind: HeadKind = HeadKind.SEGMENTATION) -> ModelGraph:
    """Builds the frozen backbone and a trainable head, without adapters.

    Backbone weights are LeCun-normal, head weights truncated normal;
    both are a pure function of seed.
    """
    cfg.validate()
    style = parse_style(cfg.style)
    rng = np.random.default_rng(derive_seed(seed, 0))
    stages = []
    in_channels = cfg.in_channels
    for i, (depth, dim, patch) in enumerate(zip(cfg.depths, cfg.dims, cfg.patch)):
        stage = Stage(i, in_channels, dim, patch, rng)
        for j in range(depth):
            if style is BackboneStyle.SWIN_LIKE:
                block = SwinLikeBlock(block_name(i, j), i, dim, cfg.head_dim, cfg.mlp_ratio, rng)
            else:
                block = ConvNeXtLikeBlock(block_name(i, j), i, dim, cfg.mlp_ratio, rng)
            stage.blocks.append(block)
        stages.append(stage)
        in_channels = dim

    head_rng = np.random.default_rng(derive_seed(seed, 1))
    head: Dict[str, Tensor] = {}
    if head_kind is HeadKind.CLASSIFICATION:
        head["weight"] = Tensor(truncated_normal(head_rng, (cfg.dims[-1], n_classes)))
        head["bias"] = Tensor(np.zeros(n_classes))
    else:
        for i, dim in enumerate(cfg.dims):
            head["s{}.weight".format(i)] = Tensor(truncated_normal(head_rng, (dim, n_classes)))
            head["s{}.bias".format(i)] = Tensor(np.zeros(n_classes))

    graph = ModelGraph(cfg, stages, head_kind, n_classes, head, seed)
    logging.info("Built " + str(graph))
    return graph


@dataclass
class CenterPlan:
    """One expert center and the adapter sites sharing it."""
    name: str
    stage: int
    group: int
    blocks: List[str]
    sites: List[str]
    capacity: int
    channels: int
    latent: int


def capacity_for(multiplier: float, n_blocks: int) -> int:
    """M = max(1, ceil(multiplier * L)) for L blocks in scope."""
    return max(1, int(math.ceil(multiplier * n_blocks - 1e-9)))


def plan_centers(style, depths: Sequence[int], dims: Sequence[int],
                 acfg: AdapterConfig) -> List[CenterPlan]:
    """Which centers an insertion creates and which sites each serves.

    Needs only the architecture's depth and width lists, so it also
    describes published architectures too large to instantiate.
    """
    units = SITE_UNITS[parse_style(style)]
    plans = []
    for stage, (depth, dim) in enumerate(zip(depths, dims)):
        blocks = [block_name(stage, j) for j in range(depth)]
        for group, members in enumerate(partition_scope(blocks, acfg.group_size)):
            plans.append(CenterPlan(
                name="s{}.g{}".format(stage, group),
                stage=stage,
                group=group,
                blocks=members,
                sites=[b + "." + u for b in members for u in units],
                capacity=capacity_for(acfg.capacity_multiplier, len(members)),
                channels=dim,
                latent=acfg.latent_for(stage)))
    return plans


def insert_adapters(g: ModelGraph, acfg: AdapterConfig, seed: int) -> ModelGraph:
    """Attaches an AdaRoute module to every site, sharing one center per scope.

    Center pools, routers and SA projections are registered trainable;
    backbone tensors stay frozen.
    """
    if g.has_adapters:
        raise UsageError("Adapters are already inserted into this model")
    acfg.validate()
    for plan in plan_centers(g.config.style, g.config.depths, g.config.dims, acfg):
        center = init_center(plan.capacity, plan.channels, plan.latent, acfg.active_kernel_sizes,
                             acfg.init, derive_seed(seed, 2, plan.stage, plan.group), plan.sites)
        g.centers[plan.name] = center
        for pool, t in center.parameters().items():
            g.register("center." + plan.name + "." + pool, t, TensorCategory.CENTER)
        for i, site in enumerate(plan.sites):
            module = init_adapter(site, center, acfg.router_hidden, acfg.router_activation,
                                  acfg.layout, acfg.use_sa, acfg.nonlinearity, acfg.routing,
                                  min(acfg.static_expert, plan.capacity - 1), acfg.top_k,
                                  acfg.renormalize, derive_seed(seed, 3, plan.stage, plan.group, i))
            g.adapters[site] = module
            for key, t in module.parameters().items():
                category = TensorCategory.SA if key.startswith("sa.") else TensorCategory.ROUTER
                g.register("adapter." + site + "." + key, t, category)
    g.adapters = {site: g.adapters[site] for site in g.sites if site in g.adapters}
    g.adapter_config = acfg
    logging.info("Inserted " + str(len(g.adapters)) + " adapters sharing "
                 + str(len(g.centers)) + " expert centers")
    return g
