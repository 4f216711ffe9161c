# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Audit - Closed-form trainable parameter counts with an assumption ledger.
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
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import pandas as pd

from ..backbones import ModelGraph, TensorCategory, plan_centers
from ..config import AdapterConfig, BackboneConfig, BackboneStyle, parse_style
from ..errors import ConfigurationError
from ..expert_center import center_param_counts
from ..router import CHANNEL_HEADS, SPATIAL_HEADS

GAP_WARNING_FRACTION = 0.1
AUDITED = (TensorCategory.CENTER, TensorCategory.ROUTER, TensorCategory.SA)


@dataclass
class ArchSpec:
    """Depth and width table of an architecture plus its reported budget."""
    name: str
    style: BackboneStyle
    depths: List[int]
    dims: List[int]
    target: Optional[float] = None


ARCHITECTURES: Dict[str, ArchSpec] = {
    "swin-b": ArchSpec("swin-b", BackboneStyle.SWIN_LIKE, [2, 2, 18, 2], [128, 256, 512, 1024], 5.2e6),
    "swin-l": ArchSpec("swin-l", BackboneStyle.SWIN_LIKE, [2, 2, 18, 2], [192, 384, 768, 1536], 7.3e6),
    "convnext-b": ArchSpec("convnext-b", BackboneStyle.CONVNEXT_LIKE, [3, 3, 27, 3], [128, 256, 512, 1024], 6.5e6),
    "convnext-l": ArchSpec("convnext-l", BackboneStyle.CONVNEXT_LIKE, [3, 3, 27, 3], [192, 384, 768, 1536], 9.2e6),
}


def published_adapter_config() -> AdapterConfig:
    """M = L, latent 128, router width 24, kernels 3/5/7 with SA."""
    return AdapterConfig(capacity_multiplier=1.0, latent=128, kernel_sizes=[3, 5, 7],
                         use_sa=True, router_hidden=24)


def toy_arch(cfg: BackboneConfig) -> ArchSpec:
    return ArchSpec("toy", parse_style(cfg.style), list(cfg.depths), list(cfg.dims))


def router_param_counts(channels: int, hidden: int, capacity: int, n_kernels: int) -> Dict[str, int]:
    counts = {"router.hidden.weight": channels * hidden, "router.hidden.bias": hidden}
    for head in CHANNEL_HEADS + SPATIAL_HEADS[:n_kernels]:
        counts["router." + head + ".weight"] = hidden * capacity
        counts["router." + head + ".bias"] = capacity
    return counts


def sa_param_counts(latent: int, n_kernels: int, use_sa: bool) -> Dict[str, int]:
    if not use_sa or n_kernels < 2:
        return {}
    return {"sa.weight": latent * n_kernels, "sa.bias": n_kernels}


@dataclass
class AuditItem:
    component: str
    tensor: str
    category: TensorCategory
    count: int


@dataclass
class ParamAudit:
    """Itemized trainable parameter ledger of one architecture and adapter config.

    Arguments:
        arch: audited architecture.
        items: one entry per trainable tensor.
        notes: assumptions behind the enumeration.
        frozen_backbone: frozen scalar count when known.
    """
    arch: ArchSpec
    items: List[AuditItem]
    notes: List[str] = field(default_factory=list)
    frozen_backbone: Optional[int] = None

    @property
    def totals(self) -> Dict[str, int]:
        totals = {str(c): 0 for c in AUDITED}
        for item in self.items:
            totals[str(item.category)] += item.count
        return totals

    @property
    def grand_total(self) -> int:
        return sum(item.count for item in self.items)

    @property
    def deviation(self) -> Optional[float]:
        """(ours - target) / target, None when there is no reported budget."""
        if self.arch.target is None:
            return None
        return (self.grand_total - self.arch.target) / self.arch.target

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(i.component, i.tensor, str(i.category), i.count) for i in self.items],
                            columns=["component", "tensor", "category", "count"])

    def to_text(self) -> str:
        lines = ["Parameter audit: " + self.arch.name,
                 "  depths " + str(self.arch.depths) + ", dims " + str(self.arch.dims)]
        for category, total in self.totals.items():
            lines.append("  {:<10} {:>12,d}  ({:.3f}M)".format(category, total, total / 1e6))
        lines.append("  {:<10} {:>12,d}  ({:.3f}M)".format("total", self.grand_total, self.grand_total / 1e6))
        if self.frozen_backbone is not None:
            lines.append("  {:<10} {:>12,d}  (frozen)".format("backbone", self.frozen_backbone))
        if self.arch.target is not None:
            lines.append("  reported   {:>12,d}  ({:.1f}M), deviation {:+.1%}".format(
                int(self.arch.target), self.arch.target / 1e6, self.deviation))
            if abs(self.deviation) > GAP_WARNING_FRACTION:
                lines.append("  GAP: enumeration differs from the reported budget by more than {:.0%}".format(
                    GAP_WARNING_FRACTION))
        lines.append("Assumptions:")
        lines.extend("  - " + note for note in self.notes)
        return "\n".join(lines) + "\n"


def _notes(acfg: AdapterConfig, published: bool) -> List[str]:
    n_kernels = len(acfg.active_kernel_sizes)
    notes = [
        "One expert center per {}; capacity M = max(1, ceil({} x blocks in scope)).".format(
            "stage" if acfg.group_size is None else "group of {} blocks".format(acfg.group_size),
            acfg.capacity_multiplier),
        "Center pools: E_A (M, C, latent), E_B (M, latent, C), one (M, latent, K*K) pool per kernel size {}.".format(
            acfg.active_kernel_sizes),
        "Router per site: hidden layer C x {} with bias, {} heads of {} x M with bias, no normalization.".format(
            acfg.router_hidden, 2 + n_kernels, acfg.router_hidden),
        "SA per site: 1x1 projection latent x {} with bias{}.".format(
            n_kernels, "" if acfg.use_sa and n_kernels > 1 else " (disabled)"),
        "Swin-like blocks carry 2 adapter sites, ConvNeXt-like blocks 1.",
        "No adapters in patch embeddings; no norms or output scales inside adapters.",
        "Prediction head and decode head parameters are not counted.",
    ]
    if published:
        notes.append("The reported budget is not itemized; unlisted norms, biases or embedding "
                     "adapters may explain the gap, which is logged rather than fitted.")
    return notes


def audit_params(arch: ArchSpec, acfg: AdapterConfig) -> ParamAudit:
    """Closed-form enumeration of center, router and SA parameters per stage."""
    acfg.validate()
    kernels = acfg.active_kernel_sizes
    items = []
    for plan in plan_centers(arch.style, arch.depths, arch.dims, acfg):
        component = "center " + plan.name
        for pool, count in center_param_counts(plan.capacity, plan.channels, plan.latent, kernels).items():
            if pool != "total":
                items.append(AuditItem(component, pool, TensorCategory.CENTER, count))
        for site in plan.sites:
            component = "adapter " + site
            for tensor, count in router_param_counts(plan.channels, acfg.router_hidden,
                                                     plan.capacity, len(kernels)).items():
                items.append(AuditItem(component, tensor, TensorCategory.ROUTER, count))
            for tensor, count in sa_param_counts(plan.latent, len(kernels), acfg.use_sa).items():
                items.append(AuditItem(component, tensor, TensorCategory.SA, count))
    audit = ParamAudit(arch, items, _notes(acfg, arch.target is not None))
    logging.info("Audited " + arch.name + ": " + str(audit.grand_total) + " trainable parameters")
    if audit.deviation is not None and abs(audit.deviation) > GAP_WARNING_FRACTION:
        logging.warning("Audit of " + arch.name + " is " + "{:+.1%}".format(audit.deviation)
                        + " off the reported " + str(arch.target / 1e6) + "M")
    return audit


def audit_architecture(name: str, acfg: Optional[AdapterConfig] = None,
                       toy: Optional[BackboneConfig] = None) -> ParamAudit:
    """Audit of a named architecture: toy, swin-b, swin-l, convnext-b or convnext-l.

    Published architectures default to the published adapter config.
    """
    name = name.lower()
    if name == "toy":
        arch = toy_arch(toy if toy is not None else BackboneConfig())
        return audit_params(arch, acfg if acfg is not None else AdapterConfig())
    if name not in ARCHITECTURES:
        raise ConfigurationError("Unknown architecture '{}', expected toy or one of {}".format(
            name, sorted(ARCHITECTURES)))
    return audit_params(ARCHITECTURES[name], acfg if acfg is not None else published_adapter_config())


def audit_graph(graph: ModelGraph) -> ParamAudit:
    """Ledger of an instantiated model by direct enumeration of its trainable tensors."""
    items = []
    for name, t in graph.trainable_tensors().items():
        category = graph.categories[name]
        if category in AUDITED:
            component, _, tensor = name.rpartition(".")
            items.append(AuditItem(component, tensor, category, int(t.size)))
    frozen = sum(t.size for t in graph.frozen_tensors().values())
    acfg = graph.adapter_config if graph.adapter_config is not None else AdapterConfig(enabled=False)
    return ParamAudit(toy_arch(graph.config), items, _notes(acfg, False), frozen)
