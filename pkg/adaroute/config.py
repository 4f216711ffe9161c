# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Config - Run configuration dataclasses and their JSON form.
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

import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import List, Optional, Union, get_type_hints

from .adapter import parse_layout, parse_nonlinearity, parse_routing
from .errors import ConfigurationError
from .expert_center import SPATIAL_POOLS, parse_init
from .router import parse_activation
from .tasks import parse_task_kind

SCHEMA_VERSION = 1
SEED_ENV = "ADAROUTE_SEED"


class BackboneStyle(Enum):
    SWIN_LIKE = "swin_like"
    CONVNEXT_LIKE = "convnext_like"

    def __str__(self):
        return self.value


def parse_style(style) -> BackboneStyle:
    if isinstance(style, BackboneStyle):
        return style
    try:
        return BackboneStyle(style)
    except ValueError:
        raise ConfigurationError("Unknown backbone style '{}', expected swin_like or convnext_like".format(style))


_TYPE_NAMES = {int: "integer", float: "number", str: "string", bool: "boolean", type(None): "null"}


def _describe(hint) -> str:
    origin = getattr(hint, "__origin__", None)
    if origin is Union:
        return " or ".join(_describe(arg) for arg in hint.__args__)
    if origin is list:
        return "list of " + _describe(hint.__args__[0])
    return _TYPE_NAMES.get(hint, getattr(hint, "__name__", str(hint)))


def _matches(value, hint) -> bool:
    origin = getattr(hint, "__origin__", None)
    if origin is Union:
        return any(_matches(value, arg) for arg in hint.__args__)
    if origin is list:
        return isinstance(value, list) and all(_matches(v, hint.__args__[0]) for v in value)
    if hint is bool:
        return isinstance(value, bool)
    if hint is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if hint is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if hint is str:
        return isinstance(value, (str, Enum))
    return isinstance(value, hint) if isinstance(hint, type) else True


def check_types(section, name: str) -> None:
    """Raises ConfigurationError for the first field whose value does not
    match its annotation. Integers are accepted where numbers are expected.
    """
    for key, hint in get_type_hints(type(section)).items():
        value = getattr(section, key)
        if not _matches(value, hint):
            raise ConfigurationError("{}.{} expects {}, got {!r}".format(name, key, _describe(hint), value))


def _from_dict(cls, data, section: str):
    if not isinstance(data, dict):
        raise ConfigurationError("Section '{}' must be a JSON object".format(section))
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError("Unknown keys in '{}': {}".format(section, ", ".join(unknown)))
    return cls(**copy.deepcopy(data))


@dataclass
class BackboneConfig:
    """Shape of the frozen toy backbone.

    Arguments:
        depths: blocks per stage.
        dims: channel width per stage, strictly increasing.
        patch: downsampling factor of each stage's patch embedding.
        head_dim: channels per attention head (swin_like only).
    """
    style: str = "swin_like"
    depths: List[int] = field(default_factory=lambda: [2, 2])
    dims: List[int] = field(default_factory=lambda: [16, 32])
    patch: List[int] = field(default_factory=lambda: [2, 2])
    in_channels: int = 3
    mlp_ratio: int = 2
    head_dim: int = 8

    def validate(self) -> None:
        check_types(self, "backbone")
        parse_style(self.style)
        if not self.depths or len(self.depths) != len(self.dims) or len(self.patch) != len(self.dims):
            raise ConfigurationError("depths, dims and patch must have the same non-zero length, got {}, {}, {}".format(
                self.depths, self.dims, self.patch))
        if any(d < 1 for d in self.depths) or any(p < 1 for p in self.patch):
            raise ConfigurationError("depths and patch factors must be positive")
        if any(c < 1 for c in self.dims) or any(a >= b for a, b in zip(self.dims, self.dims[1:])):
            raise ConfigurationError("dims must be positive and strictly increasing, got {}".format(self.dims))
        if self.in_channels < 1 or self.mlp_ratio < 1:
            raise ConfigurationError("in_channels and mlp_ratio must be positive")
        if parse_style(self.style) is BackboneStyle.SWIN_LIKE:
            if self.head_dim < 1 or any(c % self.head_dim for c in self.dims):
                raise ConfigurationError("Every dim must be a multiple of head_dim {}, got {}".format(
                    self.head_dim, self.dims))

    @property
    def downsampling(self) -> int:
        factor = 1
        for p in self.patch:
            factor *= p
        return factor


@dataclass
class AdapterConfig:
    """Where and how AdaRoute modules are inserted.

    Arguments:
        enabled: False gives the head-only baseline.
        capacity_multiplier: M = max(1, ceil(multiplier * blocks in scope)).
        latent_per_stage: overrides latent per stage when given.
        use_spatial: False drops the dynamic convolutions entirely.
        group_size: blocks per expert center, None for one center per stage.
        top_k: keep only the K largest gate entries, None for dense routing.
    """
    enabled: bool = True
    capacity_multiplier: float = 1.0
    latent: int = 8
    latent_per_stage: Optional[List[int]] = None
    kernel_sizes: List[int] = field(default_factory=lambda: [3, 5, 7])
    use_spatial: bool = True
    use_sa: bool = True
    layout: str = "sequential_res"
    nonlinearity: str = "gelu"
    router_activation: str = "softmax"
    router_hidden: int = 4
    top_k: Optional[int] = None
    renormalize: bool = True
    init: str = "trunc_normal"
    group_size: Optional[int] = None
    routing: str = "dynamic"
    static_expert: int = 0

    def validate(self) -> None:
        check_types(self, "adapter")
        parse_layout(self.layout)
        parse_nonlinearity(self.nonlinearity)
        parse_activation(self.router_activation)
        parse_init(self.init)
        parse_routing(self.routing)
        if self.capacity_multiplier <= 0:
            raise ConfigurationError("capacity_multiplier must be positive, got {}".format(self.capacity_multiplier))
        if self.latent < 1:
            raise ConfigurationError("latent must be positive, got {}".format(self.latent))
        if self.latent_per_stage is not None and any(c < 1 for c in self.latent_per_stage):
            raise ConfigurationError("latent_per_stage entries must be positive")
        if len(self.kernel_sizes) > len(SPATIAL_POOLS):
            raise ConfigurationError("At most {} kernel sizes, got {}".format(len(SPATIAL_POOLS), self.kernel_sizes))
        if self.use_spatial and not self.kernel_sizes:
            raise ConfigurationError("kernel_sizes is empty; set use_spatial to false instead")
        for k in self.kernel_sizes:
            if k < 1 or k % 2 == 0:
                raise ConfigurationError("Kernel sizes must be odd and positive, got {}".format(self.kernel_sizes))
        if any(a >= b for a, b in zip(self.kernel_sizes, self.kernel_sizes[1:])):
            raise ConfigurationError("Kernel sizes must be strictly ascending, got {}".format(self.kernel_sizes))
        if self.router_hidden < 1:
            raise ConfigurationError("router_hidden must be positive, got {}".format(self.router_hidden))
        if self.top_k is not None and self.top_k < 1:
            raise ConfigurationError("top_k must be positive, got {}".format(self.top_k))
        if self.group_size is not None and self.group_size < 1:
            raise ConfigurationError("group_size must be positive, got {}".format(self.group_size))
        if self.static_expert < 0:
            raise ConfigurationError("static_expert must be non-negative")

    @property
    def active_kernel_sizes(self) -> List[int]:
        return list(self.kernel_sizes) if self.use_spatial else []

    def latent_for(self, stage: int) -> int:
        if self.latent_per_stage is not None:
            if stage >= len(self.latent_per_stage):
                raise ConfigurationError("latent_per_stage has no entry for stage {}".format(stage))
            return self.latent_per_stage[stage]
        return self.latent


@dataclass
class TaskConfig:
    """Synthetic task. train_pool cycles training samples through a fixed pool."""
    kind: str = "blob_seg"
    n_classes: int = 3
    image_size: int = 16
    train_pool: Optional[int] = None
    eval_size: int = 16

    def validate(self) -> None:
        check_types(self, "task")
        parse_task_kind(self.kind)
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be at least 2, got {}".format(self.n_classes))
        if self.image_size < 8:
            raise ConfigurationError("image_size must be at least 8, got {}".format(self.image_size))
        if self.train_pool is not None and self.train_pool < 1:
            raise ConfigurationError("train_pool must be positive, got {}".format(self.train_pool))
        if self.eval_size < 1:
            raise ConfigurationError("eval_size must be positive, got {}".format(self.eval_size))


@dataclass
class TrainConfig:
    """AdamW with cosine decay over total_steps (steps when unset)."""
    steps: int = 100
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    total_steps: Optional[int] = None
    eval_every: int = 50

    def validate(self) -> None:
        check_types(self, "train")
        if self.steps < 0:
            raise ConfigurationError("steps must be non-negative, got {}".format(self.steps))
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive, got {}".format(self.batch_size))
        if self.lr < 0 or self.weight_decay < 0 or self.eps <= 0:
            raise ConfigurationError("lr and weight_decay must be non-negative and eps positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("betas must lie in [0, 1)")
        if self.total_steps is not None and self.total_steps < 1:
            raise ConfigurationError("total_steps must be positive, got {}".format(self.total_steps))
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be positive, got {}".format(self.eval_every))

    @property
    def horizon(self) -> int:
        return self.total_steps if self.total_steps is not None else max(self.steps, 1)


@dataclass
class RunConfig:
    """Everything a run depends on. Nothing is drawn from global random state."""
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    output_dir: str = "runs/default"
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        check_types(self, "run")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError("Config schema version {} is not supported (expected {})".format(
                self.schema_version, SCHEMA_VERSION))
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer, got {!r}".format(self.seed))
        self.backbone.validate()
        self.adapter.validate()
        self.task.validate()
        self.train.validate()
        for stage, dim in enumerate(self.backbone.dims):
            if self.adapter.enabled and not self.adapter.latent_for(stage) < dim:
                raise ConfigurationError("Latent width {} must be below stage {} width {}".format(
                    self.adapter.latent_for(stage), stage, dim))
        if self.task.image_size % self.backbone.downsampling:
            raise ConfigurationError("image_size {} is not divisible by the total patch factor {}".format(
                self.task.image_size, self.backbone.downsampling))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        sections = {"backbone": BackboneConfig, "adapter": AdapterConfig,
                    "task": TaskConfig, "train": TrainConfig}
        parsed = {name: _from_dict(section_cls, data.pop(name, {}), name)
                  for name, section_cls in sections.items()}
        config = _from_dict(cls, data, "run")
        for name, section in parsed.items():
            setattr(config, name, section)
        config.validate()
        return config

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_config() -> RunConfig:
    return RunConfig()


def load_config(path: str) -> RunConfig:
    """Reads and validates a JSON run config.

    Unreadable files and malformed JSON are reported as configuration
    errors naming the path.
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationError("Cannot read config file {}: {}".format(path, e.strerror or e))
    except json.JSONDecodeError as e:
        raise ConfigurationError("Config file {} is not valid JSON: {}".format(path, e))
    if not isinstance(data, dict):
        raise ConfigurationError("Config file {} must hold a JSON object".format(path))
    config = RunConfig.from_dict(data)
    logging.debug("Loaded config from " + path)
    return config


def apply_env_seed(config: RunConfig) -> RunConfig:
    """Overrides config.seed from ADAROUTE_SEED when it is set."""
    value = os.environ.get(SEED_ENV)
    if value is None:
        return config
    try:
        config.seed = int(value)
    except ValueError:
        raise ConfigurationError("{} must be an integer, got '{}'".format(SEED_ENV, value))
    if config.seed < 0:
        raise ConfigurationError("{} must be non-negative, got {}".format(SEED_ENV, config.seed))
    logging.info("Seed overridden from " + SEED_ENV + ": " + str(config.seed))
    return config
