# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Task - Reproducible synthetic sample streams.
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
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..tensor import Tensor
from ._blob_seg import blob_seg_sample
from ._stripe_cls import stripe_cls_sample

MIN_IMAGE_SIZE = 8


class TaskKind(Enum):
    BLOB_SEG = "blob_seg"
    STRIPE_CLS = "stripe_cls"

    def __str__(self):
        return self.value

    @property
    def is_segmentation(self) -> bool:
        return self is TaskKind.BLOB_SEG


class Split(Enum):
    """Sample seeds of different splits never coincide."""
    TRAIN = 0
    EVAL = 1
    PROBE = 2

    def __str__(self):
        return self.name.lower()


def parse_task_kind(kind) -> TaskKind:
    if isinstance(kind, TaskKind):
        return kind
    try:
        return TaskKind(kind)
    except ValueError:
        raise ConfigurationError("Unknown task '{}', expected blob_seg or stripe_cls".format(kind))


@dataclass
class TaskBatch:
    """A batch of images and labels.

    Arguments:
        inputs: (B, C_in, H, W) images.
        targets: (B, H, W) per-pixel classes, or (B,) image classes.
        lineage: (seed, split, index) of every sample.
    """
    inputs: Tensor
    targets: np.ndarray
    lineage: Tuple[Tuple[int, int, int], ...]

    def __len__(self):
        return self.inputs.shape[0]


Generator = Callable[[np.random.Generator, int, int, int], Tuple[np.ndarray, np.ndarray]]


class TaskStream:
    """Endless indexed stream of samples of one synthetic task.

    Sample (split, index) is drawn from its own generator seeded by
    (seed, split, index), so any sample can be regenerated in isolation.

    Arguments:
        kind: which task.
        n_classes: number of classes, background included for blob_seg.
        image_size: height and width of every image.
        in_channels: channels of every image.
        seed: root seed of the stream.
        train_pool: when set, training indices wrap around this many samples.
    """

    def __init__(self, kind, n_classes: int, image_size: int, in_channels: int = 3,
                 seed: int = 0, train_pool: Optional[int] = None):
        self.kind = parse_task_kind(kind)
        if image_size < MIN_IMAGE_SIZE:
            raise ConfigurationError("Task images must be at least {} pixels, got {}".format(MIN_IMAGE_SIZE, image_size))
        if n_classes < 2:
            raise ConfigurationError("A task needs at least 2 classes, got {}".format(n_classes))
        if in_channels < 1:
            raise ConfigurationError("in_channels must be positive, got {}".format(in_channels))
        if train_pool is not None and train_pool < 1:
            raise ConfigurationError("train_pool must be positive, got {}".format(train_pool))
        self.n_classes = n_classes
        self.image_size = image_size
        self.in_channels = in_channels
        self.seed = seed
        self.train_pool = train_pool
        self._generate: Generator = blob_seg_sample if self.kind is TaskKind.BLOB_SEG else stripe_cls_sample

    def __str__(self):
        return "TaskStream {} ({} classes, {}px, seed {})".format(
            self.kind, self.n_classes, self.image_size, self.seed)

    def sample(self, split: Split, index: int) -> Tuple[np.ndarray, np.ndarray]:
        if split is Split.TRAIN and self.train_pool is not None:
            index = index % self.train_pool
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, split.value, index]))
        return self._generate(rng, self.n_classes, self.image_size, self.in_channels)

    def batch(self, split: Split, indices: Sequence[int]) -> TaskBatch:
        images, labels = zip(*(self.sample(split, i) for i in indices))
        lineage = tuple((self.seed, split.value, int(i)) for i in indices)
        return TaskBatch(Tensor(np.stack(images)), np.stack(labels), lineage)

    def train_batch(self, step: int, batch_size: int) -> TaskBatch:
        """The batch used at global optimizer step `step`."""
        return self.batch(Split.TRAIN, range(step * batch_size, (step + 1) * batch_size))

    def eval_batch(self, size: int) -> TaskBatch:
        return self.batch(Split.EVAL, range(size))


def make_task(kind, n_classes: int, image_size: int, seed: int, in_channels: int = 3,
              train_pool: Optional[int] = None) -> TaskStream:
    return TaskStream(kind, n_classes, image_size, in_channels, seed, train_pool)
