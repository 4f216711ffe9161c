# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Blob Segmentation - Coloured shapes on a noisy background with per-pixel labels.
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

from typing import Tuple

import numpy as np

PALETTE_SEED = 7
NOISE_STD = 0.5
MAX_SHAPES = 3


def class_palette(n_classes: int, in_channels: int) -> np.ndarray:
    """Mean colour of every class. Background (class 0) is black.

    The palette depends only on the class and channel counts, never on
    the sample seed.
    """
    rng = np.random.default_rng([PALETTE_SEED, n_classes, in_channels])
    palette = rng.uniform(-1.0, 1.0, size=(n_classes, in_channels))
    palette[0] = 0.0
    return palette


def blob_seg_sample(rng: np.random.Generator, n_classes: int, size: int,
                    in_channels: int) -> Tuple[np.ndarray, np.ndarray]:
    """One image with 1 to 3 squares or discs of distinct foreground classes.

    Shapes are at most a third of the image across, so three of them
    never cover it and background is always present. The shape drawn
    last is never overpainted.

    Returns:
        image (in_channels, size, size) and labels (size, size).
    """
    labels = np.zeros((size, size), dtype=np.int64)
    count = int(rng.integers(1, min(MAX_SHAPES, n_classes - 1) + 1))
    classes = rng.choice(np.arange(1, n_classes), size=count, replace=False)
    yy, xx = np.mgrid[0:size, 0:size]
    for c in classes:
        half = max(1, int(rng.integers(size // 4, size // 3 + 1)) // 2)
        cy, cx = rng.integers(half, size - half, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= half)
        else:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= half * half
        labels[mask] = c
    image = class_palette(n_classes, in_channels)[labels].transpose(2, 0, 1)
    image = image + rng.normal(0.0, NOISE_STD, size=image.shape)
    return image, labels
