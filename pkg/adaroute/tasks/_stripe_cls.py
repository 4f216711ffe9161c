# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Stripe Classification - Oriented stripe textures labelled by orientation bucket.
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
from typing import Tuple

import numpy as np

FREQUENCY_RANGE = (0.15, 0.3)
NOISE_STD = 0.3


def stripe_orientation(label: int, n_classes: int) -> float:
    """Stripe direction of a class in radians; class 0 varies along x."""
    return math.pi * label / n_classes


def stripe_cls_sample(rng: np.random.Generator, n_classes: int, size: int,
                      in_channels: int) -> Tuple[np.ndarray, np.ndarray]:
    """A sinusoidal grating with random frequency and phase plus noise.

    Returns:
        image (in_channels, size, size) and a 0-d label array.
    """
    label = int(rng.integers(n_classes))
    theta = stripe_orientation(label, n_classes)
    frequency = rng.uniform(*FREQUENCY_RANGE)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    yy, xx = np.mgrid[0:size, 0:size]
    pattern = np.sin(2.0 * math.pi * frequency * (xx * math.cos(theta) + yy * math.sin(theta)) + phase)
    gains = 1.0 + 0.1 * rng.standard_normal(in_channels)
    image = gains[:, None, None] * pattern[None] + rng.normal(0.0, NOISE_STD, size=(in_channels, size, size))
    return image, np.array(label, dtype=np.int64)
