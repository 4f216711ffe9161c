# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# CKA - Linear centered kernel alignment between layer representations.
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
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import pandas as pd

from ..backbones import ForwardTaps, ModelGraph
from ..errors import ConfigurationError, DimensionError
from ..tensor import Tensor

ZERO_VARIANCE_RTOL = 1e-12


def _as_matrix(x) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError("CKA needs (samples, features) matrices, got shape {}".format(data.shape))
    return data


def _centered(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=0, keepdims=True)


def linear_cka(X, Y) -> float:
    """||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F) with column-centred X and Y.

    An input without variance has no defined alignment; it scores 0 and
    a warning is logged.
    """
    X = _as_matrix(X)
    Y = _as_matrix(Y)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError("CKA inputs disagree on sample count: {} vs {}".format(X.shape, Y.shape))
    if X.shape[0] < 2:
        raise ConfigurationError("CKA needs at least 2 samples, got {}".format(X.shape[0]))
    Xc = _centered(X)
    Yc = _centered(Y)
    for raw, centred in ((X, Xc), (Y, Yc)):
        if np.linalg.norm(centred) <= ZERO_VARIANCE_RTOL * max(1.0, np.linalg.norm(raw)):
            logging.warning("CKA input without variance across samples; scoring it 0")
            return 0.0
    cross = np.linalg.norm(Yc.T @ Xc) ** 2
    value = cross / (np.linalg.norm(Xc.T @ Xc) * np.linalg.norm(Yc.T @ Yc))
    return float(min(max(value, 0.0), 1.0))


@dataclass
class CKAMatrix:
    """Pairwise linear CKA between labelled representations."""
    labels: List[str]
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.labels, columns=self.labels)


def cka_matrix_from_features(features: Dict[str, np.ndarray]) -> CKAMatrix:
    """CKA of every pair of (samples, features) matrices, in insertion order."""
    labels = list(features)
    n = len(labels)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            values[i, j] = values[j, i] = linear_cka(features[labels[i]], features[labels[j]])
    return CKAMatrix(labels, values)


def block_features(graph: ModelGraph, probes: Tensor) -> Dict[str, np.ndarray]:
    """Every block's post-adapter output, flattened per probe sample."""
    taps = ForwardTaps()
    graph.features(probes, taps)
    n = probes.shape[0]
    return {name: t.data.reshape(n, -1) for name, t in taps.features.items()}


def cka_matrix(graph: ModelGraph, probes: Tensor) -> CKAMatrix:
    if probes.shape[0] < 2:
        raise ConfigurationError("CKA needs at least 2 probe inputs, got {}".format(probes.shape[0]))
    return cka_matrix_from_features(block_features(graph, probes))
