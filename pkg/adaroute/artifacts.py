# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Artifacts - CSV, PGM and text outputs written atomically.
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
import os
import tempfile

import numpy as np
import pandas as pd

from .errors import DimensionError


def write_bytes(path: str, payload: bytes) -> None:
    """Writes to a temporary file next to path, then renames it into place.

    Readers see either the old file or the complete new one.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix="." + os.path.basename(path) + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logging.debug("Wrote " + path)


def write_text(path: str, text: str) -> None:
    write_bytes(path, text.encode("utf-8"))


def write_frame(frame: pd.DataFrame, path: str, index: bool = False) -> None:
    """CSV with full float precision, so re-runs compare byte for byte."""
    write_text(path, frame.to_csv(index=index, float_format="%.17g", lineterminator="\n"))


def matrix_frame(values: np.ndarray, rows, columns) -> pd.DataFrame:
    return pd.DataFrame(np.asarray(values), index=list(rows), columns=list(columns))


def pgm_bytes(values: np.ndarray) -> bytes:
    """8-bit binary PGM of a non-negative map, scaled so its maximum is 255."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError("A PGM image needs a 2-D map, got shape {}".format(values.shape))
    peak = values.max() if values.size else 0.0
    scaled = values / peak if peak > 0 else np.zeros_like(values)
    pixels = np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    return "P5\n{} {}\n255\n".format(width, height).encode("ascii") + pixels.tobytes()


def write_pgm(path: str, values: np.ndarray) -> None:
    write_bytes(path, pgm_bytes(values))
