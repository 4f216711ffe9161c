# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Optim - AdamW with decoupled weight decay and a cosine learning-rate schedule.
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
from typing import Dict, Optional

import numpy as np

from .errors import UsageError
from .tensor import Tensor


@dataclass
class OptimState:
    """Moments of every trainable tensor plus the number of steps taken."""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __str__(self):
        return "OptimState step={} lr={} wd={} ({} tensors)".format(
            self.step, self.lr, self.weight_decay, len(self.m))


def decays(t: Tensor) -> bool:
    """Weight decay applies to matrices and expert pools, not to biases and gains."""
    return t.ndim >= 2


def adamw_step(params: Dict[str, Tensor], st: OptimState, lr: Optional[float] = None) -> OptimState:
    """One AdamW update of every tensor in params, in place.

    p <- p - lr * wd * p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    with bias-corrected moments m_hat and v_hat.

    Arguments:
        params: trainable tensors by name; each must carry a gradient.
        st: optimizer state; its moments and step are updated.
        lr: learning rate of this step, st.lr when omitted.
    """
    missing = [name for name, t in params.items() if t.grad is None]
    if missing:
        raise UsageError("No gradient for trainable tensor(s): " + ", ".join(missing))
    lr = st.lr if lr is None else lr
    st.step += 1
    correction1 = 1.0 - st.beta1 ** st.step
    correction2 = 1.0 - st.beta2 ** st.step
    for name, t in params.items():
        g = t.grad
        if name not in st.m:
            st.m[name] = np.zeros_like(t.data)
            st.v[name] = np.zeros_like(t.data)
        m = st.m[name]
        v = st.v[name]
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * g * g
        if st.weight_decay and decays(t):
            t.data *= 1.0 - lr * st.weight_decay
        t.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + st.eps)
    return st


def cosine_lr(base_lr: float, step: int, horizon: int) -> float:
    """Cosine decay from base_lr at step 0 to zero at step horizon, flat after."""
    progress = min(step, horizon) / float(horizon)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
