# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Model - Adapter-only fine-tuning driven as a MESA model.
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
from typing import Optional

import numpy as np
import pandas as pd
from mesa import Model
from mesa.datacollection import DataCollector

from .artifacts import write_frame
from .backbones import HeadKind, ModelGraph, build_backbone, freeze_check, insert_adapters, snapshot
from .config import RunConfig
from .errors import DimensionError, NumericalError
from .optim import OptimState, adamw_step, cosine_lr
from .tasks import TaskBatch, TaskKind, TaskStream, make_task, parse_task_kind
from .tensor import Tensor, backward, cross_entropy


def head_for_task(kind) -> HeadKind:
    if parse_task_kind(kind).is_segmentation:
        return HeadKind.SEGMENTATION
    return HeadKind.CLASSIFICATION


def build_model(config: RunConfig) -> ModelGraph:
    """The backbone, head and (unless disabled) adapters a config describes."""
    config.validate()
    graph = build_backbone(config.backbone, config.seed, config.task.n_classes,
                           head_for_task(config.task.kind))
    if config.adapter.enabled:
        insert_adapters(graph, config.adapter, config.seed)
    return graph


def make_stream(config: RunConfig) -> TaskStream:
    t = config.task
    return make_task(t.kind, t.n_classes, t.image_size, config.seed,
                     config.backbone.in_channels, t.train_pool)


def task_loss(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Cross-entropy; per-pixel mean when logits are dense (B, K, H, W)."""
    if logits.ndim == 4:
        b, k, h, w = logits.shape
        return cross_entropy(logits.transpose(0, 2, 3, 1).reshape(b * h * w, k), targets.reshape(-1))
    return cross_entropy(logits, targets)


def predict(logits: Tensor) -> np.ndarray:
    return np.argmax(logits.data, axis=1)


def miou(pred: np.ndarray, target: np.ndarray, n_classes: int) -> float:
    """Mean intersection over union, skipping classes absent from both maps."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError("Prediction {} and target {} differ in shape".format(pred.shape, target.shape))
    for labels in (pred, target):
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise DimensionError("Class index outside [0, {})".format(n_classes))
    ious = []
    for c in range(n_classes):
        p = pred == c
        t = target == c
        union = np.count_nonzero(p | t)
        if union:
            ious.append(np.count_nonzero(p & t) / union)
    return float(np.mean(ious)) if ious else 1.0


def accuracy(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError("Prediction {} and target {} differ in shape".format(pred.shape, target.shape))
    return float(np.mean(pred == target)) if pred.size else 1.0


def score(graph: ModelGraph, batch: TaskBatch, kind) -> float:
    """mIoU for segmentation, top-1 accuracy for classification."""
    pred = predict(graph.forward(batch.inputs))
    if parse_task_kind(kind) is TaskKind.BLOB_SEG:
        return miou(pred, batch.targets, graph.n_classes)
    return accuracy(pred, batch.targets)


class FineTuneModel(Model):
    """One fine-tuning run; every step() is one AdamW update of the trainable tensors.

    Row s of the collected data describes the model after s updates: the
    loss of the training batch for step s, the latest held-out metric and
    the learning rate the next update uses.

    Arguments:
        graph: model with its freeze mask already set.
        config: run configuration; task, train and seed are used.
        state: optimizer state to resume from, fresh when omitted.
        final_step: step count at which the metric is always refreshed.
    """

    def __init__(self, graph: ModelGraph, config: RunConfig, state: Optional[OptimState] = None,
                 final_step: Optional[int] = None):
        super().__init__()
        hyper = config.train
        self.graph = graph
        self.config = config
        self.kind = parse_task_kind(config.task.kind)
        self.stream = make_stream(config)
        self.optim = state if state is not None else OptimState(
            hyper.lr, hyper.beta1, hyper.beta2, hyper.eps, hyper.weight_decay)
        self.final_step = final_step
        self.eval_data = self.stream.eval_batch(config.task.eval_size)
        self.freeze_snapshot = snapshot(graph)

        self.datacollector = DataCollector(model_reporters={"step": "train_step",
                                                            "loss": "loss",
                                                            "metric": "metric",
                                                            "lr": "lr"})

        logging.info("-- Started AdaRoute fine-tuning --")
        logging.info("Model: " + str(graph))
        logging.info("Task: " + str(self.stream))
        logging.info("Trainable scalars: " + str(graph.count_trainable(include_head=True)))
        logging.info("Starting at step: " + str(self.optim.step))
        logging.info("---------------------------------")

        self.train_step = self.optim.step
        self.lr = self.scheduled_lr()
        self._pending = self.batch_loss(self.train_step)
        self.loss = self._pending.item()
        self.metric = self.evaluate()
        self.datacollector.collect(self)

    def scheduled_lr(self) -> float:
        hyper = self.config.train
        return cosine_lr(hyper.lr, self.optim.step, hyper.horizon)

    def batch_loss(self, step: int) -> Tensor:
        batch = self.stream.train_batch(step, self.config.train.batch_size)
        loss = task_loss(self.graph.forward(batch.inputs), batch.targets)
        if not np.isfinite(loss.data).all():
            raise NumericalError("Training diverged: loss is {} at step {}".format(loss.item(), step))
        return loss

    def evaluate(self) -> float:
        return score(self.graph, self.eval_data, self.kind)

    def step(self):
        params = self.graph.trainable_tensors()
        self.graph.zero_grad()
        backward(self._pending)
        for name, t in params.items():
            # Router weights of statically routed sites never reach the loss.
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        adamw_step(params, self.optim, self.lr)

        self.train_step = self.optim.step
        self.lr = self.scheduled_lr()
        self._pending = self.batch_loss(self.train_step)
        self.loss = self._pending.item()
        if self.train_step % self.config.train.eval_every == 0 or self.train_step == self.final_step:
            self.metric = self.evaluate()
        self.datacollector.collect(self)
        logging.debug("Step " + str(self.train_step) + " loss " + str(self.loss))


@dataclass
class TrainReport:
    """Per-step records of a run and the state needed to continue it."""
    frame: pd.DataFrame
    state: OptimState
    frozen_unchanged: bool

    @property
    def losses(self) -> np.ndarray:
        return self.frame["loss"].to_numpy()

    @property
    def metrics(self) -> np.ndarray:
        return self.frame["metric"].to_numpy()

    @property
    def final_loss(self) -> float:
        return float(self.frame["loss"].iloc[-1])

    @property
    def final_metric(self) -> float:
        return float(self.frame["metric"].iloc[-1])

    def to_csv(self, path: str) -> None:
        write_frame(self.frame, path)


def train(graph: ModelGraph, config: RunConfig, steps: Optional[int] = None,
          state: Optional[OptimState] = None) -> TrainReport:
    """Fine-tunes the trainable tensors of graph for `steps` updates.

    Resuming from `state` continues the data stream and learning-rate
    schedule where the earlier run stopped.
    """
    steps = config.train.steps if steps is None else steps
    start = state.step if state is not None else 0
    model = FineTuneModel(graph, config, state, final_step=start + steps)
    for _ in range(steps):
        model.step()
    frame = model.datacollector.get_model_vars_dataframe().reset_index(drop=True)
    frozen_unchanged = freeze_check(graph, model.freeze_snapshot)
    logging.info("Finished at step " + str(model.train_step) + " with loss " + str(model.loss)
                 + " and metric " + str(model.metric))
    return TrainReport(frame, model.optim, frozen_unchanged)
