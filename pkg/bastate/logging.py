# Copyright 2022 The Bastate Contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
This module contains logging utilities. Text logging goes through :mod:`absl.logging`; numerical
diagnostics (Riccati residuals, recursion conditioning, per-run safety margins) are additionally
written to TensorBoard when a summary writer has been set here.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Mapping, Optional

import tensorflow as tf

_TENSORBOARD_WRITER: Optional[tf.summary.SummaryWriter] = None
_RUN_NUMBER: int = 0


def set_tensorboard_writer(summary_writer: Optional[tf.summary.SummaryWriter]) -> None:
    """
    Set a :class:`~tf.summary.SummaryWriter` instance to use for logging
    to TensorBoard, or `None` to disable.

    :param summary_writer: optional summary writer instance.
    """
    global _TENSORBOARD_WRITER
    _TENSORBOARD_WRITER = summary_writer


def get_tensorboard_writer() -> Optional[tf.summary.SummaryWriter]:
    """
    :return: The :class:`~tf.summary.SummaryWriter` used for logging to TensorBoard, or `None`.
    """
    return _TENSORBOARD_WRITER


@contextmanager
def tensorboard_writer(summary_writer: Optional[tf.summary.SummaryWriter]) -> Iterator[None]:
    """
    A context manager for setting or overriding a TensorBoard summary writer inside a code block.

    :param summary_writer: optional summary writer instance.
    """
    old_writer = get_tensorboard_writer()
    set_tensorboard_writer(summary_writer)
    try:
        yield
    finally:
        set_tensorboard_writer(old_writer)


def set_run_number(run_number: int) -> None:
    """
    Set the index of the simulation run (within a batch) that summaries are logged against.

    :param run_number: current run number
    :raise ValueError: if run_number < 0
    """
    global _RUN_NUMBER
    if run_number < 0:
        raise ValueError(f"run_number must be non-negative (got {run_number})")
    _RUN_NUMBER = run_number


def get_run_number() -> int:
    """
    :return: The index of the simulation run that summaries are logged against.
    """
    return _RUN_NUMBER


@contextmanager
def run_number(run_number: int) -> Iterator[None]:
    """
    A context manager for setting or overriding the run number inside a code block.

    :param run_number: current run number
    """
    old_run_number = get_run_number()
    set_run_number(run_number)
    try:
        yield
    finally:
        set_run_number(old_run_number)


def write_scalars(prefix: str, values: Mapping[str, float], step: Optional[int] = None) -> None:
    """
    Write ``values`` as TensorBoard scalars named ``{prefix}.{key}``, if a writer is set. Does
    nothing otherwise.

    :param prefix: The name prefix of the scalars.
    :param values: The scalar values, by name.
    :param step: The step to log against. Defaults to the current run number.
    """
    summary_writer = get_tensorboard_writer()
    if summary_writer is None:
        return

    step = get_run_number() if step is None else step
    with summary_writer.as_default():
        for name, value in values.items():
            tf.summary.scalar(f"{prefix}.{name}", float(value), step=step)
