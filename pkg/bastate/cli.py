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
The ``bastate`` command line::

    bastate synthesize <scenario> [--out DIR]
    bastate simulate <scenario> [--out DIR] [--svg]
    bastate verify <scenario>
    bastate sweep-gamma <scenario> --values 0.5,1,2,5 [--out DIR]

``<scenario>`` is a JSON scenario file or the name of a built-in scenario. The exit status is 0
exactly when every requested run is safe and converged (``verify``: every check passes).
"""
from __future__ import annotations

import contextlib
import json
from typing import Callable, Iterator, Sequence

import tensorflow as tf
from absl import app, flags, logging

from .logging import tensorboard_writer
from .scenarios import (
    Scenario,
    ScenarioValidationError,
    UnknownScenarioError,
    resolve_scenario,
    run_scenario,
    sweep_gamma,
    verify_scenario,
)

FLAGS = flags.FLAGS

flags.DEFINE_string("out", "bastate_out", "The directory to write artifacts to.")
flags.DEFINE_boolean("svg", False, "Whether to draw phase portraits as SVG.")
flags.DEFINE_list("values", [], "The principal barrier rates of sweep-gamma, comma separated.")
flags.DEFINE_integer("num_workers", 1, "The number of simulation threads.", lower_bound=1)
flags.DEFINE_string("tensorboard_dir", None, "If set, write TensorBoard scalars to this directory.")

EXIT_FAILURE = 1
""" Some run was unsafe, unconverged or failed, or some check failed. """

EXIT_USAGE = 2
""" The command line or the scenario was invalid. """


def _synthesize(scenario: Scenario) -> int:
    manifest = run_scenario(scenario, FLAGS.out, svg=False, simulate_runs=False)
    print(json.dumps(manifest.summary.get("synthesis", manifest.summary.get("error")), indent=2))
    return 0 if "error" not in manifest.summary else EXIT_FAILURE


def _simulate(scenario: Scenario) -> int:
    svg = True if FLAGS.svg else None
    manifest = run_scenario(scenario, FLAGS.out, svg=svg, num_workers=FLAGS.num_workers)
    for path in manifest.files:
        print(path)
    return 0 if manifest.success else EXIT_FAILURE


def _verify(scenario: Scenario) -> int:
    report = verify_scenario(scenario)
    for check in report.checks:
        print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.detail}")
    return 0 if report.passed else EXIT_FAILURE


def _sweep_gamma(scenario: Scenario) -> int:
    if not FLAGS.values:
        raise app.UsageError("sweep-gamma needs --values")
    values = [float(v) for v in FLAGS.values]
    entries = sweep_gamma(scenario, values, FLAGS.out, num_workers=FLAGS.num_workers)
    print(json.dumps(entries, indent=2))
    ok = all(
        "error" not in e and e["num_safe"] == e["num_converged"] == e["num_runs"] for e in entries
    )
    return 0 if ok else EXIT_FAILURE


COMMANDS: dict[str, Callable[[Scenario], int]] = {
    "synthesize": _synthesize,
    "simulate": _simulate,
    "verify": _verify,
    "sweep-gamma": _sweep_gamma,
}


@contextlib.contextmanager
def _summaries() -> Iterator[None]:
    if FLAGS.tensorboard_dir is None:
        yield
        return
    with tensorboard_writer(tf.summary.create_file_writer(FLAGS.tensorboard_dir)):
        yield


def main(argv: Sequence[str]) -> int:
    """
    :param argv: The program name, the command and the scenario, with flags already parsed.
    :return: The exit status.
    """
    if len(argv) != 3 or argv[1] not in COMMANDS:
        raise app.UsageError(f"Usage: bastate {{{'|'.join(COMMANDS)}}} <scenario> [flags]")
    command, name = argv[1], argv[2]
    try:
        scenario = resolve_scenario(name)
    except (ScenarioValidationError, UnknownScenarioError) as error:
        logging.error("Could not load scenario %s: %s", name, error)
        return EXIT_USAGE
    with _summaries():
        return COMMANDS[command](scenario)


def run_cli(argv: Sequence[str]) -> int:
    """Parse ``argv`` (flags included) and run the command without exiting."""
    return main(FLAGS(list(argv)))


def run() -> None:
    """The console entry point."""
    app.run(main)
