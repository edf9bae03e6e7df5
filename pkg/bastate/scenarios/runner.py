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
This module runs a :class:`~bastate.scenarios.Scenario`: it synthesizes the feedback, simulates
the closed loop from every initial state, and writes trajectory CSVs, a summary JSON and
optional SVG phase portraits.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from time import perf_counter
from typing import Any, Optional, Sequence, Union

import numpy as np
from absl import logging

from ..analytic.system import taylor_of_field
from ..simulation import SafetyReport, SimulationRecord, System, Trajectory, batch_run
from ..synthesis.hjb import (
    CostSpec,
    ValueSeries,
    control_from_value,
    solve_value_series,
)
from ..synthesis.linear import (
    FeedbackGain,
    LinearizedEmbedded,
    StaircaseDecomposition,
    closed_loop_eigenvalues,
    ctrb_decompose,
    linearize_numeric,
    pole_place,
    solve_care,
)
from ..types import Controller
from ..utils.misc import Err, Result
from .scenario import LqrMethod, NlqrMethod, PolePlacementMethod, Scenario
from .serialization import scenario_to_json

PathLike = Union[str, os.PathLike[str]]


def spectrum_to_json(eigenvalues: np.ndarray) -> list[list[float]]:
    """:return: Complex numbers as ``[re, im]`` pairs, sorted by real part."""
    ordered = sorted(np.asarray(eigenvalues, dtype=np.complex128), key=lambda z: (z.real, z.imag))
    return [[float(z.real), float(z.imag)] for z in ordered]


@dataclass(frozen=True, eq=False)
class Synthesis:
    """The feedback synthesized for a scenario, with the linear analysis it was built on."""

    system: System
    """ The (embedded) system the feedback is for. """

    linearization: LinearizedEmbedded
    decomposition: StaircaseDecomposition
    controller: Controller

    gain: FeedbackGain
    """ The linear part of the feedback. """

    eigenvalues: np.ndarray
    """ The closed-loop eigenvalues of the linearization. """

    value_series: Optional[ValueSeries] = None
    cost: Optional[CostSpec] = None

    def to_json(self) -> dict[str, Any]:
        """:return: The JSON form of the gain, spectra and, for NLQR, the value and controller."""
        data: dict[str, Any] = {
            "A": self.linearization.A.tolist(),
            "B": self.linearization.B.tolist(),
            "controllable_dim": self.decomposition.rank,
            "uncontrollable_eigenvalues": spectrum_to_json(
                self.decomposition.uncontrollable_eigenvalues
            ),
            "K": self.gain.to_json(),
            "closed_loop_eigenvalues": spectrum_to_json(self.eigenvalues),
        }
        if self.value_series is not None:
            data["value_series"] = self.value_series.to_json()
            data["P"] = self.value_series.P.tolist()
        to_json = getattr(self.controller, "to_json", None)
        if to_json is not None and self.value_series is not None:
            data["controller"] = to_json()
        return data


def synthesize(scenario: Scenario) -> Synthesis:
    """
    :param scenario: The scenario.
    :return: The feedback for the scenario's (embedded) system by its synthesis method.
    :raise ~bastate.synthesis.InfeasiblePlacementError: For an infeasible pole placement.
    :raise ~bastate.synthesis.NotStabilizableError: If the linearization is not stabilizable.
    """
    system = scenario.model
    linearization = linearize_numeric(system)
    A, B = linearization.A, linearization.B
    decomposition = ctrb_decompose(A, B)
    method = scenario.synthesis

    value_series, cost = None, None
    controller: Controller
    if isinstance(method, PolePlacementMethod):
        gain = pole_place(A, B, method.poles)
        controller = gain
    elif isinstance(method, LqrMethod):
        _, gain = solve_care(A, B, method.Q2, method.R)
        controller = gain
    else:
        assert isinstance(method, NlqrMethod)
        cost = method.cost
        f_poly, g_poly = taylor_of_field(system, method.degree - 1)
        value_series = solve_value_series((f_poly, g_poly), cost, method.degree)
        poly_controller = control_from_value(value_series, g_poly, cost.R)
        gain, controller = poly_controller.linear_gain(), poly_controller

    eigenvalues = closed_loop_eigenvalues(A, B, gain)
    logging.info(
        "Synthesized a %s feedback for %s: closed-loop spectrum %s",
        type(method).__name__,
        scenario.name,
        np.round(np.sort_complex(eigenvalues), 6),
    )
    return Synthesis(
        system, linearization, decomposition, controller, gain, eigenvalues, value_series, cost
    )


def simulate(
    scenario: Scenario,
    synthesis: Synthesis,
    tol: Optional[float] = None,
    num_workers: int = 1,
) -> tuple[np.ndarray, list[Result[SimulationRecord]]]:
    """
    :param scenario: The scenario.
    :param synthesis: Its synthesized feedback.
    :param tol: Overrides the integrator tolerance of the scenario.
    :param num_workers: The number of simulation threads.
    :return: The strictly safe initial states of the scenario, and one result per state.
    """
    initial_states = scenario.initial_set.points(scenario.system)
    results = batch_run(
        synthesis.system,
        synthesis.controller,
        initial_states,
        scenario.horizon,
        scenario.tol if tol is None else tol,
        scenario.simulation,
        scenario.observables,
        num_workers,
    )
    return initial_states, results


def report_to_json(report: SafetyReport, trajectory: Optional[Trajectory] = None) -> dict[str, Any]:
    """:return: The JSON form of a safety report, with the trajectory's event and stats."""
    data: dict[str, Any] = {
        "safe": report.safe,
        "converged": report.converged,
        "min_margin": None
        if report.min_margin is None
        else {
            "constraint": report.min_margin.constraint,
            "value": report.min_margin.value,
            "time": report.min_margin.time,
        },
        "bas_drift_max": report.bas_drift_max,
        "violation_time": report.violation_time,
        "observables": dict(report.observables),
    }
    if trajectory is not None:
        event = trajectory.event
        data["event"] = (
            None
            if event is None
            else {"time": event.time, "kind": event.kind.value, "index": event.index}
        )
        data["final_state"] = trajectory.final_state.tolist()
        data["integrator"] = {
            "steps": trajectory.stats.steps,
            "rejections": trajectory.stats.rejections,
            "evaluations": trajectory.stats.evaluations,
        }
    return data


def trajectory_columns(scenario: Scenario) -> list[str]:
    """:return: The CSV column names of the scenario's trajectories."""
    n, m = scenario.system.state_dim, scenario.system.input_dim
    q = scenario.state_dim - n
    return (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"z{i + 1}" for i in range(q)]
        + [f"u{i + 1}" for i in range(m)]
        + [f"h_{name}" for name in scenario.system.constraint_names]
    )


def write_trajectory_csv(scenario: Scenario, trajectory: Trajectory, path: PathLike) -> None:
    """Write one trajectory as CSV, at full double precision."""
    table = np.column_stack(
        [trajectory.times, trajectory.states, trajectory.controls, trajectory.margins]
    )
    np.savetxt(
        path,
        table,
        fmt="%.17g",
        delimiter=",",
        header=",".join(trajectory_columns(scenario)),
        comments="",
    )


@dataclass(frozen=True)
class Manifest:
    """The outcome of a scenario run."""

    files: Sequence[Path]
    """ Every file written, in order. """

    success: bool
    """ Whether synthesis succeeded and every run was safe and converged. """

    summary: dict[str, Any]
    """ The contents of the summary JSON. """


def run_scenario(
    scenario: Scenario,
    out_dir: PathLike,
    svg: Optional[bool] = None,
    num_workers: int = 1,
    simulate_runs: bool = True,
) -> Manifest:
    """
    Synthesize, simulate and monitor a scenario, writing its artifacts to ``out_dir``. Errors
    are recorded in the summary rather than raised.

    :param scenario: The scenario.
    :param out_dir: The output directory, created if missing.
    :param svg: Whether to draw phase portraits. Defaults to the scenario's output config.
    :param num_workers: The number of simulation threads.
    :param simulate_runs: Whether to simulate at all, or only synthesize.
    :return: The manifest of written files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    timings: dict[str, float] = {}
    summary: dict[str, Any] = {"scenario": scenario_to_json(scenario), "timings": timings}
    success = True

    try:
        start = perf_counter()
        synthesis = synthesize(scenario)
        timings["synthesis"] = perf_counter() - start
        summary["synthesis"] = synthesis.to_json()

        if simulate_runs:
            start = perf_counter()
            initial_states, results = simulate(scenario, synthesis, num_workers=num_workers)
            timings["simulation"] = perf_counter() - start
            summary["dropped_initial_states"] = scenario.initial_set.num_dropped(scenario.system)

            runs, records = [], []
            for i, (x0, result) in enumerate(zip(initial_states, results)):
                run: dict[str, Any] = {"index": i, "initial_state": x0.tolist()}
                if isinstance(result, Err):
                    run["error"] = repr(result.error)
                    success = False
                else:
                    record = result.unwrap()
                    path = out / f"{scenario.name}_run{i:03d}.csv"
                    write_trajectory_csv(scenario, record.trajectory, path)
                    files.append(path)
                    report = report_to_json(record.report, record.trajectory)
                    run.update(file=path.name, report=report)
                    records.append(record)
                    success = success and record.report.safe and record.report.converged
                runs.append(run)
            summary["runs"] = runs

            if scenario.output.svg if svg is None else svg:
                from .plotting import plot_phase_portraits

                start = perf_counter()
                files.extend(plot_phase_portraits(scenario, records, out))
                timings["plotting"] = perf_counter() - start
    except Exception as error:  # noqa: B902
        logging.error("Scenario %s failed: %r", scenario.name, error)
        summary["error"] = {"type": type(error).__name__, "message": str(error)}
        success = False

    summary["all_safe_and_converged"] = success
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    files.append(summary_path)
    logging.info("Wrote %d files for %s to %s", len(files), scenario.name, out)
    return Manifest(files, success, summary)


def sweep_gamma(
    scenario: Scenario,
    values: Sequence[float],
    out_dir: Optional[PathLike] = None,
    num_workers: int = 1,
) -> list[dict[str, Any]]:
    """
    Re-synthesize and simulate ``scenario`` with its principal barrier rate set to each of
    ``values``, as :meth:`~bastate.scenarios.BasConfig.with_gamma` does.

    :param scenario: A scenario with barrier states.
    :param values: The rates.
    :param out_dir: If given, ``sweep.json`` is written there.
    :param num_workers: The number of simulation threads.
    :return: One entry per rate, with the closed-loop spectrum and run counts.
    :raise ValueError: If the scenario has no barrier states.
    """
    if scenario.bas is None:
        raise ValueError(f"Scenario {scenario.name} has no barrier states to sweep")

    entries = []
    for gamma in values:
        entry: dict[str, Any] = {"gamma": float(gamma)}
        try:
            variant = replace(scenario, bas=scenario.bas.with_gamma(gamma))
            synthesis = synthesize(variant)
            _, results = simulate(variant, synthesis, num_workers=num_workers)
            reports = [r.unwrap().report for r in results if r.is_ok]
            entry.update(
                closed_loop_eigenvalues=spectrum_to_json(synthesis.eigenvalues),
                uncontrollable_eigenvalues=spectrum_to_json(
                    synthesis.decomposition.uncontrollable_eigenvalues
                ),
                num_runs=len(results),
                num_failed=len(results) - len(reports),
                num_safe=sum(r.safe for r in reports),
                num_converged=sum(r.converged for r in reports),
            )
        except Exception as error:  # noqa: B902
            logging.warning("Sweep of %s at gamma = %s failed: %r", scenario.name, gamma, error)
            entry["error"] = {"type": type(error).__name__, "message": str(error)}
        entries.append(entry)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(
            json.dumps({"scenario": scenario.name, "sweep": entries}, indent=2)
        )
    return entries
