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
This module integrates closed-loop (embedded) dynamics and checks the resulting trajectories for
safety. Integration uses the adaptive Dormand-Prince 5(4) pair with dense output, and converts
barrier blow-up (a constraint margin reaching ``h_floor`` or a barrier state exceeding ``z_cap``)
into a :class:`TerminationEvent` rather than an error.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from absl import logging

from .analytic.expression import Expr, compile_expr
from .analytic.system import ControlAffineSystem, eval_field
from .barriers import BarrierOverflowError
from .embedding import EmbeddedSystem, UnsafeStateError
from .logging import write_scalars
from .types import ArrayLike, Controller
from .utils.misc import DEFAULTS, Err, Ok, Result, as_float_array

System = Union[ControlAffineSystem, EmbeddedSystem]
""" A system that can be simulated. """


class StepSizeUnderflowError(RuntimeError):
    """Raised when the adaptive step size falls below the resolution of the time variable."""


# Dormand-Prince 5(4) tableau, error weights and quartic dense output
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1 / 5, 0.0, 0.0, 0.0, 0.0],
        [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
        [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    ]
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array(
    [-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40]
)
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200 / 32700410799,
            -68118460800 / 10900136933,
            87487479700 / 32700410799,
        ],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [
            0.0,
            127303824393 / 49829197408,
            -318862633887 / 49829197408,
            701980252875 / 199316789632,
        ],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY, _MIN_FACTOR, _MAX_FACTOR = 0.9, 0.2, 5.0


@dataclass(frozen=True)
class SimulationConfig:
    """Settings of the integrator and of the safety verdicts."""

    sample_rate: float = DEFAULTS.SAMPLE_RATE
    """ The rate of the dense output, in samples per unit time. """

    h_floor: float = DEFAULTS.H_FLOOR
    """ Integration stops with an event once a constraint margin falls to this. """

    z_cap: float = DEFAULTS.Z_CAP
    """ Integration stops with an event once a barrier state exceeds this in magnitude. """

    max_step: float = np.inf
    """ The largest step the integrator may take. """

    convergence_threshold: float = DEFAULTS.CONVERGENCE_THRESHOLD
    """ A run has converged when the norm of its final state is below this. """

    def __post_init__(self) -> None:
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not self.h_floor >= 0:
            raise ValueError(f"h_floor must be non-negative, got {self.h_floor}")
        if not self.z_cap > 0:
            raise ValueError(f"z_cap must be positive, got {self.z_cap}")
        if not self.max_step > 0:
            raise ValueError(f"max_step must be positive, got {self.max_step}")


class EventKind(enum.Enum):
    """Why a simulation stopped before its horizon."""

    MARGIN = "margin"
    """ A constraint margin reached ``h_floor``. """

    BAS_BLOWUP = "bas_blowup"
    """ A barrier state exceeded ``z_cap``. """


@dataclass(frozen=True)
class TerminationEvent:
    """A barrier blow-up that ended a simulation."""

    time: float
    kind: EventKind
    index: int
    """ The constraint index for margin events, else the barrier-state index. """


@dataclass(frozen=True)
class IntegratorStats:
    """Work done by the integrator."""

    steps: int
    rejections: int
    evaluations: int


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A simulated closed-loop trajectory, sampled at strictly increasing times."""

    times: np.ndarray
    """ The sample times, shape [K]. """

    states: np.ndarray
    """ The (embedded) states, shape [K, N]. """

    controls: np.ndarray
    """ The inputs, shape [K, m]. """

    margins: np.ndarray
    """ The constraint values ``h_i(x)``, shape [K, p]. """

    stats: IntegratorStats
    event: Optional[TerminationEvent] = None

    def __post_init__(self) -> None:
        length = len(self.times)
        if not (len(self.states) == len(self.controls) == len(self.margins) == length):
            raise ValueError(
                f"Trajectory arrays must share their length, got {len(self.times)} times,"
                f" {len(self.states)} states, {len(self.controls)} controls and"
                f" {len(self.margins)} margins"
            )
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")

    @property
    def final_state(self) -> np.ndarray:
        """The last sampled state."""
        return self.states[-1]


def _base_dim(sys: System) -> int:
    return sys.base.state_dim if isinstance(sys, EmbeddedSystem) else sys.state_dim


def _event_margins(sys: System, y: np.ndarray, config: SimulationConfig) -> np.ndarray:
    margins = sys.constraint_values(y) - config.h_floor
    caps = config.z_cap - np.abs(y[..., _base_dim(sys) :])
    return np.concatenate([margins, caps], axis=-1)


def _initial_step(
    rhs: Callable[[np.ndarray], np.ndarray], y: np.ndarray, f: np.ndarray, tol: float
) -> float:
    scale = tol + np.abs(y) * tol
    d0, d1 = np.sqrt(np.mean((y / scale) ** 2)), np.sqrt(np.mean((f / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    try:
        f1 = rhs(y + h0 * f)
    except (UnsafeStateError, OverflowError, FloatingPointError):
        return h0
    d2 = np.sqrt(np.mean(((f1 - f) / scale) ** 2)) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** (1 / 5)
    return float(min(100 * h0, h1))


def _sample_times(horizon: float, sample_rate: float) -> np.ndarray:
    times = np.arange(int(np.floor(horizon * sample_rate + 1e-9)) + 1) / sample_rate
    if horizon - times[-1] > 1e-12:
        times = np.append(times, horizon)
    return times


def integrate(
    esys: System,
    controller: Controller,
    xbar0: ArrayLike,
    horizon: float,
    tol: float = 1e-8,
    config: SimulationConfig = SimulationConfig(),
) -> Trajectory:
    """
    Integrate the closed loop ``dx/dt = f(x) + g(x) controller(x)`` from ``xbar0``.

    :param esys: The (embedded) system.
    :param controller: The feedback, mapping states [..., N] to inputs [..., m].
    :param xbar0: The initial (embedded) state, shape [N].
    :param horizon: The final time.
    :param tol: The absolute and relative error tolerance.
    :param config: The integrator settings.
    :return: The trajectory, sampled at ``config.sample_rate``. If a barrier event stops the run,
        the trajectory ends at the event.
    :raise UnsafeStateError: If ``xbar0`` is not strictly safe.
    :raise StepSizeUnderflowError: If the step size underflows.
    """
    y = np.array(as_float_array(xbar0), dtype=np.float64)
    if y.shape != (esys.state_dim,):
        raise ValueError(f"Expected an initial state of shape ({esys.state_dim},), got {y.shape}")
    if not tol > 0 or not horizon > 0:
        raise ValueError(f"tol and horizon must be positive, got {tol} and {horizon}")
    if np.any(~(esys.constraint_values(y) > 0)):
        raise UnsafeStateError(f"Initial state {y} is not strictly safe")

    evaluations = 0

    def rhs(state: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        evaluations += 1
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            derivative = eval_field(esys, state, controller(state))
        if not np.all(np.isfinite(derivative)):
            raise FloatingPointError(f"Non-finite vector field at {state}")
        return derivative

    sample_times = _sample_times(horizon, config.sample_rate)
    times, states = [0.0], [y]
    next_sample = 1
    steps = rejections = 0
    event: Optional[TerminationEvent] = None

    t, f = 0.0, rhs(y)
    h = _initial_step(rhs, y, f, tol)
    K = np.empty((7, y.size))
    while t < horizon:
        h = min(h, horizon - t, config.max_step)
        if h < 10 * np.finfo(np.float64).eps * max(1.0, abs(t)):
            raise StepSizeUnderflowError(f"Step size {h:.3e} underflowed at t = {t}")

        K[0] = f
        try:
            for s in range(1, 6):
                K[s] = rhs(y + h * (_A[s, :s] @ K[:s]))
            y_new = y + h * (_B @ K[:6])
            f_new = rhs(y_new)
        except (UnsafeStateError, BarrierOverflowError, FloatingPointError):
            rejections += 1
            h *= _MIN_FACTOR
            continue
        K[6] = f_new

        scale = tol + np.maximum(np.abs(y), np.abs(y_new)) * tol
        error = np.sqrt(np.mean((h * (_E @ K) / scale) ** 2))
        if error > 1.0:
            rejections += 1
            logging.debug("Rejected step of size %.3e at t = %.6f (error %.3f)", h, t, error)
            h *= max(_MIN_FACTOR, _SAFETY * error ** (-1 / 5))
            continue
        steps += 1

        coefficients = K.T @ _P
        t_old, y_old, h_old = t, y, h

        def interpolate(time: float) -> np.ndarray:
            x = (time - t_old) / h_old
            return y_old + h_old * coefficients @ (x ** np.arange(1, 5))

        t_new = horizon if horizon - (t + h) < 1e-12 * max(1.0, horizon) else t + h
        end = t_new
        if np.min(_event_margins(esys, y_new, config), initial=np.inf) <= 0:
            low, high = t_old, t_new
            for _ in range(60):
                mid = (low + high) / 2
                if np.min(_event_margins(esys, interpolate(mid), config), initial=np.inf) <= 0:
                    high = mid
                else:
                    low = mid
            end = high
            y_end = interpolate(end) if end < t_new else y_new
            event_margins = _event_margins(esys, y_end, config)
            index = int(np.argmin(event_margins))
            p = esys.constraint_values(y_end).shape[-1]
            event = TerminationEvent(
                end,
                EventKind.MARGIN if index < p else EventKind.BAS_BLOWUP,
                index if index < p else index - p,
            )

        while next_sample < len(sample_times) and sample_times[next_sample] <= end:
            sample = sample_times[next_sample]
            if sample < times[-1] + 1e-12:
                next_sample += 1
                continue
            states.append(y_new if sample == t_new else interpolate(sample))
            times.append(float(sample))
            next_sample += 1

        if event is not None:
            if end > times[-1] + 1e-12:
                times.append(end)
                states.append(y_end)
            logging.info(
                "Stopped at t = %.6f: %s event on index %d", end, event.kind.value, event.index
            )
            break

        t, y, f = t_new, y_new, f_new
        h *= _MAX_FACTOR if error == 0 else min(_MAX_FACTOR, _SAFETY * error ** (-1 / 5))

    state_array = np.array(states)
    with np.errstate(over="ignore", invalid="ignore"):
        controls = controller(state_array)
    return Trajectory(
        times=np.array(times),
        states=state_array,
        controls=np.atleast_2d(controls).reshape(len(times), -1),
        margins=esys.constraint_values(state_array),
        stats=IntegratorStats(steps, rejections, evaluations),
        event=event,
    )


@dataclass(frozen=True)
class MinMargin:
    """The smallest constraint value over a trajectory."""

    constraint: str
    value: float
    time: float


@dataclass(frozen=True)
class SafetyReport:
    """The safety verdict of one trajectory."""

    safe: bool
    """ Whether every constraint stayed positive and no barrier event stopped the run. """

    min_margin: Optional[MinMargin]
    """ The smallest constraint value, or `None` for a system without constraints. """

    bas_drift_max: float
    """ The largest deviation of a barrier state from the recentred barrier of its state. """

    converged: bool
    """ Whether the run reached its horizon with a final state of norm below the threshold. """

    violation_time: Optional[float] = None
    """ The first time the run was unsafe, if it was. """

    observables: Mapping[str, float] = field(default_factory=dict)
    """ The minimum over the trajectory of each named observable. """


def monitor_safety(
    traj: Trajectory,
    esys: System,
    observables: Optional[Mapping[str, Expr]] = None,
    config: SimulationConfig = SimulationConfig(),
) -> SafetyReport:
    """
    :param traj: The trajectory.
    :param esys: The system it was simulated on.
    :param observables: Named expressions in the base states whose minima to report.
    :param config: The settings holding the convergence threshold.
    :return: The safety report.
    """
    violation_time: Optional[float] = None
    min_margin: Optional[MinMargin] = None
    if traj.margins.shape[-1] > 0:
        k, i = np.unravel_index(np.argmin(traj.margins), traj.margins.shape)
        names = (esys.base if isinstance(esys, EmbeddedSystem) else esys).constraint_names
        min_margin = MinMargin(names[i], float(traj.margins[k, i]), float(traj.times[k]))

        lowest = traj.margins.min(axis=-1)
        crossed = np.flatnonzero(lowest <= 0)
        if crossed.size:
            first = crossed[0]
            if first == 0:
                violation_time = float(traj.times[0])
            else:
                t0, t1 = traj.times[first - 1], traj.times[first]
                h0, h1 = lowest[first - 1], lowest[first]
                violation_time = float(t0 + (t1 - t0) * h0 / (h0 - h1))

    if traj.event is not None and violation_time is None:
        violation_time = traj.event.time
    safe = violation_time is None and traj.event is None

    drift = 0.0
    if isinstance(esys, EmbeddedSystem):
        inside = np.all(traj.margins > 0, axis=-1)
        if np.any(inside):
            drift = float(np.max(np.abs(esys.graph_deviation(traj.states[inside]))))

    n = _base_dim(esys)
    minima = {}
    for name, expr in (observables or {}).items():
        values = np.broadcast_to(compile_expr(expr)(traj.states[:, :n]), traj.times.shape)
        minima[name] = float(np.min(values))

    converged = traj.event is None and bool(
        np.linalg.norm(traj.final_state) < config.convergence_threshold
    )
    return SafetyReport(safe, min_margin, drift, converged, violation_time, minima)


@dataclass(frozen=True, eq=False)
class SimulationRecord:
    """One run of a batch."""

    initial_state: np.ndarray
    trajectory: Trajectory
    report: SafetyReport


def grid_points(lower: ArrayLike, upper: ArrayLike, num: Sequence[int]) -> np.ndarray:
    """
    :param lower: The lower corner of the box, shape [n].
    :param upper: The upper corner of the box, shape [n].
    :param num: The number of grid points per dimension.
    :return: The grid points, shape [prod(num), n], in row-major order.
    """
    lower, upper = as_float_array(lower), as_float_array(upper)
    if not lower.shape == upper.shape == (len(num),):
        raise ValueError(f"Grid bounds {lower}, {upper} do not match the counts {num}")
    axes = [np.linspace(lo, hi, k) for lo, hi, k in zip(lower, upper, num)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(num))


def batch_run(
    esys: System,
    controller: Controller,
    initial_states: ArrayLike,
    horizon: float,
    tol: float = 1e-8,
    config: SimulationConfig = SimulationConfig(),
    observables: Optional[Mapping[str, Expr]] = None,
    num_workers: int = 1,
) -> list[Result[SimulationRecord]]:
    """
    Simulate the closed loop from every initial state. A failing run is recorded as an
    :class:`~bastate.utils.Err` and does not stop the batch.

    :param esys: The (embedded) system.
    :param controller: The feedback.
    :param initial_states: Initial base states, shape [K, n]. Barrier states are initialized on
        the graph of the recentred barrier.
    :param horizon: The final time.
    :param tol: The integrator tolerance.
    :param config: The integrator settings.
    :param observables: Named expressions whose minima to report.
    :param num_workers: The number of threads. The default runs sequentially.
    :return: One result per initial state, in input order.
    """
    initial_states = as_float_array(initial_states).reshape(-1, _base_dim(esys))
    if num_workers < 1:
        raise ValueError(f"num_workers must be positive, got {num_workers}")

    def run(index: int) -> Result[SimulationRecord]:
        x0 = initial_states[index]
        try:
            xbar0 = esys.embed(x0) if isinstance(esys, EmbeddedSystem) else x0
            trajectory = integrate(esys, controller, xbar0, horizon, tol, config)
            report = monitor_safety(trajectory, esys, observables, config)
        except Exception as error:  # noqa: B902
            logging.warning("Run %d from %s failed: %r", index, x0, error)
            return Err(error)

        if not report.converged:
            logging.warning("Run %d from %s did not converge", index, x0)
        scalars = {
            "safety.bas_drift_max": report.bas_drift_max,
            "integrator.steps": trajectory.stats.steps,
            "integrator.rejections": trajectory.stats.rejections,
        }
        if report.min_margin is not None:
            scalars["safety.min_margin"] = report.min_margin.value
        write_scalars(esys.name, scalars, step=index)
        return Ok(SimulationRecord(x0, trajectory, report))

    if num_workers == 1:
        results = [run(i) for i in range(len(initial_states))]
    else:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            results = list(pool.map(run, range(len(initial_states))))

    logging.info(
        "Simulated %d runs of %s: %d safe",
        len(results),
        esys.name,
        sum(r.is_ok and r.unwrap().report.safe for r in results),
    )
    return results
