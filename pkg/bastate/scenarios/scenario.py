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
This module contains the :class:`Scenario` configuration: a system, its barrier states, a
synthesis method, and the settings of the simulations and artifacts of a run.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from absl import logging

from ..analytic.expression import Expr
from ..analytic.polynomial import PolyMap
from ..analytic.system import ControlAffineSystem
from ..barriers import BarrierKind
from ..embedding import BasBlock, BasMode, EmbeddedSystem, UnsafeStateError, augment
from ..simulation import SimulationConfig, System, grid_points
from ..synthesis.hjb import CostSpec
from ..types import ArrayLike
from ..utils.misc import DEFAULTS, as_float_array

Problem = tuple[str, str]
""" A validation problem: a JSON pointer into the scenario, and a message. """


class ScenarioValidationError(ValueError):
    """Raised when a scenario is inconsistent. Lists every problem found."""

    def __init__(self, problems: Sequence[Problem]):
        self.problems = list(problems)
        super().__init__(
            "Invalid scenario:\n"
            + "\n".join(f"  {pointer or '/'}: {msg}" for pointer, msg in problems)
        )


@dataclass(frozen=True)
class PolePlacementMethod:
    """Linear feedback placing the poles of the controllable subsystem."""

    poles: Sequence[complex]

    def __post_init__(self) -> None:
        object.__setattr__(self, "poles", tuple(complex(p) for p in self.poles))


@dataclass(frozen=True, eq=False)
class LqrMethod:
    """Linear-quadratic regulator on the linearization at the origin."""

    Q2: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "Q2", np.atleast_2d(as_float_array(self.Q2)))
        object.__setattr__(self, "R", np.atleast_2d(as_float_array(self.R)))


@dataclass(frozen=True, eq=False)
class NlqrMethod:
    """Polynomial feedback from the power-series solution of the HJB equation."""

    Q: PolyMap
    R: np.ndarray
    degree: int = DEFAULTS.JET_DEGREE

    def __post_init__(self) -> None:
        object.__setattr__(self, "R", np.atleast_2d(as_float_array(self.R)))

    @property
    def cost(self) -> CostSpec:
        """The running cost."""
        return CostSpec(self.Q, self.R)


SynthesisMethod = Union[PolePlacementMethod, LqrMethod, NlqrMethod]
""" The supported synthesis methods. """


@dataclass(frozen=True)
class BasConfig:
    """The barrier states to embed: one barrier kind, one rate per guarded constraint."""

    mode: BasMode
    kind: BarrierKind
    gammas: Sequence[float]
    constraints: Optional[Sequence[int]] = None
    """ The guarded constraint indices. Defaults to all constraints. """

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", BasMode(self.mode))
        object.__setattr__(self, "kind", BarrierKind(self.kind))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if self.constraints is not None:
            object.__setattr__(self, "constraints", tuple(int(i) for i in self.constraints))

    def block(self, sys: ControlAffineSystem) -> BasBlock:
        """:return: The BaS block for ``sys``."""
        return BasBlock.for_system(sys, self.mode, self.kind, self.gammas, self.constraints)

    def z_dim(self, sys: ControlAffineSystem) -> int:
        """:return: The number of barrier states this config adds to ``sys``."""
        if self.mode is not BasMode.PER_CONSTRAINT:
            return 1
        return sys.num_constraints if self.constraints is None else len(self.constraints)

    def with_gamma(self, gamma: float) -> BasConfig:
        """
        :return: This config with its principal (first) rate set to ``gamma``. Rates equal to the
            principal one follow it, so shared rates stay shared.
        """
        principal = self.gammas[0]
        return replace(self, gammas=tuple(gamma if g == principal else g for g in self.gammas))


@dataclass(frozen=True, eq=False)
class InitialSet:
    """
    Initial base states, either listed or as a grid. Listed states must be strictly safe, while
    the points of a grid that are not are dropped when the set is resolved against a system.
    """

    states: Optional[np.ndarray] = None
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    num: Optional[Sequence[int]] = None

    def __post_init__(self) -> None:
        is_grid = self.lower is not None and self.upper is not None and self.num is not None
        if (self.states is None) == (not is_grid):
            raise ValueError("An initial set is either a list of states or a grid, not both")
        if self.states is not None:
            object.__setattr__(self, "states", np.atleast_2d(as_float_array(self.states)))

    @classmethod
    def of(cls, states: ArrayLike) -> InitialSet:
        """:return: The set of the listed states."""
        return cls(states=as_float_array(states))

    def _classify(self, sys: ControlAffineSystem) -> tuple[np.ndarray, np.ndarray]:
        if self.states is not None:
            points = self.states
        else:
            assert self.lower is not None and self.upper is not None and self.num is not None
            points = grid_points(self.lower, self.upper, self.num)
        if points.size == 0:
            return np.zeros((0, sys.state_dim)), np.zeros(0, dtype=bool)
        if points.shape[-1] != sys.state_dim:
            raise ValueError(
                f"Initial states have dimension {points.shape[-1]}, expected {sys.state_dim}"
            )
        return points, np.all(sys.constraint_values(points) > 0, axis=-1)

    def points(self, sys: ControlAffineSystem) -> np.ndarray:
        """
        :param sys: The system.
        :return: The strictly safe states of the set, shape [K, n].
        :raise ValueError: If the states do not have the system's dimension.
        :raise UnsafeStateError: If a listed state is not strictly safe.
        """
        points, safe = self._classify(sys)
        if not np.all(safe):
            if self.states is not None:
                raise UnsafeStateError(
                    f"Initial states {points[~safe].tolist()} are not strictly safe"
                )
            logging.info("Dropped %d grid points outside the safe set", int(np.sum(~safe)))
        return points[safe]

    def num_dropped(self, sys: ControlAffineSystem) -> int:
        """:return: The number of grid points outside the safe set of ``sys``."""
        if self.states is not None:
            return 0
        _, safe = self._classify(sys)
        return int(np.sum(~safe))


@dataclass(frozen=True)
class PlotSpec:
    """A phase-plane projection: two state indices, plotted with an offset."""

    x: int
    y: int
    offset: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class OutputConfig:
    """The artifacts of a run besides the CSV and JSON files."""

    svg: bool = False
    plots: Sequence[PlotSpec] = (PlotSpec(0, 1),)
    unsafe_circles: Sequence[tuple[float, float, float]] = ()
    """ Circles ``(cx, cy, r)`` drawn as unsafe regions. """


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete synthesis and simulation experiment."""

    name: str
    system: ControlAffineSystem
    bas: Optional[BasConfig]
    synthesis: SynthesisMethod
    initial_set: InitialSet
    horizon: float
    tol: float = 1e-8
    simulation: SimulationConfig = SimulationConfig()
    output: OutputConfig = OutputConfig()
    observables: Mapping[str, Expr] = field(default_factory=dict)
    lyapunov_radius: float = DEFAULTS.LYAPUNOV_RADIUS
    base: Optional[str] = None
    """ The name of the built-in scenario this one was derived from, if any. """

    def __post_init__(self) -> None:
        problems = validate(self)
        if problems:
            raise ScenarioValidationError(problems)

    @property
    def state_dim(self) -> int:
        """The dimension of the synthesis state, including barrier states."""
        return self.system.state_dim + (self.bas.z_dim(self.system) if self.bas else 0)

    @cached_property
    def model(self) -> System:
        """The system that is synthesized for and simulated: embedded if there are barriers."""
        if self.bas is None:
            return self.system
        return augment(self.system, self.bas.block(self.system))

    def embedded(self) -> Optional[EmbeddedSystem]:
        """:return: The embedded system, or `None` without barrier states."""
        model = self.model
        return model if isinstance(model, EmbeddedSystem) else None


def validate(scenario: Scenario) -> list[Problem]:
    """
    :param scenario: The scenario.
    :return: Every cross-section inconsistency, with a JSON pointer to its section.
    """
    problems: list[Problem] = []
    sys = scenario.system

    if scenario.bas is not None:
        try:
            scenario.bas.block(sys)
        except ValueError as error:
            problems.append(("/bas", str(error)))

    dim = scenario.state_dim
    method = scenario.synthesis
    if isinstance(method, (LqrMethod, NlqrMethod)):
        if method.R.shape != (sys.input_dim, sys.input_dim):
            expected = (sys.input_dim, sys.input_dim)
            problems.append(("/synthesis/R", f"R has shape {method.R.shape}, expected {expected}"))
    if isinstance(method, LqrMethod):
        if method.Q2.shape != (dim, dim):
            msg = f"Q2 has shape {method.Q2.shape}, expected {(dim, dim)}"
            problems.append(("/synthesis/Q2", msg))
        elif np.min(np.linalg.eigvalsh((method.Q2 + method.Q2.T) / 2)) < -1e-12:
            problems.append(("/synthesis/Q2", "Q2 must be positive semi-definite"))
        if method.R.shape == (sys.input_dim, sys.input_dim):
            if np.min(np.linalg.eigvalsh((method.R + method.R.T) / 2)) <= 0:
                problems.append(("/synthesis/R", "R must be positive definite"))
    if isinstance(method, NlqrMethod):
        if method.degree < 2:
            msg = f"degree must be at least 2, got {method.degree}"
            problems.append(("/synthesis/degree", msg))
        if method.Q.num_vars != dim:
            msg = f"Q has {method.Q.num_vars} variables, expected {dim}"
            problems.append(("/synthesis/Q", msg))
        else:
            try:
                method.cost
            except ValueError as error:
                problems.append(("/synthesis", str(error)))

    if not scenario.horizon > 0:
        msg = f"horizon must be positive, got {scenario.horizon}"
        problems.append(("/simulation/horizon", msg))
    if not scenario.tol > 0:
        problems.append(("/simulation/tol", f"tol must be positive, got {scenario.tol}"))
    if scenario.initial_set.states is not None and scenario.initial_set.states.size:
        if scenario.initial_set.states.shape[-1] != sys.state_dim:
            problems.append(
                (
                    "/simulation/initial_states",
                    f"Initial states must have dimension {sys.state_dim}",
                )
            )
    for plot in scenario.output.plots:
        if not (0 <= plot.x < dim and 0 <= plot.y < dim):
            problems.append(("/output/plots", f"Plot indices {plot.x}, {plot.y} are out of range"))
    for name, expr in scenario.observables.items():
        if expr.variables() and max(expr.variables()) >= sys.state_dim:
            problems.append((f"/observables/{name}", "Observables may only use the base states"))
    if not scenario.lyapunov_radius > 0:
        problems.append(("/lyapunov_radius", "lyapunov_radius must be positive"))
    return problems
