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
The built-in scenarios: a linear system with one circular obstacle, an inverted pendulum between
two obstacles, and two single-integrator robots swapping places around an obstacle.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..analytic.expression import Expr, Var, cos, sin, sqrt, tanh
from ..analytic.polynomial import PolyMap
from ..analytic.system import ControlAffineSystem
from ..barriers import BarrierKind
from ..embedding import BasMode
from .scenario import (
    BasConfig,
    InitialSet,
    NlqrMethod,
    OutputConfig,
    PlotSpec,
    PolePlacementMethod,
    Scenario,
)


class UnknownScenarioError(KeyError):
    """Raised for a scenario name that is not built in."""


ROBOT_SEPARATION = 0.1
""" The least distance between the two robots. """

OBSTACLE_RADIUS = 0.25
""" The radius of the obstacle at the world origin. """

ROBOT_TARGETS = ((1.0, 0.0), (-1.0, 0.0))
""" The world-frame targets of the two robots. The robot states are relative to these. """

ROBOT_STARTS = ((-1.0, 0.1), (1.0, -0.1))
""" The world-frame start positions of the two robots. """


def _quadratic(weights: list[float]) -> PolyMap:
    return PolyMap.from_quadratic_form(np.diag(weights))


def linear2d(gamma: Optional[float] = None) -> Scenario:
    """
    :param gamma: The barrier rate. Defaults to 2.
    :return: ``dx/dt = [[1, -5], [0, -1]] x + [0, 1]^T u`` avoiding the disc of radius 0.5 about
        ``(2, 2)``, with an inverse barrier state and poles at -3 and -5.
    """
    x1, x2 = Var(0), Var(1)
    system = ControlAffineSystem(
        drift=[x1 - 5 * x2, -x2],
        input_map=[[0.0], [1.0]],
        constraints=[(x1 - 2) ** 2 + (x2 - 2) ** 2 - 0.25],
        constraint_names=["obstacle"],
        name="linear2d",
    )
    return Scenario(
        name="linear2d",
        system=system,
        bas=BasConfig(BasMode.SINGLE, BarrierKind.INVERSE, [2.0 if gamma is None else gamma]),
        synthesis=PolePlacementMethod([-3.0, -5.0]),
        initial_set=InitialSet(lower=[-1.0, -1.0], upper=[3.0, 3.0], num=[5, 5]),
        horizon=10.0,
        output=OutputConfig(unsafe_circles=[(2.0, 2.0, 0.5)]),
        lyapunov_radius=0.3,
    )


def pendulum(gamma: Optional[float] = None) -> Scenario:
    """
    :param gamma: The barrier rate of both constraints. Defaults to 5.
    :return: A damped inverted pendulum with input gain ``cos(x1)``, kept out of the unit discs
        about ``(2, 0)`` and ``(-2, 0)`` by one fused inverse barrier state, under a degree-4
        NLQR feedback.
    """
    x1, x2 = Var(0), Var(1)
    gamma = 5.0 if gamma is None else gamma
    system = ControlAffineSystem(
        drift=[x2, sin(x1) - 0.5 * (tanh(10 * x2) + x2)],
        input_map=[[0.0], [cos(x1)]],
        constraints=[(x1 - 2) ** 2 + x2**2 - 1, (x1 + 2) ** 2 + x2**2 - 1],
        constraint_names=["right_disc", "left_disc"],
        name="pendulum",
    )
    return Scenario(
        name="pendulum",
        system=system,
        bas=BasConfig(BasMode.FUSED, BarrierKind.INVERSE, [gamma, gamma]),
        synthesis=NlqrMethod(_quadratic([1.0, 50.0, 0.5]), [[1.0]], degree=4),
        initial_set=InitialSet.of(
            [[3.5, 0.0], [-3.5, 0.0], [3.25, 0.0], [-3.25, 0.0], [3.1, 0.0], [-3.1, 0.0]]
        ),
        horizon=15.0,
        output=OutputConfig(unsafe_circles=[(2.0, 0.0, 1.0), (-2.0, 0.0, 1.0)]),
        lyapunov_radius=0.1,
    )


def _robot_observables(xi: tuple[Expr, Expr], xj: tuple[Expr, Expr]) -> dict[str, Expr]:
    (ti1, ti2), (tj1, tj2) = ROBOT_TARGETS
    pi1, pi2, pj1, pj2 = xi[0] + ti1, xi[1] + ti2, xj[0] + tj1, xj[1] + tj2
    return {
        "robot_distance": sqrt((pi1 - pj1) ** 2 + (pi2 - pj2) ** 2),
        "obstacle_clearance_i": sqrt(pi1**2 + pi2**2),
        "obstacle_clearance_j": sqrt(pj1**2 + pj2**2),
    }


def robots(gamma: Optional[float] = None) -> Scenario:
    """
    :param gamma: The barrier rate of the inter-robot constraint. Defaults to 15.
    :return: Two planar single integrators, with states relative to their targets, swapping
        places around an obstacle at the world origin. One log barrier state guards each of the
        separation and the two obstacle constraints, under a degree-4 NLQR feedback.
    """
    xi, xj = (Var(0), Var(1)), (Var(2), Var(3))
    (ti1, ti2), (tj1, tj2) = ROBOT_TARGETS
    pi1, pi2, pj1, pj2 = xi[0] + ti1, xi[1] + ti2, xj[0] + tj1, xj[1] + tj2
    system = ControlAffineSystem(
        drift=[0.0] * 4,
        input_map=np.eye(4).tolist(),
        constraints=[
            (pi1 - pj1) ** 2 + (pi2 - pj2) ** 2 - ROBOT_SEPARATION**2,
            pi1**2 + pi2**2 - OBSTACLE_RADIUS**2,
            pj1**2 + pj2**2 - OBSTACLE_RADIUS**2,
        ],
        constraint_names=["separation", "obstacle_i", "obstacle_j"],
        name="robots",
    )
    (si1, si2), (sj1, sj2) = ROBOT_STARTS
    x0 = [si1 - ti1, si2 - ti2, sj1 - tj1, sj2 - tj2]
    return Scenario(
        name="robots",
        system=system,
        bas=BasConfig(
            BasMode.PER_CONSTRAINT, BarrierKind.LOG, [15.0 if gamma is None else gamma, 0.5, 0.5]
        ),
        synthesis=NlqrMethod(_quadratic([1.0, 1.0, 1.0, 1.0, 0.001, 0.5, 0.5]), np.eye(4), 4),
        initial_set=InitialSet.of([x0]),
        horizon=20.0,
        output=OutputConfig(
            plots=[PlotSpec(0, 1, ROBOT_TARGETS[0]), PlotSpec(2, 3, ROBOT_TARGETS[1])],
            unsafe_circles=[(0.0, 0.0, OBSTACLE_RADIUS)],
        ),
        observables=_robot_observables(xi, xj),
        lyapunov_radius=0.05,
    )


BUILTINS: dict[str, Callable[[Optional[float]], Scenario]] = {
    "linear2d": linear2d,
    "pendulum": pendulum,
    "robots": robots,
}
""" The built-in scenario constructors by name. """


def builtin(name: str, gamma: Optional[float] = None) -> Scenario:
    """
    :param name: One of ``"linear2d"``, ``"pendulum"`` or ``"robots"``.
    :param gamma: Overrides the principal barrier rate of the scenario.
    :return: The scenario.
    :raise UnknownScenarioError: If ``name`` is not built in.
    """
    try:
        constructor = BUILTINS[name]
    except KeyError:
        raise UnknownScenarioError(
            f"Unknown scenario {name!r}, expected one of {sorted(BUILTINS)}"
        ) from None
    return constructor(gamma)
