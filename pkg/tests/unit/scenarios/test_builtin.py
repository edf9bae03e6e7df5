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
from __future__ import annotations

import numpy as np
import numpy.testing as npt
import pytest

from bastate.analytic import compile_expr
from bastate.barriers import BarrierKind
from bastate.embedding import BasMode
from bastate.scenarios import (
    BUILTINS,
    NlqrMethod,
    PolePlacementMethod,
    UnknownScenarioError,
    builtin,
    linear2d,
    pendulum,
    robots,
)


def test_builtins_are_named_after_their_constructors() -> None:
    assert sorted(BUILTINS) == ["linear2d", "pendulum", "robots"]
    for name in BUILTINS:
        scenario = builtin(name)
        assert scenario.name == name
        assert scenario.system.name == name
        assert scenario.base is None


def test_builtin_raises_for_an_unknown_name() -> None:
    with pytest.raises(UnknownScenarioError, match="cartpole"):
        builtin("cartpole")


def test_linear2d() -> None:
    scenario = linear2d()
    assert scenario.bas is not None
    assert (scenario.bas.mode, scenario.bas.kind, scenario.bas.gammas) == (
        BasMode.SINGLE,
        BarrierKind.INVERSE,
        (2.0,),
    )
    assert isinstance(scenario.synthesis, PolePlacementMethod)
    assert scenario.synthesis.poles == (-3.0, -5.0)
    npt.assert_allclose(scenario.system.constraint_values([0.0, 0.0]), [7.75])
    npt.assert_allclose(scenario.system.drift_at([1.0, 1.0]), [-4.0, -1.0])
    assert scenario.initial_set.points(scenario.system).shape == (24, 2)
    assert scenario.horizon == 10.0


def test_pendulum() -> None:
    scenario = pendulum()
    assert scenario.bas is not None
    assert scenario.bas.mode is BasMode.FUSED
    assert scenario.bas.gammas == (5.0, 5.0)
    assert isinstance(scenario.synthesis, NlqrMethod)
    assert scenario.synthesis.degree == 4
    npt.assert_allclose(scenario.synthesis.cost.Q2, np.diag([1.0, 50.0, 0.5]))
    npt.assert_allclose(scenario.system.constraint_values([0.0, 0.0]), [3.0, 3.0])
    npt.assert_allclose(scenario.system.input_map_at([np.pi, 0.0]), [[0.0], [-1.0]])
    assert scenario.initial_set.points(scenario.system).shape == (6, 2)


def test_robots() -> None:
    scenario = robots()
    assert scenario.bas is not None
    assert scenario.bas.mode is BasMode.PER_CONSTRAINT
    assert scenario.bas.kind is BarrierKind.LOG
    assert scenario.bas.gammas == (15.0, 0.5, 0.5)
    assert scenario.state_dim == 7
    npt.assert_allclose(scenario.system.input_map_at(np.zeros(4)), np.eye(4))

    x0 = scenario.initial_set.points(scenario.system)
    npt.assert_allclose(x0, [[-2.0, 0.1, 2.0, -0.1]])
    npt.assert_allclose(
        scenario.system.constraint_values(np.zeros(4)),
        [4.0 - 0.01, 1.0 - 0.0625, 1.0 - 0.0625],
    )

    distance = compile_expr(scenario.observables["robot_distance"])
    npt.assert_allclose(distance(x0[0]), np.sqrt(4.0 + 0.04))
    npt.assert_allclose(distance(np.zeros(4)), 2.0)


@pytest.mark.parametrize("name, expected", [("linear2d", (1.0,)), ("pendulum", (1.0, 1.0))])
def test_builtin_gamma_overrides_every_rate(name: str, expected: tuple[float, ...]) -> None:
    bas = builtin(name, 1.0).bas
    assert bas is not None
    assert bas.gammas == expected


def test_robots_gamma_overrides_the_separation_rate() -> None:
    bas = builtin("robots", 3.0).bas
    assert bas is not None
    assert bas.gammas == (3.0, 0.5, 0.5)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_with_gamma_matches_the_builtin_override(name: str) -> None:
    bas = builtin(name).bas
    assert bas is not None
    assert bas.with_gamma(3.0) == builtin(name, 3.0).bas
