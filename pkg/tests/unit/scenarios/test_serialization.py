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

import json
from pathlib import Path
from typing import Any

import numpy as np
import numpy.testing as npt
import pytest

from bastate.analytic import Var, to_sexpr
from bastate.scenarios import (
    BUILTINS,
    LqrMethod,
    ScenarioValidationError,
    UnknownScenarioError,
    builtin,
    load_scenario,
    resolve_scenario,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
    synthesize,
)
from bastate.scenarios.serialization import complex_from_json, complex_to_json


def _through_json(data: dict[str, Any]) -> dict[str, Any]:
    return json.loads(json.dumps(data))


def _pointers(error: ScenarioValidationError) -> list[str]:
    return [pointer for pointer, _ in error.problems]


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_scenario_from_json_rebuilds_builtins(name: str) -> None:
    data = _through_json(scenario_to_json(builtin(name)))
    rebuilt = scenario_from_json(data)
    assert scenario_to_json(rebuilt) == data
    assert rebuilt.system.drift == builtin(name).system.drift


def test_scenario_from_json_raises_for_an_unsafe_origin() -> None:
    data = _through_json(scenario_to_json(builtin("linear2d")))
    data["system"]["constraints"] = [to_sexpr(Var(0) ** 2 - 1)]
    with pytest.raises(ScenarioValidationError, match="strictly safe") as info:
        scenario_from_json(data)
    assert _pointers(info.value) == ["/system"]


def test_scenario_from_json_raises_for_missing_fields() -> None:
    data = _through_json(scenario_to_json(builtin("linear2d")))
    del data["synthesis"]
    del data["simulation"]["horizon"]
    with pytest.raises(ScenarioValidationError) as info:
        scenario_from_json(data)
    assert _pointers(info.value) == ["/synthesis", "/simulation"]
    assert "missing field 'synthesis'" in str(info.value)


def test_scenario_from_json_reports_cross_section_problems() -> None:
    data = _through_json(scenario_to_json(builtin("linear2d")))
    data["simulation"]["horizon"] = -1.0
    data["lyapunov_radius"] = 0.0
    with pytest.raises(ScenarioValidationError) as info:
        scenario_from_json(data)
    assert _pointers(info.value) == ["/simulation/horizon", "/lyapunov_radius"]


def test_scenario_from_json_raises_for_an_unknown_synthesis_method() -> None:
    data = _through_json(scenario_to_json(builtin("linear2d")))
    data["synthesis"] = {"method": "mpc"}
    with pytest.raises(ScenarioValidationError, match="mpc"):
        scenario_from_json(data)


def test_scenario_from_json_raises_for_a_non_object() -> None:
    with pytest.raises(ScenarioValidationError):
        scenario_from_json([])  # type: ignore[arg-type]


def test_scenario_from_json_overrides_a_builtin_base() -> None:
    scenario = scenario_from_json({"base": "linear2d", "bas": {"gammas": [1.0]}})
    assert scenario.base == "linear2d"
    assert scenario.name == "linear2d"
    assert scenario.bas is not None
    assert scenario.bas.gammas == (1.0,)
    assert scenario.horizon == 10.0
    assert scenario_to_json(scenario)["base"] == "linear2d"
    npt.assert_allclose(
        synthesize(scenario).linearization.A[2], [8 / 60.0625, -20 / 60.0625, -1.0], rtol=1e-12
    )


def test_scenario_from_json_raises_for_an_unknown_base() -> None:
    with pytest.raises(ScenarioValidationError) as info:
        scenario_from_json({"base": "cartpole"})
    assert _pointers(info.value) == ["/base"]


def test_scenario_from_json_grid_replaces_initial_states() -> None:
    grid = {"lower": [0.0, 0.0], "upper": [0.5, 1.0], "num": [2, 3]}
    scenario = scenario_from_json({"base": "pendulum", "simulation": {"grid": grid}})
    assert scenario.initial_set.states is None
    assert scenario.initial_set.points(scenario.system).shape == (6, 2)
    assert scenario.horizon == 15.0

    scenario = scenario_from_json({"base": "linear2d", "simulation": {"initial_states": [[1, 1]]}})
    npt.assert_array_equal(scenario.initial_set.points(scenario.system), [[1.0, 1.0]])


def test_scenario_from_json_replaces_a_different_synthesis_method() -> None:
    scenario = scenario_from_json(
        {
            "base": "linear2d",
            "synthesis": {"method": "lqr", "Q2": np.eye(3).tolist(), "R": [[1.0]]},
        }
    )
    assert isinstance(scenario.synthesis, LqrMethod)
    npt.assert_array_equal(scenario.synthesis.Q2, np.eye(3))


def test_scenario_from_json_merges_the_same_synthesis_method() -> None:
    scenario = scenario_from_json({"base": "pendulum", "synthesis": {"degree": 3}})
    assert scenario.synthesis.degree == 3  # type: ignore[union-attr]
    npt.assert_allclose(scenario.synthesis.cost.Q2, np.diag([1.0, 50.0, 0.5]))  # type: ignore


def test_complex_json() -> None:
    assert complex_to_json(-3.0) == -3.0
    assert complex_to_json(-1 + 2j) == [-1.0, 2.0]
    assert complex_from_json([-1.0, 2.0]) == -1 + 2j
    assert complex_from_json(4) == 4 + 0j
    with pytest.raises(ValueError):
        complex_from_json([1.0, 2.0, 3.0])


def test_save_and_load_scenario(tmp_path: Path) -> None:
    path = tmp_path / "pendulum.json"
    save_scenario(builtin("pendulum"), path)
    assert scenario_to_json(load_scenario(path)) == _through_json(
        scenario_to_json(builtin("pendulum"))
    )
    assert resolve_scenario(str(path)).name == "pendulum"


def test_load_scenario_raises_for_invalid_json(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioValidationError, match="not valid JSON"):
        load_scenario(path)


def test_resolve_scenario() -> None:
    assert resolve_scenario("robots").name == "robots"
    with pytest.raises(UnknownScenarioError):
        resolve_scenario("no/such/file.json")
