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
The JSON form of a :class:`~bastate.scenarios.Scenario`. Expressions are written as prefix
s-expressions and polynomials as lists of exponent-coefficient terms. A scenario may name a
built-in ``base`` and override any of its sections.
"""
from __future__ import annotations

import json
import math
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Mapping, Optional, Union

import numpy as np

from ..analytic.expression import from_sexpr, to_sexpr
from ..analytic.polynomial import PolyMap
from ..analytic.system import ControlAffineSystem
from ..simulation import SimulationConfig
from ..utils.misc import DEFAULTS
from .builtin import BUILTINS, builtin
from .scenario import (
    BasConfig,
    InitialSet,
    LqrMethod,
    NlqrMethod,
    OutputConfig,
    PlotSpec,
    PolePlacementMethod,
    Problem,
    Scenario,
    ScenarioValidationError,
    SynthesisMethod,
)

JSON = dict[str, Any]

_EXCLUSIVE = {"initial_states": "grid", "grid": "initial_states"}


def complex_to_json(value: complex) -> Union[float, list[float]]:
    """:return: ``value`` as a number if it is real, else as ``[re, im]``."""
    value = complex(value)
    return value.real if value.imag == 0 else [value.real, value.imag]


def complex_from_json(value: Any) -> complex:
    """:return: The complex number written by :func:`complex_to_json`."""
    if isinstance(value, list):
        if len(value) != 2:
            raise ValueError(f"Expected a number or [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(float(value))


def _system_to_json(sys: ControlAffineSystem) -> JSON:
    return {
        "name": sys.name,
        "state_dim": sys.state_dim,
        "input_dim": sys.input_dim,
        "drift": [to_sexpr(e) for e in sys.drift],
        "input_map": [[to_sexpr(e) for e in row] for row in sys.input_map],
        "constraints": [to_sexpr(h) for h in sys.constraints],
        "constraint_names": list(sys.constraint_names),
    }


def _system_from_json(data: Mapping[str, Any], default_name: str) -> ControlAffineSystem:
    system = ControlAffineSystem(
        drift=[from_sexpr(e) for e in data["drift"]],
        input_map=[[from_sexpr(e) for e in row] for row in data["input_map"]],
        constraints=[from_sexpr(h) for h in data.get("constraints", [])],
        constraint_names=data.get("constraint_names", []),
        name=data.get("name", default_name),
    )
    for key, actual in (("state_dim", system.state_dim), ("input_dim", system.input_dim)):
        if key in data and data[key] != actual:
            raise ValueError(f"{key} is {data[key]} but the expressions give {actual}")
    return system


def _bas_to_json(bas: Optional[BasConfig]) -> Optional[JSON]:
    if bas is None:
        return None
    data: JSON = {"mode": bas.mode.value, "kind": bas.kind.value, "gammas": list(bas.gammas)}
    if bas.constraints is not None:
        data["constraints"] = list(bas.constraints)
    return data


def _bas_from_json(data: Optional[Mapping[str, Any]]) -> Optional[BasConfig]:
    if data is None:
        return None
    return BasConfig(data["mode"], data["kind"], data["gammas"], data.get("constraints"))


def _synthesis_to_json(method: SynthesisMethod) -> JSON:
    if isinstance(method, PolePlacementMethod):
        return {"method": "pole_place", "poles": [complex_to_json(p) for p in method.poles]}
    if isinstance(method, LqrMethod):
        return {"method": "lqr", "Q2": method.Q2.tolist(), "R": method.R.tolist()}
    return {
        "method": "nlqr",
        "Q": method.Q.to_json(),
        "R": method.R.tolist(),
        "degree": method.degree,
    }


def _synthesis_from_json(data: Mapping[str, Any], num_vars: int) -> SynthesisMethod:
    method = data["method"]
    if method == "pole_place":
        return PolePlacementMethod([complex_from_json(p) for p in data["poles"]])
    if method == "lqr":
        return LqrMethod(data["Q2"], data["R"])
    if method == "nlqr":
        return NlqrMethod(PolyMap.from_json(data["Q"], num_vars), data["R"], int(data["degree"]))
    raise ValueError(f"Unknown synthesis method {method!r}, expected pole_place, lqr or nlqr")


def _simulation_to_json(scenario: Scenario) -> JSON:
    initial_set, config = scenario.initial_set, scenario.simulation
    data: JSON = {}
    if initial_set.states is not None:
        data["initial_states"] = initial_set.states.tolist()
    else:
        assert initial_set.lower is not None and initial_set.upper is not None
        assert initial_set.num is not None
        data["grid"] = {
            "lower": [float(v) for v in initial_set.lower],
            "upper": [float(v) for v in initial_set.upper],
            "num": [int(k) for k in initial_set.num],
        }
    data.update(
        horizon=scenario.horizon,
        tol=scenario.tol,
        sample_rate=config.sample_rate,
        h_floor=config.h_floor,
        z_cap=config.z_cap,
        convergence_threshold=config.convergence_threshold,
    )
    if math.isfinite(config.max_step):
        data["max_step"] = config.max_step
    return data


def _simulation_from_json(data: Mapping[str, Any]) -> tuple[InitialSet, float, float, JSON]:
    if "initial_states" in data:
        initial_set = InitialSet(states=np.asarray(data["initial_states"], dtype=np.float64))
    else:
        grid = data["grid"]
        initial_set = InitialSet(lower=grid["lower"], upper=grid["upper"], num=grid["num"])
    config = {
        key: float(data[key])
        for key in ("sample_rate", "h_floor", "z_cap", "max_step", "convergence_threshold")
        if key in data
    }
    return initial_set, float(data["horizon"]), float(data.get("tol", 1e-8)), config


def _output_to_json(output: OutputConfig) -> JSON:
    return {
        "svg": output.svg,
        "plots": [{"x": p.x, "y": p.y, "offset": list(p.offset)} for p in output.plots],
        "unsafe_circles": [list(c) for c in output.unsafe_circles],
    }


def _output_from_json(data: Mapping[str, Any]) -> OutputConfig:
    plots = [
        PlotSpec(int(p["x"]), int(p["y"]), tuple(float(v) for v in p.get("offset", (0.0, 0.0))))
        for p in data.get("plots", [{"x": 0, "y": 1}])
    ]
    circles = [tuple(float(v) for v in c) for c in data.get("unsafe_circles", [])]
    if any(len(c) != 3 or c[2] <= 0 for c in circles):
        raise ValueError(f"Unsafe circles must be [cx, cy, r] with r > 0, got {circles}")
    return OutputConfig(bool(data.get("svg", False)), plots, circles)  # type: ignore[arg-type]


def scenario_to_json(scenario: Scenario) -> JSON:
    """
    :param scenario: The scenario.
    :return: Its complete JSON form, from which :func:`scenario_from_json` rebuilds it.
    """
    data: JSON = {"name": scenario.name}
    if scenario.base is not None:
        data["base"] = scenario.base
    data.update(
        system=_system_to_json(scenario.system),
        bas=_bas_to_json(scenario.bas),
        synthesis=_synthesis_to_json(scenario.synthesis),
        simulation=_simulation_to_json(scenario),
        output=_output_to_json(scenario.output),
        observables={name: to_sexpr(e) for name, e in scenario.observables.items()},
        lyapunov_radius=scenario.lyapunov_radius,
    )
    return data


def _merge(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> JSON:
    merged = dict(base)
    for key, value in overrides.items():
        current = merged.get(key)
        if not (isinstance(value, Mapping) and isinstance(current, Mapping)):
            merged[key] = value
        elif key == "synthesis" and value.get("method", current["method"]) != current["method"]:
            merged[key] = value
        else:
            section = {k: v for k, v in current.items() if _EXCLUSIVE.get(k) not in value}
            merged[key] = {**section, **value}
    return merged


class _Problems:
    def __init__(self) -> None:
        self.items: list[Problem] = []

    @contextmanager
    def at(self, pointer: str) -> Iterator[None]:
        try:
            yield
        except ScenarioValidationError as error:
            self.items.extend(error.problems)
        except KeyError as error:
            self.items.append((pointer, f"missing field {error.args[0]!r}"))
        except (ValueError, TypeError, IndexError, ZeroDivisionError) as error:
            self.items.append((pointer, str(error)))


def scenario_from_json(data: Mapping[str, Any]) -> Scenario:
    """
    :param data: The JSON form of a scenario. If it names a built-in ``base``, its sections
        override those of the built-in, section by section.
    :return: The validated scenario.
    :raise ScenarioValidationError: Listing every problem with a JSON pointer to its location.
    """
    if not isinstance(data, Mapping):
        raise ScenarioValidationError([("", "A scenario must be a JSON object")])
    base = data.get("base")
    if base is not None:
        if base not in BUILTINS:
            raise ScenarioValidationError(
                [("/base", f"Unknown scenario {base!r}, expected one of {sorted(BUILTINS)}")]
            )
        data = _merge(scenario_to_json(builtin(base)), data)

    problems = _Problems()
    name = str(data.get("name", base or "scenario"))
    system = None
    with problems.at("/system"):
        system = _system_from_json(data["system"], name)
    if system is None:
        raise ScenarioValidationError(problems.items)

    bas = synthesis = initial_set = output = None
    horizon, tol, config, observables = 0.0, 0.0, {}, {}
    simulation = SimulationConfig()
    with problems.at("/bas"):
        bas = _bas_from_json(data.get("bas"))
    num_vars = system.state_dim + (bas.z_dim(system) if bas is not None else 0)
    with problems.at("/synthesis"):
        synthesis = _synthesis_from_json(data["synthesis"], num_vars)
    with problems.at("/simulation"):
        initial_set, horizon, tol, config = _simulation_from_json(data["simulation"])
    with problems.at("/simulation"):
        simulation = SimulationConfig(**config)
    with problems.at("/output"):
        output = _output_from_json(data.get("output", {}))
    with problems.at("/observables"):
        observables = {k: from_sexpr(v) for k, v in data.get("observables", {}).items()}
    if problems.items:
        raise ScenarioValidationError(problems.items)

    assert synthesis is not None and initial_set is not None and output is not None
    with problems.at(""):
        return Scenario(
            name=name,
            system=system,
            bas=bas,
            synthesis=synthesis,
            initial_set=initial_set,
            horizon=horizon,
            tol=tol,
            simulation=simulation,
            output=output,
            observables=observables,
            lyapunov_radius=float(data.get("lyapunov_radius", DEFAULTS.LYAPUNOV_RADIUS)),
            base=base,
        )
    raise ScenarioValidationError(problems.items)


def load_scenario(path: Union[str, os.PathLike[str]]) -> Scenario:
    """
    :param path: A JSON scenario file.
    :return: The validated scenario.
    :raise ScenarioValidationError: If the file is not valid JSON or not a valid scenario.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as error:
        raise ScenarioValidationError([("", f"{path} is not valid JSON: {error}")]) from error
    return scenario_from_json(data)


def save_scenario(scenario: Scenario, path: Union[str, os.PathLike[str]]) -> None:
    """Write the JSON form of ``scenario`` to ``path``."""
    Path(path).write_text(json.dumps(scenario_to_json(scenario), indent=2))


def resolve_scenario(name_or_path: str) -> Scenario:
    """
    :param name_or_path: A path to a JSON scenario file, or the name of a built-in scenario.
    :return: The scenario.
    :raise UnknownScenarioError: If it is neither an existing file nor a built-in name.
    """
    if Path(name_or_path).is_file():
        return load_scenario(name_or_path)
    return builtin(name_or_path)
