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
Scenarios: the built-in experiments and JSON scenario files, and the pipeline that synthesizes,
simulates, verifies and writes the artifacts of a scenario. Phase portraits are drawn by
:mod:`~bastate.scenarios.plotting`, which needs matplotlib.
"""
from .builtin import BUILTINS, UnknownScenarioError, builtin, linear2d, pendulum, robots
from .runner import (
    Manifest,
    Synthesis,
    run_scenario,
    simulate,
    spectrum_to_json,
    sweep_gamma,
    synthesize,
    write_trajectory_csv,
)
from .scenario import (
    BasConfig,
    InitialSet,
    LqrMethod,
    NlqrMethod,
    OutputConfig,
    PlotSpec,
    PolePlacementMethod,
    Scenario,
    ScenarioValidationError,
    SynthesisMethod,
)
from .serialization import (
    load_scenario,
    resolve_scenario,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
)
from .verify import CheckResult, VerificationReport, barrier_identity_errors, verify_scenario
