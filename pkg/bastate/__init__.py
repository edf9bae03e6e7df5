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
The library root. :mod:`~bastate.barriers` holds the barrier functions and
:mod:`~bastate.embedding` augments a control-affine system (see :mod:`~bastate.analytic`) with
barrier states. :mod:`~bastate.synthesis` designs pole-placement, LQR and power-series NLQR
feedback for the embedded system, and :mod:`~bastate.simulation` integrates and monitors the
closed loop. :mod:`~bastate.scenarios` bundles these into runnable experiments, driven from the
command line by :mod:`~bastate.cli`.
"""
from . import analytic, barriers, embedding, logging, scenarios, simulation, synthesis, types, utils
