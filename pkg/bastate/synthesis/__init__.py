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
"""Controller synthesis for (safety-embedded) control-affine systems."""
from .hjb import (
    CostSpec,
    LyapunovReport,
    PolyController,
    SingularRecursionError,
    ValueSeries,
    control_from_value,
    hjb_residual,
    lyapunov_check,
    residual_order,
    solve_value_series,
)
from .linear import (
    FeedbackGain,
    InfeasiblePlacementError,
    LinearizedEmbedded,
    NotStabilizableError,
    RiccatiConvergenceError,
    StaircaseDecomposition,
    closed_loop_eigenvalues,
    ctrb_decompose,
    linearize_closed_form,
    linearize_numeric,
    pole_place,
    solve_care,
)
