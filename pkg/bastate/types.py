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
"""This module contains type aliases."""
from typing import Callable, Sequence, Union

import numpy as np

ArrayLike = Union[np.ndarray, Sequence[float], float]
"""Type alias for anything that can be converted to a float64 NumPy array."""

Controller = Callable[[np.ndarray], np.ndarray]
"""
A state feedback law. Maps embedded states with shape [..., N] to controls with shape [..., M].
"""
