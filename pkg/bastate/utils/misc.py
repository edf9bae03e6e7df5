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

import os
from abc import ABC, abstractmethod
from typing import Generic, NoReturn, TypeVar

import numpy as np
from typing_extensions import Final, final

from ..types import ArrayLike


def as_float_array(value: ArrayLike) -> np.ndarray:
    """
    :param value: An array-like object, or a tensor exposing ``numpy()``.
    :return: ``value`` as a float64 NumPy array. Arrays that already have that dtype are returned
        as they are, without copying.
    """
    if hasattr(value, "numpy"):
        value = value.numpy()  # type: ignore[union-attr]

    return np.asarray(value, dtype=np.float64)


def seed_from_env() -> int:
    """
    :return: The seed in the ``BASTATE_SEED`` environment variable, or `0` if it is not set.
    :raise ValueError: If ``BASTATE_SEED`` is set but is not an integer.
    """
    raw = os.environ.get(DEFAULTS.SEED_ENV_VAR, "0")
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{DEFAULTS.SEED_ENV_VAR} must be an integer, got {raw!r}") from None


T_co = TypeVar("T_co", covariant=True)
""" An unbounded covariant type variable. """


class Result(Generic[T_co], ABC):
    """
    Represents the result of an operation that can fail with an exception. It contains either the
    operation return value (in an :class:`Ok`), or the exception raised (in an :class:`Err`).
    Batch simulations use it so that one failing run does not abort the others.

        >>> res = Ok(0.25)
        >>> other_res = Err(ValueError("h(x0) <= 0"))
        >>> res.is_ok, other_res.is_ok
        (True, False)
        >>> res.unwrap()
        0.25
        >>> other_res.unwrap()
        Traceback (most recent call last):
            ...
        ValueError: h(x0) <= 0

    **Note:** This class is not intended to be subclassed other than by :class:`Ok` and
    :class:`Err`.
    """

    @property
    @abstractmethod
    def is_ok(self) -> bool:
        """`True` if this :class:`Result` contains a value, else `False`."""

    @property
    def is_err(self) -> bool:
        """`True` if this :class:`Result` contains an error, else `False`."""
        return not self.is_ok

    @abstractmethod
    def unwrap(self) -> T_co:
        """
        :return: The contained value, if it exists.
        :raise Exception: If there is no contained value.
        """


@final
class Ok(Result[T_co]):
    """Wraps the result of a successful evaluation."""

    def __init__(self, value: T_co):
        self._value = value

    def __repr__(self) -> str:
        """"""
        return f"Ok({self._value!r})"

    @property
    def is_ok(self) -> bool:
        return True

    def unwrap(self) -> T_co:
        return self._value


@final
class Err(Result[NoReturn]):
    """Wraps the exception that occurred during a failed evaluation."""

    def __init__(self, exc: Exception):
        self._exc = exc

    def __repr__(self) -> str:
        """"""
        return f"Err({self._exc!r})"

    @property
    def is_ok(self) -> bool:
        return False

    @property
    def error(self) -> Exception:
        """The wrapped exception."""
        return self._exc

    def unwrap(self) -> NoReturn:
        raise self._exc


class DEFAULTS:
    """Default constants used in bastate."""

    RANK_TOLERANCE: Final[float] = 1e-9
    """ Relative tolerance of the rank decisions in the controllability staircase. """

    ZETA_CAP: Final[float] = 700.0
    """ Largest barrier-state argument the exponential barrier kinds evaluate without overflow. """

    H_FLOOR: Final[float] = 1e-9
    """ Constraint margin at which a simulation stops with a barrier event. """

    Z_CAP: Final[float] = 1e6
    """ Barrier state magnitude at which a simulation stops with a barrier event. """

    SAMPLE_RATE: Final[float] = 200.0
    """ Rate, in samples per unit time, of the dense trajectory output. """

    CONVERGENCE_THRESHOLD: Final[float] = 1e-3
    """ A run has converged if the norm of the final embedded state is below this. """

    JET_DEGREE: Final[int] = 4
    """ Default truncation degree of Taylor expansions. """

    LYAPUNOV_RADIUS: Final[float] = 0.3
    """ Default radius of the ball sampled by the Lyapunov check. """

    SEED_ENV_VAR: Final[str] = "BASTATE_SEED"
    """ Environment variable holding the seed of randomized checks. """
