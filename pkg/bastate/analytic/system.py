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
This module contains :class:`ControlAffineSystem`, the dynamics ``dx/dt = f(x) + g(x) u`` with
analytic ``f`` and ``g`` and analytic safety constraints ``h_i(x) > 0``, together with the
operations that evaluate, expand and differentiate such systems.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, singledispatch
from typing import Any, Sequence

import numpy as np

from ..types import ArrayLike
from ..utils.misc import as_float_array
from .expression import Compiled, Expr, as_expr, compile_expr, gradient
from .jets import TaylorExpander
from .polynomial import PolyMap

EQUILIBRIUM_TOLERANCE = 1e-12
""" The largest ``|f(0)|`` accepted as an equilibrium at the origin. """


def _evaluate_all(functions: Sequence[Compiled], x: np.ndarray) -> np.ndarray:
    batch_shape = x.shape[:-1]
    if not functions:
        return np.zeros(batch_shape + (0,))
    return np.stack(
        [np.broadcast_to(np.asarray(f(x), dtype=np.float64), batch_shape) for f in functions],
        axis=-1,
    )


@dataclass(frozen=True, eq=False)
class ControlAffineSystem:
    """
    A control-affine system ``dx/dt = f(x) + g(x) u`` on ``R^n`` with ``m`` inputs, and a list of
    safety constraints whose joint superlevel set ``{x : h_i(x) > 0 for all i}`` is the safe set.

    The origin must be an equilibrium (``f(0) = 0``) and strictly safe (``h_i(0) > 0``).
    """

    drift: Sequence[Expr]
    """ The drift ``f``, one expression per state. """

    input_map: Sequence[Sequence[Expr]]
    """ The input matrix ``g``, as ``n`` rows of ``m`` expressions. """

    constraints: Sequence[Expr] = ()
    """ The constraint functions ``h_i``. """

    constraint_names: Sequence[str] = ()
    """ Optional display names for the constraints. Defaults to ``h1, h2, ...``. """

    name: str = "system"
    """ A display name. """

    def __post_init__(self) -> None:
        drift = tuple(as_expr(e) for e in self.drift)
        input_map = tuple(tuple(as_expr(e) for e in row) for row in self.input_map)
        constraints = tuple(as_expr(e) for e in self.constraints)
        names = tuple(self.constraint_names) or tuple(
            f"h{i + 1}" for i in range(len(constraints))
        )

        n = len(drift)
        if n == 0:
            raise ValueError("A system needs at least one state")
        if len(input_map) != n:
            raise ValueError(f"input_map has {len(input_map)} rows, expected {n}")
        m = len(input_map[0])
        if m == 0 or any(len(row) != m for row in input_map):
            raise ValueError("input_map rows must all have the same positive length")
        if len(names) != len(constraints):
            raise ValueError(
                f"Got {len(names)} constraint names for {len(constraints)} constraints"
            )

        used = set().union(
            *(e.variables() for e in drift + constraints + tuple(e for r in input_map for e in r))
        )
        if used and max(used) >= n:
            raise ValueError(f"Expressions reference x[{max(used)}] but the state dimension is {n}")

        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "input_map", input_map)
        object.__setattr__(self, "constraints", constraints)
        object.__setattr__(self, "constraint_names", names)

        origin = np.zeros(n)
        f0 = self.drift_at(origin)
        if np.max(np.abs(f0)) > EQUILIBRIUM_TOLERANCE:
            raise ValueError(f"The origin must be an equilibrium of {self.name}, got f(0) = {f0}")
        h0 = self.constraint_values(origin)
        if np.any(~(h0 > 0)):
            raise ValueError(f"The origin must be strictly safe for {self.name}, got h(0) = {h0}")

    @property
    def state_dim(self) -> int:
        """The state dimension ``n``."""
        return len(self.drift)

    @property
    def input_dim(self) -> int:
        """The input dimension ``m``."""
        return len(self.input_map[0])

    @property
    def num_constraints(self) -> int:
        """The number of constraints."""
        return len(self.constraints)

    @cached_property
    def _drift_fns(self) -> list[Compiled]:
        return [compile_expr(e) for e in self.drift]

    @cached_property
    def _input_map_fns(self) -> list[Compiled]:
        return [compile_expr(e) for row in self.input_map for e in row]

    @cached_property
    def _constraint_fns(self) -> list[Compiled]:
        return [compile_expr(h) for h in self.constraints]

    @cached_property
    def constraint_gradient_exprs(self) -> tuple[tuple[Expr, ...], ...]:
        """The symbolic gradients of the constraints."""
        return tuple(gradient(h, self.state_dim) for h in self.constraints)

    @cached_property
    def _constraint_gradient_fns(self) -> list[Compiled]:
        return [compile_expr(e) for row in self.constraint_gradient_exprs for e in row]

    def _points(self, x: ArrayLike) -> np.ndarray:
        x = as_float_array(x)
        if x.shape[-1:] != (self.state_dim,):
            raise ValueError(
                f"Expected states with trailing dimension {self.state_dim}, got shape {x.shape}"
            )
        return x

    def drift_at(self, x: ArrayLike) -> np.ndarray:
        """:return: ``f(x)`` with shape [..., n]."""
        return _evaluate_all(self._drift_fns, self._points(x))

    def input_map_at(self, x: ArrayLike) -> np.ndarray:
        """:return: ``g(x)`` with shape [..., n, m]."""
        x = self._points(x)
        flat = _evaluate_all(self._input_map_fns, x)
        return flat.reshape(x.shape[:-1] + (self.state_dim, self.input_dim))

    def fields_at(self, x: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """:return: ``f(x)`` with shape [..., n] and ``g(x)`` with shape [..., n, m]."""
        return self.drift_at(x), self.input_map_at(x)

    def constraint_values(self, x: ArrayLike) -> np.ndarray:
        """:return: ``h(x)`` with shape [..., p]."""
        return _evaluate_all(self._constraint_fns, self._points(x))

    def constraint_gradients(self, x: ArrayLike) -> np.ndarray:
        """:return: The constraint gradients ``dh_i/dx_j`` with shape [..., p, n]."""
        x = self._points(x)
        flat = _evaluate_all(self._constraint_gradient_fns, x)
        return flat.reshape(x.shape[:-1] + (self.num_constraints, self.state_dim))


def _as_input(x: np.ndarray, u: ArrayLike | None, input_dim: int) -> np.ndarray:
    if u is None:
        return np.zeros(x.shape[:-1] + (input_dim,))
    u = as_float_array(u)
    if u.shape[-1:] != (input_dim,):
        raise ValueError(f"Expected inputs with trailing dimension {input_dim}, got {u.shape}")
    return u


@singledispatch
def eval_field(sys: Any, x: ArrayLike, u: ArrayLike | None = None) -> np.ndarray:
    """
    Evaluate the vector field ``f(x) + g(x) u``, e.g.

        >>> from bastate.analytic.expression import Var
        >>> x1, x2 = Var(0), Var(1)
        >>> sys = ControlAffineSystem([x1 - 5 * x2, -x2], [[0.0], [1.0]])
        >>> eval_field(sys, [1.0, 1.0]).tolist()
        [-4.0, -1.0]

    :param sys: The system.
    :param x: States with shape [..., n].
    :param u: Inputs with shape [..., m]. Defaults to zero.
    :return: The state derivatives with shape [..., n].
    """
    raise TypeError(f"eval_field is not defined for {type(sys)}")


@eval_field.register
def _eval_control_affine(
    sys: ControlAffineSystem, x: ArrayLike, u: ArrayLike | None = None
) -> np.ndarray:
    x = sys._points(x)
    u = _as_input(x, u, sys.input_dim)
    drift, input_map = sys.fields_at(x)
    return drift + np.einsum("...ij,...j->...i", input_map, u)


@singledispatch
def taylor_of_field(
    sys: Any, order: int
) -> tuple[tuple[PolyMap, ...], tuple[tuple[PolyMap, ...], ...]]:
    """
    :param sys: The system.
    :param order: The truncation degree, at least one.
    :return: The Taylor polynomials about the origin of ``f`` (one per state) and ``g`` (one per
        state and input).
    :raise ValueError: If ``order`` is less than one.
    :raise ~bastate.analytic.PoleError: If an expression is singular at the origin.
    """
    raise TypeError(f"taylor_of_field is not defined for {type(sys)}")


@taylor_of_field.register
def _taylor_control_affine(
    sys: ControlAffineSystem, order: int
) -> tuple[tuple[PolyMap, ...], tuple[tuple[PolyMap, ...], ...]]:
    if order < 1:
        raise ValueError(f"order must be at least 1, got {order}")
    expand = TaylorExpander(sys.state_dim, order)
    f_poly = tuple(expand(e).to_polymap() for e in sys.drift)
    g_poly = tuple(tuple(expand(e).to_polymap() for e in row) for row in sys.input_map)
    return f_poly, g_poly


def lie_derivatives(
    sys: ControlAffineSystem, h_index: int, x: ArrayLike
) -> tuple[np.ndarray, np.ndarray]:
    """
    :param sys: The system.
    :param h_index: The constraint to differentiate.
    :param x: States with shape [..., n].
    :return: ``L_f h(x) = dh/dx f(x)`` with shape [...] and ``L_g h(x) = dh/dx g(x)`` with shape
        [..., m].
    """
    if not 0 <= h_index < sys.num_constraints:
        raise ValueError(
            f"h_index {h_index} is out of range for {sys.num_constraints} constraints"
        )
    grad_h = sys.constraint_gradients(x)[..., h_index, :]
    drift, input_map = sys.fields_at(x)
    lf = np.einsum("...i,...i->...", grad_h, drift)
    lg = np.einsum("...i,...ij->...j", grad_h, input_map)
    return lf, lg
