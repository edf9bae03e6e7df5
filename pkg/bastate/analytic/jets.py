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
Truncated multivariate Taylor series ("jets"). A :class:`Jet` stores the Taylor coefficients of a
scalar function about a centre over a :class:`~bastate.analytic.polynomial.MonomialBasis`.
Arithmetic truncates consistently at the basis degree, and :func:`jet_compose` lifts the
elementary functions of :mod:`~bastate.analytic.expression` to jets, so that :func:`taylor`
expands any expression to arbitrary order without numerical differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..types import ArrayLike
from .expression import (
    ELEMENTARY,
    Add,
    Apply,
    Const,
    Expr,
    Mul,
    PoleError,
    Pow,
    Var,
)
from .polynomial import MonomialBasis, PolyMap, monomial_basis


@dataclass(frozen=True, eq=False)
class Jet:
    """The degree-``basis.max_degree`` Taylor series of a scalar function about ``center``."""

    basis: MonomialBasis
    center: tuple[float, ...]
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.center) != self.basis.num_vars:
            raise ValueError(
                f"Centre {self.center} does not match {self.basis.num_vars} variables"
            )
        coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if coefficients.shape != (self.basis.size,):
            raise ValueError(
                f"Expected {self.basis.size} coefficients, got shape {coefficients.shape}"
            )
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def constant(cls, basis: MonomialBasis, center: Sequence[float], value: float) -> Jet:
        """:return: The jet of the constant function ``value``."""
        coefficients = np.zeros(basis.size)
        coefficients[0] = value
        return cls(basis, tuple(center), coefficients)

    @classmethod
    def variable(cls, basis: MonomialBasis, center: Sequence[float], index: int) -> Jet:
        """:return: The jet of ``x[index]``: its centre value plus the linear monomial."""
        coefficients = np.zeros(basis.size)
        coefficients[0] = center[index]
        if basis.max_degree >= 1:
            coefficients[1 + index] = 1.0
        return cls(basis, tuple(center), coefficients)

    @property
    def value(self) -> float:
        """The value at the centre."""
        return float(self.coefficients[0])

    def _lift(self, other: Union[Jet, float]) -> Jet:
        if isinstance(other, Jet):
            if other.basis is not self.basis or other.center != self.center:
                raise ValueError("Jets must share their basis and expansion point")
            return other
        return Jet.constant(self.basis, self.center, float(other))

    def _with(self, coefficients: np.ndarray) -> Jet:
        return Jet(self.basis, self.center, coefficients)

    def __add__(self, other: Union[Jet, float]) -> Jet:
        return self._with(self.coefficients + self._lift(other).coefficients)

    __radd__ = __add__

    def __sub__(self, other: Union[Jet, float]) -> Jet:
        return self._with(self.coefficients - self._lift(other).coefficients)

    def __rsub__(self, other: float) -> Jet:
        return self._with(self._lift(other).coefficients - self.coefficients)

    def __neg__(self) -> Jet:
        return self._with(-self.coefficients)

    def __mul__(self, other: Union[Jet, float]) -> Jet:
        if not isinstance(other, Jet):
            return self._with(self.coefficients * float(other))
        other = self._lift(other)
        return self._with(self.basis.multiply(self.coefficients, other.coefficients))

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> Jet:
        if exponent < 0:
            raise ValueError(f"Exponent must be a non-negative integer, got {exponent}")
        result = Jet.constant(self.basis, self.center, 1.0)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def diff(self, index: int) -> Jet:
        """
        :return: The jet of the partial derivative with respect to ``x[index]``. Its top-degree
            coefficients are zero, since they depend on terms beyond the truncation.
        """
        return self._with(self.basis.differentiate(self.coefficients, index))

    def homogeneous_part(self, degree: int) -> np.ndarray:
        """:return: The coefficients of the monomials of exactly ``degree``."""
        return self.coefficients[self.basis.degree_slice(degree)]

    def to_polymap(self) -> PolyMap:
        """:return: The series as a polynomial in the displacement ``x - center``."""
        return PolyMap.from_coefficients(self.basis, self.coefficients)

    def evaluate(self, x: ArrayLike) -> np.ndarray:
        """
        :param x: Points with shape [..., n].
        :return: The truncated series at each point, shape [...].
        """
        displacement = np.asarray(x, dtype=np.float64) - np.asarray(self.center)
        return self.basis.monomials(displacement) @ self.coefficients


def _compose_elementary(name: str, operand: Jet) -> Jet:
    series = ELEMENTARY[name].series(operand.value, operand.basis.max_degree)
    displacement = operand - operand.value
    result = Jet.constant(operand.basis, operand.center, series[-1])
    for coefficient in series[-2::-1]:
        result = result * displacement + coefficient
    return result


def jet_compose(op: str, operands: Sequence[Union[Jet, float]]) -> Jet:
    """
    Compose an operation with jets, e.g.

        >>> basis = monomial_basis(1, 3)
        >>> x = Jet.variable(basis, (0.0,), 0)
        >>> jet_compose("exp", [x]).coefficients.round(6).tolist()
        [1.0, 1.0, 0.5, 0.166667]

    :param op: ``"add"``, ``"sub"``, ``"mul"`` (two operands) or the name of an elementary
        function (one operand).
    :param operands: The operand jets. Numbers are lifted to constant jets.
    :return: The truncated Taylor series of the composition.
    :raise PoleError: If the function is not analytic at the operand's value at the centre.
    :raise ValueError: If ``op`` is unknown, the operand count is wrong or the operands do not
        share their basis and centre.
    """
    jets = [operand for operand in operands if isinstance(operand, Jet)]
    if not jets:
        raise ValueError("At least one operand must be a jet")
    lifted = [jets[0]._lift(operand) for operand in operands]

    if op in ("add", "sub", "mul"):
        if len(lifted) != 2:
            raise ValueError(f"{op} takes two operands, got {len(lifted)}")
        left, right = lifted
        return left + right if op == "add" else left - right if op == "sub" else left * right
    if op in ELEMENTARY:
        if len(lifted) != 1:
            raise ValueError(f"{op} takes one operand, got {len(lifted)}")
        return _compose_elementary(op, lifted[0])
    raise ValueError(f"Unknown operation {op!r}")


class TaylorExpander:
    """
    Expands expressions about a fixed centre, sharing the expansion of common subexpressions
    across calls. Trees that reuse node objects (as the embedded systems do) are expanded in
    time linear in the number of distinct nodes.
    """

    def __init__(self, num_vars: int, degree: int, center: Optional[Sequence[float]] = None):
        """
        :param num_vars: The number of variables.
        :param degree: The truncation degree.
        :param center: The expansion point. Defaults to the origin.
        """
        self.basis = monomial_basis(num_vars, degree)
        self.center = tuple(float(c) for c in (center if center is not None else [0.0] * num_vars))
        if len(self.center) != num_vars:
            raise ValueError(f"Centre {self.center} does not match {num_vars} variables")
        self._memo: dict[int, tuple[Expr, Jet]] = {}

    def __call__(self, expr: Expr) -> Jet:
        """
        :param expr: The expression.
        :return: Its Taylor series.
        :raise PoleError: If the expression is singular at the centre.
        """
        cached = self._memo.get(id(expr))
        if cached is not None and cached[0] is expr:
            return cached[1]

        jet: Jet
        if isinstance(expr, Const):
            jet = Jet.constant(self.basis, self.center, expr.value)
        elif isinstance(expr, Var):
            if expr.index >= self.basis.num_vars:
                raise ValueError(
                    f"Variable x[{expr.index}] is out of range for {self.basis.num_vars} variables"
                )
            jet = Jet.variable(self.basis, self.center, expr.index)
        elif isinstance(expr, Add):
            jet = self(expr.left) + self(expr.right)
        elif isinstance(expr, Mul):
            jet = self(expr.left) * self(expr.right)
        elif isinstance(expr, Pow):
            jet = self(expr.base) ** expr.exponent
        elif isinstance(expr, Apply):
            jet = _compose_elementary(expr.function, self(expr.arg))
        else:
            raise TypeError(f"Unknown expression node {expr!r}")

        # the memo keeps the node alive, so its id cannot be reused
        self._memo[id(expr)] = (expr, jet)
        return jet


def taylor(
    expr: Expr, num_vars: int, degree: int, center: Optional[Sequence[float]] = None
) -> PolyMap:
    """
    :param expr: The expression.
    :param num_vars: The number of variables.
    :param degree: The truncation degree.
    :param center: The expansion point. Defaults to the origin.
    :return: The Taylor polynomial of ``expr`` in the displacement from ``center``.
    :raise PoleError: If ``expr`` is singular at ``center``.
    """
    return TaylorExpander(num_vars, degree, center)(expr).to_polymap()


__all__ = [
    "Jet",
    "PoleError",
    "TaylorExpander",
    "jet_compose",
    "taylor",
]
