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
r"""
This module contains a small closed language of analytic expressions: constants, variables, sums,
products, non-negative integer powers and a fixed set of elementary functions. An expression can be
evaluated pointwise over arrays of points, differentiated symbolically, expanded as a truncated
Taylor series (see :mod:`~bastate.analytic.jets`) and serialized as a prefix s-expression, e.g.

    >>> x = Var(0)
    >>> to_sexpr(sin(x) + 2 * x)
    ['add', ['sin', ['var', 0]], ['mul', ['const', 2.0], ['var', 0]]]
    >>> float(compile_expr(sin(x) + 2 * x)(np.array([0.0])))
    0.0
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Union

import numpy as np
from numpy.polynomial import polynomial as npoly

ExprLike = Union["Expr", float, int]
""" Type alias for anything that can be lifted to an :class:`Expr`. """

SExpr = Union[float, int, List[Any]]
""" Type alias for the JSON prefix form of an :class:`Expr`. """

Compiled = Callable[[np.ndarray], Any]
""" A compiled expression: maps points with shape [..., n] to values with shape [...]. """


class PoleError(ZeroDivisionError):
    """
    Raised when an expression is expanded about a point where it is not analytic, such as the
    reciprocal of an expression whose value at the expansion point is zero.
    """


class Expr(ABC):
    """An analytic scalar expression of the variables ``x[0], x[1], ...``."""

    def __add__(self, other: ExprLike) -> Expr:
        return add(self, other)

    def __radd__(self, other: ExprLike) -> Expr:
        return add(other, self)

    def __sub__(self, other: ExprLike) -> Expr:
        return add(self, neg(other))

    def __rsub__(self, other: ExprLike) -> Expr:
        return add(other, neg(self))

    def __mul__(self, other: ExprLike) -> Expr:
        return mul(self, other)

    def __rmul__(self, other: ExprLike) -> Expr:
        return mul(other, self)

    def __truediv__(self, other: ExprLike) -> Expr:
        return mul(self, recip(other))

    def __rtruediv__(self, other: ExprLike) -> Expr:
        return mul(other, recip(self))

    def __neg__(self) -> Expr:
        return neg(self)

    def __pow__(self, exponent: int) -> Expr:
        return power(self, exponent)

    @abstractmethod
    def diff(self, index: int) -> Expr:
        """
        :param index: The variable to differentiate with respect to.
        :return: The partial derivative of this expression with respect to ``x[index]``.
        """

    @abstractmethod
    def variables(self) -> frozenset[int]:
        """
        :return: The indices of the variables this expression depends on.
        """


@dataclass(frozen=True)
class Const(Expr):
    """A constant."""

    value: float

    def diff(self, index: int) -> Expr:
        return ZERO

    def variables(self) -> frozenset[int]:
        return frozenset()


@dataclass(frozen=True)
class Var(Expr):
    """The variable ``x[index]``."""

    index: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"Variable index must be non-negative, got {self.index}")

    def diff(self, index: int) -> Expr:
        return ONE if index == self.index else ZERO

    def variables(self) -> frozenset[int]:
        return frozenset({self.index})


@dataclass(frozen=True)
class Add(Expr):
    """The sum of two expressions."""

    left: Expr
    right: Expr

    def diff(self, index: int) -> Expr:
        return add(self.left.diff(index), self.right.diff(index))

    def variables(self) -> frozenset[int]:
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Mul(Expr):
    """The product of two expressions."""

    left: Expr
    right: Expr

    def diff(self, index: int) -> Expr:
        return add(
            mul(self.left.diff(index), self.right), mul(self.left, self.right.diff(index))
        )

    def variables(self) -> frozenset[int]:
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Pow(Expr):
    """An expression raised to a non-negative integer power."""

    base: Expr
    exponent: int

    def __post_init__(self) -> None:
        if self.exponent < 0:
            raise ValueError(f"Exponent must be a non-negative integer, got {self.exponent}")

    def diff(self, index: int) -> Expr:
        inner = self.base.diff(index)
        if inner == ZERO:
            return ZERO
        return mul(mul(Const(float(self.exponent)), power(self.base, self.exponent - 1)), inner)

    def variables(self) -> frozenset[int]:
        return self.base.variables()


@dataclass(frozen=True)
class Apply(Expr):
    """An elementary function applied to an expression."""

    function: str
    arg: Expr

    def __post_init__(self) -> None:
        if self.function not in ELEMENTARY:
            raise ValueError(
                f"Unknown elementary function {self.function!r}, expected one of"
                f" {sorted(ELEMENTARY)}"
            )

    def diff(self, index: int) -> Expr:
        inner = self.arg.diff(index)
        if inner == ZERO:
            return ZERO
        return mul(ELEMENTARY[self.function].derivative(self.arg), inner)

    def variables(self) -> frozenset[int]:
        return self.arg.variables()


ZERO: Expr = Const(0.0)
ONE: Expr = Const(1.0)


def as_expr(value: ExprLike) -> Expr:
    """
    :param value: An expression or a number.
    :return: ``value`` if it is an expression, else the constant ``value``.
    :raise TypeError: If ``value`` is neither.
    """
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"Cannot convert {value!r} of type {type(value)} to an expression")


def add(left: ExprLike, right: ExprLike) -> Expr:
    """:return: ``left + right``, folding constants and zeros."""
    left, right = as_expr(left), as_expr(right)
    if isinstance(left, Const) and isinstance(right, Const):
        return Const(left.value + right.value)
    if left == ZERO:
        return right
    if right == ZERO:
        return left
    return Add(left, right)


def mul(left: ExprLike, right: ExprLike) -> Expr:
    """:return: ``left * right``, folding constants, zeros and ones."""
    left, right = as_expr(left), as_expr(right)
    if isinstance(left, Const) and isinstance(right, Const):
        return Const(left.value * right.value)
    if left == ZERO or right == ZERO:
        return ZERO
    if left == ONE:
        return right
    if right == ONE:
        return left
    return Mul(left, right)


def neg(value: ExprLike) -> Expr:
    """:return: ``-value``."""
    return mul(Const(-1.0), value)


def power(base: ExprLike, exponent: int) -> Expr:
    """:return: ``base ** exponent`` for a non-negative integer ``exponent``."""
    base = as_expr(base)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value ** exponent)
    return Pow(base, int(exponent))


def _apply(name: str) -> Callable[[ExprLike], Expr]:
    def apply(arg: ExprLike) -> Expr:
        arg = as_expr(arg)
        if isinstance(arg, Const):
            return Const(float(ELEMENTARY[name].evaluate(np.float64(arg.value))))
        return Apply(name, arg)

    apply.__name__ = name
    apply.__doc__ = f":return: The expression ``{name}(arg)``."
    return apply


# univariate Taylor coefficients c_k = f^(k)(a) / k!, k = 0..degree


def _cyclic_series(values: list[float], degree: int) -> np.ndarray:
    return np.array(
        [values[k % len(values)] / math.factorial(k) for k in range(degree + 1)], dtype=np.float64
    )


def _sin_series(a: float, degree: int) -> np.ndarray:
    s, c = math.sin(a), math.cos(a)
    return _cyclic_series([s, c, -s, -c], degree)


def _cos_series(a: float, degree: int) -> np.ndarray:
    s, c = math.sin(a), math.cos(a)
    return _cyclic_series([c, -s, -c, s], degree)


def _sinh_series(a: float, degree: int) -> np.ndarray:
    return _cyclic_series([math.sinh(a), math.cosh(a)], degree)


def _cosh_series(a: float, degree: int) -> np.ndarray:
    return _cyclic_series([math.cosh(a), math.sinh(a)], degree)


def _exp_series(a: float, degree: int) -> np.ndarray:
    return _cyclic_series([math.exp(a)], degree)


def _tanh_series(a: float, degree: int) -> np.ndarray:
    # d^k tanh / da^k is a polynomial P_k in t = tanh(a), with P_{k+1} = P_k' (1 - t^2)
    t = math.tanh(a)
    poly = np.array([0.0, 1.0])
    coefficients = [t]
    for k in range(1, degree + 1):
        poly = npoly.polymul(npoly.polyder(poly), [1.0, 0.0, -1.0])
        coefficients.append(npoly.polyval(t, poly) / math.factorial(k))
    return np.array(coefficients, dtype=np.float64)


def _log_series(a: float, degree: int) -> np.ndarray:
    if a <= 0.0:
        raise PoleError(f"log is not analytic at {a}")
    return np.array(
        [math.log(a)] + [(-1.0) ** (k - 1) / (k * a ** k) for k in range(1, degree + 1)],
        dtype=np.float64,
    )


def _recip_series(a: float, degree: int) -> np.ndarray:
    if a == 0.0:
        raise PoleError("recip has a pole at 0")
    return np.array([(-1.0) ** k / a ** (k + 1) for k in range(degree + 1)], dtype=np.float64)


def _sqrt_series(a: float, degree: int) -> np.ndarray:
    if a <= 0.0:
        raise PoleError(f"sqrt is not analytic at {a}")
    coefficients = [math.sqrt(a)]
    binomial = 1.0
    for k in range(1, degree + 1):
        binomial *= (0.5 - (k - 1)) / k
        coefficients.append(binomial * a ** (0.5 - k))
    return np.array(coefficients, dtype=np.float64)


def _atanh_series(a: float, degree: int) -> np.ndarray:
    if abs(a) >= 1.0:
        raise PoleError(f"atanh is not analytic at {a}")
    return np.array(
        [math.atanh(a)]
        + [
            ((1.0 - a) ** -k + (-1.0) ** (k - 1) * (1.0 + a) ** -k) / (2.0 * k)
            for k in range(1, degree + 1)
        ],
        dtype=np.float64,
    )


def compose_series(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """
    Compose two truncated univariate series.

    :param outer: Coefficients of ``F(s)`` about ``s = inner[0]``, shape [D + 1].
    :param inner: Coefficients of ``s(t)`` about ``t = 0``, shape [D + 1].
    :return: Coefficients of ``F(s(t))`` about ``t = 0``, shape [D + 1].
    """
    degree = len(outer) - 1
    shifted = np.array(inner, dtype=np.float64)
    shifted[0] = 0.0
    result = np.zeros(degree + 1)
    result[0] = outer[-1]
    for coefficient in outer[-2::-1]:
        result = npoly.polymul(result, shifted)[: degree + 1]
        result = np.pad(result, (0, degree + 1 - len(result)))
        result[0] += coefficient
    return result


def _atanh_expneg_series(a: float, degree: int) -> np.ndarray:
    y0 = math.exp(-a)
    if y0 >= 1.0:
        raise PoleError(f"atanh(exp(-x)) is not analytic at {a}")
    inner = _exp_series(-a, degree) * (-1.0) ** np.arange(degree + 1)
    return compose_series(_atanh_series(y0, degree), inner)


def _atanh_expneg(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    far = x >= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        near_value = np.log1p(np.exp(-x)) - np.log(-np.expm1(-np.where(far, 1.0, x)))
        far_value = np.arctanh(np.exp(-np.where(far, x, 1.0)))
    return np.where(far, far_value, 0.5 * near_value)


@dataclass(frozen=True)
class ElementaryFunction:
    """An analytic function of one variable, as used by :class:`Apply`."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    """ The vectorized pointwise implementation. """

    derivative: Callable[[Expr], Expr]
    """ Maps ``a`` to the expression for ``f'(a)``. """

    series: Callable[[float, int], np.ndarray]
    """ Maps ``(a, D)`` to the Taylor coefficients ``f^(k)(a) / k!`` for ``k = 0..D``. """


ELEMENTARY: Dict[str, ElementaryFunction] = {}
""" The elementary functions available to :class:`Apply`, by name. """

sin = _apply("sin")
cos = _apply("cos")
tanh = _apply("tanh")
sinh = _apply("sinh")
cosh = _apply("cosh")
exp = _apply("exp")
log = _apply("log")
sqrt = _apply("sqrt")
atanh = _apply("atanh")
atanh_expneg = _apply("atanh_expneg")
recip = _apply("recip")

ELEMENTARY.update(
    sin=ElementaryFunction(np.sin, cos, _sin_series),
    cos=ElementaryFunction(np.cos, lambda a: neg(sin(a)), _cos_series),
    tanh=ElementaryFunction(np.tanh, lambda a: 1.0 - power(tanh(a), 2), _tanh_series),
    sinh=ElementaryFunction(np.sinh, cosh, _sinh_series),
    cosh=ElementaryFunction(np.cosh, sinh, _cosh_series),
    exp=ElementaryFunction(np.exp, exp, _exp_series),
    log=ElementaryFunction(np.log, recip, _log_series),
    sqrt=ElementaryFunction(np.sqrt, lambda a: 0.5 * recip(sqrt(a)), _sqrt_series),
    atanh=ElementaryFunction(np.arctanh, lambda a: recip(1.0 - power(a, 2)), _atanh_series),
    atanh_expneg=ElementaryFunction(
        _atanh_expneg, lambda a: -0.5 * recip(sinh(a)), _atanh_expneg_series
    ),
    recip=ElementaryFunction(np.reciprocal, lambda a: neg(power(recip(a), 2)), _recip_series),
)


def compile_expr(expr: Expr) -> Compiled:
    """
    Compile ``expr`` to a closure over NumPy operations. Shared subexpressions are compiled once.

    :param expr: The expression.
    :return: A function mapping points with shape [..., n] to values with shape [...] (or a scalar,
        if ``expr`` is constant).
    """
    cache: dict[int, Compiled] = {}

    def build(node: Expr) -> Compiled:
        key = id(node)
        if key in cache:
            return cache[key]

        compiled: Compiled
        if isinstance(node, Const):
            value = node.value
            compiled = lambda x: value  # noqa: E731
        elif isinstance(node, Var):
            i = node.index
            compiled = lambda x: x[..., i]  # noqa: E731
        elif isinstance(node, Add):
            l, r = build(node.left), build(node.right)
            compiled = lambda x: l(x) + r(x)  # noqa: E731
        elif isinstance(node, Mul):
            l, r = build(node.left), build(node.right)
            compiled = lambda x: l(x) * r(x)  # noqa: E731
        elif isinstance(node, Pow):
            b, k = build(node.base), node.exponent
            compiled = lambda x: b(x) ** k  # noqa: E731
        elif isinstance(node, Apply):
            f, a = ELEMENTARY[node.function].evaluate, build(node.arg)
            compiled = lambda x: f(a(x))  # noqa: E731
        else:
            raise TypeError(f"Unknown expression node {node!r}")

        cache[key] = compiled
        return compiled

    return build(expr)


def gradient(expr: Expr, num_vars: int) -> tuple[Expr, ...]:
    """
    :param expr: The expression.
    :param num_vars: The number of variables.
    :return: The partial derivatives of ``expr`` with respect to ``x[0], ..., x[num_vars - 1]``.
    """
    return tuple(expr.diff(i) for i in range(num_vars))


def to_sexpr(expr: Expr) -> SExpr:
    """
    :param expr: The expression.
    :return: The JSON-compatible prefix form of ``expr``.
    """
    if isinstance(expr, Const):
        return ["const", expr.value]
    if isinstance(expr, Var):
        return ["var", expr.index]
    if isinstance(expr, Add):
        return ["add", to_sexpr(expr.left), to_sexpr(expr.right)]
    if isinstance(expr, Mul):
        return ["mul", to_sexpr(expr.left), to_sexpr(expr.right)]
    if isinstance(expr, Pow):
        return ["pow", to_sexpr(expr.base), expr.exponent]
    if isinstance(expr, Apply):
        return [expr.function, to_sexpr(expr.arg)]
    raise TypeError(f"Unknown expression node {expr!r}")


_BINARY: Mapping[str, Callable[[Expr, Expr], Expr]] = {
    "add": Add,
    "mul": Mul,
    "sub": lambda a, b: Add(a, neg(b)),
    "div": lambda a, b: Mul(a, recip(b)),
}


def from_sexpr(sexpr: SExpr) -> Expr:
    """
    Parse the prefix form of an expression. Bare numbers are constants. Besides the forms written
    by :func:`to_sexpr`, ``["sub", a, b]``, ``["div", a, b]`` and ``["neg", a]`` are accepted.

    :param sexpr: The prefix form.
    :return: The expression. Parsing preserves the tree exactly, so that
        ``from_sexpr(to_sexpr(e)) == e``.
    :raise ValueError: If ``sexpr`` is malformed.
    """
    if isinstance(sexpr, bool):
        raise ValueError(f"Expected a number or a list, got {sexpr!r}")
    if isinstance(sexpr, (int, float)):
        return Const(float(sexpr))
    if not isinstance(sexpr, list) or not sexpr or not isinstance(sexpr[0], str):
        raise ValueError(f"Expected a non-empty list headed by an operator name, got {sexpr!r}")

    head, args = sexpr[0], sexpr[1:]
    if head == "const" and len(args) == 1 and isinstance(args[0], (int, float)):
        return Const(float(args[0]))
    if head == "var" and len(args) == 1 and isinstance(args[0], int):
        return Var(args[0])
    if head in _BINARY and len(args) == 2:
        return _BINARY[head](from_sexpr(args[0]), from_sexpr(args[1]))
    if head == "pow" and len(args) == 2 and isinstance(args[1], int):
        return Pow(from_sexpr(args[0]), args[1])
    if head == "neg" and len(args) == 1:
        return neg(from_sexpr(args[0]))
    if head in ELEMENTARY and len(args) == 1:
        return Apply(head, from_sexpr(args[0]))
    raise ValueError(f"Malformed expression {sexpr!r}")
