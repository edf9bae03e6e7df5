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
This module contains the monomial bookkeeping shared by truncated Taylor series and polynomial
value functions: a graded-lexicographic :class:`MonomialBasis` with cached product and derivative
index tables, and the sparse :class:`PolyMap` polynomial.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np

from ..types import ArrayLike

Exponents = tuple[int, ...]
""" A monomial, given by the exponent of each variable. """


class MonomialBasis:
    """
    All monomials in ``num_vars`` variables of total degree at most ``max_degree``, in graded
    lexicographic order: by degree, then lexicographically descending in the exponents, so that
    for two variables the order is ``1, x0, x1, x0^2, x0 x1, x1^2, ...``.

    Use :func:`monomial_basis` rather than the constructor to share the cached tables.
    """

    def __init__(self, num_vars: int, max_degree: int):
        """
        :param num_vars: The number of variables.
        :param max_degree: The maximum total degree.
        :raise ValueError: If ``num_vars`` is not positive or ``max_degree`` is negative.
        """
        if num_vars <= 0:
            raise ValueError(f"num_vars must be positive, got {num_vars}")
        if max_degree < 0:
            raise ValueError(f"max_degree must be non-negative, got {max_degree}")

        self.num_vars = num_vars
        self.max_degree = max_degree

        exponents: list[Exponents] = []
        offsets = [0]
        for degree in range(max_degree + 1):
            for combination in itertools.combinations_with_replacement(range(num_vars), degree):
                exps = [0] * num_vars
                for var in combination:
                    exps[var] += 1
                exponents.append(tuple(exps))
            offsets.append(len(exponents))

        self.exponents = np.array(exponents, dtype=np.int64).reshape(-1, num_vars)
        self.degrees = self.exponents.sum(axis=-1)
        self.index: dict[Exponents, int] = {exps: i for i, exps in enumerate(exponents)}
        self._offsets = offsets

    def __repr__(self) -> str:
        return f"MonomialBasis({self.num_vars!r}, {self.max_degree!r})"

    @property
    def size(self) -> int:
        """The number of monomials."""
        return len(self.exponents)

    def degree_slice(self, degree: int) -> slice:
        """
        :param degree: A total degree ``0 <= degree <= max_degree``.
        :return: The slice of the basis holding the monomials of exactly that degree.
        """
        return slice(self._offsets[degree], self._offsets[degree + 1])

    @cached_property
    def _product_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        left, right, target = [], [], []
        for i, j in itertools.product(range(self.size), repeat=2):
            if self.degrees[i] + self.degrees[j] <= self.max_degree:
                left.append(i)
                right.append(j)
                target.append(self.index[tuple(self.exponents[i] + self.exponents[j])])
        return np.array(left), np.array(right), np.array(target)

    @cached_property
    def _derivative_tables(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        tables = []
        for var in range(self.num_vars):
            source = np.flatnonzero(self.exponents[:, var] > 0)
            lowered = self.exponents[source].copy()
            lowered[:, var] -= 1
            target = np.array([self.index[tuple(exps)] for exps in lowered], dtype=np.int64)
            tables.append((source, target, self.exponents[source, var].astype(np.float64)))
        return tables

    def multiply(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """
        :param left: Coefficients over this basis, shape [size].
        :param right: Coefficients over this basis, shape [size].
        :return: The coefficients of the product, truncated at ``max_degree``, shape [size].
        """
        i, j, k = self._product_table
        return np.bincount(k, weights=left[i] * right[j], minlength=self.size)

    def differentiate(self, coefficients: np.ndarray, var: int) -> np.ndarray:
        """
        :param coefficients: Coefficients over this basis, shape [size].
        :param var: The variable to differentiate with respect to.
        :return: The coefficients of the partial derivative, shape [size].
        """
        source, target, factor = self._derivative_tables[var]
        result = np.zeros(self.size)
        result[target] = coefficients[source] * factor
        return result

    def monomials(self, x: np.ndarray) -> np.ndarray:
        """
        :param x: Points with shape [..., num_vars].
        :return: Every monomial evaluated at every point, shape [..., size].
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.num_vars:
            raise ValueError(
                f"Expected points with trailing dimension {self.num_vars}, got shape {x.shape}"
            )
        return np.prod(x[..., None, :] ** self.exponents, axis=-1)


@lru_cache(maxsize=None)
def monomial_basis(num_vars: int, max_degree: int) -> MonomialBasis:
    """
    :param num_vars: The number of variables.
    :param max_degree: The maximum total degree.
    :return: The shared :class:`MonomialBasis` for these sizes.
    """
    return MonomialBasis(num_vars, max_degree)


@dataclass(frozen=True)
class PolyMap:
    """
    A real polynomial in ``num_vars`` variables of total degree at most ``max_degree``, stored
    sparsely. Zero coefficients are dropped on construction, so equality is equality of the
    term sets.
    """

    num_vars: int
    max_degree: int
    terms: Mapping[Exponents, float]

    def __post_init__(self) -> None:
        if self.num_vars <= 0:
            raise ValueError(f"num_vars must be positive, got {self.num_vars}")
        if self.max_degree < 0:
            raise ValueError(f"max_degree must be non-negative, got {self.max_degree}")

        canonical: dict[Exponents, float] = {}
        for exps, coef in self.terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.num_vars or min(exps) < 0:
                raise ValueError(
                    f"Exponents {exps} do not describe a monomial in {self.num_vars} variables"
                )
            if sum(exps) > self.max_degree:
                raise ValueError(
                    f"Monomial {exps} has degree {sum(exps)} > max_degree {self.max_degree}"
                )
            if coef != 0.0:
                canonical[exps] = canonical.get(exps, 0.0) + float(coef)
        object.__setattr__(self, "terms", {e: c for e, c in canonical.items() if c != 0.0})

    def __hash__(self) -> int:
        return hash((self.num_vars, self.max_degree, frozenset(self.terms.items())))

    @property
    def basis(self) -> MonomialBasis:
        """The monomial basis for ``num_vars`` and ``max_degree``."""
        return monomial_basis(self.num_vars, self.max_degree)

    @property
    def degree(self) -> int:
        """The largest total degree of a stored term, or -1 for the zero polynomial."""
        return max((sum(exps) for exps in self.terms), default=-1)

    @classmethod
    def zero(cls, num_vars: int, max_degree: int) -> PolyMap:
        """:return: The zero polynomial."""
        return cls(num_vars, max_degree, {})

    @classmethod
    def constant(cls, num_vars: int, max_degree: int, value: float) -> PolyMap:
        """:return: The constant polynomial ``value``."""
        return cls(num_vars, max_degree, {(0,) * num_vars: value})

    @classmethod
    def variable(cls, num_vars: int, max_degree: int, index: int) -> PolyMap:
        """:return: The polynomial ``x[index]``."""
        exps = [0] * num_vars
        exps[index] = 1
        return cls(num_vars, max_degree, {tuple(exps): 1.0})

    @classmethod
    def from_coefficients(cls, basis: MonomialBasis, coefficients: ArrayLike) -> PolyMap:
        """
        :param basis: The basis the coefficients refer to.
        :param coefficients: One coefficient per basis monomial, shape [basis.size].
        :return: The polynomial with those coefficients.
        """
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if coefficients.shape != (basis.size,):
            raise ValueError(
                f"Expected {basis.size} coefficients for {basis!r}, got shape {coefficients.shape}"
            )
        nonzero = np.flatnonzero(coefficients)
        return cls(
            basis.num_vars,
            basis.max_degree,
            {tuple(int(e) for e in basis.exponents[i]): float(coefficients[i]) for i in nonzero},
        )

    @classmethod
    def from_quadratic_form(cls, matrix: ArrayLike, max_degree: int = 2) -> PolyMap:
        """
        :param matrix: A square matrix ``M``.
        :param max_degree: The declared maximum degree of the result.
        :return: The polynomial ``x^T M x``.
        """
        matrix = np.asarray(matrix, dtype=np.float64)
        n = matrix.shape[0]
        terms: dict[Exponents, float] = {}
        for i, j in itertools.product(range(n), repeat=2):
            exps = [0] * n
            exps[i] += 1
            exps[j] += 1
            terms[tuple(exps)] = terms.get(tuple(exps), 0.0) + matrix[i, j]
        return cls(n, max_degree, terms)

    def coefficients(self, basis: MonomialBasis | None = None) -> np.ndarray:
        """
        :param basis: The basis to expand over. Defaults to :attr:`basis`. Terms beyond the
            basis' maximum degree are dropped.
        :return: One coefficient per basis monomial.
        """
        basis = self.basis if basis is None else basis
        if basis.num_vars != self.num_vars:
            raise ValueError(f"{basis!r} does not match a polynomial in {self.num_vars} variables")
        result = np.zeros(basis.size)
        for exps, coef in self.terms.items():
            if sum(exps) <= basis.max_degree:
                result[basis.index[exps]] = coef
        return result

    def coefficient(self, exps: Sequence[int]) -> float:
        """:return: The coefficient of the monomial ``exps`` (zero if not stored)."""
        return self.terms.get(tuple(exps), 0.0)

    def _check_compatible(self, other: PolyMap) -> None:
        if other.num_vars != self.num_vars:
            raise ValueError(
                f"Cannot combine polynomials in {self.num_vars} and {other.num_vars} variables"
            )

    def __add__(self, other: Union[PolyMap, float]) -> PolyMap:
        if not isinstance(other, PolyMap):
            other = PolyMap.constant(self.num_vars, self.max_degree, float(other))
        self._check_compatible(other)
        terms = dict(self.terms)
        for exps, coef in other.terms.items():
            terms[exps] = terms.get(exps, 0.0) + coef
        return PolyMap(self.num_vars, max(self.max_degree, other.max_degree), terms)

    __radd__ = __add__

    def __neg__(self) -> PolyMap:
        return self * -1.0

    def __sub__(self, other: Union[PolyMap, float]) -> PolyMap:
        return self + (-other)

    def __rsub__(self, other: float) -> PolyMap:
        return (-self) + other

    def __mul__(self, other: Union[PolyMap, float]) -> PolyMap:
        if not isinstance(other, PolyMap):
            return PolyMap(
                self.num_vars, self.max_degree, {e: c * other for e, c in self.terms.items()}
            )
        return self.multiply(other)

    __rmul__ = __mul__

    def multiply(self, other: PolyMap, max_degree: int | None = None) -> PolyMap:
        """
        :param other: Another polynomial in the same variables.
        :param max_degree: The truncation degree of the product. Defaults to the larger of the two
            declared maximum degrees.
        :return: The product, with terms above ``max_degree`` dropped.
        """
        self._check_compatible(other)
        max_degree = max(self.max_degree, other.max_degree) if max_degree is None else max_degree
        terms: dict[Exponents, float] = {}
        for (e1, c1), (e2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            exps = tuple(a + b for a, b in zip(e1, e2))
            if sum(exps) <= max_degree:
                terms[exps] = terms.get(exps, 0.0) + c1 * c2
        return PolyMap(self.num_vars, max_degree, terms)

    def diff(self, index: int) -> PolyMap:
        """:return: The partial derivative with respect to ``x[index]``."""
        terms: dict[Exponents, float] = {}
        for exps, coef in self.terms.items():
            if exps[index] > 0:
                lowered = list(exps)
                lowered[index] -= 1
                terms[tuple(lowered)] = coef * exps[index]
        return PolyMap(self.num_vars, self.max_degree, terms)

    def gradient(self) -> tuple[PolyMap, ...]:
        """:return: The partial derivatives with respect to every variable."""
        return tuple(self.diff(i) for i in range(self.num_vars))

    def homogeneous_part(self, degree: int) -> PolyMap:
        """:return: The terms of total degree exactly ``degree``."""
        return PolyMap(
            self.num_vars,
            self.max_degree,
            {e: c for e, c in self.terms.items() if sum(e) == degree},
        )

    def truncate(self, max_degree: int) -> PolyMap:
        """:return: The terms of total degree at most ``max_degree``."""
        return PolyMap(
            self.num_vars, max_degree, {e: c for e, c in self.terms.items() if sum(e) <= max_degree}
        )

    def linear_coefficients(self) -> np.ndarray:
        """:return: The coefficients of ``x[0], ..., x[n - 1]``, shape [n]."""
        return np.array(
            [self.coefficient(np.eye(self.num_vars, dtype=int)[i]) for i in range(self.num_vars)]
        )

    def quadratic_form(self) -> np.ndarray:
        """:return: The symmetric matrix ``M`` with ``x^T M x`` the degree-two part."""
        n = self.num_vars
        matrix = np.zeros((n, n))
        for exps, coef in self.homogeneous_part(2).terms.items():
            (i, j) = [v for v in range(n) for _ in range(exps[v])]
            if i == j:
                matrix[i, i] = coef
            else:
                matrix[i, j] = matrix[j, i] = coef / 2
        return matrix

    def evaluate(self, x: ArrayLike) -> np.ndarray:
        """
        :param x: Points with shape [..., num_vars].
        :return: The polynomial at each point, shape [...].
        """
        x = np.asarray(x, dtype=np.float64)
        if not self.terms:
            return np.zeros(x.shape[:-1])
        exps = np.array(list(self.terms.keys()), dtype=np.int64)
        coefs = np.array(list(self.terms.values()))
        return np.prod(x[..., None, :] ** exps, axis=-1) @ coefs

    __call__ = evaluate

    def to_json(self) -> dict[str, Any]:
        """:return: The JSON form ``{"degree": d, "terms": [{"exps": [...], "coef": c}, ...]}``."""
        basis = self.basis
        ordered = sorted(self.terms.items(), key=lambda item: basis.index[item[0]])
        return {
            "degree": self.max_degree,
            "terms": [{"exps": list(exps), "coef": coef} for exps, coef in ordered],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any], num_vars: int | None = None) -> PolyMap:
        """
        :param data: The JSON form written by :meth:`to_json`.
        :param num_vars: The number of variables, required when there are no terms.
        :return: The polynomial.
        :raise ValueError: If ``data`` is malformed.
        """
        try:
            terms: Iterable[Mapping[str, Any]] = data["terms"]
            parsed = {tuple(term["exps"]): float(term["coef"]) for term in terms}
            max_degree = int(data.get("degree", max((sum(e) for e in parsed), default=0)))
        except (KeyError, TypeError) as error:
            raise ValueError(f"Malformed polynomial {data!r}") from error
        if num_vars is None:
            if not parsed:
                raise ValueError("num_vars is required to read a polynomial with no terms")
            num_vars = len(next(iter(parsed)))
        return cls(num_vars, max_degree, parsed)


def jacobian_at_zero(polys: Sequence[PolyMap]) -> np.ndarray:
    """
    :param polys: A vector of polynomials in the same ``n`` variables.
    :return: The matrix of their linear coefficients, shape [len(polys), n].
    """
    return np.stack([p.linear_coefficients() for p in polys])
