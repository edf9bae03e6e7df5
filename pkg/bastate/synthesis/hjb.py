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
This module solves the infinite-horizon optimal control problem

.. math:: \min_u \frac12 \int_0^\infty Q(x) + u^T R u \, dt

for analytic control-affine dynamics by power series. The quadratic part of the value function
comes from the Riccati equation; every higher homogeneous part :math:`V_k` solves the linear
equation :math:`\nabla V_k \cdot A_{cl} x = -[H(V_2 + \dots + V_{k-1})]_k`, where :math:`H` is the
left-hand side of the HJB equation and :math:`A_{cl}` the LQR closed loop. The optimal feedback
is :math:`u = -R^{-1} g(x)^T \nabla V(x)^T`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
from absl import logging

from ..analytic.polynomial import MonomialBasis, PolyMap, jacobian_at_zero, monomial_basis
from ..analytic.system import ControlAffineSystem, eval_field
from ..embedding import EmbeddedSystem, UnsafeStateError
from ..logging import write_scalars
from ..types import ArrayLike
from ..utils.misc import as_float_array, seed_from_env
from .linear import FeedbackGain, solve_care

System = Union[ControlAffineSystem, EmbeddedSystem]
""" A system the series solution can be checked against. """

TaylorField = tuple[Sequence[PolyMap], Sequence[Sequence[PolyMap]]]
""" The Taylor polynomials of a drift (one per state) and input map (one per state and input). """


class SingularRecursionError(RuntimeError):
    """Raised when the linear operator of one degree of the series recursion is singular."""

    def __init__(self, degree: int, condition: float):
        super().__init__(
            f"The degree-{degree} recursion operator is singular (condition number {condition:.3e})"
        )
        self.degree = degree
        self.condition = condition


@dataclass(frozen=True, eq=False)
class CostSpec:
    """The running cost ``Q(x) + u^T R u`` of the optimal control problem."""

    Q: PolyMap
    """ The state cost: zero with zero gradient at the origin, and positive definite Hessian. """

    R: np.ndarray
    """ The symmetric positive definite input weight. """

    def __post_init__(self) -> None:
        R = np.atleast_2d(as_float_array(self.R))
        if R.shape[0] != R.shape[1] or not np.allclose(R, R.T):
            raise ValueError(f"R must be a symmetric matrix, got {R}")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValueError(f"R must be positive definite, got {R}")
        object.__setattr__(self, "R", R)

        low = {e: c for e, c in self.Q.terms.items() if sum(e) < 2}
        if low:
            raise ValueError(f"Q must vanish to second order at the origin, got terms {low}")
        hessian_eigenvalues = np.linalg.eigvalsh(2 * self.Q.quadratic_form())
        if np.min(hessian_eigenvalues) <= 1e-12:
            raise ValueError(
                f"The Hessian of Q at the origin must be positive definite, got eigenvalues"
                f" {hessian_eigenvalues}"
            )

    @property
    def Q2(self) -> np.ndarray:
        """The matrix of the quadratic part of ``Q``, half its Hessian at the origin."""
        return self.Q.quadratic_form()


@dataclass(frozen=True, eq=False)
class ValueSeries:
    """A polynomial approximation ``V_2 + ... + V_d`` of the optimal value function."""

    coefficients: PolyMap
    """ The polynomial, with no terms of degree below two. """

    P: np.ndarray
    """ The Riccati solution, with ``V_2(x) = x^T P x / 2``. """

    @property
    def degree(self) -> int:
        """The truncation degree ``d``."""
        return self.coefficients.max_degree

    @cached_property
    def _gradient(self) -> tuple[PolyMap, ...]:
        return self.coefficients.gradient()

    def __call__(self, x: ArrayLike) -> np.ndarray:
        """:return: ``V`` at states with shape [..., N], with shape [...]."""
        return self.coefficients.evaluate(x)

    def gradient(self, x: ArrayLike) -> np.ndarray:
        """:return: ``dV/dx`` at states with shape [..., N], with shape [..., N]."""
        return np.stack([p.evaluate(x) for p in self._gradient], axis=-1)

    def to_json(self) -> dict[str, object]:
        """:return: The JSON form of the polynomial."""
        return self.coefficients.to_json()


@dataclass(frozen=True, eq=False)
class PolyController:
    """A polynomial state feedback, one polynomial per input."""

    polys: Sequence[PolyMap]

    _exponents: np.ndarray = field(init=False, repr=False)
    _coefficients: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        polys = tuple(self.polys)
        if not polys or len({p.num_vars for p in polys}) != 1:
            raise ValueError("A controller needs polynomials in a shared set of variables")
        monomials = sorted({e for p in polys for e in p.terms})
        index = {e: i for i, e in enumerate(monomials)}
        coefficients = np.zeros((len(monomials), len(polys)))
        for a, p in enumerate(polys):
            for e, c in p.terms.items():
                coefficients[index[e], a] = c
        exponents = np.array(monomials, dtype=np.int64).reshape(-1, polys[0].num_vars)
        object.__setattr__(self, "polys", polys)
        object.__setattr__(self, "_exponents", exponents)
        object.__setattr__(self, "_coefficients", coefficients)

    @property
    def input_dim(self) -> int:
        """The number of inputs."""
        return len(self.polys)

    def __call__(self, x: ArrayLike) -> np.ndarray:
        """:return: The inputs at states with shape [..., N], with shape [..., m]."""
        x = as_float_array(x)
        return np.prod(x[..., None, :] ** self._exponents, axis=-1) @ self._coefficients

    def linear_gain(self) -> FeedbackGain:
        """:return: The degree-one part of the feedback, as a gain ``K`` with ``u = -K x``."""
        return FeedbackGain(-np.stack([p.linear_coefficients() for p in self.polys]))

    def to_json(self) -> list[dict[str, object]]:
        """:return: The JSON form of every input's polynomial."""
        return [p.to_json() for p in self.polys]


def _hamiltonian(
    basis: MonomialBasis,
    V: np.ndarray,
    f: Sequence[np.ndarray],
    g: Sequence[Sequence[np.ndarray]],
    q: np.ndarray,
    R_inv: np.ndarray,
) -> np.ndarray:
    # dV.f - p^T R^-1 p / 2 + Q / 2 with p = g^T dV^T, truncated at the basis degree
    grad = [basis.differentiate(V, j) for j in range(basis.num_vars)]
    result = 0.5 * q
    for j in range(basis.num_vars):
        result = result + basis.multiply(grad[j], f[j])
    p = [
        sum(basis.multiply(g[j][a], grad[j]) for j in range(basis.num_vars))
        for a in range(R_inv.shape[0])
    ]
    for a in range(R_inv.shape[0]):
        for b in range(R_inv.shape[0]):
            if R_inv[a, b] != 0.0:
                result = result - 0.5 * R_inv[a, b] * basis.multiply(p[a], p[b])
    return result


def _homogeneous_operator(basis: MonomialBasis, degree: int, A_cl: np.ndarray) -> np.ndarray:
    # the matrix of V_k -> dV_k . (A_cl x) on the degree-k monomials
    block = basis.degree_slice(degree)
    size = block.stop - block.start
    operator = np.zeros((size, size))
    for column, exps in enumerate(basis.exponents[block]):
        for j in np.flatnonzero(exps):
            for l in np.flatnonzero(A_cl[j]):
                shifted = exps.copy()
                shifted[j] -= 1
                shifted[l] += 1
                row = basis.index[tuple(int(e) for e in shifted)] - block.start
                operator[row, column] += exps[j] * A_cl[j, l]
    return operator


def solve_value_series(esys_taylor: TaylorField, cost: CostSpec, degree: int) -> ValueSeries:
    """
    Solve the HJB equation by power series to ``degree``. For example, for ``dx/dt = x^2 + u``
    with ``Q = x^2`` and ``R = 1``, the degree-4 series is ``x^2/2 + x^3/3 + x^4/8``.

    :param esys_taylor: The Taylor polynomials of the drift and input map about the origin, to at
        least degree ``degree - 1``.
    :param cost: The running cost, in the same variables.
    :param degree: The truncation degree ``d >= 2``.
    :return: The value series. Its HJB residual is of order ``d + 1`` at the origin.
    :raise NotStabilizableError: If the linearization is not stabilizable.
    :raise SingularRecursionError: If the recursion operator of some degree is singular.
    """
    f_poly, g_poly = esys_taylor
    if degree < 2:
        raise ValueError(f"degree must be at least 2, got {degree}")
    num_vars = len(f_poly)
    if cost.Q.num_vars != num_vars:
        raise ValueError(f"Q is a polynomial in {cost.Q.num_vars} variables, expected {num_vars}")
    input_dim = len(g_poly[0])
    if cost.R.shape != (input_dim, input_dim):
        raise ValueError(f"R has shape {cost.R.shape}, expected {(input_dim, input_dim)}")

    A = jacobian_at_zero(f_poly)
    B = np.array([[g.coefficient((0,) * num_vars) for g in row] for row in g_poly])
    P, gain = solve_care(A, B, cost.Q2, cost.R)
    A_cl = A - B @ gain.K

    basis = monomial_basis(num_vars, degree)
    V = PolyMap.from_quadratic_form(0.5 * P, degree).coefficients(basis)
    f = [p.coefficients(basis) for p in f_poly]
    g = [[p.coefficients(basis) for p in row] for row in g_poly]
    q = cost.Q.coefficients(basis)
    R_inv = np.linalg.inv(cost.R)

    for k in range(3, degree + 1):
        rhs = -_hamiltonian(basis, V, f, g, q, R_inv)[basis.degree_slice(k)]
        operator = _homogeneous_operator(basis, k, A_cl)
        condition = float(np.linalg.cond(operator))
        write_scalars("hjb", {"condition": condition}, step=k)
        logging.debug("Degree-%d recursion operator: condition number %.3e", k, condition)
        if not np.isfinite(condition) or condition > 1 / np.finfo(np.float64).eps:
            raise SingularRecursionError(k, condition)
        if condition > 1e8:
            logging.warning("Degree-%d recursion operator is ill-conditioned (%.3e)", k, condition)
        V[basis.degree_slice(k)] = scipy.linalg.lu_solve(scipy.linalg.lu_factor(operator), rhs)

    logging.info("Solved the degree-%d value series in %d variables", degree, num_vars)
    return ValueSeries(PolyMap.from_coefficients(basis, V), P)


def control_from_value(
    vs: ValueSeries, g_taylor: Sequence[Sequence[PolyMap]], R: ArrayLike
) -> PolyController:
    """
    :param vs: The value series, of degree ``d``.
    :param g_taylor: The Taylor polynomials of the input map, one per state and input.
    :param R: The input weight.
    :return: The feedback ``u = -R^{-1} g^T dV^T``, truncated at degree ``d - 1``.
    """
    R_inv = np.linalg.inv(np.atleast_2d(as_float_array(R)))
    top = vs.degree - 1
    grad = vs.coefficients.gradient()
    zero = PolyMap.zero(vs.coefficients.num_vars, top)
    p = [
        sum((row[a].multiply(grad[j], max_degree=top) for j, row in enumerate(g_taylor)), zero)
        for a in range(R_inv.shape[0])
    ]
    return PolyController(
        [
            sum((p[b] * float(-R_inv[a, b]) for b in range(R_inv.shape[0])), zero)
            for a in range(R_inv.shape[0])
        ]
    )


def _check_safe(sys: System, x: np.ndarray) -> None:
    h = sys.constraint_values(x)
    if np.any(~(h > 0)):
        raise UnsafeStateError(f"The HJB residual is only defined at safe points, got h = {h}")


def hjb_residual(
    vs: ValueSeries,
    controller: PolyController,
    esys: System,
    cost: CostSpec,
    x: ArrayLike,
) -> np.ndarray:
    """
    :param vs: The value series.
    :param controller: The feedback.
    :param esys: The system, whose exact (not Taylor) dynamics are used.
    :param cost: The running cost.
    :param x: Safe states with shape [..., N].
    :return: ``dV/dx (f(x) + g(x) u) + u^T R u / 2 + Q(x) / 2`` with ``u`` the feedback, shape
        [...].
    :raise UnsafeStateError: If some ``h_i(x) <= 0``.
    """
    x = as_float_array(x)
    _check_safe(esys, x)
    u = controller(x)
    x_dot = eval_field(esys, x, u)
    return (
        np.einsum("...i,...i->...", vs.gradient(x), x_dot)
        + 0.5 * np.einsum("...a,ab,...b->...", u, cost.R, u)
        + 0.5 * cost.Q.evaluate(x)
    )


def _unit_rays(num_rays: int, num_vars: int, seed: Optional[int]) -> np.ndarray:
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    rays = rng.standard_normal((num_rays, num_vars))
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def residual_order(
    vs: ValueSeries,
    controller: PolyController,
    esys: System,
    cost: CostSpec,
    num_rays: int = 16,
    radii: Optional[ArrayLike] = None,
    seed: Optional[int] = None,
) -> float:
    """
    Estimate the order of the HJB residual at the origin. The residual is sampled along random
    rays, and its root mean square over the rays at each radius is fitted against the radius on
    a log-log scale.

    :param vs: The value series.
    :param controller: The feedback.
    :param esys: The system.
    :param cost: The running cost.
    :param num_rays: The number of rays.
    :param radii: The distances from the origin to sample each ray at. Defaults to nine
        log-spaced radii in ``[1e-3, 1e-1]``.
    :param seed: The seed of the rays. Defaults to :func:`~bastate.utils.seed_from_env`.
    :return: The least-squares slope of ``log rms(residual)`` against ``log ||x||``, or infinity
        if the residual is zero to rounding.
    """
    radii = np.logspace(-3, -1, 9) if radii is None else as_float_array(radii)
    rays = _unit_rays(num_rays, cost.Q.num_vars, seed)
    points = radii[None, :, None] * rays[:, None, :]
    residuals = hjb_residual(vs, controller, esys, cost, points)
    rms = np.sqrt(np.mean(residuals**2, axis=0))
    scale = np.sqrt(np.mean(cost.Q.evaluate(points) ** 2, axis=0))

    if np.max(rms) <= 1e-13 * np.max(scale):
        return np.inf
    return float(np.polyfit(np.log(radii), np.log(np.maximum(rms, 1e-300)), 1)[0])


@dataclass(frozen=True)
class LyapunovReport:
    """The outcome of sampling the Lyapunov conditions on a ball around the origin."""

    radius: float
    """ The radius of the sampled ball. """

    positive: bool
    """ Whether ``V > 0`` at every sample. """

    decreasing: bool
    """ Whether ``dV/dt < 0`` along the closed loop at every sample. """

    max_derivative: float
    """ The largest ``(dV/dt) / ||x||^2`` over the samples. """

    @property
    def passed(self) -> bool:
        """Whether both conditions hold."""
        return self.positive and self.decreasing


def lyapunov_check(
    vs: ValueSeries,
    controller: PolyController,
    esys: System,
    radius: float,
    num_samples: int = 256,
    seed: Optional[int] = None,
) -> LyapunovReport:
    """
    :param vs: The value series.
    :param controller: The feedback.
    :param esys: The system.
    :param radius: The radius of the ball to sample.
    :param num_samples: The number of samples.
    :param seed: The sampling seed. Defaults to :func:`~bastate.utils.seed_from_env`.
    :return: Whether ``V`` is positive and decreasing along the closed loop on the samples.
    :raise UnsafeStateError: If the ball leaves the safe set.
    """
    num_vars = vs.coefficients.num_vars
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    directions = _unit_rays(num_samples, num_vars, int(rng.integers(2**31)))
    distances = radius * np.maximum(rng.uniform(size=num_samples) ** (1 / num_vars), 1e-2)
    points = distances[:, None] * directions
    _check_safe(esys, points)

    values = vs(points)
    derivatives = np.einsum(
        "...i,...i->...", vs.gradient(points), eval_field(esys, points, controller(points))
    )
    return LyapunovReport(
        radius=radius,
        positive=bool(np.all(values > 0)),
        decreasing=bool(np.all(derivatives < 0)),
        max_derivative=float(np.max(derivatives / distances**2)),
    )
