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
This module contains the linear synthesis tools for (embedded) systems: linearization at the
origin, the orthogonal controllability staircase, pole placement on the controllable subsystem,
and the continuous algebraic Riccati equation. Gains use the convention ``u = -K x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import tensorflow as tf
from absl import logging

from ..analytic.expression import Expr, compile_expr, gradient
from ..analytic.polynomial import jacobian_at_zero
from ..analytic.system import ControlAffineSystem, taylor_of_field
from ..barriers import BarrierSpec, phi0, phi1_grad
from ..embedding import EmbeddedSystem
from ..logging import write_scalars
from ..types import ArrayLike
from ..utils.misc import DEFAULTS, as_float_array, seed_from_env


class InfeasiblePlacementError(ValueError):
    """
    Raised when the requested poles cannot be placed: their number differs from the dimension of
    the controllable subsystem, or they are not closed under complex conjugation.
    """


class NotStabilizableError(ValueError):
    """Raised when an uncontrollable eigenvalue has non-negative real part."""


class RiccatiConvergenceError(RuntimeError):
    """Raised when the Newton-Kleinman iteration does not reach the residual tolerance."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"Newton-Kleinman iteration stopped after {iterations} iterations with Riccati"
            f" residual {residual:.3e}"
        )
        self.iterations = iterations
        self.residual = residual


def _check_pair(A: np.ndarray, B: np.ndarray) -> None:
    tf.debugging.assert_shapes([(A, ("N", "N")), (B, ("N", "M"))])


@dataclass(frozen=True)
class LinearizedEmbedded:
    """The linearization ``dx/dt = A x + B u`` of an (embedded) system at the origin."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "A", as_float_array(self.A))
        object.__setattr__(self, "B", as_float_array(self.B))
        _check_pair(self.A, self.B)


def linearize_closed_form(
    A: ArrayLike, B: ArrayLike, spec: BarrierSpec, h: Expr
) -> LinearizedEmbedded:
    """
    Linearize a linear system ``dx/dt = A x + B u`` embedded with a single barrier state, from
    the block formulas

    .. math::
        \\bar A = \\begin{bmatrix} A & 0 \\\\
            -\\gamma \\partial_\\eta\\phi_1 h_x + \\phi_0 h_x A & -\\gamma \\partial_\\zeta\\phi_1
            \\end{bmatrix}, \\qquad
        \\bar B = \\begin{bmatrix} B \\\\ \\phi_0 h_x B \\end{bmatrix},

    all evaluated at :math:`(\\beta_0, h(0))`.

    :param A: The system matrix, shape [n, n].
    :param B: The input matrix, shape [n, m].
    :param spec: The barrier spec of the single barrier state.
    :param h: The guarded constraint as an expression in the ``n`` states.
    :return: The linearized embedded system.
    """
    A, B = as_float_array(A), as_float_array(B)
    _check_pair(A, B)
    n = A.shape[0]
    h_x = np.array(
        [float(np.asarray(compile_expr(e)(np.zeros(n)))) for e in gradient(h, n)], dtype=np.float64
    )
    p0 = phi0(spec.kind, spec.beta0)
    d_zeta, d_eta = phi1_grad(spec.kind, spec.beta0, spec.h0)

    z_row = np.concatenate([-spec.gamma * d_eta * h_x + p0 * h_x @ A, [-spec.gamma * d_zeta]])
    A_bar = np.block([[A, np.zeros((n, 1))], [z_row[None, :]]])
    B_bar = np.vstack([B, p0 * h_x @ B])
    return LinearizedEmbedded(A_bar, B_bar)


def linearize_numeric(sys: EmbeddedSystem | ControlAffineSystem) -> LinearizedEmbedded:
    """
    :param sys: The (embedded) system.
    :return: Its linearization at the origin, read from the degree-one Taylor expansion.
    :raise ~bastate.analytic.PoleError: If the dynamics are singular at the origin.
    """
    f_poly, g_poly = taylor_of_field(sys, 1)
    B = np.array([[g.coefficient((0,) * g.num_vars) for g in row] for row in g_poly])
    return LinearizedEmbedded(jacobian_at_zero(f_poly), B)


@dataclass(frozen=True)
class StaircaseDecomposition:
    """
    An orthogonal change of coordinates ``x = T x_t`` that puts a pair ``(A, B)`` in
    controllability staircase form::

        T^T A T = [[A_c, A_cu],     T^T B = [[B_c],
                   [0,   A_u ]],             [0  ]]

    where ``(A_c, B_c)`` is controllable with dimension :attr:`rank`.
    """

    T: np.ndarray
    """ The orthogonal transform, shape [n, n]. """

    rank: int
    """ The dimension ``r`` of the controllable subsystem. """

    A: np.ndarray
    """ The transformed system matrix ``T^T A T``. """

    B: np.ndarray
    """ The transformed input matrix ``T^T B``. """

    uncontrollable_eigenvalues: np.ndarray = field(init=False)
    """ The eigenvalues of ``A_u``, which no state feedback can move. """

    def __post_init__(self) -> None:
        uncontrollable = scipy.linalg.eigvals(self.A[self.rank :, self.rank :])
        object.__setattr__(self, "uncontrollable_eigenvalues", uncontrollable)


def ctrb_decompose(
    A: ArrayLike, B: ArrayLike, tolerance: float = DEFAULTS.RANK_TOLERANCE
) -> StaircaseDecomposition:
    """
    Compute the controllability staircase by successive singular value decompositions. Rank
    decisions treat singular values up to ``tolerance * ||[A B]||`` as zero.

    :param A: The system matrix, shape [n, n].
    :param B: The input matrix, shape [n, m].
    :param tolerance: The relative rank tolerance.
    :return: The decomposition.
    """
    A, B = as_float_array(A), as_float_array(B)
    _check_pair(A, B)
    n = A.shape[0]
    threshold = tolerance * np.linalg.norm(np.hstack([A, B]), 2)

    T = np.eye(n)
    A_t, B_t = A.copy(), B.copy()
    rank, block, coupling = 0, 0, B_t
    while rank < n:
        U, s, _ = scipy.linalg.svd(coupling)
        step = int(np.sum(s > threshold))
        if step == 0:
            break
        transform = scipy.linalg.block_diag(np.eye(rank), U)
        A_t = transform.T @ A_t @ transform
        B_t = transform.T @ B_t
        T = T @ transform
        rank, block = rank + step, step
        coupling = A_t[rank:, rank - block : rank]

    B_t[rank:] = 0.0
    A_t[rank:, :rank] = 0.0
    return StaircaseDecomposition(T, rank, A_t, B_t)


@dataclass(frozen=True)
class FeedbackGain:
    """A linear state feedback ``u = -K x``."""

    K: np.ndarray
    """ The gain, shape [m, n]. """

    def __post_init__(self) -> None:
        K = as_float_array(self.K)
        if K.ndim != 2:
            raise ValueError(f"K must be a matrix, got shape {K.shape}")
        object.__setattr__(self, "K", K)

    def __call__(self, x: ArrayLike) -> np.ndarray:
        """:return: ``-K x`` for states with shape [..., n], with shape [..., m]."""
        return -as_float_array(x) @ self.K.T

    def to_json(self) -> list[list[float]]:
        """:return: ``K`` as nested row-major lists."""
        return self.K.tolist()


def closed_loop_eigenvalues(A: ArrayLike, B: ArrayLike, K: FeedbackGain | ArrayLike) -> np.ndarray:
    """:return: The eigenvalues of ``A - B K``."""
    gain = K.K if isinstance(K, FeedbackGain) else as_float_array(K)
    return scipy.linalg.eigvals(as_float_array(A) - as_float_array(B) @ gain)


def _conjugate_closed(poles: np.ndarray) -> bool:
    return bool(np.allclose(np.sort_complex(poles), np.sort_complex(poles.conj()), atol=1e-9))


def _controllability_matrix(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    columns = [b]
    for _ in range(1, A.shape[0]):
        columns.append(A @ columns[-1])
    return np.column_stack(columns)


def _ackermann(A: np.ndarray, b: np.ndarray, poles: np.ndarray) -> np.ndarray:
    coefficients = np.real(np.poly(poles))
    char = np.zeros_like(A)
    for c in coefficients:
        char = char @ A + c * np.eye(A.shape[0])
    last = np.zeros(A.shape[0])
    last[-1] = 1.0
    return scipy.linalg.solve(_controllability_matrix(A, b).T, last) @ char


def _is_controllable(A: np.ndarray, b: np.ndarray) -> bool:
    s = scipy.linalg.svdvals(_controllability_matrix(A, b / np.linalg.norm(b)))
    return bool(s[-1] > 1e-8 * s[0])


def _cyclic_prefeedback(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = B.shape[1]
    for i in range(m):
        v = np.eye(m)[i]
        if np.any(B @ v) and _is_controllable(A, B @ v):
            return np.zeros((m, A.shape[0])), v
    rng = np.random.default_rng(seed_from_env())
    scale = max(np.linalg.norm(A), 1.0) / max(np.linalg.norm(B), 1e-12)
    for _ in range(100):
        K0 = scale * rng.standard_normal((m, A.shape[0]))
        v = rng.standard_normal(m)
        if _is_controllable(A - B @ K0, B @ v):
            return K0, v
    raise InfeasiblePlacementError("Could not reduce the controllable subsystem to a single input")


def pole_place(A: ArrayLike, B: ArrayLike, poles: Sequence[complex]) -> FeedbackGain:
    """
    Place the poles of the controllable subsystem of ``(A, B)``, e.g.

        >>> pole_place([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [-1.0, -2.0]).K.round(9)
        array([[2., 3.]])

    The gain has no component along the uncontrollable staircase coordinates. Multi-input
    systems are reduced to single-input by cyclic pre-feedback.

    :param A: The system matrix, shape [n, n].
    :param B: The input matrix, shape [n, m].
    :param poles: The desired closed-loop poles of the controllable subsystem.
    :return: The gain. The closed-loop spectrum is ``poles`` plus the uncontrollable eigenvalues.
    :raise InfeasiblePlacementError: If the number of poles differs from the controllable
        dimension, or they are not closed under conjugation.
    :raise NotStabilizableError: If an uncontrollable eigenvalue has non-negative real part.
    """
    A, B = as_float_array(A), as_float_array(B)
    decomposition = ctrb_decompose(A, B)
    r = decomposition.rank
    poles = np.asarray(poles, dtype=np.complex128)

    if len(poles) != r:
        raise InfeasiblePlacementError(
            f"Got {len(poles)} poles for a controllable subsystem of dimension {r}"
        )
    if not _conjugate_closed(poles):
        raise InfeasiblePlacementError(f"Poles {poles} are not closed under conjugation")
    unstable = decomposition.uncontrollable_eigenvalues.real >= 0
    if np.any(unstable):
        raise NotStabilizableError(
            "Uncontrollable eigenvalues"
            f" {decomposition.uncontrollable_eigenvalues[unstable]} are not stable"
        )

    m, n = B.shape[1], A.shape[0]
    K_t = np.zeros((m, n))
    if r > 0:
        A_c, B_c = decomposition.A[:r, :r], decomposition.B[:r]
        K0, v = _cyclic_prefeedback(A_c, B_c)
        k = _ackermann(A_c - B_c @ K0, B_c @ v, poles)
        K_t[:, :r] = K0 + np.outer(v, k)

    return FeedbackGain(K_t @ decomposition.T.T)


def _riccati_residual(
    A: np.ndarray, B: np.ndarray, Q2: np.ndarray, R: np.ndarray, P: np.ndarray
) -> np.ndarray:
    return A.T @ P + P @ A - P @ B @ scipy.linalg.solve(R, B.T @ P, assume_a="pos") + Q2


def solve_care(
    A: ArrayLike,
    B: ArrayLike,
    Q2: ArrayLike,
    R: ArrayLike,
    max_iterations: int = 50,
    rtol: float = 1e-10,
) -> tuple[np.ndarray, FeedbackGain]:
    """
    Solve the continuous algebraic Riccati equation

    .. math:: A^T P + P A - P B R^{-1} B^T P + Q_2 = 0

    by Newton-Kleinman iteration, starting from a stabilizing pole placement at ``-1, ..., -r``.

    :param A: The system matrix, shape [n, n].
    :param B: The input matrix, shape [n, m].
    :param Q2: The symmetric positive semi-definite state weight, shape [n, n].
    :param R: The symmetric positive definite input weight, shape [m, m].
    :param max_iterations: The maximum number of Newton steps.
    :param rtol: The Frobenius-norm residual tolerance, relative to ``||Q2||``.
    :return: The stabilizing solution ``P`` and the gain ``K = R^{-1} B^T P``.
    :raise NotStabilizableError: If ``(A, B)`` is not stabilizable.
    :raise RiccatiConvergenceError: If the iteration does not reach the tolerance.
    :raise ValueError: If ``R`` is not positive definite.
    """
    A, B, Q2, R = (as_float_array(M) for M in (A, B, Q2, R))
    tf.debugging.assert_shapes(
        [(A, ("N", "N")), (B, ("N", "M")), (Q2, ("N", "N")), (R, ("M", "M"))]
    )
    if np.min(np.linalg.eigvalsh((R + R.T) / 2)) <= 0:
        raise ValueError(f"R must be positive definite, got {R}")
    Q2 = (Q2 + Q2.T) / 2

    r = ctrb_decompose(A, B).rank
    gain = pole_place(A, B, -np.arange(1.0, r + 1.0)).K
    tolerance = rtol * max(np.linalg.norm(Q2), np.finfo(np.float64).tiny)

    previous, iteration = np.inf, 0
    while iteration < max_iterations:
        iteration += 1
        A_k = A - B @ gain
        P = scipy.linalg.solve_continuous_lyapunov(A_k.T, -(Q2 + gain.T @ R @ gain))
        P = (P + P.T) / 2
        gain = scipy.linalg.solve(R, B.T @ P, assume_a="pos")

        residual = float(np.linalg.norm(_riccati_residual(A, B, Q2, R, P)))
        logging.debug("Newton-Kleinman iteration %d: Riccati residual %.3e", iteration, residual)
        write_scalars("care", {"residual": residual}, step=iteration)

        # stop once converged and no longer improving quadratically
        if residual <= tolerance and (residual >= 0.5 * previous or residual <= 1e-3 * tolerance):
            break
        previous = residual

    if residual > tolerance:
        raise RiccatiConvergenceError(iteration, residual)

    logging.info("Solved the Riccati equation with residual %.3e", residual)
    return P, FeedbackGain(scipy.linalg.solve(R, B.T @ P, assume_a="pos"))
