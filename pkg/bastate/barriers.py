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
This module contains the catalogue of barrier functions :math:`B` used to build barrier states,
with their derivatives, inverses and the two auxiliary functions

.. math:: \phi_0 = B' \circ B^{-1}, \qquad \phi_1(\zeta, \eta),

where :math:`\phi_1` vanishes exactly on the graph :math:`\zeta = B(\eta)`. Every function is
vectorized over NumPy arrays, and has a symbolic counterpart (suffix ``_expr``) over
:class:`~bastate.analytic.Expr` used to build the embedded dynamics.

The exponential kinds are evaluated through ``expm1``/``log1p`` formulations and refuse barrier
arguments beyond :data:`~bastate.utils.DEFAULTS`\ ``.ZETA_CAP`` rather than return infinities.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .analytic.expression import Expr, atanh_expneg, exp, log, recip, sinh, tanh
from .types import ArrayLike
from .utils.misc import DEFAULTS, as_float_array

Real = Union[float, np.ndarray]
""" A float for scalar inputs, else an array with the broadcast shape of the inputs. """


class BarrierKind(enum.Enum):
    """The supported barrier functions, by their serialized name."""

    INVERSE = "inverse"
    """ :math:`B(\\eta) = 1/\\eta`. """

    LOG = "log"
    """ :math:`B(\\eta) = \\log((1 + \\eta)/\\eta)`. """

    INVHYP = "invhyp"
    """ :math:`B(\\eta) = 2 \\tanh^{-1}(e^{-\\eta})`. """


class BarrierDomainError(ValueError):
    """Raised when a barrier function or its inverse is evaluated at a non-positive argument."""


class BarrierOverflowError(OverflowError):
    """Raised when an exponential barrier kind is evaluated beyond the barrier-state cap."""


def _positive(value: ArrayLike, name: str) -> np.ndarray:
    value = as_float_array(value)
    if np.any(~(value > 0)):
        raise BarrierDomainError(f"{name} must be positive, got {value}")
    return value


def _capped(kind: BarrierKind, zeta: ArrayLike) -> np.ndarray:
    zeta = as_float_array(zeta)
    if kind is not BarrierKind.INVERSE and np.any(np.abs(zeta) > DEFAULTS.ZETA_CAP):
        raise BarrierOverflowError(
            f"|zeta| exceeds {DEFAULTS.ZETA_CAP} for the {kind.value} barrier, got {zeta}"
        )
    return zeta


def _real(value: np.ndarray) -> Real:
    return float(value) if value.ndim == 0 else value


def _invhyp(eta: np.ndarray) -> np.ndarray:
    # B(B(eta)) = eta for this kind, so this is also its inverse
    far = eta >= 1.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        far_value = 2.0 * np.arctanh(np.exp(-np.where(far, eta, 1.0)))
        near = np.where(far, 1.0, eta)
        near_value = np.log1p(np.exp(-near)) - np.log(-np.expm1(-near))
    return np.where(far, far_value, near_value)


def bf_value(kind: BarrierKind, eta: ArrayLike) -> Real:
    """
    :param kind: The barrier function.
    :param eta: Positive arguments.
    :return: :math:`B(\\eta)`, finite for every positive argument.
    :raise BarrierDomainError: If any ``eta <= 0``.
    """
    eta = _positive(eta, "eta")
    if kind is BarrierKind.INVERSE:
        return _real(1.0 / eta)
    if kind is BarrierKind.LOG:
        return _real(np.log1p(1.0 / eta))
    return _real(_invhyp(eta))


def bf_deriv(kind: BarrierKind, eta: ArrayLike) -> Real:
    """
    :param kind: The barrier function.
    :param eta: Positive arguments.
    :return: :math:`B'(\\eta)`, strictly negative.
    :raise BarrierDomainError: If any ``eta <= 0``.
    """
    eta = _positive(eta, "eta")
    if kind is BarrierKind.INVERSE:
        return _real(-1.0 / eta**2)
    if kind is BarrierKind.LOG:
        return _real(-1.0 / (eta * (1.0 + eta)))
    # -1 / sinh(eta), written to stay finite for large eta
    return _real(-2.0 * np.exp(-eta) / -np.expm1(-2.0 * eta))


def bf_inverse(kind: BarrierKind, zeta: ArrayLike) -> Real:
    """
    :param kind: The barrier function.
    :param zeta: Positive barrier values.
    :return: The :math:`\\eta > 0` with :math:`B(\\eta) = \\zeta`. The inverse-hyperbolic
        barrier underflows to exactly zero in double precision for :math:`\\eta \\gtrsim 745`,
        so constraint values that large have no barrier value to invert.
    :raise BarrierDomainError: If any ``zeta <= 0``.
    :raise BarrierOverflowError: If ``zeta`` exceeds the cap for an exponential kind.
    """
    zeta = _capped(kind, _positive(zeta, "zeta"))
    if kind is BarrierKind.INVERSE:
        return _real(1.0 / zeta)
    if kind is BarrierKind.LOG:
        return _real(1.0 / np.expm1(zeta))
    return _real(_invhyp(zeta))


def phi0(kind: BarrierKind, zeta: ArrayLike) -> Real:
    """
    :param kind: The barrier function.
    :param zeta: Barrier values, any real.
    :return: :math:`\\phi_0(\\zeta) = B'(B^{-1}(\\zeta))`, continued analytically to all reals.
    :raise BarrierOverflowError: If ``zeta`` exceeds the cap for an exponential kind.
    """
    zeta = _capped(kind, zeta)
    if kind is BarrierKind.INVERSE:
        return _real(-(zeta**2))
    if kind is BarrierKind.LOG:
        return _real(-4.0 * np.sinh(zeta / 2.0) ** 2)
    return _real(-np.sinh(zeta))


def phi1(kind: BarrierKind, zeta: ArrayLike, eta: ArrayLike) -> Real:
    """
    :param kind: The barrier function.
    :param zeta: Barrier values.
    :param eta: Constraint values.
    :return: :math:`\\phi_1(\\zeta, \\eta)`, which is zero exactly when :math:`\\zeta = B(\\eta)`.
    :raise BarrierOverflowError: If ``zeta`` exceeds the cap for an exponential kind.
    """
    zeta, eta = _capped(kind, zeta), as_float_array(eta)
    if kind is BarrierKind.INVERSE:
        return _real(eta * zeta**2 - zeta)
    if kind is BarrierKind.LOG:
        e = np.expm1(zeta)
        return _real(eta * e**2 - e)
    return _real(np.tanh(zeta / 2.0) - np.exp(-eta))


def phi1_grad(kind: BarrierKind, zeta: ArrayLike, eta: ArrayLike) -> tuple[Real, Real]:
    """
    :param kind: The barrier function.
    :param zeta: Barrier values.
    :param eta: Constraint values.
    :return: The partial derivatives of :func:`phi1` with respect to ``zeta`` and ``eta``.
    :raise BarrierOverflowError: If ``zeta`` exceeds the cap for an exponential kind.
    """
    zeta, eta = _capped(kind, zeta), as_float_array(eta)
    if kind is BarrierKind.INVERSE:
        return _real(2.0 * eta * zeta - 1.0), _real(zeta**2)
    if kind is BarrierKind.LOG:
        e = np.expm1(zeta)
        return _real(np.exp(zeta) * (2.0 * eta * e - 1.0)), _real(e**2)
    return _real(0.5 * (1.0 - np.tanh(zeta / 2.0) ** 2)), _real(np.exp(-eta))


def bf_expr(kind: BarrierKind, eta: Expr) -> Expr:
    """:return: The expression :math:`B(\\eta)`."""
    if kind is BarrierKind.INVERSE:
        return recip(eta)
    if kind is BarrierKind.LOG:
        return log(1.0 + recip(eta))
    return 2.0 * atanh_expneg(eta)


def phi0_expr(kind: BarrierKind, zeta: Expr) -> Expr:
    """:return: The expression :math:`\\phi_0(\\zeta)`."""
    if kind is BarrierKind.INVERSE:
        return -(zeta**2)
    if kind is BarrierKind.LOG:
        return -4.0 * sinh(0.5 * zeta) ** 2
    return -sinh(zeta)


def phi1_expr(kind: BarrierKind, zeta: Expr, eta: Expr) -> Expr:
    """:return: The expression :math:`\\phi_1(\\zeta, \\eta)`."""
    if kind is BarrierKind.INVERSE:
        return eta * zeta**2 - zeta
    if kind is BarrierKind.LOG:
        e = exp(zeta) - 1.0
        return eta * e**2 - e
    return tanh(0.5 * zeta) - exp(-eta)


@dataclass(frozen=True)
class BarrierSpec:
    """
    A barrier function guarding one constraint ``h_{h_index}``, with the rate ``gamma`` of the
    barrier-state perturbation and the cached value ``beta0 = B(h(0))``.
    """

    kind: BarrierKind
    """ The barrier function. """

    h_index: int
    """ The index of the guarded constraint in its system's constraint list. """

    gamma: float
    """ The positive rate parameter. """

    h0: float
    """ The constraint value at the origin, positive. """

    beta0: float = field(init=False)
    """ The barrier value at the origin. """

    def __post_init__(self) -> None:
        if not isinstance(self.kind, BarrierKind):
            object.__setattr__(self, "kind", BarrierKind(self.kind))
        if self.h_index < 0:
            raise ValueError(f"h_index must be non-negative, got {self.h_index}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.h0 > 0:
            raise ValueError(
                f"The origin must be strictly safe for constraint {self.h_index}, got h(0) ="
                f" {self.h0}"
            )
        object.__setattr__(self, "beta0", float(bf_value(self.kind, self.h0)))
