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

import numpy as np
import numpy.testing as npt
import pytest

from bastate.analytic import Var, compile_expr
from bastate.barriers import (
    BarrierDomainError,
    BarrierKind,
    BarrierOverflowError,
    BarrierSpec,
    bf_deriv,
    bf_expr,
    bf_inverse,
    bf_value,
    phi0,
    phi0_expr,
    phi1,
    phi1_expr,
    phi1_grad,
)
from bastate.utils import DEFAULTS

ALL_KINDS = list(BarrierKind)
_ETA = np.logspace(-4, 4, 400)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_phi0_composed_with_barrier_is_barrier_derivative(kind: BarrierKind) -> None:
    deriv = bf_deriv(kind, _ETA)
    error = np.abs(phi0(kind, bf_value(kind, _ETA)) - deriv)
    assert np.all(error <= 1e-9 * np.maximum(1.0, np.abs(deriv)))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_phi1_vanishes_on_the_barrier_graph(kind: BarrierKind) -> None:
    assert np.max(np.abs(phi1(kind, bf_value(kind, _ETA), _ETA))) <= 1e-10


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_phi1_is_nonzero_off_the_barrier_graph(kind: BarrierKind) -> None:
    eta = np.logspace(-4, 2, 400)
    zeta = bf_value(kind, eta)
    assert np.all(np.abs(phi1(kind, 1.1 * zeta, eta)) > 0)


@pytest.mark.parametrize(
    "kind, eta",
    [
        (BarrierKind.INVERSE, np.logspace(-3, 3, 400)),
        (BarrierKind.LOG, np.logspace(-3, 3, 400)),
        (BarrierKind.INVHYP, np.logspace(-3, np.log10(700.0), 400)),
    ],
)
def test_bf_value_inverts_bf_inverse(kind: BarrierKind, eta: np.ndarray) -> None:
    zeta = bf_value(kind, eta)
    npt.assert_allclose(bf_value(kind, bf_inverse(kind, zeta)), zeta, rtol=1e-12)
    npt.assert_allclose(bf_inverse(kind, zeta), eta, rtol=1e-12)


def test_invhyp_barrier_underflows_to_an_uninvertible_zero() -> None:
    zeta = bf_value(BarrierKind.INVHYP, 800.0)
    assert zeta == 0.0
    with pytest.raises(BarrierDomainError):
        bf_inverse(BarrierKind.INVHYP, zeta)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_phi0_is_nonpositive_on_nonnegative_barrier_values(kind: BarrierKind) -> None:
    zeta = np.concatenate([[0.0], np.linspace(1e-4, 0.99 * DEFAULTS.ZETA_CAP, 400)])
    assert np.all(phi0(kind, zeta) <= 0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_phi1_grad_in_zeta_is_positive_on_the_barrier_graph(kind: BarrierKind) -> None:
    d_zeta, _ = phi1_grad(kind, bf_value(kind, _ETA), _ETA)
    assert np.all(np.asarray(d_zeta) > 0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_bf_deriv_is_negative(kind: BarrierKind) -> None:
    assert np.all(bf_deriv(kind, np.logspace(-4, 2, 400)) < 0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_bf_deriv_matches_finite_differences(kind: BarrierKind) -> None:
    eta = np.array([0.1, 0.5, 1.0, 3.0])
    step = 1e-6 * eta
    numeric = (bf_value(kind, eta + step) - bf_value(kind, eta - step)) / (2 * step)
    npt.assert_allclose(bf_deriv(kind, eta), numeric, rtol=1e-6)


@pytest.mark.parametrize(
    "kind, eta, expected",
    [
        (BarrierKind.INVERSE, 0.25, 4.0),
        (BarrierKind.LOG, 1.0, np.log(2.0)),
        (BarrierKind.INVHYP, 1.0, 2 * np.arctanh(np.exp(-1.0))),
    ],
)
def test_bf_value_known_values(kind: BarrierKind, eta: float, expected: float) -> None:
    npt.assert_allclose(bf_value(kind, eta), expected, rtol=1e-14)


def test_bf_value_returns_float_for_scalar_input() -> None:
    assert isinstance(bf_value(BarrierKind.LOG, 2.0), float)
    assert bf_value(BarrierKind.LOG, [2.0, 3.0]).shape == (2,)  # type: ignore[union-attr]


def test_invhyp_barrier_is_an_involution() -> None:
    eta = np.array([0.05, 0.5, 1.0, 2.0, 10.0])
    npt.assert_allclose(bf_value(BarrierKind.INVHYP, bf_value(BarrierKind.INVHYP, eta)), eta)


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("eta", [0.0, -1.0, np.nan])
def test_barrier_functions_raise_for_non_positive_arguments(kind: BarrierKind, eta: float) -> None:
    with pytest.raises(BarrierDomainError):
        bf_value(kind, eta)
    with pytest.raises(BarrierDomainError):
        bf_deriv(kind, eta)
    with pytest.raises(BarrierDomainError):
        bf_inverse(kind, eta)


@pytest.mark.parametrize("kind", [BarrierKind.LOG, BarrierKind.INVHYP])
def test_exponential_kinds_refuse_large_barrier_values(kind: BarrierKind) -> None:
    with pytest.raises(BarrierOverflowError):
        phi0(kind, 701.0)
    with pytest.raises(BarrierOverflowError):
        phi1(kind, -701.0, 1.0)
    with pytest.raises(BarrierOverflowError):
        bf_inverse(kind, 800.0)


def test_inverse_kind_has_no_cap() -> None:
    npt.assert_allclose(phi0(BarrierKind.INVERSE, 1e3), -1e6)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_phi0_extends_to_negative_barrier_values(kind: BarrierKind) -> None:
    values = phi0(kind, np.array([-2.0, -0.5, 0.0]))
    assert np.all(np.isfinite(values))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_phi1_grad_matches_finite_differences(kind: BarrierKind) -> None:
    zeta, eta, step = 0.7, 1.3, 1e-6
    d_zeta, d_eta = phi1_grad(kind, zeta, eta)
    by_zeta = (phi1(kind, zeta + step, eta) - phi1(kind, zeta - step, eta)) / (2 * step)
    by_eta = (phi1(kind, zeta, eta + step) - phi1(kind, zeta, eta - step)) / (2 * step)
    npt.assert_allclose(d_zeta, by_zeta, rtol=1e-6)
    npt.assert_allclose(d_eta, by_eta, rtol=1e-6)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_symbolic_barrier_functions_match_numeric_ones(kind: BarrierKind) -> None:
    zeta, eta = Var(0), Var(1)
    points = np.array([[0.3, 0.5], [1.2, 2.0], [2.5, 0.1]])
    npt.assert_allclose(compile_expr(bf_expr(kind, eta))(points), bf_value(kind, points[:, 1]))
    npt.assert_allclose(compile_expr(phi0_expr(kind, zeta))(points), phi0(kind, points[:, 0]))
    npt.assert_allclose(
        compile_expr(phi1_expr(kind, zeta, eta))(points),
        phi1(kind, points[:, 0], points[:, 1]),
        atol=1e-14,
    )


def test_barrier_spec_caches_the_barrier_at_the_origin() -> None:
    spec = BarrierSpec(BarrierKind.INVERSE, 0, 2.0, 7.75)
    assert spec.beta0 == pytest.approx(1 / 7.75)


def test_barrier_spec_coerces_kind_from_string() -> None:
    assert BarrierSpec("log", 0, 1.0, 1.0).kind is BarrierKind.LOG  # type: ignore[arg-type]


@pytest.mark.parametrize(
    "h_index, gamma, h0", [(-1, 1.0, 1.0), (0, 0.0, 1.0), (0, -1.0, 1.0), (0, 1.0, 0.0)]
)
def test_barrier_spec_raises_for_invalid_fields(h_index: int, gamma: float, h0: float) -> None:
    with pytest.raises(ValueError):
        BarrierSpec(BarrierKind.INVERSE, h_index, gamma, h0)
