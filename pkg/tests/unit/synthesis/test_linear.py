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
import scipy.linalg

from bastate.analytic import Var, eval_field
from bastate.barriers import BarrierKind, BarrierSpec
from bastate.scenarios import builtin
from bastate.synthesis import (
    FeedbackGain,
    InfeasiblePlacementError,
    NotStabilizableError,
    closed_loop_eigenvalues,
    ctrb_decompose,
    linearize_closed_form,
    linearize_numeric,
    pole_place,
    solve_care,
)
from tests.util.misc import TF_DEBUGGING_ERROR_TYPES, random_seed

_A = np.array([[1.0, -5.0], [0.0, -1.0]])
_B = np.array([[0.0], [1.0]])
_OBSTACLE = (Var(0) - 2) ** 2 + (Var(1) - 2) ** 2 - 0.25


def _obstacle_linearization(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    spec = BarrierSpec(BarrierKind.INVERSE, 0, gamma, 7.75)
    linearized = linearize_closed_form(_A, _B, spec, _OBSTACLE)
    return linearized.A, linearized.B


def _sorted(values: np.ndarray) -> np.ndarray:
    return np.sort_complex(np.asarray(values, dtype=np.complex128))


@pytest.mark.parametrize(
    "gamma, z_row",
    [(2.0, [12 / 60.0625, -16 / 60.0625, -2.0]), (1.0, [8 / 60.0625, -20 / 60.0625, -1.0])],
)
def test_linearize_closed_form(gamma: float, z_row: list[float]) -> None:
    A_bar, B_bar = _obstacle_linearization(gamma)
    npt.assert_allclose(A_bar[:2], np.hstack([_A, np.zeros((2, 1))]))
    npt.assert_allclose(A_bar[2], z_row, rtol=1e-12)
    npt.assert_allclose(B_bar, [[0.0], [1.0], [4 / 60.0625]], rtol=1e-12)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 5.0])
def test_linearize_numeric_matches_closed_form(gamma: float) -> None:
    linearized = linearize_numeric(builtin("linear2d", gamma).model)
    A_bar, B_bar = _obstacle_linearization(gamma)
    npt.assert_allclose(linearized.A, A_bar, rtol=1e-12, atol=1e-14)
    npt.assert_allclose(linearized.B, B_bar, rtol=1e-12, atol=1e-14)


def test_linearize_numeric_matches_finite_differences() -> None:
    esys = builtin("pendulum").model
    linearized = linearize_numeric(esys)
    step = 1e-6
    columns = []
    for i in range(esys.state_dim):
        offset = np.eye(esys.state_dim)[i] * step
        columns.append((eval_field(esys, offset) - eval_field(esys, -offset)) / (2 * step))
    npt.assert_allclose(linearized.A, np.column_stack(columns), rtol=1e-6, atol=1e-8)
    origin = np.zeros(esys.state_dim)
    b = (eval_field(esys, origin, [step]) - eval_field(esys, origin, [-step])) / (2 * step)
    npt.assert_allclose(linearized.B[:, 0], b, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 5.0])
def test_ctrb_decompose_finds_the_uncontrollable_barrier_pole(gamma: float) -> None:
    decomposition = ctrb_decompose(*_obstacle_linearization(gamma))
    assert decomposition.rank == 2
    npt.assert_allclose(decomposition.uncontrollable_eigenvalues, [-gamma], atol=1e-8)


def test_ctrb_decompose_staircase_form() -> None:
    A_bar, B_bar = _obstacle_linearization(2.0)
    decomposition = ctrb_decompose(A_bar, B_bar)
    T, r = decomposition.T, decomposition.rank
    npt.assert_allclose(T.T @ T, np.eye(3), atol=1e-12)
    npt.assert_allclose(decomposition.A, T.T @ A_bar @ T, atol=1e-9)
    npt.assert_allclose(decomposition.B, T.T @ B_bar, atol=1e-9)
    npt.assert_array_equal(decomposition.B[r:], 0.0)
    npt.assert_array_equal(decomposition.A[r:, :r], 0.0)


def test_ctrb_decompose_of_a_controllable_pair() -> None:
    decomposition = ctrb_decompose([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]])
    assert decomposition.rank == 2
    assert decomposition.uncontrollable_eigenvalues.size == 0


def test_ctrb_decompose_without_inputs() -> None:
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    decomposition = ctrb_decompose(A, np.zeros((2, 1)))
    assert decomposition.rank == 0
    npt.assert_allclose(_sorted(decomposition.uncontrollable_eigenvalues), [-3.0, -1.0])


def test_ctrb_decompose_raises_for_mismatched_shapes() -> None:
    with pytest.raises(TF_DEBUGGING_ERROR_TYPES):
        ctrb_decompose(np.eye(2), np.ones((3, 1)))


@random_seed
def test_uncontrollable_eigenvalues_are_invariant_under_feedback() -> None:
    A_bar, B_bar = _obstacle_linearization(2.0)
    for _ in range(20):
        K = np.random.normal(scale=10.0, size=(1, 3))
        eigenvalues = closed_loop_eigenvalues(A_bar, B_bar, K)
        assert np.min(np.abs(eigenvalues + 2.0)) < 1e-8


@pytest.mark.parametrize("gamma", [0.5, 2.0, 5.0])
def test_pole_place_on_the_obstacle_system(gamma: float) -> None:
    A_bar, B_bar = _obstacle_linearization(gamma)
    gain = pole_place(A_bar, B_bar, [-3.0, -5.0])
    npt.assert_allclose(
        _sorted(closed_loop_eigenvalues(A_bar, B_bar, gain)),
        _sorted([-5.0, -3.0, -gamma]),
        atol=1e-6,
    )
    decomposition = ctrb_decompose(A_bar, B_bar)
    npt.assert_allclose((gain.K @ decomposition.T)[:, decomposition.rank :], 0.0, atol=1e-12)


def test_rounded_gain_places_the_requested_poles() -> None:
    A_bar, B_bar = _obstacle_linearization(2.0)
    eigenvalues = _sorted(closed_loop_eigenvalues(A_bar, B_bar, [[-4.43, 8.38, -5.63]]))
    assert np.min(np.abs(eigenvalues + 2.0)) < 1e-8
    remaining = np.delete(eigenvalues, np.argmin(np.abs(eigenvalues + 2.0)))
    npt.assert_allclose(remaining.real, [-5.0, -3.0], atol=0.15)
    npt.assert_allclose(remaining.imag, 0.0, atol=0.15)


def test_pole_place_with_complex_poles() -> None:
    gain = pole_place([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [-1 + 2j, -1 - 2j])
    npt.assert_allclose(gain.K, [[5.0, 2.0]], atol=1e-9)


@random_seed
def test_pole_place_multi_input() -> None:
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, -2.0, 0.5]])
    B = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    gain = pole_place(A, B, [-1.0, -2.0, -3.0])
    assert gain.K.shape == (2, 3)
    npt.assert_allclose(
        _sorted(closed_loop_eigenvalues(A, B, gain)), [-3.0, -2.0, -1.0], atol=1e-6
    )


def test_pole_place_raises_for_the_wrong_number_of_poles() -> None:
    A_bar, B_bar = _obstacle_linearization(2.0)
    with pytest.raises(InfeasiblePlacementError):
        pole_place(A_bar, B_bar, [-3.0, -5.0, -7.0])


def test_pole_place_raises_for_poles_not_closed_under_conjugation() -> None:
    with pytest.raises(InfeasiblePlacementError):
        pole_place([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [-1 + 2j, -1 + 2j])


def test_pole_place_raises_for_an_unstable_uncontrollable_mode() -> None:
    with pytest.raises(NotStabilizableError):
        pole_place([[1.0, 0.0], [0.0, -1.0]], [[0.0], [1.0]], [-2.0])


def test_feedback_gain() -> None:
    gain = FeedbackGain([[1.0, 2.0]])
    npt.assert_allclose(gain([[1.0, 1.0], [2.0, 0.0]]), [[-3.0], [-2.0]])
    assert gain.to_json() == [[1.0, 2.0]]
    with pytest.raises(ValueError):
        FeedbackGain([1.0, 2.0])


def test_solve_care_double_integrator() -> None:
    P, gain = solve_care([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], np.eye(2), [[1.0]])
    root3 = np.sqrt(3.0)
    npt.assert_allclose(P, [[root3, 1.0], [1.0, root3]], rtol=1e-9)
    npt.assert_allclose(gain.K, [[1.0, root3]], rtol=1e-9)


@random_seed
def test_solve_care_matches_scipy() -> None:
    A = np.random.normal(size=(4, 4))
    B = np.random.normal(size=(4, 2))
    Q2 = np.diag([1.0, 2.0, 0.5, 1.0])
    R = np.array([[2.0, 0.5], [0.5, 1.0]])
    P, gain = solve_care(A, B, Q2, R)
    npt.assert_allclose(P, scipy.linalg.solve_continuous_are(A, B, Q2, R), rtol=1e-7, atol=1e-9)
    assert np.all(closed_loop_eigenvalues(A, B, gain).real < 0)


def test_solve_care_on_a_stabilizable_embedded_system() -> None:
    A_bar, B_bar = _obstacle_linearization(2.0)
    P, gain = solve_care(A_bar, B_bar, np.diag([1.0, 1.0, 0.1]), [[1.0]])
    npt.assert_allclose(P, P.T)
    assert np.all(np.linalg.eigvalsh(P) > 0)
    eigenvalues = closed_loop_eigenvalues(A_bar, B_bar, gain)
    assert np.all(eigenvalues.real < 0)
    assert np.min(np.abs(eigenvalues + 2.0)) < 1e-8


def test_solve_care_raises_for_invalid_weights() -> None:
    with pytest.raises(ValueError):
        solve_care([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], np.eye(2), [[0.0]])
    with pytest.raises(TF_DEBUGGING_ERROR_TYPES):
        solve_care([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], np.eye(3), [[1.0]])


def test_solve_care_raises_for_an_unstabilizable_pair() -> None:
    with pytest.raises(NotStabilizableError):
        solve_care([[1.0, 0.0], [0.0, -1.0]], [[0.0], [1.0]], np.eye(2), [[1.0]])
