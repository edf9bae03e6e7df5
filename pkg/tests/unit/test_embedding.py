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

import dataclasses

import numpy as np
import numpy.testing as npt
import pytest

from bastate.analytic import ControlAffineSystem, Var, eval_field, lie_derivatives, taylor_of_field
from bastate.barriers import BarrierKind, BarrierSpec, bf_deriv, bf_value
from bastate.embedding import (
    BasBlock,
    BasMode,
    BasRhs,
    EmbeddedSystem,
    UnsafeStateError,
    augment,
    bas_rhs,
    fused_bas_rhs,
    init_bas,
    single_bas_rhs,
)
from bastate.simulation import integrate
from tests.util.misc import linear_system, random_seed

x1, x2 = Var(0), Var(1)


def _obstacle_system() -> ControlAffineSystem:
    return linear_system(
        [[1.0, -5.0], [0.0, -1.0]], [[0.0], [1.0]], ((x1 - 2) ** 2 + (x2 - 2) ** 2 - 0.25,)
    )


def _two_disc_system() -> ControlAffineSystem:
    return ControlAffineSystem(
        [x2, -x1 - x2],
        [[0.0], [1.0 + 0.5 * x1**2]],
        [(x1 - 2) ** 2 + x2**2 - 1, (x1 + 2) ** 2 + x2**2 - 1],
    )


def _no_input(state: np.ndarray) -> np.ndarray:
    return np.zeros(np.shape(state)[:-1] + (1,))


def _safe_points(sys: ControlAffineSystem, num: int) -> np.ndarray:
    points = np.random.uniform(-1.0, 1.0, (4 * num, sys.state_dim))
    return points[np.all(sys.constraint_values(points) > 0.05, axis=-1)][:num]


def test_bas_block_z_dim() -> None:
    sys = _two_disc_system()
    assert BasBlock.for_system(sys, BasMode.FUSED, BarrierKind.LOG, [1.0, 2.0]).z_dim == 1
    assert BasBlock.for_system(sys, BasMode.PER_CONSTRAINT, BarrierKind.LOG, [1.0, 2.0]).z_dim == 2
    assert BasBlock.for_system(sys, "single", "inverse", [1.0], [1]).z_dim == 1


def test_bas_block_for_system_reads_h0_at_the_origin() -> None:
    block = BasBlock.for_system(_obstacle_system(), BasMode.SINGLE, BarrierKind.INVERSE, [2.0])
    (spec,) = block.specs
    assert (spec.h_index, spec.gamma, spec.h0) == (0, 2.0, 7.75)
    assert spec.beta0 == pytest.approx(1 / 7.75)


@pytest.mark.parametrize(
    "mode, specs",
    [
        (BasMode.SINGLE, []),
        (
            BasMode.SINGLE,
            [BarrierSpec(BarrierKind.LOG, 0, 1.0, 1.0), BarrierSpec(BarrierKind.LOG, 1, 1.0, 1.0)],
        ),
        (
            BasMode.FUSED,
            [BarrierSpec(BarrierKind.LOG, 0, 1.0, 1.0), BarrierSpec(BarrierKind.INVERSE, 1, 1, 1)],
        ),
        (
            BasMode.PER_CONSTRAINT,
            [BarrierSpec(BarrierKind.LOG, 0, 1.0, 1.0), BarrierSpec(BarrierKind.LOG, 0, 1.0, 1.0)],
        ),
    ],
)
def test_bas_block_raises_for_invalid_specs(mode: BasMode, specs: list[BarrierSpec]) -> None:
    with pytest.raises(ValueError):
        BasBlock(mode, specs)


def test_bas_block_for_system_raises_for_invalid_input() -> None:
    sys = _two_disc_system()
    with pytest.raises(ValueError):
        BasBlock.for_system(sys, BasMode.FUSED, BarrierKind.LOG, [1.0])
    with pytest.raises(ValueError):
        BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.LOG, [1.0], [2])


def test_embedded_system_raises_for_a_missing_constraint() -> None:
    block = BasBlock(BasMode.SINGLE, [BarrierSpec(BarrierKind.LOG, 1, 1.0, 1.0)])
    with pytest.raises(ValueError):
        augment(_obstacle_system(), block)


def test_init_bas_places_the_state_on_the_graph() -> None:
    sys = _obstacle_system()
    block = BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.INVERSE, [2.0])
    npt.assert_allclose(init_bas(block, sys, [1.0, 1.0]), [1 / 1.75 - 1 / 7.75])
    npt.assert_allclose(init_bas(block, sys, np.zeros((3, 2))), np.zeros((3, 1)), atol=1e-15)


def test_init_bas_sums_barriers_in_fused_mode() -> None:
    sys = _two_disc_system()
    x0 = np.array([0.5, 0.5])
    h, h0 = sys.constraint_values(x0), sys.constraint_values(np.zeros(2))
    fused = BasBlock.for_system(sys, BasMode.FUSED, BarrierKind.LOG, [1.0, 1.0])
    per = BasBlock.for_system(sys, BasMode.PER_CONSTRAINT, BarrierKind.LOG, [1.0, 1.0])
    expected = np.asarray(bf_value(BarrierKind.LOG, h)) - np.asarray(bf_value(BarrierKind.LOG, h0))
    npt.assert_allclose(init_bas(per, sys, x0), expected)
    npt.assert_allclose(init_bas(fused, sys, x0), [expected.sum()])


def test_init_bas_raises_for_unsafe_states() -> None:
    sys = _obstacle_system()
    block = BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.INVERSE, [2.0])
    with pytest.raises(UnsafeStateError):
        init_bas(block, sys, [2.0, 2.0])
    with pytest.raises(UnsafeStateError):
        init_bas(block, sys, [2.5, 2.0])


@pytest.mark.parametrize("kind", list(BarrierKind))
@random_seed
def test_single_bas_rhs_on_the_graph_is_the_barrier_rate(kind: BarrierKind) -> None:
    sys = _two_disc_system()
    block = BasBlock.for_system(sys, BasMode.SINGLE, kind, [3.0], [0])
    x = _safe_points(sys, 10)
    z = init_bas(block, sys, x)[..., 0]
    rhs = single_bas_rhs(block.specs[0], sys, x, z)
    lf, lg = lie_derivatives(sys, 0, x)
    slope = np.asarray(bf_deriv(kind, sys.constraint_values(x)[..., 0]))
    npt.assert_allclose(rhs.drift, slope * lf, rtol=1e-8, atol=1e-10)
    npt.assert_allclose(rhs.gain, slope[..., None] * lg, rtol=1e-8, atol=1e-10)


@random_seed
def test_fused_bas_rhs_on_the_graph_is_the_sum_of_barrier_rates() -> None:
    sys = _two_disc_system()
    block = BasBlock.for_system(sys, BasMode.FUSED, BarrierKind.INVERSE, [5.0, 5.0])
    x = _safe_points(sys, 10)
    rhs = fused_bas_rhs(block, sys, x, init_bas(block, sys, x)[..., 0])
    h = sys.constraint_values(x)
    expected = sum(
        np.asarray(bf_deriv(BarrierKind.INVERSE, h[..., i])) * lie_derivatives(sys, i, x)[0]
        for i in range(2)
    )
    npt.assert_allclose(rhs.drift, expected, rtol=1e-8)


def test_bas_rhs_off_the_graph_pulls_back_towards_it() -> None:
    sys = _obstacle_system()
    block = BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.INVERSE, [2.0])
    x = np.array([0.0, 0.0])
    # at an equilibrium of the base system only the perturbation acts
    above = bas_rhs(block, sys, x, [0.1]).drift
    below = bas_rhs(block, sys, x, [-0.1]).drift
    assert above[0] < 0 < below[0]


def test_bas_rhs_stacks_per_constraint_states() -> None:
    sys = _two_disc_system()
    block = BasBlock.for_system(sys, BasMode.PER_CONSTRAINT, BarrierKind.LOG, [1.0, 3.0])
    x, z = np.array([[0.2, 0.1]]), np.array([[0.01, -0.02]])
    rhs = bas_rhs(block, sys, x, z)
    assert rhs.drift.shape == (1, 2)
    assert rhs.gain.shape == (1, 2, 1)
    second = single_bas_rhs(block.specs[1], sys, x, z[..., 1])
    npt.assert_allclose(rhs.drift[..., 1], second.drift)
    npt.assert_allclose(rhs.gain[..., 1, :], second.gain)
    with pytest.raises(ValueError):
        bas_rhs(block, sys, x, [0.0])


def test_bas_rhs_raises_for_unsafe_states() -> None:
    sys = _two_disc_system()
    block = BasBlock.for_system(sys, BasMode.FUSED, BarrierKind.INVERSE, [1.0, 1.0])
    with pytest.raises(UnsafeStateError):
        bas_rhs(block, sys, [-2.0, 1.0], [0.0])


def test_bas_rhs_rate() -> None:
    rhs = BasRhs(np.array([1.0, 2.0]), np.array([[1.0, 0.0], [0.5, 0.5]]))
    npt.assert_allclose(rhs.rate([[2.0, 1.0], [2.0, 2.0]]), [3.0, 4.0])


@pytest.mark.parametrize("mode", [BasMode.FUSED, BasMode.PER_CONSTRAINT])
def test_embedded_origin_is_an_equilibrium(mode: BasMode) -> None:
    esys = augment(_two_disc_system(), BasBlock.for_system(_two_disc_system(), mode, "log", [1, 2]))
    npt.assert_allclose(eval_field(esys, np.zeros(esys.state_dim)), 0.0, atol=1e-12)
    npt.assert_allclose(esys.model.drift_at(np.zeros(esys.state_dim)), 0.0, atol=1e-12)


@pytest.mark.parametrize(
    "mode, kind",
    [
        (BasMode.SINGLE, BarrierKind.INVERSE),
        (BasMode.FUSED, BarrierKind.INVERSE),
        (BasMode.FUSED, BarrierKind.LOG),
        (BasMode.PER_CONSTRAINT, BarrierKind.INVHYP),
    ],
)
@random_seed
def test_embedded_model_agrees_with_the_numeric_field(mode: BasMode, kind: BarrierKind) -> None:
    sys = _two_disc_system()
    block = BasBlock.for_system(sys, mode, kind, [2.0] if mode is BasMode.SINGLE else [2.0, 0.5])
    esys = augment(sys, block)
    x = _safe_points(sys, 8)
    xbar = np.concatenate([x, init_bas(block, sys, x) + 0.01], axis=-1)
    u = np.random.normal(size=(len(x), 1))
    npt.assert_allclose(
        eval_field(esys, xbar, u), eval_field(esys.model, xbar, u), rtol=1e-9, atol=1e-12
    )
    npt.assert_allclose(esys.drift_at(xbar), esys.model.drift_at(xbar), rtol=1e-9, atol=1e-12)
    npt.assert_allclose(esys.input_map_at(xbar), esys.model.input_map_at(xbar), rtol=1e-9)


def test_embedded_system_embed_and_graph_deviation() -> None:
    sys = _obstacle_system()
    esys = augment(sys, BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.INVERSE, [2.0]))
    assert (esys.state_dim, esys.input_dim) == (3, 1)
    xbar = esys.embed([1.0, 1.0])
    npt.assert_allclose(xbar, [1.0, 1.0, 1 / 1.75 - 1 / 7.75])
    npt.assert_allclose(esys.graph_deviation(xbar), [0.0], atol=1e-15)
    npt.assert_allclose(esys.graph_deviation(xbar + [0.0, 0.0, 0.2]), [0.2])
    npt.assert_allclose(esys.constraint_values(xbar), [1.75])
    with pytest.raises(ValueError):
        esys.split([1.0, 1.0])


def test_embedded_system_taylor_of_field() -> None:
    sys = _obstacle_system()
    esys = augment(sys, BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.INVERSE, [2.0]))
    f, g = taylor_of_field(esys, 2)
    assert len(f) == 3 and len(g) == 3
    assert f[0].terms == {(1, 0, 0): 1.0, (0, 1, 0): -5.0}
    assert all(poly.coefficient((0, 0, 0)) == pytest.approx(0.0, abs=1e-12) for poly in f)


def test_embedded_system_is_frozen() -> None:
    sys = _obstacle_system()
    esys = EmbeddedSystem(sys, BasBlock.for_system(sys, "single", "inverse", [1.0]))
    with pytest.raises(dataclasses.FrozenInstanceError):
        esys.base = sys  # type: ignore[misc]


def test_embedded_fields_share_one_barrier_evaluation(monkeypatch: pytest.MonkeyPatch) -> None:
    sys = _two_disc_system()
    esys = augment(sys, BasBlock.for_system(sys, BasMode.PER_CONSTRAINT, "log", [1.0, 2.0]))
    calls: list[tuple[object, ...]] = []

    def counting_bas_rhs(*args: object) -> BasRhs:
        calls.append(args)
        return bas_rhs(*args)  # type: ignore[arg-type]

    monkeypatch.setattr("bastate.embedding.bas_rhs", counting_bas_rhs)
    xbar = esys.embed([0.5, 0.5])
    drift, input_map = esys.fields_at(xbar)
    assert len(calls) == 1
    eval_field(esys, xbar, [1.0])
    assert len(calls) == 2
    npt.assert_array_equal(drift, esys.drift_at(xbar))
    npt.assert_array_equal(input_map, esys.input_map_at(xbar))


@pytest.mark.parametrize("gamma", [1.0, 2.0, 5.0])
def test_barrier_state_perturbation_recovers_on_the_graph(gamma: float) -> None:
    # at the origin the deviation e obeys de/dt = -gamma (e + h0 e^2)
    sys = _obstacle_system()
    esys = augment(sys, BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.INVERSE, [gamma]))
    xbar0 = esys.embed([0.0, 0.0]) + [0.0, 0.0, 0.1]
    traj = integrate(esys, _no_input, xbar0, 2.0, tol=1e-10)

    deviation = esys.graph_deviation(traj.states)[:, 0]
    decay = np.exp(-gamma * traj.times)
    expected = 0.1 * decay / (1 + 7.75 * 0.1 * (1 - decay))
    npt.assert_allclose(deviation, expected, rtol=1e-6, atol=1e-9)
    assert np.all(np.diff(deviation) < 0)


def test_barrier_state_perturbation_decays_faster_for_larger_gamma() -> None:
    sys = _obstacle_system()
    remaining = []
    for gamma in [1.0, 2.0, 5.0]:
        esys = augment(sys, BasBlock.for_system(sys, BasMode.SINGLE, BarrierKind.INVERSE, [gamma]))
        xbar0 = esys.embed([0.5, 0.0]) + [0.0, 0.0, 0.1]
        traj = integrate(esys, _no_input, xbar0, 1.0, tol=1e-10)
        remaining.append(abs(esys.graph_deviation(traj.final_state)[0]) / 0.1)
    assert 1 > remaining[0] > remaining[1] > remaining[2]
