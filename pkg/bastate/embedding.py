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
This module builds barrier states (BaS) from :class:`~bastate.barriers.BarrierSpec` s and embeds
them in a control-affine system. The embedded system has the state ``(x, z)``, where each barrier
state ``z`` follows

.. math:: \\dot z = \\phi_0(\\zeta)\\,\\dot h(x) - \\gamma\\,\\phi_1(\\zeta, h(x)),

with ``zeta`` the recentred barrier argument. Along exact solutions started on the graph,
``z(t) = beta(x(t)) - beta(0)``, so the barrier state is bounded exactly when the trajectory stays
safe.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .analytic.expression import ZERO, Expr, Var
from .analytic.polynomial import PolyMap
from .analytic.system import ControlAffineSystem, eval_field, lie_derivatives, taylor_of_field
from .barriers import (
    BarrierKind,
    BarrierSpec,
    bf_expr,
    bf_value,
    phi0,
    phi0_expr,
    phi1,
    phi1_expr,
)
from .types import ArrayLike
from .utils.misc import as_float_array


class UnsafeStateError(ValueError):
    """Raised when barrier quantities are requested at a state where some ``h_i(x) <= 0``."""


class BasMode(enum.Enum):
    """How the constraints of a :class:`BasBlock` are turned into barrier states."""

    SINGLE = "single"
    """ One barrier state for one constraint. """

    FUSED = "fused"
    """ One barrier state for the sum of the barrier functions of several constraints. """

    PER_CONSTRAINT = "per_constraint"
    """ One barrier state per constraint. """


@dataclass(frozen=True)
class BasBlock:
    """The barrier states added to a system, with one :class:`BarrierSpec` per constraint."""

    mode: BasMode
    specs: Sequence[BarrierSpec]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", BasMode(self.mode))
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            raise ValueError("A BaS block needs at least one barrier spec")
        if self.mode is BasMode.SINGLE and len(self.specs) != 1:
            raise ValueError(f"Single mode takes exactly one spec, got {len(self.specs)}")
        if self.mode is BasMode.FUSED and len({s.kind for s in self.specs}) != 1:
            raise ValueError(
                "Fused mode requires a shared barrier kind, got"
                f" {[s.kind.value for s in self.specs]}"
            )
        indices = [s.h_index for s in self.specs]
        if len(set(indices)) != len(indices):
            raise ValueError(f"Each constraint may be guarded once, got h indices {indices}")

    @property
    def z_dim(self) -> int:
        """The number of barrier states."""
        return len(self.specs) if self.mode is BasMode.PER_CONSTRAINT else 1

    @classmethod
    def for_system(
        cls,
        sys: ControlAffineSystem,
        mode: BasMode,
        kind: BarrierKind,
        gammas: Sequence[float],
        constraints: Optional[Sequence[int]] = None,
    ) -> BasBlock:
        """
        :param sys: The system whose constraints are guarded.
        :param mode: The BaS mode.
        :param kind: The barrier function of every spec.
        :param gammas: One rate per guarded constraint.
        :param constraints: The guarded constraint indices. Defaults to all constraints.
        :return: The block, with each spec's ``h0`` read from ``sys`` at the origin.
        """
        constraints = list(range(sys.num_constraints)) if constraints is None else constraints
        if len(gammas) != len(constraints):
            raise ValueError(f"Got {len(gammas)} gammas for {len(constraints)} constraints")
        h0 = sys.constraint_values(np.zeros(sys.state_dim))
        for i in constraints:
            if not 0 <= i < sys.num_constraints:
                raise ValueError(f"Constraint {i} is out of range for {sys.name}")
        return cls(
            BasMode(mode),
            [
                BarrierSpec(BarrierKind(kind), i, g, float(h0[i]))
                for i, g in zip(constraints, gammas)
            ],
        )


class BasRhs(NamedTuple):
    """The right-hand side ``dz/dt = drift + gain . u`` of a barrier state."""

    drift: np.ndarray
    """ The drift, shape [...]. """

    gain: np.ndarray
    """ The input gain, shape [..., m]. """

    def rate(self, u: ArrayLike) -> np.ndarray:
        """:return: ``dz/dt`` for inputs ``u`` with shape [..., m]."""
        return self.drift + np.einsum("...j,...j->...", self.gain, as_float_array(u))


def _safe_constraints(
    sys: ControlAffineSystem, x: np.ndarray, indices: Sequence[int]
) -> np.ndarray:
    h = sys.constraint_values(x)[..., list(indices)]
    if np.any(~(h > 0)):
        raise UnsafeStateError(
            f"Constraints {[sys.constraint_names[i] for i in indices]} must be positive,"
            f" got h = {h}"
        )
    return h


def single_bas_rhs(
    spec: BarrierSpec, sys: ControlAffineSystem, x: ArrayLike, z: ArrayLike
) -> BasRhs:
    """
    :param spec: The barrier spec.
    :param sys: The system whose constraint ``spec.h_index`` is guarded.
    :param x: States with shape [..., n].
    :param z: Barrier states with shape [...].
    :return: The barrier-state drift ``phi0(z + beta0) L_f h - gamma phi1(z + beta0, h)`` and gain
        ``phi0(z + beta0) L_g h``.
    :raise UnsafeStateError: If ``h(x) <= 0``.
    """
    x, z = as_float_array(x), as_float_array(z)
    h = _safe_constraints(sys, x, [spec.h_index])[..., 0]
    lf, lg = lie_derivatives(sys, spec.h_index, x)
    zeta = z + spec.beta0
    p0 = np.asarray(phi0(spec.kind, zeta))
    drift = p0 * lf - spec.gamma * np.asarray(phi1(spec.kind, zeta, h))
    return BasRhs(drift, p0[..., None] * lg)


def fused_bas_rhs(
    block: BasBlock, sys: ControlAffineSystem, x: ArrayLike, z: ArrayLike
) -> BasRhs:
    """
    :param block: A block of shared barrier kind, typically in fused mode.
    :param sys: The system whose constraints are guarded.
    :param x: States with shape [..., n].
    :param z: The fused barrier state with shape [...].
    :return: The drift and gain of the fused barrier state: the sum over constraints ``i`` of the
        single-constraint terms, each evaluated at
        ``zeta_i = z + sum_j beta0_j - sum_{j != i} B(h_j(x))``.
    :raise UnsafeStateError: If any guarded ``h_i(x) <= 0``.
    """
    x, z = as_float_array(x), as_float_array(z)
    kind = block.specs[0].kind
    h = _safe_constraints(sys, x, [s.h_index for s in block.specs])
    barrier = np.asarray(bf_value(kind, h))
    others = barrier.sum(axis=-1, keepdims=True) - barrier
    zeta = (z + sum(s.beta0 for s in block.specs))[..., None] - others

    drift = np.zeros(z.shape)
    gain = np.zeros(z.shape + (sys.input_dim,))
    for i, spec in enumerate(block.specs):
        lf, lg = lie_derivatives(sys, spec.h_index, x)
        p0 = np.asarray(phi0(kind, zeta[..., i]))
        drift = drift + p0 * lf - spec.gamma * np.asarray(phi1(kind, zeta[..., i], h[..., i]))
        gain = gain + p0[..., None] * lg
    return BasRhs(drift, gain)


def bas_rhs(block: BasBlock, sys: ControlAffineSystem, x: ArrayLike, z: ArrayLike) -> BasRhs:
    """
    :param block: The BaS block.
    :param sys: The system whose constraints are guarded.
    :param x: States with shape [..., n].
    :param z: All barrier states of the block, shape [..., q].
    :return: The drift with shape [..., q] and the gain with shape [..., q, m].
    :raise UnsafeStateError: If any guarded ``h_i(x) <= 0``.
    """
    z = as_float_array(z)
    if z.shape[-1:] != (block.z_dim,):
        raise ValueError(f"Expected {block.z_dim} barrier states, got shape {z.shape}")
    if block.mode is BasMode.PER_CONSTRAINT:
        parts = [single_bas_rhs(s, sys, x, z[..., k]) for k, s in enumerate(block.specs)]
        return BasRhs(
            np.stack([p.drift for p in parts], axis=-1), np.stack([p.gain for p in parts], axis=-2)
        )
    part = fused_bas_rhs(block, sys, x, z[..., 0])
    return BasRhs(part.drift[..., None], part.gain[..., None, :])


def init_bas(block: BasBlock, sys: ControlAffineSystem, x0: ArrayLike) -> np.ndarray:
    """
    Initialize barrier states on the graph of the recentred barrier, e.g. for the inverse barrier
    of a constraint with ``h(0) = 7.75`` and ``h(x0) = 1.75``, ``z0 = 1/1.75 - 1/7.75``.

    :param block: The BaS block.
    :param sys: The system whose constraints are guarded.
    :param x0: States with shape [..., n].
    :return: ``beta(x0) - beta(0)`` for every barrier state, shape [..., q].
    :raise UnsafeStateError: If any guarded ``h_i(x0) <= 0``.
    """
    x0 = as_float_array(x0)
    h = _safe_constraints(sys, x0, [s.h_index for s in block.specs])
    offsets = np.stack(
        [np.asarray(bf_value(s.kind, h[..., k])) - s.beta0 for k, s in enumerate(block.specs)],
        axis=-1,
    )
    if block.mode is BasMode.PER_CONSTRAINT:
        return offsets
    return offsets.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class EmbeddedSystem:
    """
    A control-affine system augmented with barrier states, with embedded state ``(x, z)`` of
    dimension ``n + q``. Numerical evaluation goes through the barrier right-hand sides and
    reports unsafe states; :attr:`model` is the same vector field as a symbolic
    :class:`~bastate.analytic.ControlAffineSystem`, used for Taylor expansion.
    """

    base: ControlAffineSystem
    bas: BasBlock
    model: ControlAffineSystem = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for spec in self.bas.specs:
            if spec.h_index >= self.base.num_constraints:
                raise ValueError(
                    f"{self.base.name} has no constraint {spec.h_index} for its barrier state"
                )
        object.__setattr__(self, "model", self._build_model())

    def _build_model(self) -> ControlAffineSystem:
        base, block = self.base, self.bas
        n, m = base.state_dim, base.input_dim
        lie_f, lie_g = _lie_exprs(base)
        z = [Var(n + k) for k in range(block.z_dim)]
        kind = block.specs[0].kind

        if block.mode is BasMode.PER_CONSTRAINT:
            zetas = [(z[k] + s.beta0, s) for k, s in enumerate(block.specs)]
            groups = [[pair] for pair in zetas]
        else:
            barrier = {s.h_index: bf_expr(kind, base.constraints[s.h_index]) for s in block.specs}
            shift = sum(s.beta0 for s in block.specs)
            group = []
            for s in block.specs:
                zeta: Expr = z[0] + shift
                for other in block.specs:
                    if other is not s:
                        zeta = zeta - barrier[other.h_index]
                group.append((zeta, s))
            groups = [group]

        bas_drift: list[Expr] = []
        bas_gain: list[list[Expr]] = []
        for group in groups:
            drift: Expr = ZERO
            gain: list[Expr] = [ZERO for _ in range(m)]
            for zeta, s in group:
                p0 = phi0_expr(s.kind, zeta)
                h = base.constraints[s.h_index]
                drift = drift + p0 * lie_f[s.h_index] - s.gamma * phi1_expr(s.kind, zeta, h)
                gain = [gain[k] + p0 * lie_g[s.h_index][k] for k in range(m)]
            bas_drift.append(drift)
            bas_gain.append(gain)

        return ControlAffineSystem(
            drift=list(base.drift) + bas_drift,
            input_map=[list(row) for row in base.input_map] + bas_gain,
            constraints=base.constraints,
            constraint_names=base.constraint_names,
            name=f"{base.name}+bas",
        )

    @property
    def state_dim(self) -> int:
        """The embedded state dimension ``n + q``."""
        return self.base.state_dim + self.bas.z_dim

    @property
    def input_dim(self) -> int:
        """The input dimension ``m``."""
        return self.base.input_dim

    @property
    def name(self) -> str:
        """The display name."""
        return self.model.name

    def split(self, xbar: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """:return: The system states [..., n] and barrier states [..., q] of ``xbar``."""
        xbar = as_float_array(xbar)
        if xbar.shape[-1:] != (self.state_dim,):
            raise ValueError(
                f"Expected embedded states with trailing dimension {self.state_dim}, got"
                f" shape {xbar.shape}"
            )
        n = self.base.state_dim
        return xbar[..., :n], xbar[..., n:]

    def embed(self, x0: ArrayLike) -> np.ndarray:
        """:return: ``x0`` with its barrier states initialized on the graph, shape [..., n + q]."""
        x0 = as_float_array(x0)
        return np.concatenate([x0, init_bas(self.bas, self.base, x0)], axis=-1)

    def graph_deviation(self, xbar: ArrayLike) -> np.ndarray:
        """:return: ``z - (beta(x) - beta(0))`` for every barrier state, shape [..., q]."""
        x, z = self.split(xbar)
        return z - init_bas(self.bas, self.base, x)

    def constraint_values(self, xbar: ArrayLike) -> np.ndarray:
        """:return: ``h(x)`` with shape [..., p]."""
        return self.base.constraint_values(self.split(xbar)[0])

    def fields_at(self, xbar: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """
        :return: The embedded drift with shape [..., n + q] and input matrix with shape
            [..., n + q, m], sharing one evaluation of the barrier right-hand sides.
        :raise UnsafeStateError: If any guarded ``h_i(x) <= 0``.
        """
        x, z = self.split(xbar)
        rhs = bas_rhs(self.bas, self.base, x, z)
        drift, input_map = self.base.fields_at(x)
        return (
            np.concatenate([drift, rhs.drift], axis=-1),
            np.concatenate([input_map, rhs.gain], axis=-2),
        )

    def drift_at(self, xbar: ArrayLike) -> np.ndarray:
        """
        :return: The embedded drift with shape [..., n + q].
        :raise UnsafeStateError: If any guarded ``h_i(x) <= 0``.
        """
        return self.fields_at(xbar)[0]

    def input_map_at(self, xbar: ArrayLike) -> np.ndarray:
        """
        :return: The embedded input matrix with shape [..., n + q, m].
        :raise UnsafeStateError: If any guarded ``h_i(x) <= 0``.
        """
        return self.fields_at(xbar)[1]


def _lie_exprs(sys: ControlAffineSystem) -> tuple[list[Expr], list[list[Expr]]]:
    zero: Expr = ZERO
    lie_f: list[Expr] = []
    lie_g: list[list[Expr]] = []
    for grad in sys.constraint_gradient_exprs:
        lf, lg = zero, [zero] * sys.input_dim
        for j, dh in enumerate(grad):
            lf = lf + dh * sys.drift[j]
            lg = [lg[k] + dh * sys.input_map[j][k] for k in range(sys.input_dim)]
        lie_f.append(lf)
        lie_g.append(lg)
    return lie_f, lie_g


def augment(sys: ControlAffineSystem, block: BasBlock) -> EmbeddedSystem:
    """
    :param sys: The system.
    :param block: The barrier states to add, guarding constraints of ``sys``.
    :return: The embedded system. Its origin is an equilibrium.
    """
    return EmbeddedSystem(sys, block)


@eval_field.register
def _eval_embedded(
    sys: EmbeddedSystem, x: ArrayLike, u: Optional[ArrayLike] = None
) -> np.ndarray:
    drift, input_map = sys.fields_at(x)
    u = np.zeros(drift.shape[:-1] + (sys.input_dim,)) if u is None else as_float_array(u)
    return drift + np.einsum("...ij,...j->...i", input_map, u)


@taylor_of_field.register
def _taylor_embedded(
    sys: EmbeddedSystem, order: int
) -> tuple[tuple[PolyMap, ...], tuple[tuple[PolyMap, ...], ...]]:
    return taylor_of_field(sys.model, order)
