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
The verification suite of a scenario: numerical checks of the barrier identities, the embedded
equilibrium and linearization, the synthesized feedback and the safety of its closed loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from absl import logging

from ..analytic.polynomial import jacobian_at_zero
from ..analytic.system import ControlAffineSystem, eval_field, taylor_of_field
from ..barriers import BarrierKind, bf_deriv, bf_value, phi0, phi1
from ..embedding import BasMode
from ..synthesis.hjb import PolyController, lyapunov_check, residual_order
from ..synthesis.linear import closed_loop_eigenvalues, linearize_closed_form
from ..types import ArrayLike
from ..utils.misc import Err, as_float_array, seed_from_env
from .runner import Synthesis, simulate, synthesize
from .scenario import NlqrMethod, Scenario

DRIFT_TOLERANCE = 1e-6
""" The largest barrier-state drift accepted at the tight integrator tolerance. """

DRIFT_INTEGRATOR_TOLERANCE = 1e-10
""" The integrator tolerance of the drift check. """


@dataclass(frozen=True)
class CheckResult:
    """The outcome of one check."""

    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class VerificationReport:
    """The outcomes of every check that applies to a scenario."""

    scenario: str
    checks: Sequence[CheckResult]

    @property
    def passed(self) -> bool:
        """Whether every check passed."""
        return all(check.passed for check in self.checks)

    def to_json(self) -> dict[str, Any]:
        """:return: The JSON form of the report."""
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks
            ],
        }


def barrier_identity_errors(
    kind: BarrierKind, eta: Optional[ArrayLike] = None
) -> tuple[float, float]:
    """
    :param kind: The barrier function.
    :param eta: Positive constraint values. Defaults to 400 log-spaced values in ``[1e-4, 1e4]``.
    :return: The largest error of ``phi0(B(eta)) = B'(eta)``, relative to ``max(1, |B'(eta)|)``,
        and the largest absolute error of ``phi1(B(eta), eta) = 0``.
    """
    eta = np.logspace(-4, 4, 400) if eta is None else as_float_array(eta)
    zeta = bf_value(kind, eta)
    deriv = bf_deriv(kind, eta)
    return (
        float(np.max(np.abs(phi0(kind, zeta) - deriv) / np.maximum(1.0, np.abs(deriv)))),
        float(np.max(np.abs(phi1(kind, zeta, eta)))),
    )


def _linear_parts(sys: ControlAffineSystem) -> Optional[tuple[np.ndarray, np.ndarray]]:
    f_poly, g_poly = taylor_of_field(sys, 2)
    if any(p.degree > 1 for p in f_poly) or any(p.degree > 0 for row in g_poly for p in row):
        return None
    B = np.array([[g.coefficient((0,) * sys.state_dim) for g in row] for row in g_poly])
    return jacobian_at_zero(f_poly), B


def _check_barriers(scenario: Scenario) -> Optional[CheckResult]:
    if scenario.bas is None:
        return None
    phi0_error, phi1_error = barrier_identity_errors(scenario.bas.kind)
    return CheckResult(
        "barrier_identities",
        phi0_error <= 1e-9 and phi1_error <= 1e-10,
        f"{scenario.bas.kind.value}: phi0 error {phi0_error:.2e}, phi1 error {phi1_error:.2e}",
    )


def _check_equilibrium(scenario: Scenario) -> CheckResult:
    model = scenario.model
    origin = np.zeros(model.state_dim)
    residual = float(np.max(np.abs(eval_field(model, origin, np.zeros(model.input_dim)))))
    return CheckResult("equilibrium", residual <= 1e-12, f"|f(0)| = {residual:.2e}")


def _check_linearization(scenario: Scenario, synthesis: Synthesis) -> Optional[CheckResult]:
    if scenario.bas is None or scenario.bas.mode is not BasMode.SINGLE:
        return None
    parts = _linear_parts(scenario.system)
    if parts is None:
        return None
    spec = scenario.bas.block(scenario.system).specs[0]
    closed_form = linearize_closed_form(*parts, spec, scenario.system.constraints[spec.h_index])
    error = max(
        float(np.max(np.abs(closed_form.A - synthesis.linearization.A))),
        float(np.max(np.abs(closed_form.B - synthesis.linearization.B))),
    )
    return CheckResult(
        "linearization_agreement", error <= 1e-9, f"closed form vs Taylor: {error:.2e}"
    )


def _check_invariance(synthesis: Synthesis, num_gains: int, seed: int) -> CheckResult:
    A, B = synthesis.linearization.A, synthesis.linearization.B
    fixed = synthesis.decomposition.uncontrollable_eigenvalues
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_gains):
        eigenvalues = closed_loop_eigenvalues(A, B, rng.standard_normal(B.T.shape))
        for value in fixed:
            distance = np.min(np.abs(eigenvalues - value)) / (1.0 + abs(value))
            worst = max(worst, float(distance))
    return CheckResult(
        "uncontrollable_invariance",
        worst <= 1e-6,
        f"{len(fixed)} uncontrollable eigenvalues under {num_gains} random gains:"
        f" relative error {worst:.2e}",
    )


def _check_hurwitz(synthesis: Synthesis) -> CheckResult:
    abscissa = float(np.max(synthesis.eigenvalues.real))
    return CheckResult("closed_loop_hurwitz", abscissa < 0, f"spectral abscissa {abscissa:.4g}")


def _check_nlqr(scenario: Scenario, synthesis: Synthesis, seed: int) -> list[CheckResult]:
    method = scenario.synthesis
    if not isinstance(method, NlqrMethod):
        return []
    assert synthesis.value_series is not None and synthesis.cost is not None
    assert isinstance(synthesis.controller, PolyController)
    slope = residual_order(
        synthesis.value_series, synthesis.controller, synthesis.system, synthesis.cost, seed=seed
    )
    lyapunov = lyapunov_check(
        synthesis.value_series,
        synthesis.controller,
        synthesis.system,
        scenario.lyapunov_radius,
        seed=seed,
    )
    return [
        CheckResult(
            "residual_order",
            slope >= method.degree + 0.7,
            f"log-log residual slope {slope:.3f}, expected at least {method.degree + 0.7}",
        ),
        CheckResult(
            "lyapunov",
            lyapunov.passed,
            f"radius {lyapunov.radius}: V > 0 {lyapunov.positive},"
            f" dV/dt < 0 {lyapunov.decreasing}",
        ),
    ]


def _check_runs(scenario: Scenario, synthesis: Synthesis) -> list[CheckResult]:
    _, results = simulate(scenario, synthesis, tol=DRIFT_INTEGRATOR_TOLERANCE)
    failed = [i for i, r in enumerate(results) if isinstance(r, Err)]
    reports = [r.unwrap().report for r in results if not isinstance(r, Err)]
    checks = []
    if scenario.bas is not None:
        drift = max((r.bas_drift_max for r in reports), default=0.0)
        checks.append(
            CheckResult(
                "bas_drift",
                not failed and drift <= DRIFT_TOLERANCE,
                f"largest drift {drift:.2e} over {len(reports)} runs, {len(failed)} failed",
            )
        )
    counterexamples = [i for i, r in enumerate(reports) if r.converged and not r.safe]
    checks.append(
        CheckResult(
            "safety_consistency",
            not counterexamples,
            f"{sum(r.converged for r in reports)} converged runs,"
            f" {len(counterexamples)} of them unsafe",
        )
    )
    return checks


def verify_scenario(
    scenario: Scenario, num_gains: int = 20, seed: Optional[int] = None
) -> VerificationReport:
    """
    Run every check that applies to ``scenario``: barrier identities, the embedded equilibrium,
    closed-form against Taylor linearization (linear systems with a single barrier state),
    invariance of the uncontrollable eigenvalues, a Hurwitz closed loop, the HJB residual order
    and Lyapunov conditions (NLQR), barrier-state drift at a tight tolerance, and that every
    converged run is safe.

    :param scenario: The scenario.
    :param num_gains: The number of random gains of the invariance check.
    :param seed: The seed of the randomized checks. Defaults to
        :func:`~bastate.utils.seed_from_env`.
    :return: The report.
    """
    seed = seed_from_env() if seed is None else seed
    synthesis = synthesize(scenario)
    candidates = [
        _check_barriers(scenario),
        _check_equilibrium(scenario),
        _check_linearization(scenario, synthesis),
        _check_invariance(synthesis, num_gains, seed),
        _check_hurwitz(synthesis),
        *_check_nlqr(scenario, synthesis, seed),
        *_check_runs(scenario, synthesis),
    ]
    checks = [c for c in candidates if c is not None]
    for check in checks:
        log = logging.info if check.passed else logging.warning
        log("%s %s: %s", check.name, "passed" if check.passed else "FAILED", check.detail)
    return VerificationReport(scenario.name, checks)
