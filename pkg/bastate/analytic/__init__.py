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
Analytic expressions, truncated Taylor series and control-affine systems. These provide exact
derivatives of the dynamics and constraints to arbitrary order for linearization and the
power-series solution of the HJB equation.
"""
from . import expression
from .expression import (
    Add,
    Apply,
    Const,
    Expr,
    Mul,
    PoleError,
    Pow,
    Var,
    atanh,
    atanh_expneg,
    compile_expr,
    cos,
    cosh,
    exp,
    from_sexpr,
    log,
    recip,
    sin,
    sinh,
    sqrt,
    tanh,
    to_sexpr,
)
from .jets import Jet, TaylorExpander, jet_compose, taylor
from .polynomial import MonomialBasis, PolyMap, jacobian_at_zero, monomial_basis
from .system import ControlAffineSystem, eval_field, lie_derivatives, taylor_of_field
