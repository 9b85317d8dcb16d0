"""Torus actions, the b^m-Hamiltonian test and moment maps.

Working convention: i(xi^M) omega = -d mu.  Moment maps are found with a
small table of antiderivatives (powers, csc^j, polynomial times sin, cos,
exp); anything outside the table is refused rather than integrated
numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import sympy as sp

from . import expr as ex
from .errors import (
    AntiderivativeNotInTableError,
    ModelViolationError,
    NotClosedError,
    NotInvariantError,
)
from .expr import BmFunction, ChartModel
from .forms import (
    SingularForm,
    VectorFieldExpr,
    ext_d,
    interior_product,
    lie_derivative,
    sample_grid,
    to_standard,
)
from .laurent import decompose_2form, modular_weight

MAX_PARTS_DEPTH = 4


@dataclass
class ActionSpec:
    chart: ChartModel
    generators: dict  # name -> VectorFieldExpr, in declaration order

    def __post_init__(self):
        for name, xi in self.generators.items():
            if xi.chart.coords != self.chart.coords:
                raise ValueError(f"generator {name} lives on another chart")
            for c in self.chart.periodic:
                if xi[c] != 0 and xi[c].has(ex.coord(c)):
                    raise ValueError(f"generator {name} is not well defined on the angle {c}")
        names = list(self.generators)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                if not self.generators[a].bracket(self.generators[b]).is_zero():
                    raise ValueError(f"generators {a} and {b} do not commute")

    @property
    def rank(self) -> int:
        return len(self.generators)

    @classmethod
    def from_components(cls, chart: ChartModel, gens: Mapping[str, Mapping[str, str]]) -> "ActionSpec":
        out = {}
        for name, comps in gens.items():
            parsed = {c: ex.parse_expr(str(v), chart) for c, v in comps.items()}
            out[name] = VectorFieldExpr.from_dict(chart, parsed)
        return cls(chart, out)


# ---------------------------------------------------------------------------
# Hamiltonian test


@dataclass
class GeneratorCheck:
    name: str
    invariant: bool
    contraction: SingularForm
    contraction_closed: bool
    pole_order: int

    @property
    def ok(self) -> bool:
        return self.invariant and self.contraction_closed


@dataclass
class HamiltonianReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def raise_if_failed(self):
        for c in self.checks:
            if not c.invariant:
                raise NotInvariantError(f"the flow of {c.name} does not preserve the form")
            if not c.contraction_closed:
                raise NotClosedError(f"contraction with {c.name} is not closed")

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            out.append(
                f"[{c.name}] invariant={'yes' if c.invariant else 'no'} "
                f"closed contraction={'yes' if c.contraction_closed else 'no'} "
                f"contraction={c.contraction} pole order={c.pole_order}"
            )
        return out


def _pole_order(a: SingularForm) -> int:
    t = a.chart.t
    if t is None:
        return 0
    order = 0
    for c in a.terms.values():
        poles = ex._principal_part(c, t)
        if poles:
            order = max(order, max(poles))
    return order


def check_bm_hamiltonian(w: SingularForm, action: ActionSpec) -> HamiltonianReport:
    w = to_standard(w)
    rep = HamiltonianReport()
    for name, xi in action.generators.items():
        invariant = lie_derivative(xi, w).is_zero()
        contraction = interior_product(xi, w)
        closed = ext_d(contraction).is_zero() if contraction.terms else True
        rep.checks.append(GeneratorCheck(name, invariant, contraction, closed, _pole_order(contraction)))
    return rep


# ---------------------------------------------------------------------------
# Antiderivative table


def _linear(u, x):
    """(a, b) with u = a x + b, or None."""
    a = ex.differentiate(u, x)
    if a == 0 or a.has(x):
        return None
    b = sp.expand(u - a * x)
    if b.has(x):
        return None
    return a, b


def integrate(e, x: sp.Symbol, _depth: int = MAX_PARTS_DEPTH) -> sp.Expr:
    """Antiderivative of e in x from the table; raises if a term is not covered."""
    total = sp.Integer(0)
    for term in sp.Add.make_args(_expand(sp.sympify(e))):
        coeff, dep = term.as_independent(x, as_Add=False)
        total += coeff * _integrate_term(dep, x, _depth)
    return total


def _expand(e):
    # positive powers of sums are multiplied out, negative ones kept as linear bases
    e = e.replace(lambda n: n.is_Pow and n.base.is_Add and n.exp.is_Integer and n.exp > 1,
                  lambda n: sp.expand_multinomial(n))
    return sp.expand_mul(e)


def _integrate_term(f, x, depth):
    if f == 1:
        return x
    power, rest = sp.Integer(0), []
    for fac in sp.Mul.make_args(f):
        if fac == x:
            power += 1
        elif fac.is_Pow and fac.base == x and fac.exp.is_Integer:
            power += fac.exp
        else:
            rest.append(fac)
    if not rest:
        if power == -1:
            return sp.log(sp.Abs(x))
        return x ** (power + 1) / (power + 1)
    if len(rest) != 1:
        raise AntiderivativeNotInTableError(f"no table entry for {f} d{x}")
    T = rest[0]
    if power < 0:
        raise AntiderivativeNotInTableError(f"no table entry for {f} d{x}")
    base, n = (T.base, T.exp) if T.is_Pow else (T, sp.Integer(1))
    if not n.is_Integer:
        raise AntiderivativeNotInTableError(f"non-integer power in {f}")
    head = type(base)
    if head in (sp.sin, sp.cos, sp.exp, sp.tan, sp.cot):
        lin = _linear(base.args[0], x)
    elif base.is_Add:
        lin = _linear(base, x)
        head = "linear"
    else:
        lin = None
    if lin is None:
        raise AntiderivativeNotInTableError(f"no table entry for {f} d{x}")
    a, b = lin
    u = a * x + b
    if head == "linear" and power == 0:
        if n == -1:
            return sp.log(sp.Abs(u)) / a
        return u ** (n + 1) / ((n + 1) * a)
    if power == 0:
        prim = _trig_primitive(head, n, u)
        if prim is None:
            raise AntiderivativeNotInTableError(f"no table entry for {f} d{x}")
        return prim / a
    # polynomial times sin / cos / exp: integrate by parts
    if n != 1 or head not in (sp.sin, sp.cos, sp.exp):
        raise AntiderivativeNotInTableError(f"no table entry for {f} d{x}")
    if depth <= 0:
        raise AntiderivativeNotInTableError(f"integration by parts deeper than {MAX_PARTS_DEPTH} for {f}")
    V = _trig_primitive(head, 1, u) / a
    return x**power * V - power * integrate(x ** (power - 1) * V, x, depth - 1)


def _trig_primitive(head, n, u):
    """Primitive with respect to u of head(u)^n, or None."""
    if head is sp.exp and n == 1:
        return sp.exp(u)
    if head is sp.sin:
        if n == 1:
            return -sp.cos(u)
        if n < 0:
            return _csc_primitive(-int(n), u)
        if n == 2:
            return u / 2 - sp.sin(2 * u) / 4
    if head is sp.cos:
        if n == 1:
            return sp.sin(u)
        if n == -2:
            return sp.tan(u)
        if n == 2:
            return u / 2 + sp.sin(2 * u) / 4
    if head is sp.tan and n == 1:
        return -sp.log(sp.Abs(sp.cos(u)))
    if head is sp.cot and n == 1:
        return sp.log(sp.Abs(sp.sin(u)))
    return None


def _csc_primitive(j: int, u):
    """Reduction formula for the integral of csc^j."""
    if j == 1:
        return sp.log(sp.Abs(sp.tan(u / 2)))
    if j == 2:
        return -sp.cos(u) / sp.sin(u)
    return -sp.cos(u) / ((j - 1) * sp.sin(u) ** (j - 1)) + sp.Rational(j - 2, j - 1) * _csc_primitive(j - 2, u)


def potential(one_form: SingularForm) -> sp.Expr:
    """f with df = one_form, coordinate by coordinate from the table."""
    chart = one_form.chart
    syms = chart.symbols
    comps = [one_form.terms.get((i,), sp.Integer(0)) for i in range(chart.dim)]
    f = sp.Integer(0)
    for i, s in enumerate(syms):
        r = comps[i] - ex.differentiate(f, s) if f != 0 else comps[i]
        if r == 0 or ex.is_zero(r):
            continue
        for prev in syms[:i]:
            if not ex.is_zero(ex.differentiate(r, prev)):
                raise NotClosedError(f"one-form {one_form} is not closed")
        f = f + integrate(r, s)
    return f


# ---------------------------------------------------------------------------
# Moment maps


@dataclass
class MomentMap:
    name: str
    mu: BmFunction
    expression: sp.Expr
    base_point: dict

    def __str__(self):
        return f"mu[{self.name}] = {ex.to_text(self.expression)}"


def _smooth_bm(chart: ChartModel, e) -> BmFunction:
    return BmFunction(chart.t, 1, sp.Integer(0), (), e) if chart.t is not None else _NoZ(e)


class _NoZ(BmFunction):
    def __init__(self, e):
        object.__setattr__(self, "t", None)
        object.__setattr__(self, "m", 1)
        object.__setattr__(self, "log_coeff", sp.Integer(0))
        object.__setattr__(self, "pole_coeffs", ())
        object.__setattr__(self, "smooth", e)

    def reassemble(self):
        return self.smooth

    def shifted(self, constant):
        return _NoZ(self.smooth + constant)


def _split(chart: ChartModel, e) -> BmFunction:
    if chart.t is None:
        return _NoZ(e)
    return ex.split_bm_scalar(e, chart)


def _value_at_base(e, chart: ChartModel, base: Mapping[str, float]):
    subs = {}
    for c in chart.coords:
        if c == chart.defining:
            continue
        subs[ex.coord(c)] = sp.nsimplify(base.get(c, 0))
    v = sp.sympify(e).xreplace(subs)
    if chart.t is not None and v.has(chart.t):
        tv = sp.nsimplify(base.get(chart.defining, 0))
        v = ex.value_on_slice(v, chart.t) if tv == 0 else v.xreplace({chart.t: tv})
    return sp.simplify(v)


def compute_moment(w: SingularForm, action: ActionSpec, base_point: Mapping[str, float] | None = None,
                   verify_points: int = 100, seed: int = 0) -> list[MomentMap]:
    """mu per generator with i(xi) omega = -d mu and mu0(base) = 0."""
    w = to_standard(w)
    check_bm_hamiltonian(w, action).raise_if_failed()
    chart = w.chart
    base = dict(base_point or {})
    out = []
    for name, xi in action.generators.items():
        target = interior_product(xi, w).scale(-1)
        mu = potential(target)
        bm = _split(chart, mu)
        shift = _value_at_base(bm.smooth, chart, base)
        bm = bm.shifted(-shift)
        expr = bm.reassemble()
        _verify(expr, target, chart, verify_points, seed)
        out.append(MomentMap(name, bm, expr, base))
    return out


def _verify(mu, target: SingularForm, chart: ChartModel, npts: int, seed: int, tol: float = 1e-9):
    d_mu = SingularForm(chart, 1, {(i,): ex.differentiate(mu, s) for i, s in enumerate(chart.symbols)})
    diff = d_mu - target
    if not diff.is_zero():
        raise AntiderivativeNotInTableError(f"antiderivative check failed for {mu}")
    rng = np.random.default_rng(seed)
    for _ in range(npts):
        p = {c: float(rng.uniform(0.1, 0.9) * rng.choice([-1, 1])) for c in chart.coords}
        for i, c in enumerate(chart.coords):
            num = ex.eval_at(diff.terms.get((i,), 0), p) if (i,) in diff.terms else 0.0
            ref = abs(ex.eval_at(target.terms[(i,)], p)) if (i,) in target.terms else 0.0
            if abs(num) > tol * max(1.0, ref):
                raise AntiderivativeNotInTableError(f"numeric check of d mu failed at {p}")


def realized_sign(display, w: SingularForm, xi: VectorFieldExpr) -> int:
    """s with d(display) = -s i(xi) omega, i.e. +1 when the display follows the working convention."""
    chart = w.chart
    contraction = interior_product(xi, to_standard(w))
    d_disp = SingularForm(chart, 1, {(i,): ex.differentiate(display, s) for i, s in enumerate(chart.symbols)})
    if (d_disp + contraction).is_zero():
        return 1
    if (d_disp - contraction).is_zero():
        return -1
    d2 = d_disp.map_coefficients(ex.apply_named_rewrites)
    if (d2 + contraction).is_zero():
        return 1
    if (d2 - contraction).is_zero():
        return -1
    raise ModelViolationError(f"{display} is not a moment map for this action up to sign")


@dataclass
class MomentSplit:
    coefficients: tuple  # (c1, ..., cm)
    smooth: sp.Expr


def split_moment(mu: BmFunction) -> MomentSplit:
    """Constants c1..cm and the smooth slice Hamiltonian; non-constant c_i violate the model."""
    for i, c in enumerate(mu.coefficients, start=1):
        if sp.sympify(c).free_symbols:
            raise ModelViolationError(f"coefficient c{i} = {c} is not constant")
    return MomentSplit(tuple(mu.coefficients), mu.smooth)


def split_from_weights(weights: list) -> tuple:
    """Split constants implied by modular weights a_1..a_m under i(xi) omega = -d mu.

    The t-part of -i(xi)omega is sum_j a_j dt/t^j, whose primitive is
    a_1 log|t| - sum_{j>=2} a_j t^(1-j)/(j-1); hence c_1 = a_1 and c_j = -a_j.
    """
    return tuple(a if j == 1 else -a for j, a in enumerate(weights, start=1))


def weight_consistency(w: SingularForm, action: ActionSpec, moments: list[MomentMap]) -> dict:
    """Per generator: do the split constants match the modular weights?"""
    d = decompose_2form(w)
    out = {}
    for mm in moments:
        xi = action.generators[mm.name]
        weights = [modular_weight(d, j, xi) for j in range(1, d.m + 1)]
        expected = split_from_weights(weights)
        got = [float(c) for c in split_moment(mm.mu).coefficients]
        out[mm.name] = all(abs(a - b) < 1e-9 for a, b in zip(expected, got))
    return out


def cotangent_lift_moment(m: int, constants, base: ChartModel, mu0=0) -> BmFunction:
    """c1 log|a| + sum_i c_{i+1} a^-i / i + mu0 for the twisted cotangent lift."""
    constants = tuple(sp.sympify(c) for c in constants)
    if len(constants) != m:
        raise ValueError(f"expected {m} constants, got {len(constants)}")
    if base.t is None:
        raise ValueError("base chart needs a defining coordinate")
    return BmFunction(base.t, m, constants[0], constants[1:], sp.sympify(mu0))


# ---------------------------------------------------------------------------
# Moment image


def moment_image(mu, chart: ChartModel, t_values, base_point: Mapping[str, float] | None = None,
                 clip: float = 50.0) -> list[tuple]:
    """Rows (component, t, value, marker) along the t-axis; components are the sides of Z."""
    e = mu.reassemble() if isinstance(mu, BmFunction) else sp.sympify(mu)
    base = {c: float((base_point or {}).get(c, 0.0)) for c in chart.coords}
    f = ex.compile_expr(e)
    rows = []
    for tv in t_values:
        tv = float(tv)
        if tv == 0.0:
            continue
        p = dict(base)
        p[chart.defining] = tv
        try:
            v = f(p)
        except ex.SingularEvaluationError:
            v = float("inf")
        comp = 0 if tv < 0 else 1
        marker = ""
        if not np.isfinite(v) or abs(v) > clip:
            marker = "→∞" if v > 0 else "→-∞"
            v = clip if v > 0 else -clip
        rows.append((comp, tv, v, marker))
    return rows


def default_t_values(n: int = 201, radius: float = 1.0) -> list[float]:
    vals = np.linspace(-radius, radius, n)
    return [float(v) for v in vals if abs(v) > 1e-12]
