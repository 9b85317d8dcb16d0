"""Marsden-Weinstein reduction in the slice normal-form model.

The model lives on (th, t, x1, y1, ..., x_{n-1}, y_{n-1}) with

    omega = sum_i c_i dt/t^i ^ dth + omega_H,

th-rotation generated by d/dth and a slice torus rotating chosen (x_i, y_i)
planes.  The circle stage sits at the level t = 0 and quotients by th; each
slice stage cuts the circle x_i^2 + y_i^2 = 2 rho_i and collapses it to a
point.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np
import sympy as sp

from . import expr as ex
from .desing import EVEN, DesingProfile, desingularize
from .errors import (
    BmError,
    LevelNotRegularError,
    ModelViolationError,
    NonModelActionError,
    NondegeneracyError,
    ZeroHighestWeightError,
)
from .expr import ChartModel
from .forms import (
    SingularForm,
    coefficient_matrix,
    drop_coordinates,
    is_closed,
    nondegeneracy_check,
    pullback,
    restrict_to_slice,
    sample_grid,
    to_standard,
)
from .moment import ActionSpec, compute_moment, split_moment

THETA, T = "th", "t"
COMMUTATION_TOL = 1e-9


def slice_names(n: int) -> tuple[str, ...]:
    out = []
    for i in range(1, n):
        out += [f"x{i}", f"y{i}"]
    return tuple(out)


def canonical_slice_form(chart: ChartModel, planes: Iterable[int]) -> SingularForm:
    w = SingularForm.zero(chart, 2)
    for i in planes:
        w = w + (SingularForm.d(chart, f"x{i}") ^ SingularForm.d(chart, f"y{i}"))
    return w


def rotation_generator(i: int) -> dict:
    return {f"x{i}": f"-y{i}", f"y{i}": f"x{i}"}


@dataclass
class CotangentModel:
    chart: ChartModel
    n: int
    constants: tuple
    form: SingularForm
    slice_planes: tuple
    action: ActionSpec
    moments: dict = field(default_factory=dict)  # generator name -> MomentMap

    @property
    def m(self) -> int:
        return self.chart.m

    @property
    def degenerate(self) -> bool:
        return self.constants[-1] == 0


def build_cotangent_model(n: int, m: int, constants, slice_planes: Iterable[int] = (),
                          omega_H: SingularForm | None = None, allow_degenerate: bool = False,
                          check: bool = True) -> CotangentModel:
    """Normal-form model; c_m = 0 is refused unless ``allow_degenerate``."""
    constants = tuple(sp.nsimplify(c) for c in constants)
    if n < 1:
        raise ValueError("n must be at least 1")
    if len(constants) != m:
        raise ValueError(f"expected {m} constants, got {len(constants)}")
    if constants[-1] == 0 and not allow_degenerate:
        raise ZeroHighestWeightError(
            "highest modular weight c_m is zero; this reduction needs the Lie algebroid setting"
        )
    slice_planes = tuple(sorted(set(slice_planes)))
    for i in slice_planes:
        if not 1 <= i < n:
            raise NonModelActionError(f"no slice plane {i} for n={n}")
    chart = ChartModel((THETA, T) + slice_names(n), {THETA}, T, m)
    t = chart.t
    dt, dth = SingularForm.d(chart, T), SingularForm.d(chart, THETA)
    w = SingularForm.zero(chart, 2)
    for i, c in enumerate(constants, start=1):
        if c != 0:
            w = w + (dt ^ dth).scale(c * t ** (-i))
    if omega_H is None:
        w = w + canonical_slice_form(chart, range(1, n))
    else:
        w = w + pullback(omega_H, chart, {})
    gens = {"rot": {THETA: "1"}}
    for i in slice_planes:
        gens[f"p{i}"] = rotation_generator(i)
    action = ActionSpec.from_components(chart, gens)
    model = CotangentModel(chart, n, constants, w, slice_planes, action)
    if check and not model.degenerate:
        _validate(model)
    return model


def _validate(model: CotangentModel):
    if not is_closed(model.form):
        raise ModelViolationError("model form is not closed")
    rep = nondegeneracy_check(model.form, model.m, sample_grid(model.chart, 5, max_points=200))
    if not rep.ok:
        raise NondegeneracyError("model form degenerates", rep.witness())
    try:
        moments = compute_moment(model.form, model.action, verify_points=20)
    except BmError as exc:
        raise NonModelActionError(f"slice action is not Hamiltonian for omega_H: {exc}") from None
    model.moments = {mm.name: mm for mm in moments}
    got = split_moment(model.moments["rot"].mu).coefficients
    want = tuple(c if i == 1 else -c for i, c in enumerate(model.constants, start=1))
    if tuple(sp.nsimplify(g) for g in got) != want:
        raise ModelViolationError(f"split constants {got} do not match the model constants {model.constants}")


@dataclass
class ReducedSpace:
    chart: ChartModel
    form: SingularForm
    planes: tuple  # slice planes still carrying a rotation
    circle_pending: bool
    provenance: list = field(default_factory=list)
    source_dim: int = 0
    had_singular_atoms: bool = False
    theta: str = THETA

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def singular_free(self) -> bool:
        return not self.form.has_singular_atoms()

    def nondegenerate(self, n: int = 5) -> bool:
        if self.dim == 0:
            return True
        m = self.chart.m if self.chart.defining is not None else 0
        return nondegeneracy_check(self.form, m, sample_grid(self.chart, n, max_points=200)).ok

    def summary(self) -> list[str]:
        lines = [f"reduced coordinates: {', '.join(self.chart.coords) or '(point)'}",
                 f"dimension: {self.dim}", f"reduced form: {self.form if self.form.terms else '0'}"]
        lines += [f"stage: {p}" for p in self.provenance]
        if self.had_singular_atoms and not self.circle_pending:
            lines.append(f"singularity removed: {'yes' if self.singular_free else 'no'}")
        return lines


def as_space(model: CotangentModel) -> ReducedSpace:
    return ReducedSpace(model.chart, model.form, model.slice_planes, True, [], model.chart.dim,
                        model.form.has_singular_atoms())


def _space(x) -> ReducedSpace:
    return as_space(x) if isinstance(x, CotangentModel) else x


def reduce_circle(x, level=0) -> ReducedSpace:
    """Level t = 0 (the bold zero), quotient by th-translation."""
    r = _space(x)
    if not r.circle_pending:
        raise ValueError("circle stage already applied")
    if level not in (0, "0", "bold-zero"):
        raise LevelNotRegularError(f"the model reduces the circle factor at the bold zero only, got {level!r}")
    on_level = restrict_to_slice(r.form)
    _require_basic(on_level, r.theta)
    form = drop_coordinates(on_level, [r.theta]).map_coefficients(ex.simplify)
    out = ReducedSpace(form.chart, form, r.planes, False,
                       r.provenance + [f"circle: level {r.chart.defining}=0, quotient by {r.theta}"],
                       r.source_dim, r.had_singular_atoms, r.theta)
    _check_result(out)
    return out


def _require_basic(form: SingularForm, name: str):
    i = form.chart.index(name)
    s = ex.coord(name)
    for k, c in form.terms.items():
        if i in k or c.has(s):
            raise ModelViolationError(f"form on the level is not basic for the {name}-rotation")


def reduce_torus_stage(x, levels) -> ReducedSpace:
    """Cut each rotated plane at x_i^2 + y_i^2 = 2 rho_i and collapse the circle."""
    r = _space(x)
    if not isinstance(levels, Mapping):
        levels = {i: levels for i in r.planes}
    if not levels:
        return r
    form = r.form
    prov = list(r.provenance)
    planes = list(r.planes)
    for i, rho in sorted(levels.items()):
        if i not in planes:
            raise NonModelActionError(f"plane {i} carries no rotation of the slice action")
        rho = sp.nsimplify(rho)
        if not rho > 0:
            raise LevelNotRegularError(f"level {rho} of plane {i} is not regular (the origin is fixed)")
        form = _cut_plane(form, i, rho)
        planes.remove(i)
        prov.append(f"slice plane {i}: level (x{i}^2+y{i}^2)/2 = {ex.to_text(rho)}")
    out = replace(r, chart=form.chart, form=form, planes=tuple(planes), provenance=prov)
    _check_result(out)
    return out


def _cut_plane(form: SingularForm, i: int, rho) -> SingularForm:
    chart = form.chart
    xi, yi = f"x{i}", f"y{i}"
    idx = {chart.index(xi), chart.index(yi)}
    own = tuple(sorted(idx))
    for k, c in form.terms.items():
        if k == own:
            continue
        if idx & set(k) or c.has(ex.coord(xi)) or c.has(ex.coord(yi)):
            raise NonModelActionError(f"form couples plane {i} to the remaining coordinates")
    return drop_coordinates(form, [xi, yi], {xi: sp.sqrt(2 * rho), yi: 0})


def _check_result(r: ReducedSpace):
    if not is_closed(r.form):
        raise ModelViolationError("reduced form is not closed")
    if not r.circle_pending and not r.singular_free:
        raise ModelViolationError(f"reduced form still carries singular atoms: {r.form}")
    if r.dim % 2 == 0 and not r.nondegenerate():
        raise NondegeneracyError("reduced form degenerates", None)


def reduce_model(model: CotangentModel, levels=None, order: str = "circle-first") -> ReducedSpace:
    levels = {} if levels is None else levels
    if order == "circle-first":
        return reduce_torus_stage(reduce_circle(model), levels)
    if order == "slice-first":
        return reduce_circle(reduce_torus_stage(model, levels))
    raise ValueError(f"unknown stage order {order!r}")


def space_from_form(w: SingularForm, action: ActionSpec) -> ReducedSpace:
    """Match a b^m-symplectic form with a torus action against the model shape.

    One generator must be a coordinate rotation d/dth with nonzero highest
    modular weight; every other generator must rotate an (x_i, y_i) plane.
    """
    from .laurent import decompose_2form, modular_weight

    chart = w.chart
    d = decompose_2form(w)
    theta, planes = None, []
    for name, xi in action.generators.items():
        comps = {c: xi[c] for c in chart.coords if xi[c] != 0}
        if len(comps) == 1 and list(comps.values())[0] == 1 and list(comps)[0] in chart.periodic:
            if abs(modular_weight(d, d.m, xi)) > 1e-9 and theta is None:
                theta = list(comps)[0]
                continue
        plane = _plane_of(comps)
        if plane is None:
            raise NonModelActionError(f"generator {name} is neither the circle nor a slice plane rotation")
        planes.append(plane)
    if theta is None:
        raise ZeroHighestWeightError("no generator with nonzero highest modular weight")
    for j, a in d.alphas.items():
        for (k,), c in a.terms.items():
            if chart.coords[k] != theta or c.free_symbols:
                raise ModelViolationError(f"alpha_{j} = {a} is not a constant multiple of d{theta}")
    return ReducedSpace(chart, to_standard(w), tuple(planes), True, [], chart.dim, w.has_singular_atoms(), theta)


def _plane_of(comps: dict):
    if len(comps) != 2:
        return None
    (x, fx), (y, fy) = sorted(comps.items())
    if not (x.startswith("x") and y == "y" + x[1:] and x[1:].isdigit()):
        return None
    if sp.simplify(fx + ex.coord(y)) == 0 and sp.simplify(fy - ex.coord(x)) == 0:
        return int(x[1:])
    return None


def stage_order_independent(model: CotangentModel, levels) -> bool:
    a = reduce_model(model, levels, "circle-first")
    b = reduce_model(model, levels, "slice-first")
    return a.chart.coords == b.chart.coords and a.form.equals(b.form)


def pullback_identity(model: CotangentModel, reduced: ReducedSpace) -> bool:
    """pi^* omega_red equals omega restricted to the level t = 0 (circle stage only)."""
    on_level = restrict_to_slice(model.form)
    lifted = pullback(reduced.form, on_level.chart, {})
    return (on_level - lifted).is_zero()


# ---------------------------------------------------------------------------
# Commutation with desingularization


@dataclass
class CommutationReport:
    eps: float
    deviation: float
    witness: dict | None
    path_a: ReducedSpace
    path_b: ReducedSpace
    tol: float = COMMUTATION_TOL

    @property
    def ok(self) -> bool:
        return self.deviation < self.tol and self.path_a.chart.coords == self.path_b.chart.coords

    def lines(self) -> list[str]:
        return [f"eps={self.eps:g} deviation={self.deviation:.3e} "
                f"{'pass' if self.ok else 'FAIL'}" + (f" witness={self.witness}" if not self.ok else "")]


def desingularized_reduction(model: CotangentModel, profile: DesingProfile, levels) -> ReducedSpace:
    """Reduce omega_eps: the th-moment is smooth and the level through t = 0 is regular."""
    w_eps = desingularize(model.form, profile)
    chart = model.chart
    t_i, th_i = chart.t_index, chart.index(THETA)
    key = tuple(sorted((t_i, th_i)))
    slope = w_eps.terms.get(key, sp.Integer(0))
    probe = {c: 0.0 for c in chart.coords}
    if slope == 0 or abs(ex.eval_at(slope, probe)) < 1e-12:
        raise LevelNotRegularError("th-moment of the desingularized model is critical at t=0")
    on_level = drop_coordinates(w_eps, [T], {T: 0})
    _require_basic(on_level, THETA)
    form = drop_coordinates(on_level, [THETA]).map_coefficients(ex.simplify)
    r = ReducedSpace(form.chart, form, model.slice_planes, False,
                     [f"desingularized (eps={float(profile.eps):g}): level t=0, quotient by th"],
                     model.chart.dim, False)
    return reduce_torus_stage(r, levels)


def check_commutation(model: CotangentModel, profile: DesingProfile, levels=None,
                      samples: list | None = None, tol: float = COMMUTATION_TOL) -> CommutationReport:
    if model.degenerate:
        raise ZeroHighestWeightError("commutation needs a nonzero highest modular weight")
    if profile.parity != EVEN:
        raise ValueError("commutation is checked for even-order (symplectic) desingularizations")
    if profile.m != model.m:
        raise ValueError(f"profile order {profile.m} does not match the model order {model.m}")
    levels = {} if levels is None else levels
    a = reduce_model(model, levels)
    b = desingularized_reduction(model, profile, levels)
    if a.chart.coords != b.chart.coords:
        return CommutationReport(float(profile.eps), float("inf"), None, a, b, tol)
    pts = samples if samples is not None else (sample_grid(a.chart, 5, max_points=200) if a.dim else [{}])
    worst, witness = 0.0, None
    for p in pts:
        if a.dim == 0:
            dev = 0.0
        else:
            dev = float(np.max(np.abs(coefficient_matrix(a.form, p) - coefficient_matrix(b.form, p))))
        if dev > worst or witness is None:
            worst, witness = max(worst, dev), dict(p)
    return CommutationReport(float(profile.eps), worst, witness, a, b, tol)


def stages_fixture(m: int = 1, n: int = 3) -> CotangentModel:
    """n = 3 model with c = (0, ..., 0, 1) and the slice rotation in (x1, y1)."""
    return build_cotangent_model(n, m, [0] * (m - 1) + [1], slice_planes=(1,))
