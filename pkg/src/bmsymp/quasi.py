"""Singular quasi-Hamiltonian spaces for torus groups.

Circle-valued moment maps are stored as angle expressions phi_k (Phi_k =
exp(i phi_k)); products of circle values become sums of angles.  For tori
chi = 0, theta^l = theta^r = d phi and varpi = 0, so the axioms read

    (i)   d sigma = 0
    (ii)  i(xi_j) sigma = -d sum_k P_jk phi_k
    (iii) ker sigma and ker d phi meet trivially,

with (iii) evaluated in the rescaled coframe where every singular coordinate
s of order m contributes s^m d/ds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

from . import expr as ex
from .errors import (
    AxiomViolationError,
    FusionMismatchError,
    LevelNotRegularError,
    NonabelianUnsupportedError,
    NonModelActionError,
    SingularEvaluationError,
)
from .expr import ChartModel
from .forms import (
    SingularForm,
    VectorFieldExpr,
    coefficient_matrix,
    interior_product,
    is_closed,
    pullback,
    restrict_to_slice,
    sample_grid,
    to_standard,
    wedge,
)
from .moment import ActionSpec, compute_moment
from .reduction import ReducedSpace

BOUNDARY_LEVELS = ("exp(0)", "bold-zero", "boundary", "infinity")
RANK_TOL = 1e-9


def _matrix(pairing, r: int) -> sp.Matrix:
    P = sp.eye(r) if pairing is None else sp.Matrix(pairing).applyfunc(sp.nsimplify)
    if P.shape != (r, r):
        raise FusionMismatchError(f"pairing must be {r}x{r}, got {P.shape}")
    if P != P.T:
        raise ValueError("pairing must be symmetric")
    if r and not all(P[:k, :k].det() > 0 for k in range(1, r + 1)):
        raise ValueError("pairing must be positive definite")
    return P


def one_form_d(chart: ChartModel, f) -> SingularForm:
    return SingularForm(chart, 1, {(i,): ex.differentiate(f, s) for i, s in enumerate(chart.symbols)})


@dataclass
class AxiomReport:
    closed: bool
    contraction: dict  # component -> bool
    nondegenerate: bool
    witness: dict | None = None
    min_singular_value: float = float("inf")

    @property
    def ok(self) -> bool:
        return self.closed and all(self.contraction.values()) and self.nondegenerate

    def lines(self) -> list[str]:
        yn = lambda b: "yes" if b else "no"
        out = [f"axiom (i) d sigma = 0: {yn(self.closed)}"]
        for k, v in self.contraction.items():
            out.append(f"axiom (ii) [{k}]: {yn(v)}")
        out.append(f"axiom (iii) joint kernel trivial: {yn(self.nondegenerate)}"
                   + (f" (witness {self.witness})" if not self.nondegenerate else ""))
        return out


@dataclass
class QuasiSpace:
    chart: ChartModel
    sigma: SingularForm
    names: tuple
    angles: tuple
    generators: tuple  # VectorFieldExpr per component
    pairing: sp.Matrix
    singular: dict = field(default_factory=dict)  # coordinate -> order
    boundary: dict = field(default_factory=dict)  # component -> tag for t = 0
    provenance: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def angle(self, name: str):
        return self.angles[self.names.index(name)]

    def generator(self, name: str) -> VectorFieldExpr:
        return self.generators[self.names.index(name)]

    def axioms(self, samples=None) -> AxiomReport:
        return check_axioms(self, samples)

    def verify(self, samples=None) -> AxiomReport:
        rep = check_axioms(self, samples)
        if not rep.ok:
            failed = [n for n, v in (("i", rep.closed), ("iii", rep.nondegenerate)) if not v]
            failed += [f"ii[{k}]" for k, v in rep.contraction.items() if not v]
            raise AxiomViolationError(f"axioms {', '.join(failed)} fail", rep.witness)
        return rep

    def summary(self) -> list[str]:
        lines = [f"coordinates: {', '.join(self.chart.coords)}",
                 f"sigma = {self.sigma if self.sigma.terms else '0'}"]
        for n, a in zip(self.names, self.angles):
            lines.append(f"Phi[{n}] = exp({ex.to_text(a)})")
        for n, tag in self.boundary.items():
            lines.append(f"boundary [{n}]: {tag}")
        return lines


# ---------------------------------------------------------------------------
# Axioms


def _rescale(chart: ChartModel, singular: Mapping[str, int]) -> list:
    return [ex.coord(c) ** singular[c] if c in singular else sp.Integer(1) for c in chart.coords]


def _eval(e, p, singular_syms):
    try:
        return ex.eval_at(e, p)
    except SingularEvaluationError:
        for s in singular_syms:
            if p.get(str(s)) == 0.0 and e.has(s):
                e = ex.value_on_slice(e, s)
        return ex.eval_at(e, p)


def check_axioms(Q: QuasiSpace, samples=None) -> AxiomReport:
    chart = Q.chart
    closed = is_closed(Q.sigma)
    contraction = {}
    for j, (name, xi) in enumerate(zip(Q.names, Q.generators)):
        target = sum((Q.pairing[j, k] * Q.angles[k] for k in range(Q.rank)), sp.Integer(0))
        lhs = interior_product(xi, to_standard(Q.sigma))
        contraction[name] = (lhs + one_form_d(chart, target)).is_zero()
    if chart.dim == 0:
        return AxiomReport(closed, contraction, True)
    r = _rescale(chart, Q.singular)
    sig = to_standard(Q.sigma)
    n = chart.dim
    Om = [[sp.Integer(0)] * n for _ in range(n)]
    for (i, j), c in sig.terms.items():
        v = sp.cancel(c * r[i] * r[j])
        Om[i][j], Om[j][i] = v, -v
    J = [[sp.cancel(ex.differentiate(a, s) * r[i]) for i, s in enumerate(chart.symbols)] for a in Q.angles]
    rows = Om + J
    sing_syms = [ex.coord(c) for c in Q.singular]
    pts = samples if samples is not None else sample_grid(chart, 5, max_points=150)
    worst, witness = float("inf"), None
    for p in pts:
        M = np.array([[_eval(e, p, sing_syms) if e != 0 else 0.0 for e in row] for row in rows], dtype=float)
        sv = np.linalg.svd(M, compute_uv=False)
        smin = float(sv[n - 1]) / max(1.0, float(sv[0])) if len(sv) >= n else 0.0
        if smin < worst:
            worst, witness = smin, dict(p)
    nondeg = worst > RANK_TOL
    return AxiomReport(closed, contraction, nondeg, None if nondeg else witness, worst)


# ---------------------------------------------------------------------------
# Construction


def varpi_form(rank: int, pairing=None, abelian: bool = True) -> SingularForm:
    """The averaged Maurer-Cartan 2-form; identically zero for tori.

    With exp_s^* theta^l = s d eta the integrand is s sum_jk P_jk d eta_j ^ d eta_k,
    which cancels term by term because P is symmetric.  The computation is
    carried out, not assumed.
    """
    if not abelian:
        raise NonabelianUnsupportedError("only torus groups are supported")
    P = _matrix(pairing, rank)
    chart = ChartModel(tuple(f"eta{i}" for i in range(1, rank + 1)))
    s = sp.Symbol("s", real=True)
    pulled = [SingularForm.d(chart, c).scale(s) for c in chart.coords]
    d_s = [a.map_coefficients(lambda e: sp.diff(e, s)) for a in pulled]
    integrand = SingularForm.zero(chart, 2)
    for j in range(rank):
        for k in range(rank):
            if P[j, k] != 0:
                integrand = integrand + wedge(pulled[j], d_s[k]).scale(P[j, k])
    out = integrand.map_coefficients(lambda e: sp.integrate(e, (s, 0, 1)) / 2)
    return SingularForm(chart, 2, {k: v for k, v in out.terms.items() if not ex.is_zero(v)})


def _boundary_tag(angle, chart: ChartModel) -> str | None:
    t = chart.t
    if t is None or not angle.has(t):
        return None
    if angle.has(sp.log):
        return f"{chart.defining}=0: |{chart.defining}| -> 0 (points at infinity)"
    return f"{chart.defining}=0: angle -> infinity (points at infinity)"


def exponentiate_space(w: SingularForm, action: ActionSpec, mus: Sequence | None = None,
                       pairing=None, verify: bool = True) -> QuasiSpace:
    """sigma = omega + mu^* varpi = omega; Phi = exp(mu) with angles P^-1 mu."""
    names = tuple(action.generators)
    r = len(names)
    P = _matrix(pairing, r)
    if mus is None:
        mus = [mm.expression for mm in compute_moment(w, action)] if r else []
    mus = [m.reassemble() if hasattr(m, "reassemble") else sp.sympify(m) for m in mus]
    angles = tuple(sp.expand(a) for a in (P.inv() * sp.Matrix(mus))) if r else ()
    chart = w.chart
    sigma = to_standard(w)
    singular = {chart.defining: chart.m} if chart.defining is not None else {}
    boundary = {n: tag for n, a in zip(names, angles) if (tag := _boundary_tag(a, chart))}
    Q = QuasiSpace(chart, sigma, names, angles, tuple(action.generators[n] for n in names), P,
                   singular, boundary, ["exponentiated: Phi = exp(mu), sigma = omega + mu^* varpi"])
    if verify:
        Q.verify()
    return Q


def trivial_space(name: str = "g") -> QuasiSpace:
    chart = ChartModel(())
    return QuasiSpace(chart, SingularForm.zero(chart, 2), (name,), (sp.Integer(0),),
                      (VectorFieldExpr(chart, ()),), sp.eye(1))


def _lift_field(xi: VectorFieldExpr, chart: ChartModel) -> VectorFieldExpr:
    comps = {c: xi[c] for c in xi.chart.coords}
    return VectorFieldExpr.from_dict(chart, comps)


def _lift_form(a: SingularForm, chart: ChartModel) -> SingularForm:
    remap = {i: chart.index(c) for i, c in enumerate(a.chart.coords)}
    src = to_standard(a)
    out = SingularForm.zero(chart, a.degree)
    for k, v in src.terms.items():
        term = SingularForm.function(chart, v)
        for i in k:
            term = wedge(term, SingularForm.d(chart, chart.coords[remap[i]]))
        out = out + term
    return SingularForm(chart, a.degree, out.terms)


def fuse(A: QuasiSpace, B: QuasiSpace, shared: Sequence[tuple] | None = None,
         verify: bool = True) -> QuasiSpace:
    """Fusion along shared circle factors: angles add, sigma gains -1/2 (d phi_A, d phi_B)."""
    if shared is None:
        if not A.rank or not B.rank:
            raise FusionMismatchError("both spaces need a circle factor to fuse")
        shared = [(A.names[0], B.names[0])]
    shared = [tuple(p) for p in shared]
    ia = [A.names.index(a) for a, _ in shared]
    ib = [B.names.index(b) for _, b in shared]
    if A.pairing.extract(ia, ia) != B.pairing.extract(ib, ib):
        raise FusionMismatchError("pairings on the shared factor differ")
    clash = set(A.chart.coords) & set(B.chart.coords)
    if clash:
        raise FusionMismatchError(f"coordinate names occur in both spaces: {sorted(clash)}")
    defining = A.chart.defining or B.chart.defining
    m = A.chart.m if A.chart.defining else B.chart.m
    chart = ChartModel(A.chart.coords + B.chart.coords, A.chart.periodic | B.chart.periodic, defining, m)
    sigma = _lift_form(A.sigma, chart) + _lift_form(B.sigma, chart)
    dA = [one_form_d(chart, A.angles[i]) for i in ia]
    dB = [one_form_d(chart, B.angles[i]) for i in ib]
    P = A.pairing.extract(ia, ia)
    for j in range(len(ia)):
        for k in range(len(ib)):
            if P[j, k] != 0:
                sigma = sigma - wedge(dA[j], dB[k]).scale(P[j, k] / 2)
    sigma = sigma.map_coefficients(lambda c: ex.simplify(ex.rewrite_pythagorean(c)))
    names, angles, gens, order_a, order_b = [], [], [], [], []
    for (a, b), i, k in zip(shared, ia, ib):
        names.append(a)
        angles.append(A.angles[i] + B.angles[k])
        gens.append(_add(_lift_field(A.generators[i], chart), _lift_field(B.generators[k], chart)))
        order_a.append(i)
        order_b.append(k)
    rest_a = [i for i in range(A.rank) if i not in ia]
    rest_b = [k for k in range(B.rank) if k not in ib]
    for i in rest_a:
        names.append(A.names[i])
        angles.append(A.angles[i])
        gens.append(_lift_field(A.generators[i], chart))
    for k in rest_b:
        name = B.names[k]
        names.append(name if name not in names else f"{name}_2")
        angles.append(B.angles[k])
        gens.append(_lift_field(B.generators[k], chart))
    r = len(names)
    Pf = sp.zeros(r, r)
    src = [("G", i, k) for i, k in zip(order_a, order_b)] + [("A", i, None) for i in rest_a] + \
          [("B", None, k) for k in rest_b]
    for x, (sx, ix, kx) in enumerate(src):
        for y, (sy, iy, ky) in enumerate(src):
            if sx == "B" or sy == "B":
                if sx == "A" or sy == "A":
                    continue
                Pf[x, y] = B.pairing[kx, ky]
            else:
                Pf[x, y] = A.pairing[ix, iy]
    singular = dict(A.singular)
    singular.update(B.singular)
    boundary = {**A.boundary, **{n: t for n, t in B.boundary.items() if n not in A.boundary}}
    Q = QuasiSpace(chart, sigma, tuple(names), tuple(sp.expand(a) for a in angles), tuple(gens), Pf,
                   singular, boundary, A.provenance + B.provenance + [f"fused along {shared}"])
    if verify:
        Q.verify()
    return Q


def _add(u: VectorFieldExpr, v: VectorFieldExpr) -> VectorFieldExpr:
    return VectorFieldExpr(u.chart, tuple(a + b for a, b in zip(u.components, v.components)))


# ---------------------------------------------------------------------------
# Reduction


@dataclass
class _Straight:
    chart: ChartModel
    sub: dict  # old coordinate -> expression in new chart
    fiber: str
    changed: set


def _straighten(xi: VectorFieldExpr, chart: ChartModel) -> _Straight:
    """Coordinates in which xi is d/d(fiber)."""
    comps = {c: sp.sympify(xi[c]) for c in chart.coords if xi[c] != 0}
    if not comps:
        raise NonModelActionError("zero generator cannot be quotiented")
    if all(v.is_Integer and c in chart.periodic for c, v in comps.items()):
        names = list(comps)
        v1 = names[0]
        a1 = int(comps[v1])
        if abs(a1) != 1:
            raise NonModelActionError(f"generator {xi} is not primitive along {v1}")
        new = {c: f"{c}_rel" for c in names[1:]}
        coords = tuple(new.get(c, c) for c in chart.coords)
        sub = {v1: ex.coord(v1)}
        for c in names[1:]:
            sub[c] = ex.coord(new[c]) + int(comps[c]) * a1 * ex.coord(v1)
        target = ChartModel(coords, {new.get(c, c) for c in chart.periodic}, chart.defining, chart.m)
        return _Straight(target, sub, v1, set(names))
    if len(comps) == 2:
        (x, fx), (y, fy) = comps.items()
        X, Y = ex.coord(x), ex.coord(y)
        sign = None
        if sp.simplify(fx + Y) == 0 and sp.simplify(fy - X) == 0:
            sign = 1
        elif sp.simplify(fx - Y) == 0 and sp.simplify(fy + X) == 0:
            sign = -1
        if sign is not None:
            r, phi = f"r_{x}", f"phi_{x}"
            coords = tuple(r if c == x else phi if c == y else c for c in chart.coords)
            R, F = ex.coord(r), ex.coord(phi)
            sub = {x: R * sp.cos(sign * F), y: R * sp.sin(sign * F)}
            return _Straight(ChartModel(coords, chart.periodic | {phi}, chart.defining, chart.m), sub, phi, {x, y})
    raise NonModelActionError(f"generator {xi} is neither a coordinate rotation nor a plane rotation")


def _subs_expr(e, sub):
    return sp.sympify(e).xreplace({ex.coord(k): v for k, v in sub.items()})


def _drop_fiber(form: SingularForm, fiber: str) -> SingularForm:
    chart = form.chart
    i = chart.index(fiber)
    s = ex.coord(fiber)
    for k, c in form.terms.items():
        if i in k or c.has(s):
            raise AxiomViolationError(f"pullback to the level is not basic for d/d{fiber}", None)
    keep = tuple(c for c in chart.coords if c != fiber)
    defining = chart.defining if chart.defining in keep else None
    target = ChartModel(keep, chart.periodic - {fiber}, defining, chart.m)
    remap = {chart.index(c): keep.index(c) for c in keep}
    return SingularForm(target, form.degree, {tuple(remap[j] for j in k): v for k, v in form.terms.items()})


def _is_boundary(level) -> bool:
    return isinstance(level, str) and level.strip().lower() in BOUNDARY_LEVELS


def quasi_reduce_abelian(Q: QuasiSpace, factor, level, samples=None, verify: bool = True):
    """Reduce one circle factor at the angle ``level`` (or at the boundary 'exp(0)')."""
    name = Q.names[factor] if isinstance(factor, int) else factor
    if name not in Q.names:
        raise KeyError(f"no factor {name!r}")
    j = Q.names.index(name)
    xi = Q.generators[j]
    for k, other in enumerate(Q.generators):
        if k != j and not xi.bracket(other).is_zero():
            raise NonModelActionError("generators do not commute")
    st = _straighten(xi, Q.chart)
    for k, other in enumerate(Q.generators):
        if k != j and any(other[c] != 0 for c in st.changed):
            raise NonModelActionError(f"factor {Q.names[k]} moves the coordinates straightened for {name}")
    sigma = pullback(Q.sigma, st.chart, st.sub).map_coefficients(ex.simplify)
    angles = [sp.simplify(_subs_expr(a, st.sub)) for a in Q.angles]
    phi = angles[j]
    prov = list(Q.provenance)
    if _is_boundary(level):
        on_level, chart_l, angles = _boundary_level(sigma, j, Q, angles)
        prov.append(f"{name}: boundary level exp(0) on {', '.join(s for s in Q.singular)}")
        singular = {c: o for c, o in Q.singular.items() if c in chart_l.coords}
    else:
        on_level, chart_l, angles, solved = _angle_level(sigma, phi, sp.nsimplify(level), Q, angles, st, samples)
        prov.append(f"{name}: level angle {ex.to_text(sp.nsimplify(level))}, solved for {solved}")
        singular = {c: o for c, o in Q.singular.items() if c in chart_l.coords}
    reduced = _drop_fiber(on_level, st.fiber).map_coefficients(ex.simplify)
    rest = [k for k in range(Q.rank) if k != j]
    for k in rest:
        if angles[k].has(ex.coord(st.fiber)):
            raise AxiomViolationError(f"angle of {Q.names[k]} is not invariant under {name}", None)
    if not rest:
        out = ReducedSpace(reduced.chart, reduced, (), False, prov, Q.dim, Q.sigma.has_singular_atoms())
        if verify:
            if not is_closed(out.form):
                raise AxiomViolationError("reduced form is not closed", None)
            if out.dim % 2 == 0 and not out.nondegenerate():
                raise AxiomViolationError("reduced form degenerates", None)
        return out
    gens = []
    for k in rest:
        g = Q.generators[k]
        gens.append(VectorFieldExpr.from_dict(reduced.chart, {c: g[c] for c in reduced.chart.coords if c in Q.chart.coords}))
    names = tuple(Q.names[k] for k in rest)
    R = QuasiSpace(reduced.chart, reduced, names, tuple(angles[k] for k in rest), tuple(gens),
                   Q.pairing.extract(rest, rest), singular,
                   {n: t for n, t in Q.boundary.items() if n in names}, prov)
    if verify:
        R.verify(samples)
    return R


def _boundary_level(sigma, j, Q, angles):
    chart = sigma.chart
    phi = angles[j]
    sing = [c for c in Q.singular if c in chart.coords and phi.has(ex.coord(c))]
    if len(sing) != 1:
        raise LevelNotRegularError("the boundary level exp(0) needs an angle singular along one hypersurface")
    s = sing[0]
    m = Q.singular[s]
    as_b = SingularForm(ChartModel(chart.coords, chart.periodic, s, m), 2, sigma.terms)
    on_level = restrict_to_slice(as_b)
    S = ex.coord(s)
    new_angles = []
    for k, a in enumerate(angles):
        if k == j:
            new_angles.append(sp.Integer(0))
            continue
        v = ex.value_on_slice(a, S) if a.has(S) else a
        new_angles.append(v)
    return on_level, on_level.chart, new_angles


def _angle_level(sigma, phi, f, Q, angles, st, samples):
    chart = sigma.chart
    cands = [c for c in chart.coords if c != st.fiber and phi.has(ex.coord(c))]
    cands.sort(key=lambda c: (c not in Q.singular, chart.index(c)))
    if not cands:
        raise LevelNotRegularError(f"angle {phi} is constant along the level")
    best = None
    for u in cands:
        U = ex.coord(u)
        try:
            sols = [s for s in sp.solve(sp.Eq(phi, f), U) if s.is_real is not False]
        except NotImplementedError:
            continue
        if not sols:
            continue
        sol = sp.simplify(sols[0])
        keep = tuple(c for c in chart.coords if c != u)
        defining = chart.defining if chart.defining in keep else None
        target = ChartModel(keep, chart.periodic, defining, chart.m)
        pulled = pullback(sigma, target, {u: sol}).map_coefficients(ex.simplify)
        cand = (pulled, target, u, sol)
        if best is None:
            best = cand
        if not pulled.has_singular_atoms():
            best = cand
            break
    if best is None:
        raise LevelNotRegularError(f"level {f} of {phi} is empty or not solvable in closed form")
    pulled, target, u, sol = best
    grad = [sp.simplify(_subs_expr(ex.differentiate(phi, s), {u: sol})) for s in chart.symbols]
    pts = samples if samples is not None else sample_grid(target, 5, max_points=100)
    for p in pts:
        vals = []
        for g in grad:
            try:
                vals.append(abs(ex.eval_at(g, p)) if g != 0 else 0.0)
            except SingularEvaluationError:
                vals.append(float("inf"))
        if max(vals, default=0.0) < 1e-12:
            raise LevelNotRegularError(f"level {f} is critical for {phi} at {p}")
    new_angles = [sp.simplify(_subs_expr(a, {u: sol})) for a in angles]
    return pulled, target, new_angles, u


def hamiltonian_agreement(Q_reduced, H_reduced, samples=None) -> float:
    """Max coefficient deviation between a quasi-reduced and a Hamiltonian-reduced form."""
    a = Q_reduced.form if isinstance(Q_reduced, ReducedSpace) else Q_reduced.sigma
    b = H_reduced.form
    if a.chart.coords != b.chart.coords:
        return float("inf")
    if a.chart.dim == 0:
        return 0.0
    pts = samples if samples is not None else sample_grid(a.chart, 5, max_points=200)
    return max(float(np.max(np.abs(coefficient_matrix(to_standard(a), p) - coefficient_matrix(to_standard(b), p))))
               for p in pts)
