"""Differential forms with singular coefficients on a coordinate chart.

A form is a sparse map from strictly increasing index tuples to coefficient
expressions.  The coframe flag says whether the slot of the defining
coordinate means ``dt`` ('standard') or ``dt/t^m`` ('b').  Calculus is done
in the standard coframe; the b-coframe is a change of basis used for
finiteness and nondegeneracy questions on Z.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import sympy as sp

from . import expr as ex
from .errors import (
    CoframeMismatchError,
    NondegeneracyError,
    OrderMismatchError,
    ParseError,
    SingularEvaluationError,
    SingularMatrixError,
)
from .expr import ChartModel

STANDARD = "standard"
BCOFRAME = "b"

PFAFFIAN_TOL = 1e-12


def _sort_sign(idx: Sequence[int]):
    """Sorted copy of idx with the permutation sign; sign 0 on repeats."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return (), 0
    sign = 1
    # insertion sort, counting transpositions
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    return tuple(idx), sign


class SingularForm:
    """A k-form sum_I a_I dx^I with Expression coefficients."""

    __slots__ = ("chart", "degree", "terms", "coframe")

    def __init__(self, chart: ChartModel, degree: int, terms: Mapping | None = None, coframe: str = STANDARD):
        if coframe not in (STANDARD, BCOFRAME):
            raise ValueError(f"unknown coframe {coframe!r}")
        self.chart = chart
        self.degree = degree
        self.coframe = coframe
        clean = {}
        for idx, c in (terms or {}).items():
            idx = tuple(idx)
            if len(idx) != degree:
                raise ValueError(f"index {idx} does not have length {degree}")
            key, sign = _sort_sign(idx)
            if sign == 0:
                continue
            c = sp.sympify(c) * sign
            clean[key] = clean.get(key, 0) + c
        self.terms = {k: v for k, v in clean.items() if v != 0}

    # construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, chart: ChartModel, degree: int = 0, coframe: str = STANDARD) -> "SingularForm":
        return cls(chart, degree, {}, coframe)

    @classmethod
    def function(cls, chart: ChartModel, f, coframe: str = STANDARD) -> "SingularForm":
        return cls(chart, 0, {(): sp.sympify(f)}, coframe)

    @classmethod
    def d(cls, chart: ChartModel, name: str) -> "SingularForm":
        return cls(chart, 1, {(chart.index(name),): 1})

    @classmethod
    def from_terms(cls, chart: ChartModel, terms: Iterable[tuple], coframe: str = STANDARD) -> "SingularForm":
        """Build from (coefficient, [coordinate names]) pairs."""
        terms = list(terms)
        if not terms:
            return cls.zero(chart, 0, coframe)
        degree = len(terms[0][1])
        acc: dict = {}
        for coeff, names in terms:
            if len(names) != degree:
                raise ValueError("all terms must have the same degree")
            idx = tuple(chart.index(n) for n in names)
            key, sign = _sort_sign(idx)
            if sign:
                acc[key] = acc.get(key, 0) + sign * sp.sympify(coeff)
        return cls(chart, degree, acc, coframe)

    # algebra ----------------------------------------------------------------

    def _check(self, other: "SingularForm"):
        if self.chart.coords != other.chart.coords:
            raise CoframeMismatchError("forms live on different charts")
        if self.coframe != other.coframe:
            raise CoframeMismatchError(f"coframe mismatch: {self.coframe} vs {other.coframe}")

    def __add__(self, other: "SingularForm") -> "SingularForm":
        self._check(other)
        if self.degree != other.degree and self.terms and other.terms:
            raise ValueError("cannot add forms of different degree")
        degree = self.degree if self.terms else other.degree
        acc = dict(self.terms)
        for k, v in other.terms.items():
            acc[k] = acc.get(k, 0) + v
        return SingularForm(self.chart, degree, acc, self.coframe)

    def __neg__(self) -> "SingularForm":
        return self.scale(-1)

    def __sub__(self, other: "SingularForm") -> "SingularForm":
        return self + (-other)

    def scale(self, f) -> "SingularForm":
        f = sp.sympify(f)
        return SingularForm(self.chart, self.degree, {k: f * v for k, v in self.terms.items()}, self.coframe)

    def __xor__(self, other: "SingularForm") -> "SingularForm":
        return wedge(self, other)

    def map_coefficients(self, fn) -> "SingularForm":
        return SingularForm(self.chart, self.degree, {k: fn(v) for k, v in self.terms.items()}, self.coframe)

    def simplified(self) -> "SingularForm":
        return self.map_coefficients(ex.simplify)

    def coefficient(self, *names: str):
        idx = tuple(self.chart.index(n) for n in names)
        key, sign = _sort_sign(idx)
        return sign * self.terms.get(key, sp.Integer(0))

    def is_zero(self) -> bool:
        return all(ex.is_zero(v) for v in self.terms.values())

    def equals(self, other: "SingularForm") -> bool:
        if self.coframe != other.coframe:
            other = other.in_coframe(self.coframe)
        diff = self - other
        return diff.is_zero()

    def in_coframe(self, coframe: str) -> "SingularForm":
        if coframe == self.coframe:
            return self
        return to_b_coframe(self) if coframe == BCOFRAME else to_standard(self)

    def free_of(self, names: Iterable[str]) -> bool:
        return all(ex.free_of(v, names) for v in self.terms.values())

    def has_singular_atoms(self) -> bool:
        return any(ex.has_singular_atoms(v) for v in self.terms.values())

    def items(self):
        """(coefficient, coordinate names) pairs in index order."""
        for idx in sorted(self.terms):
            yield self.terms[idx], tuple(self.chart.coords[i] for i in idx)

    def key(self) -> tuple:
        """Hashable identity of the value."""
        return (self.chart, self.degree, self.coframe, tuple(sorted(self.terms.items())))

    def __repr__(self):
        return f"SingularForm({self})"

    def __str__(self):
        return form_to_text(self)


def form_to_text(a: SingularForm) -> str:
    if not a.terms:
        return "0"
    t = a.chart.defining
    parts = []
    for coeff, names in a.items():
        if len(names) == 2 and coeff.could_extract_minus_sign():
            coeff, names = -coeff, (names[1], names[0])
        tags = []
        for n in names:
            if a.coframe == BCOFRAME and n == t:
                tags.append(f"d{n}/{n}^{a.chart.m}")
            else:
                tags.append(f"d{n}")
        frame = "∧".join(tags)
        if not names:
            parts.append(ex.to_text(coeff))
        elif coeff == 1:
            parts.append(frame)
        else:
            parts.append(f"({ex.to_text(coeff)})*{frame}")
    return " + ".join(parts)


# ---------------------------------------------------------------------------
# Vector fields


@dataclass(frozen=True)
class VectorFieldExpr:
    """Components against the coordinate frame d/dx_i."""

    chart: ChartModel
    components: tuple

    @classmethod
    def from_dict(cls, chart: ChartModel, comps: Mapping[str, object]) -> "VectorFieldExpr":
        unknown = set(comps) - set(chart.coords)
        if unknown:
            raise KeyError(f"unknown coordinates {sorted(unknown)}")
        return cls(chart, tuple(sp.sympify(comps.get(c, 0)) for c in chart.coords))

    @classmethod
    def coordinate(cls, chart: ChartModel, name: str) -> "VectorFieldExpr":
        return cls.from_dict(chart, {name: 1})

    def __getitem__(self, name: str):
        return self.components[self.chart.index(name)]

    def apply(self, f) -> sp.Expr:
        """Directional derivative v(f)."""
        return sp.Add(*[c * ex.differentiate(f, s) for c, s in zip(self.components, self.chart.symbols) if c != 0])

    def is_bm_field(self, m: int) -> bool:
        """True if the t-component vanishes to order m at t = 0."""
        t = self.chart.t
        if t is None:
            return True
        vt = self[self.chart.defining]
        try:
            return ex._principal_part(vt / t**m, t) == {} and ex.value_on_slice(vt / t**m, t).is_finite is not False
        except Exception:
            return False

    def bracket(self, other: "VectorFieldExpr") -> "VectorFieldExpr":
        comps = [self.apply(b) - other.apply(a) for a, b in zip(self.components, other.components)]
        return VectorFieldExpr(self.chart, tuple(comps))

    def is_zero(self) -> bool:
        return all(ex.is_zero(c) for c in self.components)

    def __str__(self):
        parts = [f"({ex.to_text(c)})*d/d{n}" for c, n in zip(self.components, self.chart.coords) if c != 0]
        return " + ".join(parts) or "0"


# ---------------------------------------------------------------------------
# Operations


def wedge(a: SingularForm, b: SingularForm) -> SingularForm:
    a._check(b)
    acc: dict = {}
    for ia, ca in a.terms.items():
        for ib, cb in b.terms.items():
            key, sign = _sort_sign(ia + ib)
            if sign:
                acc[key] = acc.get(key, 0) + sign * ca * cb
    return SingularForm(a.chart, a.degree + b.degree, acc, a.coframe)


def ext_d(a: SingularForm) -> SingularForm:
    """Exterior derivative (computed in the standard coframe)."""
    src = to_standard(a)
    syms = a.chart.symbols
    acc: dict = {}
    for idx, c in src.terms.items():
        for i, s in enumerate(syms):
            if i in idx:
                continue
            dc = ex.differentiate(c, s)
            if dc == 0:
                continue
            key, sign = _sort_sign((i,) + idx)
            acc[key] = acc.get(key, 0) + sign * dc
    out = SingularForm(a.chart, a.degree + 1, acc, STANDARD)
    if a.coframe == BCOFRAME:
        try:
            return to_b_coframe(out)
        except OrderMismatchError:
            return out
    return out


def interior_product(v: VectorFieldExpr, a: SingularForm) -> SingularForm:
    if v.chart.coords != a.chart.coords:
        raise CoframeMismatchError("vector field and form live on different charts")
    if a.degree == 0:
        return SingularForm.zero(a.chart, 0, a.coframe)
    src = to_standard(a)
    acc: dict = {}
    for idx, c in src.terms.items():
        for p, i in enumerate(idx):
            comp = v.components[i]
            if comp == 0:
                continue
            key = idx[:p] + idx[p + 1:]
            acc[key] = acc.get(key, 0) + (-1) ** p * comp * c
    out = SingularForm(a.chart, a.degree - 1, acc, STANDARD)
    if a.coframe == BCOFRAME:
        try:
            return to_b_coframe(out)
        except OrderMismatchError:
            return out
    return out


def lie_derivative(v: VectorFieldExpr, a: SingularForm) -> SingularForm:
    """Cartan's formula L_v = i_v d + d i_v."""
    first = interior_product(v, ext_d(a)) if a.degree < a.chart.dim else SingularForm.zero(a.chart, a.degree)
    second = ext_d(interior_product(v, a)) if a.degree > 0 else SingularForm.zero(a.chart, a.degree)
    return to_standard(first) + to_standard(second)


def pullback(a: SingularForm, target: ChartModel, substitution: Mapping[str, object]) -> SingularForm:
    """Pullback along x_i = phi_i(target coordinates).

    ``substitution`` gives every source coordinate as an expression in the
    target chart; coordinates missing from it are identified by name.
    """
    src = to_standard(a)
    phi = {}
    for name in src.chart.coords:
        if name in substitution:
            phi[name] = sp.sympify(substitution[name])
        elif name in target.coords:
            phi[name] = ex.coord(name)
        else:
            raise KeyError(f"no substitution for coordinate {name!r}")
    subs = {ex.coord(n): e for n, e in phi.items()}
    dphi = {}
    for name, e in phi.items():
        dphi[name] = SingularForm(
            target, 1, {(j,): ex.differentiate(e, s) for j, s in enumerate(target.symbols)}
        )
    out = SingularForm.zero(target, a.degree)
    for idx, c in src.terms.items():
        term = SingularForm.function(target, c.xreplace(subs))
        for i in idx:
            term = wedge(term, dphi[src.chart.coords[i]])
        out = out + term if out.terms else term
    return SingularForm(target, a.degree, out.terms)


def to_standard(a: SingularForm) -> SingularForm:
    if a.coframe == STANDARD:
        return a
    t_i = a.chart.t_index
    t, m = a.chart.t, a.chart.m
    terms = {k: (v / t**m if t_i in k else v) for k, v in a.terms.items()}
    return SingularForm(a.chart, a.degree, terms, STANDARD)


def to_b_coframe(a: SingularForm, m: int | None = None) -> SingularForm:
    """Re-express against {dt/t^m, dx_2, ...}; coefficients must be finite at t = 0."""
    if a.coframe == BCOFRAME and (m is None or m == a.chart.m):
        return a
    chart = a.chart if m is None else a.chart.with_m(m)
    if chart.t is None:
        raise ValueError("chart has no defining coordinate")
    src = to_standard(SingularForm(chart, a.degree, a.terms, a.coframe))
    t, t_i = chart.t, chart.t_index
    terms = {}
    for k, v in src.terms.items():
        c = sp.together(v * t**chart.m) if t_i in k else v
        if c.has(t):
            try:
                poles = ex._principal_part(c, t)
            except ex.NotBmFunctionError as exc:
                raise OrderMismatchError(str(exc)) from None
            if poles:
                slot = "dt" if t_i in k else "non-dt"
                raise OrderMismatchError(
                    f"coefficient {v} of {[chart.coords[i] for i in k]} has a pole of order "
                    f"{max(poles) + (chart.m if t_i in k else 0)} in the {slot} slot (m={chart.m})"
                )
        terms[k] = c
    return SingularForm(chart, a.degree, terms, BCOFRAME)


def restrict_to_slice(a: SingularForm) -> SingularForm:
    """Pullback to Z = {t = 0} (b-coframe terms containing dt/t^m are dropped)."""
    b = to_b_coframe(a)
    chart = a.chart
    t, t_i = chart.t, chart.t_index
    coords = tuple(c for c in chart.coords if c != chart.defining)
    target = ChartModel(coords, chart.periodic)
    remap = {i: coords.index(n) for i, n in enumerate(chart.coords) if n != chart.defining}
    terms = {}
    for k, v in b.terms.items():
        if t_i in k:
            continue
        terms[tuple(remap[i] for i in k)] = ex.value_on_slice(v, t)
    return SingularForm(target, a.degree, terms)


def drop_coordinates(a: SingularForm, names: Iterable[str], values: Mapping[str, object] | None = None) -> SingularForm:
    """Restrict to the coordinate subspace where ``names`` are frozen."""
    names = set(names)
    values = {ex.coord(n): sp.sympify(v) for n, v in (values or {}).items()}
    chart = a.chart
    keep = tuple(c for c in chart.coords if c not in names)
    defining = chart.defining if chart.defining in keep else None
    target = ChartModel(keep, chart.periodic & set(keep), defining, chart.m)
    drop_idx = {chart.index(n) for n in names}
    remap = {chart.index(n): keep.index(n) for n in keep}
    terms = {}
    for k, v in a.terms.items():
        if drop_idx & set(k):
            continue
        terms[tuple(remap[i] for i in k)] = v.xreplace(values) if values else v
    return SingularForm(target, a.degree, terms, a.coframe if defining else STANDARD)


def is_closed(a: SingularForm) -> bool:
    if a.degree >= a.chart.dim:
        return True
    return ext_d(a).is_zero()


# ---------------------------------------------------------------------------
# Numerics


def coefficient_matrix(a: SingularForm, point: Mapping[str, float]) -> np.ndarray:
    """Antisymmetric matrix of a 2-form in its current coframe."""
    if a.degree != 2:
        raise ValueError("coefficient matrix needs a 2-form")
    n = a.chart.dim
    M = np.zeros((n, n))
    t = a.chart.t if a.coframe == BCOFRAME else None
    for (i, j), c in a.terms.items():
        v = ex.eval_near(c, point, t if t is not None else a.chart.t)
        M[i, j] += v
        M[j, i] -= v
    return M


def pfaffian(M: np.ndarray) -> float:
    """Pfaffian by expansion along the first row (fine for dim <= 10)."""
    n = M.shape[0]
    if n == 0:
        return 1.0
    if n % 2:
        return 0.0
    if n == 2:
        return float(M[0, 1])
    total = 0.0
    rest = list(range(1, n))
    for pos, j in enumerate(rest):
        if M[0, j] == 0.0:
            continue
        keep = [k for k in rest if k != j]
        total += (-1) ** pos * M[0, j] * pfaffian(M[np.ix_(keep, keep)])
    return total


def symbolic_pfaffian(a: SingularForm) -> sp.Expr:
    n = a.chart.dim
    M = sp.zeros(n, n)
    for (i, j), c in a.terms.items():
        M[i, j] += c
        M[j, i] -= c

    def pf(idx):
        if not idx:
            return sp.Integer(1)
        if len(idx) % 2:
            return sp.Integer(0)
        first, rest = idx[0], idx[1:]
        out = sp.Integer(0)
        for pos, j in enumerate(rest):
            if M[first, j] == 0:
                continue
            out += (-1) ** pos * M[first, j] * pf([k for k in rest if k != j])
        return out

    return pf(list(range(n)))


@dataclass
class NondegeneracyReport:
    points: list
    pfaffians: list
    passed: list
    coframe: str
    ok: bool = field(init=False)

    def __post_init__(self):
        self.ok = all(self.passed)

    def witness(self):
        for p, ok in zip(self.points, self.passed):
            if not ok:
                return p
        return None

    def raise_if_failed(self):
        if not self.ok:
            raise NondegeneracyError("form degenerates", self.witness())


def nondegeneracy_check(a: SingularForm, m: int, samples: Iterable[Mapping[str, float]],
                        tol: float = PFAFFIAN_TOL) -> NondegeneracyReport:
    """Evaluate the Pfaffian in the b^m-coframe (m = 0: standard coframe)."""
    if a.degree != 2:
        raise ValueError("nondegeneracy needs a 2-form")
    if a.chart.dim % 2:
        raise ValueError("nondegeneracy needs an even-dimensional chart")
    form = to_standard(a) if m == 0 else to_b_coframe(a, m)
    points, pfs, passed = [], [], []
    for p in samples:
        p = dict(p)
        try:
            pf = pfaffian(coefficient_matrix(form, p))
        except SingularEvaluationError:
            pf = float("nan")
        points.append(p)
        pfs.append(pf)
        passed.append(bool(np.isfinite(pf) and abs(pf) > tol))
    return NondegeneracyReport(points, pfs, passed, form.coframe)


def form_to_bivector(a: SingularForm, point: Mapping[str, float], cond_limit: float = 1e12) -> np.ndarray:
    """Pi = Omega^-1 for the standard-coframe coefficient matrix Omega."""
    M = coefficient_matrix(to_standard(a), point)
    pf = pfaffian(M)
    scale = max(1.0, float(np.max(np.abs(M))))
    if abs(pf) <= PFAFFIAN_TOL * scale ** (M.shape[0] // 2) or np.linalg.cond(M) > cond_limit:
        raise SingularMatrixError(f"coefficient matrix is singular at {dict(point)}")
    return np.linalg.inv(M)


def grid_points(chart: ChartModel, spec: Mapping[str, Sequence[float]]) -> list[dict]:
    """Cartesian product grid; coordinates missing from spec are set to 0.3."""
    axes = [list(spec.get(c, [0.3])) for c in chart.coords]
    return [dict(zip(chart.coords, vals)) for vals in itertools.product(*axes)]


# ---------------------------------------------------------------------------
# Manifest literals

_TAG_RE = re.compile(r"d([A-Za-z_][A-Za-z0-9_]*)(?:/([A-Za-z_][A-Za-z0-9_]*)(?:\^(\d+))?)?$")


def parse_frame_tag(tag: str, chart: ChartModel):
    """'dx' -> ('x', 0); 'dt/t^j' -> ('t', j)."""
    mt = _TAG_RE.match(tag.strip())
    if not mt:
        raise ParseError(f"bad basis tag {tag!r}")
    name, den, power = mt.group(1), mt.group(2), mt.group(3)
    if name not in chart.coords:
        raise ex.UnknownCoordinateError(f"unknown coordinate {name!r} in tag {tag!r}")
    if den is None:
        return name, 0
    if den != name:
        raise ParseError(f"basis tag {tag!r} must divide d{name} by a power of {name}")
    return name, int(power) if power else 1


def form_from_literal(chart: ChartModel, terms: Iterable[Mapping]) -> SingularForm:
    """Build a standard-coframe form from [{coeff, frame}] records."""
    out = None
    for rec in terms:
        coeff = ex.parse_expr(str(rec["coeff"]), chart)
        frame = list(rec["frame"])
        piece = SingularForm.function(chart, coeff)
        for tag in frame:
            name, j = parse_frame_tag(tag, chart)
            piece = wedge(piece, SingularForm.d(chart, name).scale(ex.coord(name) ** (-j)))
        out = piece if out is None else out + piece
    return out if out is not None else SingularForm.zero(chart, 2)


def sample_grid(chart: ChartModel, n: int = 10, t_radius: float = 0.5, radius: float = 1.0,
                max_points: int = 400, seed: int = 0) -> list[dict]:
    """Deterministic sample points; the t-axis always contains t = 0.

    Periodic coordinates sample [0, 2pi) with a small offset, others
    [-radius, radius].  Large products are thinned by a seeded draw.
    """
    axes = []
    for c in chart.coords:
        if c == chart.defining:
            vals = sorted(set(np.round(np.linspace(-t_radius, t_radius, n), 15).tolist()) | {0.0})
        elif c in chart.periodic:
            vals = (0.1 + 2 * np.pi * np.arange(n) / n).tolist()
        else:
            vals = np.linspace(-radius, radius, n).tolist()
        axes.append(vals)
    total = int(np.prod([len(a) for a in axes])) if axes else 1
    if total <= max_points:
        return [dict(zip(chart.coords, v)) for v in itertools.product(*axes)]
    rng = np.random.default_rng(seed)
    t_axis = axes[chart.t_index] if chart.t_index is not None else [None]
    per_t = max(1, max_points // len(t_axis))
    out = []
    for tv in t_axis:
        for _ in range(per_t):
            p = {c: float(rng.choice(ax)) for c, ax in zip(chart.coords, axes)}
            if tv is not None:
                p[chart.defining] = tv
            out.append(p)
    return out
