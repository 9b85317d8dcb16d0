"""Desingularization of b^m-symplectic forms.

The singular primitive dt/t^m is replaced by dF for an explicit profile F.
Even order m = 2k gives a symplectic family, odd order m = 2k+1 a folded one.
Profiles are piecewise: a polynomial core, a polynomial bridge where needed,
and the exact outer branch, so that the family agrees with the original form
outside the epsilon-neighbourhood of Z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import sympy as sp

from . import expr as ex
from .errors import DecompositionError, NondegeneracyError, SingularMatrixError
from .forms import (
    SingularForm,
    VectorFieldExpr,
    coefficient_matrix,
    ext_d,
    form_to_bivector,
    lie_derivative,
    nondegeneracy_check,
    pfaffian,
    sample_grid,
    symbolic_pfaffian,
    to_standard,
    wedge,
)
from .laurent import decompose_2form

EVEN, ODD = "even", "odd"
MONOTONE_GRID = 1e-3


def _falling(a: int, n: int) -> int:
    out = 1
    for i in range(n):
        out *= a - i
    return out


# ---------------------------------------------------------------------------
# Profile construction


@lru_cache(maxsize=None)
def _even_core(k: int) -> tuple:
    """Odd polynomial on [-1, 1] glued to -1/((2k-1)x^(2k-1)) + 2 at x = 1.

    Matches derivatives 0..max(2, 2k-1) at x = 1; the remaining free slope at 0
    is picked from a rational scan to maximise min f' on [0, 1].
    """
    R = max(2, 2 * k - 1)
    K = R + 2
    x = sp.Symbol("x")
    g = -sp.Rational(1, 2 * k - 1) * x ** (-(2 * k - 1)) + 2
    targets = [sp.diff(g, x, n).subs(x, 1) for n in range(R + 1)]
    a = sp.symbols(f"a0:{K}")
    p = sum(a[i] * x ** (2 * i + 1) for i in range(K))
    best = None
    grid = np.linspace(0.0, 1.0, 1001)
    for s8 in range(1, 65):
        s = sp.Rational(s8, 8)
        eqs = [sp.diff(p, x, n).subs(x, 1) - targets[n] for n in range(R + 1)]
        eqs = [e.subs(a[0], s) for e in eqs]
        sol = sp.solve(eqs, a[1:], dict=True)[0]
        coeffs = [s] + [sol[ai] for ai in a[1:]]
        poly = np.zeros(2 * K)
        for i, c in enumerate(coeffs):
            poly[2 * i + 1] = float(c)
        dp = np.polynomial.polynomial.polyval(grid, np.polynomial.polynomial.polyder(poly))
        margin = float(dp.min())
        if best is None or margin > best[0]:
            best = (margin, tuple(coeffs))
    if best[0] <= 0:
        raise ValueError(f"no monotone even core found for k={k}; supported even orders are m <= 6")
    return best[1]


@lru_cache(maxsize=None)
def _odd_bridge(k: int) -> tuple:
    """Degree-7 polynomial in u = x - 1 on [1, 2] joining -x^2 + 2 to the outer branch.

    C^2 at both ends; the two free top coefficients are scanned to keep
    f' < 0 with the largest margin.
    """
    inner = [1.0, -2.0, -2.0]
    if k == 0:
        outer = [-math.log(2.0), -0.5, 0.25]
    else:
        p = 2 * k
        outer = [2.0 ** (-p) / p, -(2.0 ** (-p - 1)), (p + 1) * 2.0 ** (-p - 2)]
    grid = np.linspace(0.0, 1.0, 1001)
    best = None
    for c6 in np.arange(-20.0, 20.01, 0.5):
        for c7 in np.arange(-20.0, 20.01, 0.5):
            c = _odd_solve(inner, outer, c6, c7)
            dp = np.polynomial.polynomial.polyval(grid, np.polynomial.polynomial.polyder(c))
            margin = float(-dp.max())
            if best is None or margin > best[0]:
                best = (margin, tuple(c))
    if best[0] <= 0:
        raise DecompositionError(f"no monotone odd bridge found for k={k}")
    return best[1]


def _odd_solve(inner, outer, c6, c7):
    c = np.zeros(8)
    c[0], c[1], c[2] = inner[0], inner[1], inner[2] / 2.0
    # remaining c3, c4, c5 from value, first and second derivative at u = 1
    A = np.array([[1, 1, 1], [3, 4, 5], [6, 12, 20]], dtype=float)
    rhs = np.array([
        outer[0] - (c[0] + c[1] + c[2] + c6 + c7),
        outer[1] - (c[1] + 2 * c[2] + 6 * c6 + 7 * c7),
        outer[2] - (2 * c[2] + 30 * c6 + 42 * c7),
    ])
    c[3:6] = np.linalg.solve(A, rhs)
    c[6], c[7] = c6, c7
    return c


@dataclass(frozen=True)
class DesingProfile:
    parity: str
    k: int
    eps: Fraction
    bridge: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.parity not in (EVEN, ODD):
            raise ValueError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if self.k < 0 or (self.parity == EVEN and self.k < 1):
            raise ValueError(f"invalid k={self.k} for {self.parity} profile")
        eps = Fraction(self.eps).limit_denominator(10**9) if not isinstance(self.eps, Fraction) else self.eps
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "eps", eps)
        if not self.bridge:
            b = _even_core(self.k) if self.parity == EVEN else _odd_bridge(self.k)
            object.__setattr__(self, "bridge", tuple(float(c) for c in b))

    @classmethod
    def for_order(cls, m: int, eps) -> "DesingProfile":
        if m < 1:
            raise ValueError("m must be >= 1")
        return cls(EVEN, m // 2, eps) if m % 2 == 0 else cls(ODD, (m - 1) // 2, eps)

    @property
    def m(self) -> int:
        return 2 * self.k if self.parity == EVEN else 2 * self.k + 1

    @property
    def scale_power(self) -> int:
        return 2 * self.k - 1 if self.parity == EVEN else 2 * self.k

    @property
    def core_radius(self) -> float:
        """|x| beyond which the outer branch holds (before scaling)."""
        return 1.0 if self.parity == EVEN else 2.0


def _branch(profile: DesingProfile, ax: float, n: int, branch: str) -> float:
    """n-th derivative at ax >= 0 of one branch of the unscaled profile."""
    k = profile.k
    if profile.parity == EVEN:
        if branch == "core":
            c = np.zeros(2 * len(profile.bridge))
            for i, a in enumerate(profile.bridge):
                c[2 * i + 1] = a
            return float(np.polynomial.polynomial.polyval(ax, np.polynomial.polynomial.polyder(c, n) if n else c))
        if n == 0:
            return -1.0 / ((2 * k - 1) * ax ** (2 * k - 1)) + 2.0
        return _falling(-2 * k, n - 1) * ax ** (-2 * k - n + 1)
    if branch == "core":
        vals = [2.0 - ax * ax, -2.0 * ax, -2.0]
        return vals[n] if n < 3 else 0.0
    if branch == "bridge":
        c = np.array(profile.bridge)
        return float(np.polynomial.polynomial.polyval(ax - 1.0, np.polynomial.polynomial.polyder(c, n) if n else c))
    if k == 0:
        return -math.log(ax) if n == 0 else -_falling(-1, n - 1) * ax ** (-n)
    if n == 0:
        return ax ** (-2 * k) / (2 * k)
    return -_falling(-2 * k - 1, n - 1) * ax ** (-2 * k - n)


def profile_derivative(profile: DesingProfile, x: float, n: int = 0) -> float:
    """n-th derivative of the unscaled profile f at x."""
    ax = abs(x)
    if profile.parity == EVEN:
        branch = "core" if ax <= 1.0 else "outer"
        # f is odd: f^(n)(-x) = (-1)^(n+1) f^(n)(x)
        sign = (-1.0) ** (n + 1) if x < 0 else 1.0
    else:
        branch = "core" if ax <= 1.0 else ("bridge" if ax < 2.0 else "outer")
        sign = (-1.0) ** n if x < 0 else 1.0
    return sign * _branch(profile, ax, n, branch)


def continuity_defects(profile: DesingProfile, orders: int = 3) -> list[float]:
    """Jumps of f, f', f'' (unscaled) across every breakpoint, branches evaluated exactly there."""
    joints = [(1.0, "core", "outer")] if profile.parity == EVEN else [(1.0, "core", "bridge"), (2.0, "bridge", "outer")]
    return [max(abs(_branch(profile, x, n, a) - _branch(profile, x, n, b)) for x, a, b in joints)
            for n in range(orders)]


def f_eps(profile: DesingProfile, x: float, n: int = 0) -> float:
    """n-th derivative of f_eps(x) = eps^-s f(x / eps)."""
    eps = float(profile.eps)
    u = x / eps
    if n >= 1 and abs(u) > profile.core_radius:
        # outer branch written directly in x: the eps factors cancel exactly
        k = profile.k
        if profile.parity == EVEN:
            return _falling(-2 * k, n - 1) * x ** (-2 * k - n + 1)
        if k == 0:
            return -_falling(-1, n - 1) * x ** (-n)
        return -_falling(-2 * k - 1, n - 1) * x ** (-2 * k - n)
    return eps ** (-profile.scale_power - n) * profile_derivative(profile, u, n)


class Desing(sp.Function):
    """Desing(t, n, parity, k, eps): n-th derivative of f_eps at t (parity 0 even, 1 odd)."""

    nargs = 5

    def fdiff(self, argindex=1):
        if argindex != 1:
            raise sp.ArgumentIndexError(self, argindex)
        t, n, p, k, eps = self.args
        return Desing(t, n + 1, p, k, eps)

    @classmethod
    def _bm_numeric(cls, t, n, p, k, eps):
        return f_eps(_profile_from_args(int(p), int(k), eps), t, int(n))

    def _sympystr(self, printer):
        t, n, p, k, eps = self.args
        return f"f_eps[{'even' if p == 0 else 'odd'},k={k},eps={eps}]^({n})({printer.doprint(t)})"


@lru_cache(maxsize=None)
def _profile_from_args(p: int, k: int, eps: float) -> DesingProfile:
    return DesingProfile(EVEN if p == 0 else ODD, k, Fraction(eps).limit_denominator(10**9))


def profile_atom(profile: DesingProfile, t: sp.Symbol, n: int = 1) -> sp.Expr:
    eps = sp.Rational(profile.eps.numerator, profile.eps.denominator)
    return Desing(t, n, 0 if profile.parity == EVEN else 1, profile.k, eps)


# ---------------------------------------------------------------------------
# Forms


def desingularize(w: SingularForm, profile: DesingProfile, samples=None, check: bool = True,
                  taylor_order: int = 8) -> SingularForm:
    """omega_eps = sum_j F'(t) t^(m-j) dt ^ alpha_j + beta.

    F = f_eps for even m; for odd m the outer branch of f_eps carries the
    opposite sign to dt/t^m and F = -f_eps.
    """
    chart = w.chart
    if chart.m != profile.m:
        raise DecompositionError(f"profile is for m={profile.m} but the chart has m={chart.m}")
    d = decompose_2form(w, taylor_order)
    t, m = chart.t, chart.m
    sign = 1 if profile.parity == EVEN else -1
    Fp = sign * profile_atom(profile, t, 1)
    dt = SingularForm.d(chart, chart.defining)
    out = d.beta
    for j, a in d.alphas.items():
        out = out + wedge(dt.scale(Fp * t ** (m - j)), a)
    if check:
        pts = samples if samples is not None else sample_grid(chart, 9, t_radius=max(0.5, 3 * float(profile.eps)))
        agreement = agreement_deviation(w, out, profile, pts)
        if agreement > 1e-12:
            raise NondegeneracyError(f"omega_eps differs from omega outside 2*eps by {agreement:.3e}")
        if profile.parity == EVEN:
            rep = nondegeneracy_check(out, 0, pts)
            if not rep.ok:
                raise NondegeneracyError("desingularized form degenerates", rep.witness())
    return out


def agreement_deviation(w: SingularForm, w_eps: SingularForm, profile: DesingProfile, samples) -> float:
    """max |omega_eps - omega| over samples with |t| >= 2 eps."""
    chart = w.chart
    lim = 2 * float(profile.eps)
    worst = 0.0
    std = to_standard(w)
    for p in samples:
        if abs(p[chart.defining]) < lim:
            continue
        A = coefficient_matrix(std, p)
        B = coefficient_matrix(w_eps, p)
        worst = max(worst, float(np.max(np.abs(A - B))) / max(1.0, float(np.max(np.abs(A)))))
    return worst


def outer_identity(w: SingularForm, w_eps: SingularForm) -> bool:
    """Symbolic check that omega_eps = omega once F' is replaced by its outer branch."""
    t = w.chart.t
    m = w.chart.m

    def outer(node):
        tt, n, p, k, eps = node.args
        n, p, k = int(n), int(p), int(k)
        if p == 0:
            return _falling(-2 * k, n - 1) * tt ** (-2 * k - n + 1)
        if k == 0:
            return -_falling(-1, n - 1) * tt ** (-n)
        return -_falling(-2 * k - 1, n - 1) * tt ** (-2 * k - n)

    replaced = w_eps.map_coefficients(lambda c: c.replace(lambda n: isinstance(n, Desing), outer))
    return (replaced - to_standard(w)).is_zero()


def is_closed_family(w_eps: SingularForm) -> bool:
    return ext_d(w_eps).is_zero()


def averaging_is_identity(w_eps: SingularForm, generators: dict) -> bool:
    """The profile depends on t only: every generator preserving omega preserves omega_eps."""
    return all(lie_derivative(xi, w_eps).is_zero() for xi in generators.values())


# ---------------------------------------------------------------------------
# Convergence


def _fd_weights(order: int, h: float):
    p = max(1, (order + 1) // 2)
    offsets = np.arange(-p, p + 1)
    A = np.vander(offsets, increasing=True).T.astype(float)
    b = np.zeros(len(offsets))
    b[order] = math.factorial(order)
    w = np.linalg.solve(A, b)
    return offsets, w / h**order


@dataclass
class ConvergenceTable:
    eps: list
    orders: list
    deviation: dict  # (eps, order) -> sup deviation

    def column(self, order: int) -> list:
        return [self.deviation[(e, order)] for e in self.eps]

    def strictly_decreasing(self) -> bool:
        return all(all(a > b for a, b in zip(self.column(n), self.column(n)[1:])) for n in self.orders)

    def rows(self):
        for e in self.eps:
            for n in self.orders:
                yield e, n, self.deviation[(e, n)]

    def csv(self) -> str:
        lines = ["epsilon,deriv-order,sup-deviation"]
        lines += [f"{e:g},{n},{v:.6e}" for e, n, v in self.rows()]
        return "\n".join(lines) + "\n"


def convergence_report(w: SingularForm, profiles: list, t_grid=None, other_points=None,
                       step: float | None = None) -> ConvergenceTable:
    """sup over a fixed off-Z grid of the coordinate derivatives of Pi_eps - Pi.

    Pure partial derivatives of every order 0..2k-1 along every coordinate are
    taken by central finite differences with a step shared by all eps.
    """
    if not profiles:
        raise ValueError("no profiles given")
    if any(p.parity != EVEN for p in profiles):
        raise ValueError("convergence is only claimed for even m")
    chart = w.chart
    k = profiles[0].k
    orders = list(range(0, 2 * k))
    eps_min = min(float(p.eps) for p in profiles)
    h = step if step is not None else eps_min / 50.0
    if t_grid is None:
        pos = np.linspace(eps_min / 4.0, 0.5, 40)
        t_grid = sorted(set(np.round(np.concatenate([-pos, pos]), 12).tolist()))
    if other_points is None:
        others = [c for c in chart.coords if c != chart.defining]
        other_points = [{c: (0.7 if c in chart.periodic else 0.3) for c in others},
                        {c: (2.1 if c in chart.periodic else -0.4) for c in others}]
    forms = [(p, desingularize(w, p, check=False)) for p in profiles]
    for _, w_eps in forms:
        # outside the core the deviation is zero by this identity, not by rounding
        if not outer_identity(w, w_eps):
            raise DecompositionError("omega_eps does not reduce to omega on the outer branch")
    std = to_standard(w)
    deviation = {}
    stencils = {n: _fd_weights(n, h) for n in orders if n > 0}
    for prof, w_eps in forms:
        eps = float(prof.eps)
        cache = {}

        def diff_at(q):
            key = tuple(round(q[c], 14) for c in chart.coords)
            if key not in cache:
                if abs(q[chart.defining]) > prof.core_radius * eps:
                    cache[key] = np.zeros((chart.dim, chart.dim))
                else:
                    cache[key] = form_to_bivector(w_eps, q) - form_to_bivector(std, q)
            return cache[key]

        for n in orders:
            worst = 0.0
            for tv in t_grid:
                for op in other_points:
                    base = dict(op)
                    base[chart.defining] = tv
                    if n == 0:
                        worst = max(worst, float(np.max(np.abs(diff_at(base)))))
                        continue
                    offsets, weights = stencils[n]
                    for c in chart.coords:
                        acc = np.zeros((chart.dim, chart.dim))
                        for o, wt in zip(offsets, weights):
                            q = dict(base)
                            q[c] = q[c] + o * h
                            acc += wt * diff_at(q)
                        worst = max(worst, float(np.max(np.abs(acc))))
            deviation[(eps, n)] = worst
    return ConvergenceTable([float(p.eps) for p in profiles], orders, deviation)


# ---------------------------------------------------------------------------
# Folds


@dataclass
class FoldReport:
    verdict: str  # 'symplectic', 'folded', 'degenerate-fold'
    coordinate: str | None
    zeros: list
    transverse: bool
    restriction_rank: int | None
    pfaffian: sp.Expr
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict in ("symplectic", "folded")


def fold_check(w: SingularForm, coordinate: str | None = None, samples: int = 81,
               radius: float = 1.0, other_points=None, tol: float = 1e-9) -> FoldReport:
    """Locate the Pfaffian zero set along a coordinate and test the fold conditions."""
    chart = w.chart
    if w.degree != 2:
        raise ValueError("fold_check needs a 2-form")
    w = to_standard(w)
    P = symbolic_pfaffian(w)
    if coordinate is None:
        deps = [c for c in chart.coords if P.has(ex.coord(c))]
        coordinate = chart.defining if chart.defining in deps else (deps[0] if deps else None)
    if coordinate is None:
        nonzero = abs(ex.eval_at(P, {c: 0.3 for c in chart.coords})) > tol
        return FoldReport("symplectic" if nonzero else "degenerate-fold", None, [], True, None, P,
                          "constant Pfaffian")
    s = ex.coord(coordinate)
    dP = ex.differentiate(P, s)
    if other_points is None:
        other_points = [{c: (0.7 if c in chart.periodic else 0.3) for c in chart.coords if c != coordinate}]
    line = np.linspace(-radius, radius, samples)
    zeros = []
    for op in other_points:
        vals = []
        for v in line:
            q = dict(op)
            q[coordinate] = float(v)
            vals.append(ex.eval_at(P, q))
        vals = np.array(vals)
        for i, v in enumerate(vals):
            if abs(v) <= tol:
                zeros.append((float(line[i]), op))
            elif i + 1 < len(vals) and abs(vals[i + 1]) > tol and v * vals[i + 1] < 0:
                zeros.append((_bisect(P, coordinate, op, line[i], line[i + 1]), op))
    if not zeros:
        return FoldReport("symplectic", coordinate, [], True, None, P, "Pfaffian has no zeros")
    transverse = True
    ranks = []
    for z, op in zeros:
        q = dict(op)
        q[coordinate] = z
        if abs(ex.eval_at(dP, q)) <= tol:
            transverse = False
        ranks.append(_restriction_rank(w, coordinate, q))
    rank = min(ranks)
    n2 = chart.dim - 2
    if transverse and rank == n2:
        return FoldReport("folded", coordinate, [z for z, _ in zeros], True, rank, P)
    detail = "Pfaffian vanishes non-transversally" if not transverse else f"restriction rank {rank} < {n2}"
    return FoldReport("degenerate-fold", coordinate, [z for z, _ in zeros], transverse, rank, P, detail)


def _bisect(P, name, op, a, b, iters=80):
    f = ex.compile_expr(P)

    def val(x):
        q = dict(op)
        q[name] = float(x)
        return f(q)

    fa = val(a)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        fm = val(mid)
        if fm == 0.0:
            return mid
        if fa * fm < 0:
            b = mid
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def _restriction_rank(w: SingularForm, name: str, point) -> int:
    M = coefficient_matrix(w, point)
    keep = [i for i, c in enumerate(w.chart.coords) if c != name]
    sub = M[np.ix_(keep, keep)]
    if sub.size == 0:
        return 0
    return int(np.linalg.matrix_rank(sub, tol=1e-9))
