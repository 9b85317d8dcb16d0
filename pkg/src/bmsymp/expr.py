"""Scalar expressions over chart coordinates.

Expressions are plain sympy expressions built from real coordinate symbols,
exact rationals, ``pi`` and the atoms sin, cos, tan, cot, exp, abs, log(abs(.))
and the Gauss hypergeometric node :class:`Hyp2F1`.  This module adds the
pieces sympy does not give us directly: a strict parser for the manifest
grammar, a printer that round-trips through it, a float evaluator that
refuses to evaluate atoms on their singular locus, and the canonical
``c1 log|t| + sum c_{i+1} t^-i / i + mu0`` split of b^m-functions.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import sympy as sp

from .errors import (
    NotBmFunctionError,
    ParseError,
    SeriesDomainError,
    SingularEvaluationError,
    UnknownCoordinateError,
)

Expression = sp.Expr

RESERVED_FUNCS = ("sin", "cos", "tan", "cot", "exp", "abs", "log", "hyp2f1")

HYP_TERM_CUTOFF = 1e-15
HYP_MAX_TERMS = 100_000


@lru_cache(maxsize=None)
def coord(name: str) -> sp.Symbol:
    """The (real) sympy symbol used for coordinate ``name``."""
    return sp.Symbol(name, real=True)


# ---------------------------------------------------------------------------
# Chart model


@dataclass(frozen=True)
class ChartModel:
    """Named coordinates with periodicity flags and an optional defining coordinate.

    ``defining`` names the coordinate ``t`` with ``Z = {t = 0}``; ``m`` is the
    singularity order attached to the chart.
    """

    coords: tuple[str, ...]
    periodic: frozenset[str] = field(default_factory=frozenset)
    defining: str | None = None
    m: int = 1

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "periodic", frozenset(self.periodic))
        if len(set(self.coords)) != len(self.coords):
            raise ValueError(f"duplicate coordinate names in {self.coords}")
        for name in self.coords:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) or name in RESERVED_FUNCS or name == "pi":
                raise ValueError(f"invalid coordinate name {name!r}")
        unknown = self.periodic - set(self.coords)
        if unknown:
            raise ValueError(f"periodic flags for unknown coordinates {sorted(unknown)}")
        if self.defining is not None:
            if self.defining not in self.coords:
                raise ValueError(f"defining coordinate {self.defining!r} not in chart")
            if self.defining in self.periodic:
                raise ValueError("the defining coordinate must be non-periodic")
        if not isinstance(self.m, int) or self.m < 1:
            raise ValueError(f"singularity order must be a positive integer, got {self.m!r}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def symbols(self) -> tuple[sp.Symbol, ...]:
        return tuple(coord(c) for c in self.coords)

    @property
    def t(self) -> sp.Symbol | None:
        return None if self.defining is None else coord(self.defining)

    @property
    def t_index(self) -> int | None:
        return None if self.defining is None else self.coords.index(self.defining)

    def index(self, name: str | sp.Symbol) -> int:
        return self.coords.index(str(name))

    def with_m(self, m: int) -> "ChartModel":
        return ChartModel(self.coords, self.periodic, self.defining, m)


# ---------------------------------------------------------------------------
# Special function node


def hyp2f1_eval(a: float, b: float, c: float, x: float) -> float:
    """Gauss hypergeometric 2F1 for real x < 1.

    Direct Gauss series on [0, 1); on (-inf, 0) the Euler transformation
    2F1(a,b;c;x) = (1-x)^-a 2F1(a, c-b; c; x/(x-1)) maps into (0, 1).
    Close to 1 the series stalls, so for x > 0.9 with c-a-b not an integer
    the 1-x connection formula is used instead.
    """
    if c <= 0 and float(c).is_integer():
        raise SeriesDomainError(f"hyp2f1 undefined for non-positive integer c={c}")
    if not x < 1.0:
        raise SeriesDomainError(f"hyp2f1 argument {x} outside the series domain x < 1")
    if x < 0.0:
        return (1.0 - x) ** (-a) * _gauss_series(a, c - b, c, x / (x - 1.0))
    s = c - a - b
    if x > 0.9 and not float(s).is_integer():
        y = 1.0 - x
        g1 = math.gamma(c) * math.gamma(s) * _rgamma(c - a) * _rgamma(c - b)
        g2 = math.gamma(c) * math.gamma(-s) * _rgamma(a) * _rgamma(b)
        out = g1 * _gauss_series(a, b, 1.0 - s, y) if g1 else 0.0
        if g2:
            out += y**s * g2 * _gauss_series(c - a, c - b, 1.0 + s, y)
        return out
    return _gauss_series(a, b, c, x)


def _rgamma(z: float) -> float:
    """1/Gamma(z), zero at the poles."""
    if z <= 0 and float(z).is_integer():
        return 0.0
    return 1.0 / math.gamma(z)


def _gauss_series(a, b, c, x):
    total = 1.0
    term = 1.0
    for n in range(HYP_MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1)) * x
        total += term
        if term == 0.0 or abs(term) <= HYP_TERM_CUTOFF * abs(total):
            return total
    raise SeriesDomainError(f"hyp2f1 series did not converge at x={x}")


class Hyp2F1(sp.Function):
    """hyp2f1(a, b, c; x) with rational parameters; never auto-simplified."""

    nargs = 4

    @classmethod
    def eval(cls, a, b, c, x):
        if x.is_zero:
            return sp.Integer(1)
        return None

    def fdiff(self, argindex=4):
        if argindex != 4:
            raise sp.ArgumentIndexError(self, argindex)
        a, b, c, x = self.args
        return a * b / c * Hyp2F1(a + 1, b + 1, c + 1, x)

    @classmethod
    def _bm_numeric(cls, a, b, c, x):
        return hyp2f1_eval(a, b, c, x)

    def _sympystr(self, printer):
        a, b, c, x = self.args
        return f"hyp2f1({a}, {b}, {c}; {printer.doprint(x)})"


# ---------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?|\.\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),;]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    text = text.rstrip()
    while pos < len(text):
        mt = _TOKEN_RE.match(text, pos)
        if mt is None or mt.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = mt.lastgroup
        start = mt.start(kind)
        tokens.append((kind, mt.group(kind), start))
        pos = mt.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ParseError(f"expected {value!r}, found {what}", tok[2], self.text)
        self.i += 1
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2], self.text)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            tok = self.take()
            rhs = self.unary()
            if tok[1] == "*":
                e = e * rhs
            else:
                if rhs == 0:
                    raise ParseError("division by literal zero", tok[2], self.text)
                e = e / rhs
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.factor()

    def factor(self):
        base = self.base()
        if self.peek()[1] == "^":
            tok = self.take()
            exponent = self.unary()
            if not (exponent.is_Integer):
                raise ParseError(f"non-integer exponent {exponent}", tok[2], self.text)
            if base == 0 and exponent < 0:
                raise ParseError("negative power of literal zero", tok[2], self.text)
            return base ** exponent
        return base

    def base(self):
        kind, value, pos = self.peek()
        if kind == "num":
            self.take()
            return sp.Rational(value)
        if kind == "id":
            self.take()
            if value in RESERVED_FUNCS:
                return self.call(value, pos)
            if value == "pi":
                return sp.pi
            if self.names is not None and value not in self.names:
                raise UnknownCoordinateError(f"unknown identifier {value!r}", pos, self.text)
            return coord(value)
        if value == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        what = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"unexpected {what}", pos, self.text)

    def call(self, name, pos):
        self.take("(")
        if name == "hyp2f1":
            params = [self.rational_param()]
            for _ in range(2):
                self.take(",")
                params.append(self.rational_param())
            self.take(";")
            arg = self.expr()
            self.take(")")
            return Hyp2F1(*params, arg)
        arg = self.expr()
        self.take(")")
        if name == "log":
            if isinstance(arg, sp.Abs):
                return sp.log(arg)
            if arg.is_positive:
                # abs() already absorbed by sympy, e.g. abs(x^2 + 1)
                return sp.log(arg)
            if isinstance(arg, sp.exp):
                return arg.args[0]
            raise ParseError("log is only defined on abs(...) or positive constants", pos, self.text)
        return {
            "sin": sp.sin,
            "cos": sp.cos,
            "tan": sp.tan,
            "cot": sp.cot,
            "exp": sp.exp,
            "abs": sp.Abs,
        }[name](arg)

    def rational_param(self):
        pos = self.peek()[2]
        value = self.expr()
        if not value.is_Rational:
            raise ParseError("hyp2f1 parameters must be rational constants", pos, self.text)
        return value


def parse_expr(text: str, chart: ChartModel | Iterable[str] | None = None) -> Expression:
    """Parse ``text`` in the expression grammar.

    Identifiers must be coordinates of ``chart`` (a ChartModel or an iterable
    of names); with ``chart=None`` any identifier becomes a coordinate.
    """
    if isinstance(chart, ChartModel):
        names = set(chart.coords)
    elif chart is None:
        names = None
    else:
        names = set(chart)
    return _Parser(text, names).parse()


# ---------------------------------------------------------------------------
# Printer


def to_text(e: Expression) -> str:
    """Print ``e`` in the manifest grammar (parse(to_text(e)) == e)."""
    return _print(sp.sympify(e), 0)


# precedence: 0 sum, 1 product, 2 unary minus, 3 power/atom
def _wrap(s, inner, outer):
    return f"({s})" if inner < outer else s


def _print(e, prec):
    if e.is_Integer:
        s = str(int(e))
        return _wrap(s, 2 if e < 0 else 3, prec)
    if e.is_Rational:
        s = f"{e.p}/{e.q}"
        return _wrap(s, 1 if e > 0 else 1, prec if prec < 2 else 3)
    if e is sp.pi:
        return "pi"
    if e.is_Symbol:
        return e.name
    if e.is_Add:
        terms = e.as_ordered_terms()
        out = _print(terms[0], 0)
        for term in terms[1:]:
            if _is_negative_term(term):
                out += " - " + _print(-term, 1)
            else:
                out += " + " + _print(term, 1)
        return _wrap(out, 0, prec)
    if e.is_Mul:
        if _is_negative_term(e):
            return _wrap("-" + _print(-e, 1), 2, prec)
        num, den = [], []
        coeff, rest = e.as_coeff_Mul()
        if coeff != 1:
            if coeff.is_Rational and coeff.q != 1:
                if coeff.p != 1:
                    num.append(str(coeff.p))
                den.append(str(coeff.q))
            else:
                num.append(_print(coeff, 3))
        for f in sp.Mul.make_args(rest):
            if f.is_Pow and f.exp.is_Integer and f.exp < 0:
                den.append(_print(f.base ** (-f.exp), 3 if -f.exp == 1 else 1))
            else:
                num.append(_print(f, 1))
        numer = "*".join(num) if num else "1"
        if not den:
            return _wrap(numer, 1, prec)
        denom = den[0] if len(den) == 1 else "(" + "*".join(den) + ")"
        if len(den) == 1 and not _is_atomic_text(den[0]):
            denom = f"({den[0]})"
        return _wrap(f"{numer}/{denom}", 1, prec)
    if e.is_Pow:
        base, ex = e.base, e.exp
        if ex.is_Integer and ex < 0:
            return _wrap(f"1/{_print(base ** (-ex), 3)}", 1, prec)
        if ex.is_Integer:
            return _wrap(f"{_print(base, 4)}^{int(ex)}", 3, prec)
        return _wrap(f"{_print(base, 4)}^({_print(ex, 0)})", 3, prec)
    if isinstance(e, Hyp2F1):
        a, b, c, x = e.args
        return f"hyp2f1({_print(a, 0)}, {_print(b, 0)}, {_print(c, 0)}; {_print(x, 0)})"
    if isinstance(e, sp.Abs):
        return f"abs({_print(e.args[0], 0)})"
    if isinstance(e, sp.log) and not isinstance(e.args[0], sp.Abs) and not e.args[0].is_number:
        # sympy drops abs() on positive arguments; the grammar needs it back
        return f"log(abs({_print(e.args[0], 0)}))"
    if isinstance(e, sp.Function):
        name = type(e).__name__
        return f"{name}({', '.join(_print(a, 0) for a in e.args)})"
    if e is sp.E:
        return "exp(1)"
    return _wrap(str(e), 0, prec)


def _is_negative_term(term):
    coeff, _ = term.as_coeff_Mul()
    return coeff.is_Number and coeff < 0


def _is_atomic_text(s):
    mt = re.fullmatch(r"(.+)\^\d+", s)
    if mt:
        s = mt.group(1)
    if re.fullmatch(r"[A-Za-z_0-9.]+", s):
        return True
    # a single call or parenthesised group: the opening bracket must close at the end
    mt = re.fullmatch(r"[A-Za-z_0-9]*\((.*)\)", s)
    if not mt:
        return False
    depth = 0
    for ch in mt.group(1):
        depth += {"(": 1, ")": -1}.get(ch, 0)
        if depth < 0:
            return False
    return depth == 0


# ---------------------------------------------------------------------------
# Calculus and simplification


def _locally_constant(e: Expression) -> Expression:
    # sign(u) -> u/|u|; its derivative vanishes away from the zero set of u
    if e.has(sp.DiracDelta):
        e = e.replace(lambda x: isinstance(x, sp.DiracDelta), lambda x: sp.Integer(0))
    if e.has(sp.sign):
        e = e.replace(sp.sign, lambda u: u / sp.Abs(u))
    return e


def differentiate(e: Expression, name: str | sp.Symbol) -> Expression:
    """Partial derivative with respect to the coordinate ``name``."""
    sym = name if isinstance(name, sp.Symbol) else coord(name)
    return _locally_constant(sp.diff(e, sym))


def canonical(e: Expression) -> Expression:
    """Canonical sum-of-products form (no trig identities applied)."""
    return sp.expand(sp.sympify(e))


def simplify(e: Expression) -> Expression:
    """Value-preserving simplification: rational normalisation then expansion."""
    e = sp.sympify(e)
    if e.is_Number:
        return e
    c = sp.cancel(sp.together(e))
    ex = sp.expand(c)
    return ex if sp.count_ops(ex) <= sp.count_ops(c) else c


def rewrite_hypergeometric(e: Expression) -> Expression:
    """Named rewrite 2F1(a, b; a; x) = 2F1(b, a; a; x) = (1 - x)^(-b)."""

    def rule(node):
        a, b, c, x = node.args
        if a == c:
            return (1 - x) ** (-b)
        if b == c:
            return (1 - x) ** (-a)
        return node

    return e.replace(lambda n: isinstance(n, Hyp2F1), rule)


def rewrite_pythagorean(e: Expression) -> Expression:
    """Named rewrite sin^2 + cos^2 -> 1 (and consequences)."""
    return sp.trigsimp(e)


def apply_named_rewrites(e: Expression) -> Expression:
    e = rewrite_hypergeometric(sp.sympify(e))
    e = rewrite_pythagorean(e)
    e = sp.powsimp(e)
    return simplify(e)


def is_zero(e: Expression) -> bool:
    """Exact zero test: increasingly expensive symbolic normalisations."""
    e = sp.sympify(e)
    if e == 0:
        return True
    for step in (sp.expand, lambda x: sp.cancel(sp.together(x)), sp.trigsimp, sp.simplify):
        try:
            e = step(e)
        except (TypeError, ValueError, NotImplementedError):
            continue
        if e == 0:
            return True
    return False


def free_of(e: Expression, names: Iterable[str | sp.Symbol]) -> bool:
    syms = {n if isinstance(n, sp.Symbol) else coord(n) for n in names}
    return not (sp.sympify(e).free_symbols & syms)


# ---------------------------------------------------------------------------
# Numeric evaluation


def _check_tan(v):
    if math.cos(v) == 0.0:
        raise SingularEvaluationError(f"tan evaluated at its pole {v}")


def _check_cot(v):
    if math.sin(v) == 0.0 or v == 0.0:
        raise SingularEvaluationError(f"cot evaluated at its pole {v}")


def _log_abs(v):
    if v == 0.0:
        raise SingularEvaluationError("log evaluated at 0")
    if v < 0:
        raise SingularEvaluationError(f"log of negative value {v}")
    return math.log(v)


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        raise SingularEvaluationError(f"exp overflow at {v}") from None


_UNARY = {
    sp.sin: math.sin,
    sp.cos: math.cos,
    sp.exp: _exp,
    sp.Abs: abs,
    sp.tan: lambda v: (_check_tan(v), math.tan(v))[1],
    sp.cot: lambda v: (_check_cot(v), 1.0 / math.tan(v))[1],
    sp.log: _log_abs,
    sp.sign: lambda v: math.copysign(1.0, v) if v != 0 else 0.0,
}


@lru_cache(maxsize=8192)
def _compile(e: sp.Basic) -> Callable[[Mapping[str, float]], float]:
    if e.is_Number or e.is_NumberSymbol:
        value = float(e)
        return lambda env: value
    if e.is_Symbol:
        name = e.name

        def sym(env):
            try:
                return env[name]
            except KeyError:
                raise KeyError(f"no value supplied for coordinate {name!r}") from None

        return sym
    if e.is_Add:
        parts = [_compile(a) for a in e.args]
        return lambda env: math.fsum(p(env) for p in parts)
    if e.is_Mul:
        parts = [_compile(a) for a in e.args]

        def mul(env):
            out = 1.0
            for p in parts:
                out *= p(env)
            return out

        return mul
    if e.is_Pow:
        base = _compile(e.base)
        ex = e.exp
        if ex.is_Integer:
            n = int(ex)

            def ipow(env):
                b = base(env)
                if n < 0 and b == 0.0:
                    raise SingularEvaluationError(f"pole: {e} at base 0")
                try:
                    return b ** n
                except (OverflowError, ZeroDivisionError):
                    raise SingularEvaluationError(f"overflow in {e}") from None

            return ipow
        if ex.is_Number:
            q = float(ex)

            def rpow(env):
                b = base(env)
                if b < 0:
                    raise SingularEvaluationError(f"fractional power of negative base in {e}")
                if b == 0.0 and q < 0:
                    raise SingularEvaluationError(f"pole: {e} at base 0")
                return b ** q

            return rpow
        expo = _compile(ex)

        def gpow(env):
            b = base(env)
            if b <= 0:
                raise SingularEvaluationError(f"non-integer power of non-positive base in {e}")
            return b ** expo(env)

        return gpow
    func = type(e)
    if func in _UNARY:
        arg = _compile(e.args[0])
        f = _UNARY[func]
        return lambda env: f(arg(env))
    numeric = getattr(func, "_bm_numeric", None)
    if numeric is not None:
        args = [_compile(a) for a in e.args]
        return lambda env: numeric(*(a(env) for a in args))
    raise TypeError(f"cannot evaluate atom {e!r}")


def eval_at(e: Expression, point: Mapping) -> float:
    """Evaluate ``e`` in IEEE doubles at ``point`` (coordinate name -> value)."""
    env = {str(k): float(v) for k, v in point.items()}
    try:
        value = _compile(sp.sympify(e))(env)
    except ZeroDivisionError as exc:
        raise SingularEvaluationError(str(exc)) from None
    if not math.isfinite(value):
        raise SingularEvaluationError(f"non-finite value {value} for {e}")
    return value


def compile_expr(e: Expression) -> Callable[[Mapping[str, float]], float]:
    """Compiled evaluator; the returned callable takes a name -> float mapping."""
    return _compile(sp.sympify(e))


@lru_cache(maxsize=4096)
def value_on_slice(e: Expression, t: sp.Symbol) -> Expression:
    """Restriction of ``e`` to ``t = 0``, resolving removable singularities."""
    e = sp.sympify(e)
    if not e.has(t):
        return e
    direct = e.subs(t, 0)
    if direct.is_finite is not False and not direct.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        if not _has_hidden_pole(e, t):
            return direct
    if _principal_part(e, t):
        raise SingularEvaluationError(f"{e} is singular at {t}=0")
    value = sp.series(e, t, 0, n=1).removeO().subs(t, 0)
    if value.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        raise SingularEvaluationError(f"{e} is singular at {t}=0")
    return value


def _has_hidden_pole(e, t):
    # subs can silently cancel e.g. 0*zoo inside products of atoms
    for node in sp.preorder_traversal(e):
        if node.is_Pow and node.exp.is_negative and node.base.has(t):
            if node.base.subs(t, 0) == 0:
                return True
        if isinstance(node, sp.cot) and node.args[0].has(t) and sp.sin(node.args[0]).subs(t, 0) == 0:
            return True
        if isinstance(node, sp.log) and node.args[0].has(t) and node.args[0].subs(t, 0) == 0:
            return True
    return False


def eval_near(e: Expression, point: Mapping, t: sp.Symbol | None) -> float:
    """eval_at, falling back to the t=0 restriction for removable singularities."""
    try:
        return eval_at(e, point)
    except SingularEvaluationError:
        if t is None or float(point.get(t.name, 1.0)) != 0.0:
            raise
        return eval_at(value_on_slice(sp.sympify(e), t), point)


def has_singular_atoms(e: Expression, t: sp.Symbol | None = None) -> bool:
    """True if ``e`` contains a pole or log atom (in ``t``, or in any symbol)."""
    for node in sp.preorder_traversal(sp.sympify(e)):
        if isinstance(node, sp.log) and node.args[0].free_symbols:
            if t is None or node.has(t):
                return True
        if node.is_Pow and node.exp.is_negative and node.base.free_symbols:
            if t is None or node.base.has(t):
                return True
        if isinstance(node, (sp.cot, sp.tan)) and (t is None or node.has(t)):
            return True
    return False


# ---------------------------------------------------------------------------
# b^m-functions


@dataclass(frozen=True)
class BmFunction:
    """c1 log|t| + sum_{i=1}^{m-1} c_{i+1} t^-i / i + mu0."""

    t: sp.Symbol
    m: int
    log_coeff: Expression
    pole_coeffs: tuple  # (c2, ..., cm)
    smooth: Expression

    def __post_init__(self):
        if len(self.pole_coeffs) != self.m - 1:
            raise ValueError(f"expected {self.m - 1} pole coefficients, got {len(self.pole_coeffs)}")

    @property
    def coefficients(self) -> tuple:
        """(c1, c2, ..., cm)."""
        return (self.log_coeff, *self.pole_coeffs)

    def reassemble(self) -> Expression:
        t = self.t
        out = self.log_coeff * sp.log(sp.Abs(t)) + self.smooth
        for i, c in enumerate(self.pole_coeffs, start=1):
            out += c * t ** (-i) / i
        return out

    def equals(self, other: "BmFunction") -> bool:
        if self.m != other.m or self.t != other.t:
            return False
        pairs = zip(self.coefficients + (self.smooth,), other.coefficients + (other.smooth,))
        return all(is_zero(a - b) for a, b in pairs)

    def shifted(self, constant) -> "BmFunction":
        return BmFunction(self.t, self.m, self.log_coeff, self.pole_coeffs, self.smooth + constant)

    def __str__(self):
        cs = ", ".join(to_text(c) for c in self.coefficients)
        return f"c=({cs}); mu0={to_text(self.smooth)}"


def _principal_part(e: Expression, t: sp.Symbol) -> dict[int, Expression]:
    """Coefficients of t^-k (k >= 1) in the Laurent expansion of e at t = 0."""
    e = sp.sympify(e)
    if not e.has(t):
        return {}
    try:
        ser = sp.series(e, t, 0, n=1).removeO()
    except (ValueError, NotImplementedError, TypeError) as exc:
        raise NotBmFunctionError(f"no Laurent expansion of {e} at {t}=0: {exc}") from None
    out: dict[int, Expression] = {}
    for term in sp.Add.make_args(sp.expand(ser)):
        coeff, dep = term.as_independent(t, as_Add=False)
        if term == 0 or dep == 1 or dep == t:
            continue
        if dep.is_Pow and dep.base == t and dep.exp.is_Integer:
            k = int(dep.exp)
            if k < 0:
                out[-k] = out.get(-k, 0) + coeff
            continue
        raise NotBmFunctionError(f"non-decomposable atom {dep} at {t}=0 in {e}")
    return {k: v for k, v in out.items() if v != 0}


def split_bm_scalar(e: Expression, chart: ChartModel) -> BmFunction:
    """Canonical b^m-function split with respect to the chart's defining coordinate."""
    if chart.t is None:
        raise ValueError("chart has no defining coordinate")
    t, m = chart.t, chart.m
    logt = sp.log(sp.Abs(t))
    c1 = sp.Integer(0)
    poles = [sp.Integer(0)] * (m - 1)
    smooth = sp.Integer(0)
    for term in sp.Add.make_args(sp.expand(sp.sympify(e))):
        coeff, dep = term.as_independent(t, as_Add=False)
        if dep.has(logt):
            ratio = sp.simplify(dep / logt)
            if ratio.has(t):
                raise NotBmFunctionError(f"log|t| multiplied by t-dependent factor in {term}")
            c1 += coeff * ratio
            continue
        for node in sp.preorder_traversal(dep):
            if isinstance(node, (sp.log, sp.Abs)) and node.has(t) and node.args[0].subs(t, 0) == 0:
                raise NotBmFunctionError(f"non-decomposable atom {node} at {t}=0 in {term}")
        principal = _principal_part(dep, t)
        remainder = dep
        for k, a in principal.items():
            if k >= m:
                raise NotBmFunctionError(f"pole of order {k} >= m={m} in {term}")
            poles[k - 1] += k * coeff * a
            remainder = remainder - a * t ** (-k)
        smooth += coeff * remainder
    smooth = sp.expand(smooth)
    if _principal_part(smooth, t):
        raise NotBmFunctionError(f"smooth part {smooth} is not finite at {t}=0")
    return BmFunction(t, m, simplify(c1), tuple(simplify(p) for p in poles), smooth)


def reassemble(bm: BmFunction) -> Expression:
    return bm.reassemble()
