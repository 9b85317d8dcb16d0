"""Seeded random expressions and forms for the property suites.

Denominators and log arguments are built as 2 + sin(u), 1 + u^2 or exp(u),
so every generated expression is smooth on the sampling box.
"""
import itertools

import numpy as np
import sympy as sp

from bmsymp import expr as ex
from bmsymp.forms import SingularForm

CHART = ex.ChartModel(("x", "y", "z", "w"))
SYMS = CHART.symbols


def random_expr(rng, depth=3, syms=SYMS[:3]):
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.75:
            return syms[rng.integers(len(syms))]
        return sp.Rational(int(rng.integers(-5, 6)), int(rng.integers(1, 4)))
    u = random_expr(rng, depth - 1, syms)
    op = rng.integers(10)
    if op == 0:
        return sp.sin(u)
    if op == 1:
        return sp.cos(u)
    if op == 2:
        return sp.exp(sp.sin(u))
    if op == 3:
        return sp.log(sp.Abs(1 + u**2))
    if op == 4:
        return u ** int(rng.integers(2, 4))
    v = random_expr(rng, depth - 1, syms)
    if op in (5, 6):
        return u + v
    if op == 7:
        return u - v
    if op == 8:
        return u * v
    return u / (2 + sp.sin(v))


def expressions(n=200, seed=0):
    rng = np.random.default_rng(seed)
    return [random_expr(rng) for _ in range(n)]


def fd_check(e, rng, npts=3, step=1e-5):
    """Worst relative gap between differentiate and central differences."""
    worst = 0.0
    names = [s.name for s in SYMS[:3]]
    ders = {c: ex.differentiate(e, c) for c in names}
    f = ex.compile_expr(e)
    for _ in range(npts):
        p = {c: float(rng.uniform(-0.9, 0.9)) for c in names}
        for c in names:
            q1, q2 = dict(p), dict(p)
            q1[c] += step
            q2[c] -= step
            fd = (f(q1) - f(q2)) / (2 * step)
            exact = ex.eval_at(ders[c], p)
            worst = max(worst, abs(fd - exact) / max(1.0, abs(exact)))
    return worst


def random_form(rng, degree, depth=2):
    n = CHART.dim
    terms = {}
    for idx in itertools.combinations(range(n), degree):
        if rng.random() < 0.5:
            terms[idx] = random_expr(rng, depth, SYMS)
    return SingularForm(CHART, degree, terms)


def forms(n=500, seed=0):
    rng = np.random.default_rng(seed)
    return [random_form(rng, int(rng.integers(0, 3))) for _ in range(n)]
