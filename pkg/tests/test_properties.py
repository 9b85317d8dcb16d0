import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from _gen import CHART, SYMS, expressions, fd_check, forms, random_expr, random_form
from bmsymp import expr as ex
from bmsymp.forms import SingularForm, ext_d, interior_product, lie_derivative, VectorFieldExpr, wedge


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(1)
    worst = max(fd_check(e, rng) for e in expressions(200))
    assert worst < 1e-5


def test_d_squared_zero():
    bad = [a for a in forms(500) if not ext_d(ext_d(a)).is_zero()]
    assert not bad


seeds = st.integers(0, 2**32 - 1)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_leibniz(seed):
    rng = np.random.default_rng(seed)
    a = random_form(rng, 1)
    b = random_form(rng, 1)
    lhs = ext_d(wedge(a, b))
    rhs = wedge(ext_d(a), b) - wedge(a, ext_d(b))
    assert (lhs - rhs).is_zero()


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_cartan_formula(seed):
    rng = np.random.default_rng(seed)
    a = random_form(rng, 1)
    v = VectorFieldExpr.from_dict(CHART, {c.name: random_expr(rng, 1, SYMS) for c in SYMS[:2]})
    cartan = interior_product(v, ext_d(a)) + ext_d(interior_product(v, a))
    assert (lie_derivative(v, a) - cartan).is_zero()


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_print_parse_round_trip(seed):
    e = random_expr(np.random.default_rng(seed))
    back = ex.parse_expr(ex.to_text(e), CHART)
    p = {"x": 0.31, "y": -0.42, "z": 0.57, "w": 0.1}
    assert ex.eval_at(back, p) == pytest.approx(ex.eval_at(e, p), rel=1e-12, abs=1e-12)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_wedge_graded_commutative(seed):
    rng = np.random.default_rng(seed)
    a, b = random_form(rng, 1), random_form(rng, 2)
    assert wedge(a, b).equals(wedge(b, a))
    assert wedge(a, a).is_zero()


@given(st.integers(2, 6), st.floats(0.05, 0.5))
@settings(max_examples=25, deadline=None)
def test_bm_split_reassembles(m, v):
    chart = ex.ChartModel(("t", "x"), (), "t", m)
    t, x = chart.symbols
    e = sp.log(sp.Abs(t)) * 2 + sum(sp.Rational(k, 3) * t**-k for k in range(1, m)) + sp.sin(x) * t
    bm = ex.split_bm_scalar(e, chart)
    assert ex.eval_at(bm.reassemble(), {"t": v, "x": 0.2}) == pytest.approx(ex.eval_at(e, {"t": v, "x": 0.2}))
