import mpmath
import pytest
import sympy as sp

from bmsymp import expr as ex
from bmsymp.errors import DecompositionError, NonConstantWeightError, NotClosedError, OrderMismatchError
from bmsymp.forms import SingularForm, VectorFieldExpr, ext_d, sample_grid
from bmsymp.laurent import (
    decompose_2form,
    decomposition_report,
    from_power_index,
    modular_weight,
    reconstruct,
    residual,
    to_power_index,
)


def torus(m):
    chart = ex.ChartModel(("th1", "th2"), ("th2",), "th1", m)
    t1 = chart.symbols[0]
    d = lambda c: SingularForm.d(chart, c)
    return chart, (d("th1") ^ d("th2")).scale(sp.sin(t1) ** -m)


def sphere(m):
    chart = ex.ChartModel(("h", "th"), ("th",), "h", m)
    d = lambda c: SingularForm.d(chart, c)
    return chart, (d("h") ^ d("th")).scale(chart.t**-m)


def _laurent_oracle(f, j, r=0.25):
    # coefficient of t^-j by a contour integral, independent of symbolic series
    return mpmath.quad(lambda s: f(r * mpmath.exp(1j * s)) * (r * mpmath.exp(1j * s)) ** (j), [0, 2 * mpmath.pi]) / (
        2 * mpmath.pi)


def test_sphere_alphas():
    chart, w = sphere(2)
    d = decompose_2form(w)
    assert set(d.alphas) == {2}
    assert d.alpha(2).equals(SingularForm.d(chart, "th"))
    assert d.beta.is_zero()


@pytest.mark.parametrize("m", [2, 4])
def test_torus_alphas_match_contour_oracle(m):
    chart, w = torus(m)
    d = decompose_2form(w)
    f = lambda s: 1 / mpmath.sin(s) ** m
    for j in range(1, m + 1):
        coeff = d.alpha(j).coefficient("th2")
        ref = complex(_laurent_oracle(f, j))
        assert abs(float(coeff) - ref.real) < 1e-12 and abs(ref.imag) < 1e-12


def test_torus_b2_values():
    # csc^2 = 1/t^2 + 1/3 + t^2/15 + ...
    chart, w = torus(2)
    d = decompose_2form(w)
    t1 = chart.t
    assert d.alpha(2).coefficient("th2") == 1
    assert d.alpha(1).is_zero()
    series = sp.expand(d.beta_series.coefficient("th1", "th2"))
    assert series.coeff(t1, 0) == sp.Rational(1, 3)
    assert series.coeff(t1, 2) == sp.Rational(1, 15)


@pytest.mark.parametrize("builder, m", [(sphere, 1), (sphere, 2), (sphere, 3), (torus, 2), (torus, 4)])
def test_round_trip(builder, m):
    chart, w = builder(m)
    d = decompose_2form(w)
    pts = sample_grid(chart, 9, t_radius=0.5)
    assert residual(d, w, pts) < 1e-9
    assert all(ext_d(a).is_zero() for a in d.alphas.values())


def test_truncation_residual_reported():
    chart, w = torus(2)
    d = decompose_2form(w)
    assert d.truncation_residual is not None and d.truncation_residual < 1e-5
    assert reconstruct(d).equals(reconstruct(d, truncated=False))


def test_weights():
    chart, w = torus(2)
    d = decompose_2form(w)
    xi = VectorFieldExpr.coordinate(chart, "th2")
    assert modular_weight(d, 2, xi) == 1.0
    assert modular_weight(d, 1, xi) == 0.0
    assert d.highest_weight_nonzero(xi)
    lines = decomposition_report(d, {"rot": xi})
    assert any(line.startswith("modular weights [rot]") for line in lines)


def test_non_constant_weight():
    chart = ex.ChartModel(("t", "x"), (), "t", 2)
    t, x = chart.symbols
    w = (SingularForm.d(chart, "t") ^ SingularForm.d(chart, "x")).scale(x / t**2)
    d = decompose_2form(w)
    with pytest.raises(NonConstantWeightError):
        modular_weight(d, 2, VectorFieldExpr.coordinate(chart, "x"))


def test_weight_needs_tangent_generator():
    chart, w = sphere(2)
    d = decompose_2form(w)
    with pytest.raises(ValueError):
        modular_weight(d, 2, VectorFieldExpr.coordinate(chart, "h"))


def test_not_closed():
    chart = ex.ChartModel(("t", "x", "y"), (), "t", 1)
    t, x, y = chart.symbols
    d = lambda c: SingularForm.d(chart, c)
    w = (d("t") ^ d("x")).scale(y / t) + (d("x") ^ d("y"))
    with pytest.raises(NotClosedError):
        decompose_2form(w)


def test_pole_in_non_dt_slot():
    chart = ex.ChartModel(("t", "x", "y"), (), "t", 1)
    t = chart.t
    w = (SingularForm.d(chart, "x") ^ SingularForm.d(chart, "y")).scale(1 / t)
    with pytest.raises(DecompositionError):
        decompose_2form(w, check_closed=False)


def test_order_mismatch():
    chart, _ = sphere(1)
    w = (SingularForm.d(chart, "h") ^ SingularForm.d(chart, "th")).scale(chart.t**-2)
    with pytest.raises(OrderMismatchError):
        decompose_2form(w)


def test_power_index_round_trip():
    alphas = {1: "a1", 3: "a3"}
    assert to_power_index(alphas, 3) == {2: "a1", 0: "a3"}
    assert from_power_index(to_power_index(alphas, 3), 3) == alphas
