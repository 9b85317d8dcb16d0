import math
import time

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from bmsymp import expr as ex
from bmsymp.errors import (
    AntiderivativeNotInTableError,
    ModelViolationError,
    NotClosedError,
    NotInvariantError,
)
from bmsymp.forms import SingularForm, VectorFieldExpr, ext_d, interior_product
from bmsymp.laurent import decompose_2form, modular_weight
from bmsymp.moment import (
    ActionSpec,
    check_bm_hamiltonian,
    compute_moment,
    cotangent_lift_moment,
    default_t_values,
    integrate,
    moment_image,
    potential,
    realized_sign,
    split_from_weights,
    split_moment,
    weight_consistency,
)

x = ex.coord("x")


def sphere(m):
    chart = ex.ChartModel(("h", "th"), ("th",), "h", m)
    w = (SingularForm.d(chart, "h") ^ SingularForm.d(chart, "th")).scale(chart.t**-m)
    return w, ActionSpec(chart, {"rot": VectorFieldExpr.coordinate(chart, "th")})


def b2torus():
    chart = ex.ChartModel(("th1", "th2"), ("th2",), "th1", 2)
    w = (SingularForm.d(chart, "th1") ^ SingularForm.d(chart, "th2")).scale(sp.sin(chart.t) ** -2)
    return w, ActionSpec(chart, {"rot": VectorFieldExpr.coordinate(chart, "th2")})


BMTORUS_DISPLAY = "abs(cos(th1))/cos(th1)*hyp2f1(1/2, -1/2, 1/2; sin(th1)^2)/sin(th1)"


class TestAction:
    def test_non_commuting(self):
        chart = ex.ChartModel(("x", "y"))
        with pytest.raises(ValueError):
            ActionSpec.from_components(chart, {"a": {"x": "1"}, "b": {"y": "x"}})

    def test_angle_dependence(self):
        chart = ex.ChartModel(("h", "th"), ("th",), "h", 1)
        with pytest.raises(ValueError):
            ActionSpec.from_components(chart, {"a": {"th": "sin(th)"}})

    def test_rank(self):
        w, a = sphere(1)
        assert a.rank == 1


class TestHamiltonianCheck:
    def test_sphere_contraction(self):
        w, a = sphere(2)
        rep = check_bm_hamiltonian(w, a)
        assert rep.ok
        h = w.chart.t
        assert rep.checks[0].contraction.equals(SingularForm.d(w.chart, "h").scale(-(h**-2)))
        assert rep.checks[0].pole_order == 2

    def test_torus(self):
        assert check_bm_hamiltonian(*b2torus()).ok

    def test_radial_generator_fails(self):
        w, _ = sphere(2)
        h = w.chart.t
        a = ActionSpec(w.chart, {"rad": VectorFieldExpr.from_dict(w.chart, {"h": h})})
        rep = check_bm_hamiltonian(w, a)
        assert not rep.ok and not rep.checks[0].invariant
        with pytest.raises(NotInvariantError):
            rep.raise_if_failed()
        with pytest.raises(NotInvariantError):
            compute_moment(w, a)


class TestTable:
    @pytest.mark.parametrize("f", [
        x**-3, 1 / x, x**4, 1 / (2 * x + 1), (3 * x - 1) ** -2,
        sp.sin(x) ** -2, sp.sin(x) ** -1, sp.sin(x) ** -3, sp.sin(x) ** -4,
        sp.cos(2 * x), sp.exp(-x), sp.tan(x), sp.cot(x), sp.sin(x) ** 2, sp.cos(x) ** 2, sp.cos(x) ** -2,
        x**2 * sp.sin(x), x**3 * sp.exp(2 * x), x * sp.cos(3 * x + 1), x**4 * sp.cos(x),
    ])
    def test_derivative_of_primitive(self, f):
        F = integrate(f, x)
        assert ex.is_zero(ex.differentiate(F, x) - f)
        for v in (0.3, 0.7, 1.3):
            num = (ex.eval_at(F, {"x": v + 1e-6}) - ex.eval_at(F, {"x": v - 1e-6})) / 2e-6
            assert abs(num - float(f.subs(x, v))) < 1e-5 * max(1.0, abs(num))

    def test_csc2_base_is_minus_cot(self):
        assert ex.is_zero(integrate(sp.sin(x) ** -2, x) + sp.cos(x) / sp.sin(x))

    @pytest.mark.parametrize("f", [sp.exp(x**2), x**5 * sp.sin(x), sp.log(x), x**-1 * sp.sin(x), sp.sqrt(x)])
    def test_outside_table(self, f):
        with pytest.raises(AntiderivativeNotInTableError):
            integrate(f, x)

    def test_potential_not_closed(self):
        chart = ex.ChartModel(("x", "y"))
        a = SingularForm(chart, 1, {(0,): ex.coord("y")})
        with pytest.raises(NotClosedError):
            potential(a)


class TestComputeMoment:
    @pytest.mark.parametrize("m, expected", [
        (1, "log(abs(h))"), (2, "-1/h"), (3, "-1/(2*h^2)"), (4, "-1/(3*h^3)"),
    ])
    def test_sphere(self, m, expected):
        w, a = sphere(m)
        t0 = time.perf_counter()
        (mm,) = compute_moment(w, a)
        assert time.perf_counter() - t0 < 1.0
        assert ex.is_zero(mm.expression - ex.parse_expr(expected, w.chart))

    def test_torus(self):
        w, a = b2torus()
        (mm,) = compute_moment(w, a, base_point={"th1": 1.0})
        th1 = w.chart.t
        diff = mm.expression + sp.cos(th1) / sp.sin(th1)
        assert ex.is_zero(sp.diff(diff, th1))

    def test_contraction_identity(self):
        for m in (1, 2, 3):
            w, a = sphere(m)
            (mm,) = compute_moment(w, a)
            d_mu = SingularForm.function(w.chart, mm.expression)
            assert (ext_d(d_mu) + interior_product(a.generators["rot"], w)).is_zero()

    def test_base_point_normalization(self):
        chart = ex.ChartModel(("t", "x", "y"), (), "t", 2)
        d = lambda c: SingularForm.d(chart, c)
        w = (d("t") ^ d("x")).scale(chart.t**-2) + (d("x") ^ d("y"))
        a = ActionSpec.from_components(chart, {"s": {"x": "1"}})
        (mm,) = compute_moment(w, a, base_point={"y": 2.0})
        assert ex.is_zero(mm.expression - (-1 / chart.t - ex.coord("y") + 2))


class TestHypergeometric:
    def test_realized_sign(self):
        w, a = b2torus()
        disp = ex.parse_expr(BMTORUS_DISPLAY, w.chart)
        assert realized_sign(disp, w, a.generators["rot"]) == -1

    def test_rewrite_to_cot(self):
        w, _ = b2torus()
        th1 = w.chart.t
        disp = ex.parse_expr(BMTORUS_DISPLAY, w.chart)
        r = ex.apply_named_rewrites(disp)
        assert ex.is_zero(r - sp.cos(th1) / sp.sin(th1))

    def test_numeric_agreement_100_points(self):
        w, _ = b2torus()
        disp = ex.parse_expr(BMTORUS_DISPLAY, w.chart)
        rng = np.random.default_rng(7)
        pts = rng.uniform(0.05, math.pi - 0.05, 100)
        pts = [p for p in pts if abs(p - math.pi / 2) > 1e-3]
        for p in pts:
            assert abs(ex.eval_at(disp, {"th1": p, "th2": 0.0}) - math.cos(p) / math.sin(p)) < 1e-10

    def test_split_constant_from_taylor(self):
        # -cot(th) ~ -1/th near 0, so c2 = -1 under the working sign
        w, a = b2torus()
        (mm,) = compute_moment(w, a, base_point={"th1": 1.0})
        assert split_moment(mm.mu).coefficients == (0, -1)


class TestSplit:
    def test_log(self):
        chart = ex.ChartModel(("t",), (), "t", 1)
        s = split_moment(ex.split_bm_scalar(sp.log(sp.Abs(chart.t)), chart))
        assert s.coefficients == (1,) and s.smooth == 0

    def test_slice_hamiltonian(self):
        chart = ex.ChartModel(("t", "x", "y"), (), "t", 2)
        X, Y = ex.coord("x"), ex.coord("y")
        s = split_moment(ex.split_bm_scalar(-1 / chart.t + (X**2 + Y**2) / 2, chart))
        assert s.coefficients == (0, -1)
        assert ex.is_zero(s.smooth - (X**2 + Y**2) / 2)

    def test_non_constant_coefficient(self):
        chart = ex.ChartModel(("t", "x"), (), "t", 1)
        bm = ex.split_bm_scalar(ex.coord("x") * sp.log(sp.Abs(chart.t)), chart)
        with pytest.raises(ModelViolationError):
            split_moment(bm)

    @given(st.integers(-50, 50))
    @settings(max_examples=25, deadline=None)
    def test_constants_shift_invariant(self, c):
        w, a = sphere(2)
        (mm,) = compute_moment(w, a)
        assert split_moment(mm.mu.shifted(c)).coefficients == split_moment(mm.mu).coefficients

    @pytest.mark.parametrize("builder", [lambda: sphere(1), lambda: sphere(2), lambda: sphere(3), b2torus])
    def test_highest_constant_iff_highest_weight(self, builder):
        w, a = builder()
        moments = compute_moment(w, a, base_point={w.chart.defining: 1.0} if w.chart.defining == "th1" else None)
        d = decompose_2form(w)
        for mm in moments:
            aw = modular_weight(d, d.m, a.generators[mm.name])
            cm = split_moment(mm.mu).coefficients[-1]
            assert (cm != 0) == (aw != 0)
        assert all(weight_consistency(w, a, moments).values())

    def test_split_from_weights(self):
        assert split_from_weights([1.0, 2.0, -3.0]) == (1.0, -2.0, 3.0)


class TestCotangentLift:
    base = ex.ChartModel(("a", "phi"), ("phi",), "a", 3)

    def test_log(self):
        mu = cotangent_lift_moment(1, (1,), self.base.with_m(1))
        assert ex.is_zero(mu.reassemble() - sp.log(sp.Abs(ex.coord("a"))))

    def test_single_term(self):
        mu = cotangent_lift_moment(3, (0, 0, 1), self.base)
        assert ex.is_zero(mu.reassemble() - ex.coord("a") ** -2 / 2)

    def test_zero_constants(self):
        X = ex.coord("x")
        mu = cotangent_lift_moment(3, (0, 0, 0), self.base, mu0=X**2)
        assert ex.is_zero(mu.reassemble() - X**2)

    def test_wrong_count(self):
        with pytest.raises(ValueError):
            cotangent_lift_moment(2, (1,), self.base)


class TestImage:
    def test_components_and_markers(self):
        w, a = sphere(2)
        (mm,) = compute_moment(w, a)
        rows = moment_image(mm.mu, w.chart, default_t_values(41), clip=10)
        assert {r[0] for r in rows} == {0, 1}
        assert all(r[1] < 0 for r in rows if r[0] == 0)
        assert any(r[3] == "→∞" for r in rows) and any(r[3] == "→-∞" for r in rows)
        assert all(abs(r[2]) <= 10 for r in rows)

    def test_log_zigzag(self):
        w, a = sphere(1)
        (mm,) = compute_moment(w, a)
        rows = moment_image(mm.mu, w.chart, [-0.5, 0.5, 1e-30])
        assert rows[0][2] == rows[1][2] == pytest.approx(math.log(0.5))
        assert rows[2][3] == "→-∞"
