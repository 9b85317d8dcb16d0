"""Atiyah-Bott forms in holonomy Darboux coordinates.

Holonomies around a_i, b_i are used directly as coordinates; one of them may
be marked as the defining function of a b-type degeneration.  For genus > 1
the marking acts on its own (a_i, b_i) block only.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy as sp

from . import expr as ex
from .desing import DesingProfile, agreement_deviation, desingularize, outer_identity
from .errors import NondegeneracyError
from .expr import ChartModel
from .forms import SingularForm, form_to_bivector, is_closed, nondegeneracy_check, sample_grid


@dataclass(frozen=True)
class HolonomyChart:
    genus: int
    marked: str | None = None

    def __post_init__(self):
        if self.genus < 0:
            raise ValueError("genus must be non-negative")
        if self.marked is not None and self.marked not in self.coords:
            raise ValueError(f"marked coordinate {self.marked!r} is not a holonomy coordinate")

    @property
    def coords(self) -> tuple[str, ...]:
        if self.genus == 1:
            return ("a", "b")
        out = []
        for i in range(1, self.genus + 1):
            out += [f"a{i}", f"b{i}"]
        return tuple(out)

    def pairs(self) -> list[tuple[str, str]]:
        c = self.coords
        return [(c[2 * i], c[2 * i + 1]) for i in range(self.genus)]

    def chart(self) -> ChartModel:
        return ChartModel(self.coords, (), self.marked, 1)


def ab_form(h: HolonomyChart, check: bool = True) -> SingularForm:
    """sum_i db_i ^ da_i."""
    if h.marked is not None:
        raise ValueError("chart carries a singular marking; use singular_ab_form")
    chart = h.chart()
    w = SingularForm.zero(chart, 2)
    for a, b in h.pairs():
        w = w + (SingularForm.d(chart, b) ^ SingularForm.d(chart, a))
    if check and chart.dim:
        if not is_closed(w):
            raise NondegeneracyError("Atiyah-Bott form is not closed", None)
        rep = nondegeneracy_check(w, 0, sample_grid(chart, 3, max_points=100))
        rep.raise_if_failed()
    return w


def singular_ab_form(h: HolonomyChart, check: bool = True) -> SingularForm:
    """The block of the marked coordinate s becomes ds/s ^ (partner) in the same order."""
    if h.marked is None:
        raise ValueError("exactly one marked coordinate is required")
    chart = h.chart()
    s = ex.coord(h.marked)
    w = SingularForm.zero(chart, 2)
    for a, b in h.pairs():
        db, da = SingularForm.d(chart, b), SingularForm.d(chart, a)
        block = db ^ da
        if h.marked in (a, b):
            block = block.scale(1 / s)
        w = w + block
    if check:
        if not is_closed(w):
            raise NondegeneracyError("singular Atiyah-Bott form is not closed", None)
        nondegeneracy_check(w, 1, sample_grid(chart, 3, max_points=100)).raise_if_failed()
    return w


def b2_torus_form() -> SingularForm:
    """d theta / sin^2(theta/2) ^ d phi near theta = 0."""
    chart = ChartModel(("theta", "phi"), ("phi",), "theta", 2)
    th = chart.symbols[0]
    return (SingularForm.d(chart, "theta") ^ SingularForm.d(chart, "phi")).scale(1 / sp.sin(th / 2) ** 2)


@dataclass
class LimitReport:
    eps: list
    outer: list  # max |omega_eps - omega| with |theta| >= max(0.5, 2 eps)
    near: list  # max |Pi_eps - Pi| with |theta| in [eps/2, 2 eps]
    symbolic_outer: list

    @property
    def ok(self) -> bool:
        dec = all(a > b for a, b in zip(self.near, self.near[1:]))
        return dec and all(v == 0.0 for v in self.outer) and all(self.symbolic_outer)

    def lines(self) -> list[str]:
        out = ["epsilon,outer-deviation,near-deviation"]
        out += [f"{e:g},{o:.3e},{n:.6e}" for e, o, n in zip(self.eps, self.outer, self.near)]
        return out


def b2_limit_check(eps_list, n_near: int = 25, phi_values=(0.3, 2.0)) -> LimitReport:
    """Desingularize the b^2-torus form for each eps and compare with the limit."""
    eps_list = [Fraction(e).limit_denominator(10**9) if not isinstance(e, Fraction) else e for e in eps_list]
    if not eps_list:
        raise ValueError("empty eps list")
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")
    w = b2_torus_form()
    outer, near, sym = [], [], []
    for e in eps_list:
        prof = DesingProfile.for_order(2, e)
        w_eps = desingularize(w, prof, check=False)
        sym.append(outer_identity(w, w_eps))
        ef = float(e)
        far = np.concatenate([np.linspace(-1.0, -max(0.5, 2 * ef), 12), np.linspace(max(0.5, 2 * ef), 1.0, 12)])
        pts = [{"theta": float(t), "phi": p} for t in far for p in phi_values]
        outer.append(agreement_deviation(w, w_eps, prof, pts))
        mags = np.linspace(ef / 2, 2 * ef, n_near)
        worst = 0.0
        for t in np.concatenate([-mags, mags]):
            for p in phi_values:
                q = {"theta": float(t), "phi": p}
                worst = max(worst, float(np.max(np.abs(form_to_bivector(w_eps, q) - form_to_bivector(w, q)))))
        near.append(worst)
    return LimitReport([float(e) for e in eps_list], outer, near, sym)
