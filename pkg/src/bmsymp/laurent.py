"""Laurent decomposition of closed singular 2-forms near Z.

omega = sum_j dt/t^j ^ alpha_j + beta, with alpha_j one-forms on the slice
(coefficients free of t, no dt) and beta finite at t = 0.  alpha_j carries
exactly the t^-j Laurent coefficient of the dt-slot at t = 0; everything else
goes to beta, which is kept exact.  A Taylor truncation of beta is also
produced so the truncation error can be reported.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import expr as ex
from .errors import DecompositionError, NonConstantWeightError, NotClosedError
from .forms import (
    STANDARD,
    SingularForm,
    VectorFieldExpr,
    ext_d,
    is_closed,
    sample_grid,
    to_b_coframe,
    to_standard,
    wedge,
)

log = logging.getLogger(__name__)

DEFAULT_ORDER = 8
WEIGHT_TOL = 1e-9


@dataclass
class LaurentDecomposition:
    chart: ex.ChartModel
    m: int
    alphas: dict  # j -> one-form (1 <= j <= m)
    beta: SingularForm
    order: int = DEFAULT_ORDER
    beta_series: SingularForm | None = None
    truncation_residual: float | None = None
    warnings: list = field(default_factory=list)

    def alpha(self, j: int) -> SingularForm:
        return self.alphas.get(j, SingularForm.zero(self.chart, 1))

    def power_indexed(self) -> dict:
        """alpha in the dt/t^m ^ sum_i t^i alpha^(i) convention: alpha^(i) = alpha_{m-i}."""
        return to_power_index(self.alphas, self.m)

    def highest_weight_nonzero(self, xi: VectorFieldExpr) -> bool:
        return abs(modular_weight(self, self.m, xi)) > WEIGHT_TOL


def to_power_index(alphas: dict, m: int) -> dict:
    return {m - j: a for j, a in alphas.items()}


def from_power_index(alphas: dict, m: int) -> dict:
    return {m - i: a for i, a in alphas.items()}


def _dt_wedge(chart: ex.ChartModel, j: int) -> SingularForm:
    t = chart.t
    return SingularForm.d(chart, chart.defining).scale(t ** (-j))


_CACHE: dict = {}


def decompose_2form(w: SingularForm, order: int = DEFAULT_ORDER, check_closed: bool = True,
                    tol: float = 1e-9, samples: list | None = None) -> LaurentDecomposition:
    """Laurent decomposition; results for identical inputs are memoised (values are immutable)."""
    key = (w.key(), order, check_closed, tol) if samples is None else None
    if key is not None and key in _CACHE:
        return _CACHE[key]
    d = _decompose(w, order, check_closed, tol, samples)
    if key is not None:
        _CACHE[key] = d
    return d


def _decompose(w, order, check_closed, tol, samples):
    chart = w.chart
    if chart.t is None:
        raise DecompositionError("chart has no defining coordinate")
    if w.degree != 2:
        raise DecompositionError(f"expected a 2-form, got degree {w.degree}")
    w = to_standard(w)
    if check_closed and not is_closed(w):
        raise NotClosedError(f"form {w} is not closed")
    t, t_i, m = chart.t, chart.t_index, chart.m
    for k, c in w.terms.items():
        if t_i not in k and ex._principal_part(c, t):
            raise DecompositionError(f"pole in a slot without dt: {c} on {[chart.coords[i] for i in k]}")
    to_b_coframe(w)  # raises OrderMismatchError for dt-slot poles beyond m

    alpha_terms: dict = {}
    for k, c in w.terms.items():
        if t_i not in k:
            continue
        other = k[1] if k[0] == t_i else k[0]
        sign = 1 if k[0] == t_i else -1
        for j, a in ex._principal_part(c, t).items():
            if a.has(t):
                raise DecompositionError(f"Laurent coefficient {a} depends on t")
            alpha_terms.setdefault(j, {})
            alpha_terms[j][(other,)] = alpha_terms[j].get((other,), 0) + sign * a
    alphas = {j: SingularForm(chart, 1, terms) for j, terms in sorted(alpha_terms.items())}
    alphas = {j: a for j, a in alphas.items() if a.terms}

    singular = SingularForm.zero(chart, 2)
    for j, a in alphas.items():
        singular = singular + wedge(_dt_wedge(chart, j), a)
    beta = (w - singular).map_coefficients(ex.simplify)
    for k, c in beta.terms.items():
        if ex._principal_part(c, t):
            raise DecompositionError(f"beta coefficient {c} is not finite at t=0")
    for j, a in alphas.items():
        if not ext_d(a).is_zero():
            raise DecompositionError(f"alpha_{j} = {a} is not closed")

    beta_series = beta.map_coefficients(lambda c: _taylor(c, t, order))
    d = LaurentDecomposition(chart, m, alphas, beta, order, beta_series)
    pts = samples if samples is not None else sample_grid(chart, 9, t_radius=0.5)
    d.truncation_residual = residual(d, w, pts, truncated=True)
    if d.truncation_residual > tol:
        msg = (f"Taylor truncation at order {order} leaves residual {d.truncation_residual:.3e} "
               f"> {tol:g} (exact beta is kept)")
        d.warnings.append(msg)
        log.info(msg)
    return d


def _taylor(c, t, order):
    if not c.has(t):
        return c
    return sp.series(c, t, 0, n=order).removeO()


def reconstruct(d: LaurentDecomposition, truncated: bool = False) -> SingularForm:
    out = d.beta_series if truncated and d.beta_series is not None else d.beta
    for j, a in d.alphas.items():
        out = out + wedge(_dt_wedge(d.chart, j), a)
    return out


def residual(d: LaurentDecomposition, w: SingularForm, samples, truncated: bool = False) -> float:
    """Max coefficient difference in the b-coframe over the samples.

    Points on Z where a coefficient is only removably singular are resolved
    by restriction to the slice, except for the truncated comparison where
    they are skipped (the truncated series agrees there to all kept orders).
    """
    diff = to_b_coframe(reconstruct(d, truncated) - to_standard(w))
    worst = 0.0
    for c in diff.terms.values():
        f = ex.compile_expr(c)
        for p in samples:
            try:
                v = f(p)
            except ex.SingularEvaluationError:
                if truncated:
                    continue
                v = ex.eval_near(c, p, d.chart.t)
            worst = max(worst, abs(v))
    return worst


def modular_weight(d: LaurentDecomposition, j: int, xi: VectorFieldExpr, samples=None,
                   tol: float = WEIGHT_TOL) -> float:
    """alpha_j(xi) on the slice t = 0; must be constant."""
    chart = d.chart
    t = chart.t
    vt = xi[chart.defining]
    if vt != 0 and ex.value_on_slice(vt, t) != 0:
        raise ValueError("generator is not tangent to the slice t=0")
    a = d.alpha(j)
    pairing = sp.Integer(0)
    for (k,), c in a.terms.items():
        pairing += c * xi.components[k]
    pairing = ex.value_on_slice(sp.sympify(pairing), t)
    pts = samples if samples is not None else [p for p in sample_grid(chart, 7) if p[chart.defining] == 0.0]
    vals = np.array([ex.eval_at(pairing, p) for p in pts]) if pts else np.array([0.0])
    if np.max(np.abs(vals - vals[0])) > tol:
        raise NonConstantWeightError(
            f"modular weight a_{j} varies on the slice (spread {np.ptp(vals):.3e}): {pairing}"
        )
    return float(vals[0])


def decomposition_report(d: LaurentDecomposition, generators: dict | None = None,
                         samples=None) -> list[str]:
    lines = [f"defining coordinate: {d.chart.defining}", f"m = {d.m}"]
    for j in range(1, d.m + 1):
        lines.append(f"alpha_{j} = {d.alpha(j)}")
    lines.append(f"beta = {d.beta}")
    lines.append(f"beta (Taylor order {d.order}) = {d.beta_series}")
    for name, xi in (generators or {}).items():
        weights = [modular_weight(d, j, xi, samples) for j in range(1, d.m + 1)]
        lines.append(f"modular weights [{name}]: " + ", ".join(f"a_{j}={_fmt(w)}" for j, w in enumerate(weights, 1)))
    lines.append(f"truncation residual: {d.truncation_residual:.3e}")
    lines.extend(f"warning: {w}" for w in d.warnings)
    return lines


def _fmt(x: float) -> str:
    return f"{x:.12g}" if x != 0 else "0"
