"""Command-line front end: manifest -> pipeline -> report.

Exit codes: 0 when every asserted check passes, 1 on a failed check or a
pipeline error, 2 on malformed input.
"""
from __future__ import annotations

import argparse
import io
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import sympy as sp

from . import expr as ex
from .desing import (
    EVEN,
    DesingProfile,
    agreement_deviation,
    convergence_report,
    desingularize,
    fold_check,
)
from .errors import BmError, ManifestError, ParseError
from .forms import SingularForm, ext_d, sample_grid, to_standard
from .laurent import decompose_2form, decomposition_report, modular_weight, residual
from .manifest import COMMANDS, Manifest, load_manifest, parse_expr_field, sub_manifest
from .moduli import HolonomyChart, ab_form, b2_limit_check, singular_ab_form
from .moment import (
    check_bm_hamiltonian,
    compute_moment,
    default_t_values,
    moment_image,
    realized_sign,
    split_from_weights,
    split_moment,
)
from .quasi import (
    QuasiSpace,
    exponentiate_space,
    fuse,
    hamiltonian_agreement,
    quasi_reduce_abelian,
    trivial_space,
)
from .reduction import (
    ReducedSpace,
    build_cotangent_model,
    check_commutation,
    reduce_model,
    space_from_form,
    stage_order_independent,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


@dataclass
class Options:
    tolerance: float = 1e-9
    grid: int = 9
    taylor_order: int = 8
    seed: int = 0
    output_dir: Path | None = None
    stages: str | None = None


@dataclass
class Report:
    title: str
    lines: list = field(default_factory=list)
    checks: list = field(default_factory=list)  # (label, passed)
    artifacts: dict = field(default_factory=dict)  # file name -> text

    @property
    def ok(self) -> bool:
        return all(passed for _, passed in self.checks)

    def check(self, label: str, passed: bool):
        self.checks.append((label, bool(passed)))

    def render(self) -> str:
        out = [f"== {self.title} =="]
        out += self.lines
        out += [f"[{'PASS' if p else 'FAIL'}] {label}" for label, p in self.checks]
        out.append(f"result: {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(out) + "\n"


def _need(man: Manifest, *what: str):
    for w in what:
        if getattr(man, w) is None:
            raise ManifestError(f"command {man.command} needs a [{w if w != 'action' else 'action.generators'}] section")


def _eps_list(man: Manifest) -> list[Fraction]:
    eps = man.run.get("eps")
    if not eps:
        raise ManifestError("[run] needs an eps list", *man.locate("[run]"))
    return [Fraction(str(e)) for e in eps]


def _levels(raw) -> dict:
    return {int(k): v for k, v in (raw or {}).items()}


# ---------------------------------------------------------------------------
# Pipelines


def run_laurent(man: Manifest, opts: Options) -> Report:
    _need(man, "form")
    rep = Report(f"laurent: {man.name}")
    d = decompose_2form(man.form, order=int(man.run.get("taylor_order", opts.taylor_order)))
    gens = man.action.generators if man.action else {}
    rep.lines += decomposition_report(d, gens)
    pts = sample_grid(man.chart, opts.grid, t_radius=0.5)
    res = residual(d, man.form, pts)
    rep.lines.append(f"exact residual: {res:.3e}")
    rep.check(f"round trip residual < {opts.tolerance:g}", res < opts.tolerance)
    rep.check("alpha_j closed", all(ext_d(a).is_zero() for a in d.alphas.values()))
    if gens:
        rep.check("modular weights constant", True)
    return rep


def run_desingularize(man: Manifest, opts: Options) -> Report:
    _need(man, "form")
    rep = Report(f"desingularize: {man.name}")
    m = man.chart.m
    profiles = [DesingProfile.for_order(m, e) for e in _eps_list(man)]
    pts = sample_grid(man.chart, opts.grid, t_radius=0.5)
    if profiles[0].parity == EVEN:
        for p in profiles:
            w_eps = desingularize(man.form, p, samples=pts)
            dev = agreement_deviation(man.form, w_eps, p, pts)
            rep.check(f"eps={float(p.eps):g}: omega_eps = omega for |t| >= 2 eps (deviation {dev:.1e})", dev == 0.0)
            rep.check(f"eps={float(p.eps):g}: omega_eps nondegenerate on the grid incl. t=0", True)
        table = convergence_report(man.form, profiles)
        csv = table.csv()
        rep.lines += csv.rstrip("\n").splitlines()
        rep.check("sup deviation strictly decreasing in every derivative column", table.strictly_decreasing())
        rep.artifacts[man.run.get("csv", f"{man.name}-convergence.csv")] = csv
    else:
        for p in profiles:
            w_eps = desingularize(man.form, p, samples=pts)
            fr = fold_check(w_eps)
            rep.lines.append(f"eps={float(p.eps):g}: {fr.verdict} along {fr.coordinate}, zeros {fr.zeros}, "
                             f"restriction rank {fr.restriction_rank}")
            rep.check(f"eps={float(p.eps):g}: transverse fold at {man.chart.defining}=0",
                      fr.verdict == "folded" and fr.zeros == [0.0])
    return rep


def _moments(man: Manifest):
    _need(man, "form", "action")
    base = man.run.get("base_point") or man.section("action").get("base_point")
    return compute_moment(man.form, man.action, base)


def run_moment_map(man: Manifest, opts: Options) -> Report:
    _need(man, "form", "action")
    rep = Report(f"moment-map: {man.name}")
    ham = check_bm_hamiltonian(man.form, man.action)
    rep.lines += ham.lines()
    rep.check("b^m-Hamiltonian (invariant, closed contractions)", ham.ok)
    if not ham.ok:
        return rep
    mms = _moments(man)
    d = decompose_2form(man.form) if man.chart.defining else None
    expect = man.run.get("expect", {})
    signs = man.run.get("expect_sign", {})
    display = man.run.get("display", {})
    for mm in mms:
        rep.lines.append(str(mm))
        split = split_moment(mm.mu)
        rep.lines.append(f"split[{mm.name}]: c = ({', '.join(ex.to_text(c) for c in split.coefficients)}), "
                         f"mu0 = {ex.to_text(split.smooth)}")
        if d is not None:
            xi = man.action.generators[mm.name]
            weights = [modular_weight(d, j, xi) for j in range(1, d.m + 1)]
            rep.lines.append(f"weights[{mm.name}]: " + ", ".join(f"a_{j}={w:.12g}" for j, w in enumerate(weights, 1)))
            expected = split_from_weights(weights)
            got = [float(c) for c in split.coefficients]
            rep.check(f"{mm.name}: split constants match modular weights",
                      all(abs(a - b) < 1e-9 for a, b in zip(expected, got)))
        if mm.name in expect:
            target = parse_expr_field(expect[mm.name], man.chart, man.text) * int(signs.get(mm.name, 1))
            diff = mm.expression - target
            same = all(ex.is_zero(ex.differentiate(diff, s)) for s in man.chart.symbols)
            rep.check(f"{mm.name}: mu = {expect[mm.name]} up to a constant", same)
        if mm.name in display:
            disp = parse_expr_field(display[mm.name], man.chart, man.text)
            s = realized_sign(disp, man.form, man.action.generators[mm.name])
            rep.lines.append(f"display[{mm.name}] realized sign: {s:+d}")
            rep.check(f"{mm.name}: displayed Hamiltonian matches up to sign", True)
    return rep


def run_moment_image(man: Manifest, opts: Options) -> Report:
    rep = Report(f"emit-moment-image: {man.name}")
    mms = _moments(man)
    name = man.run.get("generator", mms[0].name)
    mm = next(m for m in mms if m.name == name)
    ts = default_t_values(int(man.run.get("points", 201)), float(man.run.get("radius", 1.0)))
    rows = moment_image(mm.mu, man.chart, ts, mm.base_point, float(man.run.get("clip", 50.0)))
    buf = io.StringIO()
    buf.write("component,t,mu,marker\n")
    for comp, t, v, mark in rows:
        buf.write(f"{comp},{t:.6f},{v:.9g},{mark}\n")
    comps = sorted({r[0] for r in rows})
    rep.lines.append(f"{mm}: {len(rows)} samples on components {comps}, clip {man.run.get('clip', 50.0)}")
    rep.artifacts[man.run.get("csv", f"{man.name}-moment-image.csv")] = buf.getvalue()
    rep.check("two components of the complement of Z sampled", comps == [0, 1])
    return rep


def _model(man: Manifest):
    sec = man.section("model")
    return build_cotangent_model(int(sec["n"]), int(sec["m"]), sec["constants"], sec.get("slice_planes", []),
                                 allow_degenerate=bool(sec.get("allow_degenerate", False)))


def run_reduce(man: Manifest, opts: Options) -> Report:
    rep = Report(f"reduce: {man.name}")
    if "model" in man.data:
        space = _model(man)
    else:
        _need(man, "form", "action")
        space = space_from_form(man.form, man.action)
    levels = _levels(man.run.get("levels"))
    order = opts.stages or man.run.get("stages", "circle-first")
    red = reduce_model(space, levels, order)
    rep.lines += red.summary()
    src = red.source_dim
    rep.check("singular atoms eliminated", red.singular_free)
    rep.check("reduced form nondegenerate", red.nondegenerate())
    rep.check(f"dimension {red.dim} = {src} - 2(1 + {len(levels)})", red.dim == src - 2 * (1 + len(levels)))
    if levels:
        rep.check("stage order independent", stage_order_independent(space, levels))
    return rep


def run_commutation(man: Manifest, opts: Options) -> Report:
    rep = Report(f"check-commutation: {man.name}")
    model = _model(man)
    levels = _levels(man.run.get("levels"))
    rows = ["epsilon,deviation"]
    for e in _eps_list(man):
        cr = check_commutation(model, DesingProfile.for_order(model.m, e), levels, tol=opts.tolerance)
        rep.lines += cr.lines()
        rows.append(f"{cr.eps:g},{cr.deviation:.6e}")
        rep.check(f"eps={cr.eps:g}: reduce(desing) = reduce(omega)", cr.ok)
    rep.lines.append(f"reduced form: {cr.path_a.form if cr.path_a.form.terms else '0'}")
    rep.artifacts[man.run.get("csv", f"{man.name}-commutation.csv")] = "\n".join(rows) + "\n"
    return rep


def _factor(sec: dict, man: Manifest, pairing=None) -> tuple[QuasiSpace, object]:
    source = sec.get("source", "hamiltonian")
    if source == "trivial":
        return trivial_space(sec.get("name", "g")), None
    if source == "model":
        model = build_cotangent_model(int(sec["n"]), int(sec["m"]), sec["constants"], sec.get("slice_planes", []))
        return exponentiate_space(model.form, model.action, pairing=pairing), model
    chart, form, action = sub_manifest(sec, man.text)
    if source == "hamiltonian":
        return exponentiate_space(form, action, pairing=pairing), None
    if source == "quasi":
        names = tuple(action.generators)
        angles = tuple(parse_expr_field(sec["angles"][n], chart, man.text) for n in names)
        P = sp.Matrix(pairing) if pairing is not None else sp.eye(len(names))
        singular = {chart.defining: chart.m} if chart.defining else {}
        Q = QuasiSpace(chart, to_standard(form), names, angles, tuple(action.generators[n] for n in names),
                       P, singular)
        Q.verify()
        return Q, None
    raise ManifestError(f"unknown factor source {source!r}", *man.locate(source))


def _quasi_space(man: Manifest):
    sec = man.section("quasi")
    factors = sec.get("factor", [])
    if not factors:
        raise ManifestError("[quasi] needs at least one [[quasi.factor]]", *man.locate("[quasi"))
    built = [_factor(f, man, f.get("pairing")) for f in factors]
    Q, model = built[0]
    shared = sec.get("shared")
    for other, _ in built[1:]:
        Q = fuse(Q, other, shared)
    return Q, (model if len(built) == 1 else None)


def run_fuse(man: Manifest, opts: Options) -> Report:
    rep = Report(f"fuse: {man.name}")
    Q, _ = _quasi_space(man)
    rep.lines += Q.summary()
    ax = Q.axioms()
    rep.lines += ax.lines()
    rep.check("axioms (i)-(iii)", ax.ok)
    for name, text in man.run.get("expect_angle", {}).items():
        target = parse_expr_field(text, Q.chart, man.text)
        rep.check(f"angle[{name}] = {text}", ex.is_zero(Q.angle(name) - target))
    return rep


def run_quasi_reduce(man: Manifest, opts: Options) -> Report:
    rep = Report(f"quasi-reduce: {man.name}")
    Q, model = _quasi_space(man)
    steps = man.section("quasi").get("reduce", [])
    if not steps:
        raise ManifestError("[quasi] needs a reduce list", *man.locate("[quasi]"))
    cur = Q
    for st in steps:
        level = st["level"]
        cur = quasi_reduce_abelian(cur, st["factor"], level if isinstance(level, str) and not _numeric(level)
                                   else sp.nsimplify(level))
        rep.check(f"{st['factor']} at {level}: pullback basic, axioms hold", True)
    if isinstance(cur, ReducedSpace):
        rep.lines += cur.summary()
        rep.check("final form smooth", cur.singular_free)
        rep.check("final form symplectic", cur.nondegenerate())
    else:
        rep.lines += cur.summary()
    if model is not None and man.section("quasi").get("compare", True):
        plane_levels = {int(s["factor"][1:]): sp.nsimplify(s["level"]) for s in steps if s["factor"].startswith("p")}
        ham = reduce_model(model, plane_levels)
        dev = hamiltonian_agreement(cur, ham)
        rep.lines.append(f"deviation from Hamiltonian reduction: {dev:.3e}")
        rep.check(f"agrees with Hamiltonian reduction (< {opts.tolerance:g})", dev < opts.tolerance)
    return rep


def _numeric(s: str) -> bool:
    try:
        sp.Rational(s)
        return True
    except (TypeError, ValueError):
        return False


def run_ab_form(man: Manifest | None, opts: Options, genus: int | None = None, mark: str | None = None) -> Report:
    sec = man.section("moduli") if man else {}
    g = genus if genus is not None else int(sec.get("genus", 1))
    mark = mark if mark is not None else sec.get("mark")
    h = HolonomyChart(g, mark)
    rep = Report(f"ab-form: genus {g}" + (f", {mark} marked" if mark else ""))
    if mark is None:
        w = ab_form(h)
        rep.lines.append(f"omega_AB = {w}")
        rep.check("closed and nondegenerate", True)
    else:
        w = singular_ab_form(h)
        rep.lines.append(f"omega_AB = {w}")
        rep.check("closed and b-nondegenerate", True)
        d = decompose_2form(w)
        partner = next(a if b == mark else b for a, b in h.pairs() if mark in (a, b))
        rep.lines.append(f"alpha_1 = {d.alpha(1)}")
        sign = 1 if partner.startswith("a") else -1
        rep.check(f"alpha_1 = {'' if sign > 0 else '-'}d{partner}",
                  d.alpha(1).equals(SingularForm.d(w.chart, partner).scale(sign)))
    eps = sec.get("b2_limit_eps")
    if eps:
        lim = b2_limit_check(eps)
        rep.lines += lim.lines()
        rep.check("b^2 limit: exact outside eps-neighbourhoods, near deviation decreasing", lim.ok)
    return rep


PIPELINES = {
    "laurent": run_laurent,
    "desingularize": run_desingularize,
    "moment-map": run_moment_map,
    "emit-moment-image": run_moment_image,
    "reduce": run_reduce,
    "check-commutation": run_commutation,
    "fuse": run_fuse,
    "quasi-reduce": run_quasi_reduce,
    "ab-form": run_ab_form,
}


def run_manifest(path, opts: Options | None = None, command: str | None = None) -> Report:
    opts = opts or Options()
    man = load_manifest(path)
    cmd = command or man.command
    return PIPELINES[cmd](man, opts)


def shipped_manifests() -> list[Path]:
    root = resources.files("bmsymp") / "manifests"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml"))


def _write_artifacts(rep: Report, opts: Options, out):
    for name, text in rep.artifacts.items():
        if opts.output_dir is None:
            continue
        opts.output_dir.mkdir(parents=True, exist_ok=True)
        (opts.output_dir / name).write_text(text, encoding="utf-8")
        out.write(f"wrote {opts.output_dir / name}\n")


def verify_all(opts: Options, out) -> int:
    results = []
    for p in shipped_manifests():
        try:
            rep = run_manifest(p, opts)
            ok, note = rep.ok, ""
        except BmError as exc:
            ok, note = False, f" ({type(exc).__name__}: {exc})"
        results.append(ok)
        out.write(f"[{'PASS' if ok else 'FAIL'}] {p.name}{note}\n")
    out.write(f"verify-all: {sum(results)}/{len(results)} manifests passed\n")
    return EXIT_OK if all(results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bmsymp", description="b^m-symplectic geometry toolkit")
    ap.add_argument("--tolerance", type=float, default=1e-9)
    ap.add_argument("--grid", type=int, default=9, help="sample points per axis")
    ap.add_argument("--taylor-order", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output-dir", type=Path, default=None, help="directory for CSV artifacts")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        if cmd == "ab-form":
            continue
        sp_ = sub.add_parser(cmd)
        sp_.add_argument("manifest")
        if cmd == "reduce":
            sp_.add_argument("--stages", choices=["circle-first", "slice-first"], default=None)
    ab = sub.add_parser("ab-form")
    ab.add_argument("--genus", type=int, default=None)
    ab.add_argument("--mark", default=None)
    ab.add_argument("manifest", nargs="?")
    sub.add_parser("verify-all")
    run = sub.add_parser("run", help="run the command named in the manifest")
    run.add_argument("manifest")
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    opts = Options(args.tolerance, args.grid, args.taylor_order, args.seed, args.output_dir,
                   getattr(args, "stages", None))
    try:
        if args.command == "verify-all":
            return verify_all(opts, out)
        if args.command == "ab-form":
            man = load_manifest(args.manifest) if args.manifest else None
            rep = run_ab_form(man, opts, args.genus, args.mark)
        else:
            rep = run_manifest(args.manifest, opts, None if args.command == "run" else args.command)
    except (ManifestError, ParseError) as exc:
        out.write(f"input error: {exc}\n")
        return EXIT_INPUT
    except (ValueError, KeyError) as exc:
        out.write(f"input error: {exc}\n")
        return EXIT_INPUT
    except BmError as exc:
        out.write(f"error in {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL
    out.write(rep.render())
    _write_artifacts(rep, opts, out)
    if opts.output_dir is None and args.command == "emit-moment-image":
        for text in rep.artifacts.values():
            out.write(text)
    return EXIT_OK if rep.ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
