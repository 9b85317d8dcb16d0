"""TOML model manifests.

A manifest carries [chart], [form], [action], optional [model], [quasi],
[moduli] sections and exactly one [run] table naming the pipeline.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import expr as ex
from .errors import BmError, ManifestError
from .expr import ChartModel
from .forms import SingularForm, form_from_literal
from .moment import ActionSpec

COMMANDS = (
    "laurent", "desingularize", "moment-map", "emit-moment-image", "reduce",
    "check-commutation", "fuse", "quasi-reduce", "ab-form",
)


@dataclass
class Manifest:
    path: Path | None
    text: str
    data: dict
    chart: ChartModel | None = None
    form: SingularForm | None = None
    action: ActionSpec | None = None
    run: dict = field(default_factory=dict)

    @property
    def command(self) -> str:
        return self.run["command"]

    @property
    def name(self) -> str:
        return self.path.stem if self.path else "<string>"

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    def locate(self, needle: str) -> tuple[int | None, int | None]:
        return locate(self.text, needle)


def locate(text: str, needle: str):
    for i, line in enumerate(text.splitlines(), start=1):
        col = line.find(needle)
        if col >= 0:
            return i, col + 1
    return None, None


def _fail(text: str, message: str, needle: str | None = None):
    line, col = locate(text, needle) if needle else (None, None)
    raise ManifestError(message, line, col)


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from None
    m = parse_manifest(text)
    m.path = path
    return m


def parse_manifest(text: str) -> Manifest:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        mt = re.search(r"line (\d+), column (\d+)", str(exc))
        msg = re.sub(r"\s*\(at line.*\)$", "", str(exc))
        raise ManifestError(f"syntax error: {msg}", *(map(int, mt.groups()) if mt else (None, None))) from None
    run = data.get("run")
    if not isinstance(run, dict) or "command" not in run:
        _fail(text, "manifest needs a [run] table with a command", "[run]")
    if run["command"] not in COMMANDS:
        _fail(text, f"unknown command {run['command']!r}", str(run["command"]))
    man = Manifest(None, text, data, run=run)
    if "chart" in data:
        man.chart = chart_from(data["chart"], text)
        if "form" in data:
            man.form = form_from(man.chart, data["form"], text)
        if "action" in data:
            man.action = action_from(man.chart, data["action"], text)
    return man


def chart_from(sec: dict, text: str) -> ChartModel:
    try:
        coords = tuple(sec["coordinates"])
    except KeyError:
        _fail(text, "[chart] needs coordinates", "[chart]")
    try:
        return ChartModel(coords, frozenset(sec.get("periodic", [])), sec.get("defining"), int(sec.get("m", 1)))
    except ValueError as exc:
        _fail(text, f"[chart]: {exc}", "[chart]")


def form_from(chart: ChartModel, sec: dict, text: str) -> SingularForm:
    terms = sec.get("terms", [])
    for rec in terms:
        if "coeff" not in rec or "frame" not in rec:
            _fail(text, "form terms need coeff and frame", "terms")
    try:
        return form_from_literal(chart, terms)
    except BmError as exc:
        _fail(text, f"[form]: {exc}", _needle(exc, text) or "[form]")


def _needle(exc: Exception, text: str) -> str | None:
    mt = re.search(r"'([^']+)'", str(exc))
    if mt and mt.group(1) in text:
        return mt.group(1)
    return None


def action_from(chart: ChartModel, sec: dict, text: str) -> ActionSpec:
    gens = sec.get("generators", {})
    try:
        return ActionSpec.from_components(chart, gens)
    except (BmError, KeyError, ValueError) as exc:
        _fail(text, f"[action]: {exc}", _needle(exc, text) or "[action]")


def sub_manifest(sec: dict, text: str) -> tuple[ChartModel, SingularForm | None, ActionSpec | None]:
    """chart/form/action triple nested inside a table (quasi factors)."""
    chart = chart_from(sec.get("chart", {}), text)
    form = form_from(chart, sec["form"], text) if "form" in sec else None
    action = action_from(chart, sec["action"], text) if "action" in sec else None
    return chart, form, action


def parse_expr_field(value, chart: ChartModel, text: str):
    try:
        return ex.parse_expr(str(value), chart)
    except BmError as exc:
        _fail(text, str(exc), str(value))
