import io
import subprocess
import sys

import pytest

from bmsymp.cli import main, shipped_manifests
from bmsymp.errors import ManifestError
from bmsymp.manifest import parse_manifest

SPHERE = """
[chart]
coordinates = ["h", "th"]
periodic = ["th"]
defining = "h"
m = 2

[form]
terms = [{{ coeff = "1", frame = ["dh/h^2", "dth"] }}]

[action.generators]
{gens}

[run]
command = "moment-map"
{extra}
"""


def run(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


def write(tmp_path, text, name="m.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def by_name(name):
    return str(next(p for p in shipped_manifests() if p.name == name))


def test_shipped_manifests_present():
    names = {p.name for p in shipped_manifests()}
    assert {"sphere-m1.toml", "stages.toml", "fuse-sphere-torus.toml", "ab-form-g2.toml"} <= names


def test_moment_map_passes(tmp_path):
    code, text = run("moment-map", by_name("sphere-m2.toml"))
    assert code == 0
    assert "mu[rot] = -1/h" in text and text.rstrip().endswith("result: PASS")


def test_wrong_expectation_exit_1(tmp_path):
    path = write(tmp_path, SPHERE.format(gens='rot = { th = "1" }', extra='expect = { rot = "log(abs(h))" }'))
    code, text = run("moment-map", path)
    assert code == 1 and "[FAIL]" in text


def test_model_error_exit_1(tmp_path):
    path = write(tmp_path, SPHERE.format(gens='rad = { h = "h" }', extra=""))
    code, text = run("moment-map", path)
    assert code == 1 and "[FAIL] b^m-Hamiltonian" in text


def test_raised_model_error_exit_1(tmp_path):
    src = open(by_name("stages.toml"), encoding="utf-8").read()
    path = write(tmp_path, src.replace("1 = 0.5", "1 = 0"))
    code, text = run("reduce", path)
    assert code == 1 and text.startswith("error in reduce: LevelNotRegularError")


def test_malformed_toml_exit_2(tmp_path):
    path = write(tmp_path, "[chart\ncoordinates = 1\n")
    code, text = run("laurent", path)
    assert code == 2 and "line 1" in text


def test_unknown_coordinate_exit_2(tmp_path):
    path = write(tmp_path, SPHERE.format(gens='rot = { q = "1" }', extra=""))
    code, text = run("moment-map", path)
    assert code == 2 and text.startswith("input error")


def test_missing_file_exit_2(tmp_path):
    code, text = run("laurent", str(tmp_path / "nope.toml"))
    assert code == 2


def test_bad_flag_exit_2():
    code, _ = run("--grid", "x", "verify-all")
    assert code == 2


def test_manifest_errors_carry_position():
    with pytest.raises(ManifestError) as info:
        parse_manifest('[chart]\ncoordinates = ["h"]\n')
    assert "[run]" in str(info.value)
    with pytest.raises(ManifestError) as info:
        parse_manifest('[run]\ncommand = "fly"\n')
    assert info.value.line == 2


def test_deterministic_output():
    a = run("run", by_name("desing-even.toml"))
    b = run("run", by_name("desing-even.toml"))
    assert a == b and a[0] == 0


def test_emit_image_stdout():
    code, text = run("emit-moment-image", by_name("sphere-m1-image.toml"))
    assert code == 0
    lines = text.splitlines()
    header = lines.index("component,t,mu,marker")
    rows = [line.split(",") for line in lines[header + 1:]]
    assert {r[0] for r in rows} == {"0", "1"}
    assert all(len(r) == 4 for r in rows)


def test_emit_image_output_dir(tmp_path):
    code, text = run("--output-dir", str(tmp_path), "emit-moment-image", by_name("sphere-m2-image.toml"))
    assert code == 0
    csv = (tmp_path / "sphere-m2-image.csv").read_text().splitlines()
    assert csv[0] == "component,t,mu,marker"
    assert any(line.endswith("→∞") for line in csv)


def test_reduce_stage_flag():
    for order in ("circle-first", "slice-first"):
        code, text = run("reduce", "--stages", order, by_name("stages.toml"))
        assert code == 0 and "x2, y2" in text


def test_ab_form_flags():
    code, text = run("ab-form", "--genus", "2")
    assert code == 0 and "db1∧da1" in text
    code, text = run("ab-form", "--genus", "1", "--mark", "b")
    assert code == 0 and "alpha_1 = da" in text
    code, _ = run("ab-form", "--genus", "1", "--mark", "z")
    assert code == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bmsymp.cli", "run", by_name("sphere-m1.toml")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "result: PASS" in proc.stdout
