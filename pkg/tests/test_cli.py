import csv
import io
import json
import math

import numpy as np
import pytest

from dcl.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    header = [ln for ln in text.splitlines() if ln.startswith("#")]
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    meta = dict(ln[2:].split(" = ", 1) for ln in header)
    return meta, rows


def test_value_curve_fig1_top_interior_argmax(capsys):
    code, out, _ = run(capsys, "value-curve")
    assert code == 0
    meta, rows = parse_csv(out)
    assert meta["regime"] == "DelayedAtBStar" and meta["preset"] == "fig1-top"
    curve = [r for r in rows if r["kind"] == "curve"]
    (opt,) = [r for r in rows if r["kind"] == "optimum"]
    assert len(curve) == 401
    best = max(curve, key=lambda r: float(r["value"]))
    cell = float(meta["c_star"]) / 400
    assert float(best["b"]) > 0
    assert abs(float(best["b"]) - float(opt["b"])) <= cell
    assert float(opt["value"]) >= float(best["value"])


def test_value_curve_fig1_bottom_argmax_at_zero(capsys):
    code, out, _ = run(capsys, "value-curve", "--preset", "fig1-bottom")
    meta, rows = parse_csv(out)
    assert code == 0 and meta["regime"] == "LinearAtZero"
    assert float(meta["grid_argmax_b"]) == 0.0
    (opt,) = [r for r in rows if r["kind"] == "optimum"]
    assert float(opt["b"]) == 0.0


def test_value_curve_zero_capital(capsys):
    _, out, _ = run(capsys, "value-curve", "--x0", "0", "--grid-b-count", "20")
    _, rows = parse_csv(out)
    assert all(float(r["value"]) == 0.0 for r in rows)


def test_csv_float_format(capsys):
    _, out, _ = run(capsys, "value-curve", "--grid-b-count", "3")
    _, rows = parse_csv(out)
    for r in rows:
        mantissa = r["value"].split("e")[0].replace("-", "").replace(".", "").lstrip("0")
        assert len(mantissa) <= 12


def test_value_surface_ridge_crosses_threshold(capsys):
    code, out, _ = run(capsys, "value-surface", "--grid-b-count", "5", "--grid-k-count", "12")
    assert code == 0
    _, rows = parse_csv(out)
    ridge = [r for r in rows if r["kind"] == "ridge"]
    assert len(ridge) == 12 and len([r for r in rows if r["kind"] == "surface"]) == 60
    regimes = [r["regime"] for r in ridge]
    assert regimes[0] == "LinearAtZero" and regimes[-1] == "DelayedAtBStar"
    # zero prefix, then positive
    first = regimes.index("DelayedAtBStar")
    assert all(float(r["b"]) == 0 for r in ridge[:first])
    assert all(float(r["b"]) > 0 for r in ridge[first:])


def test_value_surface_single_k_matches_curve(capsys):
    _, curve, _ = run(capsys, "value-curve")
    _, surf, _ = run(capsys, "value-surface", "--preset", "fig1-top", "--grid-k-min", "0.1",
                     "--grid-k-max", "0.1", "--grid-b-count", "3")
    (opt,) = [r for r in parse_csv(curve)[1] if r["kind"] == "optimum"]
    (ridge,) = [r for r in parse_csv(surf)[1] if r["kind"] == "ridge"]
    assert ridge["b"] == opt["b"] and ridge["value"] == opt["value"]


def test_value_surface_swapped_k_range(capsys):
    code, _, err = run(capsys, "value-surface", "--grid-k-min", "1", "--grid-k-max", "0.1")
    assert code == 2 and "grid-k" in err


def test_barrier_curve_fig3(capsys):
    code, out, _ = run(capsys, "barrier-curve")
    assert code == 0
    _, rows = parse_csv(out)
    curve = [float(r["b_star"]) for r in rows if r["kind"] == "curve"]
    (cs,) = [float(r["b_star"]) for r in rows if r["kind"] == "c_star"]
    assert len(curve) == 40
    assert cs == pytest.approx(4.19725394192, rel=1e-11)
    assert all(a <= b for a, b in zip(curve, curve[1:]))
    assert max(curve) < cs and curve[0] == 0.0 and curve[-1] >= 0.95 * cs


@pytest.mark.parametrize("count", ["0", "1"])
def test_barrier_curve_empty_grid(capsys, count):
    code, _, _ = run(capsys, "barrier-curve", "--grid-k-count", count)
    assert code == 2


def test_verify_passes_at_b_star(capsys):
    code, out, _ = run(capsys, "verify")
    doc = json.loads(out)
    assert code == 0 and doc["summary"]["passed"]
    names = {c["name"] for c in doc["checks"]}
    assert {"ode_w", "ode_h", "pasting_c0", "pasting_c1", "pasting_c2", "hjb_residual",
            "hjb_gradient", "inequality_scan"} <= names
    assert len(doc["monte_carlo"]) == 4


def test_verify_detects_suboptimal_barrier(capsys):
    code, out, _ = run(capsys, "verify", "--b", str(4.804458012029194 + 0.5))
    doc = json.loads(out)
    failed = {c["name"] for c in doc["checks"] if not c["passed"]}
    assert code == 1 and "hjb_gradient" in failed


def test_verify_rejects_zero_k(capsys):
    code, _, err = run(capsys, "verify", "--k", "0")
    assert code == 2


def test_verify_csv(capsys):
    code, out, _ = run(capsys, "verify", "--format", "csv", "--paths", "500", "--step", "0.05")
    _, rows = parse_csv(out)
    assert {r["name"] for r in rows} >= {"hjb_gradient", "ode_h"}


def test_simulate_deterministic(capsys, tmp_path):
    args = ["simulate", "--paths", "3000", "--step", "0.01", "--seed", "42"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b
    est = json.loads(a)["estimate"]
    assert abs(est["z_score"]) <= 3 and est["scheme"] == "EulerMaruyama" and est["step"] == 0.01
    out = tmp_path / "sim.json"
    assert main(args + ["--out", str(out)]) == 0
    first = out.read_text()
    assert main(args + ["--out", str(out)]) == 0
    assert out.read_text() == first
    assert json.loads(first)["estimate"] == est


def test_simulate_single_path(capsys):
    code, out, _ = run(capsys, "simulate", "--paths", "1", "--step", "0.05")
    est = json.loads(out)["estimate"]
    assert code == 0 and est["std_error"] is None and est["z_score"] is None


@pytest.mark.parametrize("functional, extra", [
    ("linear-ou", []), ("two-sided", ["--level", "8"]), ("first-passage", ["--level", "2"]),
])
def test_simulate_functionals(capsys, functional, extra):
    code, out, _ = run(capsys, "simulate", "--functional", functional, "--paths", "4000",
                       "--step", "0.02", *extra)
    est = json.loads(out)["estimate"]
    assert code == 0 and abs(est["z_score"]) <= 3


def test_simulate_missing_level(capsys):
    code, _, err = run(capsys, "simulate", "--functional", "two-sided")
    assert code == 2 and "level" in err


def test_config_file_and_flag_override(capsys, tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[DEFAULT]\nsigma = 4.5\n\n[value-curve]\nq = 0.05\ngrid-b-count = 11\n")
    _, out, _ = run(capsys, "value-curve", "--config", str(ini))
    meta, rows = parse_csv(out)
    assert meta["q"] == "0.05" and meta["regime"] == "LinearAtZero"
    assert len([r for r in rows if r["kind"] == "curve"]) == 11
    _, out, _ = run(capsys, "value-curve", "--config", str(ini), "--q", "0.025")
    meta, _ = parse_csv(out)
    assert meta["q"] == "0.025" and meta["regime"] == "DelayedAtBStar"


def test_config_file_unknown_key(capsys, tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[value-curve]\nbogus = 1\n")
    code, _, err = run(capsys, "value-curve", "--config", str(ini))
    assert code == 2 and "bogus" in err


def test_config_file_bad_number(capsys, tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[value-curve]\nmu = fast\n")
    assert run(capsys, "value-curve", "--config", str(ini))[0] == 2


def test_io_errors(capsys, tmp_path):
    assert run(capsys, "value-curve", "--config", str(tmp_path / "missing.ini"))[0] == 4
    assert run(capsys, "value-curve", "--grid-b-count", "3",
               "--out", str(tmp_path / "no" / "dir.csv"))[0] == 4


def test_invalid_model(capsys):
    assert run(capsys, "value-curve", "--sigma", "-1")[0] == 2


def test_json_output_for_curves(capsys):
    _, out, _ = run(capsys, "barrier-curve", "--format", "json", "--grid-k-count", "3")
    doc = json.loads(out)
    assert doc["config"]["experiment"] == "barrier-curve" and len(doc["rows"]) == 4


def test_remark_preset(capsys):
    _, out, _ = run(capsys, "value-curve", "--preset", "remark", "--grid-b-count", "3")
    meta, rows = parse_csv(out)
    (opt,) = [r for r in rows if r["kind"] == "optimum"]
    b = float(opt["b"])
    assert 0.3 / 0.35 < b < float(meta["c_star"]) < 0.3 / 0.05
