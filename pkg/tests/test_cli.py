import csv
import io
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from robustmc.binom import explicit_limits
from robustmc.cli import main, run_experiment
from robustmc.config import DEMO1, ConfigError, parse_config
from robustmc.curve import CurvePoint
from robustmc.output import (CURVE_HEADER, RunLog, curve_csv, curve_svg, fmt, read_curve_csv, read_run_log,
                             transcript)

SYSTEM = """
[system]
plant.gain = 800 + 80*d1
plant.den_factors = 0; 4 + 0.2*d2; 6 + 0.3*d3
compensator.num = 1, 2
compensator.den = 1, 10
requirement.kind = dstability
region.half_plane = -1.5
region.disks = nominal:0.3

[uncertainty]
kind = box
dim = 3
"""

MARGIN = "[margin]\nepsilon = 0.01\ndelta = 0.01\ngamma = 0.1\n" + SYSTEM
CURVE = "[curve]\nepsilon = 0.01\ndelta = 0.01\nn = 400\nl = 12\nr_hat = 1.0\n" + SYSTEM


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --- config ------------------------------------------------------------------

def test_invalid_epsilon_names_field(tmp_path, capsys):
    cfg = write(tmp_path, MARGIN.replace("epsilon = 0.01", "epsilon = 1.5"))
    assert main(["margin", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "[margin] epsilon (line 2)" in err


@pytest.mark.parametrize("text,needle", [
    ("[margin]\nepsilon = 0.01\ndelta = 0.01\nbogus = 3\n" + SYSTEM, "[margin] bogus"),
    ("[nonsense]\nx = 1\n", "[nonsense]"),
    ("[margin]\nepsilon = 0.01\nepsilon = 0.02\n", "duplicate key"),
    ("epsilon = 0.01\n", "outside any section"),
    ("[margin]\nepsilon = 0.01\ndelta = 0.01\n", "[system]"),
    (MARGIN.replace("kind = box", "kind = sphere"), "unknown set kind"),
    (MARGIN.replace("dstability", "fuzzy"), "requirement.kind"),
    (MARGIN.replace("nominal:0.3", "nominal:-1"), "region.disks"),
    (MARGIN.replace("800 + 80*d1", "800 + 80*q1"), "plant.gain"),
    (MARGIN.replace("dim = 3", "dim = 2"), "dim"),
])
def test_config_rejections(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "margin")
    assert needle in str(info.value)


def test_curve_requires_r_hat_or_margin():
    with pytest.raises(ConfigError, match="r_hat"):
        parse_config(CURVE.replace("r_hat = 1.0", "r_hat = auto"), "curve")


def test_demo_config_defaults_and_overrides():
    cfg = parse_config("", "demo1")
    assert (cfg.margin.epsilon, cfg.margin.delta, cfg.margin.gamma) == (0.001, 0.01, 0.05)
    assert cfg.curve.sample_size == 50631 and cfg.curve.l == 100
    assert len(cfg.problem.requirement.region.disks) == 2
    cfg = parse_config("[curve]\nr_hat = 1.375\n", "demo1", seed=42)
    assert cfg.curve.r_hat == 1.375 and cfg.seed == 42
    cfg = parse_config("", "demo2")
    assert cfg.curve.sample_size == 24495
    assert (cfg.margin.epsilon, cfg.margin.gamma) == (0.01, 0.25)


_KEYS = ["epsilon", "delta", "gamma", "cap", "l", "n", "alpha", "r_hat", "kind", "dim", "seed", "p",
         "plant.gain", "plant.den_factors", "region.disks", "requirement.kind", "sim.dt", "vertices",
         "time.rise_max", "blocks", "unknown"]
_SECTIONS = ["margin", "curve", "system", "uncertainty", "experiment", "ci_table", "specs", "junk"]
_VALUES = st.one_of(st.text(max_size=20), st.floats(allow_nan=True).map(repr), st.integers().map(str),
                    st.sampled_from(["auto", "box", "simplex", "nominal:0.3", "1, 2", "-1", "inf", "0"]))


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(mode=st.sampled_from(["ci-table", "margin", "curve", "specs", "demo1", "demo2"]),
       body=st.lists(st.tuples(st.sampled_from(_SECTIONS), st.sampled_from(_KEYS), _VALUES), max_size=12),
       raw=st.text(max_size=80))
def test_fuzzed_configs_only_raise_config_errors(mode, body, raw):
    text = "".join(f"[{s}]\n{k} = {v}\n" for s, k, v in body) + raw
    try:
        parse_config(text, mode)
    except ConfigError:
        pass


_VALID = [(MARGIN, "margin"), (CURVE, "curve"), (DEMO1, "demo1"),
          ("[specs]\ndelta = 0, 0, 0\n" + SYSTEM, "specs"), ("[ci_table]\nn = 10\ndelta = 0.1\n", "ci-table")]


@settings(max_examples=400, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(base=st.sampled_from(_VALID), data=st.data())
def test_mutated_valid_configs_only_raise_config_errors(base, data):
    text, mode = base
    lines = text.splitlines()
    keyed = [i for i, line in enumerate(lines) if "=" in line]
    for _ in range(data.draw(st.integers(1, 3))):
        i = data.draw(st.sampled_from(keyed))
        value = data.draw(_VALUES).replace("\n", " ").replace("\r", " ")
        lines[i] = lines[i].split("=")[0] + "= " + value
    try:
        parse_config("\n".join(lines), mode)
    except ConfigError:
        pass


# --- outputs -----------------------------------------------------------------

def _pt(r, m1, m2, delta=0.01):
    return CurvePoint(r, m1, m2, explicit_limits((m1, m2), delta))


def test_single_point_curve_outputs():
    pts = [_pt(0.5, 100, 97)]
    text = curve_csv(pts)
    assert text.splitlines()[0] == ",".join(CURVE_HEADER)
    assert len(text.splitlines()) == 2
    ET.fromstring(curve_svg(pts, 0.01))
    with pytest.raises(ValueError):
        curve_csv([])


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(1e-6, 1e6), st.integers(1, 10**7), st.floats(0, 1)), min_size=1,
                max_size=20))
def test_csv_round_trip_at_twelve_digits(rows):
    pts = [_pt(r, m1, int(f * m1)) for r, m1, f in rows]
    back = read_curve_csv(curve_csv(pts))
    for p, row in zip(pts, back):
        mem = (p.r, p.estimate, p.bounds.lower, p.bounds.upper)
        for a, b in zip(mem, row[:4]):
            assert b == float(format(a, ".12g"))
            assert abs(a - b) <= abs(a) * 1e-11 + 1e-300
        assert row[4:] == (p.m1, p.m2)


def test_svg_is_well_formed_with_band_and_rule():
    pts = [_pt(r, 1000, m2) for r, m2 in [(1.0, 900), (0.75, 990), (0.5, 1000)]]
    root = ET.fromstring(curve_svg(pts, 0.01))
    ns = "{http://www.w3.org/2000/svg}"
    assert root.find(f"{ns}polygon") is not None
    assert any(el.get("stroke-dasharray") for el in root.iter(f"{ns}line"))


def test_fmt():
    assert fmt(3) == "3" and fmt(np.int64(7)) == "7"
    assert fmt(1 / 3) == "0.333333333333"


def test_run_log_lines_are_json(tmp_path):
    log = RunLog("margin", 5, "[x]\n", "0.1.0")
    log.add("initial", radius=1.0, N=10, K=10, verdict="ABOVE", lower=np.float64(0.9), upper=1.0)
    path = log.write(tmp_path / "run.jsonl")
    recs = read_run_log(path)
    assert recs[0]["config"] == "[x]\n" and recs[0]["seed"] == 5
    assert {"timestamp", "stage", "radius", "N", "K", "verdict", "lower", "upper"} <= set(recs[1])


# --- end to end --------------------------------------------------------------

def test_ci_table_ordering(tmp_path):
    cfg = write(tmp_path, "[ci_table]\nn = 1000\ndelta = 0.01\n")
    assert main(["ci-table", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "ci_table.csv").read_text())))
    data = np.array(rows[1:], dtype=float)
    assert data.shape == (1001, 5)
    k, A, B, C, D = data.T
    assert np.array_equal(k, np.arange(1001))
    assert np.all(A >= C) and np.all(C >= D) and np.all(D >= B)
    ET.fromstring((tmp_path / "ci_table.svg").read_text())


def test_margin_replay_is_byte_identical(tmp_path):
    cfg = write(tmp_path, MARGIN)
    assert main(["margin", "--config", cfg, "--seed", "11", "--out", str(tmp_path / "a")]) == 0
    log = read_run_log(tmp_path / "a" / "run.jsonl")
    header = log[0]
    # re-run from what the log carries
    cfg2 = write(tmp_path, header["config"], "replay.ini")
    assert main(["margin", "--config", cfg2, "--seed", str(header["seed"]), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "margin.csv").read_bytes() == (tmp_path / "b" / "margin.csv").read_bytes()
    assert transcript(log) == transcript(read_run_log(tmp_path / "b" / "run.jsonl"))


def test_curve_mode_outputs(tmp_path):
    res = run_experiment(parse_config(CURVE, "curve", seed=3), tmp_path)
    assert set(res["files"]) == {"curve.csv", "curve.svg", "run.jsonl"}
    rows = read_curve_csv((tmp_path / "curve.csv").read_text())
    r = [row[0] for row in rows]
    per = 12
    for i in range(0, len(r), per):
        assert r[i:i + per] == sorted(r[i:i + per], reverse=True)
    assert all(row[4] >= 400 for row in rows)
    again = tmp_path / "again"
    run_experiment(parse_config(CURVE, "curve", seed=3), again)
    assert (again / "curve.csv").read_bytes() == (tmp_path / "curve.csv").read_bytes()


def test_always_true_curve_csv(tmp_path):
    text = CURVE.replace("region.half_plane = -1.5", "region.half_plane = 1e9")
    run_experiment(parse_config(text, "curve"), tmp_path)
    rows = read_curve_csv((tmp_path / "curve.csv").read_text())
    assert all(row[1] == 1.0 and row[3] == 1.0 for row in rows)


def test_numerical_failure_exit_code_names_stage(tmp_path, capsys):
    cfg = write(tmp_path, MARGIN.replace("gamma = 0.1", "gamma = 0.1\ncap = 3"))
    assert main(["margin", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "stage 'margin'" in capsys.readouterr().err
    recs = read_run_log(tmp_path / "o" / "run.jsonl")
    assert recs[-1]["stage"] == "status" and recs[-1]["failed_stage"] == "margin"


def test_unwritable_output_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write(tmp_path, "[ci_table]\nn = 10\ndelta = 0.01\n")
    assert main(["ci-table", "--config", cfg, "--out", str(blocker / "sub")]) == 3
    assert str(blocker / "sub") in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["margin", "--config", str(tmp_path / "nope.ini")]) == 3
    assert main(["margin"]) == 1


def test_specs_mode(tmp_path, capsys):
    text = "[specs]\ndelta = 0, 0, 0\n" + SYSTEM.split("requirement.kind")[0]
    assert main(["specs", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "-15.917839" in out and "peak 1.46791" in out
    info = json.loads((tmp_path / "specs.json").read_text())
    assert info["char_poly"] == [1, 20, 124, 1040, 1600]


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    modes = {"ci_table": "ci-table", "demo1": "demo1", "demo2": "demo2", "specs": "specs",
             "margin_stability": "margin"}
    for path in sorted(root.glob("*.ini")):
        parse_config(path.read_text(), modes[path.stem])
    assert parse_config(DEMO1, "demo1").problem is not None
