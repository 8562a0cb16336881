import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggring import io as aio
from aggring.cli import main
from aggring.dynamics import integrate
from aggring.errors import DomainError
from aggring.kernel import KernelParams
from aggring.rings import RingConfig, ratio_residual


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --- formats ------------------------------------------------------------------------

@pytest.mark.parametrize(
    "text, count, last",
    [("0:5:0.1", 51, 5.0), ("0:1:0.3", 4, 0.9), ("2", 1, 2.0), ("0.5,1,2", 3, 2.0), ("1:1:0.5", 1, 1.0)],
)
def test_parse_range(text, count, last):
    vals = aio.parse_range(text)
    assert len(vals) == count and vals[-1] == last


@pytest.mark.parametrize("bad", ["0:1", "1:0:0.1", "0:1:0", "a:b:c", "x"])
def test_parse_range_rejects(bad):
    with pytest.raises(DomainError):
        aio.parse_range(bad)


@given(x=st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips_binary64(x):
    assert float(aio.fmt(x)) == x


def test_config_round_trip_is_exact():
    cfg = RingConfig(KernelParams(3, 0.1), [1.0, 2.0 / 3 + 1], [1 / 3, 0.7], origin_mass=0.125, rate=0.3)
    back = aio.config_from_text(aio.config_to_text(cfg))
    assert back.params == cfg.params
    assert np.array_equal(back.radii, cfg.radii) and np.array_equal(back.masses, cfg.masses)
    assert (back.origin_mass, back.rate) == (cfg.origin_mass, cfg.rate)
    json.loads(aio.config_to_text(cfg))


def test_config_limiting_round_trip():
    cfg = RingConfig(KernelParams.at_limit(3), [0.5], [1.0])
    assert aio.config_from_text(aio.config_to_text(cfg)).params.limiting


def test_config_without_rate_or_rings():
    cfg = RingConfig(KernelParams(2, 1.0), [], [], origin_mass=1.0)
    text = aio.config_to_text(cfg)
    assert '"rate": null' in text and '"rings": []' in text
    assert aio.config_from_text(text).n == 0


@pytest.mark.parametrize(
    "doc",
    [
        "not json",
        "[]",
        '{"d": 3, "alpha": 0, "rate": null, "origin_mass": 0}',
        '{"d": 3, "alpha": 0, "rate": null, "origin_mass": 0, "rings": [], "extra": 1}',
        '{"d": 3.5, "alpha": 0, "rate": null, "origin_mass": 0, "rings": []}',
        '{"d": 3, "alpha": 0, "rate": null, "origin_mass": 0, "rings": [{"radius": 1}]}',
        '{"d": 3, "alpha": 7, "rate": null, "origin_mass": 0, "rings": []}',
    ],
)
def test_config_rejects_malformed(doc):
    with pytest.raises(DomainError):
        aio.config_from_text(doc)


def test_csv_layout():
    text = aio.csv_text(["a", "b"], [[1, 0.1], [2, 1 / 3]], comments=["note"])
    assert "\r" not in text
    lines = text.split("\n")
    assert lines[0] == "# note" and lines[1] == "a,b"
    assert lines[3] == "2,0.33333333333333331"
    header, rows, comments = aio.read_csv(text)
    assert header == ["a", "b"] and comments == ["note"] and float(rows[1][1]) == 1 / 3


def test_trajectory_text_interleaves_events():
    cfg = RingConfig(KernelParams(3, 0.0), [1.0], [1.0])
    text = aio.trajectory_text(integrate(cfg, 2.0), ["head"])
    lines = text.splitlines()
    assert lines[0] == "# head" and lines[1] == "t,ring_index,radius,mass,origin_mass"
    ev = [i for i, ln in enumerate(lines) if ln.startswith("# event")]
    assert len(ev) == 1 and "kind=ABSORB" in lines[ev[0]]
    assert ev[0] == len(lines) - 1  # nothing is stored after the last ring is gone


# --- cli: tables ---------------------------------------------------------------------

def test_phi_table_row_count(capsys):
    code, out, _ = run(["phi", "--d", "3", "--alpha", "1", "--r", "0:5:0.1"], capsys)
    assert code == 0
    header, rows, _ = aio.read_csv(out)
    assert header == ["r", "phi", "phi_error_est", "phi_over_r"] and len(rows) == 51


def test_phi_limiting_closed_form(capsys):
    code, out, _ = run(["phi", "--d", "3", "--alpha", "-1", "--r", "2"], capsys)
    assert code == 0
    _, rows, _ = aio.read_csv(out)
    assert float(rows[0][1]) == pytest.approx(0.25, abs=1e-12)


def test_phi_domain_rejection(capsys):
    code, _, err = run(["phi", "--d", "3", "--alpha", "3"], capsys)
    assert code == 2 and "(-1, 2)" in err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as info:
        main(["phi", "--d", "3", "--alpha", "1", "--bogus"])
    assert info.value.code == 2


def test_psi_table(capsys):
    code, out, _ = run(["psi", "--d", "5", "--alpha", "1", "--r", "0.5,2"], capsys)
    assert code == 0
    _, rows, _ = aio.read_csv(out)
    assert [r[3] for r in rows] == ["-1", "-1"]


def test_series_table(capsys):
    code, out, _ = run(["series", "--d", "3", "--gamma", "-0.5"], capsys)
    assert code == 0
    _, rows, _ = aio.read_csv(out)
    assert len(rows) == 9 and max(abs(float(r[3])) for r in rows) < 1e-6
    code, _, _ = run(["series", "--d", "3", "--alpha", "0.5"], capsys)
    assert code == 2
    code, _, _ = run(["series", "--d", "3", "--gamma", "-0.5", "--r", "0.99"], capsys)
    assert code == 2


# --- cli: rings and simulate -----------------------------------------------------------

def test_rings_writes_similarity_config(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    code, out, _ = run(["rings", "--d", "3", "--alpha", "0", "--n", "3", "--out", str(path)], capsys)
    assert code == 0
    cfg = aio.read_config(path)
    assert cfg.n == 3 and np.all(cfg.masses > 0)
    printed = dict(line.split(" ", 1) for line in out.splitlines())
    assert float(printed["ratio_residual"]) < 1e-8
    assert printed["positivity"] == "true"
    # round trip preserves the residual
    assert abs(ratio_residual(cfg) - float(printed["ratio_residual"])) < 1e-12


def test_rings_rejects_balanced(capsys):
    code, _, err = run(["rings", "--d", "3", "--alpha", "1", "--n", "2"], capsys)
    assert code == 2 and "balanced" in err.lower()


def test_rings_single_ring_any_regime(capsys):
    code, out, _ = run(["rings", "--n", "1", "--d", "4", "--alpha", "1"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert len(doc["rings"]) == 1 and doc["rings"][0]["mass"] == 1.0


def test_rings_explicit_lambda(capsys):
    code, out, _ = run(["rings", "--d", "3", "--alpha", "0", "--n", "2", "--lambda", "1e6",
                        "--no-normalize"], capsys)
    assert code == 0
    assert json.loads(out)["rate"] == 1


def test_simulate_single_ring(tmp_path, capsys):
    cfg = tmp_path / "one.json"
    aio.write_config(RingConfig(KernelParams(3, 0.0), [1.0], [1.0]), cfg)
    summary = tmp_path / "s.json"
    traj = tmp_path / "t.csv"
    code, out, _ = run(["simulate", "--config", str(cfg), "--out", str(traj), "--summary", str(summary)], capsys)
    assert code == 0
    doc = json.loads(summary.read_text())
    assert abs(doc["T0"] - 1) < 1e-4 and abs(doc["blowup_time_observed"] - 1) < 1e-4
    assert doc["max_profile_error"] < 1e-6
    assert "T0 " in out
    assert b"\r" not in traj.read_bytes()


def test_simulate_three_ring_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    assert run(["rings", "--d", "3", "--alpha", "0", "--n", "3", "--out", str(cfg)], capsys)[0] == 0
    summary = tmp_path / "s.json"
    code, _, _ = run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "t.csv"),
                      "--summary", str(summary)], capsys)
    assert code == 0
    assert json.loads(summary.read_text())["max_profile_error"] < 1e-4


def test_simulate_non_similarity(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    aio.write_config(RingConfig(KernelParams(3, 0.0), [1.0, 2.0], [1.0, 1.0]), cfg)
    summary = tmp_path / "s.json"
    code, out, _ = run(["simulate", "--config", str(cfg), "--t-end", "0.1", "--out", str(tmp_path / "t.csv"),
                        "--summary", str(summary)], capsys)
    assert code == 0
    assert "no collapse fit" in out
    doc = json.loads(summary.read_text())
    assert doc["similarity"] is False and "T0" not in doc
    assert "no collapse fit" in (tmp_path / "t.csv").read_text()


def test_simulate_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run(["simulate", "--config", str(bad)], capsys)[0] == 2
    assert run(["simulate", "--config", str(tmp_path / "missing.json")], capsys)[0] == 2


def test_outputs_are_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        d.mkdir()
        run(["rings", "--d", "3", "--alpha", "0", "--n", "2", "--out", str(d / "c.json")], capsys)
        run(["simulate", "--config", str(d / "c.json"), "--out", str(d / "t.csv")], capsys)
        run(["phi", "--d", "4", "--alpha", "0.3", "--out", str(d / "phi.csv")], capsys)
        run(["verify", "--point", "3,1", "--out-dir", str(d / "v")], capsys)
        outs.append([(d / name).read_bytes() for name in ("c.json", "t.csv", "phi.csv", "v/report.csv",
                                                          "v/summary.json")])
    assert outs[0] == outs[1]


# --- cli: example51 and verify -----------------------------------------------------------

def test_example51_small(capsys):
    code, out, _ = run(["example51", "--d", "2", "--M", "200"], capsys)
    assert code == 0 and out.strip().endswith("PASS")


def test_example51_single_shell_still_collapses(capsys):
    code, out, _ = run(["example51", "--d", "2", "--M", "1"], capsys)
    lines = dict(line.split(" ", 1) for line in out.splitlines() if " " in line)
    assert float(lines["slope_max_rel_deviation"].split()[0]) > 1e-3
    t_obs = float(lines["collapse_time_observed"])
    assert 0 < t_obs < 1
    assert code == 1  # one ring is far from a uniform ball


def test_example51_guards(capsys):
    assert run(["example51", "--d", "1"], capsys)[0] == 2
    assert run(["example51", "--d", "2", "--M", "0"], capsys)[0] == 2


def test_verify_balanced_point(tmp_path, capsys):
    code, out, _ = run(["verify", "--point", "3,1", "--out-dir", str(tmp_path)], capsys)
    assert code == 0
    header, rows, _ = aio.read_csv((tmp_path / "report.csv").read_text())
    assert {r[0] for r in rows} == {"monotonicity", "limit_sublinear"}
    assert "worst margin" in out
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["failed_reports"] == 0
    assert json.loads((tmp_path / "metadata.json").read_text())["quad_tol"] == 1e-10


def test_verify_negative_control(tmp_path, capsys):
    code, out, _ = run(["verify", "--quad-tol", "1", "--point", "3,1", "--point", "5,1", "--point", "3,0",
                        "--out-dir", str(tmp_path)], capsys)
    assert code == 1
    assert "worst margin -" in out


def test_verify_bad_point(capsys):
    assert run(["verify", "--point", "3"], capsys)[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "aggring", "phi", "--d", "3", "--alpha", "0", "--r", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[1].startswith("1,0.5")
