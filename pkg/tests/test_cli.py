import json

import numpy as np
import pytest

from optomirror.cli import main
from optomirror.model import make_config
from optomirror.peaks import PeakSeriesParams, sigma_from_peaks
from optomirror.spectrum import MuGrid

SMALL = """
[oscillator]
Omega = 1.0
gamma = {gamma}

[laser]
amp2 = {amp2}
omega0 = 10.0

[mirror]
v = {v}

[detector]
varkappa = {varkappa}

[bath]
{bath}

[grid]
mu_min = {lo}
mu_max = {hi}
points = {points}
"""


def write_config(tmp_path, name="run.toml", gamma=0.05, amp2=1.0, v=0.3, varkappa=0.05,
                 bath='kind = "flat"\nN0 = 0.5', lo=2.0, hi=18.0, points=4001):
    path = tmp_path / name
    path.write_text(SMALL.format(gamma=gamma, amp2=amp2, v=v, varkappa=varkappa, bath=bath,
                                 lo=lo, hi=hi, points=points))
    return path


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spectrum_command_and_round_trip(tmp_path, capsys):
    cfgp = write_config(tmp_path)
    out1 = tmp_path / "a"
    code, text, _ = run(["spectrum", "--config", cfgp, "--out", out1, "--serial"], capsys)
    assert code == 0, text
    assert "[PASS] total power" in text
    first = json.loads((out1 / "spectrum.json").read_text())
    assert first["schema_version"] == 1
    assert first["config"]["run_config"]["mirror"]["v"] == 0.3
    header = (out1 / "spectrum.csv").read_text().splitlines()[0]
    assert header == "mu,value,err_estimate"
    # rerun from the embedded configuration
    out2 = tmp_path / "b"
    code, text, _ = run(["spectrum", "--config", out1 / "spectrum.json", "--out", out2, "--serial"], capsys)
    assert code == 0, text
    second = json.loads((out2 / "spectrum.json").read_text())
    assert second["value"] == first["value"]
    assert second["mu"] == first["mu"]
    assert second["config"]["run_config"] == first["config"]["run_config"]


def test_threaded_run_matches_serial(tmp_path, capsys):
    cfgp = write_config(tmp_path, points=801)
    run(["spectrum", "--config", cfgp, "--out", tmp_path / "s", "--serial", "--format", "json"], capsys)
    run(["spectrum", "--config", cfgp, "--out", tmp_path / "t", "--format", "json"], capsys)
    s = json.loads((tmp_path / "s" / "spectrum.json").read_text())
    t = json.loads((tmp_path / "t" / "spectrum.json").read_text())
    assert s["value"] == t["value"]
    assert not (tmp_path / "s" / "spectrum.csv").exists()


def test_spectrum_zero_v_and_zero_drive(tmp_path, capsys):
    cfgp = write_config(tmp_path, v=0.0, lo=9.0, hi=11.0, points=2001)
    code, text, _ = run(["spectrum", "--config", cfgp, "--out", tmp_path / "o", "--format", "csv"], capsys)
    assert code == 0 and "[PASS] v=0 limit" in text
    cfgp = write_config(tmp_path, amp2=0.0, points=101)
    code, text, _ = run(["spectrum", "--config", cfgp, "--out", tmp_path / "z"], capsys)
    assert code == 0 and "[PASS] zero drive" in text


def test_sigma_flat_and_structured(tmp_path, capsys):
    cfgp = write_config(tmp_path, gamma=0.02, varkappa=0.02, points=2001)
    code, text, _ = run(["sigma", "--config", cfgp, "--out", tmp_path / "f"], capsys)
    assert code == 0, text
    assert "[PASS] series vs quadrature" in text
    rows = (tmp_path / "f" / "sigma_compare.csv").read_text().splitlines()
    assert rows[0] == "mu,quadrature,peaks,difference" and len(rows) == 2002
    cfgp = write_config(tmp_path, gamma=0.05, varkappa=0.05, points=801,
                        bath='kind = "gaussian"\ncenter = 1.0\nsigma = 0.2\npeak = 1.0')
    code, text, _ = run(["sigma", "--config", cfgp, "--out", tmp_path / "g", "--tol", "1e-7"], capsys)
    assert code == 0, text
    assert "reported only" in text
    diff = np.loadtxt(tmp_path / "g" / "sigma_compare.csv", delimiter=",", skiprows=1)[:, 3]
    assert np.max(np.abs(diff)) > 0


def test_sigma_zero_v(tmp_path, capsys):
    cfgp = write_config(tmp_path, v=0.0, points=401)
    code, text, _ = run(["sigma", "--config", cfgp, "--out", tmp_path / "o"], capsys)
    assert code == 0
    data = np.loadtxt(tmp_path / "o" / "sigma_compare.csv", delimiter=",", skiprows=1)
    k = 0.05
    lor = 2 * k / (k * k / 4 + (data[:, 0] - 10.0) ** 2)
    assert np.max(np.abs(data[:, 1] - lor)) < 1e-6
    assert np.max(np.abs(data[:, 2] - lor)) < 1e-12


def test_peaks_ground_state(tmp_path, capsys):
    cfgp = write_config(tmp_path, bath='kind = "flat"\nN0 = 0.0')
    code, text, _ = run(["peaks", "--config", cfgp, "--out", tmp_path / "p"], capsys)
    assert code == 0 and "[PASS] detailed balance" in text
    d = json.loads((tmp_path / "p" / "peaks.json").read_text())
    weights = {p["n"]: p["weight"] for p in d["peaks"]}
    assert weights[0] == 1.0
    assert all(weights[n] == 0 for n in weights if n > 0)


def test_peaks_ratio_column(tmp_path, capsys):
    cfgp = write_config(tmp_path, v=0.6, bath='kind = "flat"\nN0 = 1.0')
    code, _, _ = run(["peaks", "--config", cfgp, "--out", tmp_path / "p"], capsys)
    assert code == 0
    table = np.loadtxt(tmp_path / "p" / "peak_ratios.csv", delimiter=",", skiprows=1, ndmin=2)
    assert np.allclose(table[:, 3], 0.5 ** table[:, 0], rtol=1e-10, atol=0)


def test_thermometry_synthetic_file(tmp_path, capsys):
    cfgp = write_config(tmp_path, gamma=0.002, varkappa=0.002, v=0.5, lo=8.0, hi=12.0, points=40001)
    c = make_config(1.0, 0.002, amp2=1.0, omega0=10.0, v=0.5, varkappa=0.002)
    synth = sigma_from_peaks(PeakSeriesParams.from_config(c, 0.5), c, MuGrid.linspace(8.0, 12.0, 40001))
    synth.to_csv(tmp_path / "synthetic.csv")
    code, text, _ = run(["thermometry", "--config", cfgp, "--spectrum", tmp_path / "synthetic.csv"], capsys)
    assert code == 0, text
    est = float(text.split("N(omega) estimate =")[1].split()[0])
    assert est == pytest.approx(0.5, rel=2e-2)


def test_thermometry_unresolved_warns(tmp_path, capsys):
    cfgp = write_config(tmp_path, gamma=0.1, varkappa=0.9, v=0.5, lo=0.0, hi=20.0, points=2001)
    code, text, _ = run(["thermometry", "--config", cfgp, "--tol", "1e-7"], capsys)
    assert code == 0
    assert "warning: peaks are not resolved" in text
    assert "N(omega) estimate" in text


def test_thermometry_malformed_file(tmp_path, capsys):
    cfgp = write_config(tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,spectrum\n1,2\n")
    code, _, err = run(["thermometry", "--config", cfgp, "--spectrum", bad], capsys)
    assert code == 2 and "malformed" in err


def test_oracle_demo(tmp_path, capsys):
    code, text, _ = run(["oracle", "--demo"], capsys)
    assert code == 0, text
    assert "[PASS] master equation vs closed form" in text
    assert "[PASS] Langevin kernels vs closed form" in text


def test_oracle_vacuum(tmp_path, capsys):
    cfgp = write_config(tmp_path, gamma=0.4, amp2=0.0, bath='kind = "flat"\nN0 = 0.0')
    code, text, _ = run(["oracle", "--config", cfgp], capsys)
    assert code == 0, text


def test_oracle_refuses_structured_bath(tmp_path, capsys):
    cfgp = write_config(tmp_path, bath='kind = "lorentzian"\ncenter = 1.0\nhalfwidth = 0.2\npeak = 1.0')
    code, _, err = run(["oracle", "--config", cfgp], capsys)
    assert code == 2 and "flat" in err


def test_oracle_truncation_is_a_failed_check(tmp_path, capsys):
    cfgp = write_config(tmp_path, gamma=0.05, bath='kind = "flat"\nN0 = 3.0')
    with open(cfgp, "a") as fh:
        fh.write("\n[oracle]\ndim_max = 20\n")
    code, text, _ = run(["oracle", "--config", cfgp], capsys)
    assert code == 1 and "[FAIL]" in text


def test_failed_check_exit_code(tmp_path, capsys):
    # a grid far too narrow for the spectrum makes the total-power check fail
    cfgp = write_config(tmp_path, lo=9.9, hi=10.1, points=201)
    code, text, _ = run(["spectrum", "--config", cfgp, "--out", tmp_path / "o"], capsys)
    assert code == 1 and "[FAIL] total power" in text


@pytest.mark.parametrize("content,needle", [
    ("[oscillator]\nOmega = 1.0\ngamma = -1.0\n[laser]\namp2=1.0\nomega0=10.0\n[mirror]\nv=0.1\n"
     "[detector]\nvarkappa=0.1\n", "gamma"),
    ("[oscillator]\nOmega = 1.0\n", "missing"),
    ("[nonsense]\nx = 1\n", "unknown config sections"),
    ("this is = = not toml", "run.toml"),
])
def test_bad_configs(tmp_path, capsys, content, needle):
    p = tmp_path / "run.toml"
    p.write_text(content)
    code, _, err = run(["spectrum", "--config", p, "--out", tmp_path / "o"], capsys)
    assert code == 2
    assert needle in err


def test_json_config_and_tabulated_bath(tmp_path, capsys):
    (tmp_path / "n.csv").write_text("nu,N\n0.0,0.4\n1.0,0.5\n2.0,0.4\n")
    cfg = {
        "oscillator": {"Omega": 1.0, "gamma": 0.05},
        "laser": {"amp2": 1.0, "omega0": 10.0},
        "mirror": {"v": 0.2},
        "detector": {"varkappa": 0.05},
        "bath": {"kind": "tabulated", "csv": "n.csv"},
        "grid": {"points": 401},
    }
    p = tmp_path / "run.json"
    p.write_text(json.dumps(cfg))
    code, text, _ = run(["peaks", "--config", p, "--out", tmp_path / "o"], capsys)
    assert code == 0, text
    d = json.loads((tmp_path / "o" / "peaks.json").read_text())
    assert d["N_at_omega"] == pytest.approx(0.5, abs=1e-3)
    assert d["config"]["run_config"]["bath"]["kind"] == "tabulated"
