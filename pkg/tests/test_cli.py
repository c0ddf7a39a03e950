import json
import subprocess
import sys

import pytest

from sculi.cli import main

CFG = """
[ref]
scalar = random:3
seed = 5
power.sigma_noise = 1.0

[lit]
scalar = random:3
seed = 5
power.sigma_noise = 1.0
laser.enabled = true
laser.power_pct = 100
laser.diameter_um = 75
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text(CFG)
    return p


def test_version_via_module():
    out = subprocess.run([sys.executable, "-m", "sculi", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("sculi ")


def test_simulate_attack_report(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--scenario", "ref", "--out", str(out)]) == 0
    trace = out / "ref" / "5" / "trace.sctr"
    assert trace.exists() and (out / "ref" / "5" / "manifest.json").exists()
    assert main(["attack", str(trace)]) == 0
    report = json.loads((out / "ref" / "5" / "report.json").read_text())
    assert report["best_delta"] > 90
    capsys.readouterr()
    assert main(["report", str(out / "ref" / "5")]) == 0
    text = capsys.readouterr().out
    assert "best delta" in text
    assert (out / "ref" / "5" / "slots.png").exists() and (out / "ref" / "5" / "trace.png").exists()


def test_attack_static_only_and_inversion_flag(cfg, tmp_path):
    out = tmp_path / "o"
    main(["simulate", "--config", str(cfg), "--scenario", "ref", "--out", str(out)])
    trace = out / "ref" / "5" / "trace.sctr"
    assert main(["attack", str(trace), "--static-only", "--allow-inversion", "false",
                 "--out", str(tmp_path / "r")]) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["method"] == "static_q100" and report["allow_inversion"] is False


def test_sweep_and_rerun(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--no-traces"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and (out / "sweep.png").exists()
    first = (out / "lit" / "5" / "report.json").read_bytes()
    assert json.loads(first)["meta"]["dc_offset"] > 0
    assert main(["rerun", str(out / "lit" / "5" / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "lit" / "5" / "report.json").read_bytes() == first
    capsys.readouterr()
    assert main(["report", str(out), "--no-plots"]) == 0
    assert "lit" in capsys.readouterr().out


def test_sculi_out_env(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("SCULI_OUT", str(tmp_path / "env"))
    assert main(["sweep", "--config", str(cfg), "--scenario", "ref", "--no-traces", "--no-plots"]) == 0
    assert (tmp_path / "env" / "sweep.csv").exists()


def test_seed_override(cfg, tmp_path):
    out = tmp_path / "o"
    main(["sweep", "--config", str(cfg), "--scenario", "ref", "--seed", "9", "--out", str(out),
          "--no-traces", "--no-plots"])
    assert (out / "ref" / "9" / "report.json").exists()


@pytest.mark.parametrize("argv", [
    ["sweep", "--config", "/nonexistent.ini"],
    ["sweep", "--config", "builtin:nope"],
    ["sweep", "--config", "CFG", "--scenario", "missing"],
    ["attack", "/nonexistent.sctr"],
    ["report", "/nonexistent/report.json"],
    ["day-variation", "--config", "CFG", "--scenario", "ref", "--scenario", "lit"],
])
def test_config_errors_exit_2(argv, cfg, tmp_path, capsys):
    argv = [str(cfg) if a == "CFG" else a for a in argv]
    assert main(argv + (["--out", str(tmp_path)] if argv[0] == "sweep" else [])) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_config_value_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[a]\npower.sigma_noise = lots\n")
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "power.sigma_noise" in capsys.readouterr().err


def test_bad_trace_exit_2(tmp_path):
    p = tmp_path / "t.sctr"
    p.write_bytes(b"garbage")
    assert main(["attack", str(p)]) == 2


def test_laser_pack_check_exit_3(tmp_path):
    # two lit scenarios at equal power but wildly different spots break the equal-offset check
    p = tmp_path / "t1.ini"
    p.write_text(CFG + """
[lit_edge]
scalar = random:3
seed = 5
power.sigma_noise = 1.0
laser.enabled = true
laser.power_pct = 100
laser.diameter_um = 75
laser.center = 0,0
""")
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "o"), "--no-traces",
                 "--no-plots", "--check-laser-pack"]) == 3


def test_calibrate_failure_exit_3(cfg, tmp_path, capsys):
    rc = main(["calibrate", "--config", str(cfg), "--scenario", "ref", "--seeds", "1",
               "--target", "101", "102", "--bounds", "0", "0"])
    assert rc == 3
    assert "explored" in capsys.readouterr().err


def test_calibrate_writes_config(cfg, tmp_path):
    dest = tmp_path / "cal.ini"
    rc = main(["calibrate", "--config", str(cfg), "--scenario", "ref", "--seeds", "1",
               "--target", "99", "100", "--bounds", "0", "5", "--write", str(dest)])
    assert rc == 0
    assert "power.sigma_noise = 0.0" in dest.read_text()


def test_day_variation_cli(cfg, capsys):
    rc = main(["day-variation", "--config", str(cfg), "--scenario", "ref", "--same-seed",
               "--max-spread", "0"])
    assert rc == 0
    assert "spread: 0.00" in capsys.readouterr().out


def test_static_sweep_cli(cfg, tmp_path, capsys):
    rc = main(["static-sweep", "--config", str(cfg), "--scenario", "lit", "--gammas", "0", "0.5",
               "--seeds", "1", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "static_sweep.csv").read_text().startswith("gamma_alpha,delta_mean")
    assert (tmp_path / "static_sweep.png").exists()
    assert "spearman" in capsys.readouterr().out


def test_builtin_configs_load(tmp_path, capsys):
    for name in ("calibrated", "laser_pack", "static"):
        # the scenario filter runs after parsing, so this error means the config itself was fine
        assert main(["sweep", "--config", f"builtin:{name}", "--scenario", "zz",
                     "--out", str(tmp_path)]) == 2
        assert "not in config: zz" in capsys.readouterr().err
