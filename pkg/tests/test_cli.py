import json
import os

import pytest

from expnls import acceptance, cli
from expnls.acceptance import CriterionResult
from expnls.profile import NewtonError, ProfileSolution


def run(tmp_path, *args):
    return cli.main([args[0], "--out", str(tmp_path), *args[1:]])


def test_profile_and_roundtrip(tmp_path, capsys):
    assert run(tmp_path, "profile", "--omega", "1", "--mu", "0") == 0
    path = tmp_path / "profile_w1_mu0.json"
    obj = json.loads(path.read_text())
    assert set(obj) >= {"omega", "mu", "amplitude", "grad_norm_sq", "mass", "action",
                        "pohozaev", "decay_rate", "grid", "values"}
    assert max(abs(x) for x in obj["pohozaev"]) < 1e-6
    assert (tmp_path / "profile_w1_mu0.csv").exists()
    sol = ProfileSolution.load(path)
    sol.save(tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()
    assert "pohozaev_42" in capsys.readouterr().out


def test_profile_decay_rate(tmp_path):
    # ω=4 at the default n misses the 1e-6 identity bar; a finer grid passes
    assert run(tmp_path, "profile", "--omega", "4", "--mu", "1", "--n", "16384") == 0
    obj = json.loads((tmp_path / "profile_w4_mu1.json").read_text())
    assert obj["decay_rate"] == pytest.approx(2.0, rel=0.02)


def test_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["profile", "--omega", "2", "--mu", "1", "--n", "2048",
                         "--out", str(d)]) in (0, 2)
    assert (a / "profile_w2_mu1.json").read_bytes() == (b / "profile_w2_mu1.json").read_bytes()


@pytest.mark.parametrize("argv", [
    ["profile", "--mu", "0"],
    ["profile", "--omega", "-1"],
    ["profile", "--omega", "1", "--mu", "2"],
    ["profile", "--omega", "1", "--n", "4"],
    ["profile", "--omega", "1", "--rmax", "3"],
    ["profile", "--omega", "x"],
    ["blowup", "--omega", "1", "--lambdas", "1.05,abc"],
    ["profile", "--omega", "1,2"],
    ["frobnicate"],
    [],
])
def test_usage_errors(argv, tmp_path):
    with pytest.raises(SystemExit) as info:
        rc = cli.main(argv + ["--out", str(tmp_path)] if argv else argv)
        raise SystemExit(rc)
    assert info.value.code == 64


def test_config_file_and_override(tmp_path):
    cfgfile = tmp_path / "run.toml"
    cfgfile.write_text('omega = 2.0\nmu = 1\nn = 2048\nrmax = 12.0\nout = "%s"\n'
                       % (tmp_path / "fromcfg"))
    args = cli.build_parser().parse_args(["profile", "--config", str(cfgfile), "--n", "1024"])
    cfg = cli.load_config(args)
    assert cfg.omega == [2.0] and cfg.mu == [1] and cfg.rmax == 12.0
    assert cfg.n == 1024
    bad = tmp_path / "bad.toml"
    bad.write_text("colour = 3\n")
    assert cli.main(["profile", "--config", str(bad)]) == 64
    assert cli.main(["profile", "--config", str(tmp_path / "missing.toml")]) == 64


def test_solver_error_exit(tmp_path, monkeypatch):
    import expnls.profile as prof

    def boom(*a, **k):
        raise NewtonError("forced")
    monkeypatch.setattr(prof, "shoot_profile", boom)
    assert run(tmp_path, "profile", "--omega", "1") == 1


def test_spectrum(tmp_path):
    assert run(tmp_path, "spectrum", "--omega", "1", "--mu", "1") == 0
    obj = json.loads((tmp_path / "spectrum_w1_mu1.json").read_text())
    assert obj["morse_plus"] == 1 and obj["morse_minus"] == 0
    assert obj["krein"]["unstable"] is True


def test_unstable_mode(tmp_path):
    assert run(tmp_path, "unstable-mode", "--omega", "1", "--mu", "0",
               "--rmax", "10", "--n", "1024") == 0
    obj = json.loads((tmp_path / "unstable_mode_w1_mu0.json").read_text())
    assert obj["lambda"] > 0 and obj["residual"] < 1e-6 and obj["agreement_pct"] < 10


def test_evolve(tmp_path):
    assert run(tmp_path, "evolve", "--omega", "1", "--n", "1024", "--lambdas", "1.02",
               "--t-end", "0.01", "--dt", "1e-3") == 0
    assert (tmp_path / "trajectory_w1_mu0_lam1.02.csv").exists()
    obj = json.loads((tmp_path / "trajectory_w1_mu0_lam1.02.json").read_text())
    assert obj["mass_drift"] < 1e-10


def test_blowup(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("EXPNLS_THREADS", "2")
    assert run(tmp_path, "blowup", "--omega", "1", "--mu", "0", "--n", "2048",
               "--lambdas", "1.02,1.05,1.10") == 0
    rows = json.loads((tmp_path / "blowup_w1_mu0.json").read_text())["rows"]
    assert [r["outcome"] for r in rows] == ["BlowupDetected"] * 3
    assert "KMinus" in capsys.readouterr().out


def test_sweep_parallel(tmp_path, monkeypatch):
    monkeypatch.setenv("EXPNLS_THREADS", "2")
    assert run(tmp_path, "sweep", "--omega", "1", "--mu", "0,1", "--n", "2048") in (0, 2)
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    assert [r["mu"] for r in rows] == [0, 1]
    assert all(r["morse_plus"] == 1 for r in rows)
    assert (tmp_path / "sweep.csv").exists()


def test_workers_env(monkeypatch):
    monkeypatch.setenv("EXPNLS_THREADS", "3")
    assert cli._workers() == 3
    monkeypatch.setenv("EXPNLS_THREADS", "none")
    assert cli._workers() == 1


def _fake(passed):
    def crit(cases=None):
        return CriterionResult(1, "stub", passed, "stub")
    return crit


@pytest.mark.parametrize("passed,code", [(True, 0), (False, 2)])
def test_verify_exit(tmp_path, monkeypatch, passed, code):
    monkeypatch.setattr(acceptance, "CRITERIA", {1: _fake(True), 2: _fake(passed)})
    assert run(tmp_path, "verify", "--omega", "1", "--mu", "0") == code
    obj = json.loads((tmp_path / "verify.json").read_text())
    assert len(obj["criteria"]) == 2


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "expnls", "--help"],
                         capture_output=True, text=True, env=os.environ.copy())
    assert out.returncode == 0 and "unstable-mode" in out.stdout
