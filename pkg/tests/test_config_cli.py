import hashlib
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from dislocation import cli
from dislocation.config import ConfigError, normalize, parse_config_text, serialize

BASE = """\
[run]
seed = 3

[mesh]
h = 0.1
corner_grading = 2

[jumps]
f = 1 0.2; 0.3 -0.5; -0.4 0.6; 0.2 0.9
g = 0.5 0.1; -0.2 0.3; 0.1 -0.4; 0.3 0.2
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_cli(tmp_path, sub, text, out="out", extra=()):
    cfg = write(tmp_path, text)
    code = cli.main([sub, "--config", str(cfg), "--out", str(tmp_path / out), *extra])
    manifest = tmp_path / out / "manifest.json"
    return code, (json.loads(manifest.read_text()) if manifest.exists() else None)


class TestConfig:
    def test_defaults_and_roundtrip(self):
        cfg = parse_config_text(BASE)
        assert cfg["mesh"]["h"] == 0.1
        assert cfg["material"]["mu"] == 1.0
        text = serialize(cfg)
        assert serialize(parse_config_text(text)) == text
        assert normalize(text) == text
        assert parse_config_text(text).hash() == cfg.hash()

    def test_formatting_does_not_change_hash(self):
        a = parse_config_text(BASE)
        b = parse_config_text(BASE.replace("h = 0.1", "h=0.10   # comment"))
        assert a.hash() == b.hash()

    def test_all_errors_reported_with_lines(self):
        text = "[mesh]\nh = -1\nbogus = 2\n\n[material]\nmu = 0\n\n[weird]\nx = 1\n"
        with pytest.raises(ConfigError) as info:
            parse_config_text(text)
        msgs = info.value.format()
        assert any(m.startswith("line 2:") and "h must be positive" in m for m in msgs)
        assert any(m.startswith("line 3:") and "unknown key" in m for m in msgs)
        assert any(m.startswith("line 6:") and "mu > 0" in m for m in msgs)
        assert any(m.startswith("line 8:") and "unknown section" in m for m in msgs)

    def test_sector_condition(self):
        text = "[probe]\nsource = constant\ntheta_m = 0\ntheta_M = 3.5\nradius = 0.2\n"
        with pytest.raises(ConfigError) as info:
            parse_config_text(text)
        assert any("sector condition violated" in m for m in info.value.format())

    def test_jump_count_checked(self):
        with pytest.raises(ConfigError, match="one per fault segment"):
            parse_config_text("[jumps]\nf = 1 0; 0 1\n")

    def test_clockwise_fault_rejected(self):
        text = "[fault]\nvertices = 0.35 0.35; 0.35 0.65; 0.65 0.65; 0.65 0.35\n"
        with pytest.raises(ConfigError, match="counter-clockwise"):
            parse_config_text(text)

    def test_bad_number(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("[mesh]\nh = abc\n")


class TestCli:
    def test_mesh_manifest_inventory(self, tmp_path):
        code, man = run_cli(tmp_path, "mesh", BASE, extra=["--emit-plot-csv"])
        assert code == 0
        assert man["status"] == "ok" and man["all_checks_pass"]
        present = sorted(p.name for p in (tmp_path / "out").iterdir() if p.name != "manifest.json")
        assert sorted(f["file"] for f in man["files"]) == present
        for f in man["files"]:
            data = (tmp_path / "out" / f["file"]).read_bytes()
            assert f["bytes"] == len(data)
            assert f["sha256"] == hashlib.sha256(data).hexdigest()
        assert man["config_hash"] == parse_config_text(BASE).hash()
        assert man["seed"] == 3

    def test_solve_checks(self, tmp_path):
        code, man = run_cli(tmp_path, "solve", BASE)
        assert code == 0
        assert {"jump_exactness", "dirichlet", "residual"} <= set(man["checks"])
        header = (tmp_path / "out" / "observation.csv").read_text().splitlines()[0]
        assert header == "arc_length,ux,uy"

    def test_solve_is_deterministic(self, tmp_path):
        run_cli(tmp_path, "solve", BASE, out="a")
        run_cli(tmp_path, "solve", BASE, out="b")
        for name in ("field.csv", "observation.csv", "mesh.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_invalid_config_exit_1(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "mesh", "[mesh]\nh = 0\n")
        assert code == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_config_exit_1(self, tmp_path):
        assert cli.main(["mesh", "--config", str(tmp_path / "nope.ini")]) == 1

    def test_negative_seed_exit_1(self, tmp_path):
        code, _ = run_cli(tmp_path, "mesh", BASE, extra=["--seed", "-4"])
        assert code == 1

    def test_numerical_failure_exit_2(self, tmp_path, capsys):
        # a fault segment within h/4 of the boundary makes meshing fail
        text = BASE + "\n[fault]\nvertices = 0.01 0.3; 0.5 0.3; 0.5 0.6; 0.01 0.6\n"
        code, man = run_cli(tmp_path, "mesh", text)
        assert code == 2
        assert man["status"] == "numerical_failure" and "stage 'mesh'" in man["error"]
        assert "stage 'mesh'" in capsys.readouterr().err

    def test_probe_constant(self, tmp_path):
        text = ("[probe]\nsource = constant\ntheta_m = -0.3\ntheta_M = 1.0\nradius = 0.2\n"
                "f_plus = 1 0.4\n")
        code, man = run_cli(tmp_path, "probe", text)
        assert code == 0
        report = (tmp_path / "out" / "probe_report.txt").read_text()
        assert "verdict: violated" in report

    def test_reduce3d(self, tmp_path):
        text = ("[reduce3d]\ntheta_m = 0.1\ntheta_M = 1.3\nf_plus = 0.3 -0.2 0.7\nf_minus = 0.3 -0.2 0.7\n")
        code, man = run_cli(tmp_path, "reduce3d", text)
        assert code == 0
        assert "verdict: holds" in (tmp_path / "out" / "reduce3d_report.txt").read_text()

    def test_verify_lemmas(self, tmp_path):
        text = "[lemmas]\ns_values = 5 10\nopenings = 1.0\n"
        code, man = run_cli(tmp_path, "verify-lemmas", text, extra=["--emit-plot-csv"])
        assert code == 0
        rows = (tmp_path / "out" / "lemmas.csv").read_text().splitlines()
        assert rows[0] == "lemma_id,parameters,closed_form,quadrature,rel_err,pass/fail"
        assert all(r.endswith("PASS") for r in rows[1:])
        assert (tmp_path / "out" / "plot_decay.csv").exists()

    def test_invert_short_run(self, tmp_path):
        text = BASE + "\n[inversion]\nmax_iter = 2\nn_samples = 24\n"
        code, man = run_cli(tmp_path, "invert", text)
        # two iterations cannot reach the recovery limit: the failed check gives exit 2
        assert man["checks"]["monotone_misfit"]["pass"]
        assert code == (0 if man["all_checks_pass"] else 2)
        rows = (tmp_path / "out" / "convergence.csv").read_text().splitlines()
        assert rows[0] == "iteration,misfit,step" and len(rows) >= 2
        assert "null_space_dim = 2" in (tmp_path / "out" / "identifiability.txt").read_text()


class TestThreads:
    def test_thread_cap_propagates(self, monkeypatch):
        monkeypatch.setenv("DISLOCATION_THREADS", "3")
        for var in cli.THREAD_VARS:
            monkeypatch.delenv(var, raising=False)
        cli._cap_threads()
        assert all(os.environ[v] == "3" for v in cli.THREAD_VARS)

    def test_subprocess_sees_cap(self, tmp_path):
        env = dict(os.environ, DISLOCATION_THREADS="2")
        code = ("import os, dislocation.cli as c; "
                "print(os.environ['OPENBLAS_NUM_THREADS'])")
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "2"

    def test_workers_follow_env(self, monkeypatch):
        from dislocation.inversion import default_workers
        monkeypatch.setenv("DISLOCATION_THREADS", "4")
        assert default_workers() == 4
        monkeypatch.setenv("DISLOCATION_THREADS", "x")
        assert default_workers() == 1
