import io
import subprocess
import sys

import numpy as np
import pytest

from vexflow.cli import run
from vexflow.config import SCHEMA, load_config, parse_config
from vexflow.errors import ConfigurationError


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_solve_defaults(tmp_path):
    code, out, _ = invoke("solve", "--output", str(tmp_path))
    assert code == 0 and "converged in 1 outer" in out
    for name in ("trace.csv", "fluid.mesh", "conc.mesh", "U.field", "P.field", "C.field", "energy.txt", "minmax.txt", "config.ini"):
        assert (tmp_path / name).exists(), name
    assert "violation = 0.0" in (tmp_path / "minmax.txt").read_text()


def test_config_echo_reproduces(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    code, _, _ = invoke(
        "solve", "--output", str(a), "--set", "data.forcing=vortex", "--set", "data.forcing_amplitude=10",
        "--set", "data.c_d=affine", "--set", "domain.fluid_level=1", "--quiet",
    )
    assert code == 0
    code, _, _ = invoke("solve", "--config", str(a / "config.ini"), "--output", str(b), "--quiet")
    assert code == 0
    for name in ("U.field", "P.field", "C.field", "trace.csv", "energy.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_config_round_trip():
    cfg = parse_config("[solver]\nt = 9\n[domain]\ndivisions = 3 2\n")
    again = parse_config(cfg.to_ini())
    assert again.values == cfg.values
    assert again["solver.t"] == 9.0 and again["domain.divisions"] == (3, 2)


def test_every_key_has_default():
    cfg = parse_config("")
    assert set(cfg.values) == set(SCHEMA)


@pytest.mark.parametrize(
    "text, key",
    [
        ("[solver]\nt = 4\n", "solver.t"),
        ("[solver]\ndamping = 2\n", "solver.damping"),
        ("[stress]\nr_minus = 0.9\n", "stress.r_minus"),
        ("[domain]\ndivisions = 2\n", "domain.divisions"),
        ("[solver]\nouter_tol = abc\n", "solver.outer_tol"),
        ("[solver]\nbogus = 1\n", "solver.bogus"),
    ],
)
def test_invalid_values_named(text, key):
    with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_syntax_error_has_line(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[solver]\nt = 8\nnot a pair\n")
    with pytest.raises(ConfigurationError, match=r"line\s+3"):
        load_config(p)


def test_exit_codes(tmp_path):
    code, _, err = invoke("solve", "--output", str(tmp_path), "--set", "solver.t=5")
    assert code == 1 and "solver.t" in err
    code, _, err = invoke("solve", "--output", str(tmp_path), "--config", str(tmp_path / "missing.ini"))
    assert code == 1
    code, _, err = invoke(
        "solve", "--output", str(tmp_path), "--set", "data.forcing=vortex",
        "--set", "data.forcing_amplitude=20", "--set", "solver.inner_maxit=1",
    )
    assert code == 2 and "did not converge" in err
    assert (tmp_path / "trace.csv").exists()


def test_mms_command(tmp_path):
    code, out, _ = invoke("mms", "--preset", "stokes2d", "--levels", "2", "--output", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "eoc.csv").read_text().splitlines()
    assert lines[0].startswith("level,h,err_u_W1rm") and len(lines) == 3


def test_mms_dimension_mismatch(tmp_path):
    code, _, err = invoke("mms", "--set", "mms.preset=stokes3d", "--output", str(tmp_path))
    assert code == 1 and "domain.dim" in err


def test_certify_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert invoke("certify-laws", "--samples", "2000", "--seed", "7", "--output", str(a), "--quiet")[0] == 0
    assert invoke("certify-laws", "--samples", "2000", "--seed", "7", "--output", str(b), "--quiet")[0] == 0
    assert (a / "cert.txt").read_bytes() == (b / "cert.txt").read_bytes()


def test_infsup_command(tmp_path):
    code, _, _ = invoke("infsup", "--levels", "1", "2", "--output", str(tmp_path), "--quiet")
    assert code == 0
    rows = np.loadtxt(tmp_path / "infsup.csv", delimiter=",", skiprows=1)
    assert rows.shape == (2, 3) and np.all(rows[:, 2] > 0.4)


def test_sweep_command(tmp_path):
    code, _, _ = invoke(
        "sweep-k", "--output", str(tmp_path), "--quiet", "--set", "domain.fluid_level=1",
        "--set", "data.forcing=vortex", "--set", "data.forcing_amplitude=20", "--set", "sweep.ks=1e2 1e3",
    )
    assert code == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "k,E_reg,dist_prev" and len(rows) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "vexflow", "certify-laws", "--samples", "100", "--output", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and (tmp_path / "cert.txt").exists()
