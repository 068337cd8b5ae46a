import json
from fractions import Fraction
import subprocess
import sys

import numpy as np
import pytest

from lenard.cli import main
from lenard.hierarchy import ConstraintSpec, lenard_F
from lenard.ring import DiffPoly
from lenard.symmetry import SymmetryOperator, build_Q_recurrence


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_hierarchy_plain(capsys):
    code, out, _ = run(capsys, "hierarchy", "--level", "1", "--format", "plain")
    assert code == 0
    assert out.strip() == "F_1 = 1/8 V''' + 3/4 V V'"


def test_hierarchy_negative_level_is_usage_error(capsys):
    code, _, err = run(capsys, "hierarchy", "--level", "-1")
    assert code == 2
    assert "usage" in err


def test_hierarchy_json_round_trip(capsys):
    code, out, _ = run(capsys, "hierarchy", "--level", "3", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert DiffPoly.from_json(data["F"]) == lenard_F(3)
    assert data["weight"] == 9


def test_hierarchy_latex(capsys):
    code, out, _ = run(capsys, "hierarchy", "--level", "1", "--format", "latex", "--density")
    assert code == 0
    assert out.startswith("F_{1} = ") and "U_{1}" in out


def test_verify_conformal_numeric_example(capsys):
    code, out, _ = run(capsys, "verify", "--order", "3", "--kappa", "-1", "--potential", "conformal", "--numeric")
    assert out.startswith("PASS residual")
    assert code == 0


def test_verify_centrifugal_numeric(capsys):
    code, out, _ = run(capsys, "verify", "--order", "3", "--kappa", "-1", "--potential", "centrifugal", "--numeric")
    assert code == 0 and out.startswith("PASS residual")


def test_verify_symbolic(capsys):
    code, out, _ = run(capsys, "verify", "--order", "5", "--constants", "1/3,-2")
    assert code == 0 and out.strip() == "PASS residual 0"
    code, out, _ = run(capsys, "verify", "--order", "3", "--potential", "well1", "--constants", "1")
    assert code == 0
    code, out, _ = run(capsys, "verify", "--order", "3", "--potential", "soliton1", "--constants", "1")
    assert code == 1 and out.startswith("FAIL")


def test_verify_eps_route_needs_kappa_zero(capsys):
    code, _, err = run(capsys, "verify", "--order", "3", "--kappa", "-1", "--method", "eps")
    assert code == 2 and "kappa" in err
    code, _, _ = run(capsys, "verify", "--order", "3", "--method", "eps", "--bconstants", "1,2")
    assert code == 0


def test_bad_order_and_constants(capsys):
    assert run(capsys, "symmetry", "--order", "4")[0] == 2
    assert run(capsys, "symmetry", "--order", "5", "--constants", "1")[0] == 2
    assert run(capsys, "symmetry", "--order", "3", "--kappa", "x")[0] == 2
    assert run(capsys, "verify", "--order", "3", "--numeric")[0] == 2


def test_unknown_potential(capsys):
    code, _, err = run(capsys, "catalog", "show", "nosuch")
    assert code == 2 and "nosuch" in err


def test_symmetry_json_round_trip(capsys):
    code, out, _ = run(capsys, "symmetry", "--order", "5", "--kappa", "-1", "--constants", "1,1/2", "--format", "json")
    assert code == 0
    Q = SymmetryOperator.from_json(json.loads(out))
    assert Q == build_Q_recurrence(ConstraintSpec(2, -1, (1, Fraction(1, 2))))


def test_symmetry_at_potential(capsys):
    code, out, _ = run(capsys, "symmetry", "--order", "3", "--kappa", "-1", "--potential", "conformal")
    assert code == 0
    assert "q_1(conformal)" in out and "q_0(conformal)" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["hierarchy", "--level", "4", "--format", "json"],
        ["symmetry", "--order", "5", "--format", "json"],
        ["check", "--potential", "soliton2", "--level", "2", "--fit", "--format", "json"],
        ["verify", "--order", "3", "--potential", "well1", "--constants", "1", "--numeric", "--format", "json"],
        ["catalog", "show", "conformal", "--verify", "--format", "json"],
    ],
)
def test_json_is_deterministic(capsys, argv):
    outs = [run(capsys, *argv)[1] for _ in range(2)]
    assert outs[0] == outs[1]
    json.loads(outs[0])


def test_json_identical_across_processes():
    argv = [sys.executable, "-m", "lenard", "check", "--potential", "well2", "--level", "2", "--fit", "--form", "schrodinger", "--format", "json"]
    a, b = (subprocess.run(argv, capture_output=True, check=True).stdout for _ in range(2))
    assert a == b


def test_check_fit(capsys):
    code, out, _ = run(capsys, "check", "--potential", "soliton1", "--level", "1", "--fit")
    assert code == 0 and "C_0 = 1" in out
    code, out, _ = run(capsys, "check", "--potential", "oscillator_centrifugal", "--level", "1", "--kappa", "-1", "--fit")
    assert code == 1 and out.startswith("FAIL")


def test_check_fit_kappa_warns(capsys):
    code, out, err = run(capsys, "check", "--potential", "conformal", "--level", "1", "--fit", "--fit-kappa")
    assert code == 0 and "ill-conditioned" in err


def test_check_explicit_constants(capsys):
    assert run(capsys, "check", "--potential", "conformal", "--level", "1", "--kappa", "-1")[0] == 0
    assert run(capsys, "check", "--potential", "soliton1", "--level", "1", "--constants", "0")[0] == 1


def test_check_samples(capsys, tmp_path):
    xs = np.linspace(-5, 5, 401)
    path = tmp_path / "v.csv"
    path.write_text("x,V\n" + "\n".join(f"{float(t)!r},{float(2 / np.cosh(t) ** 2)!r}" for t in xs) + "\n")
    code, out, _ = run(capsys, "check", "--samples", str(path), "--level", "1", "--fit", "--tol", "1e-3", "--format", "json")
    data = json.loads(out)
    assert code == 0 and abs(data["constants"][0] - 1) < 1e-3


def test_solve_csv_and_json(capsys):
    code, out, _ = run(capsys, "solve", "--potential", "zero", "--xi", "1+x**2", "--x0", "0.1", "--x1", "5", "--points", "3")
    assert code == 0
    rows = [r.split(",") for r in out.strip().splitlines()]
    assert rows[0] == ["x", "psi1", "psi2", "residual1", "residual2"]
    for r in rows[1:]:
        x, p1, p2 = map(float, r[:3])
        assert p1 == pytest.approx(1.0) and p2 == pytest.approx(x)
    code, out, _ = run(capsys, "solve", "--potential", "conformal", "--xi", "x", "--x0", "0.5", "--x1", "5", "--output", "json")
    data = json.loads(out)
    assert data["branch"] == "oscillatory" and data["alpha_exact"] == "7/4"
    assert data["residual"] < 1e-8


def test_solve_negative_xi_needs_equals_syntax(capsys):
    code, out, _ = run(capsys, "solve", "--potential", "zero", "--xi=-x", "--x0", "-5", "--x1", "-0.1", "--points", "5")
    assert code == 0


def test_solve_auto_and_vanishing_xi(capsys):
    code, out, _ = run(capsys, "solve", "--potential", "well1", "--x0", "-3", "--x1", "3", "--output", "json")
    assert code == 0 and json.loads(out)["alpha"] == pytest.approx(2.0, abs=1e-6)
    code, _, err = run(capsys, "solve", "--potential", "zero", "--xi", "x", "--x0", "-1", "--x1", "1")
    assert code == 1 and "XiVanishes" in err
    assert run(capsys, "solve", "--potential", "zero", "--xi", "1", "--x0", "1", "--x1", "0")[0] == 2


def test_constraint_command(capsys):
    code, out, _ = run(capsys, "constraint", "--level", "0", "--kappa", "-1")
    assert code == 0 and out.startswith("G = ")
    code, out, _ = run(capsys, "constraint", "--level", "1", "--form", "schrodinger", "--format", "json")
    assert json.loads(out)["form"] == "schrodinger"


def test_catalog_commands(capsys):
    code, out, _ = run(capsys, "catalog", "list")
    assert code == 0 and "soliton1" in out
    code, out, _ = run(capsys, "catalog", "list", "--format", "json")
    assert "conformal" in json.loads(out)["names"]
    code, out, _ = run(capsys, "catalog", "show", "oscillator_centrifugal", "--verify")
    assert code == 0 and "NOT verified" not in out
    code, out, _ = run(capsys, "catalog", "show", "soliton1", "--format", "json")
    assert json.loads(out)["name"] == "soliton1"
    assert run(capsys, "catalog", "show")[0] == 2


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "lenard.cfg"
    cfg.write_text("# defaults\nlevel = 2\nformat = json\n")
    code, out, _ = run(capsys, "--config", str(cfg), "hierarchy")
    assert code == 0 and json.loads(out)["level"] == 2
    # command line flags win over the file
    code, out, _ = run(capsys, "--config", str(cfg), "hierarchy", "--level", "1", "--format", "plain")
    assert out.startswith("F_1 =")
    cfg.write_text("nonsense_key = 3\n")
    assert run(capsys, "--config", str(cfg), "hierarchy", "--level", "1")[0] == 2
    cfg.write_text("just words\n")
    assert run(capsys, "--config", str(cfg), "hierarchy", "--level", "1")[0] == 2
    assert run(capsys, "--config", str(tmp_path / "missing"), "hierarchy", "--level", "1")[0] == 2


def test_golden_command(capsys, tmp_path):
    assert run(capsys, "golden")[0] == 0
    code, out, _ = run(capsys, "golden", "--regenerate", "--dir", str(tmp_path))
    assert code == 0 and "hierarchy.json" in out
    assert run(capsys, "golden", "--dir", str(tmp_path))[0] == 0
    p = tmp_path / "hierarchy.json"
    p.write_text(p.read_text().replace("1/8", "1/9", 1))
    code, out, _ = run(capsys, "golden", "--dir", str(tmp_path))
    assert code == 1 and "hierarchy.json" in out


def test_cache_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("LENARD_CACHE_DIR", str(tmp_path))
    assert run(capsys, "hierarchy", "--level", "3")[0] == 0
    assert any(tmp_path.iterdir())
    again = run(capsys, "hierarchy", "--level", "3")
    assert again[0] == 0 and again[1].startswith("F_3 =")
