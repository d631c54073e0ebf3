import csv
import subprocess
import sys

import pytest

from hdivefie.cli import (SWEEP_COLUMNS, ConfigError, ExperimentConfig, ResultRow, build_parser, k_range, load_config,
                          main, parse_config, run_diagnostics, run_sweep)
from hdivefie.mesh import generate_sphere, save_mesh

HEADER = "approach,k,h,N,rel_error,outer_iters,inner_iters,converged,seconds"


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _tiny(tmp_path, **kw):
    base = dict(ks=(0.05, 0.5), approaches=(1, 4, 5), sphere=(0.25, 1), out=str(tmp_path), deterministic=True)
    base.update(kw)
    return ExperimentConfig(**base)


# ----------------------------------------------------------------------------
# configuration


def test_columns_are_fixed():
    assert ",".join(SWEEP_COLUMNS) == HEADER


def test_parse_config_roundtrip():
    cfg = parse_config("""
        # comment
        k = 0.01, 0.1
        approaches = 1 4
        sphere = 0.5 1
        c_factor = 2
        solver.tol = 1e-6
        solver.max_iter = 50
        quadrature.outer_degree = 5
        quadrature.near_rule = tanh-sinh
        diagnose.spectrum_k = 0.3
        deterministic = yes
        out = somewhere
    """)
    assert cfg.ks == (0.01, 0.1) and cfg.approaches == (1, 4)
    assert cfg.sphere == (0.5, 1) and cfg.c_factor == 2.0
    assert cfg.solver.tol == 1e-6 and cfg.solver.max_iter == 50
    assert cfg.quadrature.outer_degree == 5 and cfg.quadrature.near_rule == "tanh-sinh"
    assert cfg.diagnose.spectrum_k == 0.3
    assert cfg.deterministic and cfg.out == "somewhere"


def test_k_range_is_log_spaced():
    ks = parse_config("k_range = 0.01 1 3").ks
    assert ks == pytest.approx((0.01, 0.1, 1.0))
    assert k_range(0.5, 0.5, 1) == (0.5,)
    with pytest.raises(ConfigError):
        k_range(0, 1, 3)


@pytest.mark.parametrize("text", [
    "k =",
    "k = -1",
    "approaches =",
    "approaches = 6",
    "approaches = 1 1",
    "sphere = -1 2",
    "c_factor = 0",
    "oracle = maybe",
    "colour = red",
    "solver.colour = red",
    "solver.tol = abc",
    "quadrature.outer_degree = 0",
    "deterministic = perhaps",
    "just text",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_empty_k_exits_with_code_two(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("k =\n")
    assert main(["sweep", "--config", str(cfg)]) == 2
    assert "empty" in capsys.readouterr().err


def test_parser_subcommands():
    p = build_parser()
    a = p.parse_args(["sweep", "--sphere", "0.25", "1", "--k-range", "0.01", "1", "3", "--approach", "1,4,5",
                      "--out", "o", "--deterministic"])
    assert a.command == "sweep" and a.approach == "1,4,5" and a.deterministic
    with pytest.raises(SystemExit):
        p.parse_args(["sweep", "--k", "1", "--k-range", "1", "2", "2"])
    with pytest.raises(SystemExit):
        p.parse_args([])
    assert p.parse_args(["mesh-info"]).command == "mesh-info"


def test_flags_override_config_file(tmp_path):
    from hdivefie.cli import config_from_args

    f = tmp_path / "c.cfg"
    f.write_text("k = 1\napproaches = 3\nsphere = 1 0\n")
    args = build_parser().parse_args(["sweep", "--config", str(f), "--approach", "1,2", "--sphere", "0.5", "1",
                                      "--tol", "1e-7"])
    cfg = config_from_args(args)
    assert cfg.ks == (1.0,) and cfg.approaches == (1, 2) and cfg.sphere == (0.5, 1) and cfg.solver.tol == 1e-7


# ----------------------------------------------------------------------------
# sweeps


@pytest.fixture(scope="module")
def sweep_pair(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("a"), tmp_path_factory.mktemp("b")
    return run_sweep(_tiny(a)), a / "sweep.csv", run_sweep(_tiny(b)), b / "sweep.csv"


def test_sweep_csv_layout(sweep_pair):
    rows, path, *_ = sweep_pair
    text = path.read_text().splitlines()
    assert text[0] == HEADER
    assert len(text) == 1 + len(rows) == 7
    recs = _read(path)
    assert len({(r["approach"], r["k"]) for r in recs}) == len(recs)
    for r in recs:
        assert int(r["N"]) == 120
        assert r["converged"] in ("true", "false")
        if r["converged"] == "true":
            assert 0 < float(r["rel_error"]) < 1


def test_sweep_is_reproducible(sweep_pair):
    _, p1, _, p2 = sweep_pair
    strip = lambda p: [r[:-1] for r in csv.reader(open(p))]
    assert strip(p1) == strip(p2)


def test_sweep_matches_library_errors(sweep_pair):
    rows = sweep_pair[0]
    by = {(r.approach, r.k): r for r in rows}
    for k in (0.05, 0.5):
        assert abs(by[1, k].rel_error - by[4, k].rel_error) <= 5e-4


def test_unconverged_rows_leave_error_empty(tmp_path):
    from hdivefie.solver import SolverSettings

    rows = run_sweep(_tiny(tmp_path, ks=(0.05,), approaches=(5,), solver=SolverSettings(max_iter=2)))
    assert not rows[0].converged and rows[0].outer_iters == 2
    rec = _read(tmp_path / "sweep.csv")[0]
    assert rec["converged"] == "false" and rec["rel_error"] == ""


def test_row_formatting():
    r = ResultRow(3, 0.1, 0.2, 10, 0.5, 4, 7, True, 1.23456)
    assert r.csv_fields() == ["3", "0.1", "0.2", "10", "5.0000000000e-01", "4", "7", "true", "1.235"]


def test_mesh_file_sweep_uses_mie_when_spherical(tmp_path):
    m = tmp_path / "s.obj"
    save_mesh(generate_sphere(0.25, 1), m)
    rows = run_sweep(_tiny(tmp_path, ks=(0.1,), approaches=(1,), mesh=str(m)))
    assert rows[0].rel_error is not None and rows[0].rel_error < 0.5


def test_non_sphere_mesh_has_no_oracle(tmp_path, tetra):
    m = tmp_path / "t.obj"
    save_mesh(tetra, m)
    rows = run_sweep(_tiny(tmp_path, ks=(0.5,), approaches=(4,), mesh=str(m)))
    assert rows[0].rel_error is None
    with pytest.raises(ConfigError):
        run_sweep(_tiny(tmp_path, ks=(0.5,), approaches=(4,), mesh=str(m), oracle="mie"))


def test_sweep_command_line(tmp_path, capsys):
    rc = main(["sweep", "--sphere", "0.25", "0", "--k", "0.2", "--approach", "1,3", "--out", str(tmp_path),
               "--deterministic"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == HEADER and len(out) == 3
    assert (tmp_path / "sweep.csv").exists()


# ----------------------------------------------------------------------------
# diagnose and mesh-info


@pytest.fixture(scope="module")
def diag_paths(tmp_path_factory):
    out = tmp_path_factory.mktemp("diag")
    cfg = parse_config(f"sphere = 0.25 1\nout = {out}\ndiagnose.scaling_levels = 0 1\ndeterministic = true")
    return run_diagnostics(cfg)


def test_diagnose_writes_nonempty_csvs(diag_paths):
    heads = {"scaling": "block,k,h,max_entry", "spectrum": "re,im", "gram_cond": "matrix,k,cond",
             "scaling_fits": "variant,block,k_exponent,r2,reliable",
             "spectrum_clusters": "center_re,center_im,radius,fraction"}
    for key, head in heads.items():
        lines = diag_paths[key].read_text().splitlines()
        assert lines[0] == head and len(lines) > 1


def test_diagnose_reports_fit_quality_and_clusters(diag_paths):
    fits = _read(diag_paths["scaling_fits"])
    assert {f["variant"] for f in fits} == {"L2", "Hdiv"}
    assert all(0 <= float(f["r2"]) <= 1 for f in fits)
    ll = next(f for f in fits if f["variant"] == "L2" and f["block"] == "SS")
    assert float(ll["k_exponent"]) == pytest.approx(-1, abs=0.2)
    clusters = _read(diag_paths["spectrum_clusters"])
    assert clusters[-1]["center_re"] == "all" and float(clusters[-1]["fraction"]) > 0.5
    assert len(_read(diag_paths["spectrum"])) == 120


def test_mesh_info_output(capsys):
    assert main(["mesh-info", "--sphere", "1", "1"]) == 0
    out = capsys.readouterr().out
    assert "triangles: 80" in out and "edges: 120" in out and "euler: 2" in out


def test_mesh_info_bad_file(tmp_path, capsys):
    assert main(["mesh-info", "--mesh", str(tmp_path / "none.obj")]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "hdivefie", "mesh-info", "--sphere", "0.25", "0"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0 and "vertices: 12" in r.stdout
    r = subprocess.run([sys.executable, "-m", "hdivefie", "--help"], capture_output=True, text=True, timeout=120)
    assert r.returncode == 0 and all(s in r.stdout for s in ("sweep", "diagnose", "mesh-info"))
