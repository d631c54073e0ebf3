import numpy as np
import pytest

from conftest import problem, spaces, sphere
from oracles import static_matrices
from hdivefie.assembly import (MediumParams, PlaneWave, assemble_dual_efio, assemble_efie_hdiv, assemble_efie_l2,
                               assemble_gram, assemble_rhs_hdiv, assemble_rhs_l2, assemble_single_layer,
                               bilinear_forms, build_spaces, dump_matrix, load_matrix_dump)
from hdivefie.basis import build_bc, build_loop_star, build_rwg, evaluate
from hdivefie.mesh import Mesh, barycentric_refine
from hdivefie.quadrature import QuadratureSettings, gauss_triangle

# resolves the outer edge singularities of touching pairs to ~1e-10
FINE = QuadratureSettings(inner_degree=10, far_degree=10, near_rule="tanh-sinh", tanh_sinh_step=0.2)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _tetra():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return Mesh.from_arrays(v, [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def test_medium_and_wave_validation():
    p = MediumParams.from_k(2.0)
    assert p.k == pytest.approx(2.0) and p.c == pytest.approx(0.25)
    assert MediumParams.from_k(2.0, c_factor=10).c == pytest.approx(2.5)
    with pytest.raises(ValueError):
        MediumParams.from_k(0.0)
    with pytest.raises(ValueError):
        MediumParams(1.0, epsilon=-1.0)
    with pytest.raises(ValueError):
        PlaneWave([0, 0, 1.0], [0, 0, 1.0])
    w = PlaneWave.along_z(1.5)
    assert np.allclose(w.H([0, 0, 0], MediumParams.from_k(1.5)), [[0, 1, 0]])


# ----------------------------------------------------------------------------
# L2 system


def test_efie_l2_complex_symmetric():
    s = spaces(1)
    A = assemble_efie_l2(s.mesh, s.rwg, MediumParams.from_k(1.0)).data
    assert np.all(np.isfinite(A))
    assert np.linalg.norm(A - A.T) / np.linalg.norm(A) < 1e-6


def test_efie_l2_hypersingular_dominance():
    s = spaces(1)
    ks = np.array([1e-3, 1e-2, 1e-1])
    peak = [np.abs(assemble_efie_l2(s.mesh, s.rwg, MediumParams.from_k(k)).data).max() for k in ks]
    slope = np.polyfit(np.log(ks), np.log(peak), 1)[0]
    assert abs(slope + 1) < 0.2


def test_static_forms_match_oracle_on_tetrahedron():
    m = _tetra()
    rwg = build_rwg(m)
    z = bilinear_forms(rwg, rwg, 0.0, ("vv", "dd"), FINE)
    VV, DD = static_matrices(rwg)
    assert np.abs(z["vv"] - VV).max() <= 1e-8 * np.abs(VV).max()
    assert np.abs(z["dd"] - DD).max() <= 1e-8 * np.abs(DD).max()


def test_distant_pairs_match_static_oracle():
    # two tetrahedra far apart: cross entries only involve separated triangle pairs
    t = _tetra()
    v = np.vstack([t.vertices, t.vertices + [8.0, 1.0, -2.0]])
    m = Mesh.from_arrays(v, np.vstack([t.triangles, t.triangles + 4]))
    rwg = build_rwg(m)
    z = bilinear_forms(rwg, rwg, 1e-12, ("vv", "dd"), QuadratureSettings(far_degree=10))
    VV, DD = static_matrices(rwg, touching=(4, 6), separated=(1, 6))
    cross = np.ix_(range(6), range(6, 12))
    for got, ref in ((z["vv"], VV), (z["dd"], DD)):
        assert np.abs(got[cross] - ref[cross]).max() <= 1e-8 * np.abs(ref[cross]).max()


def test_default_orders_converge_under_refinement():
    s = spaces(1)
    ref = bilinear_forms(s.rwg, s.rwg, 1.0, ("vv", "dd"), FINE)
    mid = bilinear_forms(s.rwg, s.rwg, 1.0, ("vv", "dd"),
                         QuadratureSettings(inner_degree=10, far_degree=10, near_rule="tanh-sinh", tanh_sinh_step=0.25))
    coarse = bilinear_forms(s.rwg, s.rwg, 1.0, ("vv", "dd"))
    for f in ("vv", "dd"):
        scale = np.abs(ref[f]).max()
        assert np.abs(mid[f] - ref[f]).max() < 1e-6 * scale
        # the default Gauss outer rule is cheap but coarse on touching pairs
        assert np.abs(coarse[f] - ref[f]).max() < 5e-2 * scale


def test_rhs_l2_zero_polarisation():
    s = spaces(1)
    b = assemble_rhs_l2(s.mesh, s.rwg, PlaneWave([0, 0, 1.0], [0, 0, 0])).data
    assert np.all(b == 0)


def test_rhs_l2_translation_phase():
    m = sphere(1)
    shift = np.array([0.3, -0.2, 0.7])
    moved = Mesh.from_arrays(m.vertices + shift, m.triangles)
    wave = PlaneWave([0.4, -0.3, 1.1], np.cross([0.4, -0.3, 1.1], [1.0, 2.0, 0.5]))
    b0 = assemble_rhs_l2(m, build_rwg(m), wave).data
    b1 = assemble_rhs_l2(moved, build_rwg(moved), wave).data
    assert np.allclose(b1, np.exp(1j * wave.k_vec @ shift) * b0, rtol=0, atol=1e-13 * np.abs(b0).max())


def test_rhs_l2_equator_entry_matches_fine_quadrature():
    m = sphere(1)
    rwg = build_rwg(m)
    wave = PlaneWave.along_z(2.0)
    b = assemble_rhs_l2(m, rwg, wave).data
    mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    i = int(np.argmin(np.abs(mid[:, 2])))
    rule = gauss_triangle(10)
    ref = 0j
    for t in rwg.support(i):
        pts, w = rule.map(m.corners[t])
        n = m.normals[t]
        for bary, x, wq in zip(rule.points, pts, w):
            f = evaluate(rwg, i, t, bary)
            ref += wq * np.cross(n, f) @ np.cross(wave.E(x)[0], n)
    assert abs(b[i] - ref) <= 1e-8 * abs(ref)


# ----------------------------------------------------------------------------
# H_div system


def test_hdiv_reduces_to_l2_tested_form_at_c0():
    s = spaces(1)
    p = MediumParams.from_k(0.5)
    A0 = assemble_efie_hdiv(s.mesh, s.rwg, s.bc, p.with_c(0.0)).data
    z = bilinear_forms(s.bc, s.rwg, p.k, ("rv", "rg"))
    ref = -1j * p.omega * p.mu * z["rv"] - 1j / (p.omega * p.epsilon) * z["rg"]
    assert np.linalg.norm(A0 - ref) <= 1e-12 * np.linalg.norm(ref)


def test_hdiv_magnetic_block_linear_in_c_and_loop_free():
    s = spaces(1)
    p = MediumParams.from_k(0.5)
    A = {c: assemble_efie_hdiv(s.mesh, s.rwg, s.bc, p.with_c(c)).data for c in (0.0, 1.0, 4.0)}
    B1, B4 = A[1.0] - A[0.0], (A[4.0] - A[0.0]) / 4.0
    assert np.linalg.norm(B1 - B4) <= 1e-12 * np.linalg.norm(B1)
    loops = build_loop_star(s.bc).loop
    assert np.abs(loops.T @ B1).max() <= 1e-10 * np.abs(B1).max()


def test_rhs_hdiv_c_dependence():
    s = spaces(1)
    k = 0.3
    wave = PlaneWave.along_z(k)
    p = MediumParams.from_k(k)
    ls = build_loop_star(s.bc)
    b = {f: assemble_rhs_hdiv(s.mesh, s.bc, wave, p.with_c(f / k ** 2)).data for f in (0.0, 1.0, 2.0, 10.0)}
    assert np.abs(ls.loop.T @ (b[1.0] - b[10.0])).max() <= 1e-12 * np.abs(b[1.0]).max()
    d1, d2, d10 = (ls.star.T @ (b[f] - b[0.0]) for f in (1.0, 2.0, 10.0))
    tol = 1e-12 * np.abs(d10).max()
    assert np.abs(d2 - 2 * d1).max() <= tol and np.abs(d10 - 10 * d1).max() <= tol
    assert np.abs(d1).max() > 0
    b_l2_bc = assemble_rhs_hdiv(s.mesh, s.bc, PlaneWave(wave.k_vec, [0, 0, 0]), p).data
    assert np.all(b_l2_bc == 0)


def test_dual_l2_with_rwg_trial_reproduces_efie_on_refinement():
    s = spaces(0)
    p = MediumParams.from_k(1.0)
    rwg_r = build_rwg(s.refined)
    A = assemble_efie_l2(s.refined, rwg_r, p).data
    D = assemble_dual_efio("L2", s.refined, rwg_r, build_rwg(s.refined), p).data
    assert np.linalg.norm(A - D) <= 1e-10 * np.linalg.norm(A)


def test_dual_l2_complex_symmetric():
    s = spaces(1)
    A = assemble_dual_efio("L2", s.mesh, s.rwg, s.bc, MediumParams.from_k(1.0)).data
    assert np.linalg.norm(A - A.T) / np.linalg.norm(A) < 1e-6


def test_dual_hdiv_c_part_is_loop_free():
    s = spaces(1)
    p = MediumParams.from_k(0.5)
    A0 = assemble_dual_efio("Hdiv", s.mesh, s.rwg, s.bc, p.with_c(0.0)).data
    A1 = assemble_dual_efio("Hdiv", s.mesh, s.rwg, s.bc, p).data
    z = bilinear_forms(s.rwg, s.bc, p.k, ("rv", "rg"))
    ref = -1j * p.omega * p.mu * z["rv"] - 1j / (p.omega * p.epsilon) * z["rg"]
    assert np.linalg.norm(A0 - ref) <= 1e-12 * np.linalg.norm(ref)
    loops = build_loop_star(s.rwg).loop
    assert np.abs(loops.T @ (A1 - A0)).max() <= 1e-10 * np.abs(A1 - A0).max()
    with pytest.raises(ValueError):
        assemble_dual_efio("H1", s.mesh, s.rwg, s.bc, p)


# ----------------------------------------------------------------------------
# single layer


def test_single_layer_invertible_level2():
    S = problem(2, 1.0).matrix("S_L2")
    assert np.all(np.isfinite(S))
    assert np.linalg.svd(S, compute_uv=False).min() > 0


def test_single_layer_scales_with_omega_eps():
    s = spaces(1)
    S3 = assemble_single_layer(s.mesh, s.bc, MediumParams.from_k(1e-3)).data / 1e-3
    S4 = assemble_single_layer(s.mesh, s.bc, MediumParams.from_k(1e-4)).data / 1e-4
    assert _rel(S3, S4) < 1e-3
    S_eps = assemble_single_layer(s.mesh, s.bc, MediumParams(1e-3, epsilon=4.0, mu=0.25)).data / (4.0 * 1e-3)
    assert _rel(S_eps, S3) < 1e-12


def test_static_single_layer_matches_oracle():
    m = _tetra()
    r, rmap = barycentric_refine(m)
    bc = build_bc(m, r, rmap)
    z = bilinear_forms(bc, bc, 0.0, ("vv",), FINE)["vv"]
    VV, _ = static_matrices(bc, touching=(8, 6), separated=(1, 6))
    assert np.abs(z - VV).max() <= 1e-8 * np.abs(VV).max()


# ----------------------------------------------------------------------------
# Gram matrices


def test_gram_hdiv_spd_and_real():
    s = spaces(1)
    p = MediumParams.from_k(0.1)
    for name in ("T_Hdiv", "T'_Hdiv", "T''_L2"):
        T = assemble_gram(name, s, p).data
        assert np.all(T.imag == 0)
        assert np.allclose(T, T.T, rtol=0, atol=1e-14 * np.abs(T).max())
        assert np.linalg.eigvalsh(T.real).min() > 0


def test_gram_conditioning_in_k():
    s = spaces(1)
    ks = np.array([1e-1, 1e-2, 1e-3])
    cond = [np.linalg.cond(assemble_gram("T_Hdiv", s, MediumParams.from_k(k)).data) for k in ks]
    assert abs(np.polyfit(np.log(ks), np.log(cond), 1)[0] + 2) < 0.3
    cl2 = [np.linalg.cond(assemble_gram("T_L2", s, MediumParams.from_k(k)).data) for k in ks]
    assert max(cl2) / min(cl2) < 2
    assert cl2[0] == cl2[1] == cl2[2]


def test_gram_mass_matches_quadrature():
    s = spaces(0)
    T = assemble_gram("T''_L2", s).data.real
    rule = gauss_triangle(2)
    m = s.refined
    i, j = 3, 3
    ref = 0.0
    for t in set(s.bc.support(i)) & set(s.bc.support(j)):
        pts, w = rule.map(m.corners[t])
        for bary, wq in zip(rule.points, w):
            ref += wq * evaluate(s.bc, i, t, bary) @ evaluate(s.bc, j, t, bary)
    assert T[i, j] == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        assemble_gram("T_Hdiv", s)
    with pytest.raises(ValueError):
        assemble_gram("T_H1", s)


# ----------------------------------------------------------------------------
# plumbing


def test_assembly_is_deterministic():
    m = sphere(1)
    p = MediumParams.from_k(1.0)
    a = assemble_efie_hdiv(m, *(lambda s: (s.rwg, s.bc))(build_spaces(m)), p).data
    b = assemble_efie_hdiv(m, *(lambda s: (s.rwg, s.bc))(build_spaces(m)), p).data
    assert np.array_equal(a, b)


def test_mismatched_spaces_rejected():
    s1, s0 = spaces(1), spaces(0)
    p = MediumParams.from_k(1.0)
    with pytest.raises(ValueError):
        assemble_efie_l2(s1.mesh, s0.rwg, p)
    with pytest.raises(ValueError):
        assemble_efie_hdiv(s1.mesh, s1.rwg, s0.bc, p)
    with pytest.raises(ValueError):
        bilinear_forms(s1.rwg, s1.rwg, 1.0, ("xx",))


def test_matrix_dump_roundtrip(tmp_path):
    s = spaces(0)
    A = assemble_efie_l2(s.mesh, s.rwg, MediumParams.from_k(1.0))
    txt, binp = dump_matrix(A, tmp_path / "a")
    assert np.array_equal(load_matrix_dump(binp), A.data)
    lines = txt.read_text().splitlines()
    assert lines[0] == f"# {A.rows} {A.cols}"
    i, j, re, im = lines[1].split()
    assert complex(float(re), float(im)) == A.data[int(i), int(j)]
    assert len(lines) - 1 == np.count_nonzero(A.data)
    raw = np.fromfile(binp, dtype="<f8")
    assert raw[0] == np.count_nonzero(A.data)
