"""Connection families: build formulas, flatness, reality, degeneracy,
su(1,1) structure, monodromy, developing maps, normal-form extraction.
Hand-computed matrices and closed-form exponentials serve as oracles."""

import numpy as np
import pytest
from scipy.linalg import expm

import gordonlab as gl
from gordonlab.connections import flatness_coefficients
from gordonlab.solver import EquationVariant

J_FORM = np.diag([1.0, -1.0])


def liouville_exact(grid):
    x, y = grid.meshes()
    return gl.ScalarField(grid, -2.0 * np.log(1.0 - x ** 2 - y ** 2))


def constant_sinh_family(tag="sg1", c=0.5, n=24):
    g = gl.Grid2D.torus(n)
    phi = gl.ScalarField.constant(g, np.log(abs(c)))
    return gl.build_family(phi, gl.QuadraticDifferential.constant(c), tag)


# ------------------------------------------------------------------ build


def test_build_cosh_at_unit_values():
    g = gl.Grid2D.torus(16)
    fam = gl.build_family(gl.ScalarField.constant(g, 0.0),
                          gl.QuadraticDifferential.constant(1.0), "cosh")
    az, azb = fam.at(1.0)
    assert np.allclose(az[3, 5], np.array([[0, 1], [1, 0]]))
    assert np.allclose(azb[3, 5], np.array([[0, 1], [-1, 0]]))


def test_build_sg1_t_entry():
    g = gl.Grid2D.torus(16)
    phi = gl.ScalarField.constant(g, 0.4)
    tc = 0.7 - 0.2j
    fam = gl.build_family(phi, gl.QuadraticDifferential.constant(tc), "sg1")
    az, azb = fam.at(1.0)
    assert az[0, 0][0, 1] == pytest.approx(-1j * tc * np.exp(-0.2), abs=1e-15)
    assert azb[0, 0][1, 0] == pytest.approx(1j * np.conj(tc) * np.exp(-0.2), abs=1e-15)


def test_build_nilpotent_coefficients_have_zero_determinant():
    fam = constant_sinh_family()
    rep = gl.degeneracy_check(fam)
    assert rep["max_abs_det"] == 0.0
    assert rep["commutator_sup"] == 0.0


def test_family_rejects_lambda_zero():
    fam = constant_sinh_family()
    with pytest.raises(ValueError):
        fam.at(0.0)
    with pytest.raises(ValueError):
        gl.reality_check(fam, 0.0)


# -------------------------------------------------------------- curvature


def test_curvature_zero_fields_gives_minus_h():
    # phi = 0, t = 0: only [F_gen, E_gen] = -H survives, exactly
    g = gl.Grid2D.torus(16)
    fam = gl.build_family(gl.ScalarField.constant(g, 0.0),
                          gl.QuadraticDifferential.constant(0.0), "cosh")
    f = gl.curvature(fam, 1.0)
    assert np.array_equal(f[4, 4], np.array([[-1, 0], [0, 1]], complex))


def test_curvature_liouville_exact_solution_refines_at_order_two():
    sups = []
    for n in (33, 65, 129):
        g = gl.Grid2D.disk_inscribed(n, 0.7)
        fam = gl.build_family(liouville_exact(g),
                              gl.QuadraticDifferential.constant(0.0), "cosh")
        x, y = g.meshes()
        mask = g.interior_mask() & (x ** 2 + y ** 2 <= 0.55 ** 2)
        sups.append(np.abs(gl.curvature(fam, 1.0))[mask].max())
    orders = np.log2(np.asarray(sups[:-1]) / np.asarray(sups[1:]))
    assert np.all((1.7 <= orders) & (orders <= 2.3))


def test_curvature_constant_sinh_solution_cancels_exactly():
    for tag in ("sg1", "sg2"):
        fam = constant_sinh_family(tag, c=0.5)
        for lam in (1.0, 0.5, 2.0, 1j, 1 + 1j):
            assert np.abs(gl.curvature(fam, lam)).max() <= 1e-12


def test_flatness_coefficients_lambda_pm2_identically_zero():
    rng = np.random.default_rng(2)
    g = gl.Grid2D.torus(16)
    phi = gl.ScalarField(g, rng.uniform(-1, 1, g.shape))
    fam = gl.build_family(phi, gl.QuadraticDifferential.constant(0.3 + 1j), "cosh")
    coeffs = flatness_coefficients(fam)
    assert np.abs(coeffs[2]).max() == 0.0
    assert np.abs(coeffs[-2]).max() == 0.0


def test_flatness_lambda0_embeds_pde_residual():
    # for a random non-solution phi the H-component of the lam^0 coefficient
    # reproduces the cosh residual up to the stencil-composition O(h^2)
    devs = []
    for n in (32, 64):
        g = gl.Grid2D.torus(n)
        x, y = g.meshes()
        phi = gl.ScalarField(g, 0.5 * np.sin(2 * np.pi * x) + 0.3 * np.cos(2 * np.pi * y))
        t = gl.QuadraticDifferential.constant(0.4)
        fam = gl.build_family(phi, t, "cosh")
        f0 = flatness_coefficients(fam)[0]
        r = gl.residual(phi, t, EquationVariant.COSH).values
        devs.append(np.abs(f0[..., 0, 0] - r).max())
        assert np.abs(f0[..., 0, 1]).max() <= 20.0 * g.hx ** 2
        assert np.abs(f0[..., 1, 0]).max() <= 20.0 * g.hx ** 2
    order = np.log2(devs[0] / devs[1])
    assert 1.7 <= order <= 2.3


def test_lambda_flatness_sweep_report_shape():
    fam = constant_sinh_family()
    rep = gl.lambda_flatness_sweep(fam, [1.0, 2.0, 1j])
    assert set(rep) == {"lambda_sup", "coefficient_sup"}
    assert len(rep["lambda_sup"]) == 3
    assert set(rep["coefficient_sup"]) == {-2, -1, 0, 1, 2}


# ---------------------------------------------------------------- reality


def test_reality_identity_for_built_families():
    rng = np.random.default_rng(9)
    g = gl.Grid2D.torus(16)
    phi = gl.ScalarField(g, rng.uniform(-1, 1, g.shape))
    t = gl.QuadraticDifferential.constant(0.6 - 0.3j)
    for tag in ("cosh", "sg1", "sg2"):
        fam = gl.build_family(phi, t, tag)
        for _ in range(10):
            lam = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
            if abs(lam) < 0.2:
                lam += 0.5
            assert gl.reality_check(fam, lam) <= 1e-13


def test_reality_at_lambda_one_relates_minus_one():
    # cosh involution sends 1 -> -1: the identity couples A_z(-1) to A_zbar(1)
    g = gl.Grid2D.torus(16)
    fam = gl.build_family(gl.ScalarField.constant(g, 0.2),
                          gl.QuadraticDifferential.constant(0.5), "cosh")
    assert fam.involution_sign == -1.0
    assert gl.reality_check(fam, 1.0) <= 1e-15


def test_reality_broken_by_imaginary_phi():
    g = gl.Grid2D.torus(16)
    vals = np.full(g.shape, 0.1, complex)
    vals[5, 7] += 0.1j
    phi_c = gl.ComplexField(g, vals)
    fam = gl.build_family(phi_c, gl.QuadraticDifferential.constant(0.5), "cosh")
    assert gl.reality_check(fam, 1.3) > 1e-3


def test_degeneracy_check_flags_non_degenerate_phi():
    g = gl.Grid2D.torus(16)
    fam = gl.ConnectionFamily(g, "custom")
    fam.az[1][...] = np.eye(2)
    rep = gl.degeneracy_check(fam)
    assert rep["per_component"]["az_p1"] == pytest.approx(1.0)
    assert rep["max_abs_det"] > 0.5


# ---------------------------------------------------------------- su(1,1)


def test_su11_for_sg_families_at_lambda_one():
    for tag in ("sg1", "sg2"):
        fam = constant_sinh_family(tag, c=2.0 * np.exp(1j * np.pi / 3))
        assert gl.su11_check(fam, 1.0) <= 1e-14


def test_su11_cosh_negative_control():
    g = gl.Grid2D.torus(16)
    fam = gl.build_family(gl.ScalarField.constant(g, 0.0),
                          gl.QuadraticDifferential.constant(1.0), "cosh")
    assert gl.su11_check(fam, 1.0) > 0.5


def test_monodromy_preserves_su11_form():
    fam = constant_sinh_family("sg1", c=0.5, n=32)
    res = gl.monodromy(fam, 1.0, [(0.0, 0.3), (1.0, 0.3)])
    m = res.matrix
    assert np.abs(np.conj(m.T) @ J_FORM @ m - J_FORM).max() <= 1e-12


# -------------------------------------------------------------- transport


def test_monodromy_trivial_loop_is_identity():
    fam = constant_sinh_family()
    res = gl.monodromy(fam, 1.0, [(0.2, 0.2)])
    assert np.array_equal(res.matrix, np.eye(2))
    assert res.steps == 0


def test_monodromy_contractible_loop_flat_family():
    g = gl.Grid2D.disk_inscribed(65, 0.7)
    fam = gl.build_family(liouville_exact(g),
                          gl.QuadraticDifferential.constant(0.0), "cosh")
    loop = [(-0.2, -0.2), (0.2, -0.2), (0.2, 0.2), (-0.2, 0.2), (-0.2, -0.2)]
    res = gl.monodromy(fam, 1.0, loop, tol=1e-10)
    assert np.abs(res.matrix - np.eye(2)).max() <= 1e-4  # O(h^2) of the chart
    assert res.det_defect <= 1e-10


def test_monodromy_homotopic_loops_agree():
    g = gl.Grid2D.disk_inscribed(65, 0.7)
    fam = gl.build_family(liouville_exact(g),
                          gl.QuadraticDifferential.constant(0.0), "cosh")
    sq = [(-0.2, -0.2), (0.2, -0.2), (0.2, 0.2), (-0.2, 0.2), (-0.2, -0.2)]
    hexa = [(-0.2, -0.2), (0.0, -0.25), (0.2, -0.2), (0.25, 0.0), (0.2, 0.2),
            (-0.2, 0.2), (-0.2, -0.2)]
    m1 = gl.monodromy(fam, 1.0, sq, tol=1e-10).matrix
    m2 = gl.monodromy(fam, 1.0, hexa, tol=1e-10).matrix
    assert np.abs(m1 - m2).max() <= 1e-4


def test_monodromy_constant_family_matches_matrix_exponential():
    fam = constant_sinh_family("sg1", c=0.5, n=32)
    az, azb = fam.at(1.0)
    res = gl.monodromy(fam, 1.0, [(0.0, 0.3), (1.0, 0.3)])
    assert np.abs(res.matrix - expm(az[0, 0] + azb[0, 0])).max() <= 1e-12


def test_monodromy_json_schema():
    fam = constant_sinh_family()
    d = gl.monodromy(fam, 2j, [(0.1, 0.1), (0.6, 0.1), (0.6, 0.6), (0.1, 0.1)]).to_json_dict()
    assert set(d) == {"loop", "lambda", "matrix", "det_defect", "steps"}
    assert d["lambda"] == [0.0, 2.0]
    assert len(d["matrix"]) == 4 and len(d["matrix"][0]) == 2


def test_developing_map_zero_connection():
    g = gl.Grid2D.torus(16)
    fam = gl.ConnectionFamily(g, "custom")
    out = gl.developing_map(fam, 1.0, (0.1, 0.1), [(0.7, 0.5)])
    assert np.abs(out - np.eye(2)).max() <= 1e-14


def test_developing_map_constant_e_generator():
    # dg = g (E dz) along the x-axis: g(L) = [[1, L], [0, 1]]
    g = gl.Grid2D.rectangle(17, (1.0, 1.0), (0.0, 0.0))
    fam = gl.ConnectionFamily(g, "custom")
    fam.az[0][..., 0, 1] = 1.0
    out = gl.developing_map(fam, 1.0, (0.0, 0.5), [(0.8, 0.5)])
    assert np.abs(out - np.array([[1.0, 0.8], [0.0, 1.0]])).max() <= 1e-11


def test_developing_map_determinant_one():
    g = gl.Grid2D.disk_inscribed(33, 0.7)
    fam = gl.build_family(liouville_exact(g),
                          gl.QuadraticDifferential.constant(0.0), "cosh")
    out = gl.developing_map(fam, 1.0, (0.0, 0.0), [(0.3, 0.1), (0.2, -0.3)])
    det = out[0, 0] * out[1, 1] - out[0, 1] * out[1, 0]
    assert abs(det - 1.0) <= 1e-10


# --------------------------------------------------------- normal form


def strip_gauge_data(n=33):
    prof = gl.strip_ode_oracle(1.0, 0.5)
    g = gl.Grid2D.rectangle(n, (0.5, 0.5), (0.0, 0.0))
    x, _ = g.meshes()
    phi = gl.ScalarField(g, prof(x))
    t = gl.QuadraticDifferential.constant(1.0)
    tv = t.evaluate(g).values
    a = gl.ComplexField(g, tv * np.exp(-0.5 * phi.values))
    f = gl.ScalarField(g, np.exp(0.5 * phi.values))
    h = gl.ComplexField(g, -0.25 * gl.d_z(phi).values)
    return g, phi, t, a, f, h


def test_extract_normal_form_round_trip():
    g, phi, t, a, f, h = strip_gauge_data()
    t_back, phi_back, _ = gl.extract_normal_form(a, f, h)
    assert np.abs(t_back.values - t.evaluate(g).values).max() <= 1e-14
    assert np.abs(phi_back.values - phi.values).max() <= 1e-13


def test_extract_normal_form_reduced_equations_order_two():
    worsts = []
    for n in (33, 65):
        g, phi, t, a, f, h = strip_gauge_data(n)
        _, _, rep = gl.extract_normal_form(a, f, h)
        # solve the equation at this resolution so eq5 (the PDE itself) holds
        rep_solved = gl.newton_solve(phi, t, EquationVariant.COSH, compute_eigen=False)
        tv = t.evaluate(g).values
        a2 = gl.ComplexField(g, tv * np.exp(-0.5 * rep_solved.phi.values))
        f2 = gl.ScalarField(g, np.exp(0.5 * rep_solved.phi.values))
        h2 = gl.ComplexField(g, -0.25 * gl.d_z(rep_solved.phi).values)
        _, _, rep2 = gl.extract_normal_form(a2, f2, h2)
        worsts.append(max(rep2[k] for k in
                          ("dzbar_a", "dz_abar", "dzbar_f", "dz_fbar", "dh_sum", "dzbar_t")))
    order = np.log2(worsts[0] / worsts[1])
    assert 1.6 <= order <= 2.4


def test_extract_normal_form_rejects_nonpositive_f():
    g = gl.Grid2D.torus(16)
    a = gl.ComplexField.constant(g, 1.0)
    h = gl.ComplexField.constant(g, 0.0)
    vals = np.ones(g.shape)
    vals[3, 3] = 0.0
    with pytest.raises(gl.GaugePreconditionError):
        gl.extract_normal_form(a, gl.ScalarField(g, vals), h)
    with pytest.raises(gl.GaugePreconditionError):
        gl.extract_normal_form(a, gl.ComplexField(g, np.ones(g.shape) + 0.1j), h)
