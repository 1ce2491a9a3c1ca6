"""Field substrate: Wirtinger stencils, quadrature, quadratic differentials,
CSV exchange.  Expected values come from closed-form differentiation."""

import numpy as np
import pytest

import gordonlab as gl


def measured_order(errs):
    return np.log2(np.asarray(errs[:-1]) / np.asarray(errs[1:]))


# ------------------------------------------------------------------- d_z


def test_dz_constant_field_is_zero():
    g = gl.Grid2D.torus(16)
    f = gl.ComplexField.constant(g, 7.0)
    assert gl.d_z(f).sup() == 0.0
    assert gl.d_zbar(f).sup() == 0.0


def test_dz_z_squared_exact_on_bounded_grid():
    # central differences are exact on quadratics
    g = gl.Grid2D.rectangle(17, (1.0, 1.0), (-0.5, -0.5))
    f = gl.ComplexField.from_function(g, lambda z: z ** 2)
    dz = gl.d_z(f)
    dzb = gl.d_zbar(f)
    interior = g.interior_mask()
    assert np.abs(dz.values - 2 * g.z())[interior].max() < 1e-13
    assert np.abs(dzb.values)[interior].max() < 1e-13


def test_dzbar_z_cubed_truncation_is_h_squared():
    # hand Taylor expansion: dzbar(z^3) under these stencils equals h^2 exactly
    g = gl.Grid2D.rectangle(17, (1.0, 1.0), (-0.5, -0.5))
    f = gl.ComplexField.from_function(g, lambda z: z ** 3)
    dzb = gl.d_zbar(f).values[g.interior_mask()]
    assert np.allclose(dzb, g.hx ** 2, atol=1e-13)


def test_dz_sine_profile_second_order():
    errs = []
    for n in (16, 32, 64):
        g = gl.Grid2D.torus(n)
        f = gl.ScalarField.from_function(g, lambda x, y: np.sin(2 * np.pi * x))
        expect = np.pi * np.cos(2 * np.pi * g.meshes()[0])
        errs.append(np.abs(gl.d_z(f).values - expect).max())
    orders = measured_order(errs)
    assert np.all((1.7 <= orders) & (orders <= 2.3))


def test_dz_dzbar_conjugate_for_real_fields():
    rng = np.random.default_rng(0)
    g = gl.Grid2D.torus(24)
    f = gl.ScalarField(g, rng.standard_normal(g.shape))
    a = gl.d_z(f).values
    b = gl.d_zbar(f).values
    assert np.array_equal(np.conj(a), b)


# --------------------------------------------------------------- laplace


def test_laplace_constant_is_zero():
    g = gl.Grid2D.torus(16)
    assert gl.laplace_zzbar(gl.ScalarField.constant(g, 1.0)).sup() == 0.0


def test_laplace_exact_on_quadratic():
    g = gl.Grid2D.rectangle(17, (1.0, 1.0), (-0.5, -0.5))
    f = gl.ScalarField.from_function(g, lambda x, y: x ** 2 + y ** 2)
    vals = gl.laplace_zzbar(f).values[g.interior_mask()]
    assert np.allclose(vals, 1.0, atol=1e-13)


def test_laplace_liouville_profile_second_order():
    # dz dzbar of -2 ln(1 - |z|^2) is 2 (1 - |z|^2)^{-2}.  The order is
    # measured away from the corners (where the h^4 term still bites at
    # these resolutions); the full-domain error gets an explicit h^2 bound.
    errs = []
    for n in (33, 65, 129):
        g = gl.Grid2D.disk_inscribed(n, 0.7)
        x, y = g.meshes()
        f = gl.ScalarField(g, -2 * np.log(1 - x ** 2 - y ** 2))
        expect = 2.0 / (1 - x ** 2 - y ** 2) ** 2
        mask = g.interior_mask() & (x ** 2 + y ** 2 <= 0.55 ** 2)
        errs.append(np.abs(gl.laplace_zzbar(f).values - expect)[mask].max())
        full = np.abs(gl.laplace_zzbar(f).values - expect)[g.interior_mask()].max()
        assert full <= 70.0 * g.hx ** 2
    orders = measured_order(errs)
    assert np.all((1.7 <= orders) & (orders <= 2.3))


# ------------------------------------------------------------- integrate


def test_integrate_constant_unit_torus():
    g = gl.Grid2D.torus(32)
    assert gl.integrate(gl.ScalarField.constant(g, 1.0)) == pytest.approx(1.0, abs=1e-15)


def test_integrate_sine_vanishes():
    g = gl.Grid2D.torus(32)
    f = gl.ScalarField.from_function(g, lambda x, y: np.sin(2 * np.pi * x))
    assert abs(gl.integrate(f)) < 1e-14


def test_integrate_constant_area_scaling():
    c = -1.7 + 0.4j
    g = gl.Grid2D.torus((40, 25), (2.5, 1.0))
    f = gl.ScalarField.constant(g, abs(c))
    assert gl.integrate(f) == pytest.approx(2.5 * abs(c), rel=1e-14)


def test_integrate_respects_mask():
    g = gl.Grid2D.torus(16)
    f = gl.ScalarField.constant(g, 2.0)
    mask = np.zeros(g.shape, bool)
    mask[:8, :] = True
    assert gl.integrate(f, mask) == pytest.approx(1.0, rel=1e-14)


def test_summation_by_parts_periodic():
    rng = np.random.default_rng(3)
    g = gl.Grid2D.torus(32)
    for _ in range(5):
        f = gl.ScalarField(g, rng.standard_normal(g.shape))
        total = gl.integrate(gl.laplace_zzbar(f))
        assert abs(total) < 1e-12 * max(1.0, f.sup() / g.hx ** 2 * g.cell_area)


# -------------------------------------------------- quadratic differentials


def test_quad_diff_constant_evaluation():
    g = gl.Grid2D.torus(16)
    t = gl.QuadraticDifferential.constant(1 + 2j)
    vals = gl.eval_quad_diff(t, g).values
    assert np.all(vals == 1 + 2j)


def test_quad_diff_polynomial_point_value():
    t = gl.QuadraticDifferential.polynomial([0, 0, 1])  # z^2
    assert t(1 + 1j) == pytest.approx(2j)


def test_quad_diff_holomorphy_defect():
    g = gl.Grid2D.rectangle(33, (1.0, 1.0), (-0.5, -0.5))
    for coeffs in ([0, 0, 1], [0.3, -0.2j, 1, 0.5]):
        t = gl.QuadraticDifferential.polynomial(coeffs)
        defect = gl.d_zbar(gl.eval_quad_diff(t, g)).sup(g.interior_mask())
        assert defect <= 2.0 * g.hx ** 2 * max(abs(complex(c)) for c in coeffs) * 10


def test_quad_diff_polynomial_rejected_on_torus():
    g = gl.Grid2D.torus(16)
    t = gl.QuadraticDifferential.polynomial([0, 1])
    with pytest.raises(gl.RepresentationError):
        gl.eval_quad_diff(t, g)


# --------------------------------------------------------------- errors


def test_grid_validation():
    with pytest.raises(gl.GridError):
        gl.Grid2D(3, 8, 0.1, 0.1)
    with pytest.raises(gl.GridError):
        gl.Grid2D(8, 8, -0.1, 0.1)
    with pytest.raises(gl.GridError):
        gl.Grid2D(8, 8, 0.1, 0.1, (0, 0), "weird")


def test_missing_boundary_closure_raises():
    g = gl.Grid2D.rectangle(8, (1.0, 1.0))
    vals = np.ones(g.shape)
    vals[0, 3] = np.nan  # hole in the Dirichlet ring
    f = gl.ScalarField(g, vals)
    with pytest.raises(gl.MissingBoundaryError):
        gl.d_z(f)
    with pytest.raises(gl.MissingBoundaryError):
        gl.laplace_zzbar(f)


# ------------------------------------------------------------------ CSV


def test_csv_round_trip_scalar(tmp_path):
    g = gl.Grid2D.rectangle((9, 7), (1.0, 0.5), (-0.25, 0.1))
    rng = np.random.default_rng(5)
    f = gl.ScalarField(g, rng.standard_normal(g.shape))
    p = tmp_path / "f.csv"
    gl.write_field_csv(p, f)
    back = gl.read_field_csv(p)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    header = p.read_text().splitlines()[0]
    assert header.startswith("# nx=9 ny=7 hx=")
    assert "boundary=dirichlet" in header


def test_csv_round_trip_complex(tmp_path):
    g = gl.Grid2D.torus(8)
    rng = np.random.default_rng(6)
    f = gl.ComplexField(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    p = tmp_path / "f.csv"
    gl.write_field_csv(p, f)
    back = gl.read_field_csv(p)
    assert np.array_equal(back.values, f.values)
    # row-major ordering: first data row is i=0, j=0
    first = p.read_text().splitlines()[1].split(",")
    assert first[0] == "0" and first[1] == "0"
