"""Gauss factorization in SL(2), path-ordered exponentials of holomorphic
connections, the Liouville solution generator and Toda residuals for
general Cartan matrices.

The generator pipeline: from holomorphic data A0 = (a(z) E + b(z) H) dz,

    g  solves dg  = A0 g,          g(0)  = 1   (holomorphic)
    g* solves dg* = conj-A0 g*,    g*(0) = 1   (antiholomorphic, E -> F)
    M(z, zbar) = g^{-1} g*

and phi = ln(a conj(a)) - 2 ln Delta1 with Delta1 the leading principal
minor M_11 (the (1,1) entry of the upper factor in the lower-unipotent *
upper ordering).  For A0 = E dz this reproduces phi = -2 ln(1 - |z|^2)
exactly.  With b = 0 the generator is nilpotent and g = 1 + W(z) E with W
the antiderivative of a, which serves as an independent closed-form
reference.

The affine (loop-group) factorization is out of scope; affine Cartan data
is supported by the residual evaluator only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .connections import E_GEN, F_GEN, H_GEN, IDENT, expm2
from .fields import ScalarField, diff_x, diff_y, laplace_zzbar

__all__ = [
    "HoloConnectionData",
    "CartanMatrix",
    "TodaReport",
    "DecompositionError",
    "RegionError",
    "gauss_decompose",
    "pexp",
    "liouville_from_holomorphic",
    "toda_residual",
    "laplace_zzbar_order4",
]


class DecompositionError(RuntimeError):
    """Gauss decomposition fails (pivot entry vanishes)."""


class RegionError(RuntimeError):
    """The construction left its validity region somewhere on the grid."""


@dataclass(frozen=True)
class HoloConnectionData:
    """Polynomial coefficients (constant term first) of a(z), b(z) in
    A0 = (a E + b H) dz."""

    a: tuple
    b: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(complex(c) for c in self.a))
        object.__setattr__(self, "b", tuple(complex(c) for c in self.b))
        if not any(c != 0 for c in self.a):
            raise ValueError("a(z) must not vanish identically")

    def a_fn(self, z):
        return _horner(self.a, z)

    def b_fn(self, z):
        return _horner(self.b, z) if self.b else np.zeros_like(np.asarray(z, complex))

    def a_antiderivative(self, z):
        cs = tuple(c / (k + 1) for k, c in enumerate(self.a))
        z = np.asarray(z, complex)
        return _horner(cs, z) * z

    @property
    def nilpotent(self):
        return not any(c != 0 for c in self.b)

    def to_json_dict(self):
        return {"a": [[c.real, c.imag] for c in self.a],
                "b": [[c.real, c.imag] for c in self.b]}

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_json_dict(cls, d):
        return cls(tuple(complex(re, im) for re, im in d["a"]),
                   tuple(complex(re, im) for re, im in d.get("b", [])))


def _horner(coeffs, z):
    z = np.asarray(z, complex)
    acc = np.zeros_like(z)
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


@dataclass(frozen=True)
class CartanMatrix:
    """r x r integer matrix with diagonal entries 2 (simple or affine)."""

    entries: tuple

    def __post_init__(self):
        m = np.asarray(self.entries, int)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("Cartan matrix must be square")
        if not np.all(np.diag(m) == 2):
            raise ValueError("Cartan matrix diagonal entries must equal 2")
        object.__setattr__(self, "entries", tuple(tuple(int(v) for v in row) for row in m))

    @property
    def matrix(self):
        return np.asarray(self.entries, int)

    @property
    def rank(self):
        return len(self.entries)

    @classmethod
    def sl2(cls):
        return cls(((2,),))

    @classmethod
    def affine_sl2(cls):
        return cls(((2, -2), (-2, 2)))


def gauss_decompose(u):
    """U = U_plus U_minus with U_plus upper triangular and U_minus lower
    unipotent (the Cartan ambiguity absorbed into U_plus).

    Requires the pivot U_22 != 0; fails otherwise, matching the fact that
    the decomposition exists near the identity only."""
    u = np.asarray(u, complex)
    d = u[1, 1]
    if abs(d) < 1e-14 * max(1.0, float(np.abs(u).max())):
        raise DecompositionError("pivot U_22 vanishes; Gauss decomposition fails")
    m = u[1, 0] / d
    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    u_plus = np.array([[det / d, u[0, 1]], [0.0, d]], complex)
    u_minus = np.array([[1.0, 0.0], [m, 1.0]], complex)
    return u_plus, u_minus


def _magnus_step(afun, s0, h, gm):
    """4th-order Magnus step for dg = A(s) g using the two-point Gauss rule;
    the exponent is trace-free whenever A is, so the determinant is
    preserved exactly."""
    c1 = 0.5 - np.sqrt(3.0) / 6.0
    c2 = 0.5 + np.sqrt(3.0) / 6.0
    a1 = afun(s0 + c1 * h)
    a2 = afun(s0 + c2 * h)
    omega = 0.5 * h * (a1 + a2)
    comm = a2 @ a1 - a1 @ a2
    omega = omega + (np.sqrt(3.0) / 12.0) * h * h * comm
    return expm2(omega) @ gm


def pexp(data, z_end, tol=1e-12, min_steps=8, max_halvings=20):
    """Path-ordered exponential g(z_end) of dg = A0 g along the straight
    segment 0 -> z_end, by adaptive 4th-order Magnus integration
    (local error controlled to `tol`)."""
    z_end = complex(z_end)
    if z_end == 0:
        return IDENT.copy()

    def afun(s):
        z = s * z_end
        return z_end * (data.a_fn(z) * E_GEN + data.b_fn(z) * H_GEN)

    def sweep(n):
        gm = IDENT.copy()
        h = 1.0 / n
        for k in range(n):
            gm = _magnus_step(afun, k * h, h, gm)
        return gm

    n = min_steps
    prev = sweep(n)
    for _ in range(max_halvings):
        n *= 2
        cur = sweep(n)
        if float(np.abs(cur - prev).max()) <= tol * max(1.0, float(np.abs(cur).max())):
            return cur
        prev = cur
    raise RuntimeError(f"pexp failed to reach tol={tol} at {n} steps")


@dataclass
class TodaReport:
    residual_sup: float
    residual_sup_order2: float
    flatness_sup: float
    det_defect: float
    delta1_min: float
    nilpotent_reference_dev: float | None = None
    notes: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "residual_sup": self.residual_sup,
            "residual_sup_order2": self.residual_sup_order2,
            "flatness_sup": self.flatness_sup,
            "det_defect": self.det_defect,
            "delta1_min": self.delta1_min,
            "nilpotent_reference_dev": self.nilpotent_reference_dev,
        }


def laplace_zzbar_order4(phi):
    """Fourth-order dz dzbar (5-point per axis / 4), as a diagnostic
    companion to the second-order production stencil; valid two layers in."""
    g = phi.grid
    v = phi.values
    out = np.full(g.shape, np.nan)
    if g.periodic:
        def sh(a, dj, di):
            return np.roll(np.roll(a, -dj, axis=0), -di, axis=1)
        dxx = (-sh(v, 0, 2) + 16 * sh(v, 0, 1) - 30 * v + 16 * sh(v, 0, -1) - sh(v, 0, -2)) / (12 * g.hx ** 2)
        dyy = (-sh(v, 2, 0) + 16 * sh(v, 1, 0) - 30 * v + 16 * sh(v, -1, 0) - sh(v, -2, 0)) / (12 * g.hy ** 2)
        out = (dxx + dyy) / 4.0
    else:
        c = v[2:-2, 2:-2]
        dxx = (-v[2:-2, 4:] + 16 * v[2:-2, 3:-1] - 30 * c + 16 * v[2:-2, 1:-3] - v[2:-2, :-4]) / (12 * g.hx ** 2)
        dyy = (-v[4:, 2:-2] + 16 * v[3:-1, 2:-2] - 30 * c + 16 * v[1:-3, 2:-2] - v[:-4, 2:-2]) / (12 * g.hy ** 2)
        out[2:-2, 2:-2] = (dxx + dyy) / 4.0
    return out


def _sweep_group_field(grid, coeff_fns, generators, conjugate=False, nsub=4):
    """Pointwise solution of dg = A0 g on the grid by Magnus sweeps from the
    node nearest the origin (the integrand is entire, so the path does not
    matter).  Vectorized along columns.

    coeff_fns: list of z -> coefficient arrays; generators: matching 2x2
    generators.  With conjugate=True the coefficients are conjugated and the
    sweep direction variable is zbar (antiholomorphic solution)."""
    xs, ys = grid.x(), grid.y()
    ny, nx = grid.shape
    zs = grid.z()
    i0 = int(np.argmin(np.abs(xs)))
    j0 = int(np.argmin(np.abs(ys)))

    def gen_at(z):
        # antiholomorphic data carries the conjugated coefficients at z
        acc = np.zeros(np.shape(z) + (2, 2), complex)
        for fn, gen in zip(coeff_fns, generators):
            c = np.conj(fn(z)) if conjugate else fn(z)
            acc = acc + np.asarray(c)[..., None, None] * gen
        return acc

    def advance(gm, z_from, z_to):
        # gm: (..., 2, 2) batch; straight segment z_from -> z_to (arrays ok)
        dz = (z_to - z_from) / nsub
        if conjugate:
            dz = np.conj(dz)
        out = gm
        c1 = 0.5 - np.sqrt(3.0) / 6.0
        c2 = 0.5 + np.sqrt(3.0) / 6.0
        for k in range(nsub):
            zm1 = z_from + ((k + c1) / nsub) * (z_to - z_from)
            zm2 = z_from + ((k + c2) / nsub) * (z_to - z_from)
            a1 = gen_at(zm1) * np.asarray(dz)[..., None, None]
            a2 = gen_at(zm2) * np.asarray(dz)[..., None, None]
            omega = 0.5 * (a1 + a2) + (np.sqrt(3.0) / 12.0) * (a2 @ a1 - a1 @ a2)
            out = expm2(omega) @ out
        return out

    gfield = np.empty((ny, nx, 2, 2), complex)
    # path 0 -> z(j0, i0) (exact node may be off origin on even grids)
    gfield[j0, i0] = advance(IDENT.copy(), 0.0 + 0.0j, zs[j0, i0])
    for i in range(i0 + 1, nx):
        gfield[j0, i] = advance(gfield[j0, i - 1], zs[j0, i - 1], zs[j0, i])
    for i in range(i0 - 1, -1, -1):
        gfield[j0, i] = advance(gfield[j0, i + 1], zs[j0, i + 1], zs[j0, i])
    row = gfield[j0].copy()
    for j in range(j0 + 1, ny):
        row = advance(row, zs[j - 1, :], zs[j, :])
        gfield[j] = row
    row = gfield[j0].copy()
    for j in range(j0 - 1, -1, -1):
        row = advance(row, zs[j + 1, :], zs[j, :])
        gfield[j] = row
    return gfield


def _inv2(m):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det[..., None, None]


def liouville_from_holomorphic(data, grid, nsub=4):
    """Generate the Liouville conformal factor from holomorphic data:

        phi = ln(a conj(a)) - 2 ln Delta1,   Delta1 = (g^{-1} g*)_11,

    verify the residual (1/2) dz dzbar phi - e^phi both with the production
    second-order stencil and a fourth-order diagnostic stencil, and check
    flatness of A = d(gg) gg^{-1} for gg = (g^{-1} g*)_minus g by finite
    differences.  Returns (phi, report).

    Raises RegionError where a(z) = 0 or Delta1 fails to stay real positive
    on the grid, and DecompositionError if the unipotent factor's pivot
    M_22 vanishes (the failing locus is reported)."""
    if grid.periodic:
        raise RegionError("the generator integrates from z = 0 on a plane chart; "
                          "use a Dirichlet grid")
    zs = grid.z()
    av = data.a_fn(zs)
    if np.abs(av).min() < 1e-13:
        jj, ii = np.unravel_index(int(np.argmin(np.abs(av))), grid.shape)
        raise RegionError(f"a(z) vanishes near grid node (i={ii}, j={jj})")

    g_h = _sweep_group_field(grid, [data.a_fn, data.b_fn], [E_GEN, H_GEN],
                             conjugate=False, nsub=nsub)
    g_a = _sweep_group_field(grid, [data.a_fn, data.b_fn], [F_GEN, H_GEN],
                             conjugate=True, nsub=nsub)
    m = _inv2(g_h) @ g_a

    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    det_defect = float(np.abs(det - 1.0).max())

    delta1 = m[..., 0, 0]
    bad = (delta1.real <= 1e-12) | (np.abs(delta1.imag) > 1e-8 * np.abs(delta1))
    if bad.any():
        jj, ii = np.nonzero(bad)
        raise RegionError("Delta1 leaves the real positive cone at nodes "
                          f"(i, j) = {list(zip(ii.tolist(), jj.tolist()))[:8]} ...")
    piv = np.abs(m[..., 1, 1])
    if piv.min() < 1e-12:
        jj, ii = np.unravel_index(int(np.argmin(piv)), grid.shape)
        raise DecompositionError(f"Gauss pivot M_22 vanishes near node (i={ii}, j={jj})")

    phi_vals = np.log(np.abs(av) ** 2) - 2.0 * np.log(delta1.real)
    phi = ScalarField(grid, phi_vals)

    # residuals of the Liouville equation
    interior = grid.interior_mask()
    r2 = 0.5 * laplace_zzbar(phi).values - np.exp(phi_vals)
    residual_sup_order2 = float(np.abs(r2[interior]).max())
    lap4 = laplace_zzbar_order4(phi)
    inner = np.isfinite(lap4)
    r4 = 0.5 * lap4[inner] - np.exp(phi_vals[inner])
    residual_sup = float(np.abs(r4).max())

    # flatness of A = d(gg) gg^{-1} with gg = M_minus g
    mm = np.zeros_like(m)
    mm[..., 0, 0] = 1.0
    mm[..., 1, 1] = 1.0
    mm[..., 1, 0] = m[..., 1, 0] / m[..., 1, 1]
    gg = mm @ g_h
    gg_inv = _inv2(gg)
    ax = diff_x(grid, gg) @ gg_inv
    ay = diff_y(grid, gg) @ gg_inv
    # right-invariant form d(gg) gg^{-1}: zero curvature reads dA - A^A = 0
    f_xy = diff_x(grid, ay) - diff_y(grid, ax) - (ax @ ay - ay @ ax)
    inner2 = np.zeros(grid.shape, bool)
    inner2[2:-2, 2:-2] = True
    flatness_sup = float(np.abs(f_xy[inner2]).max())

    ref_dev = None
    if data.nilpotent:
        w = data.a_antiderivative(zs)
        phi_ref = np.log(np.abs(av) ** 2) - 2.0 * np.log(1.0 - np.abs(w) ** 2)
        ref_dev = float(np.abs(phi_vals - phi_ref).max())

    report = TodaReport(residual_sup, residual_sup_order2, flatness_sup,
                        det_defect, float(delta1.real.min()),
                        nilpotent_reference_dev=ref_dev)
    return phi, report


def toda_residual(phis, cartan):
    """r_alpha = dz dzbar phi_alpha - sum_beta C_ab e^{phi_beta} (note: no
    1/2; the sl(2) row C = [2] reproduces (1/2) dz dzbar phi = e^phi)."""
    c = cartan.matrix if isinstance(cartan, CartanMatrix) else CartanMatrix(tuple(map(tuple, cartan))).matrix
    if len(phis) != c.shape[0]:
        raise ValueError(f"{len(phis)} fields for a rank-{c.shape[0]} Cartan matrix")
    grid = phis[0].grid
    for p in phis:
        if p.grid.shape != grid.shape:
            raise ValueError("all fields must share one grid")
    interior = grid.interior_mask()
    exps = [np.exp(p.values) for p in phis]
    out = []
    for alpha in range(c.shape[0]):
        lap = laplace_zzbar(phis[alpha]).values
        src = sum(int(c[alpha, beta]) * exps[beta] for beta in range(c.shape[0]))
        out.append(ScalarField(grid, np.where(interior, lap - src, 0.0)))
    return out
