"""Spectral-parameter families of flat connections built from (phi, t),
their pointwise identity checks, monodromy and developing maps.

A family stores the Laurent coefficients of the dz and dzbar parts
separately: evaluation at lam gives

    A_z(lam)    = az_m1 / lam + az_0 + lam * az_p1
    A_zbar(lam) = azb_m1 / lam + azb_0 + lam * azb_p1

Built families (tags "cosh", "sg1", "sg2") populate az_p1 (nilpotent,
proportional to E) and azb_m1 (proportional to F); the remaining
non-constant coefficients are zero, which is why the lam^{+-2} parts of
the curvature vanish identically.

Parallel transport follows dg = g A, so a path-ordered product reads
left-to-right in traversal order: M = exp(A_1 d_1) ... exp(A_N d_N).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .fields import ComplexField, ScalarField, d_z, d_zbar, diff_x, diff_y
from .solver import EquationVariant, residual

__all__ = [
    "ConnectionFamily",
    "MonodromyResult",
    "GaugePreconditionError",
    "RefinementError",
    "StepUnderflowError",
    "build_family",
    "curvature",
    "flatness_coefficients",
    "lambda_flatness_sweep",
    "reality_check",
    "degeneracy_check",
    "su11_check",
    "monodromy",
    "developing_map",
    "extract_normal_form",
    "gauge_transform_u1",
    "expm2",
]

E_GEN = np.array([[0.0, 1.0], [0.0, 0.0]], complex)
F_GEN = np.array([[0.0, 0.0], [1.0, 0.0]], complex)
H_GEN = np.array([[1.0, 0.0], [0.0, -1.0]], complex)
C_CONJ = np.array([[1.0, 0.0], [0.0, -1.0]], complex)
IDENT = np.eye(2, dtype=complex)


class GaugePreconditionError(ValueError):
    pass


class RefinementError(RuntimeError):
    pass


class StepUnderflowError(RuntimeError):
    pass


def expm2(x):
    """Matrix exponential of (..., 2, 2) arrays in closed form.

    Splits off the trace and uses X0^2 = -det(X0) I for the trace-free part:
    exp(X0) = cosh(mu) I + sinh(mu)/mu X0 with mu^2 = -det X0.
    """
    x = np.asarray(x, complex)
    tr2 = 0.5 * (x[..., 0, 0] + x[..., 1, 1])
    x0 = x - tr2[..., None, None] * IDENT
    mu2 = -(x0[..., 0, 0] * x0[..., 1, 1] - x0[..., 0, 1] * x0[..., 1, 0])
    mu = np.sqrt(mu2.astype(complex))
    small = np.abs(mu) < 1e-6
    mu_safe = np.where(small, 1.0, mu)
    ch = np.where(small, 1.0 + mu2 / 2.0 + mu2 ** 2 / 24.0, np.cosh(mu_safe))
    shc = np.where(small, 1.0 + mu2 / 6.0 + mu2 ** 2 / 120.0,
                   np.sinh(mu_safe) / mu_safe)
    out = ch[..., None, None] * IDENT + shc[..., None, None] * x0
    return np.exp(tr2)[..., None, None] * out


def _commutator(a, b):
    return a @ b - b @ a


_POWERS = (-1, 0, 1)


@dataclass
class ConnectionFamily:
    """Per-point 2x2 trace-free Laurent coefficients of a lam-family."""

    grid: object
    tag: str
    az: dict = field(default_factory=dict)   # power -> (ny, nx, 2, 2)
    azb: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = self.grid.shape + (2, 2)
        for table in (self.az, self.azb):
            for p in _POWERS:
                if p not in table:
                    table[p] = np.zeros(shape, complex)
                else:
                    table[p] = np.asarray(table[p], complex)
                    if table[p].shape != shape:
                        raise ValueError(f"coefficient shape {table[p].shape} != {shape}")

    @property
    def involution_sign(self):
        """Sign sigma in the reality involution lam -> sigma / conj(lam):
        -1 for the cosh family, +1 for the sg families."""
        return self.meta.get("involution_sign", -1.0 if self.tag == "cosh" else 1.0)

    def at(self, lam):
        lam = complex(lam)
        if lam == 0:
            raise ValueError("lam = 0 is outside the family's domain C*")
        az = self.az[-1] / lam + self.az[0] + lam * self.az[1]
        azb = self.azb[-1] / lam + self.azb[0] + lam * self.azb[1]
        return az, azb

    def sample(self, lam, x, y):
        """Bilinear interpolation of (A_z(lam), A_zbar(lam)) at a chart point."""
        az, azb = self.at(lam)
        return _bilinear(self.grid, az, x, y), _bilinear(self.grid, azb, x, y)

    def copy(self):
        return ConnectionFamily(self.grid, self.tag,
                                {p: self.az[p].copy() for p in _POWERS},
                                {p: self.azb[p].copy() for p in _POWERS},
                                dict(self.meta))


def _bilinear(grid, arr, x, y):
    fx = (x - grid.origin[0]) / grid.hx
    fy = (y - grid.origin[1]) / grid.hy
    if grid.periodic:
        i0 = int(np.floor(fx))
        j0 = int(np.floor(fy))
        wx, wy = fx - i0, fy - j0
        i0 %= grid.nx
        j0 %= grid.ny
        i1 = (i0 + 1) % grid.nx
        j1 = (j0 + 1) % grid.ny
    else:
        i0 = int(np.clip(np.floor(fx), 0, grid.nx - 2))
        j0 = int(np.clip(np.floor(fy), 0, grid.ny - 2))
        wx, wy = fx - i0, fy - j0
        i1, j1 = i0 + 1, j0 + 1
    return ((1 - wx) * (1 - wy) * arr[j0, i0] + wx * (1 - wy) * arr[j0, i1]
            + (1 - wx) * wy * arr[j1, i0] + wx * wy * arr[j1, i1])


def build_family(phi, t, tag):
    """Connection family of a (phi, t) pair.

    tag "cosh":
        A_z(lam)    = [[-dphi/4, lam t e^{-phi/2}], [e^{phi/2},  dphi/4]]
        A_zbar(lam) = [[dbphi/4, e^{phi/2}], [-t~ e^{-phi/2}/lam, -dbphi/4]]
    tags "sg1"/"sg2" replace the t entries by -i lam t e^{-phi/2} and
    +i t~ e^{-phi/2}/lam, with "sg2" flipping the lam^0 part's sign.
    """
    if tag not in ("cosh", "sg1", "sg2"):
        raise ValueError(f"unknown family tag {tag!r}")
    grid = phi.grid
    p = d_z(phi).values
    pb = d_zbar(phi).values
    es = np.exp(0.5 * phi.values)
    em = np.exp(-0.5 * phi.values)
    if isinstance(t, (ComplexField, ScalarField)):
        tv = np.asarray(t.values, complex)
    elif hasattr(t, "evaluate"):
        tv = t.evaluate(grid).values
    else:
        tv = np.full(grid.shape, complex(t))

    zero = np.zeros(grid.shape, complex)
    sgn = -1.0 if tag == "sg2" else 1.0
    unit = 1.0 if tag == "cosh" else -1.0j        # lam t e^{-phi/2} factor
    unit_bar = -1.0 if tag == "cosh" else 1.0j    # t~ e^{-phi/2}/lam factor

    az0 = np.empty(grid.shape + (2, 2), complex)
    az0[..., 0, 0] = -sgn * 0.25 * p
    az0[..., 0, 1] = zero
    az0[..., 1, 0] = sgn * es
    az0[..., 1, 1] = sgn * 0.25 * p

    az1 = np.zeros(grid.shape + (2, 2), complex)
    az1[..., 0, 1] = unit * tv * em

    azb0 = np.empty(grid.shape + (2, 2), complex)
    azb0[..., 0, 0] = sgn * 0.25 * pb
    azb0[..., 0, 1] = sgn * es
    azb0[..., 1, 0] = zero
    azb0[..., 1, 1] = -sgn * 0.25 * pb

    azbm1 = np.zeros(grid.shape + (2, 2), complex)
    azbm1[..., 1, 0] = unit_bar * np.conj(tv) * em

    return ConnectionFamily(grid, tag, {0: az0, 1: az1}, {0: azb0, -1: azbm1},
                            meta={"variant": "cosh" if tag == "cosh" else "sinh"})


# --------------------------------------------------------------------------
# curvature and the pointwise identity checks


def _dz_matrix(grid, arr):
    return 0.5 * (diff_x(grid, arr) - 1j * diff_y(grid, arr))


def _dzbar_matrix(grid, arr):
    return 0.5 * (diff_x(grid, arr) + 1j * diff_y(grid, arr))


def curvature(fam, lam):
    """Discrete F = dz A_zbar(lam) - dzbar A_z(lam) + [A_z(lam), A_zbar(lam)]
    (the dz^dzbar coefficient), per point."""
    az, azb = fam.at(lam)
    return (_dz_matrix(fam.grid, azb) - _dzbar_matrix(fam.grid, az)
            + _commutator(az, azb))


def flatness_coefficients(fam):
    """Laurent coefficients F_p, p = -2..2, of the curvature in lam."""
    g = fam.grid
    out = {}
    out[-2] = _commutator(fam.az[-1], fam.azb[-1])
    out[2] = _commutator(fam.az[1], fam.azb[1])
    for p in _POWERS:
        acc = _dz_matrix(g, fam.azb[p]) - _dzbar_matrix(g, fam.az[p])
        for q in _POWERS:
            r = p - q
            if r in _POWERS:
                acc = acc + _commutator(fam.az[q], fam.azb[r])
        out[p] = acc
    return out


def _mat_sup(arr, mask=None):
    a = np.abs(arr)
    if mask is not None:
        a = a[mask]
    return float(a.max())


def lambda_flatness_sweep(fam, lambdas):
    """Curvature sup-norm at each sample lam plus the sup-norm of each
    Laurent coefficient of the curvature.  On Dirichlet grids the sup runs
    over the core (two layers in), where stencil compositions keep clean
    second-order error constants."""
    mask = fam.grid.core_mask(2)
    coeffs = flatness_coefficients(fam)
    return {
        "lambda_sup": {str(lam): _mat_sup(curvature(fam, lam), mask) for lam in lambdas},
        "coefficient_sup": {p: _mat_sup(c, mask) for p, c in coeffs.items()},
    }


def _pseudo_conj(arr):
    """X -> C X^+ C with C = diag(1, -1)."""
    xc = np.conj(np.swapaxes(arr, -1, -2))
    out = xc.copy()
    out[..., 0, 1] = -xc[..., 0, 1]
    out[..., 1, 0] = -xc[..., 1, 0]
    return out


def reality_check(fam, lam):
    """Sup defect of the pseudo-Hermitian reality identity

        C A_z(mu)^+ C + A_zbar(lam) = 0,   C A_zbar(mu)^+ C + A_z(lam) = 0,

    with mu = sigma / conj(lam); sigma = -1 for cosh, +1 for sg families.
    Identically zero (to rounding) for families built from real phi."""
    lam = complex(lam)
    if lam == 0:
        raise ValueError("lam = 0 rejected")
    mu = fam.involution_sign / np.conj(lam)
    az_l, azb_l = fam.at(lam)
    az_m, azb_m = fam.at(mu)
    d1 = _mat_sup(_pseudo_conj(az_m) + azb_l)
    d2 = _mat_sup(_pseudo_conj(azb_m) + az_l)
    return max(d1, d2)


def degeneracy_check(fam):
    """Determinants of the non-constant Laurent coefficients (the components
    of the 1-forms Phi and its conjugate) and the commutator of the real
    coordinate components of each."""
    def det2(a):
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]

    dets = {
        "az_m1": _mat_sup(det2(fam.az[-1])),
        "az_p1": _mat_sup(det2(fam.az[1])),
        "azb_m1": _mat_sup(det2(fam.azb[-1])),
        "azb_p1": _mat_sup(det2(fam.azb[1])),
    }
    comm = 0.0
    for p in (-1, 1):
        phi_x = fam.az[p] + fam.azb[p]
        phi_y = 1j * (fam.az[p] - fam.azb[p])
        comm = max(comm, _mat_sup(_commutator(phi_x, phi_y)))
    return {"max_abs_det": max(dets.values()), "per_component": dets,
            "commutator_sup": comm}


def su11_check(fam, lam=1.0):
    """Pointwise su(1,1) defect max ||A^+ J + J A|| for the real tangent
    evaluations A_x = A_z + A_zbar and A_y = i (A_z - A_zbar) at lam.

    The sg families are su(1,1)-valued at lam = 1; the cosh family is not
    (useful as a negative control)."""
    az, azb = fam.at(lam)
    defect = 0.0
    for a in (az + azb, 1j * (az - azb)):
        adjj = np.conj(np.swapaxes(a, -1, -2)) @ H_GEN + H_GEN @ a
        defect = max(defect, _mat_sup(adjj))
    return defect


def gauge_transform_u1(fam, psi):
    """Gauge change by the constant diagonal unitary h = diag(e^{i psi},
    e^{-i psi}): off-diagonal entries pick up e^{-+2i psi} phases."""
    out = fam.copy()
    ph = np.exp(-2j * psi)
    for table in (out.az, out.azb):
        for p in _POWERS:
            table[p][..., 0, 1] *= ph
            table[p][..., 1, 0] *= np.conj(ph)
    return out


# --------------------------------------------------------------------------
# transport


@dataclass
class MonodromyResult:
    matrix: np.ndarray
    loop: list
    lam: complex
    steps: int
    error_estimate: float

    @property
    def det_defect(self):
        d = self.matrix[0, 0] * self.matrix[1, 1] - self.matrix[0, 1] * self.matrix[1, 0]
        return float(abs(d - 1.0))

    def to_json_dict(self):
        return {
            "loop": [[float(vx), float(vy)] for vx, vy in self.loop],
            "lambda": [self.lam.real, self.lam.imag],
            "matrix": [[z.real, z.imag] for z in self.matrix.ravel()],
            "det_defect": self.det_defect,
            "steps": self.steps,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True) + "\n"


def _transport_once(fam, lam, vertices, steps_per_segment):
    az, azb = fam.at(lam)
    g = fam.grid
    m = IDENT.copy()
    total = 0
    for (x0, y0), (x1, y1) in zip(vertices[:-1], vertices[1:]):
        seg = np.hypot(x1 - x0, y1 - y0)
        if seg == 0.0:
            continue
        n = max(1, int(np.ceil(steps_per_segment * seg / max(g.hx, g.hy))))
        ts = (np.arange(n) + 0.5) / n
        dx, dy = (x1 - x0) / n, (y1 - y0) / n
        dz = dx + 1j * dy
        dzb = dx - 1j * dy
        for s in ts:
            xm, ym = x0 + s * (x1 - x0), y0 + s * (y1 - y0)
            a = _bilinear(g, az, xm, ym) * dz + _bilinear(g, azb, xm, ym) * dzb
            m = m @ expm2(a)
            total += 1
    return m, total


def monodromy(fam, lam, loop, tol=1e-9, max_refine=10):
    """Path-ordered transport along a closed polyline, given as its full
    vertex list (repeat the first vertex to close a contractible loop; on a
    periodic grid a cycle such as (0, y) -> (Lx, y) is already closed by
    periodicity and must not be retraced).

    The product accumulates left-to-right in traversal order (convention
    dg = g A).  Segments are refined (doubling the midpoint count) until
    two consecutive results differ by less than tol entrywise.
    """
    vertices = [tuple(map(float, v)) for v in loop]
    if len(vertices) < 2 or all(v == vertices[0] for v in vertices):
        return MonodromyResult(IDENT.copy(), vertices, complex(lam), 0, 0.0)
    steps = 1.0
    prev, total = _transport_once(fam, lam, vertices, steps)
    for _ in range(max_refine):
        steps *= 2.0
        cur, total = _transport_once(fam, lam, vertices, steps)
        err = float(np.abs(cur - prev).max())
        if err < tol:
            return MonodromyResult(cur, vertices, complex(lam), total, err)
        prev = cur
    raise RefinementError(f"monodromy refinement did not reach tol={tol}; last change {err:.3e}")


def developing_map(fam, lam, base, path, tol=1e-12, min_step=1e-10):
    """Solve dg = g A along a polyline by classical RK4 with step-doubling
    control; g(base) = identity.  The path must start at `base` and stay in
    a simply connected region of the chart."""
    az, azb = fam.at(lam)
    g = fam.grid
    vertices = [tuple(map(float, base))] + [tuple(map(float, v)) for v in path]

    def a_eval(x, y, ux, uy):
        dz = ux + 1j * uy
        dzb = ux - 1j * uy
        return _bilinear(g, az, x, y) * dz + _bilinear(g, azb, x, y) * dzb

    gm = IDENT.copy()
    for (x0, y0), (x1, y1) in zip(vertices[:-1], vertices[1:]):
        seg = np.hypot(x1 - x0, y1 - y0)
        if seg == 0.0:
            continue
        ux, uy = (x1 - x0) / seg, (y1 - y0) / seg

        def rk4(m, s, h):
            def f(mm, ss):
                return mm @ a_eval(x0 + ss * ux, y0 + ss * uy, ux, uy)
            k1 = f(m, s)
            k2 = f(m + 0.5 * h * k1, s + 0.5 * h)
            k3 = f(m + 0.5 * h * k2, s + 0.5 * h)
            k4 = f(m + h * k3, s + h)
            return m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

        s = 0.0
        h = min(seg, max(g.hx, g.hy))
        while s < seg - 1e-15:
            h = min(h, seg - s)
            if h < min_step:
                raise StepUnderflowError(f"step size underflow at s={s}")
            full = rk4(gm, s, h)
            half = rk4(rk4(gm, s, 0.5 * h), s + 0.5 * h, 0.5 * h)
            err = float(np.abs(full - half).max()) / 15.0
            scale = max(1.0, float(np.abs(half).max()))
            if err <= tol * scale:
                gm = (16.0 * half - full) / 15.0
                s += h
                if err < 0.1 * tol * scale:
                    h *= 2.0
            else:
                h *= 0.5
    return gm


# --------------------------------------------------------------------------
# normal-form extraction from generic-gauge data


def extract_normal_form(a, f, h):
    """Recover (t, phi) from generic-gauge data (a, f, h) with f real > 0:
    t = a f and phi = 2 ln f.

    Returns (t, phi, report); the report carries the discrete defects of
    holomorphy of t, the cosh residual of phi, and the five reduced
    flatness relations the gauge data must satisfy.
    """
    grid = a.grid
    fv = f.values
    if np.iscomplexobj(fv):
        if np.abs(fv.imag).max() > 1e-12 * max(1.0, np.abs(fv.real).max()):
            raise GaugePreconditionError("f must be real")
        fv = fv.real
    if fv.min() <= 0.0:
        raise GaugePreconditionError("f must be strictly positive (gauge choice f real > 0)")

    av = a.values
    hv = h.values
    tv = av * fv
    phi = ScalarField(grid, 2.0 * np.log(fv))
    t = ComplexField(grid, tv)

    mask = grid.core_mask(2)
    af = ComplexField(grid, av)
    ff = ComplexField(grid, fv.astype(complex))
    hf = ComplexField(grid, hv)
    hb = np.conj(hv)
    eqs = {
        "dzbar_a": d_zbar(af).values - 2.0 * hb * av,
        "dz_abar": d_z(ComplexField(grid, np.conj(av))).values - 2.0 * hv * np.conj(av),
        "dzbar_f": d_zbar(ff).values + 2.0 * hb * fv,
        "dz_fbar": d_z(ComplexField(grid, np.conj(fv.astype(complex)))).values + 2.0 * hv * fv,
        "dh_sum": (d_z(ComplexField(grid, hb)).values + d_zbar(hf).values
                   + (np.abs(av) ** 2 + fv ** 2)),
    }
    report = {k: float(np.abs(v[mask]).max()) for k, v in eqs.items()}
    report["dzbar_t"] = float(np.abs(d_zbar(t).values[mask]).max())
    report["residual_sup"] = residual(phi, t, EquationVariant.COSH).sup(mask)
    return t, phi, report
