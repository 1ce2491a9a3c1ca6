"""Residuals, damped Newton solver and certification checks for the
cosh-Gordon / sinh-Gordon / Liouville equations.

The residual convention is

    r(phi) = (1/2) dz dzbar phi - e^phi - s |t|^2 e^{-phi}

with s = +1 (cosh), s = -1 (sinh) and s = 0, t ignored (liouville).
The linearization is the exact Frechet derivative

    J(delta) = (1/2) dz dzbar delta - (e^phi - s |t|^2 e^{-phi}) delta.

On a periodic grid the discrete integral of dz dzbar phi vanishes
identically, so the cosh equation has no solution there: the solver
refuses with an obstruction instead of iterating.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse.linalg import eigsh, spsolve, cg

from .fields import (
    ComplexField,
    Grid2D,
    QuadraticDifferential,
    ScalarField,
    laplace_zzbar,
)

__all__ = [
    "EquationVariant",
    "SolveReport",
    "ObstructionError",
    "NoConvergenceError",
    "SingularJacobianError",
    "ShootingError",
    "residual",
    "linearized_operator",
    "newton_solve",
    "obstruction_check",
    "inequality_check",
    "isolation_check",
    "gauss_bonnet_bound",
    "strip_ode_oracle",
    "StripProfile",
    "default_initial_guess",
]

DIRECT_SOLVE_LIMIT = 100_000  # unknowns; above this fall back to Krylov


class EquationVariant(str, Enum):
    COSH = "cosh"
    SINH = "sinh"
    LIOUVILLE = "liouville"

    @property
    def source_sign(self):
        return {"cosh": 1.0, "sinh": -1.0, "liouville": 0.0}[self.value]


class ObstructionError(RuntimeError):
    pass


class NoConvergenceError(RuntimeError):
    pass


class SingularJacobianError(RuntimeError):
    pass


class ShootingError(RuntimeError):
    pass


def t_values(t, grid):
    """Pointwise |t| samples from a QuadraticDifferential, field, scalar or None."""
    if t is None:
        return np.zeros(grid.shape)
    if isinstance(t, QuadraticDifferential):
        return np.abs(t.evaluate(grid).values)
    if isinstance(t, (ComplexField, ScalarField)):
        return np.abs(t.values)
    return np.full(grid.shape, abs(complex(t)))


def _source_terms(phi, t, variant):
    s = variant.source_sign
    ephi = np.exp(phi.values)
    if s == 0.0:
        return ephi, np.zeros_like(ephi)
    tt = t_values(t, phi.grid) ** 2
    return ephi, s * tt * np.exp(-phi.values)


def residual(phi, t, variant):
    """r = (1/2) dz dzbar phi - e^phi - s|t|^2 e^{-phi}; zero on the
    Dirichlet boundary ring (the equation lives at interior points)."""
    if not np.all(np.isfinite(phi.values)):
        raise ValueError("residual: phi contains non-finite values")
    ephi, tterm = _source_terms(phi, t, variant)
    lap = laplace_zzbar(phi).values
    r = 0.5 * lap - ephi - tterm
    interior = phi.grid.interior_mask()
    return ScalarField(phi.grid, np.where(interior, r, 0.0))


def _weight(phi, t, variant):
    """W = e^phi - s|t|^2 e^{-phi}; -J = -(1/2) dz dzbar + W."""
    ephi, tterm = _source_terms(phi, t, variant)
    return ephi - tterm


def _zzbar_matrix_periodic(grid):
    nx, ny = grid.nx, grid.ny
    ex = np.ones(nx)
    ey = np.ones(ny)
    dxx = sp.diags([ex, -2 * ex, ex], [-1, 0, 1], (nx, nx)).tolil()
    dxx[0, -1] = 1.0
    dxx[-1, 0] = 1.0
    dyy = sp.diags([ey, -2 * ey, ey], [-1, 0, 1], (ny, ny)).tolil()
    dyy[0, -1] = 1.0
    dyy[-1, 0] = 1.0
    lap = (sp.kron(sp.eye(ny), dxx.tocsr()) / grid.hx ** 2
           + sp.kron(dyy.tocsr(), sp.eye(nx)) / grid.hy ** 2)
    return (lap / 4.0).tocsr()


def _zzbar_matrix_interior(grid):
    """dz dzbar over interior unknowns of a Dirichlet grid (boundary columns
    dropped; their contribution enters through the residual)."""
    ny, nx = grid.shape
    interior = grid.interior_mask()
    idx = -np.ones(grid.shape, int)
    idx[interior] = np.arange(interior.sum())
    jj, ii = np.nonzero(interior)
    rows, cols, vals = [], [], []
    for dj, di, w in ((0, 1, 1 / grid.hx ** 2), (0, -1, 1 / grid.hx ** 2),
                      (1, 0, 1 / grid.hy ** 2), (-1, 0, 1 / grid.hy ** 2),
                      (0, 0, -2 / grid.hx ** 2 - 2 / grid.hy ** 2)):
        nj, ni = jj + dj, ii + di
        ok = interior[nj, ni]
        rows.append(idx[jj[ok], ii[ok]])
        cols.append(idx[nj[ok], ni[ok]])
        vals.append(np.full(int(ok.sum()), w))
    m = int(interior.sum())
    mat = sp.csr_matrix((np.concatenate(vals),
                         (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    return (mat / 4.0).tocsr(), interior, idx


class LinearizedOperator:
    """Sparse symmetric J(delta) = (1/2) dz dzbar delta - W delta over the
    grid's interior unknowns."""

    def __init__(self, phi, t, variant):
        grid = phi.grid
        self.grid = grid
        w = _weight(phi, t, variant)
        if grid.periodic:
            self.interior = grid.interior_mask()
            self.matrix = (0.5 * _zzbar_matrix_periodic(grid)
                           - sp.diags(w.ravel(order="C"))).tocsr()
        else:
            zz, interior, idx = _zzbar_matrix_interior(grid)
            self.interior = interior
            self._idx = idx
            self.matrix = (0.5 * zz - sp.diags(w[interior])).tocsr()

    def apply(self, delta):
        """Apply J to a full (ny, nx) array (Dirichlet: delta = 0 on the ring)."""
        grid = self.grid
        if grid.periodic:
            out = self.matrix @ delta.ravel(order="C")
            return out.reshape(grid.shape)
        out = np.zeros(grid.shape)
        out[self.interior] = self.matrix @ delta[self.interior]
        return out


def linearized_operator(phi, t, variant):
    return LinearizedOperator(phi, t, variant)


@dataclass
class SolveReport:
    """Outcome of a Newton solve plus the certification flags."""

    phi: ScalarField | None
    status: str
    iterations: int
    residual_sup: float
    residual_history: list = field(default_factory=list)
    eigen_min: float | None = None
    inequality_ok: bool | None = None
    obstruction: bool = False
    message: str = ""

    @property
    def converged(self):
        return self.status == "converged"

    def to_json_dict(self):
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual_sup": self.residual_sup,
            "eigen_min": self.eigen_min,
            "inequality_ok": self.inequality_ok,
            "obstruction": self.obstruction,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def obstruction_check(t, grid, variant):
    """Feasibility of the equation on this grid.

    Periodic + cosh/liouville: integrate(r) = -integrate(e^phi + |t|^2 e^{-phi})
    is strictly negative for every phi, so no solution exists.
    Returns (status, reason) with status in
    {"feasible", "infeasible", "not-applicable"}.
    """
    if not grid.periodic:
        return "not-applicable", None
    if variant in (EquationVariant.COSH, EquationVariant.LIOUVILLE):
        return ("infeasible",
                "on a periodic grid the discrete integral of dz dzbar phi vanishes "
                "identically while integrate(e^phi + |t|^2 e^{-phi}) > 0, so the "
                "residual has strictly negative mean for every phi")
    return "feasible", None


def inequality_check(phi, t):
    """Pointwise strict test e^phi > |t|^2 e^{-phi}, i.e. phi > ln|t|.

    Returns (holds, failing_points) with failing_points a list of (i, j)."""
    tv = t_values(t, phi.grid)
    with np.errstate(divide="ignore"):
        bound = np.where(tv > 0, np.log(np.where(tv > 0, tv, 1.0)), -np.inf)
    fails = ~(phi.values > bound)
    jj, ii = np.nonzero(fails)
    return bool(not fails.any()), list(zip(ii.tolist(), jj.tolist()))


def isolation_check(phi, t, variant, tol=0.0):
    """Smallest eigenvalue of -J by shift-invert Lanczos.

    Positive value certifies the solution is isolated; a value at zero
    (within `tol`, default eigensolver accuracy) is flagged degenerate,
    which can occur when e^phi = |t|^2 e^{-phi} pointwise.
    Returns (eigen_min, degenerate_flag).
    """
    op = linearized_operator(phi, t, variant)
    a = (-op.matrix).tocsc()
    scale = max(1.0, abs(a.diagonal()).max())
    sigma = -1e-6 * scale
    vals = eigsh(a, k=1, sigma=sigma, which="LM", return_eigenvectors=False)
    eig = float(vals[0])
    degenerate = eig <= max(tol, 1e-10 * scale)
    return eig, degenerate


def gauss_bonnet_bound(chi, t, grid):
    """Compare -pi*chi against integrate(|t|); returns (satisfiable, lhs, rhs)."""
    tv = ScalarField(grid, t_values(t, grid))
    rhs = float(np.sum(tv.values.ravel(order="C")) * grid.cell_area)
    lhs = -np.pi * chi
    return bool(lhs >= rhs), lhs, rhs


def default_initial_guess(grid, t):
    """phi0 = ln max(|t|, 0.1) pointwise."""
    tv = np.maximum(t_values(t, grid), 0.1)
    return ScalarField(grid, np.log(tv))


def _linear_solve(mat, rhs):
    n = mat.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        try:
            sol = spsolve(mat.tocsc(), rhs)
        except RuntimeError as exc:  # pragma: no cover - SuperLU failure path
            raise SingularJacobianError(str(exc)) from exc
        if not np.all(np.isfinite(sol)):
            raise SingularJacobianError("direct solve returned non-finite update")
        return sol
    # symmetric negative definite system: solve -J x = -rhs by CG
    diag = -mat.diagonal()
    m = sp.diags(1.0 / np.where(diag > 0, diag, 1.0))
    sol, info = cg(-mat, -rhs, M=m, rtol=1e-12, atol=0.0, maxiter=2000)
    if info != 0:
        raise SingularJacobianError(f"CG failed to converge (info={info})")
    return sol


def newton_solve(phi0, t, variant, tol=1e-10, max_iter=40, damping_floor=1e-4,
                 compute_eigen=True):
    """Damped Newton iteration on the full nonlinear residual.

    phi0 supplies the initial guess and, on Dirichlet grids, the fixed
    boundary values.  Backtracking halves the step while the sup-norm of
    the residual fails to decrease, down to `damping_floor`.

    Raises ObstructionError for cosh/liouville on periodic grids.
    """
    grid = phi0.grid
    if t is not None and isinstance(t, QuadraticDifferential):
        t.admissible_on(grid)
    status, reason = obstruction_check(t, grid, variant)
    if status == "infeasible":
        raise ObstructionError(reason)

    interior = grid.interior_mask()
    phi = phi0.copy()
    history = []
    r = residual(phi, t, variant)
    rnorm = r.sup(interior)
    history.append(rnorm)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if rnorm <= tol:
            iterations -= 1
            break
        op = linearized_operator(phi, t, variant)
        rhs = -r.values[interior] if not grid.periodic else -r.values.ravel(order="C")
        delta = _linear_solve(op.matrix, rhs)
        alpha = 1.0
        accepted = False
        while alpha >= damping_floor:
            trial = phi.copy()
            if grid.periodic:
                trial.values += alpha * delta.reshape(grid.shape)
            else:
                trial.values[interior] += alpha * delta
            r_trial = residual(trial, t, variant)
            rn_trial = r_trial.sup(interior)
            if rn_trial < rnorm:
                phi, r, rnorm = trial, r_trial, rn_trial
                accepted = True
                break
            alpha *= 0.5
        history.append(rnorm)
        if not accepted:
            return SolveReport(phi, "no_convergence", iterations, rnorm, history,
                               message="line search stalled at the damping floor")
    else:
        return SolveReport(phi, "no_convergence", iterations, rnorm, history,
                           message=f"residual {rnorm:.3e} > tol after {max_iter} iterations")

    ineq_ok, _ = inequality_check(phi, t)
    eig = None
    if compute_eigen:
        eig, _ = isolation_check(phi, t, variant)
    return SolveReport(phi, "converged", iterations, rnorm, history,
                       eigen_min=eig, inequality_ok=ineq_ok)


# --------------------------------------------------------------------------
# 1-D strip oracle:  y-independent reduction  phi'' = 8 (e^phi + |t|^2 e^{-phi})


@dataclass
class StripProfile:
    xs: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    slope0: float

    def __call__(self, x):
        return np.interp(x, self.xs, self.phi)


def strip_ode_oracle(t_const, length, bc=(0.0, 0.0), n_points=2001,
                     rtol=1e-12, atol=1e-13):
    """Shooting solution of the two-point problem

        phi'' = 8 (e^phi + |t|^2 e^{-phi}),  phi(0) = bc[0], phi(L) = bc[1]

    by bracketed root finding on the initial slope; the integrator is
    high-order adaptive (DOP853).  Requires |t| > 0.
    Returns a StripProfile sampled on n_points uniform abscissae that also
    interpolates (used to manufacture Dirichlet data for 2-D strip tests).
    """
    tt = abs(complex(t_const)) ** 2
    if tt == 0.0:
        raise ValueError("strip oracle requires |t| > 0")
    a, b = bc
    big = 50.0

    def rhs(_x, y):
        return [y[1], 8.0 * (np.exp(y[0]) + tt * np.exp(-y[0]))]

    def blowup(_x, y):
        return abs(y[0]) - big
    blowup.terminal = True

    def end_value(slope):
        sol = solve_ivp(rhs, (0.0, length), [a, slope], rtol=rtol, atol=atol,
                        events=blowup, dense_output=False, method="DOP853")
        if sol.t[-1] < length:
            # blew up before reaching L: signed overshoot by last value
            return np.sign(sol.y[0, -1]) * np.inf
        return sol.y[0, -1] - b

    # convexity makes end_value increasing in the slope; expand a bracket
    lo, hi = -1.0, 1.0
    flo, fhi = end_value(lo), end_value(hi)
    for _ in range(80):
        if np.isfinite(flo) and flo <= 0:
            break
        lo *= 2.0
        flo = end_value(lo)
    else:
        raise ShootingError("could not bracket the shooting slope from below")
    for _ in range(80):
        if fhi >= 0:
            break
        hi *= 2.0
        fhi = end_value(hi)
    else:
        raise ShootingError("could not bracket the shooting slope from above")

    def finite_end(slope):
        v = end_value(slope)
        return np.clip(v, -1e12, 1e12) if np.isfinite(v) else np.sign(v) * 1e12

    slope = brentq(finite_end, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    xs = np.linspace(0.0, length, n_points)
    sol = solve_ivp(rhs, (0.0, length), [a, slope], rtol=rtol, atol=atol,
                    t_eval=xs, method="DOP853")
    if not sol.success or sol.t[-1] < length:
        raise ShootingError("final integration failed")
    return StripProfile(xs, sol.y[0], sol.y[1], slope)
