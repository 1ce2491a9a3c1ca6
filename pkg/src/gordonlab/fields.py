"""Grids, scalar/complex fields, Wirtinger derivatives and quadrature.

Conventions fixed here and used by every other module:

* complex coordinate ``z = x + i y``
* Wirtinger derivatives ``dz = (d/dx - i d/dy)/2`` and
  ``dzbar = (d/dx + i d/dy)/2``, so ``dz dzbar = (d2/dx2 + d2/dy2)/4``
* field arrays have shape ``(ny, nx)``; entry ``[j, i]`` sits at
  ``(x0 + i*hx, y0 + j*hy)``
* reductions run over the flattened row-major array so results are
  reproducible bit-for-bit

All derivatives are second-order.  On periodic grids the stencils wrap; on
Dirichlet grids first derivatives fall back to one-sided second-order
formulas on the boundary ring (no ghost points), while the 5-point
Laplacian is defined at interior points only and returns zero on the ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid2D",
    "ScalarField",
    "ComplexField",
    "QuadraticDifferential",
    "GridError",
    "MissingBoundaryError",
    "RepresentationError",
    "d_z",
    "d_zbar",
    "laplace_zzbar",
    "integrate",
    "eval_quad_diff",
    "write_field_csv",
    "read_field_csv",
]


class GridError(ValueError):
    """Invalid grid geometry."""


class MissingBoundaryError(ValueError):
    """A Dirichlet-grid operation found non-finite values where the stencil
    needs boundary closure."""


class RepresentationError(ValueError):
    """Quadratic-differential representation not admissible on this grid."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular grid carrying the coordinate z = x + iy.

    Periodic grids identify index nx with 0 (points cover [x0, x0+nx*hx)),
    Dirichlet grids include both endpoints (points cover [x0, x0+(nx-1)*hx])
    and their outermost ring is the boundary.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float] = (0.0, 0.0)
    boundary: str = "periodic"

    def __post_init__(self):
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "hx", float(self.hx))
        object.__setattr__(self, "hy", float(self.hy))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if self.nx < 4 or self.ny < 4:
            raise GridError(f"need at least 4 points per axis, got {self.nx}x{self.ny}")
        if self.hx <= 0 or self.hy <= 0:
            raise GridError(f"spacings must be positive, got hx={self.hx}, hy={self.hy}")
        if self.boundary not in ("periodic", "dirichlet"):
            raise GridError(f"unknown boundary kind {self.boundary!r}")

    # ------------------------------------------------------------ factories
    @classmethod
    def torus(cls, n, lengths=(1.0, 1.0)):
        """Periodic grid with n (or (nx, ny)) points per axis covering the
        given period lengths."""
        nx, ny = (n, n) if np.isscalar(n) else n
        lx, ly = lengths
        return cls(nx, ny, lx / nx, ly / ny, (0.0, 0.0), "periodic")

    @classmethod
    def rectangle(cls, n, lengths=(1.0, 1.0), origin=(0.0, 0.0)):
        """Dirichlet grid with n (or (nx, ny)) points spanning the closed
        rectangle [x0, x0+lx] x [y0, y0+ly]."""
        nx, ny = (n, n) if np.isscalar(n) else n
        lx, ly = lengths
        return cls(nx, ny, lx / (nx - 1), ly / (ny - 1), tuple(origin), "dirichlet")

    @classmethod
    def disk_inscribed(cls, n, radius=0.7):
        """Dirichlet grid on the square inscribed in the disk |z| <= radius,
        centered at the origin."""
        half = radius / np.sqrt(2.0)
        return cls.rectangle(n, (2 * half, 2 * half), (-half, -half))

    # ------------------------------------------------------------ geometry
    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def periodic(self):
        return self.boundary == "periodic"

    @property
    def cell_area(self):
        return self.hx * self.hy

    def x(self):
        return self.origin[0] + self.hx * np.arange(self.nx)

    def y(self):
        return self.origin[1] + self.hy * np.arange(self.ny)

    def meshes(self):
        return np.meshgrid(self.x(), self.y())

    def z(self):
        X, Y = self.meshes()
        return X + 1j * Y

    def interior_mask(self):
        """Points where the 5-point stencil is available."""
        if self.periodic:
            return np.ones(self.shape, bool)
        m = np.zeros(self.shape, bool)
        m[1:-1, 1:-1] = True
        return m

    def boundary_mask(self):
        return ~self.interior_mask()

    def core_mask(self, depth=2):
        """Points at least `depth` layers away from the Dirichlet ring, where
        compositions of difference stencils keep smooth error constants
        (everything, on periodic grids)."""
        if self.periodic:
            return np.ones(self.shape, bool)
        m = np.zeros(self.shape, bool)
        m[depth:-depth, depth:-depth] = True
        return m


def _as_grid_values(grid, values, dtype):
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != grid.shape:
        raise GridError(f"value array shape {arr.shape} != grid shape {grid.shape}")
    return arr


class ScalarField:
    """Real samples on a grid, one value per point."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        if np.iscomplexobj(values):
            raise TypeError("ScalarField requires real values; use ComplexField")
        self.grid = grid
        self.values = _as_grid_values(grid, values, np.float64)

    @classmethod
    def from_function(cls, grid, fn):
        X, Y = grid.meshes()
        return cls(grid, np.broadcast_to(fn(X, Y), grid.shape).astype(np.float64))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    def sup(self, mask=None):
        v = np.abs(self.values) if mask is None else np.abs(self.values[mask])
        return float(v.max())


class ComplexField:
    """Complex samples on a grid, one value per point."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        self.grid = grid
        self.values = _as_grid_values(grid, values, np.complex128)

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.broadcast_to(fn(grid.z()), grid.shape).astype(np.complex128))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, complex(value)))

    def copy(self):
        return ComplexField(self.grid, self.values.copy())

    def sup(self, mask=None):
        v = np.abs(self.values) if mask is None else np.abs(self.values[mask])
        return float(v.max())


def _require_closure(grid, values):
    # Dirichlet stencils read the boundary ring; it must hold finite data.
    if not np.all(np.isfinite(values)):
        if grid.periodic or not np.all(np.isfinite(values[grid.interior_mask()])):
            raise MissingBoundaryError("field contains non-finite values")
        raise MissingBoundaryError(
            "dirichlet field lacks finite boundary values (no boundary closure)")


def diff_x(grid, values):
    """Second-order d/dx of an (ny, nx, ...) array: central in the interior,
    one-sided (still second order, no ghost points) on the Dirichlet edges."""
    out = np.empty_like(values)
    if grid.periodic:
        out[:] = (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) / (2 * grid.hx)
    else:
        out[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / (2 * grid.hx)
        out[:, 0] = (-3 * values[:, 0] + 4 * values[:, 1] - values[:, 2]) / (2 * grid.hx)
        out[:, -1] = (3 * values[:, -1] - 4 * values[:, -2] + values[:, -3]) / (2 * grid.hx)
    return out


def diff_y(grid, values):
    """Second-order d/dy of an (ny, nx, ...) array: central in the interior,
    one-sided (still second order, no ghost points) on the Dirichlet edges."""
    out = np.empty_like(values)
    if grid.periodic:
        out[:] = (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2 * grid.hy)
    else:
        out[1:-1, :] = (values[2:, :] - values[:-2, :]) / (2 * grid.hy)
        out[0, :] = (-3 * values[0, :] + 4 * values[1, :] - values[2, :]) / (2 * grid.hy)
        out[-1, :] = (3 * values[-1, :] - 4 * values[-2, :] + values[-3, :]) / (2 * grid.hy)
    return out


def d_z(f):
    """Wirtinger derivative (d/dx - i d/dy)/2, second order."""
    grid = f.grid
    _require_closure(grid, f.values)
    v = f.values.astype(np.complex128)
    return ComplexField(grid, 0.5 * (diff_x(grid, v) - 1j * diff_y(grid, v)))


def d_zbar(f):
    """Wirtinger derivative (d/dx + i d/dy)/2, second order."""
    grid = f.grid
    _require_closure(grid, f.values)
    v = f.values.astype(np.complex128)
    return ComplexField(grid, 0.5 * (diff_x(grid, v) + 1j * diff_y(grid, v)))


def laplace_zzbar(f):
    """dz dzbar f = (f_xx + f_yy)/4 by the 5-point stencil divided by 4."""
    grid = f.grid
    _require_closure(grid, f.values)
    v = f.values
    out = np.zeros_like(v)
    hx2, hy2 = grid.hx ** 2, grid.hy ** 2
    if grid.periodic:
        out[:] = ((np.roll(v, -1, 1) - 2 * v + np.roll(v, 1, 1)) / hx2
                  + (np.roll(v, -1, 0) - 2 * v + np.roll(v, 1, 0)) / hy2) / 4.0
    else:
        out[1:-1, 1:-1] = ((v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hx2
                           + (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hy2) / 4.0
    return ScalarField(grid, out) if not np.iscomplexobj(v) else ComplexField(grid, out)


def integrate(f, mask=None):
    """Midpoint quadrature sum(f) * hx * hy over unmasked points.

    Summation runs over the flattened row-major array (fixed order)."""
    v = f.values
    if mask is not None:
        v = np.where(mask, v, 0.0)
    return float(np.sum(v.ravel(order="C")) * f.grid.cell_area)


# --------------------------------------------------------------------------
# holomorphic quadratic differentials


@dataclass(frozen=True)
class QuadraticDifferential:
    """Holomorphic t, stored as a polynomial in z (constant term first).

    Only the constant representation is admissible on periodic grids: a
    doubly periodic entire function is constant.
    """

    coeffs: tuple = field(default=(0j,))

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))
        if len(self.coeffs) == 0:
            object.__setattr__(self, "coeffs", (0j,))

    @classmethod
    def constant(cls, c):
        return cls((complex(c),))

    @classmethod
    def polynomial(cls, coeffs):
        return cls(tuple(coeffs))

    @property
    def is_constant(self):
        return len(self.coeffs) == 1 or all(c == 0 for c in self.coeffs[1:])

    def __call__(self, z):
        acc = np.zeros_like(np.asarray(z, dtype=np.complex128))
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def derivative(self):
        cs = [k * c for k, c in enumerate(self.coeffs)][1:]
        return QuadraticDifferential(tuple(cs) or (0j,))

    def admissible_on(self, grid):
        if grid.periodic and not self.is_constant:
            raise RepresentationError(
                "polynomial quadratic differential is not doubly periodic; "
                "only constants are admitted on periodic grids")

    def evaluate(self, grid):
        self.admissible_on(grid)
        return ComplexField(grid, self(grid.z()))


def eval_quad_diff(t, grid):
    """Pointwise values of t on the grid."""
    return t.evaluate(grid)


# --------------------------------------------------------------------------
# CSV exchange format


def write_field_csv(path, f):
    """Header `# nx= ny= hx= hy= boundary=` then rows i,j,x,y,re[,im],
    row-major (j outer, i inner)."""
    g = f.grid
    cplx = np.iscomplexobj(f.values)
    xs, ys = g.x(), g.y()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nx={g.nx} ny={g.ny} hx={g.hx!r} hy={g.hy!r} boundary={g.boundary}\n")
        for j in range(g.ny):
            for i in range(g.nx):
                v = f.values[j, i]
                x, y = float(xs[i]), float(ys[j])
                if cplx:
                    fh.write(f"{i},{j},{x!r},{y!r},{float(v.real)!r},{float(v.imag)!r}\n")
                else:
                    fh.write(f"{i},{j},{x!r},{y!r},{float(v)!r}\n")


def read_field_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing header line")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        nx, ny = int(meta["nx"]), int(meta["ny"])
        hx, hy = float(meta["hx"]), float(meta["hy"])
        boundary = meta["boundary"]
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} rows, found {len(rows)}")
    origin = (float(rows[0][2]), float(rows[0][3]))
    grid = Grid2D(nx, ny, hx, hy, origin, boundary)
    cplx = len(rows[0]) == 6
    dtype = np.complex128 if cplx else np.float64
    vals = np.zeros((ny, nx), dtype)
    for row in rows:
        i, j = int(row[0]), int(row[1])
        vals[j, i] = float(row[4]) + 1j * float(row[5]) if cplx else float(row[4])
    return ComplexField(grid, vals) if cplx else ScalarField(grid, vals)
