"""Uniform node-centred grids on a rectangle and finite-difference calculus.

Field layout
------------
Fields are plain numpy arrays indexed ``[j, i, ...]`` with ``j`` running over
``y`` and ``i`` over ``x``:

* scalar field: ``(ny, nx)``
* vector field: ``(ny, nx, k)``
* matrix field: ``(ny, nx, a, b)``

Flattening a scalar field in C order gives the row-major node ordering used by
the sparse operators and the CSV files (``x`` fastest).

All derivative operators are second order: central stencils in the interior,
one-sided second-order stencils on boundary nodes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .kernels import dist2_so3


def _d1_matrix(n: int, step: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for k in range(1, n - 1):
        rows += [k, k]
        cols += [k - 1, k + 1]
        vals += [-0.5, 0.5]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5, 2.0, -0.5, 1.5, -2.0, 0.5]
    return sp.csr_matrix((np.array(vals) / step, (rows, cols)), shape=(n, n))


def _d2_matrix(n: int, step: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for k in range(1, n - 1):
        rows += [k, k, k]
        cols += [k - 1, k, k + 1]
        vals += [1.0, -2.0, 1.0]
    if n >= 4:
        rows += [0] * 4 + [n - 1] * 4
        cols += [0, 1, 2, 3, n - 1, n - 2, n - 3, n - 4]
        vals += [2.0, -5.0, 4.0, -1.0] * 2
    else:
        # first order only; n == 3 has no room for the 4-point stencil
        rows += [0] * 3 + [n - 1] * 3
        cols += [0, 1, 2, n - 1, n - 2, n - 3]
        vals += [1.0, -2.0, 1.0] * 2
    return sp.csr_matrix((np.array(vals) / step**2, (rows, cols)), shape=(n, n))


def _trapezoid(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = 0.5 * step
    return w


@dataclass(frozen=True)
class Operators:
    """Sparse FD operators acting on row-major flattened scalar fields."""

    dx: sp.csr_matrix
    dy: sp.csr_matrix
    dxx: sp.csr_matrix
    dyy: sp.csr_matrix
    dxy: sp.csr_matrix

    @cached_property
    def lap(self) -> sp.csr_matrix:
        return (self.dxx + self.dyy).tocsr()


@dataclass(frozen=True)
class CellOperators:
    """Maps from nodes to cell centres (bilinear element, one-point rule).

    ``gx``/``gy`` are the element gradients at the centre of each cell,
    ``interp`` the centre value (mean of the four corners); ``weights`` are
    the cell areas. Cells are ordered row-major like the nodes. The
    gradients are exact on bilinear functions and second-order accurate at
    the centres; their only null modes besides constants are the
    checkerboard patterns, see :meth:`Grid2.checkerboard`.
    """

    gx: sp.csr_matrix
    gy: sp.csr_matrix
    interp: sp.csr_matrix
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.size


def _cell_1d(n: int, step: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    cells = np.arange(n - 1)
    rows = np.repeat(cells, 2)
    cols = np.stack([cells, cells + 1], -1).ravel()
    mean = sp.csr_matrix((np.full(2 * (n - 1), 0.5), (rows, cols)), shape=(n - 1, n))
    diff = sp.csr_matrix((np.tile([-1.0, 1.0], n - 1) / step, (rows, cols)), shape=(n - 1, n))
    return mean, diff


@dataclass(frozen=True)
class Grid2:
    """Uniform node grid on ``[x0, x0+lx] x [y0, y0+ly]``.

    ``nx`` and ``ny`` count nodes along each side.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    origin: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("nx, ny must be integers")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per side, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0) or not np.isfinite([self.lx, self.ly]).all():
            raise ValueError("side lengths must be positive and finite")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def spacing(self) -> float:
        return max(self.hx, self.hy)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @cached_property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.hx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.hy * np.arange(self.ny)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(X, Y)``, each of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights, shape ``(ny, nx)``."""
        return np.outer(_trapezoid(self.ny, self.hy), _trapezoid(self.nx, self.hx))

    @cached_property
    def ops(self) -> Operators:
        ix, iy = sp.identity(self.nx, format="csr"), sp.identity(self.ny, format="csr")
        d1x, d1y = _d1_matrix(self.nx, self.hx), _d1_matrix(self.ny, self.hy)
        dx = sp.kron(iy, d1x, format="csr")
        dy = sp.kron(d1y, ix, format="csr")
        dxx = sp.kron(iy, _d2_matrix(self.nx, self.hx), format="csr")
        dyy = sp.kron(_d2_matrix(self.ny, self.hy), ix, format="csr")
        dxy = (0.5 * (dx @ dy + dy @ dx)).tocsr()
        return Operators(dx, dy, dxx, dyy, dxy)

    @cached_property
    def cells(self) -> CellOperators:
        mx, dx = _cell_1d(self.nx, self.hx)
        my, dy = _cell_1d(self.ny, self.hy)
        w = np.full((self.nx - 1) * (self.ny - 1), self.hx * self.hy)
        return CellOperators(sp.kron(my, dx, format="csr"), sp.kron(dy, mx, format="csr"),
                             sp.kron(my, mx, format="csr"), w)

    @cached_property
    def checkerboard(self) -> np.ndarray:
        """The node pattern ``(-1)^(i+j)``, invisible to :attr:`cells`."""
        j, i = np.indices(self.shape)
        return np.where((i + j) % 2 == 0, 1.0, -1.0)

    def interior(self, margin: int = 1) -> np.ndarray:
        """Boolean mask of nodes at least ``margin`` cells away from the boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[margin:self.ny - margin, margin:self.nx - margin] = True
        return mask

    def inset(self, fraction: float) -> np.ndarray:
        """Mask of nodes at distance >= ``fraction * min(lx, ly)`` from the boundary.

        Unlike :meth:`interior` this is a fixed subdomain under refinement.
        """
        X, Y = self.mesh
        dist = np.minimum.reduce([X - self.x[0], self.x[-1] - X, Y - self.y[0], self.y[-1] - Y])
        return dist >= fraction * min(self.lx, self.ly) - 1e-12 * self.spacing

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(self.weights * f))

    def mean(self, f: np.ndarray) -> np.ndarray:
        """Weighted mean over the plate; trailing component axes are kept."""
        w = self.weights.reshape(self.shape + (1,) * (f.ndim - 2))
        return np.sum(w * f, axis=(0, 1)) / self.area

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(X, Y)`` at the nodes."""
        X, Y = self.mesh
        return np.broadcast_to(np.asarray(func(X, Y), dtype=float), self.shape).copy()


def apply(grid: Grid2, op: sp.spmatrix, f: np.ndarray) -> np.ndarray:
    """Apply a node operator to every component of a field."""
    comp = f.shape[2:]
    flat = f.reshape(grid.size, -1)
    return np.asarray(op @ flat).reshape(grid.shape + comp)


def grad(grid: Grid2, f: np.ndarray) -> np.ndarray:
    """Gradient; for a vector field the result is ``G[..., i, j] = d_j f_i``."""
    o = grid.ops
    return np.stack([apply(grid, o.dx, f), apply(grid, o.dy, f)], axis=-1)


def hessian(grid: Grid2, f: np.ndarray) -> np.ndarray:
    o = grid.ops
    fxx = apply(grid, o.dxx, f)
    fyy = apply(grid, o.dyy, f)
    fxy = apply(grid, o.dxy, f)
    return np.stack([np.stack([fxx, fxy], -1), np.stack([fxy, fyy], -1)], -2)


def laplacian(grid: Grid2, f: np.ndarray) -> np.ndarray:
    return apply(grid, grid.ops.lap, f)


def bilaplacian(grid: Grid2, f: np.ndarray) -> np.ndarray:
    """Discrete Laplacian applied twice; trustworthy two or more cells inside."""
    return laplacian(grid, laplacian(grid, f))


def divergence(grid: Grid2, T: np.ndarray) -> np.ndarray:
    """Row-wise divergence of a 2x2 matrix field (or divergence of a 2-vector)."""
    o = grid.ops
    return apply(grid, o.dx, T[..., 0]) + apply(grid, o.dy, T[..., 1])


def curl(grid: Grid2, T: np.ndarray) -> np.ndarray:
    """Row-wise curl ``d_1 T_i2 - d_2 T_i1`` of a 2x2 matrix field."""
    o = grid.ops
    return apply(grid, o.dx, T[..., 1]) - apply(grid, o.dy, T[..., 0])


def curl_t_curl(grid: Grid2, F: np.ndarray) -> np.ndarray:
    """``d11 F22 - d12 (F12 + F21) + d22 F11`` for a 2x2 matrix field."""
    o = grid.ops
    return (apply(grid, o.dxx, F[..., 1, 1])
            - apply(grid, o.dxy, F[..., 0, 1] + F[..., 1, 0])
            + apply(grid, o.dyy, F[..., 0, 0]))


def div_t_div(grid: Grid2, F: np.ndarray) -> np.ndarray:
    """``d11 F11 + d12 (F12 + F21) + d22 F22`` for a 2x2 matrix field."""
    o = grid.ops
    return (apply(grid, o.dxx, F[..., 0, 0])
            + apply(grid, o.dxy, F[..., 0, 1] + F[..., 1, 0])
            + apply(grid, o.dyy, F[..., 1, 1]))


def sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def cof2(A: np.ndarray) -> np.ndarray:
    """Cofactor matrix of (a stack of) 2x2 matrices: [[a,b],[c,d]] -> [[d,-c],[-b,a]]."""
    A = np.asarray(A, dtype=float)
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 0, 1] = -A[..., 1, 0]
    out[..., 1, 0] = -A[..., 0, 1]
    out[..., 1, 1] = A[..., 0, 0]
    return out


def det2(A: np.ndarray) -> np.ndarray:
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def ddot(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Frobenius contraction over the last two axes."""
    return np.einsum("...ij,...ij->...", A, B)


def airy_bracket(grid: Grid2, v: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``[v, phi] = hess(v) : cof(hess(phi))``."""
    return ddot(hessian(grid, v), cof2(hessian(grid, phi)))


def dist_SO3(F) -> np.ndarray | float:
    """Frobenius distance to SO(3) of a 3x3 matrix or a stack of them.

    Uses the singular values with the sign of ``det F`` on the smallest one, so
    reflections are measured against the nearest proper rotation.
    """
    F = np.asarray(F, dtype=float)
    d = np.sqrt(np.maximum(dist2_so3(F), 0.0)).reshape(F.shape[:-2])
    return float(d) if d.ndim == 0 else d


def embed(F2: np.ndarray) -> np.ndarray:
    """Pad a stack of 2x2 matrices with a zero third row and column."""
    out = np.zeros(F2.shape[:-2] + (3, 3))
    out[..., :2, :2] = F2
    return out


# ---------------------------------------------------------------------------
# CSV I/O

def write_csv(path, grid: Grid2, columns: dict) -> None:
    """Write named scalar fields as ``x,y,<names>`` rows, x fastest."""
    X, Y = grid.mesh
    names = list(columns)
    data = [X.ravel(), Y.ravel()] + [np.asarray(columns[k], dtype=float).reshape(grid.size)
                                     for k in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"] + names)
        for row in zip(*data):
            writer.writerow([format(float(v), ".17g") for v in row])


def read_csv(path) -> tuple[Grid2, dict]:
    """Read a field CSV; the grid is recovered from the node coordinates."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    if header[:2] != ["x", "y"]:
        raise ValueError(f"{path}: header must start with x,y")
    data = np.array(rows)
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    nx, ny = len(xs), len(ys)
    if nx * ny != len(data):
        raise ValueError(f"{path}: {len(data)} rows do not form a {nx}x{ny} grid")
    grid = Grid2(nx, ny, xs[-1] - xs[0], ys[-1] - ys[0], (xs[0], ys[0]))
    if not (np.allclose(data[:, 0], np.tile(grid.x, ny), rtol=0, atol=1e-9 * grid.lx)
            and np.allclose(data[:, 1], np.repeat(grid.y, nx), rtol=0, atol=1e-9 * grid.ly)):
        raise ValueError(f"{path}: nodes are not a uniform row-major grid")
    cols = {name: data[:, k + 2].reshape(grid.shape) for k, name in enumerate(header[2:])}
    return grid, cols
