"""Thin 3D slabs: energies, the recovery deformation and the thickness sweep.

Deformations are stored on the scaled slab ``Omega x (-1/2, 1/2)``: the array
``y[j, i, k]`` holds ``u(x', h s_k)``. Physical gradients are recovered as
``[d1 y, d2 y, ds y / h]``, and because the ``1/h`` prefactor of the energy
cancels the Jacobian of ``x3 = h s`` the energies are plain integrals over the
scaled slab.

Internally everything is written in terms of the displacement
``D = y - (x', h s)``, which is small, so that strains of order ``h^2`` keep
their relative precision. Quadrature is trapezoidal in the plane and Simpson
across the thickness (exact on the polynomial-in-``s`` integrands of the
recovery deformation).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import fields as fd
from .energy2d import Displacement2D, energy_Ig
from .fields import Grid2, _d1_matrix
from .growth import GrowthField, h_max
from .kernels import dist2_so3, svk
from .material import Material, c_vec, l_vec, q3_matrix
from .optim import lbfgs


def _simpson(n: int, step: float) -> np.ndarray:
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * step / 3.0


@dataclass(frozen=True)
class Grid3:
    """Plate grid times ``nz`` equispaced layers of the scaled slab."""

    base: Grid2
    nz: int = 9

    def __post_init__(self):
        if int(self.nz) != self.nz or self.nz < 3 or self.nz % 2 == 0:
            raise ValueError(f"nz must be an odd integer >= 3, got {self.nz}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.base.shape + (self.nz,)

    @property
    def size(self) -> int:
        return self.base.size * self.nz

    @property
    def ds(self) -> float:
        return 1.0 / (self.nz - 1)

    @cached_property
    def s(self) -> np.ndarray:
        return np.linspace(-0.5, 0.5, self.nz)

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights on the scaled slab, shape ``(ny, nx, nz)``."""
        return self.base.weights[..., None] * _simpson(self.nz, self.ds)

    @cached_property
    def reference(self) -> np.ndarray:
        """``(x', 0)`` at every node, shape ``(ny, nx, nz, 3)``."""
        X, Y = self.base.mesh
        out = np.zeros(self.shape + (3,))
        out[..., 0] = X[..., None]
        out[..., 1] = Y[..., None]
        return out

    @cached_property
    def ops(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        """In-plane and scaled-thickness first derivatives on flattened nodes."""
        b = self.base
        ix, iy, iz = (sp.identity(n, format="csr") for n in (b.nx, b.ny, self.nz))
        dx = sp.kron(sp.kron(iy, _d1_matrix(b.nx, b.hx)), iz, format="csr")
        dy = sp.kron(sp.kron(_d1_matrix(b.ny, b.hy), ix), iz, format="csr")
        ds = sp.kron(sp.identity(b.size), _d1_matrix(self.nz, self.ds), format="csr")
        return dx, dy, ds


@dataclass
class Deformation3D:
    grid: Grid3
    y: np.ndarray
    h: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.shape != self.grid.shape + (3,):
            raise ValueError(f"y must have shape {self.grid.shape + (3,)}, got {self.y.shape}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("deformation has non-finite entries")

    @classmethod
    def identity(cls, grid: Grid3, h: float) -> "Deformation3D":
        return cls.from_displacement(grid, np.zeros(grid.shape + (3,)), h)

    @classmethod
    def from_displacement(cls, grid: Grid3, D: np.ndarray, h: float) -> "Deformation3D":
        D = np.array(D, dtype=float).reshape(grid.shape + (3,))
        y = grid.reference + D
        y[..., 2] += h * grid.s
        out = cls(grid, y, h)
        out._D = D
        return out

    @property
    def displacement(self) -> np.ndarray:
        """``y - (x', h s)``; kept exactly when built from a displacement."""
        D = getattr(self, "_D", None)
        if D is None:
            D = self.y - self.grid.reference
            D[..., 2] -= self.h * self.grid.s
        return D

    def rigidly_moved(self, R: np.ndarray, t=(0.0, 0.0, 0.0)) -> "Deformation3D":
        """``R y + t``, with the displacement updated without cancellation."""
        D = self.displacement
        Xh = self.grid.reference.copy()
        Xh[..., 2] = self.h * self.grid.s
        D2 = (Xh + D) @ (np.asarray(R) - np.eye(3)).T + D + np.asarray(t, dtype=float)
        return Deformation3D.from_displacement(self.grid, D2, self.h)


# --- energies ---------------------------------------------------------------------

def _check_h(g: GrowthField, h: float) -> None:
    hm = h_max(g)
    if not h < hm:
        raise ValueError(f"det a^h is not positive for h={h:g} (h_max={hm:g})")


def _growth_inverse(g: GrowthField, grid: Grid3, h: float) -> np.ndarray:
    """``a^-1 - Id = -A (Id + A)^-1`` with ``A = h^2 (eps + s kap)``, per node."""
    A = h**2 * (g.eps[:, :, None] + grid.s[None, None, :, None, None] * g.kap[:, :, None])
    A = A.reshape(-1, 3, 3)
    det = np.linalg.det(np.eye(3) + A)
    if not np.all(det > 0):
        raise ValueError(f"det a^h <= 0 at {int(np.sum(det <= 0))} slab nodes for h={h:g}")
    return -np.linalg.solve(np.eye(3) + A, A)


def _displacement_gradient(grid: Grid3, D: np.ndarray, h: float) -> np.ndarray:
    """``grad u - Id`` at every node as a ``(N, 3, 3)`` stack."""
    dx, dy, ds = grid.ops
    Df = D.reshape(-1, 3)
    return np.stack([dx @ Df, dy @ Df, (ds @ Df) / h], axis=-1)


class Energy3D:
    """``D -> (I^h_W, gradient)`` on flattened displacements of one grid and h."""

    def __init__(self, grid: Grid3, g: GrowthField, m: Material, h: float):
        if g.grid != grid.base:
            raise ValueError("growth field and deformation live on different grids")
        _check_h(g, h)
        self.grid, self.m, self.h = grid, m, h
        self.B = _growth_inverse(g, grid, h)
        self.wq = grid.weights.ravel()
        self.ops = grid.ops

    def energy_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        Hd = _displacement_gradient(self.grid, x, self.h)
        W, dG = svk(Hd, self.B, self.m.mu, self.m.lam)
        P = dG * self.wq[:, None, None]
        dx, dy, ds = self.ops
        grad = dx.T @ P[:, :, 0] + dy.T @ P[:, :, 1] + (ds.T @ P[:, :, 2]) / self.h
        return float(np.dot(self.wq, W)), grad.ravel()

    __call__ = energy_and_grad


def energy_IhW(u: Deformation3D, g: GrowthField, m: Material) -> float:
    """Saint Venant-Kirchhoff energy of ``grad u (a^h)^-1`` on the scaled slab."""
    return Energy3D(u.grid, g, m, u.h)(u.displacement.ravel())[0]


def grad_energy_IhW(u: Deformation3D, g: GrowthField, m: Material) -> np.ndarray:
    """Exact gradient of :func:`energy_IhW` with respect to ``y``, shape of ``u.y``."""
    return Energy3D(u.grid, g, m, u.h)(u.displacement.ravel())[1].reshape(u.y.shape)


def energy_Ih0(u: Deformation3D, g: GrowthField) -> float:
    """Integral of ``dist^2(grad u (a^h)^-1, SO(3))``, same quadrature."""
    if g.grid != u.grid.base:
        raise ValueError("growth field and deformation live on different grids")
    _check_h(g, u.h)
    G = np.eye(3) + _displacement_gradient(u.grid, u.displacement, u.h)
    F = G @ (np.eye(3) + _growth_inverse(g, u.grid, u.h))
    return float(np.dot(u.grid.weights.ravel(), dist2_so3(F)))


# --- recovery deformation ---------------------------------------------------------

def warping_fields(d: Displacement2D, g: GrowthField, m: Material,
                   sign: str = "+") -> tuple[np.ndarray, np.ndarray]:
    """Thickness correctors ``(d0, d1)``, each of shape ``(ny, nx, 3)``.

    ``sign`` selects the sign of ``1/2 grad v x grad v`` inside the completion
    of ``d0``. ``"+"`` matches the membrane strain of the plate energy; ``"-"``
    is kept for comparison.
    """
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    grid = d.grid
    dv = fd.grad(grid, d.v)
    outer = dv[..., :, None] * dv[..., None, :]
    mem = fd.sym(fd.grad(grid, d.w)) + (0.5 if sign == "+" else -0.5) * outer - fd.sym(g.eps2)
    d0 = l_vec(g.eps) + c_vec(m, mem)
    d0[..., 2] -= 0.5 * np.sum(dv**2, axis=-1)
    d1 = l_vec(g.kap) + c_vec(m, -fd.hessian(grid, d.v) - fd.sym(g.kap2))
    return d0, d1


def recovery_sequence(d: Displacement2D, g: GrowthField, m: Material, h: float,
                      nz: int = 9, sign: str = "+") -> Deformation3D:
    """Explicit deformation whose energy over ``h^4`` tends to ``I_g(w, v)``.

    ``u = (x', 0) + (h^2 w, h v) + x3 (-h grad v, 1) + h^2 x3 d0 + h x3^2 d1 / 2``
    evaluated at ``x3 = h s`` on every layer.
    """
    if g.grid != d.grid:
        raise ValueError("displacement and growth live on different grids")
    if not h > 0:
        raise ValueError("h must be positive")
    grid = Grid3(d.grid, nz)
    s = grid.s[None, None, :, None]
    d0, d1 = warping_fields(d, g, m, sign)
    dv = fd.grad(d.grid, d.v)
    base = np.zeros(d.grid.shape + (3,))
    base[..., :2] = h**2 * d.w
    base[..., 2] = h * d.v
    tilt = np.zeros(d.grid.shape + (3,))
    tilt[..., :2] = -h**2 * dv
    D = base[:, :, None] + s * tilt[:, :, None] + h**3 * s * d0[:, :, None] \
        + 0.5 * h**3 * s**2 * d1[:, :, None]
    return Deformation3D.from_displacement(grid, D, h)


def scaled_displacement(u: Deformation3D) -> np.ndarray:
    """Thickness average ``V^h = (1/h) int (y - (x', 0)) ds``, shape ``(ny, nx, 3)``.

    For the recovery deformation the in-plane part is ``h w`` and the normal
    part ``v``, both up to ``O(h^2)``.
    """
    D = u.displacement.copy()
    D[..., 2] += u.h * u.grid.s
    ws = _simpson(u.grid.nz, u.grid.ds)
    return np.einsum("k,jikc->jic", ws, D) / u.h


def slab_distance(u: Deformation3D) -> float:
    """Discrete ``W^{1,2}`` distance of ``y`` to ``(x', 0)`` on the scaled slab."""
    D = u.displacement.copy()
    D[..., 2] += u.h * u.grid.s
    dx, dy, ds = u.grid.ops
    Df = D.reshape(-1, 3)
    dD = np.stack([dx @ Df, dy @ Df, ds @ Df], axis=-1)
    # the scaled-slab limit gradient is (e1, e2, 0); D already has it removed
    wq = u.grid.weights.ravel()
    return float(np.sqrt(np.dot(wq, np.sum(Df**2, 1) + np.sum(dD**2, (1, 2)))))


# --- Gamma-limit probe --------------------------------------------------------------

@dataclass
class GammaProbeReport:
    h: list
    IhW: list
    Ig: float
    signed: list
    sign: str
    floor: float = 0.0
    slope: float = float("nan")
    monotone: bool = True
    pre_floor: list = field(default_factory=list)

    @property
    def scaled(self) -> list:
        return [e / h**4 for e, h in zip(self.IhW, self.h)]

    @property
    def errors(self) -> list:
        return [abs(s) for s in self.signed]

    def rows(self) -> list[dict]:
        return [{"h": h, "IhW": e, "IhW/h^4": e / h**4, "Ig": self.Ig, "e(h)": abs(s)}
                for h, e, s in zip(self.h, self.IhW, self.signed)]

    def as_dict(self) -> dict:
        return {"sign": self.sign, "Ig": self.Ig, "floor": self.floor, "slope": self.slope,
                "monotone": self.monotone, "pre_floor_points": len(self.pre_floor)}

    def write_csv(self, path) -> None:
        cols = ["h", "IhW", "IhW/h^4", "Ig", "e(h)"]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows():
                fh.write(",".join(f"{r[c]:.17g}" for c in cols) + "\n")


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def gamma_limit_probe(d: Displacement2D, g: GrowthField, m: Material, h_list, nz: int = 9,
                      sign: str = "+", workers: int = 1) -> GammaProbeReport:
    """Compare ``I^h_W(recovery) / h^4`` with ``I_g(w, v)`` over a thickness sweep.

    The signed gap ``e_s(h) = I^h/h^4 - I_g`` has a part that does not depend
    on ``h`` (the two energies are discretised differently). It is estimated
    by Richardson extrapolation from the two thinnest slabs assuming a
    first-order decay, ``floor = 2 e_s(h_min) - e_s(2 h_min)``, and the slope
    is fitted to ``|e_s - floor|`` over the points that stand clearly above
    it. ``monotone`` reports whether ``e(h) = |e_s|`` decreases with ``h``
    until it reaches the floor level.
    """
    hs = sorted({float(h) for h in h_list}, reverse=True)
    Ig = energy_Ig(d, g, m).total

    def one(h):
        return energy_IhW(recovery_sequence(d, g, m, h, nz, sign), g, m)

    IhW = _map(one, hs, workers)
    signed = [e / h**4 - Ig for e, h in zip(IhW, hs)]
    rep = GammaProbeReport(hs, IhW, Ig, signed, sign)
    scale = max(abs(Ig), 1e-300)
    if max(map(abs, signed), default=0.0) <= 1e-12 * scale:
        rep.slope = float("inf")
        return rep
    if len(hs) >= 2 and math.isclose(hs[-2], 2 * hs[-1], rel_tol=1e-9):
        rep.floor = 2 * signed[-1] - signed[-2]
    excess = [abs(s - rep.floor) for s in signed]
    level = 2 * abs(rep.floor) + 1e-12 * scale
    rep.pre_floor = [i for i, e in enumerate(rep.errors) if e > level]
    errs = rep.errors
    rep.monotone = all(errs[i + 1] < errs[i] or errs[i + 1] <= level for i in range(len(hs) - 1))
    pts = [(hs[i], excess[i]) for i in range(len(hs)) if excess[i] > 0]
    if len(pts) >= 2:
        x, y = np.log(np.array(pts)).T
        rep.slope = float(np.polyfit(x, y, 1)[0])
    return rep


# --- 3D minimisation ----------------------------------------------------------------

@dataclass
class Solver3DConfig:
    max_iters: int = 400
    grad_tol: float = 1e-12
    ftol: float = 1e-9
    ftol_window: int = 20
    history: int = 12
    gauge: bool = True

    def __post_init__(self):
        if not (self.max_iters > 0 and self.grad_tol > 0 and self.history > 0
                and self.ftol > 0 and self.ftol_window > 0):
            raise ValueError("solver settings must be positive")


@dataclass
class Solve3DReport:
    h: float
    energy: float
    initial_energy: float
    iterations: int
    grad_norm: float
    converged: bool
    status: str
    wall_time: float

    @property
    def ratio(self) -> float:
        return self.energy / self.h**4

    def as_dict(self) -> dict:
        return {"h": self.h, "energy": self.energy, "initial_energy": self.initial_energy,
                "energy_over_h4": self.ratio, "iterations": self.iterations,
                "grad_norm": self.grad_norm, "converged": self.converged,
                "status": self.status, "wall_time": self.wall_time}


def _stiffness(grid: Grid3, m: Material, h: float):
    """Linearised elasticity ``sum_q w_q grad^T C grad`` plus a small mass shift."""
    dx, dy, ds = grid.ops
    G = [dx, dy, ds / h]
    C = q3_matrix(m)
    Wq = sp.diags(grid.weights.ravel())
    blocks = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            Kij = None
            for c in range(3):
                for e in range(3):
                    coef = C[3 * i + c, 3 * j + e]
                    if coef:
                        term = coef * (G[c].T @ Wq @ G[e])
                        Kij = term if Kij is None else Kij + term
            blocks[i][j] = Kij
    K = sp.bmat(blocks, format="csr")
    shift = 1e-8 * (2 * m.mu + m.lam)
    K = K + shift * sp.block_diag([Wq] * 3)
    # unknowns are node-major (N, 3); the blocks above are component-major
    n = grid.size
    perm = np.arange(3 * n).reshape(3, n).T.ravel()
    K = K[perm][:, perm].tocsc()
    lu = splu(K)
    return lu, K.diagonal()


def _rotation_gauge(grid: Grid3, D: np.ndarray, h: float) -> np.ndarray:
    """Remove the mean translation and the polar rotation of the mean gradient."""
    wq = grid.weights.ravel() / grid.weights.sum()
    Df = D.reshape(-1, 3)
    H = _displacement_gradient(grid, Df, h)
    Fm = np.eye(3) + np.einsum("n,nij->ij", wq, H)
    U, _, Vt = np.linalg.svd(Fm)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    Xh = grid.reference.reshape(-1, 3).copy()
    Xh[:, 2] = h * np.tile(grid.s, grid.base.size)
    # y -> R^T y, written for D
    Df = (Xh + Df) @ (R - np.eye(3)) + Df
    return (Df - wq @ Df).ravel()


def minimize3d(init: Deformation3D, g: GrowthField, m: Material,
               cfg: Solver3DConfig | None = None) -> tuple[Deformation3D, Solve3DReport]:
    """Preconditioned L-BFGS on all nodal positions.

    Cost grows like the factorisation of the 3D linear-elastic stiffness;
    grids up to about 33 x 33 x 9 are practical. The stationarity measure is
    the gradient scaled by the stiffness diagonal; since the thickness
    stiffness makes that measure stagnate well before the energy does, the run
    also counts as converged once the energy changes by less than
    ``cfg.ftol`` (relative) over ``cfg.ftol_window`` iterations.
    """
    cfg = cfg or Solver3DConfig()
    grid, h = init.grid, init.h
    ev = Energy3D(grid, g, m, h)
    lu, diag = _stiffness(grid, m, h)
    inv_diag = 1.0 / diag
    x0 = init.displacement.ravel()
    e0 = ev(x0)[0]
    if cfg.gauge:
        # the linear-elastic preconditioner only fits near the identity frame
        x0 = _rotation_gauge(grid, x0, h)
    res = lbfgs(ev, x0, max_iters=cfg.max_iters, grad_tol=cfg.grad_tol, history=cfg.history,
                precond=lu.solve, ftol=cfg.ftol, ftol_window=cfg.ftol_window,
                grad_norm=lambda gr: float(np.max(np.abs(gr * inv_diag))))
    x, fun = res.x, res.fun
    if cfg.gauge:
        # applied once at the end: projecting every iterate onto the rotation
        # gauge slows the quasi-Newton descent considerably
        x = _rotation_gauge(grid, x, h)
        fun = min(fun, ev(x)[0])
    out = Deformation3D.from_displacement(grid, x.reshape(grid.shape + (3,)), h)
    report = Solve3DReport(h, fun, e0, res.iterations, res.grad_norm, res.converged,
                           res.status, res.wall_time)
    return out, report


@dataclass
class ScalingSweep:
    reports: list

    @property
    def ratios(self) -> list:
        return [r.ratio for r in self.reports]

    @property
    def max_pair_factor(self) -> float:
        r = self.ratios
        if any(x <= 0 for x in r):
            return float("inf")
        return max(max(r) / min(r), 1.0)

    @property
    def ok(self) -> bool:
        return all(x > 0 for x in self.ratios) and self.max_pair_factor <= 3.0

    def as_dict(self) -> dict:
        return {"ratios": " ".join(f"{x:.10g}" for x in self.ratios),
                "max_pair_factor": self.max_pair_factor, "bounds_ok": self.ok}


def scaling_sweep(d: Displacement2D, g: GrowthField, m: Material, h_list, nz: int = 9,
                  cfg: Solver3DConfig | None = None, workers: int = 1) -> ScalingSweep:
    """``min I^h_W / h^4`` over a thickness sweep, each run started from the
    recovery deformation of ``d``."""
    hs = sorted({float(h) for h in h_list}, reverse=True)

    def one(h):
        return minimize3d(recovery_sequence(d, g, m, h, nz), g, m, cfg)[1]

    return ScalingSweep(_map(one, hs, workers))
