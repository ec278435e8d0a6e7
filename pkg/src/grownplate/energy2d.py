"""Discrete von Karman growth energy and its exact gradient.

The energy is

    I_g(w, v) = 1/2  int Q2(sym grad w + 1/2 grad v x grad v - (sym eps_g)_2x2)
              + 1/24 int Q2(hess v + (sym kap_g)_2x2)

on nodal unknowns. The bending term uses the nodal FD hessian with
trapezoidal quadrature. The membrane term is evaluated at cell centres with
bilinear-element gradients and the midpoint rule (growth strain averaged
from the four corners). Nodal central differences would do as well for the
energy, but their odd-even null modes leave the in-plane stress of the
minimiser polluted at first order, which spoils the Euler-Lagrange checks;
the cell-centred form is compact and keeps compatible growth exactly
realisable up to O(spacing^2). The gradient is the transpose of exactly
these operators applied to the stresses, so it matches the discrete energy
to rounding.

Unknowns are packed as ``[w1, w2, v]`` (each a row-major node vector).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields as fd
from .fields import Grid2
from .growth import GrowthField
from .material import Material, q2


@dataclass
class Displacement2D:
    grid: Grid2
    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.w.shape != self.grid.shape + (2,) or self.v.shape != self.grid.shape:
            raise ValueError("w must be (ny, nx, 2) and v (ny, nx) on the grid")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.v))):
            raise ValueError("displacement has non-finite entries")

    @classmethod
    def zeros(cls, grid: Grid2) -> "Displacement2D":
        return cls(grid, np.zeros(grid.shape + (2,)), np.zeros(grid.shape))

    @classmethod
    def from_functions(cls, grid: Grid2, w1=None, w2=None, v=None) -> "Displacement2D":
        zero = lambda X, Y: 0.0 * X  # noqa: E731
        w = np.stack([grid.sample(w1 or zero), grid.sample(w2 or zero)], -1)
        return cls(grid, w, grid.sample(v or zero))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.w[..., 0].ravel(), self.w[..., 1].ravel(), self.v.ravel()])

    @classmethod
    def unpack(cls, grid: Grid2, x: np.ndarray) -> "Displacement2D":
        n = grid.size
        w = np.stack([x[:n].reshape(grid.shape), x[n:2 * n].reshape(grid.shape)], -1)
        return cls(grid, w, x[2 * n:].reshape(grid.shape))

    def copy(self) -> "Displacement2D":
        return Displacement2D(self.grid, self.w.copy(), self.v.copy())


@dataclass(frozen=True)
class EnergyBreakdown:
    membrane: float
    bending: float

    @property
    def total(self) -> float:
        return self.membrane + self.bending

    def as_dict(self) -> dict:
        return {"membrane": self.membrane, "bending": self.bending, "total": self.total}


def membrane_strain(d: Displacement2D, g: GrowthField) -> np.ndarray:
    """Nodal membrane strain from FD derivatives (diagnostic field; the
    energy itself samples the strain at Gauss points)."""
    dv = fd.grad(d.grid, d.v)
    return (fd.sym(fd.grad(d.grid, d.w)) + 0.5 * dv[..., :, None] * dv[..., None, :]
            - fd.sym(g.eps2))


def bending_strain(d: Displacement2D, g: GrowthField) -> np.ndarray:
    return fd.hessian(d.grid, d.v) + fd.sym(g.kap2)


def energy_Ig(d: Displacement2D, g: GrowthField, m: Material) -> EnergyBreakdown:
    if d.grid != g.grid:
        raise ValueError("displacement and growth live on different grids")
    return EnergyEvaluator(g, m).energy_and_grad(d.pack(), parts=True)[0]


class EnergyEvaluator:
    """Energy and gradient on packed vectors, with operators prepared once."""

    def __init__(self, g: GrowthField, m: Material):
        grid = g.grid
        o = grid.ops
        self.grid, self.g, self.m = grid, g, m
        self.n = grid.size
        gs = grid.cells
        self.wts = grid.weights.ravel()
        self.gwts = gs.weights
        self.dx, self.dy = gs.gx, gs.gy
        self.dxT, self.dyT = gs.gx.T.tocsr(), gs.gy.T.tocsr()
        self.dxx, self.dyy, self.dxy = o.dxx, o.dyy, o.dxy
        self.dxxT, self.dyyT, self.dxyT = o.dxx.T.tocsr(), o.dyy.T.tocsr(), o.dxy.T.tocsr()
        e = fd.sym(g.eps2)
        k = fd.sym(g.kap2)
        P = gs.interp
        self.e11, self.e22, self.e12 = (P @ e[..., 0, 0].ravel(), P @ e[..., 1, 1].ravel(),
                                        P @ e[..., 0, 1].ravel())
        self.k11, self.k22, self.k12 = k[..., 0, 0].ravel(), k[..., 1, 1].ravel(), k[..., 0, 1].ravel()

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self.energy_and_grad(x)

    def energy_and_grad(self, x: np.ndarray, parts: bool = False):
        n, mu, lam2, wts = self.n, self.m.mu, self.m.lam2, self.wts
        w1, w2, v = x[:n], x[n:2 * n], x[2 * n:]
        vx, vy = self.dx @ v, self.dy @ v
        E11 = self.dx @ w1 + 0.5 * vx * vx - self.e11
        E22 = self.dy @ w2 + 0.5 * vy * vy - self.e22
        E12 = 0.5 * (self.dy @ w1 + self.dx @ w2) + 0.5 * vx * vy - self.e12
        trE = E11 + E22
        M11 = 2 * mu * E11 + lam2 * trE
        M22 = 2 * mu * E22 + lam2 * trE
        M12 = 2 * mu * E12
        # 1/2 Q2(E) = 1/2 (M11 E11 + M22 E22 + 2 M12 E12)
        mem = 0.5 * np.dot(self.gwts, M11 * E11 + M22 * E22 + 2 * M12 * E12)

        K11 = self.dxx @ v + self.k11
        K22 = self.dyy @ v + self.k22
        K12 = self.dxy @ v + self.k12
        trK = K11 + K22
        N11 = 2 * mu * K11 + lam2 * trK
        N22 = 2 * mu * K22 + lam2 * trK
        N12 = 2 * mu * K12
        bend = np.dot(wts, N11 * K11 + N22 * K22 + 2 * N12 * K12) / 24.0

        gw = self.gwts
        a11, a22, a12 = gw * M11, gw * M22, gw * M12
        g1 = self.dxT @ a11 + self.dyT @ a12
        g2 = self.dyT @ a22 + self.dxT @ a12
        gv = (self.dxT @ (a11 * vx + a12 * vy) + self.dyT @ (a22 * vy + a12 * vx)
              + (self.dxxT @ (wts * N11) + self.dyyT @ (wts * N22)
                 + 2 * (self.dxyT @ (wts * N12))) / 12.0)
        grad = np.concatenate([g1, g2, gv])
        if parts:
            return EnergyBreakdown(float(mem), float(bend)), grad
        return float(mem + bend), grad


def grad_energy_Ig(d: Displacement2D, g: GrowthField, m: Material) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the discrete energy w.r.t. every nodal value of ``w`` and ``v``."""
    _, gx = EnergyEvaluator(g, m).energy_and_grad(d.pack())
    gd = Displacement2D.unpack(d.grid, gx)
    return gd.w, gd.v
