"""In-plane stress, Airy potential and the Euler-Lagrange / boundary residuals.

At a critical point of the plate energy the in-plane stress

    M = 2 mu (sym grad w + Psi) + lam2 (div w + tr Psi) Id,
    Psi = 1/2 grad v x grad v - (sym eps_g)_2x2

is divergence free with ``M n = 0`` on the boundary, so ``M = cof hess(Phi)``
for a potential ``Phi`` that is affine along the boundary. The residuals here
measure how well a discrete state satisfies the resulting fourth-order system
and the free-edge conditions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import fields as fd
from .energy2d import Displacement2D
from .fields import Grid2
from .growth import GrowthField, lambda_g, omega_g
from .material import Material


@dataclass
class StressState:
    M: np.ndarray
    Psi: np.ndarray
    PsiTilde: np.ndarray
    Phi: np.ndarray | None = None

    def __post_init__(self):
        if not np.allclose(self.M, np.swapaxes(self.M, -1, -2), rtol=0, atol=1e-12 * (1 + np.abs(self.M).max())):
            raise ValueError("stress M must be symmetric")


def build_stress(d: Displacement2D, g: GrowthField, m: Material) -> StressState:
    grid = d.grid
    dv = fd.grad(grid, d.v)
    Psi = 0.5 * dv[..., :, None] * dv[..., None, :] - fd.sym(g.eps2)
    E = fd.sym(fd.grad(grid, d.w)) + Psi
    tr = E[..., 0, 0] + E[..., 1, 1]
    M = 2 * m.mu * E + m.lam2 * tr[..., None, None] * np.eye(2)
    PsiTilde = fd.hessian(grid, d.v) + fd.sym(g.kap2)
    return StressState(M, Psi, PsiTilde)


# --- Airy potential -----------------------------------------------------------

@dataclass
class AiryResult:
    phi: np.ndarray
    misfit: float
    relative_misfit: float
    compatible: bool
    anchor: tuple

    def as_dict(self) -> dict:
        return {"hessian_misfit": self.misfit, "relative_misfit": self.relative_misfit,
                "compatible": self.compatible}


def airy_reconstruct(grid: Grid2, M: np.ndarray, rtol: float | None = None,
                     margin: int = 0) -> AiryResult:
    """Least-squares potential with ``hess(Phi) = cof M``.

    The three hessian equations are imposed at every node (weighted by the
    quadrature weights) so that the discrete kernel is exactly the affine
    functions; ``Phi`` and ``grad Phi`` are pinned to zero at the lower-left
    node. ``misfit`` is the weighted L2 norm of ``hess(Phi) - cof M``; the
    fit counts as compatible when the relative misfit is below ``rtol``
    (default ``min(4 spacing, 0.5)``: minimisers reach about ``2 spacing``
    on very coarse grids and converge at second order after that, while a
    stress field far from divergence free stays at order one). ``margin > 0`` drops the hessian equations on the outer
    rings; with ``margin >= 2`` the corner values are no longer determined
    and the system becomes singular.

    Raises
    ------
    ValueError
        If the normal matrix is singular beyond the affine kernel.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != grid.shape + (2, 2):
        raise ValueError(f"M must have shape {grid.shape + (2, 2)}")
    if not np.allclose(M[..., 0, 1], M[..., 1, 0], rtol=0, atol=1e-12 * (1 + np.abs(M).max())):
        raise ValueError("M must be symmetric")
    o = grid.ops
    T = fd.cof2(M)
    W = sp.diags((grid.weights * grid.interior(margin)).ravel())
    # the mixed equation counts twice in the Frobenius misfit
    A = [o.dxx, o.dyy, o.dxy]
    rhs = [T[..., 0, 0].ravel(), T[..., 1, 1].ravel(), T[..., 0, 1].ravel()]
    mult = [1.0, 1.0, 2.0]
    N = sum(c * (a.T @ W @ a) for c, a in zip(mult, A))
    b = sum(c * (a.T @ (W @ r)) for c, a, r in zip(mult, A, rhs))
    # anchor rows: value and gradient at the lower-left node
    k = 0
    C = sp.vstack([sp.csr_matrix(([1.0], ([0], [k])), shape=(1, grid.size)),
                   o.dx[k], o.dy[k]]).tocsr()
    K = sp.bmat([[N, C.T], [C, None]], format="csc")
    try:
        lu = splu(K)
    except RuntimeError as exc:
        raise ValueError(f"Airy least-squares system is singular: {exc}") from None
    sol = lu.solve(np.concatenate([b, np.zeros(3)]))
    if not np.all(np.isfinite(sol)):
        raise ValueError("Airy least-squares system is singular")
    phi = sol[:grid.size].reshape(grid.shape)
    H = fd.hessian(grid, phi)
    misfit = float(np.sqrt(grid.integrate(np.sum((H - T)**2, axis=(-2, -1)))))
    ref = float(np.sqrt(grid.integrate(np.sum(T**2, axis=(-2, -1)))))
    rel = misfit / ref if ref > 0 else misfit
    tol = min(4 * grid.spacing, 0.5) if rtol is None else rtol
    return AiryResult(phi, misfit, rel, rel <= tol, (grid.x[0], grid.y[0]))


# --- Euler-Lagrange residuals ---------------------------------------------------

@dataclass
class ELResiduals:
    r1: np.ndarray
    r2: np.ndarray
    r1_alt: np.ndarray
    r2_alt: np.ndarray
    mask: np.ndarray
    inner: np.ndarray | None = None

    def max_over(self, mask: np.ndarray) -> tuple[float, float]:
        """``(max |r1|, max |r2|)`` over an arbitrary node mask."""
        return float(np.abs(self.r1[mask]).max()), float(np.abs(self.r2[mask]).max())

    @property
    def r1_max(self) -> float:
        return float(np.abs(self.r1[self.mask]).max())

    @property
    def r2_max(self) -> float:
        return float(np.abs(self.r2[self.mask]).max())

    @property
    def formulation_gap(self) -> float:
        """Largest disagreement between the two forms of either residual."""
        return float(max(np.abs(self.r1 - self.r1_alt)[self.mask].max(),
                         np.abs(self.r2 - self.r2_alt)[self.mask].max()))

    def as_dict(self) -> dict:
        out = {"r1_max": self.r1_max, "r2_max": self.r2_max,
               "formulation_gap": self.formulation_gap}
        if self.inner is not None and self.inner.any():
            out["r1_max_inner"], out["r2_max_inner"] = self.max_over(self.inner)
        return out


def el_residuals(d: Displacement2D, phi: np.ndarray, g: GrowthField, m: Material,
                 margin: int = 2) -> ELResiduals:
    """Residuals of the coupled fourth-order system.

    ``r1 = bilap(Phi) + S (det hess v + lambda_g)`` and
    ``r2 = B bilap(v) - [v, Phi] + B Omega_g``; the ``_alt`` fields use the
    bracket form ``det hess v = [v, v] / 2`` and the ``div^T div`` form of the
    bending source. ``r1_max``/``r2_max`` are taken ``margin`` cells inside
    the plate; the ``inner`` maxima over the fixed subdomain at distance
    ``>= L/8`` from the edges (``L`` the shorter side). Near the edges and
    corners the one-sided closures of the fourth-order operators dominate, so
    the fixed subdomain is the one that shows the interior convergence rate.
    """
    grid = d.grid
    Hv = fd.hessian(grid, d.v)
    lam = lambda_g(g)
    bil_phi = fd.bilaplacian(grid, phi)
    bil_v = fd.bilaplacian(grid, d.v)
    bracket = fd.airy_bracket(grid, d.v, phi)
    r1 = bil_phi + m.S * (fd.det2(Hv) + lam)
    r1_alt = bil_phi + m.S * (0.5 * fd.ddot(Hv, fd.cof2(Hv)) + lam)
    r2 = m.B * bil_v - bracket + m.B * omega_g(g, m)
    k = fd.sym(g.kap2)
    # (cof hess Phi) : hess v = B bilap v + B div^T div (k + nu cof k)
    r2_alt = m.B * bil_v + m.B * fd.div_t_div(grid, k + m.nu * fd.cof2(k)) - bracket
    return ELResiduals(r1, r2, r1_alt, r2_alt, grid.interior(margin), grid.inset(0.125))


# --- boundary conditions ----------------------------------------------------------

_EDGES = {
    # name: (index into rows/cols, outward normal, tangent)
    "left": ((slice(None), 0), (-1.0, 0.0), (0.0, 1.0)),
    "right": ((slice(None), -1), (1.0, 0.0), (0.0, 1.0)),
    "bottom": ((0, slice(None)), (0.0, -1.0), (1.0, 0.0)),
    "top": ((-1, slice(None)), (0.0, 1.0), (1.0, 0.0)),
}


def _edge_values(f: np.ndarray, index, corner: int) -> np.ndarray:
    vals = f[index]
    return vals[corner:len(vals) - corner]


def best_affine(grid: Grid2, phi: np.ndarray, corner: int = 2) -> np.ndarray:
    """Affine function fitting ``Phi`` and its normal derivative on the boundary.

    Least squares over the edge nodes (corners excluded) of the value and
    normal-derivative mismatches.
    """
    X, Y = grid.mesh
    g = fd.grad(grid, phi)
    rows, rhs = [], []
    for index, n, _ in _EDGES.values():
        xs, ys = _edge_values(X, index, corner), _edge_values(Y, index, corner)
        one = np.ones_like(xs)
        rows.append(np.stack([one, xs, ys], -1))
        rhs.append(_edge_values(phi, index, corner))
        rows.append(np.stack([0 * one, n[0] * one, n[1] * one], -1))
        rhs.append(_edge_values(g[..., 0] * n[0] + g[..., 1] * n[1], index, corner))
    coef = np.linalg.lstsq(np.concatenate(rows), np.concatenate(rhs), rcond=None)[0]
    return coef[0] + coef[1] * X + coef[2] * Y


@dataclass
class BoundaryReport:
    edges: dict = field(default_factory=dict)
    simplified: dict | None = None

    def max(self, key: str) -> float:
        return float(max(e[key] for e in self.edges.values()))

    def as_dict(self) -> dict:
        out = {}
        for name, vals in self.edges.items():
            out.update({f"{name}_{k}": v for k, v in vals.items()})
        for key in ("phi", "dn_phi", "b1", "b2"):
            out[f"max_{key}"] = self.max(key)
        if self.simplified is not None:
            out.update({f"{k}_simplified": v for k, v in self.simplified.items()})
        return out


def boundary_residuals(d: Displacement2D, phi: np.ndarray, g: GrowthField, m: Material,
                       corner: int = 2) -> BoundaryReport:
    """Per-edge maxima of the free-edge residuals.

    ``phi``/``dn_phi``: ``Phi`` and its normal derivative after removing the
    best affine function. ``b1 = Pt:(n n) + nu Pt:(t t)`` and
    ``b2 = (1 - nu) d_t(Pt:(n t)) + div(Pt + nu cof Pt).n`` with
    ``Pt = hess v + (sym kap_g)_2x2``. ``corner`` nodes next to each corner
    are skipped. On straight edges the curvature term of the simplified
    condition vanishes, so when ``sym kap_g`` is zero on the boundary the
    simplified residual ``d_nn v + nu d_tt v`` is reported as well.
    """
    grid, nu = d.grid, m.nu
    st = build_stress(d, g, m)
    Pt = st.PsiTilde
    phi0 = phi - best_affine(grid, phi, corner)
    gphi = fd.grad(grid, phi0)
    div_term = fd.divergence(grid, Pt + nu * fd.cof2(Pt))
    dPt = fd.grad(grid, Pt)  # dPt[..., a, b, k] = d_k Pt_ab
    Hv = fd.hessian(grid, d.v)
    ksym = fd.sym(g.kap2)
    kap_on_edge = 0.0
    report = BoundaryReport()
    simp = {}
    for name, (index, n, t) in _EDGES.items():
        n, t = np.array(n), np.array(t)
        nn, tt, nt = np.outer(n, n), np.outer(t, t), np.outer(n, t)
        b1 = fd.ddot(Pt, nn) + nu * fd.ddot(Pt, tt)
        # straight edge: d_t(Pt : n t) = (d_t Pt) : n t
        dt_nt = np.einsum("...abk,k,ab->...", dPt, t, nt)
        b2 = (1 - nu) * dt_nt + div_term @ n
        vals = {
            "phi": np.abs(_edge_values(phi0, index, corner)).max(),
            "dn_phi": np.abs(_edge_values(gphi @ n, index, corner)).max(),
            "b1": np.abs(_edge_values(b1, index, corner)).max(),
            "b2": np.abs(_edge_values(b2, index, corner)).max(),
        }
        report.edges[name] = {k: float(v) for k, v in vals.items()}
        kap_on_edge = max(kap_on_edge, float(np.abs(_edge_values(ksym, index, corner)).max()))
        simp[name] = float(np.abs(_edge_values(fd.ddot(Hv, nn) + nu * fd.ddot(Hv, tt),
                                               index, corner)).max())
    if kap_on_edge == 0.0:
        report.simplified = simp
    return report


# --- Lemma: stresses of the form alpha sym grad w + beta div w Id ---------------

def lemma51_residual(grid: Grid2, F: np.ndarray, alpha: float, beta: float,
                     margin: int = 1) -> tuple[float, float]:
    """Interior max of ``curl^T curl F - beta/(alpha + 2 beta) lap(tr F)``.

    Returns ``(residual, scale)`` with ``scale = max |F| / L^2`` (``L`` the
    shorter side), the normalisation under which FD-small means
    ``O(spacing^2)``.
    """
    if alpha == 0 or alpha + 2 * beta == 0:
        raise ValueError("need alpha != 0 and alpha + 2 beta != 0")
    tr = F[..., 0, 0] + F[..., 1, 1]
    res = fd.curl_t_curl(grid, F) - beta / (alpha + 2 * beta) * fd.laplacian(grid, tr)
    L = min(grid.lx, grid.ly)
    scale = float(np.sqrt(np.sum(F**2, axis=(-2, -1))).max()) / L**2
    return float(np.abs(res[grid.interior(margin)]).max()), scale


@dataclass
class Lemma51Report:
    residual: float
    scale: float
    other_residual: float | None = None
    other_scale: float | None = None

    @property
    def normalized(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual

    @property
    def other_normalized(self) -> float | None:
        if self.other_residual is None:
            return None
        return self.other_residual / self.other_scale if self.other_scale > 0 else self.other_residual


def lemma51_check(grid: Grid2, w: np.ndarray, alpha: float, beta: float,
                  F_other: np.ndarray | None = None) -> Lemma51Report:
    """Build ``F = alpha sym grad w + beta (div w) Id`` and evaluate the
    compatibility identity on it, and optionally on a supplied ``F_other``."""
    G = fd.grad(grid, w)
    F = alpha * fd.sym(G) + beta * (G[..., 0, 0] + G[..., 1, 1])[..., None, None] * np.eye(2)
    rep = Lemma51Report(*lemma51_residual(grid, F, alpha, beta))
    if F_other is not None:
        rep.other_residual, rep.other_scale = lemma51_residual(grid, F_other, alpha, beta)
    return rep
