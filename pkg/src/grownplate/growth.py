"""Growth tensors ``a^h = Id + h^2 eps_g + h x3 kap_g`` and their incompatibility.

``eps_g`` and ``kap_g`` are stored as full 3x3 matrix fields: the plate energy
only reads their 2x2 blocks, but the 3D recovery deformation also needs the
third row and column.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fields as fd
from .fields import Grid2
from .material import Material


@dataclass(frozen=True)
class GrowthField:
    grid: Grid2
    eps: np.ndarray
    kap: np.ndarray

    def __post_init__(self):
        for name in ("eps", "kap"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != self.grid.shape + (3, 3):
                raise ValueError(f"{name} must have shape {self.grid.shape + (3, 3)}, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, a)

    @classmethod
    def zeros(cls, grid: Grid2) -> "GrowthField":
        z = np.zeros(grid.shape + (3, 3))
        return cls(grid, z, z.copy())

    @classmethod
    def from_functions(cls, grid: Grid2, eps=None, kap=None) -> "GrowthField":
        """Build from ``{(i, j): f(X, Y)}`` dicts with 1-based entry indices."""
        out = []
        for spec in (eps or {}, kap or {}):
            a = np.zeros(grid.shape + (3, 3))
            for (i, j), f in spec.items():
                a[..., i - 1, j - 1] = grid.sample(f)
            out.append(a)
        return cls(grid, *out)

    @property
    def eps2(self) -> np.ndarray:
        return self.eps[..., :2, :2]

    @property
    def kap2(self) -> np.ndarray:
        return self.kap[..., :2, :2]

    @property
    def scale(self) -> float:
        return max(1.0, float(np.abs(self.eps).max()), float(np.abs(self.kap).max()))


def assemble_ah(g: GrowthField, x3: float, h: float, node=None) -> np.ndarray:
    """Growth tensor at physical height ``x3`` (``|x3| <= h/2``).

    Returns the whole matrix field, or the 3x3 matrix at ``node = (j, i)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if abs(x3) > 0.5 * h * (1 + 1e-12):
        raise ValueError(f"x3={x3} lies outside the slab (-{h / 2}, {h / 2})")
    eps, kap = (g.eps, g.kap) if node is None else (g.eps[node], g.kap[node])
    return np.eye(3) + h**2 * eps + h * x3 * kap


def h_max(g: GrowthField, slab_points=None) -> float:
    """Largest thickness for which ``det a^h > 0`` at every node and slab point.

    With ``x3 = h s`` the tensor is ``Id + h^2 (eps + s kap)``, and its
    determinant first vanishes at ``h^2 = -1/lambda`` for the most negative real
    eigenvalue ``lambda`` of ``eps + s kap``. ``slab_points`` are scaled heights
    ``s`` in ``[-1/2, 1/2]``; the default samples 33 of them.
    """
    s = np.linspace(-0.5, 0.5, 33) if slab_points is None else np.asarray(slab_points)
    best = np.inf
    for sk in s:
        lam = np.linalg.eigvals((g.eps + sk * g.kap).reshape(-1, 3, 3))
        real_neg = lam.real[(np.abs(lam.imag) < 1e-12 * (1 + np.abs(lam.real))) & (lam.real < 0)]
        if real_neg.size:
            best = min(best, np.sqrt(-1.0 / real_neg.min()))
    return float(best)


def lambda_g(g: GrowthField) -> np.ndarray:
    """Incompatibility source ``curl^T curl (eps_g)_2x2``."""
    return fd.curl_t_curl(g.grid, g.eps2)


def omega_g(g: GrowthField, m: Material) -> np.ndarray:
    """Bending source, expanded form; reads the symmetric part of ``kap_g`` only."""
    grid, k, nu = g.grid, g.kap2, m.nu
    o = grid.ops
    return (fd.apply(grid, o.dxx, k[..., 0, 0] + nu * k[..., 1, 1])
            + fd.apply(grid, o.dyy, k[..., 1, 1] + nu * k[..., 0, 0])
            + (1 - nu) * fd.apply(grid, o.dxy, k[..., 0, 1] + k[..., 1, 0]))


def omega_g_operator(g: GrowthField, m: Material) -> np.ndarray:
    """Same source as ``div^T div (sym k + nu cof sym k)``."""
    k = fd.sym(g.kap2)
    return fd.div_t_div(g.grid, k + m.nu * fd.cof2(k))


@dataclass
class ConditionReport:
    name: str
    norm: float
    tol: float

    @property
    def holds(self) -> bool:
        """True when the field is nonzero, i.e. the curvature condition holds."""
        return self.norm > self.tol


def co1_field(g: GrowthField) -> np.ndarray:
    return fd.curl(g.grid, fd.sym(g.kap2))


def co2_field(g: GrowthField) -> np.ndarray:
    return lambda_g(g) + fd.det2(fd.sym(g.kap2))


def _interior_max(grid, f, margin=1):
    f = np.abs(f) if f.ndim == 2 else np.linalg.norm(f, axis=-1)
    return float(f[grid.interior(margin)].max())


def check_co1(g: GrowthField, rtol: float = 1e-8) -> ConditionReport:
    return ConditionReport("CO1", _interior_max(g.grid, co1_field(g)), rtol * g.scale)


def check_co2(g: GrowthField, rtol: float = 1e-8) -> ConditionReport:
    return ConditionReport("CO2", _interior_max(g.grid, co2_field(g)), rtol * g.scale)


@dataclass
class FlatnessReport:
    codazzi: float
    gauss: float
    tol: float

    @property
    def flat(self) -> bool:
        return self.codazzi <= self.tol and self.gauss <= self.tol

    def as_dict(self) -> dict:
        return {"codazzi_residual": self.codazzi, "gauss_residual": self.gauss,
                "tolerance": self.tol, "flat": self.flat}


def flatness_test(g: GrowthField, rtol: float | None = None, margin: int = 2) -> FlatnessReport:
    """Linearised Gauss-Codazzi-Meinardi residuals.

    ``curl (sym kap)_2x2 = 0`` and ``curl^T curl eps_2x2 + det (sym kap)_2x2 = 0``
    evaluated ``margin`` cells inside the plate. Growth built from FD
    derivatives (e.g. by :func:`make_compatible`) carries one-sided boundary
    errors that second differences amplify on the first interior ring, hence
    the default margin of 2. The default ``rtol`` is :func:`fd_rtol`.
    """
    tol = (fd_rtol(g.grid) if rtol is None else rtol) * g.scale
    return FlatnessReport(_interior_max(g.grid, co1_field(g), margin),
                          _interior_max(g.grid, co2_field(g), margin), tol)


def fd_rtol(grid: Grid2, factor: float = 50.0) -> float:
    """Relative tolerance that absorbs second-order truncation error."""
    return factor * grid.spacing**2


def make_compatible(grid: Grid2, w0: np.ndarray, v0: np.ndarray) -> GrowthField:
    """Growth realised with zero energy by the displacement pair ``(w0, v0)``."""
    dv = fd.grad(grid, v0)
    eps = fd.embed(fd.sym(fd.grad(grid, w0)) + 0.5 * dv[..., :, None] * dv[..., None, :])
    kap = fd.embed(-fd.hessian(grid, v0))
    return GrowthField(grid, eps, kap)


# --- scaling exponents --------------------------------------------------------

@dataclass
class ScalingProbe:
    gamma: float
    theta: float
    omega0: float
    omega1: float
    beta0: float
    var_ah_samples: list = field(default_factory=list)
    fitted_exponent: float = float("nan")

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "theta": self.theta, "omega0": self.omega0,
                "omega1": self.omega1, "beta0": self.beta0,
                "fitted_var_exponent": self.fitted_exponent,
                "exponent_error": abs(self.fitted_exponent - self.omega1)}


def critical_exponent(omega0: float) -> float:
    return max(omega0 + 2, 2 * omega0)


def var_ah(g: GrowthField, gamma: float, theta: float, h: float, nz: int = 5) -> float:
    """Sup-norm variation of ``a^h = Id + h^gamma eps + h^theta x3 kap``.

    In-plane derivatives of the mid-plane restriction by FD; the ``x3``
    derivative by FD across ``nz`` physical slab layers.
    """
    grid = g.grid
    # the identity part is constant; differencing only the perturbation keeps
    # zero growth exactly zero
    mid = h**gamma * g.eps
    dmid = fd.grad(grid, mid)
    tan = float(np.sqrt(np.sum(dmid**2, axis=(-3, -2, -1))).max())
    x3 = np.linspace(-h / 2, h / 2, nz)
    layers = np.stack([h**gamma * g.eps + h**theta * t * g.kap for t in x3])
    d3 = np.gradient(layers, x3, axis=0, edge_order=2)
    normal = float(np.sqrt(np.sum(d3**2, axis=(-2, -1))).max())
    return tan + normal


def scaling_probe(g: GrowthField, gamma: float, theta: float, h_list) -> ScalingProbe:
    """Closed-form exponents and the empirical decay rate of ``Var(a^h)``.

    ``Var(a^h)`` is a sum of a ``h^gamma`` and a ``h^theta`` term, so the
    slope over a wide range mixes both; the fitted exponent is the local
    log-log slope between the two smallest thicknesses.
    """
    if gamma <= 0 or theta <= 0:
        raise ValueError("gamma and theta must be positive")
    omega0, omega1 = gamma, min(gamma, theta)
    probe = ScalingProbe(gamma, theta, omega0, omega1, critical_exponent(omega0))
    probe.var_ah_samples = [(float(h), var_ah(g, gamma, theta, h)) for h in h_list]
    hs, vs = np.array(probe.var_ah_samples).T
    if np.all(vs > 0) and len(hs) >= 2:
        order = np.argsort(hs)[:2]
        probe.fitted_exponent = float(np.diff(np.log(vs[order]))[0] / np.diff(np.log(hs[order]))[0])
    return probe
