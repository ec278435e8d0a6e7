"""Isotropic material: Lame constants, quadratic forms and the 3D density."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Material:
    """Lame pair ``(mu, lam)``.

    Requires ``mu > 0`` and ``2 mu + lam > 0`` (needed for ``Q2`` to be
    positive definite and for the completion map to exist) plus ``lam + mu != 0``
    so that Poisson's ratio and Young's modulus are finite.
    """

    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        mu, lam = float(self.mu), float(self.lam)
        if not np.isfinite([mu, lam]).all():
            raise ValueError("Lame constants must be finite")
        if mu <= 0:
            raise ValueError(f"mu must be positive, got {mu}")
        if 2 * mu + lam <= 0:
            raise ValueError(f"need 2*mu + lambda > 0, got {2 * mu + lam}")
        if lam + mu == 0 or abs(self.nu) >= 1 or not self.B > 0:
            raise ValueError(f"degenerate Lame pair (mu={mu}, lambda={lam})")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)

    @property
    def lam2(self) -> float:
        """Trace coefficient of the reduced form: 2 mu lam / (2 mu + lam)."""
        return 2 * self.mu * self.lam / (2 * self.mu + self.lam)

    @property
    def nu(self) -> float:
        return self.lam / (2 * (self.lam + self.mu))

    @property
    def S(self) -> float:
        """Young's modulus."""
        return self.mu * (3 * self.lam + 2 * self.mu) / (self.lam + self.mu)

    @property
    def B(self) -> float:
        """Bending stiffness."""
        return self.S / (12 * (1 - self.nu**2))

    def constants(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam, "nu": self.nu, "S": self.S, "B": self.B}

    def scaled(self, factor: float) -> "Material":
        return Material(self.mu * factor, self.lam * factor)


def _sym(F):
    return 0.5 * (F + np.swapaxes(F, -1, -2))


def q3(m: Material, F) -> np.ndarray:
    """``2 mu |sym F|^2 + lam (tr F)^2``; works on stacks of 3x3 matrices."""
    F = np.asarray(F, dtype=float)
    S = _sym(F)
    return 2 * m.mu * np.einsum("...ij,...ij->...", S, S) + m.lam * np.trace(F, axis1=-2, axis2=-1)**2


def q2(m: Material, F) -> np.ndarray:
    """``2 mu |sym F|^2 + lam2 (tr F)^2`` on stacks of 2x2 matrices."""
    F = np.asarray(F, dtype=float)
    S = _sym(F)
    return 2 * m.mu * np.einsum("...ij,...ij->...", S, S) + m.lam2 * np.trace(F, axis1=-2, axis2=-1)**2


def q2_via_min(m: Material, F) -> float:
    """Minimum of ``q3`` over all 3x3 completions of the 2x2 block ``F``.

    Only the symmetric entries (13, 23, 33) of the completion matter, so the
    problem is a 3-parameter quadratic. Its gradient and Hessian are recovered
    exactly by polarisation from ``q3`` evaluations and the minimiser comes from
    a 3x3 solve; the closed-form reduced modulus is never used.
    """
    base = np.zeros((3, 3))
    base[:2, :2] = F
    basis = []
    for i, j in ((0, 2), (1, 2), (2, 2)):
        E = np.zeros((3, 3))
        E[i, j] = E[j, i] = 1.0
        basis.append(E)

    def f(t):
        return float(q3(m, base + sum(tk * Ek for tk, Ek in zip(t, basis))))

    e = np.eye(3)
    f0 = f(np.zeros(3))
    g = np.array([(f(e[k]) - f(-e[k])) / 2 for k in range(3)])
    H = np.empty((3, 3))
    for k, l in product(range(3), repeat=2):
        H[k, l] = 0.5 * (f(e[k] + e[l]) - f(e[k] - e[l]) - f(-e[k] + e[l]) + f(-e[k] - e[l])) / 2
    t = np.linalg.solve(H, -g)
    return f0 + 0.5 * g @ t


def c_vec(m: Material, F) -> np.ndarray:
    """Completion vector minimising ``q3((F)* + sym(c x e3))``; linear in ``F``."""
    F = np.asarray(F, dtype=float)
    tr = F[..., 0, 0] + F[..., 1, 1]
    out = np.zeros(F.shape[:-2] + (3,))
    out[..., 2] = -m.lam * tr / (2 * m.mu + m.lam)
    return out


def l_vec(F) -> np.ndarray:
    """Vector ``l`` with ``sym(F - (F_2x2)*) = sym(l x e3)``."""
    F = np.asarray(F, dtype=float)
    return np.stack([F[..., 0, 2] + F[..., 2, 0], F[..., 1, 2] + F[..., 2, 1], F[..., 2, 2]], -1)


def star(F2) -> np.ndarray:
    """``(F)*``: 2x2 block padded with zeros."""
    F2 = np.asarray(F2, dtype=float)
    out = np.zeros(F2.shape[:-2] + (3, 3))
    out[..., :2, :2] = F2
    return out


def sym_outer_e3(c) -> np.ndarray:
    """``sym(c x e3)`` for a stack of 3-vectors."""
    c = np.asarray(c, dtype=float)
    out = np.zeros(c.shape[:-1] + (3, 3))
    out[..., :, 2] = 0.5 * c
    out[..., 2, :] += 0.5 * c
    return out


def w_density(m: Material, F) -> np.ndarray:
    """Saint Venant-Kirchhoff density ``mu |E|^2 + lam/2 (tr E)^2``, ``E = (F^T F - Id)/2``.

    Vanishes on SO(3), is frame indifferent and isotropic, and its second
    derivative at the identity is ``q3``. It does not satisfy a global
    ``W >= c dist^2(F, SO(3))`` bound under strong compression, so it is only
    meant for the small-strain regime the plate energies live in.
    """
    F = np.asarray(F, dtype=float)
    E = 0.5 * (np.swapaxes(F, -1, -2) @ F - np.eye(3))
    trE = np.trace(E, axis1=-2, axis2=-1)
    return m.mu * np.einsum("...ij,...ij->...", E, E) + 0.5 * m.lam * trE**2


def q3_matrix(m: Material) -> np.ndarray:
    """9x9 matrix ``C`` with ``q3(F) = vec(F) . C vec(F)`` (row-major vec)."""
    C = np.empty((9, 9))
    E = np.eye(9).reshape(9, 3, 3)
    for a in range(9):
        for b in range(9):
            C[a, b] = 0.25 * (q3(m, E[a] + E[b]) - q3(m, E[a] - E[b]))
    return C
