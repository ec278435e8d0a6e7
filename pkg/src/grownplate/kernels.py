"""Per-point hot loops of the 3D energies, in a numba and a numpy flavour.

Both flavours take flat stacks of 3x3 matrices and return identical results
up to rounding. :func:`svk` dispatches on ``_accel.USE_NUMBA``;
:func:`dist2_so3` always uses numpy, which is faster for it.

The Saint Venant-Kirchhoff kernel works with small quantities directly:
``Hd = grad(u) - Id`` and ``B = a^-1 - Id`` are passed instead of the full
matrices so that strains of size 1e-6 keep their relative precision.
"""
import numpy as np

from . import _accel
from ._accel import njit


# --- Saint Venant-Kirchhoff ---------------------------------------------------

def svk_numpy(Hd, B, mu, lam):
    """Return ``(W, dW/dG)`` for ``F = (Id + Hd)(Id + B)``.

    ``dW/dG`` is the derivative with respect to the deformation gradient
    ``G = Id + Hd`` (the elastic part ``F`` is ``G a^-1``).
    """
    Z = Hd + B + Hd @ B
    Zt = np.swapaxes(Z, 1, 2)
    E = 0.5 * (Z + Zt + Zt @ Z)
    trE = np.trace(E, axis1=1, axis2=2)
    W = mu * np.einsum("nij,nij->n", E, E) + 0.5 * lam * trE**2
    S = 2.0 * mu * E
    S[:, 0, 0] += lam * trE
    S[:, 1, 1] += lam * trE
    S[:, 2, 2] += lam * trE
    P = S + Z @ S
    # a^-T = (Id + B)^T
    dG = P + P @ np.swapaxes(B, 1, 2)
    return W, dG


@njit
def _svk_numba(Hd, B, mu, lam):
    n = Hd.shape[0]
    W = np.empty(n)
    dG = np.empty((n, 3, 3))
    Z = np.empty((3, 3))
    E = np.empty((3, 3))
    P = np.empty((3, 3))
    for p in range(n):
        for i in range(3):
            for j in range(3):
                s = Hd[p, i, j] + B[p, i, j]
                for k in range(3):
                    s += Hd[p, i, k] * B[p, k, j]
                Z[i, j] = s
        for i in range(3):
            for j in range(3):
                s = Z[i, j] + Z[j, i]
                for k in range(3):
                    s += Z[k, i] * Z[k, j]
                E[i, j] = 0.5 * s
        trE = E[0, 0] + E[1, 1] + E[2, 2]
        w = 0.0
        for i in range(3):
            for j in range(3):
                w += E[i, j] * E[i, j]
        W[p] = mu * w + 0.5 * lam * trE * trE
        # P = (Id + Z) S with S = 2 mu E + lam trE Id
        for i in range(3):
            for j in range(3):
                s = 2.0 * mu * E[i, j]
                if i == j:
                    s += lam * trE
                acc = s
                for k in range(3):
                    sk = 2.0 * mu * E[k, j]
                    if k == j:
                        sk += lam * trE
                    acc += Z[i, k] * sk
                P[i, j] = acc
        for i in range(3):
            for j in range(3):
                s = P[i, j]
                for k in range(3):
                    s += P[i, k] * B[p, j, k]
                dG[p, i, j] = s
    return W, dG


def svk(Hd, B, mu, lam):
    Hd = np.ascontiguousarray(Hd, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    if _accel.USE_NUMBA:
        return _svk_numba(Hd, B, float(mu), float(lam))
    return svk_numpy(Hd, B, mu, lam)


# --- distance to SO(3) ----------------------------------------------------------

def dist2_so3_numpy(F):
    """Squared Frobenius distance of each matrix in the stack to SO(3)."""
    sig = np.linalg.svd(F, compute_uv=False)
    s = np.where(np.linalg.det(F) < 0.0, -1.0, 1.0)
    return (sig[:, 0] - 1.0)**2 + (sig[:, 1] - 1.0)**2 + (sig[:, 2] - s)**2


@njit
def _dist2_so3_numba(F):
    n = F.shape[0]
    out = np.empty(n)
    for p in range(n):
        A = F[p].copy()
        sig = np.linalg.svd(A)[1]
        d = (A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
             - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
             + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
        s = -1.0 if d < 0.0 else 1.0
        out[p] = (sig[0] - 1.0)**2 + (sig[1] - 1.0)**2 + (sig[2] - s)**2
    return out


def dist2_so3(F):
    # numpy's batched SVD beats a per-matrix LAPACK call from numba here
    # (see benchmarks/bench_kernels.py), so the numba flavour is not dispatched
    F = np.ascontiguousarray(F, dtype=float).reshape(-1, 3, 3)
    return dist2_so3_numpy(F)
