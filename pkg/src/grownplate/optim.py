"""Limited-memory BFGS with backtracking and a post-step projection hook."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool
    status: str
    n_evals: int
    wall_time: float
    history: list = field(default_factory=list)


def lbfgs(fun_grad, x0, *, max_iters=2000, grad_tol=1e-8, history=10,
          c1=1e-4, backtrack=0.5, max_backtracks=40, grad_norm=None,
          precond=None, project=None, record=False, stall_iters=10,
          ftol=None, ftol_window=20) -> LBFGSResult:
    """Minimise ``fun_grad(x) -> (f, g)``.

    Parameters
    ----------
    grad_norm : callable, optional
        Stationarity measure; defaults to the max-norm of ``g``.
    precond : callable, optional
        Applies an approximate inverse Hessian, used as the initial matrix of
        the two-loop recursion (scaled by the usual ``s.y / y.Hy`` factor).
    project : callable, optional
        Maps an accepted iterate to an equivalent representative (e.g. a
        gauge fix). The objective must be invariant under it.

    ftol : float, optional
        Also accept as converged once the objective dropped by less than
        ``ftol * |f|`` over the last ``ftol_window`` iterations.

    The returned iterate is the best one seen. Accepted iterates never
    increase the objective. The run stops as ``"stalled"`` once
    ``stall_iters`` consecutive steps fail to lower it (rounding floor).
    """
    t0 = time.perf_counter()
    gnorm = grad_norm or (lambda g: float(np.max(np.abs(g))))
    H0 = precond or (lambda g: g)
    x = np.array(x0, dtype=float)
    if project is not None:
        x = project(x)
    f, g = fun_grad(x)
    n_evals = 1
    mem = deque(maxlen=history)
    hist = [f] if record else []
    status = "max_iters"
    it = 0
    stalled = 0
    gn = gnorm(g)
    recent = deque([f], maxlen=ftol_window + 1)
    for it in range(1, max_iters + 1):
        if gn <= grad_tol:
            status = "converged"
            it -= 1
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(mem):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        r = H0(q)
        if mem:
            s, y, _ = mem[-1]
            Hy = H0(y)
            r *= np.dot(s, y) / np.dot(y, Hy)
        for (s, y, rho), a in zip(mem, reversed(alphas)):
            b = rho * np.dot(y, r)
            r += (a - b) * s
        p = -r
        slope = np.dot(g, p)
        if not slope < 0:
            mem.clear()
            p = -H0(g)
            slope = np.dot(g, p)
            if not slope < 0:
                status = "line_search_failed"
                break
        step = 1.0
        if not mem:
            # first step or restart: keep the trial move modest
            step = min(1.0, 1.0 / max(1.0, float(np.max(np.abs(p)))))
        accepted = False
        for _ in range(max_backtracks):
            xt = x + step * p
            ft, gt = fun_grad(xt)
            n_evals += 1
            if np.isfinite(ft) and ft <= f + c1 * step * slope:
                accepted = True
                break
            step *= backtrack
        if not accepted:
            if mem:
                mem.clear()
                continue
            status = "line_search_failed"
            break
        # curvature pair from the raw step: a nonlinear gauge map (e.g. a
        # rotation) would otherwise mix a finite symmetry move into s and y
        s = xt - x
        y = gt - g
        sy = np.dot(s, y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            mem.append((s, y, 1.0 / sy))
        if project is not None:
            xp = project(xt)
            if xp is not xt:
                fp, gp = fun_grad(xp)
                n_evals += 1
                if fp <= ft + 1e-12 * abs(ft) + 1e-300:
                    xt, ft, gt = xp, fp, gp
        stalled = stalled + 1 if ft >= f else 0
        x, f, g = xt, ft, gt
        gn = gnorm(g)
        if record:
            hist.append(f)
        recent.append(f)
        if ftol is not None and len(recent) > ftol_window and recent[0] - f <= ftol * abs(f):
            status = "converged"
            break
        if stalled >= stall_iters:
            status = "converged" if gn <= grad_tol else "stalled"
            break
    else:
        if gn <= grad_tol:
            status = "converged"
    return LBFGSResult(x, float(f), g, it, float(gn), status == "converged", status,
                       n_evals, time.perf_counter() - t0, hist)
