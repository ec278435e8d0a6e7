import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grownplate.energy2d import Displacement2D, energy_Ig
from grownplate.fields import Grid2
from grownplate.growth import GrowthField, make_compatible
from grownplate.material import Material
from grownplate.solver2d import (SolverConfig, gauge_fix, minimize, multistart, random_init)

M11 = Material(1.0, 1.0)


def spherical(grid):
    one = lambda X, Y: 1 + 0 * X  # noqa: E731
    return GrowthField.from_functions(grid, kap={(1, 1): one, (2, 2): one})


def benchmark(grid):
    return GrowthField.from_functions(grid, eps={(1, 1): lambda X, Y: 0.3 * Y**2},
                                      kap={(1, 1): lambda X, Y: 1 + 0 * X,
                                           (2, 2): lambda X, Y: 0.5 + X * Y})


def gauge_rel_error(grid, v, v0):
    """Relative L2 distance of v to the gauge class of +-v0 (shift and tilt)."""
    X, Y = grid.mesh
    A = np.stack([np.ones(grid.size), X.ravel(), Y.ravel()], 1)
    sw = np.sqrt(grid.weights.ravel())
    errs = []
    for sign in (1, -1):
        r = v.ravel() - sign * v0.ravel()
        coef = np.linalg.lstsq(A * sw[:, None], r * sw, rcond=None)[0]
        errs.append(np.sqrt(grid.integrate((r - A @ coef).reshape(grid.shape) ** 2)))
    ref = gauge_fix(Displacement2D(grid, np.zeros(grid.shape + (2,)), v0)).v
    return min(errs) / np.sqrt(grid.integrate(ref**2))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(backtrack=1.5)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=-1)


def test_gauge_examples():
    grid = Grid2(13, 13)
    d = Displacement2D(grid, np.zeros(grid.shape + (2,)) + [0.3, -1.2], np.zeros(grid.shape))
    assert np.abs(gauge_fix(d).w).max() < 1e-13
    g1 = gauge_fix(random_init(grid, np.random.default_rng(0)))
    g2 = gauge_fix(g1)
    assert np.abs(g2.w - g1.w).max() < 1e-13 and np.abs(g2.v - g1.v).max() < 1e-13


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_gauge_idempotent_and_energy_preserving(seed):
    rng = np.random.default_rng(seed)
    grid = Grid2(11, 11)
    d = Displacement2D(grid, rng.normal(size=grid.shape + (2,)), rng.normal(size=grid.shape))
    info = {}
    once = gauge_fix(d, info)
    twice = gauge_fix(once)
    assert np.abs(twice.w - once.w).max() < 1e-12 and np.abs(twice.v - once.v).max() < 1e-12
    g = benchmark(grid)
    e0, e1 = energy_Ig(d, g, M11).total, energy_Ig(once, g, M11).total
    assert abs(e1 - e0) < 1e-8 * max(e0, 1e-300)
    assert {"tilt_1", "tilt_2", "shift_v", "rotation"} <= set(info)


def test_zero_growth_converges_to_flat():
    grid = Grid2(17, 17)
    init = random_init(grid, np.random.default_rng(4), amplitude=0.05)
    d, rep = minimize(init, GrowthField.zeros(grid), M11)
    assert rep.converged and rep.energy.total < 1e-12
    assert np.abs(d.v).max() < 1e-6 and np.abs(d.w).max() < 1e-6


@pytest.mark.parametrize("seed", [0, 1])
def test_compatible_growth_is_recovered(seed):
    grid = Grid2(33, 33)
    rng = np.random.default_rng(seed)
    X, Y = grid.mesh
    c = rng.uniform(-1, 1, 8)
    w0 = np.stack([c[0] * X**2 * Y + c[1] * Y**2, c[2] * X * Y**2], -1)
    v0 = c[3] * X**2 + c[4] * X * Y + c[5] * Y**2 + c[6] * X**3 + c[7] * Y**3
    g = make_compatible(grid, w0, v0)
    init_e = energy_Ig(Displacement2D.zeros(grid), g, M11).total
    d, rep = multistart(g, M11, SolverConfig(seed=seed), 2)
    assert rep.converged
    assert rep.energy.total < 1e-8 * init_e
    assert gauge_rel_error(grid, d.v, v0) <= 5 * grid.spacing**2


def test_nonflat_multistart_is_stable():
    grid = Grid2(17, 17)
    d, rep = multistart(spherical(grid), M11, SolverConfig(seed=3), 5)
    energies = [float(e) for e in rep.spread["energies"].split()]
    assert rep.converged and len(energies) == 6
    best = min(energies)
    assert best > 0
    assert max(energies) <= 1.05 * best
    assert rep.energy.total == pytest.approx(best, rel=1e-10)


def test_monotone_iterates():
    grid = Grid2(13, 13)
    g = benchmark(grid)
    init = random_init(grid, np.random.default_rng(2))
    e_init = energy_Ig(init, g, M11).total
    energies = []
    for iters in (1, 3, 10, 40):
        _, rep = minimize(init, g, M11, SolverConfig(max_iters=iters))
        energies.append(rep.energy.total)
    assert energies[0] <= e_init
    assert all(b <= a + 1e-14 for a, b in zip(energies, energies[1:]))


def test_non_convergence_is_flagged():
    grid = Grid2(17, 17)
    d, rep = minimize(random_init(grid, np.random.default_rng(0)), spherical(grid), M11,
                      SolverConfig(max_iters=2))
    assert not rep.converged and rep.status != "converged"
    assert np.all(np.isfinite(d.v))


def test_reflection_symmetry():
    grid = Grid2(17, 17)
    g0 = GrowthField.from_functions(grid, eps={(1, 1): lambda X, Y: 0.2 + 0 * X,
                                               (2, 2): lambda X, Y: 0.1 * X})
    d, rep = minimize(random_init(grid, np.random.default_rng(1)), g0, M11)
    flipped = Displacement2D(grid, d.w, -d.v)
    assert energy_Ig(flipped, g0, M11).total == pytest.approx(rep.energy.total, rel=1e-13)
    # with bending growth the degeneracy breaks
    g = spherical(grid)
    d, rep = minimize(random_init(grid, np.random.default_rng(1)), g, M11)
    assert energy_Ig(Displacement2D(grid, d.w, -d.v), g, M11).total > 1.5 * rep.energy.total


def test_sign_representative():
    grid = Grid2(17, 17)
    X, Y = grid.mesh
    v0 = -(X - 0.3) ** 2 - 0.5 * Y**3
    g = make_compatible(grid, np.zeros(grid.shape + (2,)), v0)
    g = GrowthField(grid, g.eps, np.zeros_like(g.kap))
    d, _ = minimize(Displacement2D(grid, np.zeros(grid.shape + (2,)), v0), g, M11)
    quad = (X <= 0.5) & (Y >= 0.5)
    assert d.v[quad].mean() >= 0


def test_grid_refinement_is_cauchy():
    energies = []
    for n in (33, 65, 129):
        grid = Grid2(n, n)
        _, rep = multistart(benchmark(grid), M11, SolverConfig(seed=0), 1)
        assert rep.converged
        energies.append(rep.energy.total)
    d1, d2 = abs(energies[1] - energies[0]), abs(energies[2] - energies[1])
    assert d2 * 3 <= d1
