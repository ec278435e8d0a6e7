import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grownplate import fields as fd
from grownplate.energy2d import (Displacement2D, EnergyEvaluator, bending_strain, energy_Ig,
                                 grad_energy_Ig, membrane_strain)
from grownplate.fields import Grid2
from grownplate.growth import GrowthField, make_compatible
from grownplate.material import Material

M11 = Material(1.0, 1.0)


def smooth_state(grid, c):
    return Displacement2D.from_functions(
        grid,
        w1=lambda X, Y: c[0] * np.sin(X + 2 * Y) + c[1] * X * Y,
        w2=lambda X, Y: c[2] * np.cos(2 * X - Y) + c[3] * Y**2,
        v=lambda X, Y: c[4] * np.sin(np.pi * X) * np.cos(Y) + c[5] * X**2 * Y)


def nonflat(grid):
    return GrowthField.from_functions(grid, eps={(1, 1): lambda X, Y: 0.3 * Y**2},
                                      kap={(1, 1): lambda X, Y: 1 + 0 * X,
                                           (2, 2): lambda X, Y: 1 + X * Y})


def test_strain_examples():
    grid = Grid2(11, 11)
    z = GrowthField.zeros(grid)
    d = Displacement2D.zeros(grid)
    assert np.array_equal(membrane_strain(d, z), np.zeros(grid.shape + (2, 2)))
    assert np.array_equal(bending_strain(d, z), np.zeros(grid.shape + (2, 2)))
    d = Displacement2D.from_functions(grid, v=lambda X, Y: X)
    assert np.allclose(membrane_strain(d, z), [[0.5, 0], [0, 0]], atol=1e-13)
    d = Displacement2D.from_functions(grid, v=lambda X, Y: (X**2 + Y**2) / 2)
    assert np.allclose(bending_strain(d, z), np.eye(2), atol=1e-10)


def test_energy_examples():
    grid = Grid2(17, 17)
    z = GrowthField.zeros(grid)
    e = energy_Ig(Displacement2D.zeros(grid), z, M11)
    assert e.total == 0.0
    g = GrowthField.from_functions(grid, eps={(1, 1): lambda X, Y: 1 + 0 * X,
                                              (2, 2): lambda X, Y: 1 + 0 * X})
    e = energy_Ig(Displacement2D.zeros(grid), g, M11)
    assert e.membrane == pytest.approx(10 / 3, rel=1e-13) and e.bending == 0.0
    gw, gv = grad_energy_Ig(Displacement2D.zeros(grid), z, M11)
    assert not gw.any() and not gv.any()


def test_grid_mismatch():
    with pytest.raises(ValueError):
        energy_Ig(Displacement2D.zeros(Grid2(9, 9)), GrowthField.zeros(Grid2(11, 11)), M11)


def test_displacement_validation():
    grid = Grid2(5, 5)
    with pytest.raises(ValueError):
        Displacement2D(grid, np.zeros((5, 5)), np.zeros((5, 5)))
    with pytest.raises(ValueError):
        Displacement2D(grid, np.zeros((5, 5, 2)), np.full((5, 5), np.inf))
    d = smooth_state(grid, np.arange(6) / 6)
    back = Displacement2D.unpack(grid, d.pack())
    assert np.array_equal(back.w, d.w) and np.array_equal(back.v, d.v)


@settings(max_examples=8, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=12, max_size=12))
def test_compatible_energy_vanishes(c):
    grid = Grid2(65, 65)
    X, Y = grid.mesh
    w0 = np.stack([c[0] * X**2 + c[1] * X * Y + c[2] * Y**3, c[3] * Y**2 + c[4] * X**2 * Y], -1)
    v0 = c[5] * X**2 + c[6] * X * Y + c[7] * Y**2 + c[8] * X**3 + c[9] * Y**3 + c[10] * X**2 * Y
    g = make_compatible(grid, w0, v0)
    e = energy_Ig(Displacement2D(grid, w0, v0), g, M11)
    assert e.total <= 1e-6 * max(1.0, g.scale)
    assert np.abs(bending_strain(Displacement2D(grid, w0, v0), g)).max() < 1e-12


def test_gradient_vanishes_at_compatible_state():
    grid = Grid2(33, 33)
    X, Y = grid.mesh
    # affine v0 and quadratic w0 keep the cell-centred growth average exact
    w0 = np.stack([0.2 * X * Y + 0.3 * X**2, 0.1 * Y**2], -1)
    v0 = 0.5 * X - 0.3 * Y
    g = make_compatible(grid, w0, v0)
    gw, gv = grad_energy_Ig(Displacement2D(grid, w0, v0), g, M11)
    assert max(np.abs(gw).max(), np.abs(gv).max()) < 1e-13


def test_gradient_at_compatible_state_is_second_order():
    norms = []
    for n in (17, 33, 65):
        grid = Grid2(n, n)
        X, Y = grid.mesh
        w0 = np.stack([0.2 * X * Y, 0.1 * Y**2], -1)
        v0 = 0.5 * X**2 - 0.3 * X * Y + 0.4 * Y**2
        g = make_compatible(grid, w0, v0)
        gw, gv = grad_energy_Ig(Displacement2D(grid, w0, v0), g, M11)
        # gradient per unit area approximates the continuous first variation;
        # boundary rows also carry the traction terms, so look inside
        inner = grid.interior(2)
        wts = grid.weights[..., None]
        norms.append(max(np.abs(gw / wts)[inner].max(), np.abs(gv / grid.weights)[inner].max()))
    assert norms[0] / norms[1] > 3 and norms[1] / norms[2] > 3


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    grid = Grid2(9, 9)
    g = nonflat(grid)
    d = smooth_state(grid, rng.uniform(-1, 1, 6))
    ev = EnergyEvaluator(g, M11)
    x = d.pack()
    _, gx = ev(x)
    for _ in range(3):
        p = rng.normal(size=x.size)
        t = 1e-5
        fd_dir = (ev(x + t * p)[0] - ev(x - t * p)[0]) / (2 * t)
        assert abs(fd_dir - gx @ p) <= 1e-6 * max(abs(fd_dir), 1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_energy_nonnegative(seed):
    rng = np.random.default_rng(seed)
    grid = Grid2(9, 9)
    d = Displacement2D(grid, rng.normal(size=grid.shape + (2,)), rng.normal(size=grid.shape))
    eps = rng.normal(size=grid.shape + (3, 3))
    e = energy_Ig(d, GrowthField(grid, eps, rng.normal(size=eps.shape)), M11)
    assert e.membrane >= 0 and e.bending >= 0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=11, max_size=11))
def test_gauge_invariance(c):
    grid = Grid2(13, 13)
    X, Y = grid.mesh
    g = nonflat(grid)
    d = smooth_state(grid, c[:6])
    e0 = energy_Ig(d, g, M11).total
    b, A, a = np.array(c[6:8]), c[8], np.array(c[9:11])
    # rigid in-plane motion (infinitesimal rotation) and vertical shift
    w = d.w + b + np.stack([-A * Y, A * X], -1)
    e1 = energy_Ig(Displacement2D(grid, w, d.v + 0.7), g, M11).total
    # compensated tilt
    ax = a[0] * X + a[1] * Y
    w = d.w - d.v[..., None] * a - 0.5 * ax[..., None] * a
    e2 = energy_Ig(Displacement2D(grid, w, d.v + ax), g, M11).total
    scale = max(1.0, e0)
    assert abs(e1 - e0) < 1e-11 * scale and abs(e2 - e0) < 1e-11 * scale


def test_material_scaling_doubles_energy():
    grid = Grid2(13, 13)
    g = nonflat(grid)
    d = smooth_state(grid, [0.3, -0.2, 0.5, 0.1, 0.8, -0.4])
    m = Material(1.3, 0.7)
    e1, e2 = energy_Ig(d, g, m), energy_Ig(d, g, m.scaled(2.0))
    assert e2.membrane == pytest.approx(2 * e1.membrane, rel=1e-14)
    assert e2.bending == pytest.approx(2 * e1.bending, rel=1e-14)


def test_quadrature_convergence_order():
    c = [0.3, -0.2, 0.5, 0.1, 0.8, -0.4]
    energies = []
    for n in (17, 33, 65, 129):
        grid = Grid2(n, n)
        energies.append(energy_Ig(smooth_state(grid, c), nonflat(grid), M11).total)
    diffs = np.abs(np.diff(energies))
    orders = np.log2(diffs[:-1] / diffs[1:])
    assert np.all(orders >= 1.9)
    # Richardson extrapolate and compare against the finest grid
    ref = energies[-1] + (energies[-1] - energies[-2]) / 3
    errs = np.abs(np.array(energies) - ref)
    assert np.log2(errs[-3] / errs[-2]) >= 1.9


def test_membrane_strain_matches_expression():
    grid = Grid2(33, 33)
    X, Y = grid.mesh
    d = Displacement2D.from_functions(grid, w1=lambda X, Y: X * Y, v=lambda X, Y: X + 2 * Y)
    g = GrowthField.from_functions(grid, eps={(1, 2): lambda X, Y: X})
    E = membrane_strain(d, g)
    expect = np.zeros(grid.shape + (2, 2))
    expect[..., 0, 0] = Y + 0.5
    expect[..., 1, 1] = 2.0
    expect[..., 0, 1] = expect[..., 1, 0] = 1.0  # sym part of eps_12 = X is X/2
    assert np.allclose(E, expect, atol=1e-12)
    assert np.allclose(fd.sym(E), E)
