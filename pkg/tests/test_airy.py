import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings, strategies as st

from grownplate import fields as fd
from grownplate.airy import (airy_reconstruct, best_affine, boundary_residuals, build_stress,
                             el_residuals, lemma51_check, lemma51_residual)
from grownplate.energy2d import Displacement2D, membrane_strain
from grownplate.fields import Grid2
from grownplate.growth import GrowthField, make_compatible
from grownplate.material import Material
from grownplate.solver2d import SolverConfig, multistart

M11 = Material(1.0, 1.0)


def spherical(grid):
    one = lambda X, Y: 1 + 0 * X  # noqa: E731
    return GrowthField.from_functions(grid, kap={(1, 1): one, (2, 2): one})


@pytest.fixture(scope="module")
def solved():
    out = {}
    for n in (17, 33, 65):
        grid = Grid2(n, n)
        g = spherical(grid)
        d, rep = multistart(g, M11, SolverConfig(seed=0), 1)
        assert rep.converged
        out[n] = (d, g)
    return out


def test_build_stress_examples():
    grid = Grid2(9, 9)
    z = GrowthField.zeros(grid)
    s = build_stress(Displacement2D.zeros(grid), z, M11)
    assert not s.M.any() and not s.Psi.any() and not s.PsiTilde.any()
    one = lambda X, Y: 1 + 0 * X  # noqa: E731
    g = GrowthField.from_functions(grid, eps={(1, 1): one, (2, 2): one})
    s = build_stress(Displacement2D.zeros(grid), g, M11)
    assert np.allclose(s.Psi, -np.eye(2), atol=0)
    assert np.allclose(s.M, -10 / 3 * np.eye(2), rtol=1e-14, atol=0)


def test_compatible_state_is_stress_free():
    grid = Grid2(33, 33)
    X, Y = grid.mesh
    w0 = np.stack([0.1 * X**2 * Y, -0.2 * X * Y**2], -1)
    v0 = 0.3 * X**2 + 0.2 * X * Y - 0.1 * Y**2
    g = make_compatible(grid, w0, v0)
    d = Displacement2D(grid, w0, v0)
    s = build_stress(d, g, M11)
    assert np.abs(s.M).max() < 1e-12 and np.abs(s.PsiTilde).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 5), st.floats(-0.05, 5))
def test_stress_is_12B_times_E_plus_nu_cof_E(seed, mu, lam):
    rng = np.random.default_rng(seed)
    grid = Grid2(7, 7)
    m = Material(mu, lam)
    d = Displacement2D(grid, rng.normal(size=grid.shape + (2,)), rng.normal(size=grid.shape))
    g = GrowthField(grid, rng.normal(size=grid.shape + (3, 3)), np.zeros(grid.shape + (3, 3)))
    E = membrane_strain(d, g)
    M = build_stress(d, g, m).M
    assert np.allclose(M, 12 * m.B * (E + m.nu * fd.cof2(E)), rtol=1e-12, atol=1e-12 * np.abs(M).max())


def test_stress_symmetry_enforced():
    with pytest.raises(ValueError):
        airy_reconstruct(Grid2(5, 5), np.zeros((5, 5, 2, 2)) + [[0, 1], [0, 0]])
    with pytest.raises(ValueError):
        airy_reconstruct(Grid2(5, 5), np.zeros((4, 5, 2, 2)))


def test_airy_identity_stress():
    grid = Grid2(21, 17, lx=2.0, ly=1.5)
    X, Y = grid.mesh
    res = airy_reconstruct(grid, np.zeros(grid.shape + (2, 2)) + np.eye(2))
    x0, y0 = res.anchor
    assert np.abs(res.phi - ((X - x0) ** 2 + (Y - y0) ** 2) / 2).max() < 1e-10
    assert res.compatible and res.misfit < 1e-10


def test_airy_random_stress_is_flagged():
    grid = Grid2(21, 21)
    M = np.random.default_rng(0).normal(size=grid.shape + (2, 2))
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    res = airy_reconstruct(grid, M)
    assert not res.compatible and res.relative_misfit > 0.5


def test_airy_misfit_converges_at_minimisers(solved):
    rel = []
    for n, (d, g) in solved.items():
        rel.append(airy_reconstruct(d.grid, build_stress(d, g, M11).M).relative_misfit)
    slopes = np.log2(np.array(rel[:-1]) / np.array(rel[1:]))
    assert np.all(slopes >= 1.0)


def test_div_M_vanishes_at_minimisers(solved):
    norms = []
    for d, g in solved.values():
        div = fd.divergence(d.grid, build_stress(d, g, M11).M)
        norms.append(np.abs(div[d.grid.inset(0.125)]).max())
    assert norms[0] / norms[1] > 3 and norms[1] / norms[2] > 3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
def test_cof_is_an_involution(a):
    A = np.array([[a[0], a[1]], [a[2], a[3]]])
    assert np.array_equal(fd.cof2(fd.cof2(A)), A)


def test_el_residuals_trivial_and_flat():
    grid = Grid2(33, 33)
    z = GrowthField.zeros(grid)
    el = el_residuals(Displacement2D.zeros(grid), np.zeros(grid.shape), z, M11)
    assert el.r1_max == 0 and el.r2_max == 0
    X, Y = grid.mesh
    v0 = 0.4 * X**2 - 0.3 * X * Y + 0.2 * Y**2 + 0.1 * X**3
    w0 = np.stack([0.1 * X * Y, 0.05 * Y**2], -1)
    g = make_compatible(grid, w0, v0)
    el = el_residuals(Displacement2D(grid, w0, v0), np.zeros(grid.shape), g, M11)
    assert el.r1_max < 50 * grid.spacing**2 and el.r2_max < 50 * grid.spacing**2
    assert el.formulation_gap <= 1e-12


def test_el_formulations_agree(solved):
    d, g = solved[33]
    phi = airy_reconstruct(d.grid, build_stress(d, g, M11).M).phi
    el = el_residuals(d, phi, g, M11)
    scale = max(np.abs(el.r1).max(), np.abs(el.r2).max(), 1.0)
    assert el.formulation_gap <= 1e-12 * scale
    assert {"r1_max", "r2_max", "r1_max_inner", "r2_max_inner"} <= set(el.as_dict())


def test_boundary_residuals_zero_state():
    grid = Grid2(17, 17)
    rep = boundary_residuals(Displacement2D.zeros(grid), np.zeros(grid.shape),
                             GrowthField.zeros(grid), M11)
    for key in ("phi", "dn_phi", "b1", "b2"):
        assert rep.max(key) == 0.0
    assert rep.simplified is not None and max(rep.simplified.values()) == 0.0
    assert set(rep.edges) == {"left", "right", "bottom", "top"}


def test_best_affine_removes_affine_part():
    grid = Grid2(17, 17)
    X, Y = grid.mesh
    phi = 1.5 - 2 * X + 0.25 * Y
    assert np.abs(best_affine(grid, phi) - phi).max() < 1e-12
    d = Displacement2D.zeros(grid)
    rep = boundary_residuals(d, phi, GrowthField.zeros(grid), M11)
    assert rep.max("phi") < 1e-12 and rep.max("dn_phi") < 1e-12


def test_boundary_residuals_shrink(solved):
    vals = []
    for d, g in solved.values():
        phi = airy_reconstruct(d.grid, build_stress(d, g, M11).M).phi
        rep = boundary_residuals(d, phi, g, M11)
        vals.append([rep.max(k) for k in ("phi", "dn_phi", "b1", "b2")])
    vals = np.array(vals)
    assert np.all(vals[1] < vals[0]) and np.all(vals[2] < vals[1])


def test_lemma51_examples():
    grid = Grid2(33, 33)
    X, Y = grid.mesh
    lin = np.stack([1 + 2 * X - Y, 0.5 * X + 3 * Y], -1)
    assert lemma51_check(grid, lin, 2.0, 0.5).residual < 1e-10
    w = np.stack([X**2 * Y, X * Y**2], -1)
    rep = lemma51_check(grid, w, 2.0, 0.5)
    assert rep.residual <= 10 * grid.spacing**2 * rep.scale
    F = np.zeros(grid.shape + (2, 2))
    F[..., 0, 0] = Y**2 / 2
    rep = lemma51_check(grid, w, 1.0, 0.0, F_other=F)
    assert rep.other_residual == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        lemma51_residual(grid, F, 1.0, -0.5)
    with pytest.raises(ValueError):
        lemma51_residual(grid, F, 0.0, 1.0)


def test_lemma51_symbolic_oracle():
    x, y, a, b = sy.symbols("x y alpha beta")
    w1, w2 = x**2 * y + sy.sin(x * y), x * y**2 + sy.exp(x - y)
    div = sy.diff(w1, x) + sy.diff(w2, y)
    F11 = a * sy.diff(w1, x) + b * div
    F22 = a * sy.diff(w2, y) + b * div
    F12 = a * (sy.diff(w1, y) + sy.diff(w2, x)) / 2
    ctc = sy.diff(F11, y, 2) + sy.diff(F22, x, 2) - 2 * sy.diff(F12, x, y)
    tr = F11 + F22
    lap = sy.diff(tr, x, 2) + sy.diff(tr, y, 2)
    assert sy.simplify(ctc - b / (a + 2 * b) * lap) == 0
    # the non-example: only F11 = y^2/2
    assert sy.diff(y**2 / 2, y, 2) == 1


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=8, max_size=8), st.floats(0.2, 3), st.floats(-0.05, 2))
def test_lemma51_property(c, alpha, beta):
    grid = Grid2(33, 33)
    X, Y = grid.mesh
    w = np.stack([c[0] * X**3 + c[1] * X * Y**2 + c[2] * Y**3 + c[3] * X**2,
                  c[4] * X**2 * Y + c[5] * Y**3 + c[6] * X**3 + c[7] * X * Y], -1)
    rep = lemma51_check(grid, w, alpha, beta)
    assert rep.residual <= 10 * grid.spacing**2 * max(rep.scale, 1e-12) + 1e-9
