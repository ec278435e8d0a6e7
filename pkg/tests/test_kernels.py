import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grownplate import _accel, kernels
from grownplate.fields import dist_SO3
from grownplate.material import Material, w_density


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-8, 0.5))
def test_svk_flavours_agree(seed, amp):
    if not _accel.HAS_NUMBA:
        pytest.skip("numba not installed")
    rng = np.random.default_rng(seed)
    Hd = amp * rng.normal(size=(64, 3, 3))
    B = amp * rng.normal(size=(64, 3, 3))
    W1, G1 = kernels.svk_numpy(Hd, B, 1.3, 0.4)
    W2, G2 = kernels._svk_numba(Hd, B, 1.3, 0.4)
    assert np.allclose(W1, W2, rtol=1e-12, atol=0)
    assert np.allclose(G1, G2, rtol=1e-12, atol=1e-14 * np.abs(G1).max())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_svk_matches_density(seed):
    rng = np.random.default_rng(seed)
    m = Material(1.1, 0.6)
    Hd = 0.2 * rng.normal(size=(8, 3, 3))
    B = 0.1 * rng.normal(size=(8, 3, 3))
    W, _ = kernels.svk(Hd, B, m.mu, m.lam)
    for k in range(8):
        F = (np.eye(3) + Hd[k]) @ (np.eye(3) + B[k])
        assert W[k] == pytest.approx(w_density(m, F), rel=1e-12, abs=1e-15)


def test_svk_derivative():
    rng = np.random.default_rng(1)
    Hd = 0.1 * rng.normal(size=(1, 3, 3))
    B = 0.05 * rng.normal(size=(1, 3, 3))
    _, dG = kernels.svk(Hd, B, 1.0, 0.7)
    P = rng.normal(size=(1, 3, 3))
    t = 1e-6
    fd = (kernels.svk(Hd + t * P, B, 1.0, 0.7)[0] - kernels.svk(Hd - t * P, B, 1.0, 0.7)[0]) / (2 * t)
    assert fd[0] == pytest.approx(np.sum(dG * P), rel=1e-7)


def test_dist2_so3_flavours_agree():
    rng = np.random.default_rng(2)
    F = rng.normal(size=(50, 3, 3))
    d = kernels.dist2_so3(F)
    assert np.allclose(d, dist_SO3(F) ** 2, rtol=1e-12)
    if _accel.HAS_NUMBA:
        assert np.allclose(d, kernels._dist2_so3_numba(F), rtol=1e-10)
    assert kernels.dist2_so3(np.eye(3))[0] == 0.0


def test_numpy_fallback_switch():
    code = ("from grownplate import _accel, kernels; import numpy as np;"
            "print(_accel.USE_NUMBA);"
            "print(float(kernels.svk(0.1*np.ones((2,3,3)), np.zeros((2,3,3)), 1.0, 1.0)[0][0]))")
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, GROWNPLATE_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        out[flag] = res.stdout.split()
    assert out["1"][0] == "False"
    assert out["0"][0] == str(_accel.HAS_NUMBA)
    assert float(out["1"][1]) == pytest.approx(float(out["0"][1]), rel=1e-13)
