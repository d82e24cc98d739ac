import math
import os
import subprocess
import sys

import numpy as np
import pytest

from crdlab import kernels

NP = kernels.backend("numpy")
needs_numba = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba not installed")


@pytest.fixture(scope="module")
def nb():
    return kernels.backend("numba")


@pytest.fixture
def stream():
    r = np.random.default_rng(11)
    x = np.cumsum(r.standard_normal(5000)) * 0.1
    z = (0.5 - r.random(5000)) * 0.8
    return x, z


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.backend("fortran")


def test_all_names_exported():
    for name in kernels.KERNELS:
        assert callable(getattr(kernels, name)) and callable(getattr(NP, name))


def test_env_selects_numpy():
    code = "from crdlab import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CRDLAB_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"


def test_env_rejects_garbage():
    code = "import crdlab.kernels"
    env = dict(os.environ, CRDLAB_BACKEND="cuda")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    if kernels.NUMBA_AVAILABLE:
        assert out.returncode != 0 and "CRDLAB_BACKEND" in out.stderr


class TestGamma:
    def test_lengths_exact_at_powers_of_two(self):
        v = np.array([1, 2, 3, 4, 2 ** 32 - 1, 2 ** 32, 2 ** 63], dtype=np.uint64)
        assert NP.gamma_lengths(v).tolist() == [1, 3, 3, 5, 63, 65, 127]

    def test_round_trip(self):
        v = np.array([1, 5, 17, 2 ** 40 + 3, 2], dtype=np.uint64)
        bits = NP.gamma_encode(v)
        assert bits.size == NP.gamma_lengths(v).sum()
        out, got, pos = NP.gamma_decode(bits, 0, 5)
        assert got == 5 and pos == bits.size and np.array_equal(out[:got], v)

    def test_partial_read(self):
        v = np.array([9, 9, 9], dtype=np.uint64)
        bits = NP.gamma_encode(v)[:-2]
        _, got, _ = NP.gamma_decode(bits, 0, 3)
        assert got == 2


@needs_numba
class TestEquivalence:
    def test_dpcm(self, nb, stream):
        x, z = stream
        a = NP.dpcm_encode(x, z, 0.9, 0.8, 0.6)
        b = nb.dpcm_encode(x, z, 0.9, 0.8, 0.6)
        for u, v in zip(a, b):
            assert np.array_equal(u, v)
        assert np.array_equal(NP.dpcm_reconstruct(a[0], z, 0.9, 0.8, 0.6, 0.0),
                              nb.dpcm_reconstruct(a[0], z, 0.9, 0.8, 0.6, 0.0))

    def test_dpcm_huge_input(self, nb):
        x = np.array([1e300, -1e300, 0.0])
        z = np.zeros(3)
        a, b = NP.dpcm_encode(x, z, 0.5, 1.0, 0.5), nb.dpcm_encode(x, z, 0.5, 1.0, 0.5)
        assert np.array_equal(a[0], b[0])

    def test_gamma(self, nb):
        v = np.random.default_rng(2).integers(1, 2 ** 50, 3000).astype(np.uint64)
        assert np.array_equal(NP.gamma_lengths(v), nb.gamma_lengths(v))
        bits = NP.gamma_encode(v)
        assert np.array_equal(bits, nb.gamma_encode(v))
        a, b = NP.gamma_decode(bits, 0, 3000), nb.gamma_decode(bits, 0, 3000)
        assert np.array_equal(a[0][: a[1]], b[0][: b[1]]) and a[1:] == b[1:]

    def test_kt(self, nb):
        r = np.random.default_rng(3)
        sym, ctx = r.integers(0, 9, 4000), r.integers(0, 4, 4000)
        assert np.allclose(NP.kt_codelengths(sym, ctx, 9, 4), nb.kt_codelengths(sym, ctx, 9, 4),
                           rtol=1e-12)

    def test_dp(self, nb):
        grid = np.geomspace(1e-6 * 0.19, 1.0, 256)
        Wa = NP.dp_backward(grid, 8, 0.81, 0.19, 3.0)
        Wb = nb.dp_backward(grid, 8, 0.81, 0.19, 3.0)
        assert np.allclose(Wa, Wb, rtol=1e-12, atol=1e-12)
        assert np.allclose(NP.dp_forward(grid, Wa, 8, 0.81, 0.19, 3.0, 1.0),
                           nb.dp_forward(grid, Wb, 8, 0.81, 0.19, 3.0, 1.0), rtol=1e-12)

    def test_refine(self, nb):
        s0 = np.full(20, 0.3)
        a, ia = NP.refine_ratios(s0, 4.0, 0.81, 0.19, 1.0, 500, 1e-14)
        b, ib = nb.refine_ratios(s0, 4.0, 0.81, 0.19, 1.0, 500, 1e-14)
        assert np.allclose(a, b, rtol=1e-12) and ia == ib

    def test_brute_force(self, nb):
        a = NP.brute_force(3, 0.02, 1.0, 0.81, 0.19, 0.3)
        b = nb.brute_force(3, 0.02, 1.0, 0.81, 0.19, 0.3)
        assert math.isclose(a[0], b[0], rel_tol=1e-12) and np.allclose(a[1], b[1])


def test_solver_agrees_across_backends():
    code = ("from crdlab import solver, gauss;"
            "print(repr(solver.finite_horizon_irdf(gauss.ArSourceModel([0.9], 0.19), 0.1, 64).R))")
    vals = []
    for name in ("numpy", "numba") if kernels.NUMBA_AVAILABLE else ("numpy",):
        env = dict(os.environ, CRDLAB_BACKEND=name)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        vals.append(float(out.stdout))
    assert max(vals) - min(vals) < 1e-10
