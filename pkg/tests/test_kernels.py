"""Backend parity: the compiled core must reproduce the NumPy reference."""

from dataclasses import replace

import numpy as np
import pytest

from vbisim._kernels import HAVE_NATIVE, get_backend, py_kernels
from vbisim._kernels.py_kernels import newmark_coefficients, newmark_step
from vbisim.analysis import benchmark_config
from vbisim.coupling import TrafficSpec, run_coupled, run_decoupled

needs_native = pytest.mark.skipif(not HAVE_NATIVE, reason="compiled core not built")


class TestBackendSelection:
    def test_python_backend_always_available(self):
        assert get_backend("python") is py_kernels

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            get_backend("fortran")

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("VBI_KERNELS", "python")
        assert get_backend() is py_kernels


class TestNewmarkStepContract:
    def test_discrete_balance_random_system(self, rng):
        n = 7
        A = rng.normal(size=(n, n))
        K = A @ A.T + n * np.eye(n)
        C = 0.05 * K
        m = rng.uniform(0.5, 2.0, n)
        dt = 0.01
        coeffs = newmark_coefficients(dt)
        k_eff = K + coeffs[0] * np.diag(m) + coeffs[1] * C
        chol = np.linalg.cholesky(k_eff)
        u = rng.normal(size=n)
        v = rng.normal(size=n)
        f0 = rng.normal(size=n)
        a = np.linalg.solve(np.diag(m), f0 - C @ v - K @ u)
        f1 = rng.normal(size=n)
        u1, v1, a1 = newmark_step(chol, m, C, coeffs, u, v, a, f1)
        resid = m * a1 + C @ v1 + K @ u1 - f1
        assert np.max(np.abs(resid)) < 1e-9 * np.max(np.abs(f1))


@needs_native
class TestBackendParity:
    def test_coupled_run_matches(self):
        cfg = benchmark_config("yang2019")
        cfg = replace(cfg, t_end=1.2, traffic=TrafficSpec(n_vehicles=3, seed=5))
        res_py = run_coupled(cfg, backend="python")
        res_nat = run_coupled(cfg, backend="native")
        assert np.array_equal(res_py.iterations, res_nat.iterations)
        scale = np.max(np.abs(res_py.bridge_disp))
        assert np.max(np.abs(res_py.bridge_disp - res_nat.bridge_disp)) < 1e-10 * scale
        fscale = np.max(np.abs(res_py.vehicles[0].contact_forces))
        assert (
            np.max(np.abs(res_py.vehicles[0].contact_forces - res_nat.vehicles[0].contact_forces))
            < 1e-10 * fscale
        )

    def test_coupled_run_matches_with_roughness(self):
        cfg = replace(benchmark_config("eshkevari_30_heavy"), t_end=3.5)
        res_py = run_coupled(cfg, backend="python")
        res_nat = run_coupled(cfg, backend="native")
        scale = np.max(np.abs(res_py.bridge_disp))
        assert np.max(np.abs(res_py.bridge_disp - res_nat.bridge_disp)) < 1e-9 * scale
        vscale = np.max(np.abs(res_py.vehicles[0].accel))
        assert np.max(np.abs(res_py.vehicles[0].accel - res_nat.vehicles[0].accel)) < 1e-9 * vscale

    def test_decoupled_run_matches(self):
        cfg = replace(benchmark_config("nube_v2"), t_end=1.0)
        res_py = run_decoupled(cfg, backend="python")
        res_nat = run_decoupled(cfg, backend="native")
        scale = np.max(np.abs(res_py.bridge_disp))
        assert np.max(np.abs(res_py.bridge_disp - res_nat.bridge_disp)) < 1e-10 * scale
        for i in range(1):
            a = res_py.vehicles[i].disp
            b = res_nat.vehicles[i].disp
            assert np.max(np.abs(a - b)) < 1e-10 * max(np.max(np.abs(a)), 1e-30)

    def test_hermitian_parity(self):
        cfg = replace(benchmark_config("yang2019"), t_end=1.0, hermitian_interp=True)
        res_py = run_coupled(cfg, backend="python")
        res_nat = run_coupled(cfg, backend="native")
        scale = np.max(np.abs(res_py.bridge_disp))
        assert np.max(np.abs(res_py.bridge_disp - res_nat.bridge_disp)) < 1e-10 * scale
