"""Beam FE core: mesh, assembly, eigen analysis, damping, Newmark stepping."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vbisim._kernels.py_kernels import newmark_coefficients, newmark_step
from vbisim.beam import (
    BridgeModel,
    BridgeState,
    assemble,
    assemble_full,
    build_mesh,
    eigen_frequencies,
    eigen_modes,
    initial_acceleration,
    make_newmark,
    rayleigh_coefficients,
    static_solve,
    step,
    support_reactions,
)
from vbisim.errors import InvalidFrequency, InvalidModel, SupportOffMesh


def simple_bridge(L=25.0, E=2.75e10, I=0.12, m_bar=4800.0, zeta=0.0, n_el=20, supports=None):
    return BridgeModel(
        span_length=L,
        support_positions=supports or (0.0, L),
        elastic_modulus=E,
        second_moment=I,
        area=2.0,
        mass_per_length=m_bar,
        damping_ratio=zeta,
        num_elements=n_el,
    )


def analytic_frequency(mode, L, E, I, m_bar):
    return (mode * np.pi / L) ** 2 * np.sqrt(E * I / m_bar) / (2.0 * np.pi)


def midspan_force_vector(mesh, P):
    f = np.zeros(mesh.n_free)
    mid = mesh.n_nodes // 2
    f[mesh.vertical_free[mid]] = -P
    return f


class TestBridgeModel:
    def test_invalid_parameters_rejected(self):
        with pytest.raises(InvalidModel):
            simple_bridge(L=-1.0)
        with pytest.raises(InvalidModel):
            simple_bridge(n_el=1)
        with pytest.raises(InvalidModel):
            simple_bridge(zeta=-0.01)

    def test_supports_must_ascend_and_span_ends(self):
        with pytest.raises(InvalidModel):
            simple_bridge(supports=(0.0,))
        with pytest.raises(InvalidModel):
            simple_bridge(supports=(25.0, 0.0))
        with pytest.raises(InvalidModel):
            simple_bridge(supports=(1.0, 25.0))

    def test_support_off_mesh(self):
        model = simple_bridge(supports=(0.0, 12.3, 25.0), n_el=10)
        with pytest.raises(SupportOffMesh):
            build_mesh(model)


class TestBuildMesh:
    def test_lumped_masses_25m(self):
        mesh = build_mesh(simple_bridge(n_el=10))
        assert mesh.n_nodes == 11
        assert_allclose(mesh.dx, 2.5)
        assert_allclose(mesh.lumped_masses[0], 6000.0)
        assert_allclose(mesh.lumped_masses[-1], 6000.0)
        assert_allclose(mesh.lumped_masses[1:-1], 12000.0)

    def test_mass_sum_matches_total(self):
        model = simple_bridge(n_el=17)
        mesh = build_mesh(model)
        total = model.mass_per_length * model.span_length
        assert abs(mesh.lumped_masses.sum() - total) / total < 1e-12

    def test_single_span_pin_and_roller(self):
        mesh = build_mesh(simple_bridge())
        kinds = [kind for _, kind in mesh.boundary_conditions]
        assert kinds == ["pin", "roller"]
        # pin fixes u_x and u_y of node 0, roller only u_y of the last node
        assert set(mesh.constrained_dofs) == {0, 1, 3 * (mesh.n_nodes - 1) + 1}

    def test_two_span_layout(self):
        model = simple_bridge(L=60.0, supports=(0.0, 30.0, 60.0), n_el=60)
        mesh = build_mesh(model)
        assert list(mesh.support_nodes) == [0, 30, 60]
        kinds = [kind for _, kind in mesh.boundary_conditions]
        assert kinds == ["pin", "roller", "roller"]


class TestAssemble:
    def test_stiffness_symmetric(self, table2_mesh, table2_bridge):
        _, _, K = assemble(table2_mesh, table2_bridge)
        assert np.max(np.abs(K - K.T)) < 1e-9 * np.max(np.abs(K))

    def test_mass_diagonal_vertical_only(self, table2_mesh, table2_bridge):
        M, C0, _ = assemble(table2_mesh, table2_bridge)
        assert np.allclose(M, np.diag(np.diag(M)))
        assert np.all(np.diag(M) >= 0.0)
        assert np.count_nonzero(C0) == 0

    def test_rigid_body_translation(self, table2_mesh, table2_bridge):
        _, K_full = assemble_full(table2_mesh, table2_bridge)
        u = np.zeros(3 * table2_mesh.n_nodes)
        u[1::3] = 1.0
        resid = K_full @ u
        free = resid[table2_mesh.free_dofs]
        assert np.max(np.abs(free)) < 1e-8 * np.max(np.abs(K_full))

    def test_midspan_static_deflection(self):
        model = simple_bridge(n_el=8)
        mesh = build_mesh(model)
        P = 1.0e5
        u = static_solve(mesh, model, midspan_force_vector(mesh, P))
        w_mid = u[mesh.vertical_free[mesh.n_nodes // 2]]
        exact = P * model.span_length**3 / (48.0 * model.elastic_modulus * model.second_moment)
        assert abs(-w_mid - exact) / exact < 0.005

    def test_zero_load_zero_displacement(self, table2_mesh, table2_bridge):
        u = static_solve(table2_mesh, table2_bridge, np.zeros(table2_mesh.n_free))
        assert np.all(u == 0.0)

    def test_symmetric_load_symmetric_response(self, table2_mesh, table2_bridge):
        f = np.zeros(table2_mesh.n_free)
        n = table2_mesh.n_nodes
        for j in (n // 4, 3 * (n // 4)):
            f[table2_mesh.vertical_free[j]] = -5e4
        u = static_solve(table2_mesh, table2_bridge, f)
        w = table2_mesh.vertical_values(u)
        asym = np.max(np.abs(w - w[::-1])) / np.max(np.abs(w))
        assert asym < 1e-10


class TestEigen:
    def test_table2_fundamental(self, table2_mesh, table2_bridge):
        f = eigen_frequencies(table2_mesh, table2_bridge, 2)
        assert abs(f[0] - 2.08) / 2.08 < 0.01

    def test_b27_fundamental(self, nube_bridge):
        mesh = build_mesh(nube_bridge)
        f = eigen_frequencies(mesh, nube_bridge, 2)
        assert abs(f[0] - 3.7824) / 3.7824 < 0.01

    def test_parametric_row_30m(self):
        model = simple_bridge(L=30.0, I=0.0188, m_bar=119.0)
        f = eigen_frequencies(build_mesh(model), model, 2)
        assert abs(f[0] - 3.63) / 3.63 < 0.02

    def test_convergence_toward_analytic(self):
        errs = []
        for n_el in (10, 20, 40):
            model = simple_bridge(n_el=n_el)
            f = eigen_frequencies(build_mesh(model), model, 2)
            exact = [analytic_frequency(m, 25.0, 2.75e10, 0.12, 4800.0) for m in (1, 2)]
            errs.append(max(abs(f[i] - exact[i]) / exact[i] for i in range(2)))
        assert errs[0] >= errs[1] >= errs[2] - 1e-12
        assert errs[2] < 0.002


class TestRayleigh:
    def test_zero_damping(self):
        assert rayleigh_coefficients(0.0, 10.0, 20.0) == (0.0, 0.0)

    def test_equal_frequencies_reduction(self):
        zeta, omega = 0.02, 12.0
        alpha, beta_k = rayleigh_coefficients(zeta, omega, omega)
        assert_allclose(alpha, zeta * omega)
        assert_allclose(beta_k, zeta / omega)

    def test_resubstitution_at_fit_points(self):
        model = simple_bridge(L=30.0, I=0.0188, m_bar=119.0, zeta=0.003)
        mesh = build_mesh(model)
        f = eigen_frequencies(mesh, model, 2)
        w1, w2 = 2.0 * np.pi * f
        alpha, beta_k = rayleigh_coefficients(0.003, w1, w2)
        for w in (w1, w2):
            zeta_back = 0.5 * (alpha / w + beta_k * w)
            assert abs(zeta_back - 0.003) < 1e-12

    def test_nonpositive_frequency_rejected(self):
        with pytest.raises(InvalidFrequency):
            rayleigh_coefficients(0.01, 0.0, 5.0)


class TestNewmarkOperator:
    def test_undamped_gives_zero_damping_matrix(self, table2_mesh, table2_bridge):
        op = make_newmark(table2_mesh, table2_bridge, 1e-3)
        assert not op.has_damping
        assert np.count_nonzero(op.C) == 0

    def test_factorization_reuse_is_bitwise(self, table2_mesh, table2_bridge):
        op = make_newmark(table2_mesh, table2_bridge, 1e-3)
        f = midspan_force_vector(table2_mesh, 1e4)
        s_reuse = BridgeState.zeros(op.n_free)
        for _ in range(3):
            s_reuse = step(op, s_reuse, f)
        s_refac = BridgeState.zeros(op.n_free)
        for _ in range(3):
            op_fresh = make_newmark(table2_mesh, table2_bridge, 1e-3)
            s_refac = step(op_fresh, s_refac, f)
        assert np.array_equal(s_reuse.w, s_refac.w)
        assert np.array_equal(s_reuse.w_dot, s_refac.w_dot)
        assert np.array_equal(s_reuse.w_ddot, s_refac.w_ddot)

    def test_second_order_accuracy_in_dt(self, table2_mesh, table2_bridge):
        freqs, shapes = eigen_modes(table2_mesh, table2_bridge, 1)
        omega = 2.0 * np.pi * freqs[0]
        period = 1.0 / freqs[0]
        shape = shapes[:, 0] / np.max(np.abs(shapes[:, 0]))

        def phase_error(dt):
            op = make_newmark(table2_mesh, table2_bridge, dt)
            n = int(round(3 * period / dt))
            state = BridgeState(0.0, 1e-3 * shape, np.zeros_like(shape),
                                initial_acceleration(op, 1e-3 * shape, np.zeros_like(shape),
                                                     np.zeros_like(shape)))
            mid = table2_mesh.vertical_free[table2_mesh.n_nodes // 2]
            errs = []
            for i in range(n):
                state = step(op, state, np.zeros_like(shape))
                exact = 1e-3 * shape[mid] * np.cos(omega * state.t)
                errs.append(state.w[mid] - exact)
            return np.sqrt(np.mean(np.square(errs)))

        dt0 = period / 60.0
        ratio = phase_error(dt0) / phase_error(dt0 / 2.0)
        assert 3.5 < ratio < 4.5


class TestStep:
    def test_zero_everything_stays_zero(self, table2_mesh, table2_bridge):
        op = make_newmark(table2_mesh, table2_bridge, 1e-3)
        state = BridgeState.zeros(op.n_free)
        for _ in range(10):
            state = step(op, state, np.zeros(op.n_free))
        assert np.all(state.w == 0.0) and np.all(state.w_dot == 0.0)

    def test_energy_conservation_undamped(self, table2_mesh, table2_bridge):
        """Average acceleration conserves energy in free vibration."""
        op = make_newmark(table2_mesh, table2_bridge, 1e-3)
        _, shapes = eigen_modes(table2_mesh, table2_bridge, 1)
        w0 = 1e-3 * shapes[:, 0]
        state = BridgeState(
            0.0, w0, np.zeros_like(w0), initial_acceleration(op, w0, np.zeros_like(w0), np.zeros_like(w0))
        )

        def energy(s):
            return 0.5 * s.w_dot @ (op.m_diag * s.w_dot) + 0.5 * s.w @ (op.K @ s.w)

        e0 = energy(state)
        for _ in range(1000):
            state = step(op, state, np.zeros_like(w0))
        assert abs(energy(state) - e0) / e0 < 1e-9

    def test_discrete_balance_residual(self, table2_mesh, table2_bridge):
        op = make_newmark(table2_mesh, table2_bridge, 1e-3)
        f = midspan_force_vector(table2_mesh, 2.5e4)
        state = BridgeState.zeros(op.n_free)
        for _ in range(50):
            state = step(op, state, f)
        resid = op.m_diag * state.w_ddot + op.C @ state.w_dot + op.K @ state.w - f
        assert np.max(np.abs(resid)) < 1e-9 * np.max(np.abs(f))

    def test_step_load_mean_matches_static(self, table2_mesh, table2_bridge):
        """Suddenly applied force: response oscillates about the static solution."""
        op = make_newmark(table2_mesh, table2_bridge, 1e-3)
        P = 5e4
        f = midspan_force_vector(table2_mesh, P)
        u_static = static_solve(table2_mesh, table2_bridge, f)
        mid = table2_mesh.vertical_free[table2_mesh.n_nodes // 2]
        period = 1.0 / eigen_frequencies(table2_mesh, table2_bridge, 2)[0]
        n = int(round(20 * period / 1e-3))
        state = BridgeState.zeros(op.n_free)
        hist = []
        for _ in range(n):
            state = step(op, state, f)
            hist.append(state.w[mid])
        assert abs(np.mean(hist) - u_static[mid]) / abs(u_static[mid]) < 1e-3

    @pytest.mark.parametrize("dt", [1e-3, 1e-2, 0.1, 1.0, 10.0])
    def test_unconditional_stability(self, table2_mesh, table2_bridge, dt):
        """Spectral radius of the modal amplification map stays at 1."""
        freqs, _ = eigen_modes(table2_mesh, table2_bridge, 5)
        coeffs = newmark_coefficients(dt)
        for f_hz in freqs:
            k = (2.0 * np.pi * f_hz) ** 2
            chol = np.linalg.cholesky(np.array([[k + coeffs[0]]]))
            m_diag = np.ones(1)
            A = np.zeros((3, 3))
            for col, seed in enumerate(np.eye(3)):
                u1, v1, a1 = newmark_step(
                    chol, m_diag, None, coeffs, seed[:1], seed[1:2], seed[2:3], np.zeros(1)
                )
                A[:, col] = [u1[0], v1[0], a1[0]]
            rho = np.max(np.abs(np.linalg.eigvals(A)))
            assert rho <= 1.0 + 1e-12


class TestReactionsAndMultiSpan:
    def test_static_reactions_balance_load(self, table2_mesh, table2_bridge):
        f = np.zeros(table2_mesh.n_free)
        rng = np.random.default_rng(7)
        loads = rng.uniform(1e3, 1e5, table2_mesh.n_nodes - 2)
        for j, P in zip(range(1, table2_mesh.n_nodes - 1), loads):
            f[table2_mesh.vertical_free[j]] = -P
        u = static_solve(table2_mesh, table2_bridge, f)
        reactions = support_reactions(table2_mesh, table2_bridge, u)
        assert abs(reactions.sum() - loads.sum()) / loads.sum() < 1e-9

    def test_two_span_hogging(self):
        model = simple_bridge(L=60.0, supports=(0.0, 30.0, 60.0), n_el=40)
        mesh = build_mesh(model)
        f = np.zeros(mesh.n_free)
        mid_span1 = 10  # x = 15 m
        f[mesh.vertical_free[mid_span1]] = -1e5
        u = static_solve(mesh, model, f)
        w = mesh.vertical_values(u)
        assert w[20] == 0.0  # intermediate support node (x = 30 m)
        assert w[10] < 0.0  # loaded span sags
        assert w[30] > 0.0  # far span rises
