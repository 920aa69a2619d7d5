"""Coupled/decoupled simulation: contact kinematics, force mapping, runs."""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vbisim.analysis import benchmark_config, on_bridge_window
from vbisim.beam import BridgeState, build_mesh, make_newmark, step, support_reactions
from vbisim.coupling import (
    ScenarioConfig,
    TrafficSpec,
    Trajectory,
    _build_plan,
    contact_input,
    interpolate_bridge,
    make_fleet,
    map_forces,
    run_coupled,
    run_decoupled,
    simulate,
    traffic_forces,
)
from vbisim.errors import OffBridge
from vbisim.roughness import RoughnessSpec, evaluate
from vbisim.vehicle import OneAxleSimple, TwoAxleComp2

from test_beam import simple_bridge


def state_with_vertical(mesh, values):
    w = np.zeros(mesh.n_free)
    for j, val in enumerate(values):
        idx = mesh.vertical_free[j]
        if idx >= 0:
            w[idx] = val
    return BridgeState(0.0, w, 0.2 * w, np.zeros_like(w))


class TestInterpolateBridge:
    def test_nodal_values_exact(self, table2_mesh):
        vals = np.sin(np.linspace(0, np.pi, table2_mesh.n_nodes))
        state = state_with_vertical(table2_mesh, vals)
        for j in (3, 10, 17):
            w, wd = interpolate_bridge(table2_mesh, state, table2_mesh.node_coords[j])
            assert_allclose(w, vals[j], rtol=1e-12)
            assert_allclose(wd, 0.2 * vals[j], rtol=1e-12)

    def test_element_midpoint_linear(self, table2_mesh):
        vals = np.zeros(table2_mesh.n_nodes)
        vals[5] = 1.0
        state = state_with_vertical(table2_mesh, vals)
        x = 0.5 * (table2_mesh.node_coords[4] + table2_mesh.node_coords[5])
        w, _ = interpolate_bridge(table2_mesh, state, x)
        assert_allclose(w, 0.5)

    def test_uniform_field_partition_of_unity(self, table2_mesh):
        state = state_with_vertical(table2_mesh, np.full(table2_mesh.n_nodes, 0.7))
        for x in np.linspace(1.3, 23.7, 9):
            w, _ = interpolate_bridge(table2_mesh, state, x)
            # end nodes are constrained to zero, so stay inside the span
            assert_allclose(w, 0.7, rtol=1e-12)

    def test_off_bridge_raises(self, table2_mesh):
        state = BridgeState.zeros(table2_mesh.n_free)
        with pytest.raises(OffBridge):
            interpolate_bridge(table2_mesh, state, -0.1)


class TestContactInput:
    def test_smooth_road_rigid_bridge(self, table2_mesh):
        state = BridgeState.zeros(table2_mesh.n_free)
        assert contact_input(table2_mesh, state, None, 12.0, 10.0) == (0.0, 0.0)

    def test_rigid_bridge_single_harmonic(self, table2_mesh):
        from test_roughness import single_harmonic

        prof = single_harmonic(amplitude=0.01, n=0.1, phase=0.0)
        state = BridgeState.zeros(table2_mesh.n_free)
        v = 10.0
        u, ud = contact_input(table2_mesh, state, prof, 2.5, v)
        assert abs(u) < 1e-14
        assert_allclose(ud, -v * 0.01 * 2 * np.pi * 0.1)

    def test_superposition_with_bridge_field(self, table2_mesh):
        from test_roughness import single_harmonic

        prof = single_harmonic(amplitude=0.004, n=0.07, phase=0.2)
        delta = 2e-3
        vals = delta * np.sin(np.pi * table2_mesh.node_coords / 25.0)
        state = state_with_vertical(table2_mesh, vals)
        x = 12.5
        u, _ = contact_input(table2_mesh, state, prof, x, 10.0)
        r, _ = evaluate(prof, x)
        assert_allclose(u, delta + r, rtol=1e-12)

    def test_off_bridge_roughness_only(self, table2_mesh):
        from test_roughness import single_harmonic

        prof = single_harmonic(amplitude=0.01, n=0.03, phase=0.0)
        state = state_with_vertical(table2_mesh, np.ones(table2_mesh.n_nodes))
        x, v = 60.0, 15.0
        u, ud = contact_input(table2_mesh, state, prof, x, v)
        r, dr = evaluate(prof, x)
        assert_allclose(u, r)
        assert_allclose(ud, v * dr)


class TestMapForces:
    def test_axle_at_node(self, table2_mesh):
        x = table2_mesh.node_coords[7]
        f, uplift = map_forces(table2_mesh, [x], [1000.0])
        assert not uplift.any()
        assert_allclose(f[table2_mesh.vertical_free[7]], -1000.0)
        assert_allclose(-f.sum(), 1000.0)

    def test_midpoint_split(self, table2_mesh):
        x = 0.5 * (table2_mesh.node_coords[7] + table2_mesh.node_coords[8])
        f, _ = map_forces(table2_mesh, [x], [1000.0])
        assert_allclose(f[table2_mesh.vertical_free[7]], -500.0)
        assert_allclose(f[table2_mesh.vertical_free[8]], -500.0)

    def test_quarter_point(self, table2_mesh):
        x = table2_mesh.node_coords[7] + 0.25 * table2_mesh.dx
        f, _ = map_forces(table2_mesh, [x], [1000.0])
        assert_allclose(f[table2_mesh.vertical_free[7]], -750.0)
        assert_allclose(f[table2_mesh.vertical_free[8]], -250.0)

    def test_off_bridge_excluded(self, table2_mesh):
        f, uplift = map_forces(table2_mesh, [-1.0, 26.0], [500.0, 500.0])
        assert np.all(f == 0.0) and not uplift.any()

    def test_uplift_clamped_and_flagged(self, table2_mesh):
        f, uplift = map_forces(table2_mesh, [10.0], [-250.0])
        assert np.all(f == 0.0)
        assert uplift.tolist() == [True]

    def test_partition_of_unity_interior(self, table2_mesh, rng):
        xs = rng.uniform(2.0, 23.0, 6)
        forces = rng.uniform(1e3, 1e5, 6)
        f, _ = map_forces(table2_mesh, xs, forces)
        assert_allclose(-f.sum(), forces.sum(), rtol=1e-15)


class TestTrafficForces:
    def test_zero_vehicles(self, table2_mesh):
        f = traffic_forces(table2_mesh, TrafficSpec(n_vehicles=0, seed=3))
        assert np.all(f == 0.0)

    def test_total_matches_weight(self, table2_mesh):
        f = traffic_forces(table2_mesh, TrafficSpec(n_vehicles=5, seed=3))
        assert abs(-f.sum() - 5 * 2000.0 * 9.81) / (5 * 2000.0 * 9.81) < 1e-9

    def test_deterministic(self, table2_mesh):
        a = traffic_forces(table2_mesh, TrafficSpec(n_vehicles=5, seed=3))
        b = traffic_forces(table2_mesh, TrafficSpec(n_vehicles=5, seed=3))
        assert np.array_equal(a, b)


class TestPlanKinematics:
    def test_axle_positions_and_roughness_lag(self):
        cfg = benchmark_config("yang2019")
        rough = RoughnessSpec(
            class_or_coefficient="C", span=30.0, x0=-20.0, x_max=80.0, dx=0.05, seed=4
        )
        cfg = replace(cfg, roughness=rough, t_end=1.0)
        plan, mesh, systems, t, _ = _build_plan(cfg)
        traj = cfg.vehicles[0][1]
        profile_r = plan.r_ax[0]
        x = plan.x_ax[0]
        assert_allclose(x[:, 1] - x[:, 0], 3.0)  # axle spacing preserved
        from vbisim.roughness import generate

        prof = generate(rough)
        for idx in (0, 300, 900):
            for a in (0, 1):
                r, dr = evaluate(prof, x[idx, a])
                assert_allclose(profile_r[idx, a], r, rtol=1e-12)
                assert_allclose(plan.rdot_ax[0][idx, a], traj.speed * dr, rtol=1e-12)


class TestRunCoupled:
    def test_zero_mass_limit_matches_decoupled(self):
        """Vanishing vehicle mass reduces coupling to the moving-force case."""
        cfg = benchmark_config("yang2004")
        tiny = OneAxleSimple(m=1200.0 * 1e-6, k=5.0e5, c=0.0)
        cfg = replace(cfg, vehicles=((tiny, cfg.vehicles[0][1]),), tol=1e-10)
        res_c = run_coupled(cfg)
        res_d = run_decoupled(cfg)
        wc, wd = res_c.midspan_displacement, res_d.midspan_displacement
        err = np.sqrt(np.mean((wc - wd) ** 2)) / np.sqrt(np.mean(wd**2))
        assert err < 1e-4

    def test_benchmark2_iteration_range(self):
        res = run_coupled(benchmark_config("yang2019"))
        assert res.iterations.min() >= 1
        assert res.iterations.max() <= 4
        assert res.flags.non_convergence_steps == 0

    def test_bitwise_determinism(self):
        cfg = benchmark_config("eshkevari_30_commercial")
        cfg = replace(cfg, t_end=1.5)
        a = run_coupled(cfg)
        b = run_coupled(cfg)
        assert np.array_equal(a.bridge_disp, b.bridge_disp)
        assert np.array_equal(a.vehicles[0].accel, b.vehicles[0].accel)
        assert np.array_equal(a.vehicles[0].contact_forces, b.vehicles[0].contact_forces)
        assert np.array_equal(a.iterations, b.iterations)

    def test_load_scale_invariance_of_iterations(self):
        """Scaling all loads (gravity, roughness power) preserves Eq-residual paths."""
        base = benchmark_config("eshkevari_30_commercial")
        base = replace(base, t_end=2.0, traffic=TrafficSpec(n_vehicles=5, seed=11))
        scaled_rough = replace(
            base.roughness, class_or_coefficient=16e-6 * 100.0
        )
        scaled = replace(base, gravity=base.gravity * 10.0, roughness=scaled_rough)
        res_a = run_coupled(base)
        res_b = run_coupled(scaled)
        assert np.array_equal(res_a.iterations, res_b.iterations)

    def test_monotone_coupling_effect_with_mass(self):
        """RMS(coupled - decoupled) grows with vehicle mass on the 15 m span."""
        from vbisim.analysis import COMMERCIAL_VEHICLE, eshkevari_bridge

        rms = []
        for scale in (0.01, 0.1, 1.0, 10.0):
            model = replace(
                COMMERCIAL_VEHICLE,
                m_s=COMMERCIAL_VEHICLE.m_s * scale,
                m_u=COMMERCIAL_VEHICLE.m_u * scale,
            )
            cfg = ScenarioConfig(
                bridge=eshkevari_bridge(15),
                vehicles=((model, Trajectory(speed=10.0)),),
                roughness=None,
                traffic=None,
                dt=1e-3,
                t_end=2.0,
                tol=1e-8,
            )
            rc = run_coupled(cfg)
            rd = run_decoupled(cfg)
            rms.append(
                np.sqrt(np.mean((rc.midspan_displacement - rd.midspan_displacement) ** 2))
            )
        assert rms[0] <= rms[1] <= rms[2] <= rms[3]

    def test_hermitian_interpolation_close_to_linear(self):
        cfg = benchmark_config("yang2004")
        res_lin = run_coupled(cfg)
        res_abc = run_coupled(replace(cfg, hermitian_interp=True))
        wl, wh = res_lin.midspan_displacement, res_abc.midspan_displacement
        assert not np.array_equal(wl, wh)
        err = np.sqrt(np.mean((wl - wh) ** 2)) / np.sqrt(np.mean(wl**2))
        assert err < 0.01

    def test_simulate_dispatches_on_mode(self):
        cfg = replace(benchmark_config("yang2004"), t_end=0.5)
        assert simulate(cfg).mode == "coupled"
        assert simulate(replace(cfg, mode="decoupled")).mode == "decoupled"


class TestDynamicEquilibrium:
    def test_reaction_balance_under_moving_force(self):
        """Support reactions balance the applied, inertial, and damping forces."""
        model = simple_bridge(zeta=0.02, n_el=16)
        mesh = build_mesh(model)
        op = make_newmark(mesh, model, 1e-3)
        state = BridgeState.zeros(op.n_free)
        P = 8e4
        for n in range(200):
            x = 6.0 + n * 1e-3 * 12.0  # stays in the interior
            f, _ = map_forces(mesh, [x], [P])
            state = step(op, state, f)
        reactions = support_reactions(
            mesh, model, state.w, state.w_dot, state.w_ddot, op.alpha_m, op.beta_k
        )
        # Vertical rigid-body resultant: K and the beta_K damping part
        # self-cancel, leaving the lumped inertia and alpha_M damping.
        inertial = (op.m_diag * state.w_ddot).sum()
        damping = op.alpha_m * (op.m_diag * state.w_dot).sum()
        total = reactions.sum() - inertial - damping
        assert abs(total - P) / P < 1e-6


class TestRunDecoupled:
    def test_zero_inputs_zero_outputs(self):
        cfg = benchmark_config("yang2004")
        tiny = OneAxleSimple(m=1e-9, k=5.0e5, c=0.0)
        cfg = replace(
            cfg,
            vehicles=((tiny, Trajectory(speed=10.0, entry_time=100.0)),),
            t_end=0.5,
            gravity=0.0,
        )
        res = run_decoupled(cfg)
        assert np.all(res.bridge_disp == 0.0)
        assert np.all(res.vehicles[0].disp == 0.0)

    def test_low_mass_ratio_decoupled_agreement(self):
        """30 m parametric bridge + commercial car: one-pass analysis tracks
        the coupled midspan displacement to R^2 > 0.999."""
        cfg = benchmark_config("eshkevari_30_commercial")
        res_c = run_coupled(cfg)
        res_d = run_decoupled(cfg)
        win = on_bridge_window(cfg)
        from vbisim.analysis import r_squared

        r2 = r_squared(res_c.t, res_c.midspan_displacement, res_d.midspan_displacement, win)
        assert r2 > 0.999

    def test_quasi_static_crossing_matches_influence_line(self):
        """A slow moving weight reproduces the static midspan peak."""
        model = simple_bridge(zeta=0.02)
        veh = OneAxleSimple(m=5000.0, k=1e6, c=1e4)
        cfg = ScenarioConfig(
            bridge=model,
            vehicles=((veh, Trajectory(speed=1.0)),),
            roughness=None,
            traffic=None,
            dt=5e-3,
            t_end=26.0,
            mode="decoupled",
        )
        res = run_decoupled(cfg)
        peak = np.max(np.abs(res.midspan_displacement))
        exact = 5000.0 * 9.81 * 25.0**3 / (48.0 * model.elastic_modulus * model.second_moment)
        assert abs(peak - exact) / exact < 0.02


class TestFleet:
    def test_fleet_determinism_and_spacing(self):
        base = TwoAxleComp2(
            m_v=2500.0, J_v=2300.0, k_r=1.8e5, c_r=3e3, k_f=2.3e5, c_f=3e3, d=3.0, d2=1.7
        )
        fleet_a = make_fleet(base, 5, speed=20.0, seed=99)
        fleet_b = make_fleet(base, 5, speed=20.0, seed=99)
        assert fleet_a == fleet_b
        entries = [traj.entry_time for _, traj in fleet_a]
        gaps = np.diff(entries)
        assert np.allclose(gaps, gaps[0]) and gaps[0] > 0
        masses = [m.m_v for m, _ in fleet_a]
        assert all(0.7 * base.m_v <= mv <= 1.3 * base.m_v for mv in masses)
        assert len(set(masses)) == 5

    def test_two_span_fleet_runs(self):
        cfg = benchmark_config("two_span_fleet")
        cfg = replace(cfg, t_end=2.0)
        res = run_coupled(cfg)
        assert res.flags.non_convergence_steps == 0
        assert len(res.vehicles) == 10
        # intermediate support stays pinned
        mid_support = np.argmin(np.abs(res.node_x - 30.0))
        assert np.max(np.abs(res.bridge_disp[:, mid_support])) == 0.0
