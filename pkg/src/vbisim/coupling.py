"""Coupled and decoupled vehicle-bridge simulation.

The coupled mode iterates per time step: a predictor bridge solve
without vehicle forces, then alternating vehicle advances (under
interpolated bridge motion plus roughness) and bridge advances (under
mapped static-plus-dynamic axle forces plus traffic) until the bridge
displacement residual converges. The decoupled mode runs one bridge
pass under the moving static weights and one vehicle pass driven by
the stored bridge motion; nothing is fed back.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import beam, roughness, vehicle
from ._kernels import CoupledPlan, MAX_AXLES, MAX_VEHICLE_DOFS, get_backend
from .errors import ConfigError, OffBridge, ShapeMismatch


@dataclass(frozen=True)
class Trajectory:
    """Constant-speed crossing; entry_time is when the rear axle reaches x=0.

    ``axle_offsets`` (ascending from the rear axle, first 0) may be
    omitted, in which case the vehicle model's own offsets apply.
    """

    speed: float
    entry_time: float = 0.0
    axle_offsets: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "speed", float(self.speed))
        object.__setattr__(self, "entry_time", float(self.entry_time))
        if self.speed <= 0:
            raise ConfigError("vehicle speed must be positive")
        if self.axle_offsets is not None:
            off = tuple(float(d) for d in self.axle_offsets)
            if off[0] != 0.0 or any(b <= a for a, b in zip(off, off[1:])):
                raise ConfigError("axle offsets must ascend from 0")
            object.__setattr__(self, "axle_offsets", off)

    def rear_position(self, t):
        return self.speed * (np.asarray(t) - self.entry_time)


@dataclass(frozen=True)
class TrafficSpec:
    """Background traffic: a constant random nodal force field.

    The total downward force corresponds to ``n_vehicles`` units of
    ``unit_mass`` under gravity, split over the loadable interior
    nodes with seeded uniform weights.
    """

    n_vehicles: int
    unit_mass: float = 2000.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_vehicles", int(self.n_vehicles))
        object.__setattr__(self, "unit_mass", float(self.unit_mass))
        object.__setattr__(self, "seed", int(self.seed))
        if self.n_vehicles < 0:
            raise ConfigError("traffic vehicle count must be non-negative")
        if self.unit_mass <= 0:
            raise ConfigError("traffic unit mass must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything defining one simulation run."""

    bridge: beam.BridgeModel
    vehicles: tuple[tuple[vehicle.VehicleModel, Trajectory], ...]
    roughness: roughness.RoughnessSpec | None
    traffic: TrafficSpec | None
    dt: float
    t_end: float
    mode: str = "coupled"
    tol: float = 1e-6
    max_iter: int = 50
    seed: int = 0
    hermitian_interp: bool = False
    gravity: float = 9.81
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(tuple(v) for v in self.vehicles))
        for name in ("dt", "t_end", "tol", "gravity"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "max_iter", int(self.max_iter))
        object.__setattr__(self, "seed", int(self.seed))
        if self.dt <= 0:
            raise ConfigError("time step must be positive")
        if self.t_end <= self.dt:
            raise ConfigError("t_end must exceed one time step")
        if self.tol <= 0:
            raise ConfigError("convergence tolerance must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.mode not in ("coupled", "decoupled"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SimFlags:
    uplift_events: int = 0
    roughness_off_domain: bool = False
    non_convergence_steps: int = 0


@dataclass
class VehicleHistory:
    """Per-vehicle free-DOF and contact histories on the shared grid."""

    dof_names: tuple[str, ...]
    body_dof: int
    disp: np.ndarray
    vel: np.ndarray
    accel: np.ndarray
    contact_forces: np.ndarray
    axle_positions: np.ndarray

    @property
    def body_displacement(self) -> np.ndarray:
        return self.disp[:, self.body_dof]

    @property
    def body_acceleration(self) -> np.ndarray:
        return self.accel[:, self.body_dof]


@dataclass
class SimulationResult:
    """Time grid, bridge nodal histories, vehicle histories, diagnostics."""

    mode: str
    t: np.ndarray
    node_x: np.ndarray
    bridge_disp: np.ndarray
    bridge_vel: np.ndarray
    bridge_accel: np.ndarray
    vehicles: list[VehicleHistory]
    iterations: np.ndarray
    flags: SimFlags
    config: ScenarioConfig

    @property
    def midspan_node(self) -> int:
        return int(np.argmin(np.abs(self.node_x - self.node_x[-1] / 2.0)))

    @property
    def midspan_displacement(self) -> np.ndarray:
        return self.bridge_disp[:, self.midspan_node]

    @property
    def midspan_acceleration(self) -> np.ndarray:
        return self.bridge_accel[:, self.midspan_node]


# ---------------------------------------------------------------------------
# contact kinematics and force mapping
# ---------------------------------------------------------------------------


def interpolate_bridge(
    mesh: beam.BridgeMesh,
    state: beam.BridgeState,
    x: float,
    hermitian: bool = False,
) -> tuple[float, float]:
    """Vertical bridge displacement and velocity at position x.

    Linear interpolation between the element's nodal values; the
    ``hermitian`` flag switches to cubic shape functions using the
    nodal rotations.
    """
    L = mesh.node_coords[-1]
    if x < 0.0 or x > L:
        raise OffBridge(f"position {x} m outside [0, {L}]")
    e = min(int(x / mesh.dx), mesh.n_nodes - 2)
    xi = x / mesh.dx - e

    def value(vec):
        iv, jv = mesh.vertical_free[e], mesh.vertical_free[e + 1]
        wi = vec[iv] if iv >= 0 else 0.0
        wj = vec[jv] if jv >= 0 else 0.0
        if not hermitian:
            return (1.0 - xi) * wi + xi * wj
        ir, jr = mesh.rotation_free[e], mesh.rotation_free[e + 1]
        ti = vec[ir] if ir >= 0 else 0.0
        tj = vec[jr] if jr >= 0 else 0.0
        ell = mesh.dx
        h1 = 1.0 - 3.0 * xi**2 + 2.0 * xi**3
        h2 = ell * (xi - 2.0 * xi**2 + xi**3)
        h3 = 3.0 * xi**2 - 2.0 * xi**3
        h4 = ell * (xi**3 - xi**2)
        return h1 * wi + h2 * ti + h3 * wj + h4 * tj

    return value(state.w), value(state.w_dot)


def contact_input(
    mesh: beam.BridgeMesh,
    state: beam.BridgeState,
    profile: roughness.RoughnessProfile | None,
    x_axle: float,
    speed: float,
    hermitian: bool = False,
) -> tuple[float, float]:
    """Contact displacement u_c = w + r and velocity w_dot + v*dr/dx.

    Off the span only the roughness contributes (approach roads).
    """
    if profile is not None:
        r, dr = roughness.evaluate(profile, x_axle)
    else:
        r = dr = 0.0
    L = mesh.node_coords[-1]
    if 0.0 <= x_axle <= L:
        w, w_dot = interpolate_bridge(mesh, state, x_axle, hermitian)
    else:
        w = w_dot = 0.0
    return w + r, w_dot + speed * dr


def map_forces(
    mesh: beam.BridgeMesh,
    axle_positions: np.ndarray,
    total_forces_down: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Distribute downward axle forces onto the free-DOF vector.

    Linear shape functions within the containing element: the node at
    distance xi along the element receives xi*F and its partner
    (1-xi)*F. Off-span axles contribute nothing. Net tensile (negative)
    totals are clamped to zero and reported in the uplift mask.
    """
    axle_positions = np.atleast_1d(np.asarray(axle_positions, dtype=float))
    forces = np.atleast_1d(np.asarray(total_forces_down, dtype=float))
    if axle_positions.shape != forces.shape:
        raise ShapeMismatch("axle positions and forces must align")
    L = mesh.node_coords[-1]
    f = np.zeros(mesh.n_free)
    uplift = np.zeros(len(forces), dtype=bool)
    for i, (x, fa) in enumerate(zip(axle_positions, forces)):
        if fa < 0.0:
            uplift[i] = True
            fa = 0.0
        if x < 0.0 or x > L:
            continue
        e = min(int(x / mesh.dx), mesh.n_nodes - 2)
        xi = x / mesh.dx - e
        iv, jv = mesh.vertical_free[e], mesh.vertical_free[e + 1]
        if iv >= 0:
            f[iv] -= (1.0 - xi) * fa
        if jv >= 0:
            f[jv] -= xi * fa
    return f, uplift


def traffic_forces(
    mesh: beam.BridgeMesh, spec: TrafficSpec, gravity: float = 9.81
) -> np.ndarray:
    """Constant nodal force field for background traffic (free DOFs).

    Uniform-random weights over the loadable interior nodes are
    normalized so the downward total equals n * unit_mass * g.
    """
    f = np.zeros(mesh.n_free)
    if spec.n_vehicles == 0:
        return f
    loadable = np.flatnonzero(mesh.vertical_free >= 0)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    weights = rng.uniform(0.0, 1.0, len(loadable))
    total = spec.n_vehicles * spec.unit_mass * gravity
    f[mesh.vertical_free[loadable]] = -total * weights / weights.sum()
    return f


# ---------------------------------------------------------------------------
# simulation plan
# ---------------------------------------------------------------------------


def _build_plan(cfg: ScenarioConfig):
    """Assemble the flat-array plan shared by both kernel backends."""
    mesh = beam.build_mesh(cfg.bridge)
    op = beam.make_newmark(mesh, cfg.bridge, cfg.dt)
    profile = roughness.generate(cfg.roughness) if cfg.roughness is not None else None

    systems = [vehicle.build_system(m, cfg.gravity) for m, _ in cfg.vehicles]
    nv = len(systems)
    n_t = cfg.n_steps + 1
    t = cfg.dt * np.arange(n_t)

    nf = np.zeros(nv, dtype=np.int64)
    na = np.zeros(nv, dtype=np.int64)
    mv = np.zeros((nv, MAX_VEHICLE_DOFS))
    cv = np.zeros((nv, MAX_VEHICLE_DOFS, MAX_VEHICLE_DOFS))
    kv = np.zeros_like(cv)
    lv = np.zeros_like(cv)
    cfp = np.zeros((nv, MAX_VEHICLE_DOFS, MAX_AXLES))
    kfp = np.zeros_like(cfp)
    cpf = np.zeros((nv, MAX_AXLES, MAX_VEHICLE_DOFS))
    kpf = np.zeros_like(cpf)
    cpp = np.zeros((nv, MAX_AXLES, MAX_AXLES))
    kpp = np.zeros_like(cpp)
    w_static = np.zeros((nv, MAX_AXLES))
    x_ax = np.zeros((nv, n_t, MAX_AXLES))
    r_ax = np.zeros_like(x_ax)
    rdot_ax = np.zeros_like(x_ax)

    a0, a1 = op.coeffs[0], op.coeffs[1]
    off_domain = False
    for i, (sys, (_, traj)) in enumerate(zip(systems, (v for v in cfg.vehicles))):
        offs = (
            np.asarray(traj.axle_offsets, dtype=float)
            if traj.axle_offsets is not None
            else sys.axle_offsets
        )
        if len(offs) != sys.n_axles:
            raise ShapeMismatch("trajectory axle offsets do not match the vehicle")
        nf[i], na[i] = sys.n_free, sys.n_axles
        mv[i, : nf[i]] = np.diag(sys.M)
        cv[i, : nf[i], : nf[i]] = sys.C
        kv[i, : nf[i], : nf[i]] = sys.K
        cfp[i, : nf[i], : na[i]] = sys.C_fp
        kfp[i, : nf[i], : na[i]] = sys.K_fp
        cpf[i, : na[i], : nf[i]] = sys.C_pf
        kpf[i, : na[i], : nf[i]] = sys.K_pf
        cpp[i, : na[i], : na[i]] = sys.C_pp
        kpp[i, : na[i], : na[i]] = sys.K_pp
        w_static[i, : na[i]] = sys.static_axle_forces
        k_eff = sys.K + a0 * sys.M + a1 * sys.C
        lv[i, : nf[i], : nf[i]] = np.linalg.cholesky(k_eff)

        x = traj.rear_position(t)[:, None] + offs[None, :]
        x_ax[i, :, : na[i]] = x
        if profile is not None:
            r, dr = roughness.evaluate(profile, x.ravel())
            r_ax[i, :, : na[i]] = r.reshape(x.shape)
            rdot_ax[i, :, : na[i]] = traj.speed * dr.reshape(x.shape)
            off_domain = off_domain or not bool(profile.in_domain(x).all())

    f_traffic = (
        traffic_forces(mesh, cfg.traffic, cfg.gravity)
        if cfg.traffic is not None
        else np.zeros(mesh.n_free)
    )

    # Standing traffic deflects the bridge before the crossing begins;
    # start from that equilibrium rather than ringing a step load.
    if cfg.traffic is not None and cfg.traffic.n_vehicles > 0:
        w0 = beam.static_solve(mesh, cfg.bridge, f_traffic)
    else:
        w0 = np.zeros(mesh.n_free)

    plan = CoupledPlan(
        chol_lower=op.chol_lower,
        m_diag=op.m_diag,
        C=op.C,
        K=op.K,
        has_damping=op.has_damping,
        coeffs=np.asarray(op.coeffs),
        vert_free=mesh.vertical_free.copy(),
        rot_free=mesh.rotation_free.copy(),
        dx=mesh.dx,
        span=cfg.bridge.span_length,
        hermitian=cfg.hermitian_interp,
        f_traffic=f_traffic,
        n_vehicles=nv,
        nf=nf,
        na=na,
        mv=mv,
        cv=cv,
        kv=kv,
        cfp=cfp,
        kfp=kfp,
        cpf=cpf,
        kpf=kpf,
        cpp=cpp,
        kpp=kpp,
        lv=lv,
        w_static=w_static,
        x_ax=x_ax,
        r_ax=r_ax,
        rdot_ax=rdot_ax,
        w=w0.copy(),
        wd=np.zeros(mesh.n_free),
        wdd=np.zeros(mesh.n_free),
        uv=np.zeros((nv, MAX_VEHICLE_DOFS)),
        vv=np.zeros((nv, MAX_VEHICLE_DOFS)),
        av=np.zeros((nv, MAX_VEHICLE_DOFS)),
        contact_out=np.zeros((nv, MAX_AXLES)),
        tol=cfg.tol,
        max_iter=cfg.max_iter,
    )
    return plan, mesh, systems, t, off_domain


class _Recorder:
    """Preallocated histories filled row by row from the plan buffers."""

    def __init__(self, cfg, plan, mesh, systems, t):
        n_t = len(t)
        self.mesh = mesh
        self.t = t
        n = mesh.n_free
        self._vert_idx = np.where(mesh.vertical_free >= 0, mesh.vertical_free, n)
        self._rot_idx = np.where(mesh.rotation_free >= 0, mesh.rotation_free, n)
        self._ext = np.zeros(n + 1)
        self.bridge_disp = np.zeros((n_t, mesh.n_nodes))
        self.bridge_vel = np.zeros_like(self.bridge_disp)
        self.bridge_accel = np.zeros_like(self.bridge_disp)
        # Rotation histories feed the cubic interpolation of the
        # decoupled vehicle pass; only kept when that mode is on.
        self.record_rotations = cfg.hermitian_interp
        if self.record_rotations:
            self.bridge_rot = np.zeros_like(self.bridge_disp)
            self.bridge_rot_vel = np.zeros_like(self.bridge_disp)
        self.vehicles = [
            VehicleHistory(
                dof_names=s.dof_names,
                body_dof=s.body_dof,
                disp=np.zeros((n_t, s.n_free)),
                vel=np.zeros((n_t, s.n_free)),
                accel=np.zeros((n_t, s.n_free)),
                contact_forces=np.zeros((n_t, s.n_axles)),
                axle_positions=plan.x_ax[i, :, : s.n_axles].copy(),
            )
            for i, s in enumerate(systems)
        ]
        self.iterations = np.zeros(n_t - 1, dtype=np.int64)
        # Row 0: whatever the plan holds as the initial state; the wheel
        # load before any dynamics is the static weight.
        self.record_bridge(plan, 0)
        for i, s in enumerate(systems):
            self.vehicles[i].contact_forces[0] = s.static_axle_forces

    def _gather(self, vec, idx=None):
        self._ext[:-1] = vec
        return self._ext[self._vert_idx if idx is None else idx]

    def record_bridge(self, plan, row):
        self.bridge_disp[row] = self._gather(plan.w)
        self.bridge_vel[row] = self._gather(plan.wd)
        self.bridge_accel[row] = self._gather(plan.wdd)
        if self.record_rotations:
            self.bridge_rot[row] = self._gather(plan.w, self._rot_idx)
            self.bridge_rot_vel[row] = self._gather(plan.wd, self._rot_idx)

    def record_vehicle(self, plan, i, row):
        h = self.vehicles[i]
        nf = plan.nf[i]
        h.disp[row] = plan.uv[i, :nf]
        h.vel[row] = plan.vv[i, :nf]
        h.accel[row] = plan.av[i, :nf]

    def result(self, cfg, mode, flags):
        return SimulationResult(
            mode=mode,
            t=self.t,
            node_x=self.mesh.node_coords.copy(),
            bridge_disp=self.bridge_disp,
            bridge_vel=self.bridge_vel,
            bridge_accel=self.bridge_accel,
            vehicles=self.vehicles,
            iterations=self.iterations,
            flags=flags,
            config=cfg,
        )


def run_coupled(cfg: ScenarioConfig, backend: str | None = None) -> SimulationResult:
    """Iterative coupled analysis over the whole time grid."""
    plan, mesh, systems, t, off_domain = _build_plan(cfg)
    core = get_backend(backend).make_core(plan)
    rec = _Recorder(cfg, plan, mesh, systems, t)
    flags = SimFlags(roughness_off_domain=off_domain)

    for n in range(cfg.n_steps):
        iters, uplift, converged = core.coupled_step(n + 1)
        rec.iterations[n] = iters
        flags.uplift_events += uplift
        if not converged:
            flags.non_convergence_steps += 1
        rec.record_bridge(plan, n + 1)
        for i in range(plan.n_vehicles):
            rec.record_vehicle(plan, i, n + 1)
            rec.vehicles[i].contact_forces[n + 1] = plan.contact_out[i, : plan.na[i]]
    return rec.result(cfg, "coupled", flags)


def _interp_history(values, x, dx, span, n_nodes, rotations=None):
    """Vectorized interpolation of nodal histories at axle positions.

    Linear between the element's vertical values; with ``rotations``
    provided, cubic Hermite shape functions are used instead.
    """
    e = np.clip((x / dx).astype(np.int64), 0, n_nodes - 2)
    xi = x / dx - e
    rows = np.arange(len(x))
    vi = values[rows, e]
    vj = values[rows, e + 1]
    on = (x >= 0.0) & (x <= span)
    if rotations is None:
        return np.where(on, (1.0 - xi) * vi + xi * vj, 0.0)
    ti = rotations[rows, e]
    tj = rotations[rows, e + 1]
    h1 = 1.0 - 3.0 * xi**2 + 2.0 * xi**3
    h2 = dx * (xi - 2.0 * xi**2 + xi**3)
    h3 = 3.0 * xi**2 - 2.0 * xi**3
    h4 = dx * (xi**3 - xi**2)
    return np.where(on, h1 * vi + h2 * ti + h3 * vj + h4 * tj, 0.0)


def run_decoupled(cfg: ScenarioConfig, backend: str | None = None) -> SimulationResult:
    """Moving-load bridge pass followed by a base-excitation vehicle pass."""
    plan, mesh, systems, t, off_domain = _build_plan(cfg)
    core = get_backend(backend).make_core(plan)
    rec = _Recorder(cfg, plan, mesh, systems, t)
    flags = SimFlags(roughness_off_domain=off_domain)
    span = cfg.bridge.span_length

    # Pass 1: bridge under the mapped static axle loads plus traffic.
    for n in range(cfg.n_steps):
        f = plan.f_traffic.copy()
        for i in range(plan.n_vehicles):
            na = plan.na[i]
            fi, _ = map_forces(mesh, plan.x_ax[i, n + 1, :na], plan.w_static[i, :na])
            f += fi
        core.bridge_step(f)
        rec.record_bridge(plan, n + 1)

    # Pass 2: each vehicle driven by the stored bridge motion plus roughness.
    rot = rec.bridge_rot if cfg.hermitian_interp else None
    rot_vel = rec.bridge_rot_vel if cfg.hermitian_interp else None
    for i, sys in enumerate(systems):
        na = plan.na[i]
        up = np.zeros((len(t), na))
        upd = np.zeros((len(t), na))
        for a in range(na):
            x = plan.x_ax[i, :, a]
            up[:, a] = (
                _interp_history(rec.bridge_disp, x, mesh.dx, span, mesh.n_nodes, rot)
                + plan.r_ax[i, :, a]
            )
            upd[:, a] = (
                _interp_history(rec.bridge_vel, x, mesh.dx, span, mesh.n_nodes, rot_vel)
                + plan.rdot_ax[i, :, a]
            )
        for n in range(cfg.n_steps):
            reac = core.vehicle_step(i, up[n + 1], upd[n + 1])
            rec.record_vehicle(plan, i, n + 1)
            total = plan.w_static[i, :na] + reac
            uplift = total < 0.0
            flags.uplift_events += int(uplift.sum())
            rec.vehicles[i].contact_forces[n + 1] = np.where(uplift, 0.0, total)
    return rec.result(cfg, "decoupled", flags)


def simulate(cfg: ScenarioConfig, backend: str | None = None) -> SimulationResult:
    """Run the scenario in its configured mode."""
    if cfg.mode == "coupled":
        return run_coupled(cfg, backend)
    return run_decoupled(cfg, backend)


def make_fleet(
    base: vehicle.TwoAxleComp2,
    n_vehicles: int,
    speed: float,
    seed: int,
    first_entry: float = 0.0,
    entry_gap: float | None = None,
) -> tuple[tuple[vehicle.VehicleModel, Trajectory], ...]:
    """Randomized fleet from a base half-car.

    Sprung mass, suspension stiffness, and suspension damping each get
    an independent uniform [0.7, 1.3] factor per vehicle (one factor
    shared by both axles' springs and both dashpots); entry times are
    uniformly spaced so vehicles enter in sequence at a common speed.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    if entry_gap is None:
        entry_gap = 2.0 * base.d / speed
    fleet = []
    for i in range(n_vehicles):
        fm, fk, fc = (float(f) for f in rng.uniform(0.7, 1.3, 3))
        model = replace(
            base,
            m_v=base.m_v * fm,
            k_r=base.k_r * fk,
            k_f=base.k_f * fk,
            c_r=base.c_r * fc,
            c_f=base.c_f * fc,
        )
        fleet.append((model, Trajectory(speed=speed, entry_time=first_entry + i * entry_gap)))
    return tuple(fleet)
