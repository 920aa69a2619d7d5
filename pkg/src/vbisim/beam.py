"""Euler-Bernoulli beam finite-element core.

Builds a uniform 2D frame mesh (3 DOFs per node: axial, vertical,
rotation), assembles lumped-mass and Hermitian-stiffness matrices,
solves the condensed eigenproblem, fits Rayleigh damping, and advances
the transient response with the average-acceleration Newmark scheme.
The effective stiffness is factorized once per (mesh, dt) and reused
for every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels.py_kernels import newmark_coefficients
from .errors import (
    FactorizationFailure,
    InvalidFrequency,
    InvalidModel,
    SingularSystem,
    SupportOffMesh,
)

NEWMARK_GAMMA = 0.5
NEWMARK_BETA = 0.25

#: Absolute tolerance (m) for a support to coincide with a mesh node.
SUPPORT_NODE_TOL = 1e-9


@dataclass(frozen=True)
class BridgeModel:
    """Geometry, section, mass, and damping target of a beam bridge.

    Parameters
    ----------
    span_length : float
        Total length L of the beam (m).
    support_positions : tuple of float
        Support coordinates, ascending, first at 0 and last at L. The
        first support is a pin (u_x, u_y fixed), the rest are rollers
        (u_y fixed). Each must coincide with a mesh node.
    elastic_modulus : float
        Young's modulus E (Pa).
    second_moment : float
        Second moment of area I (m^4).
    area : float
        Cross-sectional area A (m^2). Only EI and the mass per unit
        length govern the vertical response; A is retained for the
        (unloaded) axial DOFs.
    mass_per_length : float
        Distributed mass m_bar (kg/m).
    damping_ratio : float
        Target damping ratio applied to the first two modes through
        Rayleigh coefficients.
    num_elements : int
        Number of equal-length elements.
    """

    span_length: float
    support_positions: tuple[float, ...]
    elastic_modulus: float
    second_moment: float
    area: float
    mass_per_length: float
    damping_ratio: float
    num_elements: int

    def __post_init__(self):
        for name in ("span_length", "elastic_modulus", "second_moment", "area",
                     "mass_per_length", "damping_ratio"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "num_elements", int(self.num_elements))
        object.__setattr__(
            self, "support_positions", tuple(float(s) for s in self.support_positions)
        )
        L = self.span_length
        if not (L > 0 and self.elastic_modulus > 0 and self.second_moment > 0):
            raise InvalidModel("span length, E and I must be positive")
        if self.mass_per_length <= 0 or self.area <= 0:
            raise InvalidModel("mass per unit length and area must be positive")
        if self.damping_ratio < 0:
            raise InvalidModel("damping ratio must be non-negative")
        if self.num_elements < 2:
            raise InvalidModel("at least two elements are required")
        sup = self.support_positions
        if len(sup) < 2:
            raise InvalidModel("at least two supports are required")
        if any(b <= a for a, b in zip(sup, sup[1:])):
            raise InvalidModel("support positions must be strictly ascending")
        if abs(sup[0]) > SUPPORT_NODE_TOL or abs(sup[-1] - L) > SUPPORT_NODE_TOL:
            raise InvalidModel("first support must sit at 0 and last at L")


@dataclass(frozen=True)
class BridgeMesh:
    """Discretized bridge: node grid, DOF bookkeeping, and lumped masses.

    Global DOFs are numbered (3j, 3j+1, 3j+2) = (u_x, u_y, theta) for
    node j. ``full_to_free`` maps a global DOF to its index in the
    free-DOF vectors, or -1 if constrained. Lumped mass acts on the
    vertical translation only; rotational (and axial) DOFs carry zero
    inertia.
    """

    node_coords: np.ndarray
    dx: float
    support_nodes: np.ndarray
    boundary_conditions: tuple[tuple[int, str], ...]
    lumped_masses: np.ndarray
    constrained_dofs: np.ndarray
    free_dofs: np.ndarray
    full_to_free: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    def node_dofs(self, j: int) -> tuple[int, int, int]:
        """Global (u_x, u_y, theta) DOF indices of node j."""
        return 3 * j, 3 * j + 1, 3 * j + 2

    @property
    def vertical_free(self) -> np.ndarray:
        """Free-vector index of each node's vertical DOF (-1 if fixed)."""
        return self.full_to_free[1::3]

    @property
    def rotation_free(self) -> np.ndarray:
        """Free-vector index of each node's rotation DOF (-1 if fixed)."""
        return self.full_to_free[2::3]

    def vertical_values(self, vec: np.ndarray) -> np.ndarray:
        """Gather per-node vertical components from a free-DOF vector."""
        idx = self.vertical_free
        out = np.zeros(self.n_nodes)
        mask = idx >= 0
        out[mask] = vec[idx[mask]]
        return out


@dataclass(frozen=True)
class BridgeState:
    """Displacement, velocity, and acceleration over the free DOFs at time t."""

    t: float
    w: np.ndarray
    w_dot: np.ndarray
    w_ddot: np.ndarray

    def __post_init__(self):
        if not (len(self.w) == len(self.w_dot) == len(self.w_ddot)):
            raise InvalidModel("state vectors must share the free-DOF length")

    @classmethod
    def zeros(cls, n_free: int, t: float = 0.0) -> "BridgeState":
        return cls(t, np.zeros(n_free), np.zeros(n_free), np.zeros(n_free))


@dataclass(frozen=True)
class NewmarkOperator:
    """Persistent transient operator for one (mesh, dt) pair.

    Holds the assembled free-DOF matrices, the Rayleigh coefficients,
    the Newmark constants, and the Cholesky factor of the effective
    stiffness K + a0*M + a1*C, computed exactly once.
    """

    dt: float
    gamma: float
    beta: float
    m_diag: np.ndarray
    C: np.ndarray
    K: np.ndarray
    chol_lower: np.ndarray
    alpha_m: float
    beta_k: float
    coeffs: tuple[float, ...] = field(repr=False)
    has_damping: bool = False

    @property
    def n_free(self) -> int:
        return len(self.m_diag)


def build_mesh(model: BridgeModel) -> BridgeMesh:
    """Discretize the bridge into a uniform node grid with lumped masses.

    Interior nodes receive ``m_bar*dx``, end nodes ``m_bar*dx/2``. The
    first support is pinned, the remaining supports are rollers; all
    support rotations stay free.

    Raises
    ------
    SupportOffMesh
        If a support position does not coincide with a node within
        ``SUPPORT_NODE_TOL``.
    """
    n_nodes = model.num_elements + 1
    coords = np.linspace(0.0, model.span_length, n_nodes)
    dx = model.span_length / model.num_elements

    support_nodes = []
    for s in model.support_positions:
        j = int(round(s / dx))
        if j < 0 or j >= n_nodes or abs(coords[j] - s) > SUPPORT_NODE_TOL:
            raise SupportOffMesh(f"support at {s} m does not coincide with a mesh node")
        support_nodes.append(j)

    masses = np.full(n_nodes, model.mass_per_length * dx)
    masses[0] *= 0.5
    masses[-1] *= 0.5

    constrained = []
    bcs = []
    for idx, j in enumerate(support_nodes):
        if idx == 0:
            constrained.extend([3 * j, 3 * j + 1])
            bcs.append((j, "pin"))
        else:
            constrained.append(3 * j + 1)
            bcs.append((j, "roller"))
    constrained = np.array(sorted(constrained), dtype=np.int64)

    n_dofs = 3 * n_nodes
    full_to_free = np.full(n_dofs, -1, dtype=np.int64)
    free = np.setdiff1d(np.arange(n_dofs, dtype=np.int64), constrained)
    full_to_free[free] = np.arange(len(free))

    return BridgeMesh(
        node_coords=coords,
        dx=dx,
        support_nodes=np.array(support_nodes, dtype=np.int64),
        boundary_conditions=tuple(bcs),
        lumped_masses=masses,
        constrained_dofs=constrained,
        free_dofs=free,
        full_to_free=full_to_free,
    )


def _element_stiffness(E: float, A: float, I: float, ell: float) -> np.ndarray:
    """6x6 stiffness of a 2D frame element (axial + Hermitian bending)."""
    ke = np.zeros((6, 6))
    ea = E * A / ell
    ke[np.ix_([0, 3], [0, 3])] = ea * np.array([[1.0, -1.0], [-1.0, 1.0]])
    c = E * I / ell**3
    kb = c * np.array(
        [
            [12.0, 6.0 * ell, -12.0, 6.0 * ell],
            [6.0 * ell, 4.0 * ell**2, -6.0 * ell, 2.0 * ell**2],
            [-12.0, -6.0 * ell, 12.0, -6.0 * ell],
            [6.0 * ell, 2.0 * ell**2, -6.0 * ell, 4.0 * ell**2],
        ]
    )
    ke[np.ix_([1, 2, 4, 5], [1, 2, 4, 5])] = kb
    return ke


def assemble_full(mesh: BridgeMesh, model: BridgeModel) -> tuple[np.ndarray, np.ndarray]:
    """Assemble (M, K) over all DOFs, constraints not applied.

    M is diagonal with the tributary mass at each vertical DOF and zero
    at axial and rotational DOFs.
    """
    n = 3 * mesh.n_nodes
    K = np.zeros((n, n))
    ke = _element_stiffness(model.elastic_modulus, model.area, model.second_moment, mesh.dx)
    for e in range(mesh.n_nodes - 1):
        dofs = np.arange(3 * e, 3 * e + 6)
        K[np.ix_(dofs, dofs)] += ke
    M = np.zeros((n, n))
    M[1::3, 1::3] = np.diag(mesh.lumped_masses)
    return M, K


def assemble(
    mesh: BridgeMesh, model: BridgeModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble (M, C, K) restricted to the free DOFs.

    The damping matrix returned here is zero; Rayleigh damping is
    attached by :func:`make_newmark` once the eigenfrequencies are
    known.
    """
    M_full, K_full = assemble_full(mesh, model)
    ix = np.ix_(mesh.free_dofs, mesh.free_dofs)
    return M_full[ix], np.zeros((mesh.n_free, mesh.n_free)), K_full[ix]


def static_solve(mesh: BridgeMesh, model: BridgeModel, f_free: np.ndarray) -> np.ndarray:
    """Solve K u = F on the free DOFs."""
    _, _, K = assemble(mesh, model)
    try:
        c = scipy.linalg.cho_factor(K)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem("stiffness not positive definite") from exc
    return scipy.linalg.cho_solve(c, f_free)


def support_reactions(
    mesh: BridgeMesh,
    model: BridgeModel,
    state_w: np.ndarray,
    state_w_dot: np.ndarray | None = None,
    state_w_ddot: np.ndarray | None = None,
    alpha_m: float = 0.0,
    beta_k: float = 0.0,
) -> np.ndarray:
    """Vertical support reactions (upward positive), one per support.

    Computed from the full-system balance at the constrained rows:
    R = [M w_ddot + C w_dot + K w] at the support vertical DOFs.
    """
    M_full, K_full = assemble_full(mesh, model)
    n = 3 * mesh.n_nodes
    u = np.zeros(n)
    u[mesh.free_dofs] = state_w
    resultant = K_full @ u
    if state_w_dot is not None and (alpha_m != 0.0 or beta_k != 0.0):
        v = np.zeros(n)
        v[mesh.free_dofs] = state_w_dot
        resultant += (alpha_m * M_full + beta_k * K_full) @ v
    if state_w_ddot is not None:
        a = np.zeros(n)
        a[mesh.free_dofs] = state_w_ddot
        resultant += M_full @ a
    return np.array([resultant[3 * j + 1] for j in mesh.support_nodes])


def _condensed_system(mesh: BridgeMesh, model: BridgeModel):
    """Guyan condensation of the massless DOFs; returns (Kc, m_c, massive, T)."""
    M, _, K = assemble(mesh, model)
    m_diag = np.diag(M).copy()
    massive = m_diag > 0.0
    slave = ~massive
    Kmm = K[np.ix_(massive, massive)]
    Kms = K[np.ix_(massive, slave)]
    Kss = K[np.ix_(slave, slave)]
    try:
        T = -scipy.linalg.solve(Kss, Kms.T, assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem("condensed stiffness is singular") from exc
    Kc = Kmm + Kms @ T
    return Kc, m_diag[massive], massive, T


def eigen_modes(
    mesh: BridgeMesh, model: BridgeModel, n_modes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Natural frequencies (Hz, ascending) and free-DOF mode shapes.

    Massless DOFs are condensed before the symmetric generalized eigen
    solve and recovered statically afterwards, so the returned shapes
    span the full free-DOF vector.
    """
    Kc, m_c, massive, T = _condensed_system(mesh, model)
    try:
        evals, vecs = scipy.linalg.eigh(Kc, np.diag(m_c))
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem("eigen solve failed on the condensed system") from exc
    if evals[0] <= 0.0:
        raise SingularSystem("non-positive eigenvalue: system insufficiently supported")
    n_modes = min(n_modes, len(evals))
    freqs = np.sqrt(evals[:n_modes]) / (2.0 * np.pi)
    shapes = np.zeros((mesh.n_free, n_modes))
    shapes[massive, :] = vecs[:, :n_modes]
    shapes[~massive, :] = T @ vecs[:, :n_modes]
    return freqs, shapes


def eigen_frequencies(mesh: BridgeMesh, model: BridgeModel, n_modes: int) -> np.ndarray:
    """Lowest ``n_modes`` natural frequencies of the supported beam (Hz)."""
    freqs, _ = eigen_modes(mesh, model, n_modes)
    return freqs


def rayleigh_coefficients(zeta: float, omega1: float, omega2: float) -> tuple[float, float]:
    """Mass- and stiffness-proportional coefficients matching zeta at two modes.

    alpha_M = zeta * 2*w1*w2 / (w1 + w2), beta_K = 2*zeta / (w1 + w2).
    """
    if omega1 <= 0.0 or omega2 <= 0.0:
        raise InvalidFrequency("circular frequencies must be positive")
    alpha_m = zeta * 2.0 * omega1 * omega2 / (omega1 + omega2)
    beta_k = 2.0 * zeta / (omega1 + omega2)
    return alpha_m, beta_k


def make_newmark(mesh: BridgeMesh, model: BridgeModel, dt: float) -> NewmarkOperator:
    """Build the persistent Newmark operator for time step ``dt``.

    C = alpha_M*M + beta_K*K with coefficients fitted to the first two
    eigenfrequencies (zero matrix when the damping ratio is zero). The
    effective stiffness is factorized here, once.
    """
    if dt <= 0.0:
        raise InvalidModel("time step must be positive")
    M, _, K = assemble(mesh, model)
    m_diag = np.ascontiguousarray(np.diag(M))
    if model.damping_ratio > 0.0:
        f = eigen_frequencies(mesh, model, 2)
        alpha_m, beta_k = rayleigh_coefficients(
            model.damping_ratio, 2.0 * np.pi * f[0], 2.0 * np.pi * f[1]
        )
        C = alpha_m * M + beta_k * K
        has_damping = True
    else:
        alpha_m = beta_k = 0.0
        C = np.zeros_like(K)
        has_damping = False
    coeffs = newmark_coefficients(dt, NEWMARK_GAMMA, NEWMARK_BETA)
    a0, a1 = coeffs[0], coeffs[1]
    k_eff = K + a0 * np.diag(m_diag) + a1 * C
    try:
        chol_lower = np.linalg.cholesky(k_eff)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure("effective stiffness is not SPD") from exc
    return NewmarkOperator(
        dt=dt,
        gamma=NEWMARK_GAMMA,
        beta=NEWMARK_BETA,
        m_diag=m_diag,
        C=np.ascontiguousarray(C),
        K=np.ascontiguousarray(K),
        chol_lower=np.ascontiguousarray(chol_lower),
        alpha_m=alpha_m,
        beta_k=beta_k,
        coeffs=coeffs,
        has_damping=has_damping,
    )


def initial_acceleration(
    op: NewmarkOperator, w: np.ndarray, w_dot: np.ndarray, f0: np.ndarray
) -> np.ndarray:
    """Consistent starting acceleration: zero at massless DOFs, balance elsewhere."""
    resid = f0 - op.C @ w_dot - op.K @ w
    a = np.zeros_like(w)
    massive = op.m_diag > 0.0
    a[massive] = resid[massive] / op.m_diag[massive]
    return a


def step(op: NewmarkOperator, state: BridgeState, f_next: np.ndarray) -> BridgeState:
    """Advance one Newmark step under the nodal forces at t + dt.

    Returns the new state satisfying the discrete balance
    M w_ddot + C w_dot + K w = F(t+dt).
    """
    if len(f_next) != op.n_free:
        raise InvalidModel("force vector length does not match the free DOFs")
    from ._kernels import py_kernels

    w1, v1, a1 = py_kernels.newmark_step(
        op.chol_lower,
        op.m_diag,
        op.C if op.has_damping else None,
        op.coeffs,
        state.w,
        state.w_dot,
        state.w_ddot,
        f_next,
    )
    return BridgeState(state.t + op.dt, w1, v1, a1)
