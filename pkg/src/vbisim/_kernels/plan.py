"""Flat array bundle consumed by the step kernels.

Both the compiled and the pure-Python backends operate on the same
plan: contiguous float64/int64 arrays, vehicles padded to at most
4 free DOFs and 2 axles. The plan owns every state buffer, so a
backend core mutates it in place and the runner reads results back
without copies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_VEHICLE_DOFS = 4
MAX_AXLES = 2


@dataclass
class CoupledPlan:
    # bridge operator
    chol_lower: np.ndarray  # (n, n) lower Cholesky factor of K_eff
    m_diag: np.ndarray      # (n,)
    C: np.ndarray           # (n, n), zeros when undamped
    K: np.ndarray           # (n, n)
    has_damping: bool
    coeffs: np.ndarray      # (8,) Newmark constants a0..a7
    # mesh lookup
    vert_free: np.ndarray   # (N_n,) int64, -1 where constrained
    rot_free: np.ndarray    # (N_n,) int64
    dx: float
    span: float
    hermitian: bool
    # constant loading
    f_traffic: np.ndarray   # (n,)
    # vehicles, padded
    n_vehicles: int
    nf: np.ndarray          # (nv,) free-DOF counts
    na: np.ndarray          # (nv,) axle counts
    mv: np.ndarray          # (nv, 4) mass diagonals
    cv: np.ndarray          # (nv, 4, 4)
    kv: np.ndarray          # (nv, 4, 4)
    cfp: np.ndarray         # (nv, 4, 2)
    kfp: np.ndarray         # (nv, 4, 2)
    cpf: np.ndarray         # (nv, 2, 4)
    kpf: np.ndarray         # (nv, 2, 4)
    cpp: np.ndarray         # (nv, 2, 2)
    kpp: np.ndarray         # (nv, 2, 2)
    lv: np.ndarray          # (nv, 4, 4) Cholesky factors of vehicle K_eff
    w_static: np.ndarray    # (nv, 2) static axle loads, downward positive
    # precomputed kinematics over the whole time grid
    x_ax: np.ndarray        # (nv, n_t, 2) axle positions
    r_ax: np.ndarray        # (nv, n_t, 2) roughness elevation at axle
    rdot_ax: np.ndarray     # (nv, n_t, 2) v * dr/dx at axle
    # mutable committed states
    w: np.ndarray           # (n,)
    wd: np.ndarray
    wdd: np.ndarray
    uv: np.ndarray          # (nv, 4)
    vv: np.ndarray
    av: np.ndarray
    # per-step output: applied axle force after uplift clamp
    contact_out: np.ndarray  # (nv, 2)
    # coupling controls
    tol: float
    max_iter: int
