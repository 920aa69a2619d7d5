"""Pure-NumPy reference implementation of the step kernels.

This backend defines the numerical behaviour; the compiled core in
``_native.pyx`` reproduces it loop-for-loop. Everything here advances
states owned by a :class:`~vbisim._kernels.plan.CoupledPlan` in place.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

from .plan import CoupledPlan

BACKEND_NAME = "python"


def newmark_coefficients(dt: float, gamma: float = 0.5, beta: float = 0.25):
    """Integration constants a0..a7 of the Newmark family."""
    a0 = 1.0 / (beta * dt * dt)
    a1 = gamma / (beta * dt)
    a2 = 1.0 / (beta * dt)
    a3 = 1.0 / (2.0 * beta) - 1.0
    a4 = gamma / beta - 1.0
    a5 = dt / 2.0 * (gamma / beta - 2.0)
    a6 = dt * (1.0 - gamma)
    a7 = gamma * dt
    return a0, a1, a2, a3, a4, a5, a6, a7


def newmark_step(chol_lower, m_diag, C, coeffs, u, v, a, f):
    """One average-acceleration step; returns (u1, v1, a1).

    ``C`` may be None for undamped systems. The force ``f`` is the
    value at the end of the step.
    """
    a0, a1, a2, a3, a4, a5, a6, a7 = coeffs
    rhs = f + m_diag * (a0 * u + a2 * v + a3 * a)
    if C is not None:
        rhs = rhs + C @ (a1 * u + a4 * v + a5 * a)
    u1 = cho_solve((chol_lower, True), rhs)
    a1v = a0 * (u1 - u) - a2 * v - a3 * a
    v1 = v + a6 * a + a7 * a1v
    return u1, v1, a1v


class PyCore:
    """Step engine over a CoupledPlan, one instance per simulation."""

    def __init__(self, plan: CoupledPlan):
        self.p = plan
        # Gather helper: vertical free index per node, constrained nodes
        # read a permanently-zero slot appended past the state vector.
        n = len(plan.m_diag)
        self._vert_idx = np.where(plan.vert_free >= 0, plan.vert_free, n)
        self._ext = np.zeros(n + 1)

    # -- primitive steps -------------------------------------------------

    def bridge_step(self, f):
        """Advance and commit the bridge under the force vector ``f``."""
        p = self.p
        w1, v1, a1 = newmark_step(
            p.chol_lower, p.m_diag, p.C if p.has_damping else None, p.coeffs,
            p.w, p.wd, p.wdd, f,
        )
        p.w[:], p.wd[:], p.wdd[:] = w1, v1, a1

    def _vehicle_trial(self, i, up, upd):
        """Advance vehicle i from its committed state; no commit."""
        p = self.p
        nf, na = p.nf[i], p.na[i]
        rhs = -(p.cfp[i, :nf, :na] @ upd + p.kfp[i, :nf, :na] @ up)
        u1, v1, a1 = newmark_step(
            p.lv[i, :nf, :nf], p.mv[i, :nf], p.cv[i, :nf, :nf], p.coeffs,
            p.uv[i, :nf], p.vv[i, :nf], p.av[i, :nf], rhs,
        )
        reac = (
            p.kpf[i, :na, :nf] @ u1
            + p.cpf[i, :na, :nf] @ v1
            + p.kpp[i, :na, :na] @ up
            + p.cpp[i, :na, :na] @ upd
        )
        return u1, v1, a1, reac

    def vehicle_step(self, i, up, upd):
        """Advance and commit vehicle i under imposed contact motion."""
        p = self.p
        nf = p.nf[i]
        u1, v1, a1, reac = self._vehicle_trial(i, up, upd)
        p.uv[i, :nf], p.vv[i, :nf], p.av[i, :nf] = u1, v1, a1
        return reac

    # -- helpers ----------------------------------------------------------

    def _vertical(self, vec):
        self._ext[:-1] = vec
        return self._ext[self._vert_idx].copy()

    def _interpolate(self, wvec, x):
        """Vertical value of a free-DOF vector at position x on the span."""
        p = self.p
        n_nodes = len(p.vert_free)
        e = int(x / p.dx)
        e = min(max(e, 0), n_nodes - 2)
        xi = x / p.dx - e
        iv, jv = p.vert_free[e], p.vert_free[e + 1]
        wi = wvec[iv] if iv >= 0 else 0.0
        wj = wvec[jv] if jv >= 0 else 0.0
        if not p.hermitian:
            return (1.0 - xi) * wi + xi * wj
        ir, jr = p.rot_free[e], p.rot_free[e + 1]
        ti = wvec[ir] if ir >= 0 else 0.0
        tj = wvec[jr] if jr >= 0 else 0.0
        ell = p.dx
        h1 = 1.0 - 3.0 * xi**2 + 2.0 * xi**3
        h2 = ell * (xi - 2.0 * xi**2 + xi**3)
        h3 = 3.0 * xi**2 - 2.0 * xi**3
        h4 = ell * (xi**3 - xi**2)
        return h1 * wi + h2 * ti + h3 * wj + h4 * tj

    def _map_force(self, f, x, total_down):
        """Distribute a downward axle force onto the two element nodes."""
        p = self.p
        n_nodes = len(p.vert_free)
        e = int(x / p.dx)
        e = min(max(e, 0), n_nodes - 2)
        xi = x / p.dx - e
        iv, jv = p.vert_free[e], p.vert_free[e + 1]
        if iv >= 0:
            f[iv] -= (1.0 - xi) * total_down
        if jv >= 0:
            f[jv] -= xi * total_down

    # -- coupled step -------------------------------------------------------

    def coupled_step(self, j):
        """One coupled time step onto time index ``j``.

        Iterates vehicle and bridge solves from the committed states
        until the bridge displacement residual drops below the
        tolerance, then commits the final iterate. Returns
        (iterations, uplift_count, converged).
        """
        p = self.p
        und = None if not p.has_damping else p.C

        # Predictor: bridge free response with traffic but no vehicle forces.
        wb, vb, ab = newmark_step(
            p.chol_lower, p.m_diag, und, p.coeffs, p.w, p.wd, p.wdd, p.f_traffic
        )
        prev_vert = self._vertical(wb)

        converged = False
        uplift = 0
        iters = 0
        cand = [None] * p.n_vehicles
        up = np.zeros(2)
        upd = np.zeros(2)
        for _ in range(p.max_iter):
            iters += 1
            uplift = 0
            f = p.f_traffic.copy()
            for i in range(p.n_vehicles):
                na = p.na[i]
                for a_ in range(na):
                    x = p.x_ax[i, j, a_]
                    if 0.0 <= x <= p.span:
                        wi = self._interpolate(wb, x)
                        wdi = self._interpolate(vb, x)
                    else:
                        wi = wdi = 0.0
                    up[a_] = wi + p.r_ax[i, j, a_]
                    upd[a_] = wdi + p.rdot_ax[i, j, a_]
                u1, v1, a1, reac = self._vehicle_trial(i, up[:na], upd[:na])
                cand[i] = (u1, v1, a1)
                for a_ in range(na):
                    total = p.w_static[i, a_] + reac[a_]
                    if total < 0.0:
                        total = 0.0
                        uplift += 1
                    p.contact_out[i, a_] = total
                    x = p.x_ax[i, j, a_]
                    if 0.0 <= x <= p.span:
                        self._map_force(f, x, total)
            wb, vb, ab = newmark_step(
                p.chol_lower, p.m_diag, und, p.coeffs, p.w, p.wd, p.wdd, f
            )
            vert = self._vertical(wb)
            num = np.sqrt(np.mean((vert - prev_vert) ** 2))
            den = np.max(np.abs(vert))
            prev_vert = vert
            if den == 0.0:
                eps = 0.0 if num == 0.0 else np.inf
            else:
                eps = num / den
            if eps < p.tol:
                converged = True
                break

        p.w[:], p.wd[:], p.wdd[:] = wb, vb, ab
        for i in range(p.n_vehicles):
            nf = p.nf[i]
            u1, v1, a1 = cand[i]
            p.uv[i, :nf], p.vv[i, :nf], p.av[i, :nf] = u1, v1, a1
        return iters, uplift, converged


def make_core(plan: CoupledPlan) -> PyCore:
    return PyCore(plan)
