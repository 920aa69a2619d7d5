# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled step kernels.

Mirrors :mod:`vbisim._kernels.py_kernels` loop for loop; the NumPy
backend defines the behaviour, this one exists for speed. Both operate
in place on the arrays owned by a CoupledPlan.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

BACKEND_NAME = "native"


cdef void _chol_solve(const double[:, ::1] L, double* b, double* y, int n) noexcept nogil:
    """Solve (L L^T) x = b in place on b, using y as scratch."""
    cdef int i, j
    cdef double s
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= L[i, j] * y[j]
        y[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for j in range(i + 1, n):
            s -= L[j, i] * b[j]
        b[i] = s / L[i, i]


cdef class NativeCore:
    """Step engine over a CoupledPlan, one instance per simulation."""

    cdef double[:, ::1] chol
    cdef double[::1] m_diag
    cdef double[:, ::1] C
    cdef double[:, ::1] K
    cdef bint has_damping
    cdef bint hermitian
    cdef double a0, a1, a2, a3, a4, a5, a6, a7
    cdef long long[::1] vert_free
    cdef long long[::1] rot_free
    cdef double dx, span, tol
    cdef int max_iter, n, n_nodes, nv
    cdef double[::1] f_traffic

    cdef long long[::1] nf
    cdef long long[::1] na
    cdef double[:, ::1] mv
    cdef double[:, :, ::1] cv
    cdef double[:, :, ::1] kv
    cdef double[:, :, ::1] cfp
    cdef double[:, :, ::1] kfp
    cdef double[:, :, ::1] cpf
    cdef double[:, :, ::1] kpf
    cdef double[:, :, ::1] cpp
    cdef double[:, :, ::1] kpp
    cdef double[:, :, ::1] lv
    cdef double[:, ::1] w_static
    cdef double[:, :, ::1] x_ax
    cdef double[:, :, ::1] r_ax
    cdef double[:, :, ::1] rdot_ax

    cdef double[::1] w
    cdef double[::1] wd
    cdef double[::1] wdd
    cdef double[:, ::1] uv
    cdef double[:, ::1] vv
    cdef double[:, ::1] av
    cdef double[:, ::1] contact_out

    # scratch
    cdef double[::1] w_it
    cdef double[::1] wd_it
    cdef double[::1] wdd_it
    cdef double[::1] rhs
    cdef double[::1] tmp
    cdef double[::1] ysc
    cdef double[::1] fwork
    cdef double[::1] vert
    cdef double[::1] prev_vert
    cdef double[:, ::1] uv_c
    cdef double[:, ::1] vv_c
    cdef double[:, ::1] av_c
    cdef double[::1] up
    cdef double[::1] upd
    cdef double[::1] reac
    cdef double[::1] vrhs
    cdef double[::1] vy

    def __init__(self, plan):
        self.chol = plan.chol_lower
        self.m_diag = plan.m_diag
        self.C = plan.C
        self.K = plan.K
        self.has_damping = plan.has_damping
        self.hermitian = plan.hermitian
        c = np.asarray(plan.coeffs, dtype=np.float64)
        self.a0, self.a1, self.a2, self.a3 = c[0], c[1], c[2], c[3]
        self.a4, self.a5, self.a6, self.a7 = c[4], c[5], c[6], c[7]
        self.vert_free = plan.vert_free
        self.rot_free = plan.rot_free
        self.dx = plan.dx
        self.span = plan.span
        self.tol = plan.tol
        self.max_iter = plan.max_iter
        self.f_traffic = plan.f_traffic
        self.n = plan.m_diag.shape[0]
        self.n_nodes = plan.vert_free.shape[0]
        self.nv = plan.n_vehicles

        self.nf = plan.nf
        self.na = plan.na
        self.mv = plan.mv
        self.cv = plan.cv
        self.kv = plan.kv
        self.cfp = plan.cfp
        self.kfp = plan.kfp
        self.cpf = plan.cpf
        self.kpf = plan.kpf
        self.cpp = plan.cpp
        self.kpp = plan.kpp
        self.lv = plan.lv
        self.w_static = plan.w_static
        self.x_ax = plan.x_ax
        self.r_ax = plan.r_ax
        self.rdot_ax = plan.rdot_ax

        self.w = plan.w
        self.wd = plan.wd
        self.wdd = plan.wdd
        self.uv = plan.uv
        self.vv = plan.vv
        self.av = plan.av
        self.contact_out = plan.contact_out

        n = self.n
        self.w_it = np.zeros(n)
        self.wd_it = np.zeros(n)
        self.wdd_it = np.zeros(n)
        self.rhs = np.zeros(n)
        self.tmp = np.zeros(n)
        self.ysc = np.zeros(n)
        self.fwork = np.zeros(n)
        self.vert = np.zeros(self.n_nodes)
        self.prev_vert = np.zeros(self.n_nodes)
        self.uv_c = np.zeros((max(self.nv, 1), 4))
        self.vv_c = np.zeros((max(self.nv, 1), 4))
        self.av_c = np.zeros((max(self.nv, 1), 4))
        self.up = np.zeros(2)
        self.upd = np.zeros(2)
        self.reac = np.zeros(2)
        self.vrhs = np.zeros(4)
        self.vy = np.zeros(4)

    # -- bridge ------------------------------------------------------------

    cdef void _bridge_newmark(self, const double[::1] f,
                              double[::1] u1, double[::1] v1, double[::1] a1) noexcept nogil:
        """Advance from the committed bridge state under force f."""
        cdef int i, j
        cdef double s
        for i in range(self.n):
            self.rhs[i] = f[i] + self.m_diag[i] * (
                self.a0 * self.w[i] + self.a2 * self.wd[i] + self.a3 * self.wdd[i])
        if self.has_damping:
            for i in range(self.n):
                self.tmp[i] = self.a1 * self.w[i] + self.a4 * self.wd[i] + self.a5 * self.wdd[i]
            for i in range(self.n):
                s = 0.0
                for j in range(self.n):
                    s += self.C[i, j] * self.tmp[j]
                self.rhs[i] += s
        _chol_solve(self.chol, &self.rhs[0], &self.ysc[0], self.n)
        for i in range(self.n):
            u1[i] = self.rhs[i]
            a1[i] = self.a0 * (u1[i] - self.w[i]) - self.a2 * self.wd[i] - self.a3 * self.wdd[i]
            v1[i] = self.wd[i] + self.a6 * self.wdd[i] + self.a7 * a1[i]

    def bridge_step(self, const double[::1] f):
        """Advance and commit the bridge under the force vector f."""
        cdef int i
        self._bridge_newmark(f, self.w_it, self.wd_it, self.wdd_it)
        for i in range(self.n):
            self.w[i] = self.w_it[i]
            self.wd[i] = self.wd_it[i]
            self.wdd[i] = self.wdd_it[i]

    # -- vehicles ----------------------------------------------------------

    cdef void _vehicle_trial(self, int i) noexcept nogil:
        """Advance vehicle i from its committed state under self.up/upd."""
        cdef int nf = <int>self.nf[i]
        cdef int na = <int>self.na[i]
        cdef int r, c
        cdef double s, u1, v1, a1
        for r in range(nf):
            s = 0.0
            for c in range(na):
                s -= self.cfp[i, r, c] * self.upd[c] + self.kfp[i, r, c] * self.up[c]
            s += self.mv[i, r] * (self.a0 * self.uv[i, r] + self.a2 * self.vv[i, r]
                                  + self.a3 * self.av[i, r])
            self.vrhs[r] = s
        for r in range(nf):
            s = 0.0
            for c in range(nf):
                s += self.cv[i, r, c] * (self.a1 * self.uv[i, c] + self.a4 * self.vv[i, c]
                                         + self.a5 * self.av[i, c])
            self.vrhs[r] += s
        _chol_solve(self.lv[i, :nf, :nf], &self.vrhs[0], &self.vy[0], nf)
        for r in range(nf):
            u1 = self.vrhs[r]
            a1 = self.a0 * (u1 - self.uv[i, r]) - self.a2 * self.vv[i, r] - self.a3 * self.av[i, r]
            v1 = self.vv[i, r] + self.a6 * self.av[i, r] + self.a7 * a1
            self.uv_c[i, r] = u1
            self.vv_c[i, r] = v1
            self.av_c[i, r] = a1
        for r in range(na):
            s = 0.0
            for c in range(nf):
                s += self.kpf[i, r, c] * self.uv_c[i, c] + self.cpf[i, r, c] * self.vv_c[i, c]
            for c in range(na):
                s += self.kpp[i, r, c] * self.up[c] + self.cpp[i, r, c] * self.upd[c]
            self.reac[r] = s

    def vehicle_step(self, int i, const double[::1] up, const double[::1] upd):
        """Advance and commit vehicle i; returns the dynamic reactions."""
        cdef int na = <int>self.na[i]
        cdef int nf = <int>self.nf[i]
        cdef int r
        for r in range(na):
            self.up[r] = up[r]
            self.upd[r] = upd[r]
        self._vehicle_trial(i)
        for r in range(nf):
            self.uv[i, r] = self.uv_c[i, r]
            self.vv[i, r] = self.vv_c[i, r]
            self.av[i, r] = self.av_c[i, r]
        out = np.empty(na)
        for r in range(na):
            out[r] = self.reac[r]
        return out

    # -- helpers -----------------------------------------------------------

    cdef double _interp(self, const double[::1] vec, double x) noexcept nogil:
        cdef int e = <int>(x / self.dx)
        cdef double xi, wi, wj, ti, tj, h1, h2, h3, h4
        cdef long long iv, jv
        if e < 0:
            e = 0
        if e > self.n_nodes - 2:
            e = self.n_nodes - 2
        xi = x / self.dx - e
        iv = self.vert_free[e]
        jv = self.vert_free[e + 1]
        wi = vec[iv] if iv >= 0 else 0.0
        wj = vec[jv] if jv >= 0 else 0.0
        if not self.hermitian:
            return (1.0 - xi) * wi + xi * wj
        iv = self.rot_free[e]
        jv = self.rot_free[e + 1]
        ti = vec[iv] if iv >= 0 else 0.0
        tj = vec[jv] if jv >= 0 else 0.0
        h1 = 1.0 - 3.0 * xi * xi + 2.0 * xi * xi * xi
        h2 = self.dx * (xi - 2.0 * xi * xi + xi * xi * xi)
        h3 = 3.0 * xi * xi - 2.0 * xi * xi * xi
        h4 = self.dx * (xi * xi * xi - xi * xi)
        return h1 * wi + h2 * ti + h3 * wj + h4 * tj

    cdef void _map_force(self, double[::1] f, double x, double total) noexcept nogil:
        cdef int e = <int>(x / self.dx)
        cdef double xi
        cdef long long iv, jv
        if e < 0:
            e = 0
        if e > self.n_nodes - 2:
            e = self.n_nodes - 2
        xi = x / self.dx - e
        iv = self.vert_free[e]
        jv = self.vert_free[e + 1]
        if iv >= 0:
            f[iv] -= (1.0 - xi) * total
        if jv >= 0:
            f[jv] -= xi * total

    cdef void _gather_vert(self, const double[::1] vec, double[::1] out) noexcept nogil:
        cdef int j
        cdef long long idx
        for j in range(self.n_nodes):
            idx = self.vert_free[j]
            out[j] = vec[idx] if idx >= 0 else 0.0

    # -- coupled step --------------------------------------------------------

    def coupled_step(self, int j):
        """One coupled time step onto time index j.

        Returns (iterations, uplift_count, converged); commits the
        final iterate into the plan buffers.
        """
        cdef int i, a, r, k, e
        cdef int iters = 0
        cdef int uplift = 0
        cdef bint converged = False
        cdef double x, wi, wdi, total, num, den, eps

        # Predictor: traffic only, no vehicle forces.
        self._bridge_newmark(self.f_traffic, self.w_it, self.wd_it, self.wdd_it)
        self._gather_vert(self.w_it, self.prev_vert)

        for k in range(self.max_iter):
            iters += 1
            uplift = 0
            for r in range(self.n):
                self.fwork[r] = self.f_traffic[r]
            for i in range(self.nv):
                for a in range(<int>self.na[i]):
                    x = self.x_ax[i, j, a]
                    if 0.0 <= x <= self.span:
                        wi = self._interp(self.w_it, x)
                        wdi = self._interp(self.wd_it, x)
                    else:
                        wi = 0.0
                        wdi = 0.0
                    self.up[a] = wi + self.r_ax[i, j, a]
                    self.upd[a] = wdi + self.rdot_ax[i, j, a]
                self._vehicle_trial(i)
                for a in range(<int>self.na[i]):
                    total = self.w_static[i, a] + self.reac[a]
                    if total < 0.0:
                        total = 0.0
                        uplift += 1
                    self.contact_out[i, a] = total
                    x = self.x_ax[i, j, a]
                    if 0.0 <= x <= self.span:
                        self._map_force(self.fwork, x, total)
            self._bridge_newmark(self.fwork, self.w_it, self.wd_it, self.wdd_it)
            self._gather_vert(self.w_it, self.vert)
            num = 0.0
            den = 0.0
            for r in range(self.n_nodes):
                num += (self.vert[r] - self.prev_vert[r]) ** 2
                if fabs(self.vert[r]) > den:
                    den = fabs(self.vert[r])
                self.prev_vert[r] = self.vert[r]
            num = sqrt(num / self.n_nodes)
            if den == 0.0:
                eps = 0.0 if num == 0.0 else 1e300
            else:
                eps = num / den
            if eps < self.tol:
                converged = True
                break

        for r in range(self.n):
            self.w[r] = self.w_it[r]
            self.wd[r] = self.wd_it[r]
            self.wdd[r] = self.wdd_it[r]
        for i in range(self.nv):
            for r in range(<int>self.nf[i]):
                self.uv[i, r] = self.uv_c[i, r]
                self.vv[i, r] = self.vv_c[i, r]
                self.av[i, r] = self.av_c[i, r]
        return iters, uplift, converged


def make_core(plan):
    return NativeCore(plan)
