"""Mass-spring-dashpot vehicle models with driven contact nodes.

Five model types are supported, from a single sprung mass to a
two-axle body with pitch and independent axle masses. Every model is
assembled from its spring connectivity: each spring or dashpot
contributes k*g*g^T (c*g*g^T) to the full-system matrices, where g is
the elongation gradient over the ordered (free, prescribed) DOFs. The
contact DOFs are prescribed; advancing a model means one Newmark step
under imposed contact displacement and velocity, returning the dynamic
reaction (downward positive) at each axle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np
import scipy.linalg

from ._kernels.py_kernels import newmark_coefficients, newmark_step
from .errors import InvalidModel, ShapeMismatch

GRAVITY = 9.81


@dataclass(frozen=True)
class OneAxleSimple:
    """Sprung mass over a spring-dashpot directly at the contact."""

    tag: ClassVar[str] = "one_axle_simple"
    m: float
    k: float
    c: float = 0.0

    def __post_init__(self):
        if self.m <= 0 or self.k <= 0 or self.c < 0:
            raise InvalidModel("mass and stiffness must be positive, damping >= 0")


@dataclass(frozen=True)
class OneAxleComp:
    """Quarter car: sprung body over suspension, axle mass over tyre."""

    tag: ClassVar[str] = "one_axle_comp"
    m_s: float
    m_u: float
    k_s: float
    c_s: float
    k_t: float
    c_t: float

    def __post_init__(self):
        if min(self.m_s, self.m_u, self.k_s, self.k_t) <= 0:
            raise InvalidModel("masses and stiffnesses must be positive")
        if self.c_s < 0 or self.c_t < 0:
            raise InvalidModel("dampings must be non-negative")


@dataclass(frozen=True)
class TwoAxleComp1:
    """Two independent quarter-car halves spaced by the wheelbase."""

    tag: ClassVar[str] = "two_axle_comp1"
    m_s: float
    m_u: float
    k_s: float
    c_s: float
    k_t: float
    c_t: float
    d: float

    def __post_init__(self):
        if min(self.m_s, self.m_u, self.k_s, self.k_t) <= 0:
            raise InvalidModel("masses and stiffnesses must be positive")
        if self.c_s < 0 or self.c_t < 0:
            raise InvalidModel("dampings must be non-negative")
        if self.d <= 0:
            raise InvalidModel("axle spacing must be positive")


@dataclass(frozen=True)
class TwoAxleComp2:
    """Half car: rigid body with bounce and pitch on two suspensions.

    ``d2`` is the CG-to-rear-axle distance; CG-to-front is d - d2.
    Positive pitch is nose-up.
    """

    tag: ClassVar[str] = "two_axle_comp2"
    m_v: float
    J_v: float
    k_r: float
    c_r: float
    k_f: float
    c_f: float
    d: float
    d2: float

    def __post_init__(self):
        if min(self.m_v, self.J_v, self.k_r, self.k_f) <= 0:
            raise InvalidModel("masses and stiffnesses must be positive")
        if self.c_r < 0 or self.c_f < 0:
            raise InvalidModel("dampings must be non-negative")
        if not (0.0 < self.d2 < self.d):
            raise InvalidModel("CG must lie strictly between the axles")

    @property
    def d1(self) -> float:
        """CG-to-front-axle distance."""
        return self.d - self.d2


@dataclass(frozen=True)
class TwoAxleComp3:
    """Full composite half car: comp2 plus independent axle masses and tyres."""

    tag: ClassVar[str] = "two_axle_comp3"
    m_v: float
    J_v: float
    k_r: float
    c_r: float
    k_f: float
    c_f: float
    d: float
    d2: float
    m_ur: float
    m_uf: float
    k_tr: float
    c_tr: float
    k_tf: float
    c_tf: float

    def __post_init__(self):
        if min(self.m_v, self.J_v, self.k_r, self.k_f) <= 0:
            raise InvalidModel("masses and stiffnesses must be positive")
        if min(self.m_ur, self.m_uf, self.k_tr, self.k_tf) <= 0:
            raise InvalidModel("axle masses and tyre stiffnesses must be positive")
        if min(self.c_r, self.c_f, self.c_tr, self.c_tf) < 0:
            raise InvalidModel("dampings must be non-negative")
        if not (0.0 < self.d2 < self.d):
            raise InvalidModel("CG must lie strictly between the axles")

    @property
    def d1(self) -> float:
        return self.d - self.d2


VehicleModel = Union[OneAxleSimple, OneAxleComp, TwoAxleComp1, TwoAxleComp2, TwoAxleComp3]

MODEL_TAGS = {
    cls.tag: cls
    for cls in (OneAxleSimple, OneAxleComp, TwoAxleComp1, TwoAxleComp2, TwoAxleComp3)
}


@dataclass(frozen=True)
class VehicleSystem:
    """Assembled vehicle matrices partitioned into free and prescribed DOFs."""

    tag: str
    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    C_fp: np.ndarray
    K_fp: np.ndarray
    C_pf: np.ndarray
    K_pf: np.ndarray
    C_pp: np.ndarray
    K_pp: np.ndarray
    axle_offsets: np.ndarray
    static_axle_forces: np.ndarray
    dof_names: tuple[str, ...]
    body_dof: int

    @property
    def n_free(self) -> int:
        return self.M.shape[0]

    @property
    def n_axles(self) -> int:
        return len(self.axle_offsets)


@dataclass(frozen=True)
class VehicleState:
    """Free-DOF displacement, velocity, and acceleration."""

    u: np.ndarray
    v: np.ndarray
    a: np.ndarray

    @classmethod
    def zeros(cls, n_free: int) -> "VehicleState":
        return cls(np.zeros(n_free), np.zeros(n_free), np.zeros(n_free))


def static_axle_forces(model: VehicleModel, gravity: float = GRAVITY) -> np.ndarray:
    """Static axle loads under gravity, downward positive, rear first.

    Two-axle body weight splits by lever statics about the CG; axle
    masses load their own contact.
    """
    if isinstance(model, OneAxleSimple):
        return np.array([model.m * gravity])
    if isinstance(model, OneAxleComp):
        return np.array([(model.m_s + model.m_u) * gravity])
    if isinstance(model, TwoAxleComp1):
        half = (model.m_s + model.m_u) * gravity
        return np.array([half, half])
    if isinstance(model, TwoAxleComp2):
        w = model.m_v * gravity
        return np.array([w * model.d1 / model.d, w * model.d2 / model.d])
    if isinstance(model, TwoAxleComp3):
        w = model.m_v * gravity
        return np.array(
            [
                w * model.d1 / model.d + model.m_ur * gravity,
                w * model.d2 / model.d + model.m_uf * gravity,
            ]
        )
    raise InvalidModel(f"unknown vehicle model {type(model).__name__}")


def _springs_and_masses(model: VehicleModel):
    """Per-tag DOF layout: masses, springs (k, c, gradient), offsets, names.

    Gradient rows span the ordered (free..., prescribed...) DOFs and
    hold the elongation derivative of each spring, so the assembled
    K = sum k*g*g^T is symmetric over the full set by construction.
    """
    if isinstance(model, OneAxleSimple):
        masses = [model.m]
        springs = [(model.k, model.c, [1.0, -1.0])]
        offsets = [0.0]
        names = ("y",)
        body = 0
    elif isinstance(model, OneAxleComp):
        masses = [model.m_u, model.m_s]
        springs = [
            (model.k_t, model.c_t, [1.0, 0.0, -1.0]),
            (model.k_s, model.c_s, [-1.0, 1.0, 0.0]),
        ]
        offsets = [0.0]
        names = ("y_u", "y_s")
        body = 1
    elif isinstance(model, TwoAxleComp1):
        masses = [model.m_u, model.m_s, model.m_u, model.m_s]
        springs = [
            (model.k_t, model.c_t, [1.0, 0.0, 0.0, 0.0, -1.0, 0.0]),
            (model.k_s, model.c_s, [-1.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            (model.k_t, model.c_t, [0.0, 0.0, 1.0, 0.0, 0.0, -1.0]),
            (model.k_s, model.c_s, [0.0, 0.0, -1.0, 1.0, 0.0, 0.0]),
        ]
        offsets = [0.0, model.d]
        names = ("y_ur", "y_sr", "y_uf", "y_sf")
        body = 1
    elif isinstance(model, TwoAxleComp2):
        d1, d2 = model.d1, model.d2
        masses = [model.m_v, model.J_v]
        springs = [
            (model.k_r, model.c_r, [1.0, -d2, -1.0, 0.0]),
            (model.k_f, model.c_f, [1.0, d1, 0.0, -1.0]),
        ]
        offsets = [0.0, model.d]
        names = ("y_v", "theta_v")
        body = 0
    elif isinstance(model, TwoAxleComp3):
        d1, d2 = model.d1, model.d2
        masses = [model.m_ur, model.m_uf, model.m_v, model.J_v]
        springs = [
            (model.k_tr, model.c_tr, [1.0, 0.0, 0.0, 0.0, -1.0, 0.0]),
            (model.k_tf, model.c_tf, [0.0, 1.0, 0.0, 0.0, 0.0, -1.0]),
            (model.k_r, model.c_r, [-1.0, 0.0, 1.0, -d2, 0.0, 0.0]),
            (model.k_f, model.c_f, [0.0, -1.0, 1.0, d1, 0.0, 0.0]),
        ]
        offsets = [0.0, model.d]
        names = ("y_ur", "y_uf", "y_v", "theta_v")
        body = 2
    else:
        raise InvalidModel(f"unknown vehicle model {type(model).__name__}")
    return masses, springs, offsets, names, body


def build_system(model: VehicleModel, gravity: float = GRAVITY) -> VehicleSystem:
    """Assemble the partitioned vehicle matrices for one model."""
    masses, springs, offsets, names, body = _springs_and_masses(model)
    nf = len(masses)
    n_p = len(offsets)
    n = nf + n_p
    K = np.zeros((n, n))
    C = np.zeros((n, n))
    for k, c, grad in springs:
        g = np.asarray(grad)
        K += k * np.outer(g, g)
        C += c * np.outer(g, g)
    f = slice(0, nf)
    p = slice(nf, n)
    return VehicleSystem(
        tag=model.tag,
        M=np.diag(masses).astype(float),
        C=C[f, f].copy(),
        K=K[f, f].copy(),
        C_fp=C[f, p].copy(),
        K_fp=K[f, p].copy(),
        C_pf=C[p, f].copy(),
        K_pf=K[p, f].copy(),
        C_pp=C[p, p].copy(),
        K_pp=K[p, p].copy(),
        axle_offsets=np.asarray(offsets, dtype=float),
        static_axle_forces=static_axle_forces(model, gravity),
        dof_names=names,
        body_dof=body,
    )


def step_imposed(
    sys: VehicleSystem,
    state: VehicleState,
    u_p: np.ndarray,
    udot_p: np.ndarray,
    dt: float,
    f_ext: np.ndarray | None = None,
) -> tuple[VehicleState, np.ndarray]:
    """One Newmark step under imposed contact displacement and velocity.

    Solves M u'' + C u' + K u = -(C_fp udot_p + K_fp u_p) [+ f_ext] and
    returns the new state together with the dynamic reactions
    R_i = [K_pf u + C_pf u' + K_pp u_p + C_pp udot_p]_i (downward
    positive force on the supporting surface).
    """
    u_p = np.atleast_1d(np.asarray(u_p, dtype=float))
    udot_p = np.atleast_1d(np.asarray(udot_p, dtype=float))
    if len(u_p) != sys.n_axles or len(udot_p) != sys.n_axles:
        raise ShapeMismatch("prescribed motion length must equal the axle count")
    coeffs = newmark_coefficients(dt)
    m_diag = np.diag(sys.M)
    k_eff = sys.K + coeffs[0] * sys.M + coeffs[1] * sys.C
    chol = np.linalg.cholesky(k_eff)
    rhs = -(sys.C_fp @ udot_p + sys.K_fp @ u_p)
    if f_ext is not None:
        rhs = rhs + f_ext
    u1, v1, a1 = newmark_step(chol, m_diag, sys.C, coeffs, state.u, state.v, state.a, rhs)
    reactions = sys.K_pf @ u1 + sys.C_pf @ v1 + sys.K_pp @ u_p + sys.C_pp @ udot_p
    return VehicleState(u1, v1, a1), reactions


def natural_frequencies(sys: VehicleSystem) -> np.ndarray:
    """Eigenfrequencies (Hz, ascending) of the grounded vehicle."""
    evals = scipy.linalg.eigh(sys.K, sys.M, eigvals_only=True)
    return np.sqrt(np.maximum(evals, 0.0)) / (2.0 * np.pi)
