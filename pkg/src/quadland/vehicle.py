"""Rigid-body quadrotor model: states, rotor-to-wrench allocation, dynamics
and a fourth-order Runge-Kutta step.

Units: SI throughout except motor commands, which are squared rotor speeds
in RPM^2 (u = [n1^2, n2^2, n3^2, n4^2]).  The thrust model is T = c_T * sum(u)
with c_T in N/RPM^2, so hover for the default airframe sits near n = 2000 RPM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .so3 import skew, project_rotation, project_rotation_fast


class SingularAllocationError(ValueError):
    """Allocation matrix is not invertible (a rotor coefficient is zero)."""


class NonFiniteStateError(RuntimeError):
    """Integration produced NaN/inf state components."""


ORTHONORMALITY_TOL = 1e-9


@dataclass
class VehicleParams:
    """Physical airframe constants.

    m          mass [kg]
    J          inertia matrix [kg m^2], symmetric positive definite
    g_mag      gravitational acceleration [m/s^2]
    c_T        rotor thrust coefficient [N/RPM^2]
    c_Q        rotor torque coefficient [N m/RPM^2]
    l_arm      rotor arm length [m]
    rotor_diameter  rotor diameter D [m]
    air_density     [kg/m^3]
    u_max      per-motor saturation bound on squared speed [RPM^2]
    """

    m: float = 1.47
    J: np.ndarray = field(default_factory=lambda: np.diag([0.01, 0.01, 0.02]))
    g_mag: float = 9.81
    c_T: float = 9.013e-7
    c_Q: float = 1.442e-8
    l_arm: float = 0.115
    rotor_diameter: float = 0.23
    air_density: float = 1.225
    u_max: float = 6400.0 ** 2

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float)
        if self.m <= 0 or self.l_arm <= 0 or self.c_T <= 0:
            raise ValueError("m, l_arm and c_T must be positive")
        if not np.allclose(self.J, self.J.T, atol=1e-12):
            raise ValueError("J must be symmetric")
        if np.any(np.linalg.eigvalsh(self.J) <= 0):
            raise ValueError("J must be positive definite")
        self.J_inv = np.linalg.inv(self.J)
        self._g_vec = np.array([0.0, 0.0, -self.g_mag])

    @property
    def g_vec(self):
        return self._g_vec

    @property
    def hover_thrust(self):
        return self.m * self.g_mag

    @property
    def hover_u(self):
        """Per-motor squared speed for level hover, ignoring disturbances."""
        return self.m * self.g_mag / (4.0 * self.c_T)


@dataclass
class VehicleState:
    """Full rigid-body state (p, v, R, omega)."""

    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)

    @classmethod
    def rest(cls, p=(0.0, 0.0, 0.0)):
        return cls(np.asarray(p, dtype=float), np.zeros(3), np.eye(3), np.zeros(3))

    def copy(self):
        return VehicleState(self.p.copy(), self.v.copy(), self.R.copy(), self.omega.copy())

    def is_finite(self):
        # NaN/inf propagate through the scalar reduction
        total = (float(self.p @ self.p) + float(self.v @ self.v)
                 + float(self.omega @ self.omega) + float(self.R.sum()))
        return bool(np.isfinite(total))

    def orthonormality_error(self):
        return float(np.linalg.norm(self.R.T @ self.R - np.eye(3)))


@dataclass
class RotorCommand:
    """Squared motor speeds [RPM^2], non-negative and per-motor saturated."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)

    def clipped(self, u_max):
        return RotorCommand(np.clip(self.u, 0.0, u_max))

    def saturates(self, u_max):
        return bool(np.any(self.u < 0.0) or np.any(self.u > u_max))


@dataclass
class Wrench:
    """Collective thrust T [N] and body torques tau [N m]."""

    T: float
    tau: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)


def build_allocation_matrix(params: VehicleParams):
    """4x4 map B0 from squared motor speeds to the wrench [T, tau_x, tau_y, tau_z].

    Raises SingularAllocationError if any coefficient vanishes.
    """
    cT, cQ, l = params.c_T, params.c_Q, params.l_arm
    if cT == 0.0 or cQ == 0.0 or l == 0.0:
        raise SingularAllocationError(
            "allocation matrix singular: c_T=%g c_Q=%g l_arm=%g" % (cT, cQ, l))
    return np.array([
        [cT, cT, cT, cT],
        [0.0, cT * l, 0.0, -cT * l],
        [-cT * l, 0.0, cT * l, 0.0],
        [-cQ, cQ, -cQ, cQ],
    ])


def wrench_from_command(B0, cmd: RotorCommand) -> Wrench:
    eta = B0 @ cmd.u
    return Wrench(float(eta[0]), eta[1:4])


def _cross3(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _deriv_raw(p, v, R, w, T, tau, f_a, tau_a, params):
    p_dot = v
    v_dot = params.g_vec + (R[:, 2] * T + f_a) / params.m
    R_dot = np.empty((3, 3))
    wx, wy, wz = w
    R_dot[:, 0] = wz * R[:, 1] - wy * R[:, 2]
    R_dot[:, 1] = wx * R[:, 2] - wz * R[:, 0]
    R_dot[:, 2] = wy * R[:, 0] - wx * R[:, 1]
    Jw = params.J @ w
    omega_dot = params.J_inv @ (_cross3(Jw, w) + tau + tau_a)
    return p_dot, v_dot, R_dot, omega_dot


def dynamics_derivative(state: VehicleState, wrench: Wrench, disturbance,
                        params: VehicleParams):
    """Time derivative (p_dot, v_dot, R_dot, omega_dot) of the rigid body.

    disturbance is the pair (f_a [N, world frame], tau_a [N m, body frame]).
    """
    f_a, tau_a = disturbance
    return _deriv_raw(state.p, state.v, state.R, state.omega,
                      wrench.T, wrench.tau, f_a, tau_a, params)


class _StageState:
    """Minimal state view handed to disturbance callbacks at RK4 stages."""

    __slots__ = ("p", "v", "R", "omega")

    def __init__(self, p, v, R, omega):
        self.p = p
        self.v = v
        self.R = R
        self.omega = omega


def integrate_step(state: VehicleState, wrench: Wrench, disturbance_fn,
                   params: VehicleParams, dt: float) -> VehicleState:
    """One RK4 step under a held wrench; R is re-orthonormalized afterwards.

    disturbance_fn(state) -> (f_a, tau_a) is evaluated at every RK4 stage so
    state-dependent disturbance fields are integrated consistently.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    T, tau = wrench.T, wrench.tau

    def deriv(p, v, R, w):
        f_a, tau_a = disturbance_fn(_StageState(p, v, R, w))
        return _deriv_raw(p, v, R, w, T, tau, f_a, tau_a, params)

    p, v, R, w = state.p, state.v, state.R, state.omega
    half = dt / 2.0
    k1 = deriv(p, v, R, w)
    k2 = deriv(p + half * k1[0], v + half * k1[1], R + half * k1[2], w + half * k1[3])
    k3 = deriv(p + half * k2[0], v + half * k2[1], R + half * k2[2], w + half * k2[3])
    k4 = deriv(p + dt * k3[0], v + dt * k3[1], R + dt * k3[2], w + dt * k3[3])

    sixth = dt / 6.0
    new = VehicleState(
        p + sixth * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        v + sixth * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        R + sixth * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        w + sixth * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]),
    )
    new.R = project_rotation_fast(new.R)
    if not new.is_finite():
        raise NonFiniteStateError("integration diverged to non-finite state")
    return new


def mechanical_energy(state: VehicleState, params: VehicleParams):
    """Kinetic + potential energy, used by conservation sanity checks."""
    return (0.5 * params.m * float(state.v @ state.v)
            + params.m * params.g_mag * float(state.p[2])
            + 0.5 * float(state.omega @ (params.J @ state.omega)))
