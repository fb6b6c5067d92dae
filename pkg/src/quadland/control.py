"""Tracking controllers: composite-variable position loop, thrust/attitude
extraction, geometric attitude torque loop, and fixed-point control
allocation through the learned disturbance model.

The position loop tracks a reference velocity v_r = pd_dot - Lambda*p_err so
that driving the composite variable s = v - v_r to zero forces exponential
decay of the position error.  The allocation is non-affine when a disturbance
predictor depends on the motor command, and is solved by iterating
u <- B0^-1 * eta_d(u) from the previous command; this converges when
sigma(B0^-1) times the predictor's u-Lipschitz constant is below one.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .so3 import vee, skew
from .vehicle import RotorCommand, VehicleParams, build_allocation_matrix


class ContractionError(RuntimeError):
    """Allocation contraction certificate sigma(B0^-1)*L_a_u < 1 fails."""


class GainConditionError(RuntimeError):
    """Tracking gain condition lambda_min(Kv) > L_a*rho fails."""


class DegenerateForceError(ValueError):
    """Desired force vector too small to define a thrust direction."""


# ---------------------------------------------------------------------------
# references


class SetpointProfile:
    """Piecewise-constant position setpoints with zero velocity reference."""

    def __init__(self, times, points, yaw=0.0, names=None):
        assert len(times) == len(points)
        self.times = np.asarray(times, dtype=float)
        self.points = [np.asarray(p, dtype=float) for p in points]
        self.yaw_d = yaw
        self.names = names or ["phase%d" % i for i in range(len(points))]

    def phase(self, t):
        return int(np.searchsorted(self.times, t + 1e-12) - 1) if t >= self.times[0] else 0

    def phase_names(self):
        return list(self.names)

    def eval(self, t):
        p = self.points[max(self.phase(t), 0)]
        return p, np.zeros(3), np.zeros(3)

    def yaw(self, t):
        return self.yaw_d


class EllipseTrajectory:
    """Horizontal ellipse at constant height, parameterized by period."""

    def __init__(self, center, semi_x, semi_y, period, yaw=0.0):
        self.center = np.asarray(center, dtype=float)
        self.semi_x = semi_x
        self.semi_y = semi_y
        self.period = period
        self.yaw_d = yaw

    def phase(self, t):
        return 0

    def phase_names(self):
        return ["ellipse"]

    def eval(self, t):
        w = 2.0 * np.pi / self.period
        th = w * t
        p = self.center + np.array([self.semi_x * np.cos(th),
                                    self.semi_y * np.sin(th), 0.0])
        v = np.array([-self.semi_x * w * np.sin(th),
                      self.semi_y * w * np.cos(th), 0.0])
        a = np.array([-self.semi_x * w * w * np.cos(th),
                      -self.semi_y * w * w * np.sin(th), 0.0])
        return p, v, a

    def yaw(self, t):
        return self.yaw_d


def _quintic(s):
    """Min-jerk basis h(s) on [0,1] with zero boundary velocity/acceleration."""
    h = s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)
    dh = 30.0 * s * s * (1.0 - s) ** 2
    ddh = 60.0 * s * (1.0 - 3.0 * s + 2.0 * s * s)
    return h, dh, ddh


class WaypointTrajectory:
    """C2 trajectory through waypoints: min-jerk moves separated by holds.

    segments: list of (t0, t1, p0, p1); between segments the trajectory holds
    the last endpoint.  phase_marks maps times to integer phase ids.
    """

    def __init__(self, segments, yaw=0.0, phase_marks=None, names=None):
        self.segments = [(float(t0), float(t1), np.asarray(p0, float), np.asarray(p1, float))
                         for t0, t1, p0, p1 in segments]
        self.yaw_d = yaw
        self.phase_marks = phase_marks or [0.0]
        self.names = names or ["part%d" % (i + 1) for i in range(len(self.phase_marks))]

    def phase(self, t):
        return max(int(np.searchsorted(self.phase_marks, t + 1e-12) - 1), 0)

    def phase_names(self):
        return list(self.names)

    def eval(self, t):
        prev_end = self.segments[0][2]
        for t0, t1, p0, p1 in self.segments:
            if t < t0:
                return prev_end, np.zeros(3), np.zeros(3)
            if t <= t1:
                T = t1 - t0
                h, dh, ddh = _quintic((t - t0) / T)
                d = p1 - p0
                return p0 + d * h, d * dh / T, d * ddh / (T * T)
            prev_end = p1
        return prev_end, np.zeros(3), np.zeros(3)

    def yaw(self, t):
        return self.yaw_d


# ---------------------------------------------------------------------------
# gains and controller state


@dataclass
class ControllerGains:
    """Position/attitude tracking gains and the fixed-point policy.

    Lambda [1/s] and Kv [N s/m] shape the position loop, K_omega and Lambda_R
    the attitude loop.  rho_assumed is the design value for the one-step
    command-to-error ratio used in the construction-time gain check; the
    flown value is measured per run.
    """

    Lambda: np.ndarray = dc_field(default_factory=lambda: 2.0 * np.eye(3))
    Kv: np.ndarray = dc_field(default_factory=lambda: 8.0 * np.eye(3))
    K_omega: np.ndarray = dc_field(default_factory=lambda: 0.4 * np.eye(3))
    Lambda_R: np.ndarray = dc_field(default_factory=lambda: 10.0 * np.eye(3))
    integral: bool = False
    integral_limit: float = 1.0
    fp_iters: int = 1
    fp_tol: float = 1e-3
    rho_assumed: float = 5.0e6

    def __post_init__(self):
        for name in ("Lambda", "Kv", "K_omega", "Lambda_R"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.ndim == 0:
                M = float(M) * np.eye(3)
            setattr(self, name, M)
            if np.any(np.linalg.eigvalsh(0.5 * (M + M.T)) <= 0):
                raise ValueError("%s must be positive definite" % name)

    @property
    def lambda_min_Kv(self):
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.Kv + self.Kv.T))))

    @property
    def lambda_min_Lambda(self):
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.Lambda + self.Lambda.T))))


@dataclass
class ControllerState:
    """Single-owner mutable state threaded through the control loop."""

    u_prev: np.ndarray
    integral: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    map_version: int = -1
    last_resid: float = np.nan
    last_resid_map: int = -2
    last_resid_saturated: bool = True
    resid_pair: tuple = (np.nan, np.nan, False)   # (r_prev, r_cur, pair_valid)
    saturated: bool = False
    rho_observed: float = 0.0
    max_ratio_observed: float = 0.0
    f_hat: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.u_prev = np.asarray(self.u_prev, dtype=float)


# ---------------------------------------------------------------------------
# core operations


def composite_variable(state, ref, gains: ControllerGains, t,
                       integral_acc=None):
    """(s, v_r, vr_dot, p_err) at time t.

    Standard form: v_r = pd_dot - Lambda*p_err.  Integral variant:
    v_r = pd_dot - 2*Lambda*p_err - Lambda^2*int(p_err).
    """
    p_d, v_d, a_d = ref.eval(t)
    p_err = state.p - p_d
    perr_dot = state.v - v_d
    if gains.integral and integral_acc is not None:
        L2 = gains.Lambda @ gains.Lambda
        v_r = v_d - 2.0 * (gains.Lambda @ p_err) - L2 @ integral_acc
        vr_dot = a_d - 2.0 * (gains.Lambda @ perr_dot) - L2 @ p_err
    else:
        v_r = v_d - gains.Lambda @ p_err
        vr_dot = a_d - gains.Lambda @ perr_dot
    s = state.v - v_r
    return s, v_r, vr_dot, p_err


def desired_force(s, vr_dot, f_hat, params: VehicleParams, gains: ControllerGains):
    """(f_d, f_bar_d): feedback-linearizing force with disturbance cancellation.

    f_bar_d = m*vr_dot - Kv*s - m*g ; f_d = f_bar_d - f_hat.
    """
    f_bar_d = params.m * vr_dot - gains.Kv @ s - params.m * params.g_vec
    return f_bar_d - f_hat, f_bar_d


def thrust_attitude_from_force(f_d, R, yaw_d):
    """(T_d, R_d) from the desired force.

    T_d projects f_d on the current thrust axis k = R e3; R_d aligns the body
    z axis with f_d and the heading with yaw_d via the cross-product
    construction, with a fallback heading axis at the gimbal degeneracy.
    """
    f_d = np.asarray(f_d, dtype=float)
    nf = float(np.linalg.norm(f_d))
    if nf < 1e-6:
        raise DegenerateForceError("|f_d| = %g below 1e-6 N" % nf)
    k_hat = R[:, 2]
    T_d = float(f_d @ k_hat)
    k_d = f_d / nf
    x_c = np.array([np.cos(yaw_d), np.sin(yaw_d), 0.0])
    y_d = np.cross(k_d, x_c)
    ny = np.linalg.norm(y_d)
    if ny < 1e-6:
        x_c = np.array([-np.sin(yaw_d), np.cos(yaw_d), 0.0])
        y_d = np.cross(k_d, x_c)
        ny = np.linalg.norm(y_d)
    y_d = y_d / ny
    x_d = np.cross(y_d, k_d)
    R_d = np.column_stack([x_d, y_d, k_d])
    return T_d, R_d


def attitude_error(R, R_d):
    return 0.5 * vee(R_d.T @ R - R.T @ R_d)


def attitude_torque(state, R_d, omega_d, params: VehicleParams,
                    gains: ControllerGains):
    """Desired body torque tau_d = J*wr_dot - (J*w) x w_r - K_omega*(w - w_r).

    The angular-rate reference w_r = R^T R_d w_d - Lambda_R*e_R mirrors the
    position-loop composite structure; wr_dot is its exact derivative under a
    held R_d (the attitude reference is zero-order held between position
    updates).
    """
    R = state.R
    w = state.omega
    e_R = attitude_error(R, R_d)
    w_r = R.T @ (R_d @ omega_d) - gains.Lambda_R @ e_R
    A = R_d.T @ R
    eR_dot = 0.5 * vee(A @ skew(w) + skew(w) @ A.T)
    wr_dot = -gains.Lambda_R @ eR_dot
    return params.J @ wr_dot - np.cross(params.J @ w, w_r) - gains.K_omega @ (w - w_r)


def allocate_fixed_point(f_bar_d, tau_d, k_hat, predictor, state_snapshot,
                         ctrl: ControllerState, B0_inv, gains: ControllerGains,
                         u_max, certified_ratio=None):
    """Iterate u <- B0^-1 [ (f_bar_d - f_hat(zeta, u)) . k ; tau_d ].

    With predictor None (baseline) the map is affine and one iteration is
    exact.  Commands are clamped per motor; residual bookkeeping marks
    (r_prev, r_cur) pairs as contraction-valid only when both steps used the
    same frozen map and neither saturated.  Returns (RotorCommand, info).
    """
    ratio_floor = 1e-7 * u_max
    u = ctrl.u_prev
    iters = 0
    r_new = np.nan
    saturated = False
    for iters in range(1, max(gains.fp_iters, 1) + 1):
        if predictor is not None:
            f_hat = predictor.predict(state_snapshot, u)
        else:
            f_hat = np.zeros(3)
        T_d = float((f_bar_d - f_hat) @ k_hat)
        eta = np.concatenate(([T_d], tau_d))
        u_raw = B0_inv @ eta
        u_new = np.clip(u_raw, 0.0, u_max)
        saturated = bool(np.any(u_raw < 0.0) or np.any(u_raw > u_max))
        r_new = float(np.linalg.norm(u_new - u))

        pair_valid = (ctrl.last_resid_map == ctrl.map_version
                      and not saturated and not ctrl.last_resid_saturated
                      and np.isfinite(ctrl.last_resid)
                      and ctrl.last_resid > ratio_floor)
        ctrl.resid_pair = (ctrl.last_resid, r_new, pair_valid)
        if pair_valid and ctrl.last_resid > 0:
            ctrl.max_ratio_observed = max(ctrl.max_ratio_observed,
                                          r_new / ctrl.last_resid)
        ctrl.last_resid = r_new
        ctrl.last_resid_map = ctrl.map_version
        ctrl.last_resid_saturated = saturated
        ctrl.f_hat = f_hat
        u = u_new
        if r_new < gains.fp_tol:
            break

    ctrl.u_prev = u
    ctrl.saturated = saturated
    info = {"iterations": iters, "residual": r_new, "saturated": saturated,
            "pair": ctrl.resid_pair}
    return RotorCommand(u), info


# ---------------------------------------------------------------------------
# multi-rate controller object


class TrackingController:
    """Baseline / learning-based tracking controller advanced at three rates.

    update_position (slow) refreshes the outer loop and the attitude target,
    update_attitude (mid) the desired torque and frozen thrust axis,
    update_allocation (fast) one fixed-point sweep of the motor command.
    position_control_step() chains all three for single-rate use.

    predictor: object with predict(state, u)->f_hat [N] and u_lipschitz()->
    L_a_u [N/RPM^2], or None for the baseline (identical arithmetic with
    f_hat = 0).
    """

    def __init__(self, params: VehicleParams, gains: ControllerGains,
                 predictor=None, u_init=None):
        self.params = params
        self.gains = gains
        self.predictor = predictor
        self.B0 = build_allocation_matrix(params)
        self.B0_inv = np.linalg.inv(self.B0)
        self.sigma_B0_inv = float(np.linalg.svd(self.B0_inv, compute_uv=False)[0])
        self.certified_ratio = 0.0
        if predictor is not None:
            L_a_u = float(predictor.u_lipschitz())
            self.certified_ratio = self.sigma_B0_inv * L_a_u
            if self.certified_ratio >= 1.0:
                raise ContractionError(
                    "sigma(B0^-1)*L_a_u = %.3f >= 1; fixed-point allocation is "
                    "not a contraction" % self.certified_ratio)
            if gains.lambda_min_Kv <= L_a_u * gains.rho_assumed:
                raise GainConditionError(
                    "lambda_min(Kv)=%.3f must exceed L_a*rho=%.3e"
                    % (gains.lambda_min_Kv, L_a_u * gains.rho_assumed))
        u0 = params.hover_u * np.ones(4) if u_init is None else np.asarray(u_init, float)
        self.state = ControllerState(u_prev=u0)
        # held values between slow updates
        self._f_bar_d = np.array([0.0, 0.0, params.hover_thrust])
        self._R_d = np.eye(3)
        self._tau_d = np.zeros(3)
        self._k_hat = np.array([0.0, 0.0, 1.0])
        self._pos_snapshot = None
        self._u_at_last_pos_step = u0.copy()
        self._last = {}
        self.position_calls = 0
        self.attitude_calls = 0
        self.allocation_calls = 0

    # -- slow loop ----------------------------------------------------------

    def update_position(self, state, ref, t):
        g = self.gains
        s, v_r, vr_dot, p_err = composite_variable(state, ref, g, t,
                                                   self.state.integral)
        if self.predictor is not None:
            f_hat = self.predictor.predict(state, self.state.u_prev)
        else:
            f_hat = np.zeros(3)
        f_d, f_bar_d = desired_force(s, vr_dot, f_hat, self.params, g)
        # attitude target: hold the previous one when f_d cannot define a
        # lifting direction (transients can command non-positive thrust)
        if np.linalg.norm(f_d) >= 1e-6 and f_d[2] > 0.02 * self.params.hover_thrust:
            _, R_d = thrust_attitude_from_force(f_d, state.R, ref.yaw(t))
            self._R_d = R_d
        self._f_bar_d = f_bar_d
        self._pos_snapshot = state.copy()
        rho_num = float(np.linalg.norm(self.state.u_prev - self._u_at_last_pos_step))
        s_norm = float(np.linalg.norm(s))
        if s_norm >= 1e-6 and not self.state.saturated:
            self.state.rho_observed = max(self.state.rho_observed, rho_num / s_norm)
        self._u_at_last_pos_step = self.state.u_prev.copy()
        self._last = {"s": s, "p_err": p_err, "v_r": v_r, "vr_dot": vr_dot,
                      "f_hat_pos": f_hat, "f_d": f_d}
        self.position_calls += 1

    def integrate_error(self, state, ref, t, dt):
        """Accumulate the integral term (called at the position rate)."""
        if not self.gains.integral:
            return
        p_d, _, _ = ref.eval(t)
        acc = self.state.integral + (state.p - p_d) * dt
        self.state.integral = np.clip(acc, -self.gains.integral_limit,
                                      self.gains.integral_limit)

    # -- mid loop -----------------------------------------------------------

    def update_attitude(self, state, t, omega_d=None):
        omega_d = np.zeros(3) if omega_d is None else omega_d
        self._tau_d = attitude_torque(state, self._R_d, omega_d, self.params,
                                      self.gains)
        self._k_hat = state.R[:, 2]
        self.state.map_version += 1
        self.attitude_calls += 1

    # -- fast loop ----------------------------------------------------------

    def update_allocation(self):
        cmd, info = allocate_fixed_point(
            self._f_bar_d, self._tau_d, self._k_hat, self.predictor,
            self._pos_snapshot, self.state, self.B0_inv, self.gains,
            self.params.u_max, self.certified_ratio)
        self.allocation_calls += 1
        return cmd, info

    # -- single-rate composition --------------------------------------------

    def position_control_step(self, state, ref, t):
        """Full chain at one instant; returns the motor command."""
        if self._pos_snapshot is None:
            self._pos_snapshot = state.copy()
        self.update_position(state, ref, t)
        self.update_attitude(state, t)
        cmd, _ = self.update_allocation()
        return cmd
