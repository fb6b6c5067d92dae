"""Closed-loop simulation harness.

Runs the physics at 1 kHz with the controller split across its three rates
(position 10 Hz, attitude 100 Hz, motor allocation 500 Hz by default), which
mirrors the timescale separation the stability argument leans on.  Ground
contact is inelastic: touching down zeroes the velocity and the vehicle stays
down until the commanded thrust plus disturbance exceeds its weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..control import TrackingController, ControllerGains, composite_variable
from ..so3 import quat_from_rotation
from ..vehicle import VehicleParams, VehicleState, Wrench, integrate_step
from .flightlog import FlightLogBuilder


class DivergenceError(RuntimeError):
    def __init__(self, msg, partial_log=None):
        super().__init__(msg)
        self.partial_log = partial_log


@dataclass
class RateConfig:
    """Loop rates expressed as physics-step multiples of physics_dt."""

    physics_dt: float = 1e-3
    alloc_every: int = 2        # 500 Hz
    attitude_every: int = 10    # 100 Hz
    position_every: int = 100   # 10 Hz
    log_every: int = 10         # 100 Hz

    def validate(self):
        if self.physics_dt <= 0:
            raise ValueError("physics_dt must be positive")
        for name in ("alloc_every", "attitude_every", "position_every", "log_every"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be >= 1" % name)
        if self.attitude_every % self.alloc_every:
            raise ValueError("attitude rate must be a multiple of the allocation rate")
        if self.position_every % self.attitude_every:
            raise ValueError("position rate must be a multiple of the attitude rate")


@dataclass
class NoiseConfig:
    """State-estimate noise emulating a motion-capture pipeline; off by
    default so stability-bound checks see exact states."""

    enabled: bool = False
    pos_sigma: float = 0.001
    vel_sigma: float = 0.01


@dataclass
class ExcitationConfig:
    """Band-limited motor excitation added during data collection."""

    enabled: bool = False
    rel_sigma: float = 0.02
    tau: float = 0.15


def equilibrium_hover_u(p, field, params: VehicleParams, iters=60):
    """Per-motor squared speed that balances gravity plus the local field."""
    state = VehicleState.rest(p)
    u = params.hover_u * np.ones(4)
    for _ in range(iters):
        f_a = field.total(state, u)[0] if field is not None else np.zeros(3)
        T = max(params.m * params.g_mag - f_a[2], 0.0)
        u = np.full(4, T / (4.0 * params.c_T))
    return u


def run_closed_loop(ref, duration, field, params: VehicleParams,
                    gains: ControllerGains, predictor=None,
                    rates: RateConfig | None = None,
                    noise: NoiseConfig | None = None,
                    excitation: ExcitationConfig | None = None,
                    seed=0, initial_state=None, u_init=None,
                    divergence_bound=50.0, meta=None, ground_plane=True):
    """Simulate the closed loop and return a FlightLog.

    Deterministic given identical arguments and seed.  Raises DivergenceError
    (with the partial log attached) if the state leaves the domain bound or
    goes non-finite.
    """
    rates = rates or RateConfig()
    rates.validate()
    noise = noise or NoiseConfig()
    excitation = excitation or ExcitationConfig()
    rng = np.random.default_rng(seed)

    state = initial_state.copy() if initial_state is not None else VehicleState.rest()
    if u_init is None:
        u_init = equilibrium_hover_u(state.p, field, params)
    ctrl = TrackingController(params, gains, predictor=predictor, u_init=u_init)

    n_steps = int(round(duration / rates.physics_dt))
    builder = FlightLogBuilder(meta=dict(meta or {}))
    builder.meta.setdefault("phase_names", ref.phase_names())
    builder.meta.setdefault("log_rate_hz", 1.0 / (rates.physics_dt * rates.log_every))
    builder.meta.setdefault("noise_enabled", bool(noise.enabled))
    builder.meta.setdefault("seed", int(seed))

    grounded = bool(ground_plane and state.p[2] <= 0.0 and state.v[2] <= 0.0)
    est = state.copy()
    u_applied = u_init.copy()
    exc_state = np.zeros(4)
    exc_alpha = np.exp(-rates.physics_dt * rates.alloc_every / excitation.tau)
    exc_scale = excitation.rel_sigma * params.hover_u * np.sqrt(1.0 - exc_alpha ** 2)

    def disturbance_fn(u):
        if field is None:
            return lambda s: (np.zeros(3), np.zeros(3))
        return lambda s: field.total(s, u)

    for k in range(n_steps):
        t = k * rates.physics_dt

        if k % rates.attitude_every == 0:
            if noise.enabled:
                est = VehicleState(
                    state.p + rng.normal(0.0, noise.pos_sigma, 3),
                    state.v + rng.normal(0.0, noise.vel_sigma, 3),
                    state.R.copy(), state.omega.copy())
            else:
                est = state.copy()

        if k % rates.position_every == 0:
            ctrl.integrate_error(est, ref, t, rates.physics_dt * rates.position_every)
            ctrl.update_position(est, ref, t)
        if k % rates.attitude_every == 0:
            ctrl.update_attitude(est, t)
        if k % rates.alloc_every == 0:
            cmd, _ = ctrl.update_allocation()
            u_applied = cmd.u
            if excitation.enabled:
                exc_state = exc_alpha * exc_state + exc_scale * rng.standard_normal(4)
                u_applied = np.clip(cmd.u + exc_state, 0.0, params.u_max)

        if k % rates.log_every == 0:
            f_a, tau_a = (field.total(state, u_applied) if field is not None
                          else (np.zeros(3), np.zeros(3)))
            s_log, _, _, p_err_log = composite_variable(est, ref, gains, t,
                                                        ctrl.state.integral)
            builder.append(t, est, u_applied, f_a, tau_a, ctrl.state.f_hat,
                           s_log, p_err_log, ctrl.state.resid_pair,
                           ctrl.state.saturated, grounded, ref.phase(t),
                           quat_from_rotation(est.R))

        # physics
        wrench = Wrench(float(params.c_T * u_applied.sum()),
                        _torque_from_u(u_applied, params))
        if grounded:
            f_a, _ = (field.total(state, u_applied) if field is not None
                      else (np.zeros(3), np.zeros(3)))
            lift = wrench.T * state.R[2, 2] + f_a[2] - params.m * params.g_mag
            if lift > 0.0:
                grounded = False
        if grounded:
            pass  # inelastic rest on the ground plane
        else:
            state = integrate_step(state, wrench, disturbance_fn(u_applied),
                                   params, rates.physics_dt)
            if ground_plane and state.p[2] <= 0.0 and state.v[2] <= 0.0:
                state.p[2] = 0.0
                state.v = np.zeros(3)
                state.omega = np.zeros(3)
                grounded = True

        if not state.is_finite() or np.linalg.norm(state.p) > divergence_bound:
            log = builder.build()
            raise DivergenceError("state diverged at t=%.3f s" % t, partial_log=log)

    log = builder.build()
    log.meta["controller"] = {
        "position_calls": ctrl.position_calls,
        "attitude_calls": ctrl.attitude_calls,
        "allocation_calls": ctrl.allocation_calls,
        "rho_observed": ctrl.state.rho_observed,
        "max_fp_ratio_observed": ctrl.state.max_ratio_observed,
        "certified_contraction_ratio": ctrl.certified_ratio,
        "sigma_B0_inv": ctrl.sigma_B0_inv,
    }
    return log


def _torque_from_u(u, params: VehicleParams):
    cT, cQ, l = params.c_T, params.c_Q, params.l_arm
    return np.array([
        cT * l * (u[1] - u[3]),
        cT * l * (u[2] - u[0]),
        cQ * (-u[0] + u[1] - u[2] + u[3]),
    ])
