"""Scenario library: take-off/landing setpoints, near-table ellipse, and the
scripted data-collection flights (height sweeps plus randomized excursions).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..aero import DisturbanceField
from ..control import (ControllerGains, EllipseTrajectory, SetpointProfile,
                       WaypointTrajectory)
from ..vehicle import VehicleParams, VehicleState
from .harness import (ExcitationConfig, NoiseConfig, RateConfig,
                      equilibrium_hover_u, run_closed_loop)


class OraclePredictor:
    """The true disturbance field wrapped as a perfect predictor.

    Valid above z_floor: its certified u-sensitivity is the field's analytic
    slope bound over that height range, so the allocation contraction gate can
    be checked honestly for the scenario at hand.
    """

    def __init__(self, field: DisturbanceField, params: VehicleParams, z_floor):
        self.field = field
        self.params = params
        self.z_floor = z_floor

    def predict(self, state, u):
        return self.field.total(state, u)[0]

    def u_lipschitz(self):
        return self.field.u_slope_bound(self.z_floor, self.params.u_max)


@dataclass
class Scenario:
    """One deterministic closed-loop task."""

    name: str
    ref: object
    duration: float
    field: DisturbanceField | None
    seed: int = 0
    controller: str = "baseline"         # baseline | neural | integral
    noise: NoiseConfig = dc_field(default_factory=NoiseConfig)
    excitation: ExcitationConfig = dc_field(default_factory=ExcitationConfig)
    rates: RateConfig = dc_field(default_factory=RateConfig)
    spawn: tuple | None = None           # None: reference point at t=0
    spawn_velocity: tuple | None = None

    def initial_state(self):
        p0, v0, _ = self.ref.eval(0.0)
        p = np.asarray(self.spawn, float) if self.spawn is not None else p0
        v = np.asarray(self.spawn_velocity, float) if self.spawn_velocity is not None else v0
        return VehicleState(p.copy(), v.copy(), np.eye(3), np.zeros(3))


def landing_scenario(field, duration=25.0, apex=1.0, t_up=1.0, t_down=12.0,
                     seed=0, controller="baseline"):
    """Setpoint take-off/landing profile (0,0,0) -> (0,0,apex) -> (0,0,0)."""
    ref = SetpointProfile([0.0, t_up, t_down],
                          [(0, 0, 0), (0, 0, apex), (0, 0, 0)],
                          names=["ground", "takeoff", "landing"])
    return Scenario("landing", ref, duration, field, seed=seed,
                    controller=controller, spawn=(0, 0, 0))


def hover_scenario(field, z=0.5, duration=30.0, seed=0, controller="baseline"):
    ref = SetpointProfile([0.0], [(0, 0, z)], names=["hover"])
    return Scenario("hover", ref, duration, field, seed=seed,
                    controller=controller)


def ellipse_scenario(field, periods=4.0, period=10.0, semi_x=1.2, semi_y=0.6,
                     clearance=0.2, seed=0, controller="baseline"):
    if field is None or field.table is None:
        raise ValueError("ellipse scenario expects a field with a table")
    z_d = field.table.table_height + clearance
    ref = EllipseTrajectory((0.0, 0.0, z_d), semi_x, semi_y, period)
    return Scenario("cross_table", ref, periods * period, field, seed=seed,
                    controller=controller)


def collect_reference(seed=0, part1_duration=250.0, part2_duration=100.0,
                      n_heights=25, z_lo=0.05, z_hi=1.5, v_max1=0.7,
                      v_max2=1.0, box=((-1.0, 1.0), (-1.0, 1.0), (0.08, 1.2))):
    """Scripted data-collection trajectory.

    Part 1 dwells at n_heights hover heights geometrically spaced over
    [z_lo, z_hi] (shuffled), connected by min-jerk moves with capped peak
    vertical speed.  Part 2 chains randomized waypoints through the flight box
    for broader state coverage.
    """
    rng = np.random.default_rng(seed)
    heights = z_lo * (z_hi / z_lo) ** (np.arange(n_heights) / max(n_heights - 1, 1))
    rng.shuffle(heights)

    segments = []
    slot = part1_duration / n_heights
    t = 0.0
    prev = np.array([0.0, 0.0, heights[0]])
    for h in heights[1:]:
        nxt = np.array([0.0, 0.0, h])
        dist = abs(h - prev[2])
        t_move = min(max(1.875 * dist / v_max1, 0.3), 0.9 * slot)
        move_start = t + slot - t_move
        segments.append((move_start, move_start + t_move, prev.copy(), nxt.copy()))
        prev = nxt
        t += slot

    t = part1_duration
    total = part1_duration + part2_duration
    while True:
        nxt = np.array([rng.uniform(*box[0]), rng.uniform(*box[1]),
                        rng.uniform(*box[2])])
        dist = float(np.linalg.norm(nxt - prev))
        t_move = max(1.875 * dist / v_max2, 0.5)
        if t + t_move + 0.2 > total:
            break
        segments.append((t, t + t_move, prev.copy(), nxt.copy()))
        prev = nxt
        t += t_move + 0.2

    return WaypointTrajectory(segments, phase_marks=[0.0, part1_duration],
                              names=["part1", "part2"])


def collect_scenario(field, seed=0, part1_duration=250.0, part2_duration=100.0,
                     n_heights=25, z_lo=0.05, z_hi=1.5, noise=True,
                     excitation=True):
    ref = collect_reference(seed=seed, part1_duration=part1_duration,
                            part2_duration=part2_duration, n_heights=n_heights,
                            z_lo=z_lo, z_hi=z_hi)
    return Scenario("collect", ref, part1_duration + part2_duration, field,
                    seed=seed, controller="baseline",
                    noise=NoiseConfig(enabled=noise),
                    excitation=ExcitationConfig(enabled=excitation))


def table_collect_reference(seed=0, duration=120.0, table=None, v_max=1.0,
                            z_margin=0.05, z_top=1.25):
    """Randomized waypoints above and around the table for the x-y model."""
    rng = np.random.default_rng(seed)
    z_lo = (table.table_height if table is not None else 0.55) + z_margin
    x_lo, x_hi = (table.x0 - 0.6, table.x1 + 0.2) if table is not None else (-1, 1)
    y_lo, y_hi = (table.y0 - 0.2, table.y1 + 0.2) if table is not None else (-1, 1)
    segments = []
    t = 0.0
    prev = np.array([0.5 * (x_lo + x_hi), 0.0, z_lo + 0.2])
    while True:
        nxt = np.array([rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi),
                        rng.uniform(z_lo, z_top)])
        dist = float(np.linalg.norm(nxt - prev))
        t_move = max(1.875 * dist / v_max, 0.5)
        if t + t_move + 0.2 > duration:
            break
        segments.append((t, t + t_move, prev.copy(), nxt.copy()))
        prev = nxt
        t += t_move + 0.2
    return WaypointTrajectory(segments, phase_marks=[0.0], names=["table"])


def table_collect_scenario(field, seed=0, duration=120.0, noise=True,
                           excitation=True):
    ref = table_collect_reference(seed=seed, duration=duration,
                                  table=field.table if field else None)
    return Scenario("collect_table", ref, duration, field, seed=seed,
                    controller="baseline", noise=NoiseConfig(enabled=noise),
                    excitation=ExcitationConfig(enabled=excitation))


def run_scenario(scenario: Scenario, params: VehicleParams,
                 gains: ControllerGains, predictor=None):
    """Execute one scenario; certificate checks happen inside the controller
    construction before any physics runs."""
    g = gains
    if scenario.controller == "integral" and not gains.integral:
        g = replace_gains_integral(gains)
    state0 = scenario.initial_state()
    grounded_spawn = state0.p[2] <= 0.0
    u_init = (np.zeros(4) if grounded_spawn
              else equilibrium_hover_u(state0.p, scenario.field, params))
    meta = {
        "scenario": scenario.name,
        "controller_kind": scenario.controller,
        "duration": scenario.duration,
        "field": field_provenance(scenario.field),
    }
    return run_closed_loop(
        scenario.ref, scenario.duration, scenario.field, params, g,
        predictor=predictor, rates=scenario.rates, noise=scenario.noise,
        excitation=scenario.excitation, seed=scenario.seed,
        initial_state=state0, u_init=u_init, meta=meta)


def replace_gains_integral(gains: ControllerGains):
    return ControllerGains(Lambda=gains.Lambda, Kv=gains.Kv,
                           K_omega=gains.K_omega, Lambda_R=gains.Lambda_R,
                           integral=True, integral_limit=gains.integral_limit,
                           fp_iters=gains.fp_iters, fp_tol=gains.fp_tol,
                           rho_assumed=gains.rho_assumed)


def field_provenance(field):
    if field is None:
        return None
    d = {
        "rotor_offset": field.rotor_offset,
        "min_height": field.min_height,
        "force_bound": field.force_bound,
        "tau_a": [float(x) for x in field.tau_a],
    }
    if field.ground_effect is not None:
        ge = field.ground_effect
        d["ground_effect"] = {"mu": ge.mu, "D": ge.D, "n0": ge.n0,
                              "c_t0": ge.c_t0, "ct_rel_slope": ge.ct_rel_slope}
    if field.drag is not None:
        d["drag"] = {"c1": field.drag.c1, "c2": field.drag.c2}
    if field.table is not None:
        tb = field.table
        d["table"] = {"x0": tb.x0, "x1": tb.x1, "y0": tb.y0, "y1": tb.y1,
                      "table_height": tb.table_height, "edge_width": tb.edge_width}
    return d
