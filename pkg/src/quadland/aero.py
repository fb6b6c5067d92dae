"""Synthetic aerodynamic disturbance fields.

These fields are the simulation's ground truth for the unknown force f_a and
torque tau_a: a steady one-dimensional ground-effect model, quadratic-plus-
linear air drag, and a table-top variant of the ground effect with a smoothed
edge.  They double as the label source for training, so the learning error of
a fitted model is measurable exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np


class GroundEffectSingularityError(ValueError):
    """Evaluation height is at or below the model's singular height."""


@dataclass
class GroundEffectParams:
    """Steady ground-effect model parameters.

    mu            propeller-arrangement coefficient (1 for a single rotor,
                  larger for multi-rotor wakes)
    D             rotor diameter [m]
    n0            reference rotor speed [RPM] where the nominal thrust
                  coefficient is anchored (the bench-test operating point)
    c_t0          thrust coefficient at n0 [N/RPM^2]
    ct_rel_slope  relative change of c_T per RPM around n0; 0 gives the
                  constant-coefficient variant
    """

    mu: float = 2.5
    D: float = 0.23
    n0: float = 2000.0
    c_t0: float = 9.013e-7
    ct_rel_slope: float = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")

    def c_T(self, n):
        return self.c_t0 * (1.0 + self.ct_rel_slope * (n - self.n0))

    @property
    def singular_height(self):
        """Height where the amplification factor diverges: (D/8)*sqrt(mu)."""
        return (self.D / 8.0) * np.sqrt(self.mu)


def ground_effect_force(n, z, params: GroundEffectParams):
    """Extra vertical rotor force [N] at rotor speed n [RPM] and height z [m].

    Thrust amplification 1/(1 - mu*(D/8z)^2) applied to n^2*c_T(n), minus the
    nominal thrust n^2*c_T(n0).  Raises GroundEffectSingularityError when the
    correction term reaches 1.
    """
    k = params.mu * (params.D / (8.0 * z)) ** 2
    if k >= 1.0:
        raise GroundEffectSingularityError(
            "height %.4f m at or below singular height %.4f m" % (z, params.singular_height))
    n2 = n * n
    return n2 * params.c_T(n) / (1.0 - k) - n2 * params.c_t0


@dataclass
class DragParams:
    """f_drag = -(c1*|v| + c2)*v: quadratic-plus-linear, opposing motion.

    c1 [N s^2/m^2], c2 [N s/m].
    """

    c1: float = 0.12
    c2: float = 0.40


def drag_force(v, coeffs: DragParams):
    v = np.asarray(v, dtype=float)
    speed = float(np.sqrt(v @ v))
    return -(coeffs.c1 * speed + coeffs.c2) * v


@dataclass
class TableParams:
    """Axis-aligned table: [x0, x1] x [y0, y1] top surface at table_height.

    edge_width is the horizontal smoothing band of the boundary; 0 gives a
    hard step.
    """

    x0: float = 0.2
    x1: float = 1.2
    y0: float = -0.5
    y1: float = 0.5
    table_height: float = 0.55
    edge_width: float = 0.05


def _ramp(d, w):
    """C1 smoothstep from 0 (d <= -w/2) to 1 (d >= w/2); hard step for w == 0."""
    if w <= 0.0:
        return 1.0 if d >= 0.0 else 0.0
    t = np.clip(d / w + 0.5, 0.0, 1.0)
    return float(t * t * (3.0 - 2.0 * t))


def table_blend(x, y, table: TableParams):
    """1 fully over the table, 0 off it, smoothed across the edge band."""
    return (_ramp(x - table.x0, table.edge_width)
            * _ramp(table.x1 - x, table.edge_width)
            * _ramp(y - table.y0, table.edge_width)
            * _ramp(table.y1 - y, table.edge_width))


def table_field(p, n, ge: GroundEffectParams, table: TableParams,
                rotor_offset=0.0, min_height=None):
    """Ground-effect force over terrain with a table: the effective clearance
    is z - table_height over the table extent (smoothed at the edge), plain z
    otherwise."""
    x, y, z = np.asarray(p, dtype=float)
    blend = table_blend(x, y, table)
    z_eff = z - blend * table.table_height + rotor_offset
    if min_height is not None:
        z_eff = max(z_eff, min_height)
    return ground_effect_force(n, z_eff, ge)


@dataclass
class DisturbanceField:
    """Composition of the synthetic disturbance components.

    rotor_offset  height of the rotor plane above the vehicle origin [m];
                  the ground-effect height argument is z + rotor_offset
    min_height    clamp on the effective height [m]; keeps the field bounded
                  and clear of the model singularity.  Defaults to the lowest
                  rotor height seen in nominal data collection.
    force_bound   declared bound on |f_a| over the simulation domain [N]
    tau_a         constant bounded disturbance torque [N m] (never learned)
    """

    ground_effect: GroundEffectParams | None = dc_field(default_factory=GroundEffectParams)
    drag: DragParams | None = dc_field(default_factory=DragParams)
    table: TableParams | None = None
    rotor_offset: float = 0.05
    min_height: float = 0.10
    force_bound: float = 8.0
    tau_bound: float = 0.1
    tau_a: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.tau_a = np.asarray(self.tau_a, dtype=float)
        if self.ground_effect is not None:
            if self.min_height <= self.ground_effect.singular_height:
                raise ValueError(
                    "min_height %.4f must exceed the singular height %.4f"
                    % (self.min_height, self.ground_effect.singular_height))
        if np.linalg.norm(self.tau_a) > self.tau_bound:
            raise ValueError("tau_a exceeds declared tau_bound")

    def effective_height(self, p):
        """Clamped rotor height above the local ground plane (table-aware)."""
        x, y, z = np.asarray(p, dtype=float)
        if self.table is not None:
            z = z - table_blend(x, y, self.table) * self.table.table_height
        return max(z + self.rotor_offset, self.min_height)

    def total(self, state, u, *, t=0.0):
        """(f_a [N, world], tau_a [N m, body]) for the given state and command.

        Each rotor contributes the steady ground-effect excess at its own
        squared speed; the total acts along the thrust axis.  Deterministic in
        its inputs.
        """
        u = np.asarray(u, dtype=float)
        f_a = np.zeros(3)
        if self.ground_effect is not None:
            ge = self.ground_effect
            z_eff = self.effective_height(state.p)
            k = ge.mu * (ge.D / (8.0 * z_eff)) ** 2
            if k >= 1.0:
                raise GroundEffectSingularityError(
                    "height %.4f m at or below singular height %.4f m"
                    % (z_eff, ge.singular_height))
            amp = 1.0 / (1.0 - k)
            u_pos = np.maximum(u, 0.0)
            if ge.ct_rel_slope == 0.0:
                f_ge = ge.c_t0 * (amp - 1.0) * float(u_pos.sum())
            else:
                n_i = np.sqrt(u_pos)
                ct = ge.c_t0 * (1.0 + ge.ct_rel_slope * (n_i - ge.n0))
                f_ge = amp * float(u_pos @ ct) - ge.c_t0 * float(u_pos.sum())
            f_a = f_a + f_ge * state.R[:, 2]
        if self.drag is not None:
            f_a = f_a + drag_force(state.v, self.drag)
        return f_a, self.tau_a.copy()

    def u_slope_bound(self, z_min, u_max):
        """Upper bound on ||d f_a / d u||_2 over heights >= z_min and feasible u.

        Only the ground effect depends on u.  Per rotor the vertical force is
        g(u_i) = A(z)*c_T(n_i)*u_i - c_t0*u_i, so the four-channel gradient
        norm at equal speeds is 2*|g'|.
        """
        if self.ground_effect is None:
            return 0.0
        ge = self.ground_effect
        z_eff = max(z_min + self.rotor_offset, self.min_height)
        k = ge.mu * (ge.D / (8.0 * z_eff)) ** 2
        amp = 1.0 / (1.0 - k)
        n_grid = np.linspace(0.0, np.sqrt(u_max), 64)
        # g'(u) = A*(c_T(n) + n*c_t0*slope/2) - c_t0 with u = n^2
        dg = np.abs(amp * (ge.c_T(n_grid) + n_grid * ge.c_t0 * ge.ct_rel_slope / 2.0)
                    - ge.c_t0)
        return 2.0 * float(dg.max())

    def sample_sup(self, rng, n_samples=2000, pos_box=((-2, 2), (-2, 2), (0.0, 2.0)),
                   v_max=3.0, u_max=6400.0 ** 2):
        """Sampled supremum of |f_a| over a flight envelope (bound check)."""
        from .vehicle import VehicleState  # local import to avoid a cycle
        sup = 0.0
        for _ in range(n_samples):
            p = np.array([rng.uniform(*pos_box[0]), rng.uniform(*pos_box[1]),
                          rng.uniform(*pos_box[2])])
            v = rng.uniform(-v_max, v_max, size=3)
            u = rng.uniform(0.0, u_max, size=4)
            st = VehicleState(p, v, np.eye(3), np.zeros(3))
            f_a, _ = self.total(st, u)
            sup = max(sup, float(np.linalg.norm(f_a)))
        return sup


def total_disturbance(state, u, field: DisturbanceField):
    """Module-level convenience wrapper over DisturbanceField.total."""
    return field.total(state, u)
