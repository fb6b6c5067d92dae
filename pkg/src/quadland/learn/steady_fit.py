"""Best-fit steady ground-effect comparison model.

Fits the 1-D amplification model to observed vertical disturbance force as a
function of rotor speed and height.  This is the physics-based reference the
learned predictor is compared against: it can capture the height trend but is
blind to velocity-dependent effects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares


@dataclass
class FittedSteadyModel:
    mu: float
    c_t0: float
    ct_rel_slope: float
    D: float
    n0: float
    c_nominal: float

    def predict_fz(self, n, z):
        n = np.asarray(n, dtype=float)
        z = np.asarray(z, dtype=float)
        k = self.mu * (self.D / (8.0 * z)) ** 2
        k = np.minimum(k, 0.999999)
        ct = self.c_t0 * (1.0 + self.ct_rel_slope * (n - self.n0))
        return n * n * ct / (1.0 - k) - n * n * self.c_nominal


def fit_steady_model(n, z, fz, D, n0, c_nominal) -> FittedSteadyModel:
    """Least-squares fit of (mu, c_t0, ct_rel_slope) against observed f_z.

    The fitted mu is bounded so the model stays regular over the data heights.
    """
    n = np.asarray(n, dtype=float)
    z = np.asarray(z, dtype=float)
    fz = np.asarray(fz, dtype=float)
    z_min = float(z.min())
    mu_max = 0.98 * (8.0 * z_min / D) ** 2

    def residual(theta):
        model = FittedSteadyModel(theta[0], theta[1], theta[2], D, n0, c_nominal)
        return model.predict_fz(n, z) - fz

    x0 = np.array([min(1.0, 0.5 * mu_max), c_nominal, 0.0])
    res = least_squares(residual, x0,
                        bounds=([1e-9, 1e-12, -1e-3], [mu_max, 1e-3, 1e-3]))
    return FittedSteadyModel(res.x[0], res.x[1], res.x[2], D, n0, c_nominal)


def rmse(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    return float(np.sqrt(np.mean((pred - target) ** 2)))
