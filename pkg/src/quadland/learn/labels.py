"""Turn flight logs into supervised training data.

Targets come from rearranging the translational dynamics: the disturbance is
whatever acceleration the nominal model fails to explain,
y = m*vdot - m*g - R*f_u, with vdot from central finite differences of the
logged velocity (optionally low-pass filtered when state-estimate noise was
enabled during collection).
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, filtfilt

from ..so3 import rotation_from_quat
from .net import feature_names
from .training import TrainingSet


class TooShortLogError(ValueError):
    pass


def build_feature_matrix(p, v, q, u, attitude="quaternion", include_xy=False):
    """Vectorized feature assembly matching learn.net.assemble_features."""
    N = len(p)
    cols = [p[:, 2:3], v]
    if attitude == "quaternion":
        cols.append(q)
    else:
        R = np.stack([rotation_from_quat(qi).reshape(-1) for qi in q])
        cols.append(R)
    cols.append(u)
    if include_xy:
        cols.append(p[:, 0:2])
    X = np.hstack(cols)
    assert X.shape == (N, len(feature_names(attitude, include_xy)))
    return X


def extract_labels(log, params, attitude="quaternion", include_xy=False,
                   lowpass_hz=None, skip_initial=0.5, val_fraction=0.2, seed=0):
    """FlightLog -> TrainingSet.

    lowpass_hz: cutoff of an optional zero-phase 2nd-order Butterworth filter
    applied to the velocity channel before differencing; use it when the log
    was collected with sensor noise.  skip_initial trims the controller
    warm-up transient [s].
    """
    t = log.t
    if len(t) < 5:
        raise TooShortLogError("need at least 5 samples, got %d" % len(t))
    dt = float(t[1] - t[0])
    if not np.allclose(np.diff(t), dt, rtol=0, atol=1e-9):
        raise ValueError("log is not uniformly sampled")

    v = log.v
    thrust = params.c_T * log.u.sum(axis=1)
    Rz = np.stack([rotation_from_quat(qi)[:, 2] for qi in log.q])
    f_nominal = thrust[:, None] * Rz
    if lowpass_hz is not None:
        # filter both sides of the force balance so zero-order-hold command
        # steps do not alias into the differentiated velocity
        nyq = 0.5 / dt
        b, a = butter(2, lowpass_hz / nyq)
        v = filtfilt(b, a, v, axis=0)
        f_nominal = filtfilt(b, a, f_nominal, axis=0)

    vdot = (v[2:] - v[:-2]) / (2.0 * dt)
    sel = slice(1, len(t) - 1)
    Y = params.m * vdot - params.m * params.g_vec[None, :] - f_nominal[sel]

    keep = np.ones(len(Y), dtype=bool)
    keep &= log.t[sel] >= (t[0] + skip_initial)
    if log.grounded is not None:
        keep &= log.grounded[sel] == 0

    X = build_feature_matrix(log.p[sel], v[sel], log.q[sel], log.u[sel],
                             attitude, include_xy)[keep]
    Y = Y[keep]
    phase_names = log.meta.get("phase_names")
    if phase_names:
        tags = np.array([phase_names[i] for i in log.phase[sel][keep]])
    else:
        tags = np.array(["data"] * len(Y))

    n_rotor = np.sqrt(np.maximum(log.u[sel][keep].mean(axis=1), 0.0))
    return TrainingSet.from_arrays(
        X, Y, feature_names(attitude, include_xy), tags=tags,
        z=log.p[sel][keep][:, 2], n_rotor=n_rotor, vz=v[sel][keep][:, 2],
        val_fraction=val_fraction, seed=seed, attitude=attitude,
        include_xy=include_xy)
