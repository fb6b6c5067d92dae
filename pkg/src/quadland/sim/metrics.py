"""Metrics over flight logs, including the closed-loop stability envelopes.

Everything here is a pure function of the log contents (plus gains and
certificates), so re-evaluating a stored log reproduces the numbers bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Metrics:
    terminal_height_error: float
    takeoff_rms_z: float
    rms_p_err: tuple
    max_s: float
    rho_measured: float
    eps_m_flown: float
    eps_m_used: float
    L_a_u: float
    envelope_rate: float
    envelope_ball: float
    envelope_violations: int
    envelope_violations_proof_rate: int
    eq13_bound: float
    steady_p_err: float
    eq13_satisfied: bool
    fp_max_ratio: float
    fp_certified_ratio: float
    fp_ratio_violations: int
    touchdown_speed: float
    saturated_steps: int
    n_records: int

    def to_dict(self):
        d = {}
        for k, v in self.__dict__.items():
            if isinstance(v, (tuple, list)):
                d[k] = [float(x) for x in v]
            elif isinstance(v, (bool, np.bool_)):
                d[k] = bool(v)
            elif isinstance(v, (int, np.integer)):
                d[k] = int(v)
            else:
                d[k] = float(v)
        return d


def measured_rho(log):
    """max ||u_k - u_{k-1}|| / ||s_k|| over clean consecutive log records."""
    du = np.linalg.norm(np.diff(log.u, axis=0), axis=1)
    s = np.linalg.norm(log.s, axis=1)[1:]
    clean = ((s >= 1e-6)
             & (log.saturated[1:] == 0) & (log.saturated[:-1] == 0)
             & (log.grounded[1:] == 0) & (log.grounded[:-1] == 0))
    if not np.any(clean):
        return 0.0
    return float(np.max(du[clean] / s[clean]))


def phase_segments(phase):
    """Contiguous (start, end) index ranges of equal phase id."""
    out = []
    start = 0
    for i in range(1, len(phase) + 1):
        if i == len(phase) or phase[i] != phase[start]:
            out.append((start, i))
            start = i
    return out


def envelope_violation_count(log, rate, ball, rtol=1e-9):
    """Count records whose ||s(t)|| exceeds the exponential envelope.

    The envelope restarts at each reference phase boundary (the composite
    variable jumps with the setpoint there); saturated records are excluded,
    matching the unconstrained-input assumption of the bound.
    """
    s = np.linalg.norm(log.s, axis=1)
    violations = 0
    for a, b in phase_segments(log.phase):
        t0 = log.t[a]
        s0 = s[a]
        for i in range(a, b):
            if log.saturated[i]:
                continue
            bound = s0 * np.exp(-rate * (log.t[i] - t0)) + ball
            if s[i] > bound * (1.0 + rtol) + 1e-12:
                violations += 1
    return violations


def evaluate(log, gains, audit=None, eps_m=None, params=None,
             settle_skip=3.0, tail_frac=0.2) -> Metrics:
    """Compute the full metric set for a flight log.

    eps_m: learning-error bound used in the stability envelopes (defaults to
    the flown maximum prediction error).  audit supplies the certified
    u-sensitivity L_a_u; None means a baseline run with L_a = 0.
    """
    s_norm = np.linalg.norm(log.s, axis=1)
    L_a_u = float(audit.L_a_u) if audit is not None else 0.0
    rho = measured_rho(log)

    clean = (log.saturated == 0) & (log.grounded == 0)
    errs = np.linalg.norm(log.f_a - log.f_hat, axis=1)
    eps_flown = float(errs[clean].max()) if np.any(clean) else 0.0
    eps_used = float(eps_m) if eps_m is not None else eps_flown

    lam_kv = gains.lambda_min_Kv
    lam_la = gains.lambda_min_Lambda
    margin = lam_kv - L_a_u * rho
    m = params.m if params is not None else 1.47
    rate = margin / m
    ball = eps_used / margin if margin > 0 else np.inf
    viol = envelope_violation_count(log, rate, ball)
    viol2 = envelope_violation_count(log, 2.0 * rate, ball)

    eq13 = eps_used / (lam_la * margin) if margin > 0 else np.inf
    tail = log.t >= log.t[0] + (1.0 - tail_frac) * (log.t[-1] - log.t[0])
    steady = float(np.linalg.norm(log.p_err[tail], axis=1).max())

    segs = phase_segments(log.phase)
    a, b = segs[-1]
    t0, t1 = log.t[a], log.t[b - 1]
    final_tail = (log.t >= t0 + (1.0 - tail_frac) * (t1 - t0)) & (log.t >= t0)
    terminal = float(np.mean(np.abs(log.p_err[final_tail, 2])))

    takeoff_rms = float("nan")
    names = log.meta.get("phase_names") or []
    if "takeoff" in names:
        pid = names.index("takeoff")
        for a2, b2 in segs:
            if log.phase[a2] == pid:
                mask = (log.t >= log.t[a2] + settle_skip) & (np.arange(len(log.t)) >= a2) \
                       & (np.arange(len(log.t)) < b2)
                if np.any(mask):
                    takeoff_rms = float(np.sqrt(np.mean(log.p_err[mask, 2] ** 2)))
                break

    pairs = log.fp_valid == 1
    if np.any(pairs):
        ratios = log.fp_cur[pairs] / log.fp_prev[pairs]
        fp_max = float(np.max(ratios))
    else:
        ratios = np.array([])
        fp_max = 0.0
    certified = float(log.meta.get("controller", {}).get(
        "certified_contraction_ratio", 0.0))
    fp_viol = int(np.sum(ratios > certified + 1e-9)) if ratios.size else 0

    touchdown = 0.0
    g = log.grounded
    for i in range(a + 1, b):
        if g[i] == 1 and g[i - 1] == 0:
            touchdown = float(abs(log.v[i - 1, 2]))
            break

    return Metrics(
        terminal_height_error=terminal,
        takeoff_rms_z=takeoff_rms,
        rms_p_err=tuple(np.sqrt(np.mean(log.p_err ** 2, axis=0))),
        max_s=float(s_norm.max()),
        rho_measured=rho,
        eps_m_flown=eps_flown,
        eps_m_used=eps_used,
        L_a_u=L_a_u,
        envelope_rate=float(rate),
        envelope_ball=float(ball),
        envelope_violations=int(viol),
        envelope_violations_proof_rate=int(viol2),
        eq13_bound=float(eq13),
        steady_p_err=steady,
        eq13_satisfied=bool(steady <= eq13),
        fp_max_ratio=fp_max,
        fp_certified_ratio=certified,
        fp_ratio_violations=fp_viol,
        touchdown_speed=touchdown,
        saturated_steps=int(np.sum(log.saturated)),
        n_records=len(log.t),
    )


def rms_error(log, axis=2, t0=None, t1=None):
    """RMS tracking error on one axis over an optional time window."""
    mask = np.ones(len(log.t), dtype=bool)
    if t0 is not None:
        mask &= log.t >= t0
    if t1 is not None:
        mask &= log.t < t1
    return float(np.sqrt(np.mean(log.p_err[mask, axis] ** 2)))


def edge_band_variance(log, table, band=0.1, axis=2, t0=None):
    """Variance of the tracking error near the table boundary."""
    x, y = log.p[:, 0], log.p[:, 1]
    d_in = np.minimum.reduce([x - table.x0, table.x1 - x,
                              y - table.y0, table.y1 - y])
    mask = np.abs(d_in) <= band
    if t0 is not None:
        mask &= log.t >= t0
    if not np.any(mask):
        return 0.0
    return float(np.var(log.p_err[mask, axis]))
