"""Fixed-rate flight log with exact CSV round-tripping.

Floats are written with shortest round-trip repr so that a stored log parses
back bitwise-identical, which makes log hashing and metric recomputation
reproducible across machines.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

SCHEMA_VERSION = 1

COLUMNS = (
    ["t"]
    + ["px", "py", "pz", "vx", "vy", "vz"]
    + ["qw", "qx", "qy", "qz", "wx", "wy", "wz"]
    + ["u1", "u2", "u3", "u4"]
    + ["fax", "fay", "faz", "tax", "tay", "taz"]
    + ["fhx", "fhy", "fhz"]
    + ["sx", "sy", "sz", "ex", "ey", "ez"]
    + ["fp_prev", "fp_cur", "fp_valid", "saturated", "grounded", "phase"]
)

_INT_COLS = {"fp_valid", "saturated", "grounded", "phase"}


@dataclass
class FlightLog:
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    q: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    f_a: np.ndarray
    tau_a: np.ndarray
    f_hat: np.ndarray
    s: np.ndarray
    p_err: np.ndarray
    fp_prev: np.ndarray
    fp_cur: np.ndarray
    fp_valid: np.ndarray
    saturated: np.ndarray
    grounded: np.ndarray
    phase: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def rows(self):
        for i in range(len(self.t)):
            yield ([self.t[i]] + list(self.p[i]) + list(self.v[i])
                   + list(self.q[i]) + list(self.omega[i]) + list(self.u[i])
                   + list(self.f_a[i]) + list(self.tau_a[i]) + list(self.f_hat[i])
                   + list(self.s[i]) + list(self.p_err[i])
                   + [self.fp_prev[i], self.fp_cur[i], int(self.fp_valid[i]),
                      int(self.saturated[i]), int(self.grounded[i]),
                      int(self.phase[i])])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# quadland-flightlog schema=%d\n" % SCHEMA_VERSION)
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for row in self.rows():
                w.writerow([_fmt(x) for x in row])

    def to_csv_string(self):
        buf = io.StringIO()
        buf.write("# quadland-flightlog schema=%d\n" % SCHEMA_VERSION)
        w = csv.writer(buf)
        w.writerow(COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def write_sidecar(self, path):
        with open(path, "w") as fh:
            json.dump({"schema": SCHEMA_VERSION, **self.meta}, fh, indent=2,
                      sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path, meta=None):
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("# quadland-flightlog"):
                raise ValueError("missing flight-log schema header")
            rows = list(csv.reader(fh))
        names = rows[0]
        if names != COLUMNS:
            raise ValueError("unexpected column layout")
        data = np.array([[float(x) for x in row] for row in rows[1:]])
        return cls.from_matrix(data, meta or {})

    @classmethod
    def from_matrix(cls, M, meta):
        c = {name: i for i, name in enumerate(COLUMNS)}

        def block(*names):
            return M[:, [c[n] for n in names]]

        return cls(
            t=M[:, c["t"]],
            p=block("px", "py", "pz"), v=block("vx", "vy", "vz"),
            q=block("qw", "qx", "qy", "qz"), omega=block("wx", "wy", "wz"),
            u=block("u1", "u2", "u3", "u4"),
            f_a=block("fax", "fay", "faz"), tau_a=block("tax", "tay", "taz"),
            f_hat=block("fhx", "fhy", "fhz"),
            s=block("sx", "sy", "sz"), p_err=block("ex", "ey", "ez"),
            fp_prev=M[:, c["fp_prev"]], fp_cur=M[:, c["fp_cur"]],
            fp_valid=M[:, c["fp_valid"]].astype(int),
            saturated=M[:, c["saturated"]].astype(int),
            grounded=M[:, c["grounded"]].astype(int),
            phase=M[:, c["phase"]].astype(int),
            meta=meta,
        )


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class FlightLogBuilder:
    """Accumulates records during a run, then freezes them into a FlightLog."""

    def __init__(self, meta=None):
        self._rows = []
        self.meta = meta or {}

    def append(self, t, state, u, f_a, tau_a, f_hat, s, p_err, fp_pair,
               saturated, grounded, phase, q):
        fp_prev, fp_cur, fp_valid = fp_pair
        self._rows.append(
            [t] + list(state.p) + list(state.v) + list(q) + list(state.omega)
            + list(u) + list(f_a) + list(tau_a) + list(f_hat) + list(s)
            + list(p_err)
            + [fp_prev, fp_cur, int(bool(fp_valid)), int(bool(saturated)),
               int(bool(grounded)), int(phase)])

    def build(self):
        M = np.array(self._rows, dtype=float) if self._rows else np.zeros((0, len(COLUMNS)))
        return FlightLog.from_matrix(M, dict(self.meta))
