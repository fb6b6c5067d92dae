"""Spectrally-normalized ReLU network, implemented directly on numpy arrays.

The network maps normalized features to normalized force predictions; the
physical interface (meters, m/s, RPM^2 in; newtons out) is handled by the
attached InputSpec.  Spectral normalization projects every weight matrix onto
the ball sigma(W) <= gamma^(1/(L+1)) after each optimizer step, which bounds
the end-to-end Lipschitz constant of the network by gamma in normalized units.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import NamedTuple

import numpy as np

from ..so3 import quat_from_rotation


class ZeroWeightLayerError(ValueError):
    """A layer weight matrix is identically zero; spectral scaling undefined."""


class FeatureDimensionError(ValueError):
    """Input vector length does not match the network's input spec."""


QUAT_FEATURES = ["z", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "u1", "u2", "u3", "u4"]
MATRIX_FEATURES = (["z", "vx", "vy", "vz"]
                   + ["r%d%d" % (i, j) for i in range(1, 4) for j in range(1, 4)]
                   + ["u1", "u2", "u3", "u4"])


def feature_names(attitude="quaternion", include_xy=False):
    names = list(QUAT_FEATURES if attitude == "quaternion" else MATRIX_FEATURES)
    if include_xy:
        names = names + ["x", "y"]
    return names


def assemble_features(state, u, attitude="quaternion", include_xy=False):
    """Raw (physical-unit) feature vector for one state/command pair."""
    u = np.asarray(u, dtype=float)
    if attitude == "quaternion":
        att = quat_from_rotation(state.R)
    else:
        att = state.R.reshape(-1)
    parts = [np.array([state.p[2]]), state.v, att, u]
    if include_xy:
        parts.append(state.p[:2])
    return np.concatenate(parts)


@dataclass
class InputSpec:
    """Feature ordering plus the normalization applied around the network."""

    names: list
    mean: np.ndarray
    scale: np.ndarray
    output_scale: float
    attitude: str = "quaternion"
    include_xy: bool = False
    train_ranges: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)

    @property
    def dim(self):
        return len(self.names)

    @property
    def u_indices(self):
        return [i for i, n in enumerate(self.names) if n.startswith("u")]

    def normalize(self, X):
        return (X - self.mean) / self.scale

    def to_dict(self):
        return {
            "names": list(self.names),
            "mean": [float(x) for x in self.mean],
            "scale": [float(x) for x in self.scale],
            "output_scale": float(self.output_scale),
            "attitude": self.attitude,
            "include_xy": bool(self.include_xy),
            "train_ranges": {k: [float(v[0]), float(v[1])]
                             for k, v in sorted(self.train_ranges.items())},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(names=list(d["names"]), mean=np.array(d["mean"]),
                   scale=np.array(d["scale"]), output_scale=float(d["output_scale"]),
                   attitude=d.get("attitude", "quaternion"),
                   include_xy=bool(d.get("include_xy", False)),
                   train_ranges={k: tuple(v) for k, v in d.get("train_ranges", {}).items()})


class PowerIterResult(NamedTuple):
    sigma: float
    converged: bool
    iterations: int


def spectral_norm(W, iters=100, tol=1e-6, v0=None, trace=None):
    """Largest singular value of W by power iteration on W^T W.

    Returns a PowerIterResult; the final right singular vector estimate is
    written back into v0's storage when v0 is given (warm starting).  If
    ``trace`` is a list, the per-iteration estimates are appended to it (they
    are non-decreasing, a property the tests rely on).
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[1]
    if v0 is None:
        v = np.full(n, 1.0 / np.sqrt(n))
    else:
        v = np.asarray(v0, dtype=float)
        nv = np.linalg.norm(v)
        v = v / nv if nv > 0 else np.full(n, 1.0 / np.sqrt(n))
    sigma = 0.0
    converged = False
    it = 0
    for it in range(1, iters + 1):
        Wv = W @ v
        s = float(np.linalg.norm(Wv))
        if trace is not None:
            trace.append(s)
        if s == 0.0:
            sigma = 0.0
            converged = True
            break
        v_new = W.T @ Wv
        v_new_norm = float(np.linalg.norm(v_new))
        if v_new_norm == 0.0:
            sigma = s
            converged = True
            break
        v = v_new / v_new_norm
        if abs(s - sigma) <= tol * max(s, 1.0):
            sigma = s
            converged = True
            break
        sigma = s
    if v0 is not None and len(v0) == n:
        v0[:] = v
    return PowerIterResult(float(sigma), converged, it)


def relu(x):
    return np.maximum(x, 0.0)


class SpecNormNet:
    """Feed-forward ReLU network f(x) = W^{L+1} relu(W^L ... relu(W^1 x)).

    Ws is the list of L+1 weight matrices (possibly empty for the bias-only
    model), bs the matching bias vectors; the output layer has no activation.
    """

    def __init__(self, Ws, bs, gamma, input_spec: InputSpec, out_bias=None,
                 sn_iters=100, sn_tol=1e-6):
        self.Ws = [np.asarray(W, dtype=float) for W in Ws]
        self.bs = [np.asarray(b, dtype=float) for b in bs]
        self.gamma = gamma
        self.input_spec = input_spec
        self.out_bias = None if out_bias is None else np.asarray(out_bias, dtype=float)
        self.sn_iters = sn_iters
        self.sn_tol = sn_tol
        self._sn_vectors = [np.full(W.shape[1], 1.0 / np.sqrt(W.shape[1])) for W in self.Ws]
        self.layer_sigmas = [None] * len(self.Ws)

    # -- construction ------------------------------------------------------

    @classmethod
    def initialize(cls, arch_kind, input_spec, gamma, hidden=32, n_hidden=4,
                   rng=None, out_dim=3):
        """He-initialized network for one of the capacity variants."""
        rng = rng if rng is not None else np.random.default_rng(0)
        d = input_spec.dim
        if arch_kind == "0layer":
            return cls([], [], gamma, input_spec, out_bias=np.zeros(out_dim))
        if arch_kind == "1layer":
            dims = [d, out_dim]
        elif arch_kind == "4layer":
            dims = [d] + [hidden] * n_hidden + [out_dim]
        else:
            raise ValueError("unknown arch kind %r" % (arch_kind,))
        Ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            Ws.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(Ws, bs, gamma, input_spec)

    @property
    def n_layers(self):
        """Number of weight matrices, L+1 in the layered-map notation."""
        return len(self.Ws)

    def copy(self):
        dup = SpecNormNet([W.copy() for W in self.Ws], [b.copy() for b in self.bs],
                          self.gamma, self.input_spec,
                          out_bias=None if self.out_bias is None else self.out_bias.copy(),
                          sn_iters=self.sn_iters, sn_tol=self.sn_tol)
        dup._sn_vectors = [v.copy() for v in self._sn_vectors]
        dup.layer_sigmas = list(self.layer_sigmas)
        return dup

    # -- evaluation --------------------------------------------------------

    def forward_normalized(self, xn):
        """Normalized features -> normalized outputs; accepts (d,) or (N, d)."""
        xn = np.asarray(xn, dtype=float)
        single = xn.ndim == 1
        h = xn[None, :] if single else xn
        if h.shape[1] != self.input_spec.dim:
            raise FeatureDimensionError(
                "expected %d features, got %d" % (self.input_spec.dim, h.shape[1]))
        if not self.Ws:
            out = np.broadcast_to(self.out_bias, (h.shape[0], len(self.out_bias))).copy()
            return out[0] if single else out
        for W, b in zip(self.Ws[:-1], self.bs[:-1]):
            h = relu(h @ W.T + b)
        out = h @ self.Ws[-1].T + self.bs[-1]
        return out[0] if single else out

    def forward(self, X):
        """Physical features in, predicted force [N] out."""
        Xn = self.input_spec.normalize(np.asarray(X, dtype=float))
        return self.forward_normalized(Xn) * self.input_spec.output_scale

    def predict(self, state, u):
        """Flight-time disturbance prediction for one state/command pair."""
        x = assemble_features(state, u, self.input_spec.attitude,
                              self.input_spec.include_xy)
        return self.forward(x)

    def jacobian_normalized(self, xn):
        """Jacobian of the normalized map at xn (defined a.e.)."""
        xn = np.asarray(xn, dtype=float)
        if not self.Ws:
            return np.zeros((len(self.out_bias), self.input_spec.dim))
        J = None
        h = xn
        for W, b in zip(self.Ws[:-1], self.bs[:-1]):
            pre = W @ h + b
            mask = (pre > 0).astype(float)
            J = (mask[:, None] * W) if J is None else (mask[:, None] * (W @ J))
            h = pre * mask
        return self.Ws[-1] if J is None else self.Ws[-1] @ J

    # -- spectral normalization -------------------------------------------

    def layer_spectral_norms(self, iters=None, tol=None):
        """Power-iteration estimates of sigma(W^l), warm-started per layer."""
        iters = iters if iters is not None else self.sn_iters
        tol = tol if tol is not None else self.sn_tol
        sigmas = []
        for W, v in zip(self.Ws, self._sn_vectors):
            sigmas.append(spectral_norm(W, iters=iters, tol=tol, v0=v).sigma)
        return sigmas

    def per_layer_target(self):
        if self.gamma is None or not self.Ws:
            return None
        return float(self.gamma) ** (1.0 / len(self.Ws))

    def certified_lipschitz(self):
        """prod sigma(W^l) computed with dense SVD (the audit-grade route)."""
        if not self.Ws:
            return 0.0
        prod = 1.0
        for W in self.Ws:
            prod *= float(np.linalg.svd(W, compute_uv=False)[0])
        return prod

    def certified_u_slope(self):
        """Certified Lipschitz constant w.r.t. the motor channels alone,
        in N per RPM^2: sigma of the first layer restricted to the u columns
        (with their physical scaling) times the remaining layer norms and the
        output scale."""
        spec = self.input_spec
        u_idx = spec.u_indices
        if not u_idx:
            return 0.0
        if not self.Ws:
            return 0.0
        block = self.Ws[0][:, u_idx] / spec.scale[u_idx][None, :]
        s = float(np.linalg.svd(block, compute_uv=False)[0]) if block.size else 0.0
        rest = 1.0
        for W in self.Ws[1:]:
            rest *= float(np.linalg.svd(W, compute_uv=False)[0])
        return s * rest * spec.output_scale

    def u_lipschitz(self):
        return self.certified_u_slope()

    # -- serialization -----------------------------------------------------

    def to_dict(self, provenance=None):
        d = {
            "format": "quadland-model",
            "version": 1,
            "gamma": None if self.gamma is None else float(self.gamma),
            "layers": [{"W": W.tolist(), "b": b.tolist()}
                       for W, b in zip(self.Ws, self.bs)],
            "out_bias": None if self.out_bias is None else self.out_bias.tolist(),
            "input_spec": self.input_spec.to_dict(),
        }
        if provenance is not None:
            d["provenance"] = provenance
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "quadland-model":
            raise ValueError("not a quadland model file")
        spec = InputSpec.from_dict(d["input_spec"])
        Ws = [np.array(layer["W"], dtype=float) for layer in d["layers"]]
        bs = [np.array(layer["b"], dtype=float) for layer in d["layers"]]
        out_bias = d.get("out_bias")
        gamma = d.get("gamma")
        return cls(Ws, bs, gamma, spec,
                   out_bias=None if out_bias is None else np.array(out_bias, dtype=float))


def normalize_layers(net: SpecNormNet, iters=None, tol=None):
    """Project every weight matrix onto sigma(W) <= gamma^(1/(L+1)).

    Matrices already inside the ball are left untouched, so realizable
    low-gain fits are not inflated; matrices outside are rescaled by
    target/sigma.  With this projection the product of layer norms (and by
    composition the network's Lipschitz constant) stays below gamma.
    """
    target = net.per_layer_target()
    if target is None:
        return net
    iters = iters if iters is not None else net.sn_iters
    tol = tol if tol is not None else net.sn_tol
    for i, (W, v) in enumerate(zip(net.Ws, net._sn_vectors)):
        sigma = spectral_norm(W, iters=iters, tol=tol, v0=v).sigma
        if sigma == 0.0:
            raise ZeroWeightLayerError("layer %d weight matrix is zero" % i)
        if sigma > target:
            W *= target / sigma
            sigma = target
        net.layer_sigmas[i] = sigma
    return net
