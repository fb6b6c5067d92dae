"""Constrained SGD training of the disturbance predictor.

The objective is the mean Euclidean prediction error (not its square), and the
Lipschitz budget gamma is enforced by re-projecting the weights after every
optimizer step.  Everything is seeded, single-threaded and bitwise
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .net import InputSpec, SpecNormNet, normalize_layers, feature_names


class EmptyDataError(ValueError):
    pass


class NonFiniteLossError(RuntimeError):
    pass


class CertificateError(RuntimeError):
    """A stability certificate required before training/flight fails."""


@dataclass
class TrainingSet:
    """Feature/target records extracted from flight logs.

    X holds raw physical-unit features (ordering in `names`), Y the observed
    disturbance force [N].  `tags` marks the data-collection segment each
    record came from ("part1", "part2", ...), `is_val` the validation split.
    Auxiliary per-record columns (z, rotor speed n, vertical speed) support
    the steady-model comparison and coverage checks.
    """

    X: np.ndarray
    Y: np.ndarray
    names: list
    tags: np.ndarray
    is_val: np.ndarray
    z: np.ndarray
    n_rotor: np.ndarray
    vz: np.ndarray
    attitude: str = "quaternion"
    include_xy: bool = False

    def __post_init__(self):
        if len(self.X) == 0:
            raise EmptyDataError("training set is empty")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("non-finite features or targets")

    def __len__(self):
        return len(self.X)

    @property
    def train_idx(self):
        return np.flatnonzero(~self.is_val)

    @property
    def val_idx(self):
        return np.flatnonzero(self.is_val)

    def feature_ranges(self):
        return {name: (float(self.X[:, i].min()), float(self.X[:, i].max()))
                for i, name in enumerate(self.names)}

    @classmethod
    def from_arrays(cls, X, Y, names, tags=None, z=None, n_rotor=None, vz=None,
                    val_fraction=0.2, seed=0, attitude="quaternion", include_xy=False):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        N = len(X)
        if tags is None:
            tags = np.array(["data"] * N)
        rng = np.random.default_rng(seed)
        is_val = np.zeros(N, dtype=bool)
        n_val = int(round(val_fraction * N))
        if n_val > 0:
            is_val[rng.permutation(N)[:n_val]] = True
        if z is None:
            z = X[:, names.index("z")] if "z" in names else np.zeros(N)
        if n_rotor is None:
            u_cols = [i for i, nm in enumerate(names) if nm.startswith("u")]
            n_rotor = np.sqrt(np.maximum(X[:, u_cols].mean(axis=1), 0.0)) if u_cols else np.zeros(N)
        if vz is None:
            vz = X[:, names.index("vz")] if "vz" in names else np.zeros(N)
        return cls(X, Y, list(names), np.asarray(tags), is_val,
                   np.asarray(z, dtype=float), np.asarray(n_rotor, dtype=float),
                   np.asarray(vz, dtype=float), attitude, include_xy)


@dataclass
class SGDConfig:
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: float = 0.985
    epochs: int = 200
    seed: int = 0
    hidden: int = 32
    n_hidden: int = 4
    spectral_normalization: bool = True
    u_scale_policy: object = "auto"   # "auto" | "std" | explicit float
    contraction_margin: float = 0.4


@dataclass
class TrainResult:
    net: SpecNormNet
    loss_curve: np.ndarray        # columns: epoch, lr, train_loss_N, val_loss_N
    train_max_err: float
    val_max_err: float
    eps_m: float
    final_val_rmse: float

    def loss_curve_rows(self):
        return [(int(r[0]), float(r[1]), float(r[2]), float(r[3]))
                for r in self.loss_curve]


def _mean_norm_loss_and_grads(net: SpecNormNet, Xn, Yn):
    """Mean L2-norm loss over the batch with analytic gradients.

    Returns (loss, grads_W, grads_b, grad_out_bias); gradient lists align with
    net.Ws / net.bs.
    """
    B = Xn.shape[0]
    if not net.Ws:
        f = np.broadcast_to(net.out_bias, (B, len(net.out_bias)))
        e = f - Yn
        r = np.maximum(np.linalg.norm(e, axis=1), 1e-12)
        loss = float(np.mean(r))
        g_out = (e / r[:, None]).sum(axis=0) / B
        return loss, [], [], g_out

    hs = [Xn]
    pres = []
    h = Xn
    for W, b in zip(net.Ws[:-1], net.bs[:-1]):
        pre = h @ W.T + b
        pres.append(pre)
        h = np.maximum(pre, 0.0)
        hs.append(h)
    f = h @ net.Ws[-1].T + net.bs[-1]

    e = f - Yn
    r = np.maximum(np.linalg.norm(e, axis=1), 1e-12)
    loss = float(np.mean(r))
    delta = (e / r[:, None]) / B

    grads_W = [None] * len(net.Ws)
    grads_b = [None] * len(net.bs)
    grads_W[-1] = delta.T @ hs[-1]
    grads_b[-1] = delta.sum(axis=0)
    back = delta @ net.Ws[-1]
    for li in range(len(net.Ws) - 2, -1, -1):
        back = back * (pres[li] > 0)
        grads_W[li] = back.T @ hs[li]
        grads_b[li] = back.sum(axis=0)
        if li > 0:
            back = back @ net.Ws[li]
    return loss, grads_W, grads_b, None


def loss_and_grads(net, Xn, Yn):
    """Public hook for gradient verification against finite differences."""
    return _mean_norm_loss_and_grads(net, np.asarray(Xn, float), np.asarray(Yn, float))


def build_input_spec(data: TrainingSet, gamma, sgd: SGDConfig, sigma_b0_inv=None):
    """Normalization statistics from the training split.

    Non-motor features get zero-mean/std scaling.  The motor channels share a
    single scale chosen by policy: "std" uses the pooled standard deviation,
    "auto" widens it so that even the worst-case certified u-sensitivity
    gamma*output_scale/u_scale keeps sigma(B0^-1)*L_a_u below the contraction
    margin.  Squared motor speeds span ~1e7 RPM^2, so an unscaled budget would
    be meaningless.
    """
    idx = data.train_idx
    X, Y = data.X[idx], data.Y[idx]
    mean = X.mean(axis=0)
    scale = np.maximum(X.std(axis=0), 1e-8)
    output_scale = max(float(np.abs(Y).max()), 1e-12)

    u_cols = [i for i, nm in enumerate(data.names) if nm.startswith("u")]
    if u_cols:
        u_std = max(float(X[:, u_cols].std()), 1e-8)
        policy = sgd.u_scale_policy
        if policy == "std":
            u_scale = u_std
        elif policy == "auto":
            if sigma_b0_inv is None:
                u_scale = u_std
            else:
                needed = (gamma or 1.0) * output_scale * sigma_b0_inv / sgd.contraction_margin
                u_scale = max(u_std, needed)
        else:
            u_scale = float(policy)
        scale[u_cols] = u_scale
        mean[u_cols] = float(X[:, u_cols].mean())

    return InputSpec(names=list(data.names), mean=mean, scale=scale,
                     output_scale=output_scale, attitude=data.attitude,
                     include_xy=data.include_xy,
                     train_ranges=data.feature_ranges())


def check_train_certificate(gamma, spec: InputSpec, sigma_b0_inv):
    """Abort before training when even a gamma-saturating network could break
    the allocation contraction requirement sigma(B0^-1)*L_a_u < 1."""
    if sigma_b0_inv is None or gamma is None:
        return
    u_cols = spec.u_indices
    if not u_cols:
        return
    worst_u_slope = gamma * spec.output_scale / float(np.min(spec.scale[u_cols]))
    value = sigma_b0_inv * worst_u_slope
    if value >= 1.0:
        raise CertificateError(
            "contraction certificate fails a priori: sigma(B0^-1)*L_a_u could "
            "reach %.3f >= 1 for gamma=%g; reduce gamma or widen the u feature "
            "scale" % (value, gamma))


def train(data: TrainingSet, arch="4layer", gamma=4.0, sgd: SGDConfig | None = None,
          sigma_b0_inv=None) -> TrainResult:
    """Mini-batch SGD on the mean-norm objective with per-step re-projection.

    Deterministic given (data, arch, gamma, sgd.seed).  Raises
    CertificateError before touching the data when the requested gamma cannot
    satisfy the allocation contraction bound, and NonFiniteLossError with
    diagnostics if the loss diverges.
    """
    sgd = sgd if sgd is not None else SGDConfig()
    if len(data) == 0:
        raise EmptyDataError("no records")

    spec = build_input_spec(data, gamma, sgd, sigma_b0_inv)
    if sgd.spectral_normalization:
        check_train_certificate(gamma, spec, sigma_b0_inv)

    rng = np.random.default_rng(sgd.seed)
    net = SpecNormNet.initialize(arch, spec, gamma if sgd.spectral_normalization else None,
                                 hidden=sgd.hidden, n_hidden=sgd.n_hidden, rng=rng)
    if sgd.spectral_normalization:
        normalize_layers(net)

    tr_idx = data.train_idx
    val_idx = data.val_idx
    Xn_tr = spec.normalize(data.X[tr_idx])
    Yn_tr = data.Y[tr_idx] / spec.output_scale
    Xn_val = spec.normalize(data.X[val_idx]) if len(val_idx) else None
    Yn_val = (data.Y[val_idx] / spec.output_scale) if len(val_idx) else None

    n_train = len(tr_idx)
    curve = []
    lr = sgd.lr
    for epoch in range(sgd.epochs):
        order = rng.permutation(n_train)
        running = 0.0
        batches = 0
        for start in range(0, n_train, sgd.batch_size):
            sel = order[start:start + sgd.batch_size]
            loss, gWs, gbs, g_out = _mean_norm_loss_and_grads(net, Xn_tr[sel], Yn_tr[sel])
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    "loss diverged at epoch %d batch %d (lr=%g)" % (epoch, batches, lr))
            for W, gW in zip(net.Ws, gWs):
                W -= lr * gW
            for b, gb in zip(net.bs, gbs):
                b -= lr * gb
            if g_out is not None:
                net.out_bias -= lr * g_out
            if sgd.spectral_normalization:
                normalize_layers(net)
            running += loss
            batches += 1
        train_loss = running / max(batches, 1)
        if Xn_val is not None:
            val_loss = float(np.mean(np.linalg.norm(
                net.forward_normalized(Xn_val) - Yn_val, axis=1)))
        else:
            val_loss = train_loss
        curve.append((epoch, lr, train_loss * spec.output_scale,
                      val_loss * spec.output_scale))
        lr *= sgd.lr_decay

    err_tr = np.linalg.norm(net.forward(data.X[tr_idx]) - data.Y[tr_idx], axis=1)
    if len(val_idx):
        err_val = np.linalg.norm(net.forward(data.X[val_idx]) - data.Y[val_idx], axis=1)
    else:
        err_val = err_tr
    train_max = float(err_tr.max())
    val_max = float(err_val.max())
    eps_m = val_max + max(0.0, val_max - train_max)
    val_rmse = float(np.sqrt(np.mean(err_val ** 2)))
    return TrainResult(net=net, loss_curve=np.array(curve), train_max_err=train_max,
                       val_max_err=val_max, eps_m=eps_m, final_val_rmse=val_rmse)
