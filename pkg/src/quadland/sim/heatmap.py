"""Dense prediction slices over two input features.

Used for the smoothness comparison between spectrally-normalized and
unnormalized twins: the gradient grid is computed in normalized feature and
output units, where the certified bound is exactly gamma.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..learn.net import SpecNormNet


@dataclass
class HeatmapSlice:
    axis_names: tuple
    axis_values: tuple          # (vals0, vals1) physical units
    values: np.ndarray          # predicted f_hat_z [N], shape (n0, n1)
    mask: np.ndarray            # True where inside the training domain
    grad_norm: np.ndarray       # |grad| in normalized units, shape (n0, n1)

    def max_grad(self, where=None):
        g = self.grad_norm if where is None else self.grad_norm[where]
        return float(np.max(g)) if g.size else 0.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["%s\\%s" % self.axis_names] + [repr(float(v)) for v in self.axis_values[1]])
            for i, v0 in enumerate(self.axis_values[0]):
                w.writerow([repr(float(v0))] + [repr(float(x)) for x in self.values[i]])


def fig_slice_conditions(u_rpm=6400.0, attitude="quaternion", include_xy=False):
    """Fixed features for the standard (z, vz) slice: level attitude, zero
    lateral velocity, all motors at the given speed."""
    fixed = {"vx": 0.0, "vy": 0.0}
    if attitude == "quaternion":
        fixed.update({"qw": 1.0, "qx": 0.0, "qy": 0.0, "qz": 0.0})
    else:
        for i in range(1, 4):
            for j in range(1, 4):
                fixed["r%d%d" % (i, j)] = 1.0 if i == j else 0.0
    for k in range(1, 5):
        fixed["u%d" % k] = u_rpm ** 2
    if include_xy:
        fixed.update({"x": 0.0, "y": 0.0})
    return fixed


def heatmap_slice(net: SpecNormNet, axes=("z", "vz"), ranges=((0.0, 1.5), (-2.0, 1.0)),
                  fixed=None, resolution=(60, 60), out_component=2) -> HeatmapSlice:
    """Evaluate the predictor on a dense grid over two features.

    fixed supplies the remaining feature values in physical units (defaults to
    the standard slice conditions).  The mask marks cells inside the training
    coverage recorded in the input spec.
    """
    spec = net.input_spec
    fixed = dict(fixed or fig_slice_conditions(attitude=spec.attitude,
                                               include_xy=spec.include_xy))
    idx = {name: i for i, name in enumerate(spec.names)}
    for ax in axes:
        if ax not in idx:
            raise KeyError("axis feature %r not in input spec" % ax)

    v0 = np.linspace(ranges[0][0], ranges[0][1], resolution[0])
    v1 = np.linspace(ranges[1][0], ranges[1][1], resolution[1])
    base = np.zeros(spec.dim)
    for name, val in fixed.items():
        if name in idx:
            base[idx[name]] = val

    X = np.tile(base, (resolution[0] * resolution[1], 1))
    G0, G1 = np.meshgrid(v0, v1, indexing="ij")
    X[:, idx[axes[0]]] = G0.ravel()
    X[:, idx[axes[1]]] = G1.ravel()

    values = net.forward(X)[:, out_component].reshape(resolution)

    mask = np.ones(resolution, dtype=bool)
    for ax, G in zip(axes, (G0, G1)):
        rng = spec.train_ranges.get(ax)
        if rng is not None:
            mask &= (G >= rng[0]) & (G <= rng[1])

    # gradient in normalized units: certified to stay below gamma for the
    # spectrally normalized network
    fn = values / spec.output_scale
    a0n = (v0 - spec.mean[idx[axes[0]]]) / spec.scale[idx[axes[0]]]
    a1n = (v1 - spec.mean[idx[axes[1]]]) / spec.scale[idx[axes[1]]]
    d0, d1 = np.gradient(fn, a0n, a1n)
    grad = np.sqrt(d0 ** 2 + d1 ** 2)

    return HeatmapSlice(axis_names=tuple(axes), axis_values=(v0, v1),
                        values=values, mask=mask, grad_norm=grad)
