"""Adaptive basis layer: micro-networks acting as learnable basis functions.

Each basis node is a tiny tau -> B_d(tau) network; curve projections are
trapezoid-weighted inner products between the sampled curve and the basis
values, differentiable through the micro-network parameters.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad

MICRO_WIDTH = 16
MICRO_DEPTH = 2  # hidden tanh sublayers


def trapezoid_weights(taus):
    """Composite trapezoid weights for strictly increasing sample points."""
    taus = np.asarray(taus, dtype=np.float64)
    if taus.size < 2:
        raise ValueError("trapezoid rule needs at least 2 points")
    if np.any(np.diff(taus) <= 0):
        raise ValueError("sample points must be strictly increasing")
    w = np.empty_like(taus)
    w[0] = (taus[1] - taus[0]) / 2.0
    w[-1] = (taus[-1] - taus[-2]) / 2.0
    w[1:-1] = (taus[2:] - taus[:-2]) / 2.0
    return w


class MicroNetwork:
    """Scalar tau -> scalar B_d(tau) stack of tanh sublayers + linear output."""

    def __init__(self, rng, width=MICRO_WIDTH, depth=MICRO_DEPTH):
        self.width = width
        self.depth = depth
        self.weights = []
        self.biases = []
        fan_in = 1
        for _ in range(depth):
            self.weights.append(ad.Var(ad.glorot_uniform(width, fan_in, rng), requires_grad=True))
            self.biases.append(ad.Var(np.zeros(width), requires_grad=True))
            fan_in = width
        self.weights.append(ad.Var(ad.glorot_uniform(1, fan_in, rng), requires_grad=True))
        self.biases.append(ad.Var(np.zeros(1), requires_grad=True))

    def parameters(self):
        return self.weights + self.biases

    def forward(self, taus):
        """Evaluate B_d at a (J,) array of taus, returning a (J, 1) Var."""
        h = ad.Var(np.asarray(taus, dtype=np.float64).reshape(-1, 1))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = ad.tanh(ad.dense(h, w, b))
        return ad.dense(h, self.weights[-1], self.biases[-1])


class BasisLayer:
    """D micro-networks over one functional signal plus its integration rule."""

    def __init__(self, n_basis, taus, rng, width=MICRO_WIDTH, depth=MICRO_DEPTH):
        if n_basis < 1:
            raise ValueError("need at least one basis node")
        self.taus = np.asarray(taus, dtype=np.float64)
        self.int_weights = trapezoid_weights(self.taus)
        self.nets = [MicroNetwork(rng, width=width, depth=depth) for _ in range(n_basis)]

    @property
    def n_basis(self):
        return len(self.nets)

    def parameters(self):
        return [p for net in self.nets for p in net.parameters()]

    def basis_matrix(self):
        """(J, D) Var of basis values on the canonical tau grid."""
        return ad.concat([net.forward(self.taus) for net in self.nets], axis=1)

    def project(self, curve_values):
        """Project curves sampled on the canonical grid onto the learned basis.

        curve_values: (n, J) array of x(tau_j) per subject. Returns an
        (n, D) Var of coefficients a_d = sum_j w_j B_d(tau_j) x(tau_j).
        """
        vals = np.atleast_2d(np.asarray(curve_values, dtype=np.float64))
        if vals.shape[1] != self.taus.size:
            raise ValueError("curve sampled on %d points, layer expects %d"
                             % (vals.shape[1], self.taus.size))
        weighted = ad.Var(vals * self.int_weights)
        return ad.matmul(weighted, self.basis_matrix())


def resample_curve(curve, taus):
    """Linearly interpolate a FunctionalCurve onto the canonical tau grid."""
    return np.interp(taus, curve.taus, curve.values)
