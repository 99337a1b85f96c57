"""Three-layer feedforward network used as the online feedback scheduler.

Inputs are (c_1, ..., c_N, U_R), outputs the N sampling periods.  Both are
min-max normalized to [0, 1]; the ranges travel with the weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError


class OutOfEnvelopeWarning(UserWarning):
    """Input lies well outside the range the network was trained on."""


def sigmoid(a):
    """Logistic function, overflow-free for any magnitude of ``a``."""
    if np.isscalar(a):
        if a >= 0:
            return 1.0 / (1.0 + math.exp(-a))
        e = math.exp(a)
        return e / (1.0 + e)
    a = np.asarray(a, dtype=float)
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class MlpParams:
    w1: np.ndarray        # M x (N+1)
    b1: np.ndarray        # M
    w2: np.ndarray        # N x M
    b2: np.ndarray        # N
    in_norm: np.ndarray   # (N+1) x 2, rows of (min, max)
    out_norm: np.ndarray  # N x 2

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float).reshape(-1)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float).reshape(-1)
        self.in_norm = np.asarray(self.in_norm, dtype=float).reshape(-1, 2)
        self.out_norm = np.asarray(self.out_norm, dtype=float).reshape(-1, 2)
        m, n_in = self.w1.shape
        n_out = self.w2.shape[0]
        if m < 1:
            raise ConfigurationError("need at least one hidden neuron")
        if (self.b1.shape != (m,) or self.w2.shape != (n_out, m) or self.b2.shape != (n_out,)
                or self.in_norm.shape != (n_in, 2) or self.out_norm.shape != (n_out, 2)):
            raise ConfigurationError("inconsistent network dimensions")
        if n_in != n_out + 1:
            raise ConfigurationError(f"expected N+1 inputs for N outputs, got {n_in}/{n_out}")
        for name, rng in (("in_norm", self.in_norm), ("out_norm", self.out_norm)):
            if np.any(rng[:, 1] <= rng[:, 0]):
                raise ConfigurationError(f"{name} has a range with max <= min")

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def random(cls, n_loops: int, n_hidden: int, rng, in_norm=None, out_norm=None,
               scale: float = 0.5) -> "MlpParams":
        if in_norm is None:
            in_norm = np.tile([0.0, 1.0], (n_loops + 1, 1))
        if out_norm is None:
            out_norm = np.tile([0.0, 1.0], (n_loops, 1))
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)
        return cls(u(n_hidden, n_loops + 1), u(n_hidden), u(n_loops, n_hidden), u(n_loops),
                   in_norm, out_norm)


def scale_in(params: MlpParams, x):
    lo, hi = params.in_norm[:, 0], params.in_norm[:, 1]
    return (np.asarray(x, dtype=float) - lo) / (hi - lo)


def unscale_out(params: MlpParams, y):
    lo, hi = params.out_norm[:, 0], params.out_norm[:, 1]
    return np.asarray(y, dtype=float) * (hi - lo) + lo


def forward_normalized(params: MlpParams, xn):
    """Network on normalized inputs; ``xn`` may be one vector or a row batch."""
    a = xn @ params.w1.T + params.b1
    z = sigmoid(a)
    return z @ params.w2.T + params.b2


def forward(params: MlpParams, x, warn: bool = True) -> np.ndarray:
    """Raw inputs (seconds, fraction) to raw periods (seconds)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.n_inputs:
        raise ConfigurationError(f"expected {params.n_inputs} inputs, got {x.shape[-1]}")
    xn = scale_in(params, x)
    if warn and (np.any(xn < -0.5) or np.any(xn > 1.5)):
        warnings.warn(f"input {x} outside the trained envelope", OutOfEnvelopeWarning,
                      stacklevel=2)
    return unscale_out(params, forward_normalized(params, xn))


def flop_count(n_loops: int, n_hidden: int) -> int:
    """Basic operations of one online evaluation: 4MN + 6M - N."""
    if n_loops < 1 or n_hidden < 1:
        raise ConfigurationError("N and M must be >= 1")
    return 4 * n_hidden * n_loops + 6 * n_hidden - n_loops


class OpCounter:
    """Tally of basic operations, with the accounting documented in docs/op_count.md."""

    SIGMOID_OPS = 4  # negate, exp, add 1, divide

    def __init__(self):
        self.mul = 0
        self.add = 0
        self.sigmoid = 0

    @property
    def total(self) -> int:
        return self.mul + self.add + self.SIGMOID_OPS * self.sigmoid


def counted_forward(params: MlpParams, xn) -> tuple[list[float], OpCounter]:
    """Scalar evaluation on normalized inputs that counts every basic operation.

    Hidden pre-activations cost N+1 multiplies and N+1 additions (bias
    included).  Each output is a dot product of M terms (M multiplies, M-1
    additions); its bias is folded into the affine de-normalization that
    follows and is not charged to the network.
    """
    ops = OpCounter()
    w1, b1, w2, b2 = params.w1, params.b1, params.w2, params.b2
    m, n_in = w1.shape
    z = []
    for j in range(m):
        acc = float(b1[j])
        for i in range(n_in):
            acc += w1[j, i] * xn[i]
            ops.mul += 1
            ops.add += 1
        z.append(1.0 / (1.0 + math.exp(-acc)))
        ops.sigmoid += 1
    y = []
    for k in range(w2.shape[0]):
        acc = w2[k, 0] * z[0]
        ops.mul += 1
        for j in range(1, m):
            acc += w2[k, j] * z[j]
            ops.mul += 1
            ops.add += 1
        y.append(acc + b2[k])
    return y, ops
