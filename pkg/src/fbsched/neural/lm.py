"""Levenberg-Marquardt batch training of the scheduler network."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, TrainingDivergedError
from .data import TrainingSet, normalize
from .network import MlpParams, flop_count, forward, forward_normalized, sigmoid

log = logging.getLogger(__name__)

MU_CAP = 1e10


@dataclass
class LmConfig:
    mu_init: float = 1e-3
    mu_up: float = 10.0
    mu_down: float = 10.0
    max_epochs: int = 500
    target_mse: float = 1e-5
    holdout_fraction: float = 0.2
    rng_seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        if not self.mu_init > 0:
            raise ConfigurationError("mu_init must be > 0")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigurationError("holdout_fraction must lie in (0, 1)")


@dataclass
class TrainingReport:
    epochs: list = field(default_factory=list)   # (epoch, train_mse, holdout_mse, mu)
    stop_reason: str = ""
    train_index: np.ndarray = None
    holdout_index: np.ndarray = None

    @property
    def final_train_mse(self) -> float:
        return self.epochs[-1][1] if self.epochs else float("nan")

    @property
    def final_holdout_mse(self) -> float:
        return self.epochs[-1][2] if self.epochs else float("nan")


def n_params(n_in: int, m: int, n_out: int) -> int:
    return m * n_in + m + n_out * m + n_out


def pack(p: MlpParams) -> np.ndarray:
    return np.concatenate([p.w1.ravel(), p.b1, p.w2.ravel(), p.b2])


def unpack(theta: np.ndarray, like: MlpParams) -> MlpParams:
    m, n_in = like.w1.shape
    n_out = like.w2.shape[0]
    i = 0
    w1 = theta[i:i + m * n_in].reshape(m, n_in); i += m * n_in
    b1 = theta[i:i + m]; i += m
    w2 = theta[i:i + n_out * m].reshape(n_out, m); i += n_out * m
    b2 = theta[i:i + n_out]
    return MlpParams(w1.copy(), b1.copy(), w2.copy(), b2.copy(), like.in_norm, like.out_norm)


def residual_jacobian(p: MlpParams, xn: np.ndarray, yn: np.ndarray):
    """Residuals r = net(x) - y (sample-major, outputs inner) and dr/dtheta.

    Columns follow ``pack`` order: W1 row-major, B1, W2 row-major, B2.
    """
    s = len(xn)
    m, n_in = p.w1.shape
    n_out = p.w2.shape[0]
    z = sigmoid(xn @ p.w1.T + p.b1)                  # s x m
    r = (z @ p.w2.T + p.b2 - yn).reshape(-1)
    dz = z * (1.0 - z)                               # s x m
    jac = np.zeros((s, n_out, n_params(n_in, m, n_out)))
    # d y_k / d W1[j, i] = W2[k, j] dz_j x_i
    g = p.w2[None, :, :] * dz[:, None, :]            # s x n_out x m
    jac[:, :, :m * n_in] = (g[:, :, :, None] * xn[:, None, None, :]).reshape(s, n_out, -1)
    o = m * n_in
    jac[:, :, o:o + m] = g
    o += m
    for k in range(n_out):
        jac[:, k, o + k * m:o + (k + 1) * m] = z
    o += n_out * m
    jac[:, :, o:] = np.eye(n_out)[None, :, :]
    return r, jac.reshape(s * n_out, -1)


def _mse(p, xn, yn) -> float:
    if len(xn) == 0:
        return float("nan")
    return float(np.mean((forward_normalized(p, xn) - yn) ** 2))


def split_indices(n: int, holdout_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_hold = int(round(holdout_fraction * n))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def train_lm(ts: TrainingSet, m_hidden: int, config: Optional[LmConfig] = None,
             in_norm=None, out_norm=None):
    """Train on a normalized set (or normalize it here); returns (params, report).

    Each epoch solves (J^T J + mu I) delta = J^T r over the training rows.  A
    step is kept only if it lowers the training MSE (mu /= mu_down), otherwise
    mu *= mu_up and the step is retried.  Training stops at target_mse,
    max_epochs or when mu exceeds 1e10.
    """
    config = config or LmConfig()
    if not ts.normalized:
        ts, in_norm, out_norm = normalize(ts)
    n_out = ts.n_loops
    n_in = ts.inputs.shape[1]
    rng = np.random.default_rng(config.rng_seed)
    tr, ho = split_indices(len(ts), config.holdout_fraction, rng)
    x_tr, y_tr = ts.inputs[tr], ts.targets[tr]
    x_ho, y_ho = ts.inputs[ho], ts.targets[ho]
    n_par = n_params(n_in, m_hidden, n_out)
    if len(tr) < 10 * n_par:
        warnings.warn(f"{len(tr)} training rows for {n_par} parameters", stacklevel=2)

    p = MlpParams.random(n_out, m_hidden, rng, in_norm, out_norm, config.init_scale)
    theta = pack(p)
    mu = config.mu_init
    report = TrainingReport(train_index=tr, holdout_index=ho)
    mse = _mse(p, x_tr, y_tr)
    eye = np.eye(n_par)
    for epoch in range(1, config.max_epochs + 1):
        if mse <= config.target_mse:
            report.stop_reason = "target_mse"
            break
        r, jac = residual_jacobian(p, x_tr, y_tr)
        if not (np.all(np.isfinite(jac)) and np.all(np.isfinite(r))):
            raise TrainingDivergedError(f"non-finite Jacobian at epoch {epoch}")
        jtj = jac.T @ jac
        jtr = jac.T @ r
        accepted = False
        while mu <= MU_CAP:
            try:
                delta = np.linalg.solve(jtj + mu * eye, jtr)
            except np.linalg.LinAlgError:
                mu *= config.mu_up
                continue
            cand = unpack(theta - delta, p)
            cand_mse = _mse(cand, x_tr, y_tr)
            if np.isfinite(cand_mse) and cand_mse < mse:
                theta, p, mse = theta - delta, cand, cand_mse
                mu = max(mu / config.mu_down, 1e-20)
                accepted = True
                break
            mu *= config.mu_up
        report.epochs.append((epoch, mse, _mse(p, x_ho, y_ho), mu))
        if not accepted:
            report.stop_reason = "mu_cap"
            break
    else:
        report.stop_reason = "max_epochs"
    if not report.stop_reason:
        report.stop_reason = "target_mse"
    if not report.epochs:
        report.epochs.append((0, mse, _mse(p, x_ho, y_ho), mu))
    log.info("LM stopped (%s) after %d epochs, train mse %.3g",
             report.stop_reason, len(report.epochs), mse)
    return p, report


def relative_period_errors(p: MlpParams, inputs_raw, targets_raw) -> np.ndarray:
    pred = forward(p, inputs_raw, warn=False)
    return np.abs(pred - targets_raw) / np.abs(targets_raw)


def holdout_errors(p: MlpParams, ts_raw: TrainingSet, report: TrainingReport) -> np.ndarray:
    idx = report.holdout_index
    return relative_period_errors(p, ts_raw.inputs[idx], ts_raw.targets[idx])


def sweep_hidden(ts_raw: TrainingSet, hidden: Sequence[int], config: Optional[LmConfig] = None):
    """Holdout error against network size; rows of (M, holdout_mse, mean_rel_err, flop_count)."""
    rows = []
    for m in hidden:
        p, rep = train_lm(ts_raw, m, config)
        err = holdout_errors(p, ts_raw, rep)
        rows.append((m, rep.final_holdout_mse, float(err.mean()), flop_count(ts_raw.n_loops, m)))
    return rows
