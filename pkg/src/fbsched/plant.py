"""Linearized inverted pendulum, sampled-data LQG design and plant stepping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DesignError, DomainError

MAX_PERIOD = 0.2
RICCATI_TOL = 1e-10
RICCATI_MAX_ITER = 10_000
FALL_ANGLE = 0.5


@dataclass(frozen=True)
class PendulumModel:
    omega0: float
    a_mat: np.ndarray = field(repr=False)
    b_vec: np.ndarray = field(repr=False)
    c_vec: np.ndarray = field(repr=False)
    v_variance: float
    e_variance: float

    @property
    def noise_direction(self) -> np.ndarray:
        # process noise is loaded along the input channel
        return self.b_vec[:, 0] / np.linalg.norm(self.b_vec)


def pendulum_model(omega0: float, e_variance: float = 1e-4) -> PendulumModel:
    if not omega0 > 0:
        raise DomainError(f"omega0 must be > 0, got {omega0}")
    w2 = omega0 * omega0
    return PendulumModel(
        omega0=omega0,
        a_mat=np.array([[0.0, 1.0], [w2, 0.0]]),
        b_vec=np.array([[0.0], [w2]]),
        c_vec=np.array([[1.0, 0.0]]),
        v_variance=1.0 / omega0,
        e_variance=e_variance,
    )


def expm_series(m: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    The matrix is scaled by 2**-s so its infinity norm is at most 1/2, the
    series is summed until the next term's norm drops below ``tol`` relative
    to the partial sum, and the result is squared s times.
    """
    m = np.asarray(m, dtype=float)
    norm = np.linalg.norm(m, np.inf)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    x = m / (2.0 ** s)
    out = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, 60):
        term = term @ x / k
        out = out + term
        if np.linalg.norm(term, np.inf) < tol * np.linalg.norm(out, np.inf):
            break
    for _ in range(s):
        out = out @ out
    return out


def _check_period(h: float) -> None:
    if not (0 < h <= MAX_PERIOD):
        raise DomainError(f"period {h} s outside (0, {MAX_PERIOD}]")


def discretize(model: PendulumModel, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization (phi, gamma) via the augmented exponential."""
    _check_period(h)
    n, m = model.a_mat.shape[0], model.b_vec.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = model.a_mat
    aug[:n, n:] = model.b_vec
    e = expm_series(aug * h)
    return e[:n, :n], e[:n, n:]


def hyperbolic_phi(omega0: float, h: float) -> np.ndarray:
    """Closed-form e^{Ah} for the pendulum matrix (A^2 = omega0^2 I)."""
    ch, sh = math.cosh(omega0 * h), math.sinh(omega0 * h)
    return np.array([[ch, sh / omega0], [omega0 * sh, ch]])


def hyperbolic_gamma(omega0: float, h: float) -> np.ndarray:
    ch, sh = math.cosh(omega0 * h), math.sinh(omega0 * h)
    return np.array([[ch - 1.0], [omega0 * sh]])


def _van_loan(a: np.ndarray, qc: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (e^{ah}, int_0^h e^{a's} qc e^{as} ds)."""
    n = a.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = -a.T
    big[:n, n:] = qc
    big[n:, n:] = a
    e = expm_series(big * h)
    ad = e[n:, n:]
    return ad, ad.T @ e[:n, n:]


def sampled_cost_weights(model: PendulumModel, h: float):
    """Discrete weights (Q1, Q12, Q2) equivalent to int (y^2 + u^2) dt under ZOH."""
    n = model.a_mat.shape[0]
    f = np.zeros((n + 1, n + 1))
    f[:n, :n] = model.a_mat
    f[:n, n:] = model.b_vec
    qc = np.zeros((n + 1, n + 1))
    qc[:n, :n] = model.c_vec.T @ model.c_vec
    qc[n, n] = 1.0
    _, q = _van_loan(f, qc, h)
    q = 0.5 * (q + q.T)
    return q[:n, :n], q[:n, n:], q[n:, n:]


def process_noise_cov(model: PendulumModel, h: float) -> np.ndarray:
    g = model.noise_direction[:, None]
    ad, q = _van_loan(model.a_mat.T, g @ g.T * model.v_variance, h)
    # _van_loan integrates e^{a's} qc e^{as}; with a = A^T that is e^{As} qc e^{A^T s}
    return 0.5 * (q + q.T)


def _riccati(phi, gam, q1, q12, q2, what, model, h):
    s = np.zeros_like(q1)
    for _ in range(RICCATI_MAX_ITER):
        gsg = gam.T @ s @ gam + q2
        cross = phi.T @ s @ gam + q12
        s_new = phi.T @ s @ phi + q1 - cross @ np.linalg.solve(gsg, cross.T)
        s_new = 0.5 * (s_new + s_new.T)
        if np.max(np.abs(s_new - s)) <= RICCATI_TOL:
            return s_new
        s = s_new
    raise DesignError(f"{what} Riccati did not converge for omega0={model.omega0}, h={h}")


@dataclass
class DiscreteController:
    period: float
    phi: np.ndarray
    gamma_d: np.ndarray
    k_gain: np.ndarray
    l_gain: np.ndarray
    c_vec: np.ndarray
    xhat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    s_control: np.ndarray = field(default=None, repr=False)
    p_estimate: np.ndarray = field(default=None, repr=False)

    def closed_loop_radius(self) -> float:
        a = self.phi - self.gamma_d @ self.k_gain
        return float(max(abs(np.linalg.eigvals(a))))

    def estimator_radius(self) -> float:
        a = self.phi - self.l_gain @ self.c_vec @ self.phi
        return float(max(abs(np.linalg.eigvals(a))))

    def with_state(self, xhat) -> "DiscreteController":
        return DiscreteController(self.period, self.phi, self.gamma_d, self.k_gain,
                                  self.l_gain, self.c_vec, np.array(xhat, dtype=float),
                                  self.s_control, self.p_estimate)


def design_lqg(model: PendulumModel, h: float) -> DiscreteController:
    """Sampled-data LQG controller for period h minimizing int (y^2 + u^2) dt.

    The continuous cost is lifted to exact discrete weights (with a state/input
    cross term); the Kalman filter uses the sampled process-noise covariance
    and the measurement variance.  Both Riccati equations are solved by
    fixed-point iteration.
    """
    _check_period(h)
    phi, gam = discretize(model, h)
    q1, q12, q2 = sampled_cost_weights(model, h)
    s = _riccati(phi, gam, q1, q12, q2, "control", model, h)
    k = np.linalg.solve(gam.T @ s @ gam + q2, gam.T @ s @ phi + q12.T)

    c = model.c_vec
    r1 = process_noise_cov(model, h)
    r2 = np.array([[model.e_variance]])
    # filter Riccati is the dual of the control one (phi^T, c^T, no cross term)
    p = _riccati(phi.T, c.T, r1, np.zeros((2, 1)), r2, "estimator", model, h)
    l_gain = p @ c.T @ np.linalg.inv(c @ p @ c.T + r2)
    return DiscreteController(h, phi, gam, k, l_gain, c, np.zeros(2), s, p)


@lru_cache(maxsize=512)
def _cached_design(omega0: float, h_key: float) -> DiscreteController:
    return design_lqg(pendulum_model(omega0), h_key)


def cached_design(omega0: float, h: float) -> DiscreteController:
    """Design lookup keyed by (omega0, h rounded to 0.1 ms); the state is fresh."""
    h_key = round(h, 4)
    return _cached_design(float(omega0), max(h_key, 1e-4)).with_state(np.zeros(2))


def controller_step(ctrl: DiscreteController, y: float) -> float:
    """Measurement update, u = -K xhat, time update; mutates ``ctrl.xhat``."""
    xh = ctrl.xhat
    innov = y - float(ctrl.c_vec[0] @ xh)
    xh = xh + ctrl.l_gain[:, 0] * innov
    u = -float(ctrl.k_gain[0] @ xh)
    ctrl.xhat = ctrl.phi @ xh + ctrl.gamma_d[:, 0] * u
    return u


def _deriv(x1, x2, u, w2):
    return x2, w2 * (x1 + u)


def step_plant(state, u: float, dt: float, model: PendulumModel, rng=None):
    """Advance one micro-step: RK4 under held u, then additive process noise.

    ``rng`` is a numpy Generator or None (noise disabled).
    """
    if dt > 1e-3 + 1e-15:
        raise DomainError(f"micro-step {dt} s exceeds 1 ms")
    x1, x2 = float(state[0]), float(state[1])
    w2 = model.omega0 * model.omega0
    k1 = _deriv(x1, x2, u, w2)
    k2 = _deriv(x1 + 0.5 * dt * k1[0], x2 + 0.5 * dt * k1[1], u, w2)
    k3 = _deriv(x1 + 0.5 * dt * k2[0], x2 + 0.5 * dt * k2[1], u, w2)
    k4 = _deriv(x1 + dt * k3[0], x2 + dt * k3[1], u, w2)
    x1 += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    x2 += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if rng is not None:
        d = model.noise_direction
        z = math.sqrt(model.v_variance * dt) * rng.standard_normal()
        x1 += d[0] * z
        x2 += d[1] * z
    if not (math.isfinite(x1) and math.isfinite(x2)):
        raise DomainError("plant state diverged to a non-finite value")
    return np.array([x1, x2])


def simulate_regulation(omega0: float, h: float, x0, duration: float,
                        micro_dt: float = 5e-4, xhat0=None):
    """Ideal sampled-data loop without noise or computation delay.

    The controller samples the angle every ``h`` and the input is held until
    the next sample.  Returns (times, states) on the sampling instants.
    """
    model = pendulum_model(omega0)
    ctrl = design_lqg(model, h)
    if xhat0 is not None:
        ctrl = ctrl.with_state(xhat0)
    n_sub = max(1, math.ceil(h / micro_dt - 1e-9))
    dt = h / n_sub
    x = np.array(x0, dtype=float)
    times, states = [0.0], [x.copy()]
    t = 0.0
    while t < duration - 1e-12:
        u = controller_step(ctrl, float(x[0]))
        for _ in range(n_sub):
            x = step_plant(x, u, dt, model)
        t += h
        times.append(t)
        states.append(x.copy())
    return np.array(times), np.array(states)
