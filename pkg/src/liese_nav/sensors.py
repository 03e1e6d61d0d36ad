"""IMU error models: white noise plus Gauss-Markov or random-constant biases.

Continuous-time model::

    gyro_meas  = gyro  + b_g + w_g      w_g ~ N(0, sigma_g^2) (PSD)
    accel_meas = accel + b_a + w_a      w_a ~ N(0, sigma_a^2) (PSD)
    b_dot = -b / tau + w_b              (Gauss-Markov, tau finite)
    b_dot = 0                           (random constant, tau = None)

White-noise densities are per sqrt(Hz); sampling at interval dt scales the
per-sample standard deviation by 1/sqrt(dt).
"""

from dataclasses import dataclass, field

import numpy as np

from liese_nav.mechanization import ImuSample


@dataclass
class ImuNoiseParams:
    sigma_g: float = 0.0  # rad/s/sqrt(Hz)
    sigma_a: float = 0.0  # m/s^2/sqrt(Hz)
    sigma_bg: float = 0.0  # rad/s/sqrt(s), bias driving noise
    sigma_ba: float = 0.0  # m/s^2/sqrt(s)
    tau_g: float | None = 3600.0  # s; None = random constant
    tau_a: float | None = 3600.0

    def q_diag(self):
        """Continuous-time PSD diagonal for (w_g, w_a, w_bg, w_ba)."""
        return np.concatenate(
            [
                np.full(3, self.sigma_g**2),
                np.full(3, self.sigma_a**2),
                np.full(3, self.sigma_bg**2),
                np.full(3, self.sigma_ba**2),
            ]
        )


@dataclass
class BiasState:
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self):
        return BiasState(self.gyro.copy(), self.accel.copy())


def bias_decay_rate(tau):
    """Diagonal entry of the bias error dynamics: -1/tau (GM) or 0 (RC)."""
    return 0.0 if tau is None else -1.0 / tau


def discretize_bias(tau, sigma_b, dt):
    """Exact discretization of one bias axis.

    Returns (phi, q) with b_{k+1} = phi * b_k + w, w ~ N(0, q).
    """
    if tau is None:
        return 1.0, sigma_b**2 * dt
    phi = np.exp(-dt / tau)
    q = 0.5 * sigma_b**2 * tau * (1.0 - np.exp(-2.0 * dt / tau))
    return phi, q


def simulate_biases(params, n_steps, dt, rng, initial=None):
    """Sample a bias trajectory with the exact discrete transition."""
    state = initial.copy() if initial is not None else BiasState()
    phi_g, q_g = discretize_bias(params.tau_g, params.sigma_bg, dt)
    phi_a, q_a = discretize_bias(params.tau_a, params.sigma_ba, dt)
    out = []
    for _ in range(n_steps):
        out.append(state.copy())
        state = BiasState(
            phi_g * state.gyro + np.sqrt(q_g) * rng.standard_normal(3),
            phi_a * state.accel + np.sqrt(q_a) * rng.standard_normal(3),
        )
    return out


def corrupt(samples, biases, params, dt, rng):
    """Apply bias and white noise to a clean IMU stream."""
    sg = params.sigma_g / np.sqrt(dt)
    sa = params.sigma_a / np.sqrt(dt)
    out = []
    for s, b in zip(samples, biases):
        out.append(
            ImuSample(
                s.t,
                s.gyro + b.gyro + sg * rng.standard_normal(3),
                s.accel + b.accel + sa * rng.standard_normal(3),
            )
        )
    return out
