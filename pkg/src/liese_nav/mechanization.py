"""Strapdown mechanization: NED (geodetic) and ECEF forms.

Continuous-time derivative functions plus RK4/Euler stepping with
piecewise-constant IMU inputs. The gravity model can be overridden through
``gravity_fn`` (test hook; e.g. zero gravity, or a frozen model for
linearization checks).
"""

from dataclasses import dataclass

import numpy as np

from liese_nav import earth
from liese_nav.liegroup import skew

ORTHO_CHECK_INTERVAL = 100
ORTHO_TOL = 1e-9


@dataclass
class ImuSample:
    t: float
    gyro: np.ndarray  # omega_ib^b, rad/s
    accel: np.ndarray  # f_ib^b, m/s^2


@dataclass
class NavStateNED:
    c_bn: np.ndarray  # body-to-NED rotation
    v_n: np.ndarray  # v_eb^n
    geo: np.ndarray  # lat, lon, h

    def copy(self):
        return NavStateNED(self.c_bn.copy(), self.v_n.copy(), self.geo.copy())


@dataclass
class NavStateECEF:
    c_be: np.ndarray  # body-to-ECEF rotation
    v: np.ndarray  # v_eb^e ('earth') or v_ib^e ('inertial')
    r: np.ndarray  # r_eb^e

    def copy(self):
        return NavStateECEF(self.c_be.copy(), self.v.copy(), self.r.copy())


def ned_derivative(state, gyro, accel, gravity_fn=None):
    """Time derivatives of (C_b^n, v_eb^n, geo)."""
    lat, _, h = state.geo
    earth.check_latitude(lat)
    w_ie = earth.earth_rate_n(lat)
    w_en = earth.transport_rate_n(lat, h, state.v_n)
    w_in = w_ie + w_en
    g = (gravity_fn or earth.gravity_n)(lat, h)
    c_dot = state.c_bn @ skew(gyro) - skew(w_in) @ state.c_bn
    v_dot = state.c_bn @ accel - np.cross(2.0 * w_ie + w_en, state.v_n) + g
    geo_dot = earth.n_rv(lat, h) @ state.v_n
    return c_dot, v_dot, geo_dot


def ecef_derivative(state, gyro, accel, convention="earth", gravity_fn=None):
    """Time derivatives of (C_b^e, v, r) for either velocity convention.

    'earth' uses v = v_eb^e; 'inertial' uses v = v_ib^e = v_eb^e + w_ie x r
    (the same equations also propagate the earth-rate auxiliary velocity).
    """
    w_ie = earth.earth_rate_e()
    c_dot = state.c_be @ skew(gyro) - skew(w_ie) @ state.c_be
    if convention == "earth":
        g = (gravity_fn or earth.gravity_e)(state.r)
        v_dot = state.c_be @ accel - 2.0 * np.cross(w_ie, state.v) + g
        r_dot = state.v.copy()
    elif convention == "inertial":
        big_g = (gravity_fn or earth.gravitation_e)(state.r)
        v_dot = state.c_be @ accel - np.cross(w_ie, state.v) + big_g
        r_dot = -np.cross(w_ie, state.r) + state.v
    else:
        raise ValueError(f"unknown velocity convention {convention!r}")
    return c_dot, v_dot, r_dot


def _rk4(state, gyro, accel, dt, deriv):
    k1 = deriv(state, gyro, accel)
    s2 = _advance(state, k1, 0.5 * dt)
    k2 = deriv(s2, gyro, accel)
    s3 = _advance(state, k2, 0.5 * dt)
    k3 = deriv(s3, gyro, accel)
    s4 = _advance(state, k3, dt)
    k4 = deriv(s4, gyro, accel)
    combined = tuple(
        (a + 2.0 * b + 2.0 * c + d) / 6.0 for a, b, c, d in zip(k1, k2, k3, k4)
    )
    return _advance(state, combined, dt)


def _advance(state, deriv, dt):
    out = state.copy()
    fields = list(vars(out))
    for name, d in zip(fields, deriv):
        setattr(out, name, getattr(state, name) + dt * d)
    return out


def ned_step(state, imu, dt, method="rk4", gravity_fn=None):
    deriv = lambda s, w, f: ned_derivative(s, w, f, gravity_fn=gravity_fn)
    if method == "rk4":
        return _rk4(state, imu.gyro, imu.accel, dt, deriv)
    if method == "euler":
        return _advance(state, deriv(state, imu.gyro, imu.accel), dt)
    raise ValueError(f"unknown integrator {method!r}")


def ecef_step(state, imu, dt, method="rk4", convention="earth", gravity_fn=None):
    deriv = lambda s, w, f: ecef_derivative(
        s, w, f, convention=convention, gravity_fn=gravity_fn
    )
    if method == "rk4":
        return _rk4(state, imu.gyro, imu.accel, dt, deriv)
    if method == "euler":
        return _advance(state, deriv(state, imu.gyro, imu.accel), dt)
    raise ValueError(f"unknown integrator {method!r}")


def orthonormality_error(c):
    return np.linalg.norm(c.T @ c - np.eye(3))


def orthonormalize(c):
    """Project onto SO(3) (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(c)
    out = u @ vt
    if np.linalg.det(out) < 0:
        out = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return out


def maybe_orthonormalize(c, step_index):
    """Re-orthonormalize on schedule or when drift exceeds tolerance."""
    if step_index % ORTHO_CHECK_INTERVAL == 0 or orthonormality_error(c) > ORTHO_TOL:
        return orthonormalize(c)
    return c


def ned_to_ecef_state(state):
    lat, lon, h = state.geo
    c_ne = earth.dcm_ecef_to_ned(lat, lon).T
    return NavStateECEF(
        c_ne @ state.c_bn, c_ne @ state.v_n, earth.llh_to_ecef(lat, lon, h)
    )


def ecef_to_ned_state(state):
    lat, lon, h = earth.ecef_to_llh(state.r)
    c_en = earth.dcm_ecef_to_ned(lat, lon)
    return NavStateNED(
        c_en @ state.c_be, c_en @ state.v, np.array([lat, lon, h])
    )
