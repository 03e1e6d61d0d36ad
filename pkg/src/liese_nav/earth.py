"""WGS-84 earth model: radii, gravity, transport rates, frame conversions."""

import numpy as np

from liese_nav.errors import PoleSingularity
from liese_nav.liegroup import skew

WGS84_A = 6378137.0
WGS84_E2 = 6.69437999014e-3
EARTH_RATE = 7.2921151467e-5
WGS84_MU = 3.986004418e14

# Somigliana coefficients (normal gravity on the ellipsoid surface)
GRAV_EQUATOR = 9.7803253359
SOMIGLIANA_K = 1.931852652458e-3

POLE_MARGIN = 1e-6


def check_latitude(lat):
    if abs(lat) > np.pi / 2 - POLE_MARGIN:
        raise PoleSingularity(f"latitude {lat} too close to a pole")


def radii(lat):
    """Meridian and prime-vertical curvature radii (R_M, R_N)."""
    s2 = np.sin(lat) ** 2
    w = np.sqrt(1.0 - WGS84_E2 * s2)
    rn = WGS84_A / w
    rm = WGS84_A * (1.0 - WGS84_E2) / w**3
    return rm, rn


def radii_derivatives(lat):
    """d(R_M)/dlat and d(R_N)/dlat."""
    s, c = np.sin(lat), np.cos(lat)
    w2 = 1.0 - WGS84_E2 * s**2
    drn = WGS84_A * WGS84_E2 * s * c * w2**-1.5
    drm = 3.0 * WGS84_A * (1.0 - WGS84_E2) * WGS84_E2 * s * c * w2**-2.5
    return drm, drn


def gravity_n(lat, h):
    """Plumb-line gravity in NED axes, (0, 0, g_D).

    Somigliana normal gravity on the ellipsoid, attenuated with height by
    (R/(R+h))^2 where R is the Gaussian mean curvature radius, so that
    dg/dh = -2 g / (R + h) exactly.
    """
    s2 = np.sin(lat) ** 2
    g0 = GRAV_EQUATOR * (1.0 + SOMIGLIANA_K * s2) / np.sqrt(1.0 - WGS84_E2 * s2)
    rm, rn = radii(lat)
    rbar = np.sqrt(rm * rn)
    g = g0 * (rbar / (rbar + h)) ** 2
    return np.array([0.0, 0.0, g])


def gravity_gradient_down(lat, h):
    """Coefficient k with d(g_D) = k * d(r_D); equals 2 g / (R + h)."""
    rm, rn = radii(lat)
    rbar = np.sqrt(rm * rn)
    return 2.0 * gravity_n(lat, h)[2] / (rbar + h)


def position_vector_n(lat, h):
    """Earth-center to body vector resolved in the local NED frame."""
    s, c = np.sin(lat), np.cos(lat)
    _, rn = radii(lat)
    return np.array(
        [-WGS84_E2 * rn * s * c, 0.0, -(rn * (1.0 - WGS84_E2 * s**2) + h)]
    )


def position_vector_gradient_n(lat, h):
    """d(r_eb^n) / d(dr) for a local-level displacement dr = (dN, dE, dD).

    The earth-center vector depends on latitude and height only, with
    d(lat) = dN/(R_M+h) and d(h) = -dD; the east column is zero.
    """
    s, c = np.sin(lat), np.cos(lat)
    rm, rn = radii(lat)
    _, drn = radii_derivatives(lat)
    drho_dlat = np.array(
        [
            -WGS84_E2 * (drn * s * c + rn * (c**2 - s**2)),
            0.0,
            -drn * (1.0 - WGS84_E2 * s**2) + 2.0 * WGS84_E2 * rn * s * c,
        ]
    )
    out = np.zeros((3, 3))
    out[:, 0] = drho_dlat / (rm + h)
    out[2, 2] = 1.0
    return out


def gravitation_n(lat, h):
    """Gravitational acceleration (gravity plus centrifugal term) in NED."""
    omega_ie = earth_rate_n(lat)
    return gravity_n(lat, h) + skew(omega_ie) @ skew(omega_ie) @ position_vector_n(lat, h)


def earth_rate_n(lat):
    return np.array([EARTH_RATE * np.cos(lat), 0.0, -EARTH_RATE * np.sin(lat)])


def transport_rate_n(lat, h, vn):
    """omega_en^n for ground velocity vn = (vN, vE, vD)."""
    rm, rn = radii(lat)
    return np.array(
        [
            vn[1] / (rn + h),
            -vn[0] / (rm + h),
            -vn[1] * np.tan(lat) / (rn + h),
        ]
    )


def n_rv(lat, h):
    """Maps NED velocity to geodetic rates: (lat_dot, lon_dot, h_dot) = N @ vn."""
    check_latitude(lat)
    rm, rn = radii(lat)
    return np.diag([1.0 / (rm + h), 1.0 / ((rn + h) * np.cos(lat)), -1.0])


def m1_matrix(lat, h):
    """d(omega_ie^n) / d(r_eb^n) with d(lat) = d(r_N)/(R_M+h)."""
    rm, _ = radii(lat)
    out = np.zeros((3, 3))
    out[0, 0] = -EARTH_RATE * np.sin(lat) / (rm + h)
    out[2, 0] = -EARTH_RATE * np.cos(lat) / (rm + h)
    return out


def m2_matrix(lat, h):
    """d(omega_en^n) / d(v^n)."""
    rm, rn = radii(lat)
    return np.array(
        [
            [0.0, 1.0 / (rn + h), 0.0],
            [-1.0 / (rm + h), 0.0, 0.0],
            [0.0, -np.tan(lat) / (rn + h), 0.0],
        ]
    )


def m3_matrix(lat, h, vn):
    """d(omega_en^n) / d(r_eb^n) at fixed velocity.

    Obtained by direct differentiation of omega_en^n(lat, h, v), including
    the latitude dependence of the curvature radii; d(lat) = d(r_N)/(R_M+h)
    and d(h) = -d(r_D).
    """
    rm, rn = radii(lat)
    drm, drn = radii_derivatives(lat)
    t, c = np.tan(lat), np.cos(lat)
    vN, vE = vn[0], vn[1]
    out = np.zeros((3, 3))
    # column 0: sensitivity to r_N through latitude
    out[0, 0] = -vE * drn / (rn + h) ** 2 / (rm + h)
    out[1, 0] = vN * drm / (rm + h) ** 2 / (rm + h)
    out[2, 0] = -vE * (1.0 / (c**2 * (rn + h)) - t * drn / (rn + h) ** 2) / (rm + h)
    # column 2: sensitivity to r_D = -h
    out[0, 2] = vE / (rn + h) ** 2
    out[1, 2] = -vN / (rm + h) ** 2
    out[2, 2] = -vE * t / (rn + h) ** 2
    return out


def llh_to_ecef(lat, lon, h):
    s, c = np.sin(lat), np.cos(lat)
    _, rn = radii(lat)
    return np.array(
        [
            (rn + h) * c * np.cos(lon),
            (rn + h) * c * np.sin(lon),
            (rn * (1.0 - WGS84_E2) + h) * s,
        ]
    )


def ecef_to_llh(r):
    """Iterative ECEF to geodetic conversion (converges to <1e-9 m)."""
    x, y, z = r
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    lat = np.arctan2(z, p * (1.0 - WGS84_E2))
    h = 0.0
    for _ in range(12):
        _, rn = radii(lat)
        new_lat = np.arctan2(z + WGS84_E2 * rn * np.sin(lat), p)
        converged = abs(new_lat - lat) < 1e-15
        lat = new_lat
        h = (
            p / np.cos(lat) - rn
            if abs(lat) < 1.3
            else z / np.sin(lat) - rn * (1.0 - WGS84_E2)
        )
        if converged:
            break
    return lat, lon, h


def dcm_ecef_to_ned(lat, lon):
    """C_e^n."""
    s, c = np.sin(lat), np.cos(lat)
    sl, cl = np.sin(lon), np.cos(lon)
    return np.array(
        [
            [-s * cl, -s * sl, c],
            [-sl, cl, 0.0],
            [-c * cl, -c * sl, -s],
        ]
    )


def earth_rate_e():
    return np.array([0.0, 0.0, EARTH_RATE])


def gravity_e(r):
    """Plumb-line gravity vector in ECEF, consistent with gravity_n."""
    lat, lon, h = ecef_to_llh(np.asarray(r, dtype=float))
    return dcm_ecef_to_ned(lat, lon).T @ gravity_n(lat, h)


def gravitation_e(r):
    """Gravitational acceleration in ECEF: g + (omega x)(omega x) r."""
    omega = earth_rate_e()
    return gravity_e(r) + skew(omega) @ skew(omega) @ np.asarray(r, dtype=float)
