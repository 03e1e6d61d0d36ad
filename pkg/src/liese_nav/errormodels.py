"""Error-state dynamics (F, G) and measurement models for every variant.

The 15-dim error state is ordered (phi, rho_v, rho_r, db_g, db_a); the
12-dim noise vector is (w_g, w_a, w_bg, w_ba). Bias errors follow the
convention db = b_true - b_hat for every variant, so the rate error seen by
the filter mechanization is db_g + w_g.

Frames:
  NED            geodetic position, ground velocity v_eb^n
  NED_Aux        auxiliary velocity vbar = v_eb^n + w_ie^n x r_eb^n
  ECEF           earth-relative velocity v_eb^e
  ECEF_Inertial  inertial velocity v_ib^e = v_eb^e + w_ie^e x r_eb^e
  ECEF_Aux       auxiliary velocity (numerically equal to v_ib^e)

Error definitions (X true, Xt estimate):
  RightTrue  eta = X Xt^-1        RightEst  eta = Xt X^-1
  LeftTrue   eta = X^-1 Xt        LeftEst   eta = Xt^-1 X
"""

from dataclasses import dataclass

import numpy as np

from liese_nav import earth
from liese_nav.errors import IncompatibleMode, UnsupportedVariant
from liese_nav.liegroup import skew
from liese_nav.mechanization import NavStateECEF, NavStateNED

PHI = slice(0, 3)
RV = slice(3, 6)
RR = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
WG = slice(0, 3)
WA = slice(3, 6)
WBG = slice(6, 9)
WBA = slice(9, 12)

FRAMES = ("NED", "NED_Aux", "ECEF", "ECEF_Inertial", "ECEF_Aux")
ERROR_DEFS = ("RightTrue", "RightEst", "LeftTrue", "LeftEst")

_SUPPORTED = {
    "NED": {"RightTrue", "RightEst", "LeftTrue", "LeftEst"},
    "NED_Aux": {"LeftEst", "RightTrue"},
    "ECEF": {"LeftTrue", "LeftEst", "RightEst", "RightTrue"},
    "ECEF_Inertial": {"LeftTrue", "LeftEst", "RightEst"},
    "ECEF_Aux": {"RightTrue"},
}
_MEMS_FRAMES = {"NED_Aux", "ECEF"}


@dataclass(frozen=True)
class Variant:
    frame: str
    error_def: str
    mems_simplified: bool = False

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise UnsupportedVariant(f"unknown frame {self.frame!r}")
        if self.error_def not in ERROR_DEFS:
            raise UnsupportedVariant(f"unknown error definition {self.error_def!r}")
        if self.error_def not in _SUPPORTED[self.frame]:
            raise UnsupportedVariant(
                f"{self.frame} does not support {self.error_def}"
            )
        if self.mems_simplified and self.frame not in _MEMS_FRAMES:
            raise UnsupportedVariant(
                f"mems_simplified is not available for frame {self.frame}"
            )

    @property
    def is_right(self):
        return self.error_def.startswith("Right")

    @property
    def name(self):
        suffix = "+mems" if self.mems_simplified else ""
        return f"{self.frame}/{self.error_def}{suffix}"


def supported_variants(include_mems=True):
    out = []
    for frame, defs in _SUPPORTED.items():
        for ed in sorted(defs):
            out.append(Variant(frame, ed))
            if include_mems and frame in _MEMS_FRAMES:
                out.append(Variant(frame, ed, mems_simplified=True))
    return out


def _bias_rows(f, g, tau_g, tau_a):
    f[BG, BG] = (0.0 if tau_g is None else -1.0 / tau_g) * np.eye(3)
    f[BA, BA] = (0.0 if tau_a is None else -1.0 / tau_a) * np.eye(3)
    g[BG, WBG] = np.eye(3)
    g[BA, WBA] = np.eye(3)


def error_dynamics(variant, nominal, gyro, accel, tau_g=None, tau_a=None):
    """Continuous-time (F, G) for the given variant at a nominal state.

    ``nominal`` is a NavStateNED for the NED frames and a NavStateECEF in
    the earth-relative velocity convention for the ECEF frames. ``gyro`` and
    ``accel`` are the bias-corrected IMU rates the filter mechanizes with.
    """
    f = np.zeros((15, 15))
    g = np.zeros((15, 12))
    _bias_rows(f, g, tau_g, tau_a)
    if variant.frame == "NED":
        _ned_blocks(variant, nominal, gyro, accel, f, g)
    elif variant.frame == "NED_Aux":
        _ned_aux_blocks(variant, nominal, gyro, accel, f, g)
    elif variant.frame == "ECEF":
        _ecef_blocks(variant, nominal, gyro, accel, f, g)
    else:  # ECEF_Inertial / ECEF_Aux
        _ecef_inertial_blocks(variant, nominal, gyro, accel, f, g)
    return f, g


def _ned_blocks(variant, nom, gyro, accel, f, g):
    lat, _, h = nom.geo
    c = nom.c_bn
    v = nom.v_n
    r_n = earth.position_vector_n(lat, h)
    w_ie = earth.earth_rate_n(lat)
    w_en = earth.transport_rate_n(lat, h, v)
    w_in = w_ie + w_en
    m1 = earth.m1_matrix(lat, h)
    m2 = earth.m2_matrix(lat, h)
    m3 = earth.m3_matrix(lat, h, v)
    grav = earth.gravity_n(lat, h)
    k_g = np.zeros((3, 3))
    k_g[2, 2] = earth.gravity_gradient_down(lat, h)

    if variant.is_right:
        # world-frame errors; RightTrue and RightEst share all non-bias
        # blocks and differ in the sign of every bias/noise column
        sign = -1.0 if variant.error_def == "RightTrue" else 1.0
        f[PHI, PHI] = -skew(w_in) + m2 @ skew(v) + (m1 + m3) @ skew(r_n)
        f[PHI, RV] = -m2
        f[PHI, RR] = -(m1 + m3)
        f[PHI, BG] = sign * c
        f[RV, PHI] = (
            -skew(v) @ m1 @ skew(r_n)
            + skew(v) @ skew(w_ie)
            + skew(grav)
            - k_g @ skew(r_n)
        )
        f[RV, RV] = -skew(2.0 * w_ie + w_en)
        f[RV, RR] = skew(v) @ m1 + k_g
        f[RV, BG] = sign * skew(v) @ c
        f[RV, BA] = sign * c
        # position row: exact Jacobian in the local-chart coordinates the
        # filter corrects in (position error = estimate-frame-resolved ECEF
        # displacement); m2 doubles as the displacement-to-frame-angle map
        f[RR, PHI] = (
            (skew(v) @ m2 + skew(w_en)) @ skew(r_n)
            - skew(np.cross(w_en, r_n))
            + skew(r_n) @ f[PHI, PHI]
        )
        f[RR, RV] = np.eye(3) - skew(r_n) @ m2
        f[RR, RR] = -skew(v) @ m2 - skew(w_en) + skew(r_n) @ f[PHI, RR]
        f[RR, BG] = sign * skew(r_n) @ c
        g[PHI, WG] = sign * c
        g[RV, WG] = sign * skew(v) @ c
        g[RV, WA] = sign * c
        g[RR, WG] = sign * skew(r_n) @ c
    else:
        # body-frame errors; LeftTrue and LeftEst share all non-bias blocks
        sign = 1.0 if variant.error_def == "LeftTrue" else -1.0
        ct = c.T
        sandwich = lambda x: ct @ x @ c
        f[PHI, PHI] = -skew(gyro)
        f[PHI, RV] = -sandwich(m2)
        f[PHI, RR] = -sandwich(m1 + m3)
        f[PHI, BG] = sign * np.eye(3)
        f[RV, PHI] = -skew(accel)
        f[RV, RV] = sandwich(skew(v) @ m2) - skew(gyro) - skew(ct @ w_ie)
        f[RV, RR] = sandwich(skew(v) @ (2.0 * m1 + m3))
        f[RV, BA] = sign * np.eye(3)
        # position row: exact Jacobian in the local-chart coordinates (the
        # body-resolved chart displacement integrates the velocity error
        # one-for-one; no curvature coupling survives)
        f[RR, RV] = np.eye(3)
        f[RR, RR] = -skew(gyro) + sandwich(skew(w_ie) - skew(v) @ m2)
        g[PHI, WG] = sign * np.eye(3)
        g[RV, WA] = sign * np.eye(3)


def _ned_aux_blocks(variant, nom, gyro, accel, f, g):
    lat, _, h = nom.geo
    c = nom.c_bn
    r_n = earth.position_vector_n(lat, h)
    w_ie = earth.earth_rate_n(lat)
    w_en = earth.transport_rate_n(lat, h, nom.v_n)
    w_in = w_ie + w_en
    vbar = nom.v_n + np.cross(w_ie, r_n)
    big_g = earth.gravitation_n(lat, h)
    if not variant.mems_simplified:
        m1 = earth.m1_matrix(lat, h)
        m2 = earth.m2_matrix(lat, h)
        m3 = earth.m3_matrix(lat, h, nom.v_n)
        # b = d(w_ie x r_eb^n)/d(dr) in local-chart coordinates; the ground
        # velocity recovered from the auxiliary one inherits it, so the
        # transport-rate sensitivity k1 carries -m2 @ b
        b = -skew(r_n) @ m1 + skew(w_ie) @ earth.position_vector_gradient_n(lat, h)
        k1 = m1 + m3 - m2 @ b
        k2 = m2

    if variant.error_def == "LeftEst":
        f[PHI, PHI] = -skew(gyro)
        f[PHI, BG] = -np.eye(3)
        f[RV, PHI] = -skew(accel)
        f[RV, RV] = -skew(gyro)
        f[RV, BA] = -np.eye(3)
        f[RR, RV] = np.eye(3)
        f[RR, RR] = -skew(gyro)
        g[PHI, WG] = -np.eye(3)
        g[RV, WA] = -np.eye(3)
        if not variant.mems_simplified:
            ct = c.T
            sandwich = lambda x: ct @ x @ c
            f[PHI, RV] += -sandwich(k2)
            f[PHI, RR] += -sandwich(k1)
            f[RV, RV] += sandwich(skew(vbar) @ k2)
            f[RV, RR] += sandwich(skew(vbar) @ k1)
            # chart-coordinate position row: velocity error integrates
            # one-for-one (see the plain-frame left block)
            f[RR, RR] += sandwich(skew(w_ie) - b - skew(nom.v_n) @ m2)
    else:  # RightTrue
        f[PHI, PHI] = -skew(w_in)
        f[PHI, BG] = -c
        f[RV, PHI] = skew(big_g)
        f[RV, RV] = -skew(w_in)
        f[RV, BG] = -skew(vbar) @ c
        f[RV, BA] = -c
        f[RR, RV] = np.eye(3)
        f[RR, RR] = -skew(w_in)
        f[RR, BG] = -skew(r_n) @ c
        g[PHI, WG] = -c
        g[RV, WG] = -skew(vbar) @ c
        g[RV, WA] = -c
        g[RR, WG] = -skew(r_n) @ c
        if not variant.mems_simplified:
            # transport-rate errors couple into the attitude row only
            q1 = k1 @ skew(r_n) + k2 @ skew(vbar)
            f[PHI, PHI] += q1
            f[PHI, RV] += -k2
            f[PHI, RR] += -k1
            # chart-coordinate position row: the frame-angle and
            # earth-rate-velocity sensitivities of the chart displacement
            # add earth-radius lever couplings (zero under the simplified
            # model by the Jacobi identity)
            bracket = b + skew(nom.v_n) @ m2 + skew(w_en)
            f[RR, PHI] = (
                bracket @ skew(r_n)
                - skew(np.cross(w_in, r_n))
                + skew(r_n) @ f[PHI, PHI]
            )
            f[RR, RV] = np.eye(3) + skew(r_n) @ f[PHI, RV]
            f[RR, RR] = -bracket + skew(r_n) @ f[PHI, RR]


def _ecef_blocks(variant, nom, gyro, accel, f, g):
    c = nom.c_be
    v = nom.v
    r = nom.r
    w_ie = earth.earth_rate_e()
    if variant.error_def in ("LeftTrue", "LeftEst"):
        sign = 1.0 if variant.error_def == "LeftTrue" else -1.0
        w_ie_b = c.T @ w_ie
        f[PHI, PHI] = -skew(gyro)
        f[PHI, BG] = sign * np.eye(3)
        f[RV, PHI] = -skew(accel)
        f[RV, RV] = -skew(w_ie_b) - skew(gyro)
        f[RV, BA] = sign * np.eye(3)
        f[RR, RV] = np.eye(3)
        f[RR, RR] = skew(w_ie_b) - skew(gyro)
        g[PHI, WG] = sign * np.eye(3)
        g[RV, WA] = sign * np.eye(3)
    else:
        sign = 1.0 if variant.error_def == "RightEst" else -1.0
        grav = earth.gravity_e(r)
        f[PHI, PHI] = -skew(w_ie)
        f[PHI, BG] = sign * c
        f[RV, PHI] = skew(v) @ skew(w_ie) + skew(grav)
        f[RV, RV] = -2.0 * skew(w_ie)
        f[RV, BG] = sign * skew(v) @ c
        f[RV, BA] = sign * c
        f[RR, PHI] = -skew(r) @ skew(w_ie)
        f[RR, RV] = np.eye(3)
        f[RR, BG] = sign * skew(r) @ c
        g[PHI, WG] = sign * c
        g[RV, WG] = sign * skew(v) @ c
        g[RV, WA] = sign * c
        g[RR, WG] = sign * skew(r) @ c


def _ecef_inertial_blocks(variant, nom, gyro, accel, f, g):
    c = nom.c_be
    w_ie = earth.earth_rate_e()
    r = nom.r
    v_i = nom.v + np.cross(w_ie, r)
    if variant.error_def in ("LeftTrue", "LeftEst"):
        sign = 1.0 if variant.error_def == "LeftTrue" else -1.0
        f[PHI, PHI] = -skew(gyro)
        f[PHI, BG] = sign * np.eye(3)
        f[RV, PHI] = -skew(accel)
        f[RV, RV] = -skew(gyro)
        f[RV, BA] = sign * np.eye(3)
        f[RR, RV] = np.eye(3)
        f[RR, RR] = -skew(gyro)
        g[PHI, WG] = sign * np.eye(3)
        g[RV, WA] = sign * np.eye(3)
    else:
        # RightEst (ECEF_Inertial) or RightTrue (ECEF_Aux): identical
        # non-bias blocks, opposite bias/noise column signs
        sign = 1.0 if variant.error_def == "RightEst" else -1.0
        big_g = earth.gravitation_e(r)
        f[PHI, PHI] = -skew(w_ie)
        f[PHI, BG] = sign * c
        f[RV, PHI] = skew(big_g)
        f[RV, RV] = -skew(w_ie)
        f[RV, BG] = sign * skew(v_i) @ c
        f[RV, BA] = sign * c
        f[RR, RV] = np.eye(3)
        f[RR, RR] = -skew(w_ie)
        f[RR, BG] = sign * skew(r) @ c
        g[PHI, WG] = sign * c
        g[RV, WG] = sign * skew(v_i) @ c
        g[RV, WA] = sign * c
        g[RR, WG] = sign * skew(r) @ c


# ---------------------------------------------------------------------------
# measurement models (GNSS position with body lever arm)
# ---------------------------------------------------------------------------


def _nav_frame_quantities(variant, nominal):
    if variant.frame in ("NED", "NED_Aux"):
        lat, _, h = nominal.geo
        return nominal.c_bn, earth.position_vector_n(lat, h)
    return nominal.c_be, nominal.r


def measurement_se23(variant, nominal, lever_arm):
    """Navigation-frame position measurement matrix H (3x15).

    Innovation convention: z = measured - predicted antenna position,
    expressed in the navigation frame (NED chart axes or ECEF).
    """
    c, r = _nav_frame_quantities(variant, nominal)
    h = np.zeros((3, 15))
    if variant.error_def == "LeftEst":
        h[:, PHI] = -c @ skew(lever_arm)
        h[:, RR] = c
    elif variant.error_def == "LeftTrue":
        h[:, PHI] = c @ skew(lever_arm)
        h[:, RR] = -c
    elif variant.error_def == "RightTrue":
        h[:, PHI] = -skew(r + c @ lever_arm)
        h[:, RR] = np.eye(3)
    else:  # RightEst
        h[:, PHI] = skew(r + c @ lever_arm)
        h[:, RR] = -np.eye(3)
    return h


def measurement_left_invariant(variant, nominal, lever_arm):
    """Body-frame (left-invariant) measurement model.

    Returns (H, M) with innovation z_b = C^T z_nav and R_body = M R M^T.
    Only defined for the LeftEst error definition.
    """
    if variant.error_def != "LeftEst":
        raise IncompatibleMode(
            "left-invariant measurement requires the LeftEst error definition"
        )
    c, _ = _nav_frame_quantities(variant, nominal)
    h = np.zeros((3, 15))
    h[:, PHI] = -skew(lever_arm)
    h[:, RR] = np.eye(3)
    return h, c.T


def measurement_right(variant, nominal, lever_arm):
    """World-frame measurement model for right-invariant error definitions."""
    if not variant.is_right:
        raise IncompatibleMode(
            "right measurement model requires a Right* error definition"
        )
    return measurement_se23(variant, nominal, lever_arm)


# ---------------------------------------------------------------------------
# group-affine form of the deterministic dynamics
# ---------------------------------------------------------------------------


def group_affine_dynamics(variant, nominal, gyro, accel):
    """Return (W1, W2) with d/dt X = X W1 + W2 X at the nominal.

    State-dependent entries of W2 are frozen at the nominal, which is what
    makes the flow group-affine.
    """
    w1 = np.zeros((5, 5))
    w1[:3, :3] = skew(gyro)
    w1[:3, 3] = accel
    w2 = np.zeros((5, 5))
    if variant.frame in ("NED", "NED_Aux"):
        lat, _, h = nominal.geo
        v = nominal.v_n
        r_n = earth.position_vector_n(lat, h)
        w_ie = earth.earth_rate_n(lat)
        w_in = w_ie + earth.transport_rate_n(lat, h, v)
        w2[:3, :3] = -skew(w_in)
        if variant.frame == "NED":
            w2[:3, 3] = earth.gravity_n(lat, h) - np.cross(w_ie, v)
            w2[:3, 4] = v + np.cross(w_ie, r_n)
        else:
            w2[:3, 3] = earth.gravitation_n(lat, h)
            w2[:3, 4] = v + np.cross(w_ie, r_n)
    else:
        v = nominal.v
        r = nominal.r
        w_ie = earth.earth_rate_e()
        w2[:3, :3] = -skew(w_ie)
        if variant.frame == "ECEF":
            w2[:3, 3] = earth.gravity_e(r) - np.cross(w_ie, v)
            w2[:3, 4] = v + np.cross(w_ie, r)
        else:
            w2[:3, 3] = earth.gravitation_e(r)
            w2[:3, 4] = v + np.cross(w_ie, r)
    return w1, w2
