"""Independent finite-difference oracles for the error-state dynamics.

The linearized matrices are checked against numerical differentiation of the
exact nonlinear flows: a perturbed "true" state is constructed from the
estimate by the variant's retraction, both states are propagated through the
full mechanization, and the time derivative of the group-log error is
compared column by column against F.

Conventions baked into the oracle (the same ones the analytic matrices use):

* For the NED-frame variants the error coordinates are the full-rank local
  chart the filter corrects in: attitude and velocity compare the literal
  own-frame triples, while the position component of the group error is the
  estimate-frame-resolved ECEF displacement between the two geodetic
  positions. Perturbed "true" states realize an error by assigning the
  group slots and carrying the position displacement to the geodetic state
  through the same chart, so every error direction (including east) is
  realizable and retraction followed by extraction is the identity.
* Per-variant gravity treatment during the flows: the NED right-error
  matrices carry an explicit vertical gravity-gradient coupling, so their
  flows use an inverse-square height model with latitude frozen at the
  nominal; every other variant linearizes around a locally constant gravity
  (or gravitation) vector, so their flows freeze that vector.
* The simplified auxiliary-velocity model additionally freezes the craft
  rate and gravitation, which makes its flow exactly linear in the embedded
  group element.
"""

from dataclasses import dataclass

import numpy as np

from liese_nav import earth, mechanization as mech
from liese_nav.liegroup import GroupElement, exp_se23, log_se23, skew
from liese_nav.mechanization import ImuSample, NavStateECEF
from liese_nav.sensors import BiasState

TAU = 0.1  # half-width of the central time difference, seconds
# RK4 substeps over each half-window; the flows vary on ~15 s timescales,
# so a single fourth-order step over 0.1 s leaves integration error far
# below the differencing noise floor (verified against N_SUB = 4)
N_SUB = 1

# perturbation scale per error-state slot (phi, rho_v, rho_r, b_g, b_a)
SCALES = np.concatenate(
    [
        np.full(3, 1e-5),
        np.full(3, 1e-3),
        np.full(3, 1.0),
        np.full(3, 1e-5),
        np.full(3, 1e-4),
    ]
)

# absolute numerical noise floor of the extracted error, per slot; the
# position slot is dominated by double-precision cancellation on
# earth-radius ECEF coordinates and geodetic conversion round-off
SLOT_NOISE = np.concatenate(
    [
        np.full(3, 1e-13),
        np.full(3, 1e-11),
        np.full(3, 2e-8),
        np.full(3, 1e-16),
        np.full(3, 1e-16),
    ]
)

RTOL = 1e-4


def compose_error(error_def, x_true, x_est):
    if error_def == "RightTrue":
        return x_true.compose(x_est.inverse())
    if error_def == "RightEst":
        return x_est.compose(x_true.inverse())
    if error_def == "LeftTrue":
        return x_true.inverse().compose(x_est)
    return x_est.inverse().compose(x_true)  # LeftEst


def true_from_error(error_def, x_est, eta):
    """Inverse of :func:`compose_error` for the true-state factor."""
    if error_def == "RightTrue":
        return eta.compose(x_est)
    if error_def == "RightEst":
        return eta.inverse().compose(x_est)
    if error_def == "LeftTrue":
        return x_est.compose(eta.inverse())
    return x_est.compose(eta)  # LeftEst


def embed_ned(nav, aux=False):
    """Own-frame group embedding of a geodetic state."""
    lat, _, h = nav.geo
    rho = earth.position_vector_n(lat, h)
    v = nav.v_n.copy()
    if aux:
        v = v + np.cross(earth.earth_rate_n(lat), rho)
    return GroupElement(nav.c_bn.copy(), v, rho)


@dataclass
class NedFlowState:
    """Local-frame flow state.

    ``vel`` is v_eb^n for the plain frame and the earth-rate auxiliary
    velocity for the auxiliary frame; ``geo`` is the geodetic position.
    Field order matches the derivative tuple (the RK4 helper advances
    fields positionally).
    """

    c_bn: np.ndarray
    vel: np.ndarray
    geo: np.ndarray

    def copy(self):
        return NedFlowState(self.c_bn.copy(), self.vel.copy(), self.geo.copy())


def _decay(t, tau):
    return 1.0 if tau is None else np.exp(-t / tau)


class FOracle:
    """Finite-difference estimate of F for one variant at one nominal.

    ``nominal`` is a NavStateNED for the NED frames and an earth-relative
    NavStateECEF for the ECEF frames. ``gyro``/``accel`` are the
    bias-corrected rates at the nominal; the measured stream held constant
    over the window is then (gyro + b_hat, accel + b_hat).
    """

    def __init__(self, variant, nominal, gyro, accel, bias_hat,
                 tau_g=None, tau_a=None):
        self.variant = variant
        self.tau_g, self.tau_a = tau_g, tau_a
        self.bias_hat = bias_hat
        self.meas_gyro = gyro + bias_hat.gyro
        self.meas_accel = accel + bias_hat.accel
        frame = variant.frame
        if frame in ("NED", "NED_Aux"):
            self.aux = frame == "NED_Aux"
            lat0, _, h0 = nominal.geo
            if frame == "NED_Aux" and variant.mems_simplified:
                self.kind = "mems"
                self.est0 = embed_ned(nominal, aux=True)
                w_ie = earth.earth_rate_n(lat0)
                w_en = earth.transport_rate_n(lat0, h0, nominal.v_n)
                self._w_in0 = w_ie + w_en
                self._big_g0 = earth.gravitation_n(lat0, h0)
            else:
                self.kind = "ned"
                rho0 = earth.position_vector_n(lat0, h0)
                vel0 = nominal.v_n.copy()
                if self.aux:
                    vel0 = vel0 + np.cross(earth.earth_rate_n(lat0), rho0)
                self.est0 = NedFlowState(
                    nominal.c_bn.copy(), vel0, nominal.geo.copy()
                )
                if frame == "NED":
                    if variant.is_right:
                        # frozen-latitude inverse-square height model
                        self._gfn = lambda lat, h: earth.gravity_n(lat0, h)
                    else:
                        g0 = earth.gravity_n(lat0, h0)
                        self._gfn = lambda lat, h: g0
                else:
                    # auxiliary velocity uses gravitation, frozen at nominal
                    big_g0 = earth.gravitation_n(lat0, h0)
                    self._gfn = lambda lat, h: big_g0
        else:
            self.kind = "ecef"
            self.inertial = frame in ("ECEF_Inertial", "ECEF_Aux")
            self.est0 = nominal.copy()
            if self.inertial:
                self.est0.v = nominal.v + np.cross(
                    earth.earth_rate_e(), nominal.r
                )
                big_g0 = earth.gravitation_e(nominal.r)
                self._gfn = lambda r: big_g0
            else:
                g0 = earth.gravity_e(nominal.r)
                self._gfn = lambda r: g0

    # -- embeddings --------------------------------------------------------

    def _embed(self, state):
        if self.kind == "ned":
            lat, _, h = state.geo
            return GroupElement(
                state.c_bn.copy(),
                state.vel.copy(),
                earth.position_vector_n(lat, h),
            )
        if self.kind == "ecef":
            return GroupElement(state.c_be.copy(), state.v.copy(), state.r.copy())
        return state  # mems: already a GroupElement

    def error_state(self, true_state, est_state, db):
        x_true = self._embed(true_state)
        x_est = self._embed(est_state)
        if self.kind == "ned":
            # position component through the full-rank local chart
            lat, lon, _ = est_state.geo
            c_en = earth.dcm_ecef_to_ned(lat, lon)
            d_e = earth.llh_to_ecef(*true_state.geo) - earth.llh_to_ecef(
                *est_state.geo
            )
            x_true = GroupElement(x_true.R, x_true.v, x_est.p + c_en @ d_e)
        eta = compose_error(self.variant.error_def, x_true, x_est)
        return np.concatenate([log_se23(eta), db])

    def retract(self, xi):
        """True flow state and true bias realizing the error xi at t = 0."""
        x_est = self._embed(self.est0)
        eta = exp_se23(xi[:9])
        x_true = true_from_error(self.variant.error_def, x_est, eta)
        b_true = BiasState(
            self.bias_hat.gyro + xi[9:12], self.bias_hat.accel + xi[12:15]
        )
        if self.kind == "mems":
            return x_true, b_true
        if self.kind == "ecef":
            return NavStateECEF(x_true.R, x_true.v, x_true.p), b_true
        # attitude/velocity are assigned literally; the position slot
        # displacement moves the geodetic state through the local chart
        lat_e, lon_e, _ = self.est0.geo
        c_ne = earth.dcm_ecef_to_ned(lat_e, lon_e).T
        r_e = earth.llh_to_ecef(*self.est0.geo) + c_ne @ (x_true.p - x_est.p)
        geo = np.array(earth.ecef_to_llh(r_e))
        return NedFlowState(x_true.R, x_true.v, geo), b_true

    # -- flows -------------------------------------------------------------

    def _flow(self, state, bias0, t_end):
        dt = t_end / N_SUB
        t = 0.0
        out = state.copy() if self.kind != "mems" else GroupElement(
            state.R.copy(), state.v.copy(), state.p.copy()
        )
        for _ in range(N_SUB):
            tm = t + 0.5 * dt  # bias evaluated at the substep midpoint
            gyro = self.meas_gyro - bias0.gyro * _decay(tm, self.tau_g)
            accel = self.meas_accel - bias0.accel * _decay(tm, self.tau_a)
            if self.kind == "ned":
                out = mech._rk4(out, gyro, accel, dt, self._ned_deriv)
            elif self.kind == "ecef":
                out = mech.ecef_step(
                    out,
                    ImuSample(t, gyro, accel),
                    dt,
                    convention="inertial" if self.inertial else "earth",
                    gravity_fn=self._gfn,
                )
            else:
                out = self._mems_step(out, gyro, accel, dt)
            t += dt
        return out

    def _ned_deriv(self, s, gyro, accel):
        lat, _, h = s.geo
        w_ie = earth.earth_rate_n(lat)
        if self.aux:
            rho = earth.position_vector_n(lat, h)
            v = s.vel - np.cross(w_ie, rho)
        else:
            v = s.vel
        w_en = earth.transport_rate_n(lat, h, v)
        w_in = w_ie + w_en
        c_dot = s.c_bn @ skew(gyro) - skew(w_in) @ s.c_bn
        if self.aux:
            v_dot = s.c_bn @ accel - np.cross(w_in, s.vel) + self._gfn(lat, h)
        else:
            v_dot = (
                s.c_bn @ accel
                - np.cross(2.0 * w_ie + w_en, s.vel)
                + self._gfn(lat, h)
            )
        geo_dot = earth.n_rv(lat, h) @ v
        return c_dot, v_dot, geo_dot

    def _mems_deriv(self, x, gyro, accel):
        w0 = self._w_in0
        return (
            x.R @ skew(gyro) - skew(w0) @ x.R,
            x.R @ accel - np.cross(w0, x.v) + self._big_g0,
            -np.cross(w0, x.p) + x.v,
        )

    def _mems_step(self, x, gyro, accel, dt):
        def adv(base, k, step):
            return GroupElement(
                base.R + step * k[0], base.v + step * k[1], base.p + step * k[2]
            )

        k1 = self._mems_deriv(x, gyro, accel)
        k2 = self._mems_deriv(adv(x, k1, 0.5 * dt), gyro, accel)
        k3 = self._mems_deriv(adv(x, k2, 0.5 * dt), gyro, accel)
        k4 = self._mems_deriv(adv(x, k3, dt), gyro, accel)
        combined = tuple(
            (a + 2.0 * b + 2.0 * c + d) / 6.0 for a, b, c, d in zip(k1, k2, k3, k4)
        )
        return adv(x, combined, dt)

    # -- the matrix --------------------------------------------------------

    def _bias_error(self, xi0, t):
        return np.concatenate(
            [
                xi0[9:12] * _decay(t, self.tau_g),
                xi0[12:15] * _decay(t, self.tau_a),
            ]
        )

    def _error_rate(self, true0, b_true, xi0, est_at):
        """Richardson-extrapolated central time derivative of the error.

        Rates from half-windows tau and tau/2 are combined to cancel the
        O(tau^2) bias of the central difference (which otherwise leaks
        F^3-type couplings into zero entries of F).
        """
        xi = {}
        for t in (TAU, -TAU, 0.5 * TAU, -0.5 * TAU):
            state = self._flow(true0, b_true, t)
            xi[t] = self.error_state(state, est_at[t], self._bias_error(xi0, t))
        rate_full = (xi[TAU] - xi[-TAU]) / (2.0 * TAU)
        rate_half = (xi[0.5 * TAU] - xi[-0.5 * TAU]) / TAU
        return (4.0 * rate_half - rate_full) / 3.0

    def fd_matrix(self):
        est_at = {
            t: self._flow(self.est0, self.bias_hat, t)
            for t in (TAU, -TAU, 0.5 * TAU, -0.5 * TAU)
        }
        f = np.zeros((15, 15))
        for j in range(15):
            rates = []
            for sgn in (1.0, -1.0):
                xi0 = np.zeros(15)
                xi0[j] = sgn * SCALES[j]
                true0, b_true = self.retract(xi0)
                rates.append(self._error_rate(true0, b_true, xi0, est_at))
            f[:, j] = (rates[0] - rates[1]) / (2.0 * SCALES[j])
        return f


def column_tolerances(f_analytic, j):
    """Per-component allowance for column j of the FD comparison."""
    col = f_analytic[:, j]
    floor = 3.0 * SLOT_NOISE / (TAU * SCALES[j])
    return RTOL * (np.abs(col) + 1e-3 * np.linalg.norm(col)) + floor


def assert_f_matches(f_analytic, f_fd, label=""):
    for j in range(15):
        tol = column_tolerances(f_analytic, j)
        diff = np.abs(f_fd[:, j] - f_analytic[:, j])
        bad = diff > tol
        assert not bad.any(), (
            f"{label} column {j}: max excess "
            f"{np.max(diff - tol):.3e} at rows {np.nonzero(bad)[0].tolist()}\n"
            f"analytic: {f_analytic[bad, j]}\nfd: {f_fd[bad, j]}"
        )
