"""Scenario runner: load a config, simulate or run filter + smoother, write
trajectory CSVs and error metrics.

CSV formats (headers are part of the contract):

  imu.csv        t,wx,wy,wz,fx,fy,fz        (s, rad/s, m/s^2)
  gnss.csv       t,x,y,z,sxx,syy,szz        (ECEF m, variances m^2)
  trajectories   t,lat,lon,h,vn,ve,vd,q0,q1,q2,q3
                 (rad/m, m/s, unit quaternion of C_b^n, scalar first)
  covariance.csv t followed by the 225 row-major entries of P

Floats are serialized with repr(), which round-trips doubles exactly, so
parse -> serialize -> parse is idempotent and identical configs with
identical seeds produce byte-identical outputs.
"""

import concurrent.futures
import json
import os
import sys
from pathlib import Path

import click
import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from liese_nav import earth, filter as flt, sensors, smoother as smo
from liese_nav.errormodels import Variant
from liese_nav.errors import ConfigError, IncompatibleMode, IoError, LieseNavError
from liese_nav.liegroup import so3_log
from liese_nav.mechanization import ecef_to_ned_state
from liese_nav.sensors import BiasState, ImuNoiseParams
from liese_nav.simulator import TrajectorySpec, TruthGenerator

EXIT_CONFIG = 2
EXIT_IO = 3

TRAJ_HEADER = "t,lat,lon,h,vn,ve,vd,q0,q1,q2,q3"
IMU_HEADER = "t,wx,wy,wz,fx,fy,fz"
GNSS_HEADER = "t,x,y,z,sxx,syy,szz"


# ---------------------------------------------------------------------------
# configuration schema (strict: unknown keys rejected)
# ---------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrajectoryConfig(_Strict):
    kind: str
    origin_lat_rad: float
    origin_lon_rad: float
    origin_h_m: float
    speed_m_s: float = 0.0
    radius_m: float = 200.0
    heading0_rad: float = 0.0
    amplitude_m: float = 300.0
    period_s: float = 60.0


class GnssConfig(_Strict):
    period_s: float = 1.0
    sigma_pos_m: float = 1.0
    lever_arm_b_m: list[float] = [0.0, 0.0, 0.0]


class NoiseConfig(_Strict):
    sigma_g_rad_s_sqrt_hz: float = 0.0
    sigma_a_m_s2_sqrt_hz: float = 0.0
    sigma_bg_rad_s_sqrt_s: float = 0.0
    sigma_ba_m_s2_sqrt_s: float = 0.0
    tau_g_s: float | None = 3600.0
    tau_a_s: float | None = 3600.0


class InitialConfig(_Strict):
    attitude_sigma_rad: float = 0.0
    velocity_sigma_m_s: float = 0.0
    position_sigma_m: float = 0.0
    bias_g_sigma_rad_s: float = 0.0
    bias_a_sigma_m_s2: float = 0.0
    yaw_error_rad: float = 0.0
    true_bias_g_rad_s: list[float] = [0.0, 0.0, 0.0]
    true_bias_a_m_s2: list[float] = [0.0, 0.0, 0.0]


class VariantConfig(_Strict):
    frame: str = "NED"
    error_def: str = "LeftEst"
    mems_simplified: bool = False


class ScenarioConfig(_Strict):
    trajectory: TrajectoryConfig
    duration_s: float = 60.0
    imu_dt_s: float = 0.01
    gnss: GnssConfig = GnssConfig()
    noise: NoiseConfig = NoiseConfig()
    initial: InitialConfig = InitialConfig()
    variant: VariantConfig = VariantConfig()
    mode: str = "se23"
    seed: int = 0


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    try:
        return ScenarioConfig(**raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def build_scenario(cfg):
    """Validated domain objects from a ScenarioConfig."""
    t = cfg.trajectory
    spec = TrajectorySpec(
        t.kind,
        np.array([t.origin_lat_rad, t.origin_lon_rad, t.origin_h_m]),
        speed=t.speed_m_s,
        radius=t.radius_m,
        heading0=t.heading0_rad,
        amplitude=t.amplitude_m,
        period=t.period_s,
    )
    if cfg.duration_s <= 0 or cfg.imu_dt_s <= 0:
        raise ConfigError("duration_s and imu_dt_s must be positive")
    if cfg.gnss.period_s < cfg.imu_dt_s:
        raise ConfigError("gnss period_s must be >= imu_dt_s")
    if cfg.mode not in flt.MODES:
        raise ConfigError(f"unknown mode {cfg.mode!r} (expected one of {flt.MODES})")
    variant = Variant(
        cfg.variant.frame, cfg.variant.error_def, cfg.variant.mems_simplified
    )
    if cfg.mode == "invariant" and variant.error_def != "LeftEst":
        raise IncompatibleMode(
            f"invariant mode requires the LeftEst error definition, got {variant.name}"
        )
    noise = ImuNoiseParams(
        sigma_g=cfg.noise.sigma_g_rad_s_sqrt_hz,
        sigma_a=cfg.noise.sigma_a_m_s2_sqrt_hz,
        sigma_bg=cfg.noise.sigma_bg_rad_s_sqrt_s,
        sigma_ba=cfg.noise.sigma_ba_m_s2_sqrt_s,
        tau_g=cfg.noise.tau_g_s,
        tau_a=cfg.noise.tau_a_s,
    )
    return spec, variant, noise


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------


def dcm_to_quaternion(c):
    """Unit quaternion (scalar first) from a rotation matrix, q0 >= 0.

    Shepperd's method: pivot on the largest of the four squared components
    for numerical stability at every attitude.
    """
    tr = np.trace(c)
    cand = np.array([1.0 + tr, *(1.0 + 2.0 * np.diag(c) - tr)])
    k = int(np.argmax(cand))
    s = 0.5 * np.sqrt(cand[k])
    if k == 0:
        q = np.array(
            [
                s,
                0.25 * (c[2, 1] - c[1, 2]) / s,
                0.25 * (c[0, 2] - c[2, 0]) / s,
                0.25 * (c[1, 0] - c[0, 1]) / s,
            ]
        )
    else:
        i = k - 1
        j, l = (i + 1) % 3, (i + 2) % 3
        q = np.empty(4)
        q[k] = s
        q[0] = 0.25 * (c[l, j] - c[j, l]) / s
        q[1 + j] = 0.25 * (c[j, i] + c[i, j]) / s
        q[1 + l] = 0.25 * (c[l, i] + c[i, l]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quaternion_to_dcm(q):
    q0, q1, q2, q3 = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [
                q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3,
                2.0 * (q1 * q2 - q0 * q3),
                2.0 * (q1 * q3 + q0 * q2),
            ],
            [
                2.0 * (q1 * q2 + q0 * q3),
                q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3,
                2.0 * (q2 * q3 - q0 * q1),
            ],
            [
                2.0 * (q1 * q3 - q0 * q2),
                2.0 * (q2 * q3 + q0 * q1),
                q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3,
            ],
        ]
    )


def _fmt(values):
    return ",".join(repr(float(v)) for v in values)


def _traj_row(t, ned):
    q = dcm_to_quaternion(ned.c_bn)
    return _fmt([t, *ned.geo, *ned.v_n, *q])


def _as_ned(variant, nav):
    if variant is None or variant.frame in ("NED", "NED_Aux"):
        return nav
    return ecef_to_ned_state(nav)


def write_csv(path, header, rows):
    try:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(row + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_csv(path, header):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != header:
        raise IoError(f"{path}: expected header {header!r}")
    return np.array(
        [[float(x) for x in line.split(",")] for line in lines[1:]], dtype=float
    )


# ---------------------------------------------------------------------------
# scenario execution
# ---------------------------------------------------------------------------


def _initial_state(cfg, variant, gen, rng):
    """Truth at t=0 plus the configured initial error draw."""
    ini = cfg.initial
    if variant.frame in ("NED", "NED_Aux"):
        nav = gen.state_ned(0.0)
    else:
        nav = gen.state_ecef(0.0)
    sigmas = np.concatenate(
        [
            np.full(3, ini.attitude_sigma_rad),
            np.full(3, ini.velocity_sigma_m_s),
            np.full(3, ini.position_sigma_m),
            np.full(3, ini.bias_g_sigma_rad_s),
            np.full(3, ini.bias_a_sigma_m_s2),
        ]
    )
    p0 = np.diag(np.maximum(sigmas, 1e-12) ** 2)
    dx = sigmas * rng.standard_normal(15)
    nav, bias = flt.apply_correction(variant, nav, BiasState(), dx)
    if ini.yaw_error_rad != 0.0:
        # deterministic extra misalignment about the local down axis
        cz, sz = np.cos(ini.yaw_error_rad), np.sin(ini.yaw_error_rad)
        rot = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
        if variant.frame in ("NED", "NED_Aux"):
            nav.c_bn[:] = rot @ nav.c_bn
        else:
            lat, lon, _ = earth.ecef_to_llh(nav.r)
            c_ne = earth.dcm_ecef_to_ned(lat, lon).T
            nav.c_be[:] = c_ne @ rot @ c_ne.T @ nav.c_be
        p0[:3, :3] += ini.yaw_error_rad**2 * np.eye(3)
    return nav, bias, p0


def run_scenario(cfg, out_dir, write_sensors=True):
    """Simulate, filter, and smooth one scenario; write artifacts to out_dir.

    Returns the metrics dictionary that is also written to metrics.json.
    """
    spec, variant, noise = build_scenario(cfg)
    gen = TruthGenerator(spec)
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.imu_dt_s
    n = int(round(cfg.duration_s / dt))

    clean = gen.synthesize_imu(cfg.duration_s, dt)
    true_bias0 = BiasState(
        np.array(cfg.initial.true_bias_g_rad_s),
        np.array(cfg.initial.true_bias_a_m_s2),
    )
    biases = sensors.simulate_biases(noise, n, dt, rng, initial=true_bias0)
    imu = sensors.corrupt(clean, biases, noise, dt, rng)
    lever = np.array(cfg.gnss.lever_arm_b_m)
    gnss_times = np.arange(
        cfg.gnss.period_s, cfg.duration_s + 1e-9, cfg.gnss.period_s
    )
    raw_fixes = gen.sample_gnss(gnss_times, lever, cfg.gnss.sigma_pos_m, rng)
    fixes = [flt.GnssFix(t, pos, r, lever) for t, pos, r in raw_fixes]

    nav0, bias0, p0 = _initial_state(cfg, variant, gen, rng)
    fs = flt.FilterState(variant, nav0, bias0, p0, 0.0)

    records, nis_log = [], []
    pending = None
    phi_acc = np.eye(15)
    fix_iter = iter(fixes)
    fix = next(fix_iter, None)
    for k in range(n):
        fs, phi = flt.predict(fs, imu[k], dt, noise=noise)
        phi_acc = phi @ phi_acc
        if fix is not None and fs.t >= fix.t - 1e-9:
            if pending is not None:
                records.append(
                    smo.ForwardRecord(
                        pending.t, pending.nav, pending.bias, pending.p,
                        phi_acc, fs.p.copy(), fs.nav.copy(), fs.bias.copy(),
                    )
                )
            fs, report = flt.update(fs, fix, mode=cfg.mode)
            nis_log.append({"t": fs.t, "value": float(report.nis)})
            pending = fs.copy()
            phi_acc = np.eye(15)
            fix = next(fix_iter, None)
    if pending is None:
        pending = fs.copy()
    records.append(
        smo.ForwardRecord(pending.t, pending.nav, pending.bias, pending.p)
    )
    smoothed = smo.rts_smooth(variant, records)

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc

    if write_sensors:
        truth_rows = [
            _traj_row(k * dt, gen.state_ned(k * dt)) for k in range(n + 1)
        ]
        write_csv(out / "truth.csv", TRAJ_HEADER, truth_rows)
        write_csv(
            out / "imu.csv",
            IMU_HEADER,
            [_fmt([s.t, *s.gyro, *s.accel]) for s in imu],
        )
        write_csv(
            out / "gnss.csv",
            GNSS_HEADER,
            [_fmt([t, *pos, r[0, 0], r[1, 1], r[2, 2]]) for t, pos, r in raw_fixes],
        )

    write_csv(
        out / "filtered.csv",
        TRAJ_HEADER,
        [_traj_row(r.t, _as_ned(variant, r.nav)) for r in records],
    )
    write_csv(
        out / "smoothed.csv",
        TRAJ_HEADER,
        [_traj_row(e.t, _as_ned(variant, e.nav)) for e in smoothed],
    )
    write_csv(
        out / "covariance.csv",
        "t," + ",".join(f"p{i}{j}" for i in range(15) for j in range(15)),
        [_fmt([r.t, *r.p_post.ravel()]) for r in records],
    )

    metrics = _metrics(cfg, variant, gen, dt, biases, records, smoothed, nis_log)
    try:
        (out / "metrics.json").write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n"
        )
    except OSError as exc:
        raise IoError(f"cannot write metrics.json: {exc}") from exc
    return metrics


def _epoch_errors(variant, gen, navs, times):
    """NED-axis position/velocity errors and attitude rotation vectors."""
    pos, vel, att = [], [], []
    for nav, t in zip(navs, times):
        truth = gen.state_ned(t)
        ned = _as_ned(variant, nav)
        c_ne = earth.dcm_ecef_to_ned(*truth.geo[:2]).T
        dp = earth.llh_to_ecef(*ned.geo) - earth.llh_to_ecef(*truth.geo)
        pos.append(c_ne.T @ dp)
        vel.append(ned.v_n - truth.v_n)
        att.append(so3_log(truth.c_bn.T @ ned.c_bn))
    return np.array(pos), np.array(vel), np.array(att)


def _rmse_block(variant, gen, navs, times):
    pos, vel, att = _epoch_errors(variant, gen, navs, times)
    axis_rmse = lambda e: [float(x) for x in np.sqrt(np.mean(e**2, axis=0))]
    return {
        "position_m": axis_rmse(pos),
        "velocity_m_s": axis_rmse(vel),
        "attitude_rad": axis_rmse(att),
    }


def _metrics(cfg, variant, gen, dt, biases, records, smoothed, nis_log):
    times = [r.t for r in records]
    nees_log = []
    for rec in records:
        idx = min(len(biases) - 1, max(0, int(round(rec.t / dt)) - 1))
        true_nav = (
            gen.state_ned(rec.t)
            if variant.frame in ("NED", "NED_Aux")
            else gen.state_ecef(rec.t)
        )
        dx = flt.error_state(variant, true_nav, biases[idx], rec.nav, rec.bias)
        try:
            nees = float(dx @ np.linalg.solve(rec.p_post, dx))
        except np.linalg.LinAlgError:
            nees = float("nan")
        nees_log.append({"t": rec.t, "value": nees})
    return {
        "variant": variant.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "epochs": len(records),
        "rmse": {
            "filtered": _rmse_block(variant, gen, [r.nav for r in records], times),
            "smoothed": _rmse_block(variant, gen, [e.nav for e in smoothed], times),
        },
        "final_nees": nees_log[-1]["value"] if nees_log else None,
        "nees": nees_log,
        "nis": nis_log,
    }


def run_monte_carlo(cfg, out_dir, n_runs):
    """Fan out independent seeded runs; merge metrics by run index."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    cap = os.environ.get("LIESE_NAV_THREADS")
    try:
        max_workers = max(1, int(cap)) if cap else min(n_runs, os.cpu_count() or 1)
    except ValueError as exc:
        raise ConfigError(f"LIESE_NAV_THREADS must be an integer: {cap!r}") from exc

    def one(idx):
        sub = cfg.model_copy(deep=True)
        sub.seed = cfg.seed + idx
        return run_scenario(sub, out / f"run_{idx:03d}")

    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(one, range(n_runs)))

    merged = {
        "runs": n_runs,
        "base_seed": cfg.seed,
        "variant": results[0]["variant"],
        "mode": results[0]["mode"],
        "final_nees": [m["final_nees"] for m in results],
        "mean_final_nees": float(
            np.mean([m["final_nees"] for m in results])
        ),
        "rmse": [m["rmse"] for m in results],
    }
    try:
        (out / "metrics.json").write_text(
            json.dumps(merged, indent=2, sort_keys=True) + "\n"
        )
    except OSError as exc:
        raise IoError(f"cannot write metrics.json: {exc}") from exc
    return merged


def simulate_only(cfg, out_dir):
    """Write truth and sensor streams without running the filter."""
    spec, _, noise = build_scenario(cfg)
    gen = TruthGenerator(spec)
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.imu_dt_s
    n = int(round(cfg.duration_s / dt))
    clean = gen.synthesize_imu(cfg.duration_s, dt)
    true_bias0 = BiasState(
        np.array(cfg.initial.true_bias_g_rad_s),
        np.array(cfg.initial.true_bias_a_m_s2),
    )
    biases = sensors.simulate_biases(noise, n, dt, rng, initial=true_bias0)
    imu = sensors.corrupt(clean, biases, noise, dt, rng)
    lever = np.array(cfg.gnss.lever_arm_b_m)
    gnss_times = np.arange(
        cfg.gnss.period_s, cfg.duration_s + 1e-9, cfg.gnss.period_s
    )
    raw_fixes = gen.sample_gnss(gnss_times, lever, cfg.gnss.sigma_pos_m, rng)

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    write_csv(
        out / "truth.csv",
        TRAJ_HEADER,
        [_traj_row(k * dt, gen.state_ned(k * dt)) for k in range(n + 1)],
    )
    write_csv(
        out / "imu.csv", IMU_HEADER, [_fmt([s.t, *s.gyro, *s.accel]) for s in imu]
    )
    write_csv(
        out / "gnss.csv",
        GNSS_HEADER,
        [_fmt([t, *pos, r[0, 0], r[1, 1], r[2, 2]]) for t, pos, r in raw_fixes],
    )


def compare_runs(dir_a, dir_b, pos_tol, cov_tol):
    """Per-epoch position and covariance deltas between two run outputs."""
    fa = read_csv(Path(dir_a) / "filtered.csv", TRAJ_HEADER)
    fb = read_csv(Path(dir_b) / "filtered.csv", TRAJ_HEADER)
    if fa.shape != fb.shape:
        raise IoError(
            f"epoch mismatch: {fa.shape[0]} vs {fb.shape[0]} filtered rows"
        )
    pos_delta = []
    for ra, rb in zip(fa, fb):
        pa = earth.llh_to_ecef(*ra[1:4])
        pb = earth.llh_to_ecef(*rb[1:4])
        pos_delta.append(float(np.max(np.abs(pa - pb))))
    cov_header = "t," + ",".join(f"p{i}{j}" for i in range(15) for j in range(15))
    ca = read_csv(Path(dir_a) / "covariance.csv", cov_header)
    cb = read_csv(Path(dir_b) / "covariance.csv", cov_header)
    if ca.shape != cb.shape:
        raise IoError("epoch mismatch between covariance files")
    cov_delta = [
        float(np.linalg.norm(a[1:] - b[1:])) for a, b in zip(ca, cb)
    ]
    report = {
        "max_pos_delta_m": max(pos_delta),
        "max_cov_delta_fro": max(cov_delta),
        "pos_delta": pos_delta,
        "cov_delta": cov_delta,
        "passed": max(pos_delta) <= pos_tol and max(cov_delta) <= cov_tol,
    }
    return report


# ---------------------------------------------------------------------------
# command-line entry points
# ---------------------------------------------------------------------------


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, (IoError, OSError)):
        sys.exit(EXIT_IO)
    sys.exit(EXIT_CONFIG)


@click.group()
def main():
    """SE_2(3) inertial navigation scenario runner."""


@main.command("run")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--variant", "variant_name", default=None, type=str)
@click.option("--mode", default=None, type=click.Choice(["invariant", "se23"]))
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_dir", default="out", type=str)
@click.option("--monte-carlo", "n_runs", default=None, type=int)
def cmd_run(config_path, variant_name, mode, seed, out_dir, n_runs):
    """Simulate a scenario, run the filter and smoother, write artifacts."""
    try:
        cfg = load_config(config_path)
        if variant_name is not None:
            parts = variant_name.split("/")
            if len(parts) != 2:
                raise ConfigError(
                    f"variant {variant_name!r} must look like FRAME/ERRORDEF"
                )
            cfg.variant.frame, cfg.variant.error_def = parts
            if cfg.variant.error_def.endswith("+mems"):
                cfg.variant.error_def = cfg.variant.error_def[: -len("+mems")]
                cfg.variant.mems_simplified = True
        if mode is not None:
            cfg.mode = mode
        if seed is not None:
            cfg.seed = seed
        if n_runs is not None:
            if n_runs < 1:
                raise ConfigError("--monte-carlo must be >= 1")
            run_monte_carlo(cfg, out_dir, n_runs)
        else:
            run_scenario(cfg, out_dir)
    except (LieseNavError, ValidationError) as exc:
        _fail(exc)


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--out", "out_dir", required=True, type=str)
def cmd_simulate(config_path, out_dir):
    """Write truth and sensor CSVs only."""
    try:
        simulate_only(load_config(config_path), out_dir)
    except (LieseNavError, ValidationError) as exc:
        _fail(exc)


@main.command("compare")
@click.argument("dir_a", type=str)
@click.argument("dir_b", type=str)
@click.option("--pos-tol", default=1e-9, type=float)
@click.option("--cov-tol", default=1e-10, type=float)
def cmd_compare(dir_a, dir_b, pos_tol, cov_tol):
    """Compare two run directories epoch by epoch."""
    try:
        report = compare_runs(dir_a, dir_b, pos_tol, cov_tol)
    except (LieseNavError, ValidationError) as exc:
        _fail(exc)
        return
    click.echo(
        f"max |dpos| = {report['max_pos_delta_m']:.3e} m "
        f"(tol {pos_tol:.1e}); "
        f"max ||dP||_F = {report['max_cov_delta_fro']:.3e} (tol {cov_tol:.1e})"
    )
    click.echo("PASS" if report["passed"] else "FAIL")
    if not report["passed"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
