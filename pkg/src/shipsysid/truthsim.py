"""Synthetic ground-truth maneuvering simulator.

A 3-DOF planar plant (surge, sway, yaw) for a twin-rudder single-propeller
model ship, driven by randomly scheduled actuator commands and a slowly
varying wind, integrated with classical RK4 and sampled down to the 1 Hz
trajectory rate.  The plant exists so the identification pipeline can be
verified against known dynamics; it is a plausible model-scale boat, not a
calibrated hydrodynamic model.

Exogenous signals (actuator schedule and true wind) are held constant over
each cell of a fixed 0.1 s grid, independent of the integrator step, so
integrating the same trajectory with a halved step sees identical forcing.
The apparent wind is a function of the ship state and is re-evaluated at
every integrator stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .trajectory import (
    TWO_PI,
    ActuatorState,
    ShipState,
    Trajectory,
    WindState,
    wrap_angle,
)

EXO_PERIOD = 0.1  # s; resolution of the actuator/wind forcing grid

_WIND_TAG = 0x71D0
_OBS_TAG = 0x0B5E
_MANEUVER_TAG = 0x5C21


@dataclass(frozen=True)
class ActuatorLimits:
    """Inclusive (low, high) bounds per actuator channel; angles in radians.

    Defaults: propeller 0..12.5 1/s, starboard rudder -35..105 deg, port
    rudder -105..35 deg (a vectoring twin-rudder arrangement).
    """

    delta_p: tuple[float, float] = (math.radians(-105.0), math.radians(35.0))
    delta_s: tuple[float, float] = (math.radians(-35.0), math.radians(105.0))
    n_p: tuple[float, float] = (0.0, 12.5)

    def __post_init__(self):
        for name in ("delta_p", "delta_s", "n_p"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"actuator limit {name} must have low < high")

    def contains(self, act: ActuatorState) -> bool:
        return (self.delta_p[0] <= act.delta_p <= self.delta_p[1]
                and self.delta_s[0] <= act.delta_s <= self.delta_s[1]
                and self.n_p[0] <= act.n_p <= self.n_p[1])


DEFAULT_LIMITS = ActuatorLimits()


@dataclass(frozen=True)
class TruthModelConfig:
    """Plant coefficients for a ~3 m twin-rudder model ship.

    Defaults are chosen so drag balances thrust near 1 m/s at full propeller
    revolutions and every linearized damping rate stays below ~0.7 1/s, which
    keeps the plant well resolved by RK4 at a 0.1 s step and stable under the
    identified model's 1 s Euler rollouts.

    Units: masses kg, yaw inertia kg*m^2, linear damping kg/s (N*m*s for
    yaw), quadratic damping kg/m, thrust and rudder gains N*s^2, wind gains
    kg/m.
    """

    m_x: float = 150.0        # surge mass incl. added mass
    m_y: float = 250.0        # sway mass incl. added mass
    i_z: float = 100.0        # yaw inertia incl. added inertia
    x_u: float = 45.0         # linear surge drag
    x_uu: float = 30.0        # quadratic surge drag
    y_v: float = 75.0         # linear sway drag
    y_vv: float = 50.0        # quadratic sway drag
    y_r: float = 20.0         # sway force per yaw rate
    n_v: float = 15.0         # yaw moment per sway speed
    n_r: float = 60.0         # linear yaw damping
    n_rr: float = 15.0        # quadratic yaw damping
    k_thrust: float = 0.48    # thrust = k_thrust * n_p * |n_p|
    k_rudder_x: float = 0.25  # rudder drag gain
    k_rudder_y: float = 0.2   # rudder lateral-force gain
    x_rudder: float = -0.6    # rudder lever arm (m, negative = aft)
    c_wind_x: float = 0.15    # wind surge-force gain
    c_wind_y: float = 0.5     # wind sway-force gain
    c_wind_n: float = 0.3     # wind yaw-moment gain

    def __post_init__(self):
        if min(self.m_x, self.m_y, self.i_z) <= 0.0:
            raise ConfigError("inertias must be > 0")
        for name in ("x_u", "x_uu", "y_v", "y_vv", "n_r", "n_rr"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"damping coefficient {name} must be >= 0")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class TrueWind:
    """Earth-frame true wind: speed (m/s) and the direction it comes from (rad)."""

    speed: float
    direction: float

    def __post_init__(self):
        if not self.speed >= 0.0:
            raise DataError(f"true wind speed must be >= 0, got {self.speed}")


@dataclass(frozen=True)
class WindProcessConfig:
    """Slowly varying true wind: mean-reverting speed, random-walk direction.

    The speed follows a discretized Ornstein-Uhlenbeck process reflected at
    zero; the direction performs an unbounded random walk (wrapped when
    reported).  Defaults keep apparent winds mostly below ~5 m/s for the
    default plant.  ``initial_speed`` / ``initial_direction`` of None mean a
    seeded draw from the stationary distribution / the uniform circle.
    """

    mean_speed: float = 2.0
    reversion_rate: float = 0.05        # 1/s
    speed_volatility: float = 0.3       # m/s per sqrt(s)
    direction_volatility: float = 0.05  # rad per sqrt(s)
    initial_speed: float | None = None
    initial_direction: float | None = None

    def __post_init__(self):
        if min(self.mean_speed, self.reversion_rate, self.speed_volatility,
               self.direction_volatility) < 0.0:
            raise ConfigError("wind process parameters must be >= 0")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class ManeuverScript:
    """Piecewise-constant actuator schedule.

    ``entries`` is a sequence of (start_time, ActuatorState) pairs with
    strictly increasing start times beginning at 0; each value is held until
    the next entry takes over (left-closed intervals).  All values must lie
    within ``limits``.
    """

    entries: tuple
    limits: ActuatorLimits = DEFAULT_LIMITS

    def __post_init__(self):
        entries = tuple((float(t), act) for t, act in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise DataError("maneuver script needs at least one entry")
        times = [t for t, _ in entries]
        if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise DataError("script entries must start at t = 0 with strictly "
                            "increasing times")
        for t, act in entries:
            if not self.limits.contains(act):
                raise DataError(f"script value at t = {t:g} s violates the "
                                f"actuator limits")

    def value_at(self, t: float) -> ActuatorState:
        """The held actuator value at time t (clamped before the first entry)."""
        lo, hi = 0, len(self.entries)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.entries[mid][0] <= t:
                lo = mid
            else:
                hi = mid
        return self.entries[lo][1]


def random_maneuver(duration: float, seed: int,
                    limits: ActuatorLimits = DEFAULT_LIMITS,
                    min_hold: float = 5.0,
                    max_hold: float = 30.0) -> ManeuverScript:
    """Random piecewise-constant schedule covering ``duration`` seconds.

    Each actuator channel independently holds uniform random values within
    its limits for uniform random durations in [min_hold, max_hold] s.
    Deterministic per seed.
    """
    if duration <= 0.0:
        raise DataError(f"duration must be > 0, got {duration}")
    if not 0.0 < min_hold <= max_hold:
        raise ConfigError("hold times must satisfy 0 < min_hold <= max_hold")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _MANEUVER_TAG]))
    channels: dict[str, tuple[list, list]] = {}
    for name in ("delta_p", "delta_s", "n_p"):
        lo, hi = getattr(limits, name)
        times: list[float] = []
        values: list[float] = []
        t = 0.0
        while t < duration:
            times.append(t)
            values.append(float(rng.uniform(lo, hi)))
            t += float(rng.uniform(min_hold, max_hold))
        channels[name] = (times, values)

    # Merge the per-channel breakpoints into one combined schedule.
    merged = sorted({t for times, _ in channels.values() for t in times})
    cursor = dict.fromkeys(channels, 0)
    entries = []
    for t in merged:
        held = {}
        for name, (times, values) in channels.items():
            while cursor[name] + 1 < len(times) and times[cursor[name] + 1] <= t:
                cursor[name] += 1
            held[name] = values[cursor[name]]
        entries.append((t, ActuatorState(**held)))
    return ManeuverScript(tuple(entries), limits)


# ---------------------------------------------------------------------------
# Physics


def _apparent_wind(u, vm, psi, U_T, gamma_T):
    """Plain-float apparent wind (U_A, gamma_A); see apparent_wind()."""
    cp, sp = math.cos(psi), math.sin(psi)
    # Earth-frame wind velocity (blowing toward) minus earth-frame ship velocity.
    rel_x = -U_T * math.cos(gamma_T) - (u * cp - vm * sp)
    rel_y = -U_T * math.sin(gamma_T) - (u * sp + vm * cp)
    # Into the ship frame.
    ax = cp * rel_x + sp * rel_y
    ay = -sp * rel_x + cp * rel_y
    ua = math.hypot(ax, ay)
    if ua == 0.0:
        return 0.0, 0.0
    return ua, wrap_angle(math.atan2(-ay, -ax))


def apparent_wind(x: ShipState, tw: TrueWind) -> WindState:
    """Apparent wind on board: speed and the direction it comes from, off the bow.

    The relative velocity is the earth-frame wind vector
    (-U_T cos(gamma_T), -U_T sin(gamma_T)) minus the earth-frame ship
    velocity, rotated into the ship frame by -psi; gamma_A is wrapped to
    [0, 2pi).
    """
    ua, ga = _apparent_wind(x.u, x.vm, x.psi, tw.speed, tw.direction)
    return WindState(speed=ua, direction=ga)


def _force_deriv(u, vm, psi, r, delta_p, delta_s, n_p, ua, ga, cfg):
    """RHS (x0dot, udot, y0dot, vmdot, psidot, rdot) given apparent wind, as floats."""
    sin_s, cos_s = math.sin(delta_s), math.cos(delta_s)
    sin_p, cos_p = math.sin(delta_p), math.cos(delta_p)
    np2 = n_p * n_p
    rudder_lat = np2 * (sin_s * cos_s + sin_p * cos_p)
    ua2 = ua * ua

    udot = (-cfg.x_u * u - cfg.x_uu * u * abs(u)
            + cfg.k_thrust * n_p * abs(n_p)
            - cfg.k_rudder_x * np2 * (sin_s * sin_s + sin_p * sin_p)
            + cfg.c_wind_x * ua2 * (-math.cos(ga))) / cfg.m_x
    vmdot = (-cfg.y_v * vm - cfg.y_vv * vm * abs(vm) - cfg.y_r * r
             - cfg.k_rudder_y * rudder_lat
             + cfg.c_wind_y * ua2 * math.sin(ga)) / cfg.m_y
    rdot = (-cfg.n_r * r - cfg.n_rr * r * abs(r) - cfg.n_v * vm
            - cfg.x_rudder * cfg.k_rudder_y * rudder_lat
            + cfg.c_wind_n * ua2 * math.sin(2.0 * ga) / 2.0) / cfg.i_z

    cp, sp = math.cos(psi), math.sin(psi)
    return (u * cp - vm * sp, udot, u * sp + vm * cp, vmdot, r, rdot)


def truth_derivative(x: ShipState, act: ActuatorState, wind: WindState,
                     cfg: TruthModelConfig) -> np.ndarray:
    """Full 6-state derivative of the synthetic plant given the apparent wind."""
    return np.array(_force_deriv(x.u, x.vm, x.psi, x.r,
                                 act.delta_p, act.delta_s, act.n_p,
                                 wind.speed, wind.direction, cfg))


def _rhs(state, dp, ds, npr, U_T, gamma_T, cfg):
    """RHS under frozen true wind; apparent wind recomputed from the state."""
    ua, ga = _apparent_wind(state[1], state[3], state[4], U_T, gamma_T)
    return _force_deriv(state[1], state[3], state[4], state[5],
                        dp, ds, npr, ua, ga, cfg)


def _rk4_step(state, h, dp, ds, npr, U_T, gamma_T, cfg):
    """One classical RK4 step with actuators and true wind frozen over the step."""
    k1 = _rhs(state, dp, ds, npr, U_T, gamma_T, cfg)
    s2 = tuple(state[j] + 0.5 * h * k1[j] for j in range(6))
    k2 = _rhs(s2, dp, ds, npr, U_T, gamma_T, cfg)
    s3 = tuple(state[j] + 0.5 * h * k2[j] for j in range(6))
    k3 = _rhs(s3, dp, ds, npr, U_T, gamma_T, cfg)
    s4 = tuple(state[j] + h * k3[j] for j in range(6))
    k4 = _rhs(s4, dp, ds, npr, U_T, gamma_T, cfg)
    return tuple(state[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                 for j in range(6))


def _wind_series(n_cells: int, wind: WindProcessConfig, rng):
    """Piecewise-constant true wind on the forcing grid: (speeds, directions)."""
    dt = EXO_PERIOD
    kappa = wind.reversion_rate
    if kappa > 0.0:
        a = math.exp(-kappa * dt)
        b = wind.speed_volatility * math.sqrt((1.0 - a * a) / (2.0 * kappa))
        stationary_sd = wind.speed_volatility / math.sqrt(2.0 * kappa)
    else:
        a = 1.0
        b = wind.speed_volatility * math.sqrt(dt)
        stationary_sd = 0.0

    speeds = np.empty(n_cells)
    if wind.initial_speed is not None:
        speeds[0] = abs(wind.initial_speed)
    else:
        speeds[0] = abs(wind.mean_speed + stationary_sd * rng.standard_normal())
    noise_u = rng.standard_normal(max(n_cells - 1, 0))
    for k in range(n_cells - 1):
        drifted = wind.mean_speed + (speeds[k] - wind.mean_speed) * a
        speeds[k + 1] = abs(drifted + b * noise_u[k])  # reflect at zero

    directions = np.empty(n_cells)
    if wind.initial_direction is not None:
        directions[0] = wrap_angle(wind.initial_direction)
    else:
        directions[0] = rng.uniform(0.0, TWO_PI)
    steps = (wind.direction_volatility * math.sqrt(dt)
             * rng.standard_normal(max(n_cells - 1, 0)))
    for k in range(n_cells - 1):
        directions[k + 1] = wrap_angle(directions[k] + steps[k])
    return speeds, directions


def generate_trajectory(cfg: TruthModelConfig, script: ManeuverScript,
                        wind_seed: int, duration: float, *,
                        wind: WindProcessConfig | None = None,
                        noise_sigma=None,
                        initial_state: ShipState | None = None,
                        traj_id: str | None = None,
                        fine_step: float = EXO_PERIOD,
                        sample_period: float = 1.0) -> Trajectory:
    """Integrate the plant under a maneuver script and a seeded wind process.

    Classical RK4 at ``fine_step`` (default 0.1 s), recorded every
    ``sample_period`` (default 1 s, i.e. the 10 Hz integration grid
    downsampled to 1 Hz).  ``fine_step`` must divide both the 0.1 s forcing
    grid and the sample period, so halving it reproduces the same forcing.

    ``noise_sigma``, if given, is a 6-vector of observation-noise standard
    deviations added to the recorded ship states only; the recorded apparent
    wind is computed from the noise-free state.  The wind seed also keys the
    observation noise.  A duration of 500 s yields 501 samples at 1 Hz.
    """
    if duration <= 0.0:
        raise DataError(f"duration must be > 0, got {duration}")
    sub_steps = round(EXO_PERIOD / fine_step)
    if sub_steps < 1 or abs(EXO_PERIOD - sub_steps * fine_step) > 1e-12:
        raise ConfigError(f"fine step {fine_step} must divide the forcing "
                          f"grid period {EXO_PERIOD}")
    steps_per_sample = round(sample_period / fine_step)
    if steps_per_sample < 1 or abs(sample_period - steps_per_sample * fine_step) > 1e-12:
        raise ConfigError(f"fine step {fine_step} must divide the sample "
                          f"period {sample_period}")

    n_samples = int(math.floor(duration / sample_period + 1e-9)) + 1
    n_fine = (n_samples - 1) * steps_per_sample
    # One forcing cell per 0.1 s, plus one starting at the final instant.
    n_cells = n_fine // sub_steps + 1

    rng_wind = np.random.default_rng(
        np.random.SeedSequence([int(wind_seed), _WIND_TAG]))
    wind_speeds, wind_dirs = _wind_series(n_cells, wind or WindProcessConfig(),
                                          rng_wind)
    held_acts = [script.value_at(k * EXO_PERIOD) for k in range(n_cells)]

    state = ((0.0,) * 6 if initial_state is None
             else tuple(float(v) for v in initial_state.as_array()))
    t_rows = np.empty(n_samples)
    ship_rows = np.empty((n_samples, 6))
    act_rows = np.empty((n_samples, 3))
    wind_rows = np.empty((n_samples, 2))

    for j in range(n_fine + 1):
        cell = j // sub_steps
        if j % steps_per_sample == 0:
            k = j // steps_per_sample
            t_rows[k] = k * sample_period
            ship_rows[k] = state
            act = held_acts[cell]
            act_rows[k] = (act.delta_p, act.delta_s, act.n_p)
            wind_rows[k] = _apparent_wind(state[1], state[3], state[4],
                                          wind_speeds[cell], wind_dirs[cell])
        if j == n_fine:
            break
        act = held_acts[cell]
        state = _rk4_step(state, fine_step, act.delta_p, act.delta_s, act.n_p,
                          wind_speeds[cell], wind_dirs[cell], cfg)
        if not all(math.isfinite(v) for v in state):
            raise DivergenceError(
                f"truth integration diverged at t = {(j + 1) * fine_step:.2f} s")

    if noise_sigma is not None:
        sigma = np.asarray(noise_sigma, dtype=float)
        if sigma.shape != (6,):
            raise ConfigError(f"observation noise sigma must have shape (6,), "
                              f"got {sigma.shape}")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ConfigError("observation noise sigma must be finite and >= 0")
        rng_obs = np.random.default_rng(
            np.random.SeedSequence([int(wind_seed), _OBS_TAG]))
        ship_rows = ship_rows + sigma * rng_obs.standard_normal((n_samples, 6))

    return Trajectory(id=traj_id or f"truth-{int(wind_seed)}",
                      t=t_rows, ship=ship_rows, act=act_rows, wind=wind_rows)
