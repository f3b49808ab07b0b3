"""Trajectory containers and CSV ingestion for low-speed ship maneuvering records.

Conventions used across the package:

* Every 6-vector over ship states uses the fixed component order
  ``(x0, u, y0, vm, psi, r)``: earth-fixed positions (m), surge velocity,
  sway velocity at midship (m/s), heading (rad), yaw rate (rad/s).
* Angles are radians internally; degrees appear only in CSV files.
* ``psi`` is stored unwrapped (continuous across +-pi), so differentiation and
  integration never see wrap jumps.
* Apparent wind direction is the angle the wind comes *from*, measured from the
  bow, clockwise positive seen from above, wrapped to [0, 2*pi).
* Actuator channels are ``(delta_p, delta_s, n_p)``: port and starboard rudder
  angles (rad) and propeller revolutions (1/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

STATE_FIELDS = ("x0", "u", "y0", "vm", "psi", "r")
ACTUATOR_FIELDS = ("delta_p", "delta_s", "n_p")
WIND_FIELDS = ("speed", "direction")

# Column order of the trajectory CSV contract.  Angles in the file are degrees
# and the yaw rate is deg/s; everything else is SI.
CSV_COLUMNS = (
    "t", "x0", "u", "y0", "vm", "psi_deg", "r_deg",
    "delta_p_deg", "delta_s_deg", "n_p", "U_A", "gamma_A_deg",
)

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    w = math.fmod(a, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    return w if w < TWO_PI else 0.0


@dataclass(frozen=True)
class ShipState:
    """Planar ship state; see the module docstring for units and sign conventions."""

    x0: float
    u: float
    y0: float
    vm: float
    psi: float
    r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.u, self.y0, self.vm, self.psi, self.r], dtype=float)

    @classmethod
    def from_array(cls, a) -> "ShipState":
        x0, u, y0, vm, psi, r = (float(v) for v in a)
        return cls(x0, u, y0, vm, psi, r)


@dataclass(frozen=True)
class ActuatorState:
    """Port/starboard rudder angles (rad) and propeller revolutions (1/s)."""

    delta_p: float
    delta_s: float
    n_p: float

    def as_array(self) -> np.ndarray:
        return np.array([self.delta_p, self.delta_s, self.n_p], dtype=float)

    @classmethod
    def from_array(cls, a) -> "ActuatorState":
        delta_p, delta_s, n_p = (float(v) for v in a)
        return cls(delta_p, delta_s, n_p)


@dataclass(frozen=True)
class WindState:
    """Apparent wind: speed (m/s) and wind-from direction off the bow (rad, [0, 2*pi))."""

    speed: float
    direction: float

    def __post_init__(self):
        if self.speed < 0.0:
            raise DataError(f"apparent wind speed must be >= 0, got {self.speed}")

    def as_array(self) -> np.ndarray:
        return np.array([self.speed, self.direction], dtype=float)

    @classmethod
    def from_array(cls, a) -> "WindState":
        speed, direction = (float(v) for v in a)
        return cls(speed, direction)


@dataclass(frozen=True)
class Sample:
    """One time-stamped measurement row."""

    t: float
    ship: ShipState
    actuator: ActuatorState
    wind: WindState


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _check_series(t: np.ndarray, ship: np.ndarray, act: np.ndarray,
                  wind: np.ndarray, what: str) -> None:
    n = t.shape[0]
    if n < 2:
        raise DataError(f"{what} needs at least 2 samples, got {n}")
    if ship.shape != (n, 6) or act.shape != (n, 3) or wind.shape != (n, 2):
        raise DataError(
            f"{what} arrays are inconsistent: t{t.shape} ship{ship.shape} "
            f"act{act.shape} wind{wind.shape}")
    for name, arr in (("t", t), ("ship", ship), ("actuator", act), ("wind", wind)):
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{what} contains non-finite values in '{name}'")
    bad = np.nonzero(np.diff(t) <= 0.0)[0]
    if bad.size:
        # 1-based data row of the offending (second) timestamp.
        raise DataError(f"non-monotonic timestamp at row {bad[0] + 2}")
    if np.any(wind[:, 0] < 0.0):
        row = int(np.nonzero(wind[:, 0] < 0.0)[0][0]) + 1
        raise DataError(f"negative apparent wind speed at row {row}")


class _SampleSeries:
    """Shared row-accessor mixin for Trajectory and Window."""

    t: np.ndarray
    ship: np.ndarray
    act: np.ndarray
    wind: np.ndarray

    def __len__(self) -> int:
        return self.t.shape[0]

    def sample(self, i: int) -> Sample:
        return Sample(
            t=float(self.t[i]),
            ship=ShipState.from_array(self.ship[i]),
            actuator=ActuatorState.from_array(self.act[i]),
            wind=WindState.from_array(self.wind[i]),
        )

    @property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(self.sample(i) for i in range(len(self)))


@dataclass(frozen=True)
class Trajectory(_SampleSeries):
    """A uniformly or irregularly sampled maneuvering record.

    Arrays are frozen (non-writeable) after construction; treat instances as
    immutable values.  ``ship`` columns follow STATE_FIELDS, ``act`` follows
    ACTUATOR_FIELDS, ``wind`` follows WIND_FIELDS.
    """

    id: str
    t: np.ndarray
    ship: np.ndarray
    act: np.ndarray
    wind: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _freeze(self.t))
        object.__setattr__(self, "ship", _freeze(self.ship))
        object.__setattr__(self, "act", _freeze(self.act))
        object.__setattr__(self, "wind", _freeze(self.wind))
        _check_series(self.t, self.ship, self.act, self.wind, f"trajectory '{self.id}'")

    @classmethod
    def from_samples(cls, traj_id: str, samples) -> "Trajectory":
        samples = list(samples)
        return cls(
            id=traj_id,
            t=np.array([s.t for s in samples]),
            ship=np.array([s.ship.as_array() for s in samples]),
            act=np.array([s.actuator.as_array() for s in samples]),
            wind=np.array([s.wind.as_array() for s in samples]),
        )

    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


@dataclass(frozen=True)
class AccelerationSeries:
    """Numerically differentiated (udot, vmdot, rdot), aligned with a source series."""

    source_id: str
    values: np.ndarray  # (n, 3)

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values.ndim != 2 or self.values.shape[1] != 3:
            raise DataError(f"acceleration series must be (n, 3), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"acceleration series for '{self.source_id}' is non-finite")

    def __len__(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# CSV ingestion


def _format_row(values) -> str:
    return ",".join(format(v, ".17g") for v in values)


def write_series_csv(path, t: np.ndarray, ship: np.ndarray,
                     act: np.ndarray, wind: np.ndarray) -> None:
    """Write one sample series in the trajectory CSV contract (degrees in file)."""
    deg = math.degrees
    lines = [",".join(CSV_COLUMNS)]
    for i in range(t.shape[0]):
        lines.append(_format_row((
            t[i],
            ship[i, 0], ship[i, 1], ship[i, 2], ship[i, 3],
            deg(ship[i, 4]), deg(ship[i, 5]),
            deg(act[i, 0]), deg(act[i, 1]), act[i, 2],
            wind[i, 0], deg(wind[i, 1]),
        )))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_series_csv(path):
    """Read one sample series; returns (t, ship, act, wind) arrays in radians.

    Raises DataError naming the offending 1-based data row on malformed input.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != CSV_COLUMNS:
        raise DataError(
            f"{path}: bad header {','.join(header)!r}; expected {','.join(CSV_COLUMNS)!r}")
    n = len(lines) - 1
    if n < 2:
        raise DataError(f"{path}: needs at least 2 data rows, got {n}")
    raw = np.empty((n, len(CSV_COLUMNS)))
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise DataError(f"{path}: row {i + 1} has {len(parts)} fields, "
                            f"expected {len(CSV_COLUMNS)}")
        try:
            raw[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"{path}: row {i + 1}: {exc}") from exc
        if not np.all(np.isfinite(raw[i])):
            col = CSV_COLUMNS[int(np.nonzero(~np.isfinite(raw[i]))[0][0])]
            raise DataError(f"{path}: non-finite value in column '{col}' at row {i + 1}")

    t = raw[:, 0]
    bad = np.nonzero(np.diff(t) <= 0.0)[0]
    if bad.size:
        raise DataError(f"{path}: non-monotonic timestamp at row {bad[0] + 2}")
    rad = np.radians
    ship = np.column_stack((raw[:, 1], raw[:, 2], raw[:, 3], raw[:, 4],
                            rad(raw[:, 5]), rad(raw[:, 6])))
    act = np.column_stack((rad(raw[:, 7]), rad(raw[:, 8]), raw[:, 9]))
    if np.any(raw[:, 10] < 0.0):
        row = int(np.nonzero(raw[:, 10] < 0.0)[0][0]) + 1
        raise DataError(f"{path}: negative apparent wind speed at row {row}")
    gamma = np.array([wrap_angle(g) for g in rad(raw[:, 11])])
    wind = np.column_stack((raw[:, 10], gamma))
    return t, ship, act, wind


def load_trajectory(path) -> Trajectory:
    """Load a trajectory CSV; the file stem becomes the trajectory id."""
    t, ship, act, wind = read_series_csv(path)
    return Trajectory(id=Path(path).stem, t=t, ship=ship, act=act, wind=wind)


def save_trajectory(traj: Trajectory, path) -> None:
    write_series_csv(path, traj.t, traj.ship, traj.act, traj.wind)


# ---------------------------------------------------------------------------
# Resampling and differentiation


def downsample(traj: Trajectory, target_period: float) -> Trajectory:
    """Keep every k-th sample so the sampling period becomes ``target_period``.

    The target must be an integer multiple of the source period (taken from the
    first interval) within 1e-9 relative tolerance.
    """
    src = float(traj.t[1] - traj.t[0])
    ratio = target_period / src
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, abs(ratio)):
        raise DataError(
            f"target period {target_period} is not an integer multiple of the "
            f"source period {src} (ratio {ratio})")
    if k == 1:
        return traj
    return Trajectory(
        id=traj.id,
        t=traj.t[::k].copy(),
        ship=traj.ship[::k].copy(),
        act=traj.act[::k].copy(),
        wind=traj.wind[::k].copy(),
    )


def numerical_acceleration(traj: Trajectory) -> AccelerationSeries:
    """Differentiate (u, vm, r) in time.

    Central differences at interior points, one-sided first differences at the
    two endpoints; exact for series affine in time.  Timestamps may be
    non-uniform.
    """
    n = len(traj)
    if n < 3:
        raise DataError(f"trajectory '{traj.id}' too short to differentiate ({n} samples)")
    nu = traj.ship[:, [1, 3, 5]]
    t = traj.t
    out = np.empty_like(nu)
    out[0] = (nu[1] - nu[0]) / (t[1] - t[0])
    out[-1] = (nu[-1] - nu[-2]) / (t[-1] - t[-2])
    out[1:-1] = (nu[2:] - nu[:-2]) / (t[2:] - t[:-2])[:, None]
    return AccelerationSeries(source_id=traj.id, values=out)
