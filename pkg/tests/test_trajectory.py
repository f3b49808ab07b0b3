"""Core time-series types, CSV round trips, downsampling, differentiation."""

import math

import numpy as np
import pytest

from shipsysid.errors import DataError
from shipsysid.trajectory import (
    CSV_COLUMNS, ActuatorState, Sample, ShipState, Trajectory, WindState,
    downsample, load_trajectory, numerical_acceleration, save_trajectory,
    wrap_angle,
)

from conftest import build_traj


TWO_PI = 2.0 * math.pi


class TestWrapAngle:
    def test_range(self):
        for a in (-7.0, -math.pi, 0.0, 1.0, math.pi, 6.0, 12.0, 100.0):
            w = wrap_angle(a)
            assert 0.0 <= w < TWO_PI
            # same angle modulo 2*pi
            assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)
            assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)

    def test_negative(self):
        assert wrap_angle(-math.pi / 2) == pytest.approx(3 * math.pi / 2)

    def test_exact_period(self):
        assert wrap_angle(TWO_PI) == 0.0
        assert wrap_angle(0.0) == 0.0


class TestStateTypes:
    def test_ship_state_order(self):
        s = ShipState(x0=1, u=2, y0=3, vm=4, psi=5, r=6)
        assert s.as_array().tolist() == [1, 2, 3, 4, 5, 6]
        assert ShipState.from_array([1, 2, 3, 4, 5, 6]) == s

    def test_actuator_order(self):
        a = ActuatorState(delta_p=-0.5, delta_s=0.25, n_p=7.0)
        assert a.as_array().tolist() == [-0.5, 0.25, 7.0]
        assert ActuatorState.from_array(a.as_array()) == a

    def test_wind_negative_speed_rejected(self):
        with pytest.raises(DataError):
            WindState(speed=-0.1, direction=0.0)

    def test_sample_roundtrip(self):
        tr = build_traj(5)
        s = tr.sample(2)
        assert isinstance(s, Sample)
        assert s.t == tr.t[2]
        assert s.ship.as_array() == pytest.approx(tr.ship[2])
        assert s.actuator.as_array() == pytest.approx(tr.act[2])
        assert s.wind.as_array() == pytest.approx(tr.wind[2])


class TestTrajectoryValidation:
    def test_minimum_length(self):
        tr = build_traj(5)
        with pytest.raises(DataError):
            Trajectory(id="x", t=tr.t[:1], ship=tr.ship[:1], act=tr.act[:1],
                       wind=tr.wind[:1])

    def test_shape_mismatch(self):
        tr = build_traj(5)
        with pytest.raises(DataError):
            Trajectory(id="x", t=tr.t, ship=tr.ship[:, :5], act=tr.act,
                       wind=tr.wind)

    def test_non_finite(self):
        tr = build_traj(5)
        ship = tr.ship.copy()
        ship[2, 1] = np.nan
        with pytest.raises(DataError):
            Trajectory(id="x", t=tr.t, ship=ship, act=tr.act, wind=tr.wind)

    def test_non_monotonic_names_row(self):
        tr = build_traj(4)
        t = tr.t.copy()
        t[2] = t[1]  # t = 0, 1, 1, 3
        with pytest.raises(DataError, match="non-monotonic timestamp at row 3"):
            Trajectory(id="x", t=t, ship=tr.ship, act=tr.act, wind=tr.wind)

    def test_negative_wind_speed(self):
        tr = build_traj(4)
        wind = tr.wind.copy()
        wind[1, 0] = -1.0
        with pytest.raises(DataError, match="wind speed"):
            Trajectory(id="x", t=tr.t, ship=tr.ship, act=tr.act, wind=wind)

    def test_arrays_frozen(self):
        tr = build_traj(4)
        with pytest.raises(ValueError):
            tr.ship[0, 0] = 99.0

    def test_from_samples_matches(self):
        tr = build_traj(6)
        tr2 = Trajectory.from_samples("copy", tr.samples)
        assert np.array_equal(tr.ship, tr2.ship)
        assert np.array_equal(tr.t, tr2.t)

    def test_duration(self):
        tr = build_traj(11, dt=0.5)
        assert tr.duration() == pytest.approx(5.0)


class TestCsvRoundTrip:
    def test_roundtrip(self, tmp_path):
        tr = build_traj(9, traj_id="roundtrip")
        p = tmp_path / "roundtrip.csv"
        save_trajectory(tr, p)
        tr2 = load_trajectory(p)
        assert tr2.id == "roundtrip"
        # Non-angle columns serialize at 17 significant digits: exact.
        assert np.array_equal(tr.t, tr2.t)
        assert np.array_equal(tr.ship[:, :4], tr2.ship[:, :4])
        assert np.array_equal(tr.act[:, 2], tr2.act[:, 2])
        assert np.array_equal(tr.wind[:, 0], tr2.wind[:, 0])
        # Angle columns pass through a radians->degrees->radians conversion;
        # exact to the serialized decimal precision (1 ulp).
        assert np.allclose(tr.ship[:, 4:], tr2.ship[:, 4:], rtol=1e-15, atol=1e-16)
        assert np.allclose(tr.act[:, :2], tr2.act[:, :2], rtol=1e-15, atol=1e-16)
        assert np.allclose(tr.wind[:, 1], tr2.wind[:, 1], rtol=1e-15, atol=1e-16)

    def test_save_reaches_byte_fixed_point(self, tmp_path):
        tr = build_traj(9)
        p1, p2, p3 = (tmp_path / f"s{i}.csv" for i in (1, 2, 3))
        save_trajectory(tr, p1)
        save_trajectory(load_trajectory(p1), p2)
        save_trajectory(load_trajectory(p2), p3)
        assert p2.read_bytes() == p3.read_bytes()

    def test_header_exact(self, tmp_path):
        p = tmp_path / "h.csv"
        save_trajectory(build_traj(3), p)
        first = p.read_text().splitlines()[0]
        assert first == "t,x0,u,y0,vm,psi_deg,r_deg,delta_p_deg,delta_s_deg,n_p,U_A,gamma_A_deg"
        assert first == ",".join(CSV_COLUMNS)

    def test_degrees_in_file_radians_in_memory(self, tmp_path):
        p = tmp_path / "deg.csv"
        rows = ["t,x0,u,y0,vm,psi_deg,r_deg,delta_p_deg,delta_s_deg,n_p,U_A,gamma_A_deg",
                "0,0,1,0,0,90,0,0,0,5,1,180",
                "1,1,1,0,0,90,0,0,0,5,1,180"]
        p.write_text("\n".join(rows) + "\n")
        tr = load_trajectory(p)
        assert tr.ship[0, 4] == pytest.approx(math.pi / 2)
        assert tr.wind[0, 1] == pytest.approx(math.pi)

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("time,x0,u\n0,0,0\n1,0,0\n")
        with pytest.raises(DataError, match="header"):
            load_trajectory(p)

    def test_short_row_names_row(self, tmp_path):
        p = tmp_path / "short.csv"
        good = "0,0,1,0,0,0,0,0,0,5,1,0"
        p.write_text(",".join(CSV_COLUMNS) + "\n" + good + "\n1,2,3\n")
        with pytest.raises(DataError, match="row 2"):
            load_trajectory(p)

    def test_non_numeric_cell(self, tmp_path):
        p = tmp_path / "nan.csv"
        good = "0,0,1,0,0,0,0,0,0,5,1,0"
        bad = "1,0,oops,0,0,0,0,0,0,5,1,0"
        p.write_text(",".join(CSV_COLUMNS) + "\n" + good + "\n" + bad + "\n")
        with pytest.raises(DataError, match="row 2"):
            load_trajectory(p)

    def test_non_monotonic_file(self, tmp_path):
        p = tmp_path / "mono.csv"
        row = "{},0,1,0,0,0,0,0,0,5,1,0"
        p.write_text(",".join(CSV_COLUMNS) + "\n"
                     + row.format(0) + "\n" + row.format(1) + "\n"
                     + row.format(1) + "\n")
        with pytest.raises(DataError, match="non-monotonic timestamp at row 3"):
            load_trajectory(p)

    def test_empty_and_single_row(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(DataError):
            load_trajectory(p)
        p.write_text(",".join(CSV_COLUMNS) + "\n0,0,1,0,0,0,0,0,0,5,1,0\n")
        with pytest.raises(DataError, match="at least 2"):
            load_trajectory(p)

    def test_gamma_wrapped_on_load(self, tmp_path):
        p = tmp_path / "wrap.csv"
        rows = [",".join(CSV_COLUMNS),
                "0,0,1,0,0,0,0,0,0,5,1,-90",
                "1,0,1,0,0,0,0,0,0,5,1,370"]
        p.write_text("\n".join(rows) + "\n")
        tr = load_trajectory(p)
        assert tr.wind[0, 1] == pytest.approx(3 * math.pi / 2)
        assert tr.wind[1, 1] == pytest.approx(math.radians(10))


class TestDownsample:
    def test_ten_to_one_hz(self):
        tr = build_traj(101, dt=0.1)
        out = downsample(tr, 1.0)
        assert len(out) == 11
        assert np.allclose(out.t, np.arange(11.0))
        assert np.array_equal(out.ship, tr.ship[::10])

    def test_identity(self):
        tr = build_traj(7, dt=1.0)
        assert downsample(tr, 1.0) is tr

    def test_non_integer_ratio(self):
        tr = build_traj(11, dt=0.1)
        with pytest.raises(DataError, match="integer multiple"):
            downsample(tr, 0.25)

    def test_twice_equals_once(self):
        tr = build_traj(101, dt=0.1)
        once = downsample(tr, 1.0)
        twice = downsample(downsample(tr, 0.5), 1.0)
        assert np.array_equal(once.t, twice.t)
        assert np.array_equal(once.ship, twice.ship)


class TestNumericalAcceleration:
    def test_linear_exact(self):
        tr = build_traj(5)
        ship = tr.ship.copy()
        ship[:, 1] = np.arange(5.0)          # u = 0,1,2,3,4
        tr2 = Trajectory(id="lin", t=tr.t, ship=ship, act=tr.act, wind=tr.wind)
        acc = numerical_acceleration(tr2)
        assert np.allclose(acc.values[:, 0], 1.0, atol=1e-12)

    def test_quadratic_hand_case(self):
        tr = build_traj(3)
        ship = tr.ship.copy()
        ship[:, 1] = [0.0, 1.0, 4.0]
        tr2 = Trajectory(id="quad", t=tr.t, ship=ship, act=tr.act, wind=tr.wind)
        acc = numerical_acceleration(tr2)
        assert acc.values[:, 0] == pytest.approx([1.0, 2.0, 3.0])

    def test_constant_zero(self):
        tr = build_traj(6)
        ship = tr.ship.copy()
        ship[:, [1, 3, 5]] = 0.37
        tr2 = Trajectory(id="const", t=tr.t, ship=ship, act=tr.act, wind=tr.wind)
        assert np.allclose(numerical_acceleration(tr2).values, 0.0, atol=1e-15)

    def test_affine_exact_everywhere(self):
        t = np.array([0.0, 0.7, 1.1, 2.4, 3.0])
        tr = build_traj(5)
        ship = tr.ship.copy()
        ship[:, 1] = 2.0 * t - 1.0
        ship[:, 3] = -0.5 * t + 0.2
        ship[:, 5] = 0.1 * t
        tr2 = Trajectory(id="aff", t=t, ship=ship, act=tr.act, wind=tr.wind)
        acc = numerical_acceleration(tr2)
        assert np.allclose(acc.values[:, 0], 2.0, atol=1e-12)
        assert np.allclose(acc.values[:, 1], -0.5, atol=1e-12)
        assert np.allclose(acc.values[:, 2], 0.1, atol=1e-12)

    def test_too_short(self):
        tr = build_traj(2)
        with pytest.raises(DataError, match="too short"):
            numerical_acceleration(tr)

    def test_alignment(self):
        tr = build_traj(12)
        acc = numerical_acceleration(tr)
        assert len(acc) == len(tr)
        assert acc.source_id == tr.id
