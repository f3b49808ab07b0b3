"""Euler rollout, weighted error, trapezoidal loss, objective."""

import math

import numpy as np
import pytest

from shipsysid.augmentation import METHOD_REFERENCE, WindowDataset, slice_windows
from shipsysid.dynamics import (
    DynamicModel, MlpParameters, Standardizer, full_derivative,
)
from shipsysid.errors import DataError, DivergenceError
from shipsysid.rollout import (
    DEFAULT_WEIGHTS, ErrorWeights, RolloutResult, batch_errors, batch_windows,
    dataset_loss, euler_path, euler_rollout, objective, rollout_batch,
    state_error, trapezoid_coeffs, trapezoid_integral, window_loss,
    write_error_csv,
)
from shipsysid.trajectory import ShipState

from conftest import (
    build_traj, simple_stats, single_window_dataset, window_from_arrays,
    zero_params,
)


def make_window(n=6, vel0=None):
    """Window with uniform 1 s sampling; optionally pin the first velocities."""
    tr = build_traj(n)
    ship = tr.ship.copy()
    if vel0 is not None:
        ship[0, [1, 3, 5]] = vel0
    return window_from_arrays(tr.t, ship, tr.act, tr.wind)


class TestErrorWeights:
    def test_default(self):
        assert tuple(ErrorWeights.default().w) == DEFAULT_WEIGHTS

    def test_shape_guard(self):
        with pytest.raises(DataError):
            ErrorWeights(np.ones(5))

    def test_negative_guard(self):
        with pytest.raises(DataError):
            ErrorWeights(np.array([0, 100, 0, -100, 0, 10.0]))


class TestStateError:
    def test_identical_states(self):
        x = np.arange(6.0)
        assert state_error(x, x, ErrorWeights.default()) == 0.0

    def test_position_and_heading_ignored(self):
        # default weights zero out x0, y0, psi
        a = np.array([0.0, 1.0, 0.0, 0.2, 0.0, 0.05])
        b = a + np.array([5.0, 0.0, -3.0, 0.0, 1.0, 0.0])
        assert state_error(a, b, ErrorWeights.default()) == 0.0

    def test_hand_case(self):
        w = ErrorWeights.default()
        a = np.zeros(6)
        b = np.array([5.0, 0.01, -3.0, 0.02, 1.0, 0.1])
        # (100*0.01)^2 + (100*0.02)^2 + (10*0.1)^2 = 1 + 4 + 1
        assert state_error(b, a, w) == pytest.approx(6.0, rel=1e-12)

    def test_dataclass_input(self):
        a = ShipState(0, 1.0, 0, 0.2, 0, 0.05)
        b = ShipState(0, 1.1, 0, 0.2, 0, 0.05)
        assert state_error(a, b, ErrorWeights.default()) == \
            pytest.approx(100.0, rel=1e-12)


class TestTrapezoid:
    def test_hand_case(self):
        assert trapezoid_integral([0.0, 2.0, 4.0], [0.0, 1.0, 2.0]) == \
            pytest.approx(4.0, abs=1e-15)

    def test_constant_integrand(self):
        t = np.array([0.0, 1.0, 2.5, 7.0])
        assert trapezoid_integral(np.full(4, 3.0), t) == \
            pytest.approx(3.0 * 7.0, rel=1e-15)

    def test_first_interval_half_rule(self):
        # d0 = 0 so the first trapezoid contributes d1 * dt0 / 2
        assert trapezoid_integral([0.0, 3.0], [0.0, 2.0]) == \
            pytest.approx(3.0, rel=1e-15)

    def test_coeffs_nonuniform(self):
        t = np.array([0.0, 1.0, 3.0])
        assert np.allclose(trapezoid_coeffs(t), [0.5, 1.5, 1.0])

    def test_matches_pairwise_sum(self):
        rng = np.random.default_rng(2)
        t = np.sort(rng.uniform(0, 10, size=17))
        d = rng.uniform(0, 5, size=17)
        direct = sum((d[i + 1] + d[i]) / 2 * (t[i + 1] - t[i])
                     for i in range(16))
        assert trapezoid_integral(d, t) == pytest.approx(direct, rel=1e-13)

    def test_refinement_convergence(self):
        # smooth integrand: 10x refinement cuts quadrature error by >= 50x
        exact = math.exp(2.0) - 1.0
        errs = []
        for n in (11, 101):
            t = np.linspace(0.0, 2.0, n)
            errs.append(abs(trapezoid_integral(np.exp(t), t) - exact))
        assert errs[0] / errs[1] >= 50.0


class TestEulerPath:
    def test_zero_derivative(self):
        out = euler_path(np.array([1.0, 2.0]), np.ones(5),
                         lambda i, x: np.zeros(2))
        assert out.shape == (6, 2)
        assert np.all(out == [1.0, 2.0])

    def test_exponential_decay(self):
        out = euler_path(1.0, np.full(10, 0.1), lambda i, x: -x)
        assert out[-1, 0] == pytest.approx(0.9 ** 10, rel=1e-12)
        assert out[-1, 0] == pytest.approx(0.34868, abs=1e-5)

    def test_halving_reduces_error_linearly(self):
        exact = math.exp(-1.0)
        errs = []
        for n in (10, 20):
            out = euler_path(1.0, np.full(n, 1.0 / n), lambda i, x: -x)
            errs.append(abs(out[-1, 0] - exact))
        assert 1.8 <= errs[0] / errs[1] <= 2.2

    def test_divergence_names_step(self):
        with pytest.raises(DivergenceError, match="step 1"):
            euler_path(1.0, np.ones(3), lambda i, x: np.array([np.inf]))

    def test_divergence_mid_path(self):
        def deriv(i, x):
            return np.array([np.nan]) if i == 2 else -x
        with pytest.raises(DivergenceError, match="step 3"):
            euler_path(1.0, np.ones(5), deriv)

    def test_step_index_passed(self):
        seen = []
        euler_path(0.0, np.ones(4), lambda i, x: seen.append(i) or np.zeros(1))
        assert seen == [0, 1, 2, 3]


class TestEulerRollout:
    def test_frozen_initial_state(self, zero_model):
        w = make_window(vel0=(0.0, 0.0, 0.0))
        res = euler_rollout(w, zero_model)
        # zero velocities and zero acceleration: nothing ever moves
        for i in range(len(w)):
            assert np.array_equal(res.states[i], w.ship[0])

    def test_initial_state_bit_exact_and_d0_zero(self, small_model):
        w = make_window()
        res = euler_rollout(w, small_model)
        assert np.array_equal(res.states[0], w.ship[0])
        assert res.errors[0] == 0.0

    def test_constant_turn_rate_heading(self, zero_model):
        w = make_window(vel0=(0.0, 0.0, 0.1))
        res = euler_rollout(w, zero_model)
        psi0 = w.ship[0, 4]
        for i in range(len(w)):
            assert res.states[i, 4] == pytest.approx(psi0 + 0.1 * i, rel=1e-12)
            assert res.states[i, 5] == 0.1

    def test_loss_field_consistency(self, small_model):
        w = make_window()
        weights = ErrorWeights.default()
        res = euler_rollout(w, small_model, weights)
        assert res.loss == pytest.approx(
            trapezoid_integral(res.errors, w.t), rel=1e-12)
        assert res.loss == pytest.approx(window_loss(res, w, weights), rel=1e-12)

    def test_divergence(self):
        # saturated outputs scaled by a huge sigma_acc blow up within two steps
        stats = Standardizer(np.zeros(3), np.ones(3), np.zeros(3), np.ones(3),
                             np.array([1.0, np.pi]), np.ones(2),
                             np.zeros(3), np.full(3, 1e308))
        params = MlpParameters(
            (np.zeros((8, 3)),), (np.array([1.0, 1.0, 1.0]),))
        model = DynamicModel(params, stats)
        with np.errstate(over="ignore"):
            with pytest.raises(DivergenceError, match="step"):
                euler_rollout(make_window(), model)


class TestDualRouteRollout:
    """Batched rollout must agree with a step-by-step full_derivative loop."""

    def manual_rollout(self, w, model):
        xs = [w.ship[0].copy()]
        for i in range(len(w) - 1):
            dt = w.t[i + 1] - w.t[i]
            f = full_derivative(xs[-1], w.act[i], w.wind[i], model)
            xs.append(xs[-1] + dt * f)
        return np.stack(xs)

    def test_single_window(self, small_model):
        w = make_window(10)
        res = euler_rollout(w, small_model)
        manual = self.manual_rollout(w, small_model)
        assert np.allclose(res.states, manual, rtol=1e-12, atol=1e-12)

    def test_batch_of_windows(self, small_model):
        tr = build_traj(30)
        ds = slice_windows(tr, 8, 5)
        batch = batch_windows(ds.windows)
        states, _ = rollout_batch(batch, small_model)
        for b, w in enumerate(ds.windows):
            manual = self.manual_rollout(w, small_model)
            assert np.allclose(states[b], manual, rtol=1e-11, atol=1e-11)

    def test_batch_errors_match_state_error(self, small_model):
        tr = build_traj(30)
        ds = slice_windows(tr, 8, 5)
        batch = batch_windows(ds.windows)
        states, _ = rollout_batch(batch, small_model)
        weights = ErrorWeights.default()
        d, losses = batch_errors(states, batch, weights)
        for b, w in enumerate(ds.windows):
            for i in range(8):
                assert d[b, i] == pytest.approx(
                    state_error(states[b, i], w.ship[i], weights),
                    rel=1e-12, abs=1e-15)
            assert losses[b] == pytest.approx(
                trapezoid_integral(d[b], w.t), rel=1e-12)

    def test_left_endpoint_controls(self, zero_model):
        # altering the last actuator/wind sample must not change the rollout
        w = make_window(6, vel0=(0.3, 0.0, 0.0))
        act2 = w.act.copy()
        act2[-1] += 100.0
        wind2 = w.wind.copy()
        wind2[-1, 0] += 50.0
        w2 = window_from_arrays(w.t, w.ship, act2, wind2)
        a = euler_rollout(w, zero_model)
        b = euler_rollout(w2, zero_model)
        assert np.array_equal(a.states, b.states)


class TestWindowLoss:
    def test_hand_case(self):
        # errors [0, 2, 4] at unit spacing integrate to 4
        t = np.array([0.0, 1.0, 2.0])
        ship = np.zeros((3, 6))
        states = np.zeros((3, 6))
        states[:, 1] = [0.0, math.sqrt(2), 2.0]
        w = window_from_arrays(t, ship, np.zeros((3, 3)), np.ones((3, 2)))
        res = RolloutResult(states=states, errors=np.zeros(3), loss=0.0)
        weights = ErrorWeights(np.array([0, 1.0, 0, 0, 0, 0]))
        assert window_loss(res, w, weights) == pytest.approx(4.0, rel=1e-12)

    def test_nonnegative(self, small_model):
        w = make_window()
        res = euler_rollout(w, small_model)
        assert res.loss >= 0.0
        assert np.all(res.errors >= 0.0)


class TestDatasetLoss:
    def test_single_window(self, small_model):
        w = make_window()
        ds = single_window_dataset(w)
        weights = ErrorWeights.default()
        assert dataset_loss(ds, small_model, weights) == pytest.approx(
            euler_rollout(w, small_model, weights).loss, rel=1e-12)

    def test_mean_of_two(self, small_model):
        tr = build_traj(20)
        ds = slice_windows(tr, 10, 10)
        assert len(ds) == 2
        weights = ErrorWeights.default()
        la = euler_rollout(ds.windows[0], small_model, weights).loss
        lb = euler_rollout(ds.windows[1], small_model, weights).loss
        assert dataset_loss(ds, small_model, weights) == pytest.approx(
            (la + lb) / 2, rel=1e-12)

    def test_duplication_invariance(self, small_model):
        tr = build_traj(20)
        ds = slice_windows(tr, 10, 10)
        dup = WindowDataset(ds.windows + ds.windows, METHOD_REFERENCE,
                            {"window_steps": 10})
        weights = ErrorWeights.default()
        assert dataset_loss(dup, small_model, weights) == pytest.approx(
            dataset_loss(ds, small_model, weights), rel=1e-14)

    def test_empty_dataset(self, small_model):
        with pytest.raises(DataError, match="empty"):
            dataset_loss(WindowDataset((), METHOD_REFERENCE, {}),
                         small_model, ErrorWeights.default())

    def test_chunked_path_matches_manual_mean(self, small_model):
        # more windows than one chunk (256) exercises the chunk loop
        tr = build_traj(320)
        ds = slice_windows(tr, 2, 1)
        assert len(ds) > 256
        weights = ErrorWeights.default()
        manual = np.mean([euler_rollout(w, small_model, weights).loss
                          for w in ds.windows])
        assert dataset_loss(ds, small_model, weights) == pytest.approx(
            manual, rel=1e-11)


class TestObjective:
    def test_lambda_zero(self, small_model):
        ds = single_window_dataset(make_window())
        weights = ErrorWeights.default()
        assert objective(ds, small_model, weights, 0.0) == \
            dataset_loss(ds, small_model, weights)

    def test_ridge_term(self):
        # theta with squared norm 4 and lambda 1e-2 adds exactly 0.04
        w0 = np.zeros((8, 3))
        w0[0, 0] = 2.0
        model = DynamicModel(MlpParameters((w0,), (np.zeros(3),)),
                             simple_stats())
        ds = single_window_dataset(make_window())
        weights = ErrorWeights.default()
        base = dataset_loss(ds, model, weights)
        assert objective(ds, model, weights, 1e-2) == \
            pytest.approx(base + 0.04, rel=1e-12)

    def test_negative_lambda(self, small_model):
        ds = single_window_dataset(make_window())
        with pytest.raises(DataError):
            objective(ds, small_model, ErrorWeights.default(), -0.1)


class TestErrorCsv:
    def test_layout(self, small_model, tmp_path):
        w = make_window()
        res = euler_rollout(w, small_model)
        path = tmp_path / "err.csv"
        write_error_csv(path, "win-0", w, res)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == ("window_id,step,t,d,u_meas,u_sim,vm_meas,vm_sim,"
                            "r_meas,r_sim")
        assert len(lines) == 1 + len(w)
        first = lines[1].split(",")
        assert first[0] == "win-0"
        assert int(first[1]) == 0
        assert float(first[3]) == 0.0
        # measured and simulated u agree at step 0
        assert float(first[4]) == float(first[5])
