"""Euler rollout of the learned model over measurement windows, and the
prediction-error loss.

A window is simulated open loop: the state starts at the measured first
sample, the derivative uses the *simulated* ship state but the *measured*
actuator and wind values at each step's left endpoint, and integration is
explicit Euler over the measured timestamps.  The per-step error

    d_i = || w * (x_sim(t_i) - x(t_i)) ||^2

is integrated in time with the trapezoidal rule to give the window loss; a
dataset loss is the mean window loss.  Rollouts are batched across windows
(they advance in lockstep through their steps), which is what makes training
through 100-step windows practical in NumPy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import DynamicModel, _mlp_forward_cached
from .errors import DataError, DivergenceError
from .trajectory import ShipState, _freeze

NU_IDX = (1, 3, 5)   # velocity slots inside the 6-state
PSI_IDX = 4

DEFAULT_WEIGHTS = (0.0, 100.0, 0.0, 100.0, 0.0, 10.0)

_CHUNK = 256  # windows per batched rollout; bounds cache memory during training


@dataclass(frozen=True)
class ErrorWeights:
    """Per-channel weights w in d = ||w * (x_sim - x)||^2, state order."""

    w: np.ndarray

    def __post_init__(self):
        w = _freeze(np.asarray(self.w, dtype=float))
        object.__setattr__(self, "w", w)
        if w.shape != (6,):
            raise DataError(f"error weights must have shape (6,), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise DataError("error weights must be finite and >= 0")

    @classmethod
    def default(cls) -> "ErrorWeights":
        return cls(np.array(DEFAULT_WEIGHTS))


@dataclass(frozen=True)
class RolloutResult:
    """Simulated states, per-step errors d_i, and the trapezoidal window loss."""

    states: np.ndarray   # (I, 6)
    errors: np.ndarray   # (I,), errors[0] == 0 by construction
    loss: float

    def __post_init__(self):
        object.__setattr__(self, "states", _freeze(self.states))
        object.__setattr__(self, "errors", _freeze(self.errors))


def state_error(x_sim, x, weights: ErrorWeights) -> float:
    """d = sum_j (w_j * (x_sim_j - x_j))^2 for one state pair."""
    a = x_sim.as_array() if isinstance(x_sim, ShipState) else np.asarray(x_sim, dtype=float)
    b = x.as_array() if isinstance(x, ShipState) else np.asarray(x, dtype=float)
    wd = weights.w * (a - b)
    return float(wd @ wd)


def trapezoid_coeffs(t: np.ndarray) -> np.ndarray:
    """Weights c_i with sum_i c_i * d_i = sum_i (d_{i+1} + d_i)/2 * dt_i."""
    t = np.asarray(t, dtype=float)
    dts = np.diff(t)
    c = np.empty_like(t)
    c[0] = dts[0] / 2.0
    c[-1] = dts[-1] / 2.0
    c[1:-1] = (dts[:-1] + dts[1:]) / 2.0
    return c


def trapezoid_integral(d: np.ndarray, t: np.ndarray) -> float:
    """Trapezoidal time integral of a sampled series."""
    return float(trapezoid_coeffs(t) @ np.asarray(d, dtype=float))


def euler_path(x0, dts, deriv) -> np.ndarray:
    """Explicit Euler with an injectable derivative: x_{i+1} = x_i + dt_i * f(i, x_i).

    ``deriv(i, x)`` returns the derivative at step i.  Raises DivergenceError
    naming the first non-finite step.  Dimension-agnostic (tests use it on
    scalar linear systems; the model rollout uses the fused batched path).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dts = np.asarray(dts, dtype=float)
    out = np.empty((dts.shape[0] + 1,) + x0.shape)
    out[0] = x0
    for i in range(dts.shape[0]):
        out[i + 1] = out[i] + dts[i] * np.asarray(deriv(i, out[i]), dtype=float)
        if not np.all(np.isfinite(out[i + 1])):
            raise DivergenceError(f"non-finite state at step {i + 1}")
    return out


# ---------------------------------------------------------------------------
# Batched rollout over windows


@dataclass(frozen=True)
class WindowBatch:
    """Stacked window arrays: everything the rollout and loss need."""

    t: np.ndarray       # (B, I)
    x: np.ndarray       # (B, I, 6) measured states
    act: np.ndarray     # (B, I, 3)
    wind: np.ndarray    # (B, I, 2)
    dts: np.ndarray     # (B, I-1)
    coeffs: np.ndarray  # (B, I) trapezoid weights

    @property
    def size(self) -> int:
        return self.t.shape[0]

    @property
    def steps(self) -> int:
        return self.t.shape[1]

    def select(self, idx) -> "WindowBatch":
        return WindowBatch(self.t[idx], self.x[idx], self.act[idx],
                           self.wind[idx], self.dts[idx], self.coeffs[idx])


def batch_windows(windows) -> WindowBatch:
    windows = list(windows)
    if not windows:
        raise DataError("cannot batch an empty window list")
    t = np.stack([w.t for w in windows])
    dts = np.diff(t, axis=1)
    c = np.empty_like(t)
    c[:, 0] = dts[:, 0] / 2.0
    c[:, -1] = dts[:, -1] / 2.0
    c[:, 1:-1] = (dts[:, :-1] + dts[:, 1:]) / 2.0
    return WindowBatch(
        t=t,
        x=np.stack([w.ship for w in windows]),
        act=np.stack([w.act for w in windows]),
        wind=np.stack([w.wind for w in windows]),
        dts=dts,
        coeffs=c,
    )


class RolloutCache:
    """Forward-pass values kept for backpropagation through the rollout."""

    __slots__ = ("states", "inputs", "hidden")

    def __init__(self, states, inputs, hidden):
        self.states = states   # (B, I, 6) simulated
        self.inputs = inputs   # (B, I-1, 8) standardized network inputs
        self.hidden = hidden   # list over hidden layers of (B, I-1, width)


def rollout_batch(batch: WindowBatch, model: DynamicModel, keep_cache: bool = False):
    """Simulate every window in the batch; returns (states, cache-or-None)."""
    stats = model.stats
    params = model.params
    B, I = batch.t.shape
    xs = np.empty((B, I, 6))
    xs[:, 0] = batch.x[:, 0]

    # Actuator and wind enter at left endpoints only; standardize them up front.
    sa = (batch.act[:, :-1] - stats.mu_act) / stats.sigma_act
    sw = (batch.wind[:, :-1] - stats.mu_wind) / stats.sigma_wind

    inputs = np.empty((B, I - 1, 8)) if keep_cache else None
    hidden = ([np.empty((B, I - 1, w.shape[1])) for w in params.weights[:-1]]
              if keep_cache else None)

    mu_nu, sig_nu = stats.mu_nu, stats.sigma_nu
    mu_acc, sig_acc = stats.mu_acc, stats.sigma_acc
    f = np.empty((B, 6))
    for i in range(I - 1):
        cur = xs[:, i]
        nu = cur[:, NU_IDX]
        s8 = np.empty((B, 8))
        s8[:, 0:3] = (nu - mu_nu) / sig_nu
        s8[:, 3:6] = sa[:, i]
        s8[:, 6:8] = sw[:, i]
        if keep_cache:
            inputs[:, i] = s8
            h = s8
            for k, (w, b) in enumerate(zip(params.weights[:-1], params.biases[:-1])):
                h = np.tanh(h @ w + b)
                hidden[k][:, i] = h
            y = h @ params.weights[-1] + params.biases[-1]
        else:
            y, _ = _mlp_forward_cached(s8, params)
        nudot = mu_acc + sig_acc * y
        psi = cur[:, PSI_IDX]
        c, s = np.cos(psi), np.sin(psi)
        f[:, 0] = nu[:, 0] * c - nu[:, 1] * s
        f[:, 2] = nu[:, 0] * s + nu[:, 1] * c
        f[:, 4] = nu[:, 2]
        f[:, 1] = nudot[:, 0]
        f[:, 3] = nudot[:, 1]
        f[:, 5] = nudot[:, 2]
        nxt = cur + batch.dts[:, i, None] * f
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"non-finite simulated state at step {i + 1}")
        xs[:, i + 1] = nxt

    cache = RolloutCache(xs, inputs, hidden) if keep_cache else None
    return xs, cache


def batch_errors(states: np.ndarray, batch: WindowBatch, weights: ErrorWeights):
    """Per-step errors (B, I) and trapezoidal window losses (B,)."""
    wd = (states - batch.x) * weights.w
    d = np.einsum("bij,bij->bi", wd, wd)
    return d, (batch.coeffs * d).sum(axis=1)


# ---------------------------------------------------------------------------
# Public loss surface


def euler_rollout(window, model: DynamicModel,
                  weights: ErrorWeights | None = None) -> RolloutResult:
    """Simulate one window open loop from its measured initial state."""
    if weights is None:
        weights = ErrorWeights.default()
    batch = batch_windows([window])
    states, _ = rollout_batch(batch, model)
    d, losses = batch_errors(states, batch, weights)
    return RolloutResult(states=states[0], errors=d[0], loss=float(losses[0]))


def window_loss(result: RolloutResult, window, weights: ErrorWeights) -> float:
    """Trapezoidal time integral of the weighted state error over one window."""
    wd = (result.states - window.ship) * weights.w
    d = np.einsum("ij,ij->i", wd, wd)
    return trapezoid_integral(d, window.t)


def dataset_loss(dataset, model: DynamicModel, weights: ErrorWeights) -> float:
    """Mean window loss over a dataset (batched, chunked, canonical order)."""
    windows = dataset.windows if hasattr(dataset, "windows") else tuple(dataset)
    if not windows:
        raise DataError("cannot evaluate an empty dataset")
    total = 0.0
    for lo in range(0, len(windows), _CHUNK):
        batch = batch_windows(windows[lo:lo + _CHUNK])
        states, _ = rollout_batch(batch, model)
        _, losses = batch_errors(states, batch, weights)
        total += float(losses.sum())
    return total / len(windows)


def objective(dataset, model: DynamicModel, weights: ErrorWeights,
              l2_penalty: float) -> float:
    """dataset_loss plus the ridge term l2_penalty * ||theta||^2."""
    if l2_penalty < 0.0:
        raise DataError(f"l2 penalty must be >= 0, got {l2_penalty}")
    return dataset_loss(dataset, model, weights) + l2_penalty * model.params.sq_norm()


def write_error_csv(path, window_id: str, window, result: RolloutResult) -> None:
    """Per-step comparison of simulated vs measured velocities, plus d(t)."""
    lines = ["window_id,step,t,d,u_meas,u_sim,vm_meas,vm_sim,r_meas,r_sim"]
    for i in range(len(window)):
        vals = (window.t[i], result.errors[i],
                window.ship[i, 1], result.states[i, 1],
                window.ship[i, 3], result.states[i, 3],
                window.ship[i, 5], result.states[i, 5])
        lines.append(f"{window_id},{i}," + ",".join(format(v, ".17g") for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
