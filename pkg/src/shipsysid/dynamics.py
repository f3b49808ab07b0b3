"""Neural state-derivative model: standardization, MLP, kinematics, checkpoints.

The model maps (nu, actuator, wind) -> nudot through a small tanh network on
standardized inputs, then composes with rigid-body kinematics to produce the
full 6-state derivative:

    etadot = R(psi) @ nu            (positions and heading)
    nudot  = sigma_acc * MLP(s) + mu_acc,   s = standardized (nu, act, wind)

Positions and heading never enter the network; the derivative is therefore
invariant to translation, and heading only acts through the rotation matrix.
All floats are 64-bit.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .trajectory import (
    ActuatorState, ShipState, Trajectory, WindState, _freeze,
    numerical_acceleration,
)

# Input layout of the network: 3 velocities, 3 actuator channels, 2 wind channels.
INPUT_DIM = 8
OUTPUT_DIM = 3
DEFAULT_DIMS = (INPUT_DIM, 256, 256, 256, 256, OUTPUT_DIM)

_INPUT_CHANNELS = ("u", "vm", "r", "delta_p", "delta_s", "n_p",
                   "wind_speed", "wind_direction")
_ACC_CHANNELS = ("udot", "vmdot", "rdot")

CHECKPOINT_FORMAT = "shipsysid-checkpoint-1"


@dataclass(frozen=True)
class Standardizer:
    """Per-channel affine statistics for network inputs and outputs.

    Input statistics cover (u, vm, r), (delta_p, delta_s, n_p) and
    (speed, direction) of the apparent wind; output statistics cover the
    numerically differentiated accelerations (udot, vmdot, rdot).
    """

    mu_nu: np.ndarray
    sigma_nu: np.ndarray
    mu_act: np.ndarray
    sigma_act: np.ndarray
    mu_wind: np.ndarray
    sigma_wind: np.ndarray
    mu_acc: np.ndarray
    sigma_acc: np.ndarray

    def __post_init__(self):
        for name, size in (("mu_nu", 3), ("sigma_nu", 3), ("mu_act", 3),
                           ("sigma_act", 3), ("mu_wind", 2), ("sigma_wind", 2),
                           ("mu_acc", 3), ("sigma_acc", 3)):
            arr = _freeze(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
            if arr.shape != (size,):
                raise DataError(f"standardizer field {name} must have shape ({size},)")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"standardizer field {name} is non-finite")
            if name.startswith("sigma") and np.any(arr <= 0.0):
                raise DataError(f"standardizer field {name} must be positive")
        # Concatenated (8,) input statistics, precomputed for the rollout hot path.
        object.__setattr__(self, "mu_input",
                           _freeze(np.concatenate((self.mu_nu, self.mu_act, self.mu_wind))))
        object.__setattr__(self, "sigma_input",
                           _freeze(np.concatenate((self.sigma_nu, self.sigma_act,
                                                   self.sigma_wind))))


def standardize_input(nu, act, wind, stats: Standardizer) -> np.ndarray:
    """Standardize one input block (or a batch, with leading axes broadcast)."""
    raw = np.concatenate((np.asarray(nu, dtype=float),
                          np.asarray(act, dtype=float),
                          np.asarray(wind, dtype=float)), axis=-1)
    return (raw - stats.mu_input) / stats.sigma_input


def destandardize_output(y, stats: Standardizer) -> np.ndarray:
    """Map network outputs back to physical accelerations."""
    return stats.sigma_acc * np.asarray(y, dtype=float) + stats.mu_acc


def fit_standardizer(dataset, sources) -> Standardizer:
    """Fit statistics on every sample of every window of ``dataset``.

    Input statistics are plain means and population standard deviations over
    the window samples.  Acceleration statistics come from numerical
    differentiation of the *source trajectories* (not the possibly-jittered
    window contents), restricted to the sample spans the windows cover;
    ``sources`` maps source_id -> Trajectory (a plain iterable of
    trajectories is keyed by their ids).
    """
    if len(dataset.windows) == 0:
        raise DataError("cannot fit a standardizer on an empty dataset")
    if not isinstance(sources, Mapping):
        sources = {traj.id: traj for traj in sources}
    nu = np.concatenate([w.ship[:, [1, 3, 5]] for w in dataset.windows])
    act = np.concatenate([w.act for w in dataset.windows])
    wind = np.concatenate([w.wind for w in dataset.windows])

    acc_cache: dict[str, np.ndarray] = {}
    acc_parts = []
    for w in dataset.windows:
        if w.source_id not in acc_cache:
            if w.source_id not in sources:
                raise DataError(f"no source trajectory for '{w.source_id}'")
            acc_cache[w.source_id] = numerical_acceleration(sources[w.source_id]).values
        acc_parts.append(acc_cache[w.source_id][w.start_index:w.start_index + w.length])
    acc = np.concatenate(acc_parts)

    def _stats(arr, names):
        mu = arr.mean(axis=0)
        sigma = arr.std(axis=0)  # population std (ddof=0)
        for j, name in enumerate(names):
            if sigma[j] < 1e-12 * max(1.0, abs(mu[j])):
                raise DataError(f"degenerate channel '{name}': zero variance")
        return mu, sigma

    mu_nu, sigma_nu = _stats(nu, _INPUT_CHANNELS[0:3])
    mu_act, sigma_act = _stats(act, _INPUT_CHANNELS[3:6])
    mu_wind, sigma_wind = _stats(wind, _INPUT_CHANNELS[6:8])
    mu_acc, sigma_acc = _stats(acc, _ACC_CHANNELS)
    return Standardizer(mu_nu, sigma_nu, mu_act, sigma_act,
                        mu_wind, sigma_wind, mu_acc, sigma_acc)


# ---------------------------------------------------------------------------
# MLP parameters


@dataclass(frozen=True)
class MlpParameters:
    """Weights and biases of a fully connected tanh network.

    ``weights[k]`` has shape (n_in, n_out) so batched rows multiply as
    ``h @ W + b``.  Every hidden layer is followed by tanh; the final layer is
    linear.  Arrays are frozen; build new instances to change values.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(_freeze(w) for w in self.weights)
        bs = tuple(_freeze(b) for b in self.biases)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        if len(ws) != len(bs) or not ws:
            raise DataError("weights and biases must pair up layer by layer")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DataError(f"layer {k}: weight {w.shape} and bias {b.shape} mismatch")
            if k and ws[k - 1].shape[1] != w.shape[0]:
                raise DataError(f"layer {k}: input dim {w.shape[0]} does not chain "
                                f"with previous output {ws[k - 1].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DataError(f"layer {k}: non-finite parameters")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        """Canonical flat order: W0.ravel(), b0, W1.ravel(), b1, ..."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def sq_norm(self) -> float:
        return float(sum(np.sum(w * w) + np.sum(b * b)
                         for w, b in zip(self.weights, self.biases)))


def unflatten(dims, flat) -> MlpParameters:
    """Inverse of MlpParameters.flatten for the given layer dimensions."""
    flat = np.asarray(flat, dtype=float)
    need = sum(n_in * n_out + n_out for n_in, n_out in zip(dims[:-1], dims[1:]))
    if flat.size != need:
        raise DataError(f"flat vector has {flat.size} entries, dims {tuple(dims)} "
                        f"need {need}")
    weights, biases, pos = [], [], 0
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[pos:pos + n_in * n_out].reshape(n_in, n_out).copy())
        pos += n_in * n_out
        biases.append(flat[pos:pos + n_out].copy())
        pos += n_out
    return MlpParameters(tuple(weights), tuple(biases))


def init_mlp(dims=DEFAULT_DIMS, seed=0) -> MlpParameters:
    """Seeded init: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1A17]))
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParameters(tuple(weights), tuple(biases))


def mlp_forward(s, params: MlpParameters) -> np.ndarray:
    """Forward pass; accepts a single input vector or a batch of rows."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    h = np.atleast_2d(s)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
    y = h @ params.weights[-1] + params.biases[-1]
    return y[0] if single else y


def _mlp_forward_cached(s: np.ndarray, params: MlpParameters):
    """Batched forward keeping post-activation values for the backward pass."""
    hidden = []
    h = s
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
        hidden.append(h)
    y = h @ params.weights[-1] + params.biases[-1]
    return y, hidden


def _mlp_backward(dy: np.ndarray, s: np.ndarray, hidden, params: MlpParameters,
                  grad_w, grad_b) -> np.ndarray:
    """Accumulate parameter gradients in-place and return d(loss)/d(input).

    ``dy`` is the upstream gradient on the network output (batch rows).
    ``grad_w``/``grad_b`` are accumulator lists matching params layer shapes.
    """
    acts = [s] + hidden
    delta = dy
    for k in range(len(params.weights) - 1, -1, -1):
        grad_w[k] += acts[k].T @ delta
        grad_b[k] += delta.sum(axis=0)
        delta = delta @ params.weights[k].T
        if k > 0:
            delta = delta * (1.0 - acts[k] * acts[k])  # tanh'
    return delta


# ---------------------------------------------------------------------------
# Kinematics and the assembled derivative


def kinematics(psi, nu) -> np.ndarray:
    """etadot = R(psi) @ nu for heading psi and body velocities (u, vm, r).

    Broadcasts over leading axes: psi (...,) with nu (..., 3).
    """
    psi = np.asarray(psi, dtype=float)
    nu = np.asarray(nu, dtype=float)
    c, s = np.cos(psi), np.sin(psi)
    return np.stack((nu[..., 0] * c - nu[..., 1] * s,
                     nu[..., 0] * s + nu[..., 1] * c,
                     nu[..., 2]), axis=-1)


@dataclass(frozen=True)
class DynamicModel:
    """Network parameters plus the standardizer they were trained with."""

    params: MlpParameters
    stats: Standardizer

    def __post_init__(self):
        dims = self.params.dims
        if dims[0] != INPUT_DIM or dims[-1] != OUTPUT_DIM:
            raise DataError(f"model must map {INPUT_DIM} inputs to {OUTPUT_DIM} "
                            f"outputs, got dims {dims}")


def full_derivative(x, act, wind, model: DynamicModel) -> np.ndarray:
    """Time derivative of the full state (x0dot, udot, y0dot, vmdot, psidot, rdot)."""
    x = x.as_array() if isinstance(x, ShipState) else np.asarray(x, dtype=float)
    act = act.as_array() if isinstance(act, ActuatorState) else np.asarray(act, dtype=float)
    wind = wind.as_array() if isinstance(wind, WindState) else np.asarray(wind, dtype=float)
    nu = x[[1, 3, 5]]
    s = standardize_input(nu, act, wind, model.stats)
    nudot = destandardize_output(mlp_forward(s, model.params), model.stats)
    etadot = kinematics(x[4], nu)
    out = np.empty(6)
    out[[0, 2, 4]] = etadot
    out[[1, 3, 5]] = nudot
    return out


# ---------------------------------------------------------------------------
# Checkpoints: structured text, 17 significant digits, bit-identical reload


def _write_value(v, out, indent):
    pad = " " * indent
    if isinstance(v, dict):
        out.append("{\n")
        items = list(v.items())
        for i, (k, sub) in enumerate(items):
            out.append(f'{pad}  "{k}": ')
            _write_value(sub, out, indent + 2)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(v, (list, tuple)):
        out.append("[")
        for i, sub in enumerate(v):
            _write_value(sub, out, indent)
            if i < len(v) - 1:
                out.append(", ")
        out.append("]")
    elif isinstance(v, bool):
        out.append("true" if v else "false")
    elif isinstance(v, (int, np.integer)):
        out.append(str(int(v)))
    elif isinstance(v, (float, np.floating)):
        out.append(format(float(v), ".17g"))
    elif isinstance(v, str):
        out.append(json.dumps(v))
    else:
        raise TypeError(f"cannot serialize {type(v)}")


def _dumps_17g(doc: dict) -> str:
    out: list[str] = []
    _write_value(doc, out, 0)
    return "".join(out) + "\n"


def save_checkpoint(model: DynamicModel, path) -> None:
    """Write a checkpoint as JSON text with 17-significant-digit decimals.

    Seventeen significant digits round-trip IEEE doubles exactly, so a reload
    on the same platform reproduces forward outputs bit-identically.
    """
    st = model.stats
    doc = {
        "format": CHECKPOINT_FORMAT,
        "dims": list(model.params.dims),
        "standardizer": {
            "mu_nu": st.mu_nu.tolist(), "sigma_nu": st.sigma_nu.tolist(),
            "mu_act": st.mu_act.tolist(), "sigma_act": st.sigma_act.tolist(),
            "mu_wind": st.mu_wind.tolist(), "sigma_wind": st.sigma_wind.tolist(),
            "mu_acc": st.mu_acc.tolist(), "sigma_acc": st.sigma_acc.tolist(),
        },
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(model.params.weights, model.params.biases)
        ],
    }
    Path(path).write_text(_dumps_17g(doc), encoding="utf-8")


def load_checkpoint(path) -> DynamicModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read checkpoint: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    st = doc["standardizer"]
    stats = Standardizer(
        st["mu_nu"], st["sigma_nu"], st["mu_act"], st["sigma_act"],
        st["mu_wind"], st["sigma_wind"], st["mu_acc"], st["sigma_acc"])
    weights = tuple(np.array(layer["weights"], dtype=float) for layer in doc["layers"])
    biases = tuple(np.array(layer["bias"], dtype=float) for layer in doc["layers"])
    params = MlpParameters(weights, biases)
    if list(params.dims) != list(doc["dims"]):
        raise DataError(f"{path}: dims {doc['dims']} do not match layer shapes "
                        f"{list(params.dims)}")
    return DynamicModel(params, stats)
