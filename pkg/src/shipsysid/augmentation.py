"""Window extraction and data augmentation for trajectory datasets.

Three ways to turn trajectories into fixed-length training windows:

* reference split: non-overlapping windows at offsets 0, I, 2I, ...
* slicing: sliding windows at offsets 0, S, 2S, ... while a full window fits
* jittering: M noisy replicates of each base window, Gaussian noise added to
  the ship-state channels only (actuator and wind samples stay bit-identical)

Jitter draws are a pure function of (seed, source_id, start_index, replicate,
step, channel), so datasets rebuild identically regardless of construction
order.  Window ordering is canonical: source order, then offset, then
replicate.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .trajectory import (
    Trajectory, _SampleSeries, _check_series, _freeze,
    read_series_csv, save_trajectory, write_series_csv,
)

METHOD_REFERENCE = "reference"
METHOD_SLICING = "slicing"
METHOD_JITTERING = "jittering"
METHOD_SLICING_JITTERING = "slicing+jittering"

# method of the base dataset -> method after jittering
_JITTERED_METHOD = {
    METHOD_REFERENCE: METHOD_JITTERING,
    METHOD_SLICING: METHOD_SLICING_JITTERING,
}


@dataclass(frozen=True)
class NoiseSpec:
    """Per-channel ship-state noise standard deviations and the base seed.

    ``sigma`` follows the (x0, u, y0, vm, psi, r) state order; the yaw-rate
    entry is rad/s.  Zero entries leave a channel untouched.
    """

    sigma: np.ndarray
    seed: int = 0

    def __post_init__(self):
        sig = _freeze(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "sigma", sig)
        if sig.shape != (6,):
            raise DataError(f"noise sigma must have shape (6,), got {sig.shape}")
        if not np.all(np.isfinite(sig)) or np.any(sig < 0.0):
            raise DataError("noise sigma entries must be finite and >= 0")


@dataclass(frozen=True)
class Window(_SampleSeries):
    """A fixed-length excerpt of a source trajectory, possibly noise-jittered.

    ``replicate`` is 0 for un-jittered windows and 1..M for jitter replicates.
    ``start_index`` is the sample offset of the excerpt in its source.
    """

    source_id: str
    start_index: int
    replicate: int
    t: np.ndarray
    ship: np.ndarray
    act: np.ndarray
    wind: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _freeze(self.t))
        object.__setattr__(self, "ship", _freeze(self.ship))
        object.__setattr__(self, "act", _freeze(self.act))
        object.__setattr__(self, "wind", _freeze(self.wind))
        if self.start_index < 0 or self.replicate < 0:
            raise DataError("start_index and replicate must be >= 0")
        _check_series(self.t, self.ship, self.act, self.wind,
                      f"window {self.source_id}[{self.start_index}]")

    @property
    def length(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class WindowDataset:
    """An ordered collection of equal-length windows plus construction metadata."""

    windows: tuple[Window, ...]
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        lengths = {w.length for w in self.windows}
        if len(lengths) > 1:
            raise DataError(f"windows have mixed lengths: {sorted(lengths)}")

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def window_steps(self) -> int:
        if not self.windows:
            raise DataError("empty dataset has no window length")
        return self.windows[0].length

    def source_ids(self) -> tuple[str, ...]:
        seen = dict.fromkeys(w.source_id for w in self.windows)
        return tuple(seen)


def _window_of(traj: Trajectory, start: int, steps: int) -> Window:
    sl = slice(start, start + steps)
    return Window(
        source_id=traj.id, start_index=start, replicate=0,
        t=traj.t[sl], ship=traj.ship[sl], act=traj.act[sl], wind=traj.wind[sl],
    )


def split_reference(traj: Trajectory, steps: int) -> WindowDataset:
    """Non-overlapping windows of ``steps`` samples at offsets 0, steps, 2*steps, ...

    The trailing remainder shorter than one window is dropped.
    """
    if steps < 2:
        raise DataError(f"window length must be >= 2, got {steps}")
    count = len(traj) // steps
    if count == 0:
        raise DataError(
            f"trajectory '{traj.id}' ({len(traj)} samples) is shorter than one "
            f"window of {steps}")
    windows = [_window_of(traj, k * steps, steps) for k in range(count)]
    return WindowDataset(tuple(windows), METHOD_REFERENCE, {"window_steps": steps})


def slice_windows(traj: Trajectory, steps: int, stride: int) -> WindowDataset:
    """Sliding windows at offsets 0, stride, 2*stride, ... while a window fits."""
    if steps < 2:
        raise DataError(f"window length must be >= 2, got {steps}")
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    if len(traj) < steps:
        raise DataError(
            f"trajectory '{traj.id}' ({len(traj)} samples) is shorter than one "
            f"window of {steps}")
    offsets = range(0, len(traj) - steps + 1, stride)
    windows = [_window_of(traj, o, steps) for o in offsets]
    return WindowDataset(tuple(windows), METHOD_SLICING,
                         {"window_steps": steps, "stride": stride})


def _source_key(source_id: str) -> int:
    # Stable 64-bit key for seeding; independent of Python's salted hash().
    return int.from_bytes(hashlib.sha256(source_id.encode()).digest()[:8], "big")


def _jitter_noise(noise: NoiseSpec, window: Window, replicate: int) -> np.ndarray:
    seq = np.random.SeedSequence(
        [noise.seed, _source_key(window.source_id), window.start_index, replicate])
    eps = np.random.default_rng(seq).standard_normal((window.length, 6))
    return eps * noise.sigma


def jitter(base: WindowDataset, noise: NoiseSpec, replicates: int) -> WindowDataset:
    """M noisy replicates of every base window; ship states only get noise.

    Replicates keep the base window's timestamps, actuator and wind arrays
    (shared, bit-identical) and are numbered 1..M.  Output ordering is base
    order with replicates adjacent.
    """
    if replicates < 1:
        raise DataError(f"replicate count must be >= 1, got {replicates}")
    if base.method not in _JITTERED_METHOD:
        raise DataError(f"cannot jitter a dataset with method '{base.method}'")
    out = []
    for w in base.windows:
        if w.replicate != 0:
            raise DataError(
                f"window {w.source_id}[{w.start_index}] is already a jitter replicate")
        for m in range(1, replicates + 1):
            out.append(Window(
                source_id=w.source_id, start_index=w.start_index, replicate=m,
                t=w.t, ship=w.ship + _jitter_noise(noise, w, m),
                act=w.act, wind=w.wind,
            ))
    params = dict(base.params)
    params.update({"replicates": replicates,
                   "noise_sigma": [float(s) for s in noise.sigma],
                   "noise_seed": noise.seed})
    return WindowDataset(tuple(out), _JITTERED_METHOD[base.method], params)


def slice_jitter(traj: Trajectory, steps: int, stride: int,
                 noise: NoiseSpec, replicates: int) -> WindowDataset:
    """Compose slicing and jittering: noisy replicates of every slice."""
    return jitter(slice_windows(traj, steps, stride), noise, replicates)


def concat_datasets(datasets) -> WindowDataset:
    """Concatenate datasets built the same way (same method, params, length)."""
    datasets = list(datasets)
    if not datasets:
        raise DataError("nothing to concatenate")
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.method != first.method or ds.params != first.params:
            raise DataError(
                f"cannot concatenate datasets built differently: "
                f"{first.method}/{first.params} vs {ds.method}/{ds.params}")
    windows = tuple(w for ds in datasets for w in ds.windows)
    return WindowDataset(windows, first.method, dict(first.params))


def make_dataset(trajs, method: str, steps: int, stride: int | None = None,
                 noise: NoiseSpec | None = None,
                 replicates: int | None = None) -> WindowDataset:
    """Build a dataset over several trajectories with one recipe."""
    trajs = list(trajs)
    if not trajs:
        raise DataError("recipe needs at least one trajectory")
    if method == METHOD_REFERENCE:
        parts = [split_reference(tr, steps) for tr in trajs]
    elif method == METHOD_SLICING:
        if stride is None:
            raise DataError("slicing needs a stride")
        parts = [slice_windows(tr, steps, stride) for tr in trajs]
    elif method == METHOD_JITTERING:
        if noise is None or replicates is None:
            raise DataError("jittering needs a noise spec and replicate count")
        parts = [jitter(split_reference(tr, steps), noise, replicates) for tr in trajs]
    elif method == METHOD_SLICING_JITTERING:
        if stride is None or noise is None or replicates is None:
            raise DataError("slicing+jittering needs stride, noise spec and replicates")
        parts = [slice_jitter(tr, steps, stride, noise, replicates) for tr in trajs]
    else:
        raise DataError(f"unknown augmentation method '{method}'")
    return concat_datasets(parts)


# ---------------------------------------------------------------------------
# On-disk format: directory of window CSVs plus a JSON manifest


def save_dataset(ds: WindowDataset, out_dir, sources=None) -> None:
    """Write windows/window_NNNNN.csv plus manifest.json (and source CSVs if given).

    ``sources`` maps source_id -> Trajectory; when provided the source series
    are copied into sources/ so the directory is self-contained for training.
    """
    out = Path(out_dir)
    (out / "windows").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, w in enumerate(ds.windows):
        rel = f"windows/window_{i:05d}.csv"
        write_series_csv(out / rel, w.t, w.ship, w.act, w.wind)
        entries.append({
            "file": rel,
            "source_id": w.source_id,
            "start_index": w.start_index,
            "replicate": w.replicate,
        })
    manifest = {"method": ds.method, "params": ds.params, "windows": entries}
    if sources:
        (out / "sources").mkdir(exist_ok=True)
        manifest["sources"] = {}
        for sid, traj in sources.items():
            rel = f"sources/{sid}.csv"
            save_trajectory(traj, out / rel)
            manifest["sources"][sid] = rel
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_dataset(in_dir):
    """Load a dataset directory; returns (WindowDataset, sources dict)."""
    root = Path(in_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"{in_dir}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: {exc}") from exc
    windows = []
    for entry in manifest.get("windows", []):
        t, ship, act, wind = read_series_csv(root / entry["file"])
        windows.append(Window(
            source_id=entry["source_id"], start_index=int(entry["start_index"]),
            replicate=int(entry["replicate"]), t=t, ship=ship, act=act, wind=wind))
    if not windows:
        raise DataError(f"{in_dir}: manifest lists no windows")
    ds = WindowDataset(tuple(windows), manifest.get("method", "unknown"),
                       dict(manifest.get("params", {})))
    sources = {}
    for sid, rel in manifest.get("sources", {}).items():
        t, ship, act, wind = read_series_csv(root / rel)
        sources[sid] = Trajectory(id=sid, t=t, ship=ship, act=act, wind=wind)
    return ds, sources
