"""Test-set evaluation with windowed re-initialization and run comparison.

Each test window is simulated open loop from its measured initial state, so
the weighted error d(t) restarts at zero on every window boundary.  Reports
aggregate per-window losses; `compare_runs` assembles the per-dataset,
per-seed loss matrix and emits it as `comparison.csv`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicModel
from .errors import DataError
from .rollout import ErrorWeights, batch_errors, batch_windows, euler_path, rollout_batch

# Fixed presentation order for the standard dataset recipes.
DATASET_ORDER = ("ref", "sli2", "sli10", "jit2", "jit10",
                 "sli2xjit2", "sli10xjit10", "d-ref")

_CHUNK = 256


def window_label(window) -> str:
    """Stable filename-safe identifier for a window."""
    label = f"{window.source_id}_{window.start_index:05d}"
    if window.replicate:
        label += f"_r{window.replicate}"
    return label


@dataclass(frozen=True)
class EvaluationReport:
    """Losses of one model on one window dataset.

    ``errors`` holds the per-step weighted squared error d(t), one row per
    window; ``t`` holds the matching timestamps.  ``mean_loss`` must equal the
    arithmetic mean of ``window_losses``.
    """

    dataset: str
    method: str
    seed: int
    window_ids: tuple
    window_losses: np.ndarray  # (B,)
    mean_loss: float
    t: np.ndarray              # (B, I)
    errors: np.ndarray         # (B, I)

    def __post_init__(self):
        losses = np.asarray(self.window_losses, dtype=float)
        object.__setattr__(self, "window_losses", losses)
        if losses.ndim != 1 or losses.shape[0] == 0:
            raise DataError("report needs at least one window loss")
        if len(self.window_ids) != losses.shape[0]:
            raise DataError("window_ids and window_losses disagree in length")
        if self.t.shape != self.errors.shape or self.t.shape[0] != losses.shape[0]:
            raise DataError("error series shape mismatch")
        if abs(self.mean_loss - float(losses.mean())) > 1e-12 * max(1.0, abs(self.mean_loss)):
            raise DataError("mean_loss does not match the window losses")

    @property
    def size(self) -> int:
        return int(self.window_losses.shape[0])

    def series(self):
        """Concatenated (t, d) arrays over all windows, in window order."""
        return self.t.reshape(-1), self.errors.reshape(-1)


def _rollout_generic(window, deriv_fn):
    """Euler rollout of one window for an arbitrary derivative callable."""
    act, wind = window.act, window.wind

    def deriv(i, x):
        return deriv_fn(x, act[i], wind[i])

    return euler_path(window.ship[0], np.diff(window.t), deriv)


def evaluate(model, test_ds, weights: ErrorWeights | None = None, *,
             dataset: str = "", seed: int = 0) -> EvaluationReport:
    """Mean rollout loss of a model over a window dataset.

    ``model`` is either a DynamicModel (fast batched path) or any callable
    ``f(x, act, wind) -> 6-vector`` used as the dynamics (e.g. a known plant
    serving as an oracle).  ``dataset`` and ``seed`` are pass-through labels.
    """
    if weights is None:
        weights = ErrorWeights.default()
    windows = test_ds.windows if hasattr(test_ds, "windows") else tuple(test_ds)
    if not windows:
        raise DataError("cannot evaluate an empty test set")

    ids = tuple(window_label(w) for w in windows)
    t_rows, err_rows, loss_rows = [], [], []
    for lo in range(0, len(windows), _CHUNK):
        batch = batch_windows(windows[lo:lo + _CHUNK])
        if isinstance(model, DynamicModel):
            states, _ = rollout_batch(batch, model)
        else:
            states = np.stack([_rollout_generic(w, model)
                               for w in windows[lo:lo + _CHUNK]])
        d, losses = batch_errors(states, batch, weights)
        t_rows.append(batch.t)
        err_rows.append(d)
        loss_rows.append(losses)

    window_losses = np.concatenate(loss_rows)
    method = test_ds.method if hasattr(test_ds, "method") else ""
    return EvaluationReport(
        dataset=dataset, method=method, seed=int(seed), window_ids=ids,
        window_losses=window_losses, mean_loss=float(window_losses.mean()),
        t=np.concatenate(t_rows), errors=np.concatenate(err_rows),
    )


@dataclass(frozen=True)
class ComparisonTable:
    """Per-dataset, per-seed mean losses plus the per-dataset seed mean."""

    datasets: tuple
    seeds: tuple
    losses: np.ndarray  # (n_datasets, n_seeds)
    means: np.ndarray   # (n_datasets,)

    def __post_init__(self):
        if self.losses.shape != (len(self.datasets), len(self.seeds)):
            raise DataError("comparison table shape mismatch")
        if not np.allclose(self.means, self.losses.mean(axis=1), rtol=0, atol=1e-12):
            raise DataError("comparison means do not match the loss matrix")

    def mean_of(self, dataset: str) -> float:
        return float(self.means[self.datasets.index(dataset)])


def compare_runs(reports) -> ComparisonTable:
    """Assemble evaluation reports into the fixed-order comparison matrix.

    Every dataset label must come with the same set of seeds, one report per
    (dataset, seed) cell.  Known dataset labels are ordered like the standard
    recipe list; unknown labels follow in first-seen order.
    """
    reports = list(reports)
    if not reports:
        raise DataError("no reports to compare")
    cells: dict[str, dict[int, float]] = {}
    first_seen: list[str] = []
    for rep in reports:
        per_seed = cells.setdefault(rep.dataset, {})
        if rep.dataset not in first_seen:
            first_seen.append(rep.dataset)
        if rep.seed in per_seed:
            raise DataError(f"duplicate report for dataset '{rep.dataset}' "
                            f"seed {rep.seed}")
        per_seed[rep.seed] = rep.mean_loss

    seed_sets = {frozenset(per_seed) for per_seed in cells.values()}
    if len(seed_sets) != 1:
        raise DataError("all datasets must be evaluated on the same seeds")
    seeds = tuple(sorted(seed_sets.pop()))

    ordered = [d for d in DATASET_ORDER if d in cells]
    ordered += [d for d in first_seen if d not in DATASET_ORDER]
    losses = np.array([[cells[d][s] for s in seeds] for d in ordered])
    return ComparisonTable(datasets=tuple(ordered), seeds=seeds,
                           losses=losses, means=losses.mean(axis=1))


def write_comparison_csv(table: ComparisonTable, path) -> None:
    """`comparison.csv`: one row per dataset, per-seed losses then the mean."""
    header = ["dataset"] + [f"seed_{s}" for s in table.seeds] + ["mean"]
    lines = [",".join(header)]
    for i, name in enumerate(table.datasets):
        cells = [name]
        cells += [format(v, ".17g") for v in table.losses[i]]
        cells.append(format(table.means[i], ".17g"))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_window_losses_csv(report: EvaluationReport, path) -> None:
    """Per-window losses of one report: window_id, loss."""
    lines = ["window_id,loss"]
    for wid, loss in zip(report.window_ids, report.window_losses):
        lines.append(f"{wid},{format(float(loss), '.17g')}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
