"""Shared fixtures: small analytic trajectories, tiny models, truth-sim data."""

import numpy as np
import pytest

from shipsysid.augmentation import Window, WindowDataset, METHOD_REFERENCE
from shipsysid.dynamics import (
    DynamicModel, MlpParameters, Standardizer, init_mlp,
)
from shipsysid.trajectory import Trajectory


def build_traj(n: int, traj_id: str = "tr", dt: float = 1.0,
               t0: float = 0.0, phase: float = 0.0) -> Trajectory:
    """Smooth deterministic series with variance in every channel."""
    t = t0 + dt * np.arange(n)
    s = 0.1 * t + phase
    ship = np.column_stack((
        3.0 * np.sin(s),              # x0
        0.5 + 0.3 * np.cos(s),        # u
        2.0 * np.cos(s),              # y0
        0.2 * np.sin(1.3 * s),        # vm
        0.4 * np.sin(0.7 * s),        # psi (unwrapped)
        0.1 * np.cos(1.1 * s),        # r
    ))
    act = np.column_stack((
        0.3 * np.sin(0.9 * s) - 0.2,  # delta_p
        0.3 * np.cos(0.8 * s) + 0.2,  # delta_s
        6.0 + 3.0 * np.sin(0.6 * s),  # n_p
    ))
    wind = np.column_stack((
        2.0 + 0.8 * np.sin(0.5 * s),          # speed > 0
        np.pi + 2.0 * np.sin(0.4 * s),        # direction in (0, 2*pi)
    ))
    return Trajectory(id=traj_id, t=t, ship=ship, act=act, wind=wind)


def window_from_arrays(t, ship, act, wind, source_id="w", start=0,
                       replicate=0) -> Window:
    return Window(source_id=source_id, start_index=start, replicate=replicate,
                  t=np.asarray(t, dtype=float), ship=np.asarray(ship, dtype=float),
                  act=np.asarray(act, dtype=float), wind=np.asarray(wind, dtype=float))


def simple_stats(mu_acc=(0.0, 0.0, 0.0), sigma_acc=(1.0, 1.0, 1.0)) -> Standardizer:
    return Standardizer(
        mu_nu=np.zeros(3), sigma_nu=np.ones(3),
        mu_act=np.zeros(3), sigma_act=np.ones(3),
        mu_wind=np.array([1.0, np.pi]), sigma_wind=np.ones(2),
        mu_acc=np.array(mu_acc, dtype=float),
        sigma_acc=np.array(sigma_acc, dtype=float),
    )


def zero_params(dims=(8, 4, 3)) -> MlpParameters:
    weights = tuple(np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:]))
    biases = tuple(np.zeros(b) for b in dims[1:])
    return MlpParameters(weights, biases)


@pytest.fixture
def traj():
    return build_traj(24)


@pytest.fixture
def stats():
    return simple_stats()


@pytest.fixture
def zero_model(stats):
    """Identically-zero acceleration: zero network and mu_acc = 0."""
    return DynamicModel(zero_params(), stats)


@pytest.fixture
def small_model(stats):
    return DynamicModel(init_mlp((8, 4, 3), seed=11), stats)


@pytest.fixture
def ref_dataset(traj):
    from shipsysid.augmentation import split_reference
    return split_reference(traj, 6)


def single_window_dataset(window) -> WindowDataset:
    return WindowDataset((window,), METHOD_REFERENCE, {})
