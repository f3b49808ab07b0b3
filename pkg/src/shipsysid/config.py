"""Run configuration: a strict JSON file mapped onto typed dataclasses.

The file has six optional sections (``train``, ``plant``, ``wind``,
``generate``, ``roles``, ``study``) plus a ``recipes`` mapping; omitted keys
take the documented defaults, unknown keys are rejected.  Defaults encode the
full-scale protocol: Adam at 1e-4 with ridge 1e-2, error weights
(0, 100, 0, 100, 0, 10), jitter sigma (0, 0.01, 0, 0.01, 0, 0.1), 100-step
windows, and the six standard trajectory durations.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .training import TrainConfig
from .truthsim import TruthModelConfig, WindProcessConfig
from .augmentation import (
    METHOD_JITTERING,
    METHOD_REFERENCE,
    METHOD_SLICING,
    METHOD_SLICING_JITTERING,
)


@dataclass(frozen=True)
class GenerateConfig:
    """Synthetic data generation: one trajectory per duration, at 1 Hz."""

    durations: tuple = (500.5, 1801.8, 500.5, 1801.8, 1201.2, 1201.2)
    noise_sigma: tuple | None = (0.0, 0.01, 0.0, 0.01, 0.0, 0.1)
    prefix: str = "traj"
    sample_period: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.durations or any(d <= 0 for d in self.durations):
            raise ConfigError("generate.durations must be positive")
        if self.noise_sigma is not None and len(self.noise_sigma) != 6:
            raise ConfigError("generate.noise_sigma needs 6 entries (or null)")
        if self.sample_period <= 0:
            raise ConfigError("generate.sample_period must be > 0")
        if not self.prefix:
            raise ConfigError("generate.prefix must be non-empty")

    def trajectory_ids(self) -> tuple:
        return tuple(f"{self.prefix}{i + 1}" for i in range(len(self.durations)))


@dataclass(frozen=True)
class RoleSplit:
    """Which trajectory ids play which role; ``extra`` feeds the d-ref recipe."""

    train: tuple = ("traj1", "traj2")
    validation: tuple = ("traj3", "traj4")
    test: tuple = ("traj5", "traj6")
    extra: tuple = ()

    def __post_init__(self):
        if not self.train or not self.validation or not self.test:
            raise ConfigError("roles.train/validation/test must be non-empty")


@dataclass(frozen=True)
class RecipeSpec:
    """One dataset recipe: augmentation method plus its knobs.

    ``sources`` of None means the training-role trajectories (plus the extra
    role for plain reference recipes named d-ref).  Window length comes from
    ``train.window_steps``; jitter sigma from ``train.jitter_sigma``.
    """

    method: str
    stride: int | None = None
    replicates: int | None = None
    sources: tuple | None = None
    noise_seed: int = 0

    def __post_init__(self):
        known = (METHOD_REFERENCE, METHOD_SLICING, METHOD_JITTERING,
                 METHOD_SLICING_JITTERING)
        if self.method not in known:
            raise ConfigError(f"unknown augmentation method '{self.method}'")
        needs_stride = self.method in (METHOD_SLICING, METHOD_SLICING_JITTERING)
        if needs_stride and (self.stride is None or self.stride < 1):
            raise ConfigError(f"method '{self.method}' needs stride >= 1")
        needs_reps = self.method in (METHOD_JITTERING, METHOD_SLICING_JITTERING)
        if needs_reps and (self.replicates is None or self.replicates < 1):
            raise ConfigError(f"method '{self.method}' needs replicates >= 1")


def default_recipes() -> dict:
    """The eight standard dataset recipes."""
    return {
        "ref": RecipeSpec(METHOD_REFERENCE),
        "sli2": RecipeSpec(METHOD_SLICING, stride=2),
        "sli10": RecipeSpec(METHOD_SLICING, stride=10),
        "jit2": RecipeSpec(METHOD_JITTERING, replicates=2),
        "jit10": RecipeSpec(METHOD_JITTERING, replicates=10),
        "sli2xjit2": RecipeSpec(METHOD_SLICING_JITTERING, stride=2, replicates=2),
        "sli10xjit10": RecipeSpec(METHOD_SLICING_JITTERING, stride=10, replicates=10),
        "d-ref": RecipeSpec(METHOD_REFERENCE),
    }


@dataclass(frozen=True)
class StudyConfig:
    """Seeds-by-recipes study on freshly generated synthetic data.

    Scaled for a desktop CPU: a small network, a raised learning rate, and a
    few hundred epochs per run.  ``generation_seed`` keys the synthetic data;
    ``seeds`` key the per-run initialization and subset shuffling.
    """

    recipes: tuple = ("ref", "sli10", "jit10", "d-ref")
    seeds: tuple = (101, 102, 103, 104, 105)
    train_duration: float = 500.0
    extra_duration: float = 500.0
    valid_duration: float = 300.0
    test_duration: float = 600.0
    generation_seed: int = 7
    use_noise: bool = True
    hidden_width: int = 32
    hidden_layers: int = 2
    learning_rate: float = 1e-3
    min_epochs: int = 200
    max_epochs: int = 400

    def __post_init__(self):
        if not self.recipes or not self.seeds:
            raise ConfigError("study.recipes and study.seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("study.seeds must be distinct")
        for name in ("train_duration", "extra_duration", "valid_duration",
                     "test_duration"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"study.{name} must be > 0")
        if self.hidden_width < 1 or self.hidden_layers < 1:
            raise ConfigError("study network must have >= 1 hidden layer/unit")
        if self.learning_rate <= 0:
            raise ConfigError("study.learning_rate must be > 0")
        if self.min_epochs < 0 or self.max_epochs < max(self.min_epochs, 1):
            raise ConfigError("study epoch bounds are inconsistent")

    def dims(self) -> tuple:
        return (8,) + (self.hidden_width,) * self.hidden_layers + (3,)


_SECTIONS = {
    "train": TrainConfig,
    "plant": TruthModelConfig,
    "wind": WindProcessConfig,
    "generate": GenerateConfig,
    "roles": RoleSplit,
    "study": StudyConfig,
}


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    plant: TruthModelConfig = field(default_factory=TruthModelConfig)
    wind: WindProcessConfig = field(default_factory=WindProcessConfig)
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    roles: RoleSplit = field(default_factory=RoleSplit)
    study: StudyConfig = field(default_factory=StudyConfig)
    recipes: dict = field(default_factory=default_recipes)

    def recipe(self, name: str) -> RecipeSpec:
        try:
            return self.recipes[name]
        except KeyError:
            raise ConfigError(f"unknown recipe '{name}'; known: "
                              f"{', '.join(sorted(self.recipes))}") from None

    def recipe_sources(self, name: str) -> tuple:
        """Trajectory ids the recipe draws from."""
        spec = self.recipe(name)
        if spec.sources is not None:
            return spec.sources
        if name == "d-ref":
            if not self.roles.extra:
                raise ConfigError("recipe 'd-ref' needs roles.extra trajectories "
                                  "or explicit sources")
            return self.roles.train + self.roles.extra
        return self.roles.train


def _coerce(value):
    """Lists become tuples, recursively; other JSON scalars pass through."""
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{where}' must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {', '.join(unknown)}")
    kwargs = {name: _coerce(raw) for name, raw in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in section '{where}': {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = set(_SECTIONS) | {"recipes"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")

    kwargs = {name: _build(cls, data.get(name, {}), name)
              for name, cls in _SECTIONS.items()}

    recipes = default_recipes()
    raw_recipes = data.get("recipes", {})
    if not isinstance(raw_recipes, dict):
        raise ConfigError("'recipes' must be a JSON object")
    for name, spec in raw_recipes.items():
        recipes[name] = _build(RecipeSpec, spec, f"recipes.{name}")
    return RunConfig(recipes=recipes, **kwargs)


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)
