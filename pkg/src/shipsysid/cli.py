"""Command-line pipeline: generate, augment, train, evaluate, gradcheck, study.

Every command is a deterministic function of (config file, input files,
flags); re-running reproduces outputs byte for byte.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import augmentation, dynamics, evaluation, report, rollout, training, trajectory, truthsim
from .config import RoleSplit, RunConfig, load_config
from .errors import ConfigError, DataError, DivergenceError

GRADCHECK_TOLERANCE = 1e-5


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _derived_seeds(base: int, index: int) -> tuple[int, int]:
    """Per-trajectory (maneuver, wind) seeds, stable under reordering."""
    words = np.random.SeedSequence([int(base), int(index)]).generate_state(2)
    return int(words[0]), int(words[1])


def _load_trajectories(data_dir, ids) -> dict:
    root = Path(data_dir)
    if not root.is_dir():
        raise DataError(f"trajectory directory not found: {root}")
    out = {}
    for tid in ids:
        path = root / f"{tid}.csv"
        if not path.is_file():
            raise DataError(f"missing trajectory file: {path}")
        out[tid] = trajectory.load_trajectory(path)
    return out


def _recipe_dataset(cfg: RunConfig, name: str, trajs: dict):
    spec = cfg.recipe(name)
    sources = cfg.recipe_sources(name)
    noise = augmentation.NoiseSpec(np.asarray(cfg.train.jitter_sigma, dtype=float),
                                   seed=spec.noise_seed)
    return augmentation.make_dataset([trajs[s] for s in sources], spec.method,
                                     cfg.train.window_steps, stride=spec.stride,
                                     noise=noise, replicates=spec.replicates)


def _reference_dataset(cfg: RunConfig, ids, trajs: dict):
    return augmentation.make_dataset([trajs[s] for s in ids],
                                     augmentation.METHOD_REFERENCE,
                                     cfg.train.window_steps)


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(args) -> int:
    cfg = _config(args)
    gen = cfg.generate
    base_seed = args.seed if args.seed is not None else gen.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ids = gen.trajectory_ids()
    entries = []
    for i, duration in enumerate(gen.durations):
        maneuver_seed, wind_seed = _derived_seeds(base_seed, i)
        script = truthsim.random_maneuver(duration, maneuver_seed)
        traj = truthsim.generate_trajectory(
            cfg.plant, script, wind_seed, duration, wind=cfg.wind,
            noise_sigma=gen.noise_sigma, traj_id=ids[i],
            sample_period=gen.sample_period)
        rel = f"{traj.id}.csv"
        trajectory.save_trajectory(traj, out / rel)
        entries.append({
            "id": traj.id, "file": rel, "duration": duration,
            "samples": len(traj), "maneuver_seed": maneuver_seed,
            "wind_seed": wind_seed,
        })
    _write_json(out / "manifest.json", {
        "seed": base_seed,
        "sample_period": gen.sample_period,
        "noise_sigma": list(gen.noise_sigma) if gen.noise_sigma is not None else None,
        "plant": cfg.plant.as_dict(),
        "wind": cfg.wind.as_dict(),
        "trajectories": entries,
    })
    print(f"generated {len(entries)} trajectories "
          f"({sum(e['samples'] for e in entries)} samples) in {out}")
    return 0


def cmd_augment(args) -> int:
    cfg = _config(args)
    if not args.recipe:
        raise ConfigError("augment needs --recipe")
    sources = cfg.recipe_sources(args.recipe)
    trajs = _load_trajectories(args.data, sources)
    ds = _recipe_dataset(cfg, args.recipe, trajs)
    out = Path(args.out)
    augmentation.save_dataset(ds, out, sources=trajs)
    print(f"recipe {args.recipe}: {len(ds)} windows of {ds.window_steps} samples "
          f"from {len(sources)} trajectories -> {out}")
    return 0


def _train_once(cfg: RunConfig, recipe: str, trajs: dict, dims, train_cfg):
    """Build datasets, fit stats on the reference split, run training."""
    train_ds = _recipe_dataset(cfg, recipe, trajs)
    valid_ds = _reference_dataset(cfg, cfg.roles.validation, trajs)
    ref_ds = _reference_dataset(cfg, cfg.roles.train, trajs)
    stats = dynamics.fit_standardizer(ref_ds, [trajs[s] for s in cfg.roles.train])
    model, record = training.train(train_ds, valid_ds, stats, train_cfg, dims=dims)
    return model, record, stats, len(train_ds)


def cmd_train(args) -> int:
    cfg = _config(args)
    recipe = args.recipe or "ref"
    train_cfg = cfg.train
    if args.min_epochs is not None:
        train_cfg = replace(train_cfg, min_epochs=args.min_epochs)
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)

    needed = set(cfg.recipe_sources(recipe)) | set(cfg.roles.train) | set(cfg.roles.validation)
    trajs = _load_trajectories(args.data, sorted(needed))
    model, record, stats, n_windows = _train_once(cfg, recipe, trajs,
                                                  dynamics.DEFAULT_DIMS, train_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dynamics.save_checkpoint(model, out / "checkpoint.json")
    init_model = dynamics.DynamicModel(
        dynamics.unflatten(record.dims, record.theta_init), stats)
    dynamics.save_checkpoint(init_model, out / "checkpoint_init.json")
    training.write_training_log(record, out / "training_log.csv")
    report.save_figure(report.training_figure(record), out / "training_curve.png")
    _write_json(out / "manifest.json", {
        "recipe": recipe,
        "train_windows": n_windows,
        "seed": train_cfg.seed,
        "dims": list(record.dims),
        "epochs_run": record.stop_epoch,
        "stop_reason": record.stop_reason,
        "min_valid_loss": record.min_valid_loss,
        "min_epoch": record.min_epoch,
    })
    print(f"trained on {recipe} ({n_windows} windows): best validation loss "
          f"{record.min_valid_loss:.6g} at epoch {record.min_epoch} "
          f"(stopped after {record.stop_epoch}: {record.stop_reason})")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if not args.model:
        raise ConfigError("evaluate needs --model <checkpoint.json>")
    model = dynamics.load_checkpoint(args.model)
    trajs = _load_trajectories(args.data, cfg.roles.test)
    test_ds = _reference_dataset(cfg, cfg.roles.test, trajs)
    rep = evaluation.evaluate(model, test_ds, cfg.train.weights(), dataset="test")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_window_losses_csv(rep, out / "window_losses.csv")
    for window in test_ds.windows:
        result = rollout.euler_rollout(window, model, cfg.train.weights())
        label = evaluation.window_label(window)
        rollout.write_error_csv(out / f"errors_{label}.csv", label, window, result)
    report.save_figure(report.error_series_figure(rep), out / "error_series.png")
    print(f"test loss over {rep.size} windows: mean {rep.mean_loss:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    max_rel, _ = training.gradient_check(n_instances=args.instances, seed=seed)
    print(f"gradient check: max relative error {max_rel:.3e} "
          f"across {args.instances} instances (tolerance {GRADCHECK_TOLERANCE:g})")
    if not max_rel < GRADCHECK_TOLERANCE:
        print("gradient check FAILED", file=sys.stderr)
        return 4
    return 0


# ---------------------------------------------------------------------------
# Study


def study_run(cfg: RunConfig, out_dir, *, min_epochs: int | None = None,
              generation_seed: int | None = None, progress=None):
    """Full seeds-by-recipes study on freshly generated synthetic data.

    Generates train/extra/validation/test trajectories from the truth plant,
    trains every (recipe, seed) cell at the study scale, evaluates everything
    on the same test split, and writes comparison.csv, study_runs.csv, the
    figures, and per-run logs under ``out_dir``.  Returns (ComparisonTable,
    run summaries).
    """
    study = cfg.study
    say = progress or (lambda msg: None)
    gen_seed = generation_seed if generation_seed is not None else study.generation_seed
    min_ep = min_epochs if min_epochs is not None else study.min_epochs

    out = Path(out_dir)
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)

    noise = cfg.generate.noise_sigma if study.use_noise else None
    roles = RoleSplit(train=("study-train",), validation=("study-valid",),
                      test=("study-test",), extra=("study-extra",))
    durations = {
        "study-train": study.train_duration,
        "study-extra": study.extra_duration,
        "study-valid": study.valid_duration,
        "study-test": study.test_duration,
    }
    trajs = {}
    gen_entries = []
    for i, (tid, duration) in enumerate(durations.items()):
        maneuver_seed, wind_seed = _derived_seeds(gen_seed, i)
        script = truthsim.random_maneuver(duration, maneuver_seed)
        trajs[tid] = truthsim.generate_trajectory(
            cfg.plant, script, wind_seed, duration, wind=cfg.wind,
            noise_sigma=noise, traj_id=tid)
        trajectory.save_trajectory(trajs[tid], data_dir / f"{tid}.csv")
        gen_entries.append({"id": tid, "duration": duration,
                            "samples": len(trajs[tid]),
                            "maneuver_seed": maneuver_seed,
                            "wind_seed": wind_seed})
    _write_json(data_dir / "manifest.json", {
        "generation_seed": gen_seed,
        "noise_sigma": list(noise) if noise is not None else None,
        "plant": cfg.plant.as_dict(),
        "wind": cfg.wind.as_dict(),
        "trajectories": gen_entries,
    })
    say(f"generated study data: "
        + ", ".join(f"{e['id']} ({e['samples']})" for e in gen_entries))

    study_cfg = replace(cfg, roles=roles)
    dims = study.dims()
    weights = cfg.train.weights()
    ref_ds = _reference_dataset(study_cfg, roles.train, trajs)
    stats = dynamics.fit_standardizer(ref_ds, [trajs[s] for s in roles.train])
    valid_ds = _reference_dataset(study_cfg, roles.validation, trajs)
    test_ds = _reference_dataset(study_cfg, roles.test, trajs)

    init_losses = {}
    for seed in study.seeds:
        init_model = dynamics.DynamicModel(dynamics.init_mlp(dims, seed), stats)
        init_losses[seed] = rollout.dataset_loss(test_ds, init_model, weights)

    reports, runs = [], []
    for recipe in study.recipes:
        train_ds = _recipe_dataset(study_cfg, recipe, trajs)
        for seed in study.seeds:
            train_cfg = replace(cfg.train, learning_rate=study.learning_rate,
                                min_epochs=min_ep, max_epochs=study.max_epochs,
                                seed=seed)
            model, record = training.train(train_ds, valid_ds, stats,
                                           train_cfg, dims=dims)
            rep = evaluation.evaluate(model, test_ds, weights,
                                      dataset=recipe, seed=seed)
            reports.append(rep)
            runs.append({
                "recipe": recipe, "seed": seed,
                "init_test_loss": init_losses[seed],
                "test_loss": rep.mean_loss,
                "min_valid_loss": record.min_valid_loss,
                "min_epoch": record.min_epoch,
                "stop_epoch": record.stop_epoch,
                "stop_reason": record.stop_reason,
            })
            run_dir = out / "runs" / recipe / f"seed_{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            dynamics.save_checkpoint(model, run_dir / "checkpoint.json")
            training.write_training_log(record, run_dir / "training_log.csv")
            report.save_figure(report.training_figure(record),
                               run_dir / "training_curve.png")
            say(f"{recipe} seed {seed}: {len(train_ds)} windows, "
                f"{record.stop_epoch} epochs, test loss {rep.mean_loss:.6g} "
                f"(init {init_losses[seed]:.6g})")

    table = evaluation.compare_runs(reports)
    evaluation.write_comparison_csv(table, out / "comparison.csv")
    report.save_figure(report.comparison_figure(table), out / "comparison.png")

    lines = ["recipe,seed,init_test_loss,test_loss,min_valid_loss,min_epoch,"
             "stop_epoch,stop_reason"]
    for row in runs:
        lines.append(",".join((
            row["recipe"], str(row["seed"]),
            format(row["init_test_loss"], ".17g"),
            format(row["test_loss"], ".17g"),
            format(row["min_valid_loss"], ".17g"),
            str(row["min_epoch"]), str(row["stop_epoch"]), row["stop_reason"],
        )))
    (out / "study_runs.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return table, runs


def cmd_study(args) -> int:
    cfg = _config(args)
    table, _ = study_run(cfg, args.out, min_epochs=args.min_epochs,
                         generation_seed=args.seed, progress=print)
    for name in table.datasets:
        print(f"{name}: mean test loss {table.mean_of(name):.6g}")
    print(f"study artifacts in {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shipsysid",
        description="Identify a neural dynamic model of low-speed ship "
                    "maneuvering from trajectory time series.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, *, data=False, out=True, model=False,
            recipe=False, min_epochs=False, instances=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH",
                       help="JSON run configuration (defaults when omitted)")
        if data:
            p.add_argument("--data", metavar="DIR", required=True,
                           help="directory with trajectory CSV files")
        if out:
            p.add_argument("--out", metavar="DIR", required=True,
                           help="output directory")
        if model:
            p.add_argument("--model", metavar="PATH",
                           help="model checkpoint to evaluate")
        if recipe:
            p.add_argument("--recipe", metavar="NAME",
                           help="dataset recipe name (e.g. ref, sli10, jit10)")
        if min_epochs:
            p.add_argument("--min-epochs", type=int, metavar="N",
                           help="override the early-stopping epoch floor")
        if instances:
            p.add_argument("--instances", type=int, default=20, metavar="N",
                           help="number of random instances (default 20)")
        p.add_argument("--seed", type=int, metavar="N",
                       help="override the command's primary seed")
        p.set_defaults(func=func)
        return p

    add("generate", cmd_generate, "simulate ground-truth trajectories")
    add("augment", cmd_augment, "materialize a window dataset recipe",
        data=True, recipe=True)
    add("train", cmd_train, "train a model on a dataset recipe",
        data=True, recipe=True, min_epochs=True)
    add("evaluate", cmd_evaluate, "evaluate a checkpoint on the test split",
        data=True, model=True)
    add("gradcheck", cmd_gradcheck,
        "verify the analytic gradient against finite differences",
        out=False, instances=True)
    add("study", cmd_study, "run the full seeds-by-recipes comparison study",
        min_epochs=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
