"""
Command-line entry point.

Subcommands:
    generate-data   render and cache a corpus
    list-tasks      print (or export) a dataset's task catalog
    train           train one run
    evaluate        recompute metrics.json of a run from its latest checkpoint
    infer-edges     print the EdgeReport of a run
    ablate-delta    sweep delta over the constraint conditions for one task
    run-plan        execute an experiment plan file
    report          regenerate the report of a plan output root

Exit status is 0 on success, 1 when a run or computation fails and 2 for
configuration errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from app.config.loader import apply_overrides, load_config_file, parse_model
from app.config.logging_setup import configure_logging
from app.config.settings import settings
from app.datasets.corpus import corpus_dir, generate_corpus, obtain_corpus, save_corpus
from app.datasets.factors import DATASET_NAMES, RESOLUTIONS, build_factor_space
from app.errors import CausalConceptsError, ConfigurationError
from app.evaluation.edges import infer_task_edges
from app.evaluation.run_metrics import write_run_artifacts
from app.experiment.plan import Condition, ExperimentPlan, load_plan, save_plan
from app.experiment.report import write_report
from app.experiment.runner import run_plan
from app.tasks.catalog import catalog, find_task, save_catalog
from app.training.config import TrainConfig
from app.training.trainer import CONFIG_FILE, fit, restore_run
from app.vae.config import Variant

logger = logging.getLogger("app.main")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs):
    """``["weights.delta=0.9", "epochs=5"]`` -> ``{"weights.delta": 0.9, "epochs": 5}``."""
    result = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"override '{pair}' is not of the form key=value")
        result[key.strip()] = _parse_value(value.strip())
    return result


def _file_data(path):
    return load_config_file(path) if path else {}


def cmd_generate_data(args):
    """Render a corpus and save it under ``--out`` or the data directory cache."""
    space = build_factor_space(args.dataset, args.resolution, image_size=args.image_size)
    out = Path(args.out) if args.out else corpus_dir(settings.DATA_DIR, args.dataset, args.resolution, args.image_size)
    save_corpus(generate_corpus(space, args.workers), out)
    print(f"{len(space)} samples written to {out}")


def cmd_list_tasks(args):
    """Print the task catalog of ``--dataset``, one task per line, and optionally export it as JSON."""
    tasks = catalog(args.dataset)
    if args.out:
        save_catalog(tasks, args.out)
    for i, task in enumerate(tasks, start=1):
        criteria = " & ".join(c.describe() for c in task.criteria)
        print(f"{i:2d}  {task.n_factors}-GF  {task.name:<28s} {criteria}")


def train_config_from_args(args):
    """
    Merge the config file, the dedicated flags and ``--set`` overrides into a TrainConfig.

    Later sources win: file values, then ``--variant``/``--task``/``--seed``,
    then every ``--set key=value`` pair.

    Raises:
        ConfigurationError: When the merged values do not validate.
    """
    data = apply_overrides(
        _file_data(args.config),
        {"variant": args.variant, "task": args.task, "seed": args.seed, **_overrides(args.set)},
    )
    return parse_model(TrainConfig, data)


def cmd_train(args):
    """Train one run, resuming unless ``--fresh``, and print its ``metrics.json``."""
    config = train_config_from_args(args)
    corpus, _ = obtain_corpus(config.dataset, config.resolution, args.data, config.image_size)
    task = find_task(config.dataset, config.task)
    out = Path(args.out) if args.out else settings.RUNS_DIR / task.slug() / f"{config.variant.value}__seed_{config.seed}"
    fit(config, corpus, out, task=task, resume=not args.fresh)
    print((out / "metrics.json").read_text())


def _run_config(run_dir):
    path = Path(run_dir) / CONFIG_FILE
    if not path.exists():
        raise ConfigurationError(f"{run_dir} is not a run directory (no {CONFIG_FILE})")
    return TrainConfig.model_validate_json(path.read_text())


def cmd_evaluate(args):
    """Recompute the artifacts of a run from its latest checkpoint and print a summary."""
    config = _run_config(args.run)
    corpus, _ = obtain_corpus(config.dataset, config.resolution, args.data, config.image_size)
    state, data = restore_run(args.run, corpus)
    metrics = write_run_artifacts(state.model, config, corpus, data, args.run)
    summary = {k: metrics[k] for k in ("task", "variant", "seed", "accuracy", "mic_score", "recon_mse")}
    print(json.dumps(summary, indent=2))


def cmd_infer_edges(args):
    """
    Print the edge report of a trained run.

    Only the exported ``heatmaps/W.csv`` and ``heatmaps/A.csv`` are read, so
    neither the corpus nor a checkpoint is needed.
    """
    config = _run_config(args.run)
    heatmaps = Path(args.run) / "heatmaps"
    if not (heatmaps / "A.csv").exists():
        raise ConfigurationError(f"{args.run} has no trained weights yet (missing heatmaps/A.csv)")
    w_frame = pd.read_csv(heatmaps / "W.csv", index_col="concept")
    a_frame = pd.read_csv(heatmaps / "A.csv", index_col="concept")
    task = find_task(config.dataset, config.task)
    k = args.k if args.k is not None else "auto"
    fp_margin = args.fp_margin if args.fp_margin is not None else config.fp_margin
    report = infer_task_edges(
        w_frame["weight"].to_numpy(), a_frame.to_numpy().T, task, list(a_frame.columns), k=k, fp_margin=fp_margin
    )
    print(report.model_dump_json(indent=2, exclude={"task"}))


def cmd_ablate_delta(args):
    """Build and run a one-task plan that sweeps delta over ``--deltas``."""
    base = apply_overrides(_file_data(args.config), _overrides(args.set))
    dataset = base.pop("dataset", "dsprites_like")
    base.pop("seed", None)
    task = args.task or base.pop("task", None) or catalog(dataset)[0].name
    base.pop("task", None)
    plan = parse_model(
        ExperimentPlan,
        {
            "dataset": dataset,
            "resolution": base.pop("resolution", "mini"),
            "image_size": base.pop("image_size", 64),
            "tasks": [task],
            "conditions": args.conditions,
            "delta_sweep": args.deltas,
            "seeds": [args.seed],
            "output_root": args.out or str(settings.RUNS_DIR / "ablate_delta"),
            "data_dir": args.data,
            "base": base,
            "workers": args.workers,
        },
    )
    save_plan(plan, Path(plan.output_root) / "plan.json")
    summary = run_plan(plan)
    print(f"report written to {summary.report_dir}")


def cmd_run_plan(args):
    """Load a plan file, apply overrides, run every pending run and write the report."""
    overrides = _overrides(args.set)
    if args.workers is not None:
        overrides["workers"] = args.workers
    plan = load_plan(args.plan, overrides)
    save_plan(plan, Path(plan.output_root) / "plan.json")
    summary = run_plan(plan)
    print(
        f"{len(summary.completed)} completed, {len(summary.skipped)} skipped; "
        f"report written to {summary.report_dir}"
    )


def cmd_report(args):
    """Regenerate the report of a plan output root and print its markdown."""
    out = write_report(args.root)
    print((out / "report.md").read_text())


def build_parser():
    parser = argparse.ArgumentParser(prog="causal-concepts", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="render and cache a corpus")
    p.add_argument("--dataset", choices=DATASET_NAMES, required=True)
    p.add_argument("--resolution", choices=RESOLUTIONS, default="mini")
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; rendering is deterministic")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_generate_data)

    p = sub.add_parser("list-tasks", help="print a dataset's task catalog")
    p.add_argument("--dataset", choices=DATASET_NAMES, required=True)
    p.add_argument("--out", help="also export the catalog as JSON")
    p.set_defaults(handler=cmd_list_tasks)

    p = sub.add_parser("train", help="train one run")
    p.add_argument("--config")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--task")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--data", help="corpus cache root")
    p.add_argument("--fresh", action="store_true", help="ignore existing checkpoints")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="recompute metrics of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--data")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("infer-edges", help="print the EdgeReport of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--fp-margin", type=float)
    p.set_defaults(handler=cmd_infer_edges)

    p = sub.add_parser("ablate-delta", help="sweep delta for one task")
    p.add_argument("--config")
    p.add_argument("--task")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--deltas", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument(
        "--conditions", nargs="+", choices=[c.value for c in Condition], default=[Condition.REGULARIZATION.value]
    )
    p.add_argument("--out")
    p.add_argument("--data")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=cmd_ablate_delta)

    p = sub.add_parser("run-plan", help="execute an experiment plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(handler=cmd_run_plan)

    p = sub.add_parser("report", help="regenerate a plan report")
    p.add_argument("--root", required=True)
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv=None):
    """
    Parse ``argv`` and run the chosen subcommand.

    Returns:
        int: Process exit status, taken from the exception's ``exit_code`` on failure.

    Example:
        main(["train", "--config", "configs/hearts.toml", "--seed", "1"])
    """
    configure_logging(settings.LOG_LEVEL, settings.LOG_FORMAT)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        args.handler(args)
    except CausalConceptsError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except Exception:
        logger.exception("unexpected failure")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
