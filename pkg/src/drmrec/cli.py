"""Command-line harness: convert, train, eval, correlate, group-report.

Exit codes: 0 success, 2 configuration error, 3 input/output error,
4 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import config as config_mod
from . import reports
from .errors import (ConfigError, DrmrecError, EvaluationError,
                     ModelFormatError, ParseError, TrainingError)
from .factors import load_model, save_model
from .interactions import (load_interaction_splits, load_interactions,
                           persist_split, split_interactions, write_pair_list)
from .metrics import evaluate_model
from .trainer import fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_RUNTIME = 4

logger = logging.getLogger(__name__)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    for key, (_conv, default, help_text) in config_mod.CONFIG_SCHEMA.items():
        hint = f"{help_text}" + (f" (default {default})" if default else "")
        parser.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="V",
                            help=hint)


def _collect_overrides(args) -> dict:
    out = {}
    for key in config_mod.CONFIG_SCHEMA:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drmrec",
        description="Train and evaluate factor recommenders with a joint "
                    "hinge + relaxed ranking-metric objective.")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="rewrite a dataset as canonical pair-list")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="pair-list",
                   choices=("pair-list", "playlist-json"))
    p.add_argument("--output", required=True)

    p = sub.add_parser("train", help="run repeated training runs per config")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a persisted model on a holdout")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True,
                   help="training pair-list (defines exclusions/eligibility)")
    p.add_argument("--validation",
                   help="validation pair-list, include when the model was "
                        "trained with one so internal ids line up")
    p.add_argument("--test", required=True)
    p.add_argument("--cutoffs", default="10,50")
    p.add_argument("--min-train", type=int, default=5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("correlate",
                       help="loss/metric correlations from training traces")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--skip-epochs", type=int, default=2)
    p.add_argument("--out", required=True)

    p = sub.add_parser("group-report",
                       help="metric means bucketed by train-interaction count")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--validation")
    p.add_argument("--test", required=True)
    p.add_argument("--boundaries", required=True,
                   help="comma-separated bucket boundaries, e.g. 10,20")
    p.add_argument("--min-train", type=int, default=5)
    p.add_argument("--out", required=True)
    return parser


def cmd_convert(args) -> int:
    matrix = load_interactions(args.input, args.format)
    out = Path(args.output)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_pair_list(out, matrix)
    print(f"wrote {matrix.num_interactions} interactions "
          f"({matrix.num_users} users, {matrix.num_items} items) to {out}")
    return EXIT_OK


def _load_experiment_data(cfg):
    """Produce (train, validation, test) in one shared id space.

    In single-dataset mode the split is persisted first and then reloaded, so
    the id space is exactly what a later `eval --train/--validation/--test`
    on those files will reconstruct.
    """
    out_dir = Path(cfg["out"])
    if cfg["data"] is not None:
        full = load_interactions(cfg["data"], cfg["format"])
        parts = split_interactions(full, cfg.split_spec)
        persist_split(out_dir / "split", *parts, cfg.split_spec)
        paths = [out_dir / "split" / f"{n}.tsv"
                 for n in ("train", "validation", "test")]
        return load_interaction_splits(paths)
    return load_interaction_splits([cfg["train"], cfg["validation"], cfg["test"]])


def cmd_train(args) -> int:
    file_values = (config_mod.read_config_file(args.config)
                   if args.config else {})
    cfg = config_mod.resolve_config(file_values, _collect_overrides(args))
    if cfg["out"] is None:
        raise ConfigError("train needs an output directory ('out')")
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    train, validation, test = _load_experiment_data(cfg)
    hp = cfg.hyperparams
    rows = reports.report_rows(cfg["cutoffs"])
    ks = sorted({10, 50} | set(cfg["cutoffs"]))

    with open(out_dir / "config_used.txt", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(cfg.canonical_text())

    per_run = []
    traces = []
    for run in range(cfg["runs"]):
        run_hp = replace(hp, seed=hp.seed + run)
        run_dir = out_dir / f"run{run}"
        run_dir.mkdir(parents=True, exist_ok=True)
        entry = {"seed": run_hp.seed, "status": "ok"}
        try:
            result = fit(train, validation, run_hp)
            model_path = run_dir / "model.bin"
            save_model(result.model, model_path)
            reports.write_trace(run_dir / "trace.tsv", result.trace, hp.val_k)
            traces.append(reports.read_trace(run_dir / "trace.tsv"))
            # evaluate the persisted form so eval on the file agrees exactly
            report = evaluate_model(load_model(model_path), train, test, ks,
                                    min_train=hp.min_train)
            entry["values"] = {(m, k): report.get(m, k).mean for m, k in rows}
            entry["n_users"] = report.n_users
            logger.info("run %d done: best epoch %d of %d", run,
                        result.best_epoch, result.epochs_run)
        except (TrainingError, EvaluationError) as exc:
            entry["status"] = f"failed: {exc}"
            logger.warning("run %d failed: %s", run, exc)
        per_run.append(entry)
    reports.write_run_report(out_dir, rows, per_run, cfg.fingerprint())
    if traces:
        reports.plot_training_curves(out_dir, traces, hp.val_k)
    done = sum(1 for r in per_run if r["status"] == "ok")
    print(f"finished {done}/{cfg['runs']} runs; report in {out_dir}")
    if done == 0:
        raise TrainingError("all runs failed; see report.txt")
    return EXIT_OK


def _load_eval_inputs(args):
    model = load_model(args.model)
    paths = [args.train]
    if args.validation:
        paths.append(args.validation)
    paths.append(args.test)
    parts = load_interaction_splits(paths)
    train, test = parts[0], parts[-1]
    if train.num_users != model.num_users or train.num_items != model.num_items:
        raise ConfigError(
            f"model covers {model.num_users} users x {model.num_items} items "
            f"but the split files define {train.num_users} x "
            f"{train.num_items}; pass the exact split the model was trained "
            "on (including --validation)")
    return model, train, test


def cmd_eval(args) -> int:
    model, train, test = _load_eval_inputs(args)
    cutoffs = config_mod.CONFIG_SCHEMA["cutoffs"][0](args.cutoffs)
    rows = reports.report_rows(cutoffs)
    ks = sorted({10, 50} | set(cutoffs))
    report = evaluate_model(model, train, test, ks, min_train=args.min_train)
    reports.write_eval_report(args.out, report, rows)
    for metric, k in rows:
        v = report.get(metric, k)
        print(f"{metric}@{k} = {v.mean:.6f} ± {v.std:.6f}, "
              f"n_users={report.n_users}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    traces = [reports.read_trace(p) for p in args.traces]
    try:
        reports.write_correlation_report(args.out, traces, args.skip_epochs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"correlation report in {args.out}")
    return EXIT_OK


def cmd_group_report(args) -> int:
    model, train, test = _load_eval_inputs(args)
    try:
        boundaries = [int(tok) for tok in args.boundaries.split(",") if tok.strip()]
        if not boundaries:
            raise ValueError("empty boundary list")
    except ValueError as exc:
        raise ConfigError(f"bad boundaries {args.boundaries!r}") from exc
    groups = reports.group_ndcg(model, train, test, boundaries,
                                min_train=args.min_train)
    reports.write_group_report(args.out, groups)
    for g in groups:
        val = "NA" if g["ndcg_mean"] is None else f"{g['ndcg_mean']:.6f}"
        print(f"{g['label']}: n_users={g['n_users']}, ndcg@10={val}")
    return EXIT_OK


_COMMANDS = {
    "convert": cmd_convert,
    "train": cmd_train,
    "eval": cmd_eval,
    "correlate": cmd_correlate,
    "group-report": cmd_group_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, ModelFormatError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DrmrecError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
