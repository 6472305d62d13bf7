"""Command-line entry point.

Subcommands: gen-data, train-source, split, adapt, eval, ablate, sweep.
Every command resolves its full config (defaults + file + flags), writes it
into the output directory before any computation, and is deterministic under
a fixed seed. Exit codes: 0 success, 1 domain error, 2 usage error.

Target-train ground-truth labels always live in a separate file that only the
diagnostics/eval paths accept; the adaptation input is the unlabeled CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
from dataclasses import replace

from .configio import (ConfigError, format_flat_config,
                       shift_spec_from_sources, train_config_from_sources)
from .datasets import load_csv, save_csv
from .evaluation import evaluate, format_metrics_table
from .model import load_model, save_model
from .numkit import DmaplError
from .splitter import save_split_csv, split_diagnostics, split_target
from .trainer import (MODES, adapt, prepare_benchmark, run_experiment, sweep,
                      train_source)


def _prepare_out_dir(path: str, force: bool) -> None:
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise FileExistsError(f"output directory {path!r} is not empty (use --force)")
    os.makedirs(path, exist_ok=True)


def _write_resolved_config(out_dir: str, values: dict, name: str = "resolved_config.txt") -> None:
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(format_flat_config(values))


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key-value config file")
    grp = parser.add_argument_group("config overrides")
    grp.add_argument("--seed", type=int, dest="seed")
    grp.add_argument("--mode", choices=MODES, dest="mode")
    grp.add_argument("--p-th", type=float, dest="p_th")
    grp.add_argument("--alpha", type=float, dest="alpha")
    grp.add_argument("--beta", type=float, dest="beta")
    grp.add_argument("--lambda", type=float, dest="lambda_")
    grp.add_argument("--eta-0", type=float, dest="eta_0")
    grp.add_argument("--eta-1", type=float, dest="eta_1")
    grp.add_argument("--momentum", type=float, dest="momentum")
    grp.add_argument("--weight-decay", type=float, dest="weight_decay")
    grp.add_argument("--source-epochs", type=int, dest="source_epochs")
    grp.add_argument("--adapt-epochs", type=int, dest="adapt_epochs")
    grp.add_argument("--batch-size-l", type=int, dest="batch_size_l")
    grp.add_argument("--batch-size-u", type=int, dest="batch_size_u")
    grp.add_argument("--hidden-dims", dest="hidden_dims",
                     help="comma-separated encoder widths, e.g. 32,16")
    grp.add_argument("--bottleneck-dim", type=int, dest="bottleneck_dim")


def _config_from_args(args: argparse.Namespace):
    overrides = {key: getattr(args, key) for key in (
        "seed", "mode", "p_th", "alpha", "beta", "eta_0", "eta_1", "momentum",
        "weight_decay", "source_epochs", "adapt_epochs", "batch_size_l",
        "batch_size_u", "hidden_dims", "bottleneck_dim") if hasattr(args, key)}
    if getattr(args, "lambda_", None) is not None:
        overrides["lambda"] = args.lambda_
    return train_config_from_sources(getattr(args, "config", None), overrides)


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(s) for s in raw.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad --seeds value {raw!r}; expected e.g. 0,1,2") from None


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = shift_spec_from_sources(args.spec, {"seed": args.seed})
    _prepare_out_dir(args.out, args.force)
    resolved = {f: getattr(spec, f) for f in spec.__dataclass_fields__}
    resolved["split_ratio"] = args.ratio
    resolved["val_fraction"] = args.val_fraction
    _write_resolved_config(args.out, resolved, "resolved_spec.txt")
    bench = prepare_benchmark(spec, split_ratio=args.ratio, val_fraction=args.val_fraction)
    save_csv(bench.source_train, os.path.join(args.out, "source_train.csv"))
    save_csv(bench.source_val, os.path.join(args.out, "source_val.csv"))
    save_csv(bench.source_test, os.path.join(args.out, "source_test.csv"))
    save_csv(bench.target_train.without_labels(), os.path.join(args.out, "target_train.csv"))
    save_csv(bench.target_train, os.path.join(args.out, "target_train_groundtruth.csv"))
    save_csv(bench.target_test, os.path.join(args.out, "target_test.csv"))
    print(f"wrote 6 CSVs to {args.out}")
    return 0


def cmd_train_source(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    _prepare_out_dir(args.out, args.force)
    _write_resolved_config(args.out, config.to_dict())
    train = load_csv(args.train)
    val = load_csv(args.val, num_classes=train.num_classes)
    model, record = train_source(train, val, config)
    save_model(model, os.path.join(args.out, "source_model.txt"))
    record.save(args.out)
    print(f"best validation accuracy {record.final['best_val_micro']:.4f}; "
          f"model written to {args.out}/source_model.txt")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    _prepare_out_dir(args.out, args.force)
    _write_resolved_config(args.out, {"p_th": args.p_th, "model": args.model,
                                      "target_train": args.target_train})
    model = load_model(args.model)
    data = load_csv(args.target_train, num_classes=model.config.num_classes)
    result = split_target(model, data.without_labels(), args.p_th)
    truth = None
    if args.ground_truth:
        truth = load_csv(args.ground_truth, num_classes=model.config.num_classes).labels
    diag = split_diagnostics(result, truth)
    save_split_csv(result, os.path.join(args.out, "split.csv"))
    with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
        fh.write(json.dumps(diag, sort_keys=True) + "\n")
    print(json.dumps(diag, sort_keys=True))
    return 0


def cmd_adapt(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    _prepare_out_dir(args.out, args.force)
    _write_resolved_config(args.out, config.to_dict())
    source_model = load_model(args.source_model)
    target_train = load_csv(args.target_train,
                            num_classes=source_model.config.num_classes).without_labels()
    truth = None
    if args.ground_truth:
        truth = load_csv(args.ground_truth,
                         num_classes=source_model.config.num_classes).labels
    eval_data = None
    if args.target_test:
        eval_data = load_csv(args.target_test, num_classes=source_model.config.num_classes)
    snapshot_dir = None
    if args.snapshot_soft_labels:
        snapshot_dir = os.path.join(args.out, "soft_labels")
        os.makedirs(snapshot_dir, exist_ok=True)
    model, record = adapt(source_model, target_train, config,
                          diagnostic_labels=truth, eval_data=eval_data,
                          snapshot_dir=snapshot_dir)
    save_model(model, os.path.join(args.out, "adapted_model.txt"))
    if config.mode in ("dmapl",):
        result = split_target(source_model, target_train, config.p_th)
        save_split_csv(result, os.path.join(args.out, "split.csv"))
    record.save(args.out)
    print(record.summary_json())
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    test = load_csv(args.test, num_classes=model.config.num_classes)
    metrics = evaluate(model, test)
    print(format_metrics_table(metrics))
    if args.out:
        _prepare_out_dir(args.out, args.force)
        with open(os.path.join(args.out, "metrics.json"), "w") as fh:
            fh.write(json.dumps(metrics.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    base_config = _config_from_args(args)
    spec = shift_spec_from_sources(args.spec, {})
    seeds = _parse_seeds(args.seeds)
    _prepare_out_dir(args.out, args.force)
    _write_resolved_config(args.out, {**base_config.to_dict(), "seeds": args.seeds})
    rows = []
    for mode in MODES if args.modes is None else args.modes.split(","):
        for seed in seeds:
            result = run_experiment(replace(spec, seed=seed),
                                    replace(base_config, mode=mode, seed=seed))
            rows.append({"mode": mode, "seed": seed,
                         "test_micro": result["test_micro"],
                         "test_macro": result["test_macro"],
                         "source_test_micro": result["source_test_micro"]})
    with open(os.path.join(args.out, "ablation.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    means = {}
    for mode in {r["mode"] for r in rows}:
        vals = [r["test_micro"] for r in rows if r["mode"] == mode]
        means[mode] = statistics.mean(vals)
    with open(os.path.join(args.out, "ablation_summary.json"), "w") as fh:
        fh.write(json.dumps(means, sort_keys=True) + "\n")
    for mode in sorted(means, key=means.get):
        print(f"{mode:>22s}  mean test accuracy {100 * means[mode]:6.2f}%")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    base_config = _config_from_args(args)
    spec = shift_spec_from_sources(args.spec, {})
    try:
        with open(args.grid) as fh:
            grid = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.grid}: malformed grid file ({exc})") from None
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ConfigError(f"{args.grid}: grid must map parameter names to value lists")
    seeds = _parse_seeds(args.seeds)
    _prepare_out_dir(args.out, args.force)
    _write_resolved_config(args.out, {**base_config.to_dict(), "seeds": args.seeds})
    with open(os.path.join(args.out, "grid.json"), "w") as fh:
        json.dump(grid, fh, sort_keys=True)
        fh.write("\n")
    rows = sweep(spec, base_config, grid, seeds=seeds, jobs=args.jobs)
    fieldnames = list(grid.keys()) + ["ratio", "pl_acc", "test_acc", "seed", "error"]
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in fieldnames})
    ok = [r for r in rows if r["error"] is None]
    print(f"{len(ok)}/{len(rows)} cells succeeded; table written to {args.out}/sweep.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmapl",
                                     description="Source-free inductive domain adaptation "
                                                 "with dual moving-average pseudo-labeling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic two-domain benchmark CSVs")
    p.add_argument("--spec", help="benchmark spec file (flat key-value)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, default=0.8, help="train:test split ratio")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-source", help="pre-train the source model")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("split", help="confidence-split a target training CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--target-train", required=True)
    p.add_argument("--p-th", type=float, default=0.9)
    p.add_argument("--ground-truth", help="labeled target-train CSV, diagnostics only")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("adapt", help="adapt a source model to unlabeled target data")
    p.add_argument("--source-model", required=True)
    p.add_argument("--target-train", required=True)
    p.add_argument("--target-test", help="labeled test CSV; adds test metrics to the record")
    p.add_argument("--ground-truth", help="labeled target-train CSV, diagnostics only")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--snapshot-soft-labels", action="store_true",
                   help="dump per-epoch soft-label CSVs")
    _add_config_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="evaluate a model on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the ablation modes on the synthetic benchmark")
    p.add_argument("--spec", help="benchmark spec file")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--modes", help="comma-separated subset of modes (default all)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="hyperparameter sweep on the synthetic benchmark")
    p.add_argument("--grid", required=True, help="JSON file: {param: [values...]}")
    p.add_argument("--spec", help="benchmark spec file")
    p.add_argument("--seeds", default="0")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DmaplError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
