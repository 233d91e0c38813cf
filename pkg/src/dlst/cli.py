"""Command line front end.

Every subcommand takes the same dataset options: ``--arff`` with
``--labels-xml`` for Mulan files, or ``--features`` with ``--labels`` for
dense CSV. Paths left out on the command line fall back to the ``[paths]``
table of ``--config``.

Examples::

    dlst ingest --arff emotions.arff --labels-xml emotions.xml --out data/
    dlst train --config run.toml --method dlst --out run/
    dlst predict --archive run/model.dlsta --features x.csv --labels y.csv --out pred/
    dlst evaluate --config run.toml --repeats 10 --out eval/
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .archive import ArchiveError, load_archive, read_header
from .config import METHODS, ConfigError, PipelineConfig, load_config
from .dataset import DatasetError, LabeledDataset, SplitSpec, load_arff, load_csv, manifest, save_csv, split
from .metrics import evaluate
from .pipeline import (
    DEFAULT_MISSING_RATIOS,
    DEFAULT_TRAIN_FRACTIONS,
    PipelineError,
    content_hash,
    lambda_grid_search,
    run_evaluate,
    run_missing_sweep,
    run_predict,
    run_train,
    run_train_ratio_sweep,
    write_csv,
    write_json,
    write_training_outputs,
)

log = logging.getLogger("dlst")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "method", None):
        cfg = replace(cfg, method=args.method)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg.with_seed(cfg.seed)


def _load_dataset(args, cfg: PipelineConfig, prefix: str = "") -> LabeledDataset:
    arff = getattr(args, prefix + "arff", None) or (cfg.paths.arff if not prefix else None)
    xml = getattr(args, prefix + "labels_xml", None) or (cfg.paths.labels_xml if not prefix else None)
    feats = getattr(args, prefix + "features", None) or (cfg.paths.features if not prefix else None)
    labels = getattr(args, prefix + "labels", None) or (cfg.paths.labels if not prefix else None)
    if arff:
        if not xml:
            raise DatasetError("--arff needs --labels-xml")
        return load_arff(arff, xml)
    if feats and labels:
        return load_csv(feats, labels)
    raise DatasetError("no dataset given (use --arff/--labels-xml or --features/--labels)")


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_data_options(p: argparse.ArgumentParser, prefix: str = "", help_suffix: str = "") -> None:
    flag = "--" + prefix.replace("_", "-")
    p.add_argument(flag + "arff", dest=prefix + "arff", help="Mulan ARFF file" + help_suffix)
    p.add_argument(flag + "labels-xml", dest=prefix + "labels_xml", help="Mulan label XML" + help_suffix)
    p.add_argument(flag + "features", dest=prefix + "features", help="dense feature CSV" + help_suffix)
    p.add_argument(flag + "labels", dest=prefix + "labels", help="dense label CSV" + help_suffix)


def _add_common(p: argparse.ArgumentParser, method=True, repeats=False) -> None:
    p.add_argument("--config", metavar="PATH", help="TOML configuration file")
    p.add_argument("--seed", type=int, metavar="N", help="master seed (overrides config)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    if method:
        p.add_argument("--method", choices=METHODS, help="pipeline variant (overrides config)")
    if repeats:
        p.add_argument("--repeats", type=int, metavar="N", help="number of seeded repetitions")
    _add_data_options(p)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = _resolve_config(args)
    ds = _load_dataset(args, cfg)
    out = _out_dir(args, cfg)
    save_csv(ds, out / "features.csv", out / "labels.csv")
    info = {
        "n": ds.n, "d": ds.d, "K": ds.K,
        "cardinality": ds.cardinality,
        "label_names": list(ds.label_names),
        "content_sha256": content_hash(ds),
    }
    if args.split_fraction is not None:
        spec = SplitSpec(seed=cfg.seed, train_fraction_per_class=args.split_fraction)
        train, test = split(ds, spec)
        save_csv(train, out / "train_features.csv", out / "train_labels.csv")
        save_csv(test, out / "test_features.csv", out / "test_labels.csv")
        write_json(out / "split.json", manifest(cfg.seed, spec, train, test))
    write_json(out / "manifest.json", info)
    print(json.dumps(info, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    ds = _load_dataset(args, cfg)
    out = _out_dir(args, cfg)
    result = run_train(cfg, ds)
    write_training_outputs(result, out, ds)
    print(f"wrote {out / 'model.dlsta'} ({cfg.method}, {result.encoder_iterations} encoder iterations)")
    return 0


def cmd_predict(args) -> int:
    archive = load_archive(args.archive)
    cfg = archive.config
    ds = _load_dataset(args, replace(cfg, paths=replace(cfg.paths, arff=None, labels_xml=None, features=None, labels=None)))
    out = _out_dir(args, cfg)
    labels, scores = run_predict(archive, ds)
    ids = ds.instance_ids
    names = archive.label_names
    write_csv(out / "predictions.csv",
              [dict(id=i, **{n: int(v) for n, v in zip(names, row)}) for i, row in zip(ids, labels)],
              ("id",) + tuple(names))
    write_csv(out / "scores.csv",
              [dict(id=i, **{n: float(v) for n, v in zip(names, row)}) for i, row in zip(ids, scores)],
              ("id",) + tuple(names))
    if ds.n and ds.labels.any():
        report = evaluate(scores, ds.labels, archive.top_r, pred=labels if archive.method != "dlst1" else None)
        write_json(out / "metrics.json", report.to_dict())
        print(json.dumps(report.row(), sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    ds = _load_dataset(args, cfg)
    test = None
    if any(getattr(args, "test_" + k, None) for k in ("arff", "features")):
        test = _load_dataset(args, cfg, prefix="test_")
    methods = [args.method] if args.method else list(METHODS)
    repeats = args.repeats or cfg.split.repeats
    name = args.name or Path(args.arff or args.features or cfg.paths.arff or cfg.paths.features or "dataset").stem
    exp = run_evaluate(cfg, ds, repeats, methods, test=test, out_dir=_out_dir(args, cfg), dataset_name=name)
    _print_aggregate(exp.aggregate)
    return 0


def cmd_sweep_missing(args) -> int:
    cfg = _resolve_config(args)
    ds = _load_dataset(args, cfg)
    ratios = _floats(args.ratios) if args.ratios else DEFAULT_MISSING_RATIOS
    methods = [args.method] if args.method else ["dlst"]
    exp = run_missing_sweep(cfg, ds, ratios, args.repeats or cfg.split.repeats, methods, out_dir=_out_dir(args, cfg))
    _print_aggregate(exp.aggregate)
    return 0


def cmd_sweep_train_ratio(args) -> int:
    cfg = _resolve_config(args)
    ds = _load_dataset(args, cfg)
    fractions = _floats(args.fractions) if args.fractions else DEFAULT_TRAIN_FRACTIONS
    methods = [args.method] if args.method else ["dlst"]
    exp = run_train_ratio_sweep(cfg, ds, fractions, args.repeats or cfg.split.repeats, methods,
                                out_dir=_out_dir(args, cfg))
    _print_aggregate(exp.aggregate)
    return 0


def cmd_inspect_archive(args) -> int:
    with open(args.archive, "rb") as fh:
        header, _ = read_header(fh.read())
    print(json.dumps(header, indent=2, sort_keys=True))
    return 0


def cmd_grid_lambda(args) -> int:
    cfg = _resolve_config(args)
    ds = _load_dataset(args, cfg)
    lambdas = _floats(args.lambdas) if args.lambdas else [10.0 ** e for e in range(-3, 4)]
    result = lambda_grid_search(cfg, ds, lambdas, args.folds)
    out = _out_dir(args, cfg)
    write_csv(out / "grid_lambda.csv", [{"lam": k, "ap": v} for k, v in result["mean_ap"].items()], ("lam", "ap"))
    write_json(out / "grid_lambda.json", {"best_lambda": result["best_lambda"],
                                          "mean_ap": {repr(k): v for k, v in result["mean_ap"].items()}})
    print(f"best lambda: {result['best_lambda']:g}")
    return 0


def _print_aggregate(agg: dict) -> None:
    for name, stats in agg.items():
        cells = "  ".join(f"{m}={stats[m]['mean']:.4f}±{stats[m]['std']:.4f}" for m in ("ap", "micro_f1", "macro_f1"))
        print(f"{name:<12} {cells}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlst", description="Label space transformation for multi-label learning.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a dataset, write dense CSV and a manifest")
    _add_common(p, method=False)
    p.add_argument("--split-fraction", type=float, help="also write a per-class split with this fraction")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one model and save its archive")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels with a saved archive")
    p.add_argument("--archive", required=True, metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    _add_data_options(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated split/train/evaluate cycles")
    _add_common(p, repeats=True)
    _add_data_options(p, prefix="test_", help_suffix=" (fixed test set)")
    p.add_argument("--name", help="dataset name written to results.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-missing", help="missing-label sweep")
    _add_common(p, repeats=True)
    p.add_argument("--ratios", help="comma-separated missing ratios")
    p.set_defaults(func=cmd_sweep_missing)

    p = sub.add_parser("sweep-train-ratio", help="training-fraction sweep")
    _add_common(p, repeats=True)
    p.add_argument("--fractions", help="comma-separated per-class training fractions")
    p.set_defaults(func=cmd_sweep_train_ratio)

    p = sub.add_parser("inspect-archive", help="print an archive header")
    p.add_argument("archive", metavar="PATH")
    p.set_defaults(func=cmd_inspect_archive)

    p = sub.add_parser("grid-lambda", help="k-fold cross-validation over the regularization weight")
    _add_common(p)
    p.add_argument("--lambdas", help="comma-separated values (default 1e-3..1e3)")
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(func=cmd_grid_lambda)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ArchiveError, PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
