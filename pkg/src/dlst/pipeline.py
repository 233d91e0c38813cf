"""End-to-end training, prediction, evaluation and sparsity sweeps.

Three methods share the same entry points:

``dlst``
    label matrix -> latent codes (KL alignment) -> kernel logistic regression
    from features to codes -> ML-KNN decoding in the latent space.
``dlst1``
    kernel logistic regression straight from features to the label matrix;
    predicted labels are the top-r outputs.
``dlst2``
    ML-KNN on the feature vectors.

Each stage error is re-raised as :class:`PipelineError` naming the stage.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .archive import FORMAT_VERSION, ModelArchive, save_archive
from .config import METHODS, PipelineConfig
from .dataset import (
    CorruptionSpec,
    LabeledDataset,
    SplitSpec,
    corrupt_labels,
    dropped_entries,
    manifest,
    split,
)
from .decoder import decode, train_mlknn
from .encoder import optimize_latent
from .metrics import EvalReport, default_top_r, evaluate, top_r_binarize
from .regressor import predict_latent, train_regressor

log = logging.getLogger(__name__)

DEFAULT_MISSING_RATIOS = (0.2, 0.4, 0.6, 0.7, 0.8, 0.9)
DEFAULT_TRAIN_FRACTIONS = tuple(round(0.01 * i, 2) for i in range(1, 11))
METRIC_COLUMNS = ("ap", "micro_f1", "macro_f1")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(name: str, timings: Optional[dict] = None):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class TrainResult:
    archive: ModelArchive
    trace: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    encoder_iterations: int = 0


def derive_seed(master: int, *keys: int) -> int:
    """Stable 31-bit seed for one run inside a larger experiment."""
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0] & 0x7FFFFFFF)


def content_hash(ds: LabeledDataset) -> str:
    h = hashlib.sha256()
    for part in (ds.features.astype("<f8").tobytes(), ds.labels.astype("<i1").tobytes()):
        h.update(len(part).to_bytes(8, "little"))
        h.update(part)
    h.update(json.dumps([ds.label_names, ds.instance_ids, ds.feature_names]).encode())
    return h.hexdigest()


def _feature_scaling(X: np.ndarray, enabled: bool):
    if not enabled:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _scaled(archive: ModelArchive, X) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - archive.feature_mean) / archive.feature_std


# ---------------------------------------------------------------------------
# train / predict
# ---------------------------------------------------------------------------


def run_train(cfg: PipelineConfig, train: LabeledDataset, top_r: Optional[int] = None) -> TrainResult:
    """Fit the configured method on ``train`` and pack it into an archive."""
    if train.n < 2:
        raise PipelineError("train", ValueError("training set needs at least 2 instances"))
    cfg = cfg.with_seed(cfg.seed)
    if top_r is None:
        top_r = cfg.metrics.top_r if cfg.metrics else default_top_r(train.labels)
    timings: dict = {}
    mean, std = _feature_scaling(train.features, cfg.standardize_features)
    X = (train.features - mean) / std
    codes = regressor = mlknn = None
    trace, steps, iters = [], [], 0

    if cfg.method == "dlst":
        with _stage("encoder", timings):
            result = optimize_latent(train.labels, cfg.encoder)
        codes, trace, steps, iters = result.codes, result.trace, result.step_norms, result.iterations
        with _stage("regressor", timings):
            regressor = train_regressor(X, codes, cfg.regressor)
        with _stage("mlknn", timings):
            mlknn = train_mlknn(codes.codes, train.labels, cfg.mlknn.k, cfg.mlknn.smoothing)
    elif cfg.method == "dlst1":
        with _stage("regressor", timings):
            regressor = train_regressor(X, train.labels.astype(np.float64), cfg.regressor)
    else:
        with _stage("mlknn", timings):
            mlknn = train_mlknn(X, train.labels, cfg.mlknn.k, cfg.mlknn.smoothing)

    mean.setflags(write=False)
    std.setflags(write=False)
    archive = ModelArchive(
        method=cfg.method,
        config=cfg,
        seed=cfg.seed,
        label_names=train.label_names,
        n_features=train.d,
        top_r=int(top_r),
        feature_mean=mean,
        feature_std=std,
        train_codes=codes,
        regressor=regressor,
        mlknn=mlknn,
    )
    if iters:
        timings["encoder_per_iteration"] = timings["encoder"] / iters
    return TrainResult(archive, trace, steps, timings, iters)


def run_predict(archive: ModelArchive, test) -> tuple[np.ndarray, np.ndarray]:
    """Binary label predictions and real-valued scores, both m x K."""
    if archive.format_version != FORMAT_VERSION:
        raise PipelineError("predict", ValueError(f"archive version {archive.format_version} unsupported"))
    X = test.features if isinstance(test, LabeledDataset) else np.asarray(test, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != archive.n_features:
        raise PipelineError(
            "predict", ValueError(f"dimension mismatch: archive expects {archive.n_features} features, got {X.shape}")
        )
    K = len(archive.label_names)
    if X.shape[0] == 0:
        return np.zeros((0, K), dtype=np.int8), np.zeros((0, K))
    Xs = _scaled(archive, X)
    if archive.method == "dlst":
        with _stage("regressor"):
            codes, _ = predict_latent(archive.regressor, Xs)
        with _stage("mlknn"):
            return decode(archive.mlknn, codes)
    if archive.method == "dlst1":
        with _stage("regressor"):
            scores = archive.regressor.decision_function(Xs)
        return top_r_binarize(scores, min(archive.top_r, K)), scores
    with _stage("mlknn"):
        return decode(archive.mlknn, Xs)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    method: str
    seed: int
    report: EvalReport
    timings: dict
    extra: dict = field(default_factory=dict)

    def row(self, **prefix) -> dict:
        r = self.report
        return {
            **prefix,
            "seed": self.seed,
            "method": self.method,
            "ap": r.average_precision,
            "micro_f1": r.micro_f1,
            "macro_f1": r.macro_f1,
            "map": r.map,
        }


def _single_run(cfg, method, seed, train, test, top_r) -> RunRecord:
    run_cfg = replace(cfg, method=method).with_seed(seed)
    res = run_train(run_cfg, train, top_r)
    with _stage("predict", res.timings):
        _, scores = run_predict(res.archive, test)
    with _stage("evaluate", res.timings):
        report = evaluate(scores, test.labels, top_r)
    return RunRecord(method, seed, report, res.timings, {"encoder_iterations": res.encoder_iterations})


def _resolve_top_r(cfg: PipelineConfig, ds: LabeledDataset) -> int:
    return cfg.metrics.top_r if cfg.metrics else default_top_r(ds.labels)


def aggregate(records: Iterable[RunRecord], columns=METRIC_COLUMNS + ("map",), key=lambda r: r.method) -> dict:
    """Mean and sample standard deviation of each metric, grouped by ``key``."""
    groups: dict = {}
    for rec in records:
        groups.setdefault(key(rec), []).append(rec.row())
    out = {}
    for name, rows in groups.items():
        stats = {"n_runs": len(rows)}
        for col in columns:
            vals = np.array([row[col] for row in rows], dtype=np.float64)
            stats[col] = {
                "mean": float(vals.mean()),
                "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
            }
        out[name] = stats
    return out


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(cfg, ds, command, **extra) -> dict:
    return {
        "command": command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "dataset": {"n": ds.n, "d": ds.d, "K": ds.K, "content_sha256": content_hash(ds)},
        **extra,
    }


@dataclass
class Experiment:
    """Rows, aggregate and manifest of an evaluation or sweep."""

    rows: list
    aggregate: dict
    manifest: dict
    records: list = field(default_factory=list)


def run_evaluate(
    cfg: PipelineConfig,
    dataset: LabeledDataset,
    n_repeats: int = 10,
    methods: Sequence[str] = METHODS,
    test: Optional[LabeledDataset] = None,
    out_dir=None,
    dataset_name: str = "dataset",
) -> Experiment:
    """Repeated split / train / predict / evaluate cycles.

    With ``test`` given, ``dataset`` is used whole for training on every
    repeat (a provided split) and only the seeds vary.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    top_r = _resolve_top_r(cfg, dataset)
    records, splits = [], []
    for rep in range(n_repeats):
        seed = derive_seed(cfg.seed, rep)
        if test is None:
            with _stage("split"):
                spec = SplitSpec(seed=seed, train_fraction_per_class=cfg.split.train_fraction)
                train, tst = split(dataset, spec)
            splits.append(manifest(seed, spec, train, tst))
        else:
            train, tst = dataset, test
        for method in methods:
            records.append(_single_run(cfg, method, seed, train, tst, top_r))
            log.info("repeat %d %s ap=%.4f", rep, method, records[-1].report.average_precision)
    rows = [rec.row(dataset=dataset_name, repeat=i // len(methods)) for i, rec in enumerate(records)]
    agg = aggregate(records)
    man = _manifest(
        cfg, dataset, "evaluate", n_repeats=n_repeats, methods=list(methods), top_r=top_r,
        splits=splits, timings=[{"method": r.method, "seed": r.seed, **r.timings} for r in records],
    )
    exp = Experiment(rows, agg, man, records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "results.csv", rows, ("dataset", "repeat", "seed", "method", "ap", "micro_f1", "macro_f1", "map"))
        write_json(out / "aggregate.json", agg)
        write_json(out / "manifest.json", man)
    return exp


def run_missing_sweep(
    cfg: PipelineConfig,
    dataset: LabeledDataset,
    ratios: Sequence[float] = DEFAULT_MISSING_RATIOS,
    n_repeats: int = 10,
    methods: Sequence[str] = ("dlst",),
    out_dir=None,
) -> Experiment:
    """Hide a fraction of training positives, then train and evaluate.

    Repeat ``rep`` uses the same split for every ratio, so the ratio-0 rows
    coincide with an uncorrupted baseline.
    """
    for ratio in ratios:
        if not 0 <= ratio < 1:
            raise ValueError(f"missing ratio {ratio} outside [0, 1)")
    top_r = _resolve_top_r(cfg, dataset)
    records, rows, dropped_log = [], [], []
    for rep in range(n_repeats):
        seed = derive_seed(cfg.seed, rep)
        with _stage("split"):
            train, test = split(dataset, SplitSpec(seed=seed, train_fraction_per_class=cfg.split.train_fraction))
        for ratio in ratios:
            with _stage("corrupt"):
                noisy = corrupt_labels(train, CorruptionSpec(ratio, seed))
            dropped_log.append({"ratio": ratio, "seed": seed, "n_dropped": len(dropped_entries(train, noisy))})
            for method in methods:
                rec = _single_run(cfg, method, seed, noisy, test, top_r)
                rec.extra["ratio"] = ratio
                records.append(rec)
                rows.append(rec.row(ratio=ratio))
    agg = aggregate(records, key=lambda r: f"{r.method}@{r.extra['ratio']}")
    man = _manifest(cfg, dataset, "sweep-missing", ratios=list(ratios), n_repeats=n_repeats,
                    methods=list(methods), top_r=top_r, corruption=dropped_log)
    exp = Experiment(rows, agg, man, records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep_missing.csv", rows, ("ratio", "seed", "method", "ap", "micro_f1", "macro_f1"))
        write_json(out / "aggregate.json", agg)
        write_json(out / "manifest.json", man)
    return exp


def run_train_ratio_sweep(
    cfg: PipelineConfig,
    dataset: LabeledDataset,
    fractions: Sequence[float] = DEFAULT_TRAIN_FRACTIONS,
    n_repeats: int = 10,
    methods: Sequence[str] = ("dlst",),
    out_dir=None,
) -> Experiment:
    """Per-class training fractions, ``n_repeats`` random draws each."""
    for frac in fractions:
        if not 0 < frac <= 1:
            raise ValueError(f"training fraction {frac} outside (0, 1]")
    top_r = _resolve_top_r(cfg, dataset)
    records, rows = [], []
    for fi, frac in enumerate(fractions):
        for rep in range(n_repeats):
            seed = derive_seed(cfg.seed, rep)
            with _stage("split"):
                train, test = split(dataset, SplitSpec(seed=seed, train_fraction_per_class=frac))
            if train.n < 2 or test.n == 0:
                raise PipelineError("split", ValueError(f"fraction {frac} leaves an unusable split"))
            for method in methods:
                run_cfg = cfg
                if method != "dlst1" and cfg.mlknn.k >= train.n:
                    run_cfg = replace(cfg, mlknn=replace(cfg.mlknn, k=train.n - 1))
                rec = _single_run(run_cfg, method, seed, train, test, top_r)
                rec.extra["fraction"] = frac
                records.append(rec)
                rows.append(rec.row(fraction=frac))
    agg = aggregate(records, key=lambda r: f"{r.method}@{r.extra['fraction']}")
    man = _manifest(cfg, dataset, "sweep-train-ratio", fractions=list(fractions),
                    n_repeats=n_repeats, methods=list(methods), top_r=top_r)
    exp = Experiment(rows, agg, man, records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep_train_ratio.csv", rows, ("fraction", "seed", "method", "ap", "micro_f1", "macro_f1"))
        write_json(out / "aggregate.json", agg)
        write_json(out / "manifest.json", man)
    return exp


def lambda_grid_search(
    cfg: PipelineConfig,
    dataset: LabeledDataset,
    lambdas: Sequence[float] = tuple(10.0 ** e for e in range(-3, 4)),
    n_folds: int = 10,
) -> dict:
    """Instance-wise k-fold cross-validation of the regularization weight.

    Returns mean AP per lambda and the best value.
    """
    rng = np.random.default_rng(cfg.seed)
    folds = np.array_split(rng.permutation(dataset.n), n_folds)
    top_r = _resolve_top_r(cfg, dataset)
    scores = {}
    for lam in lambdas:
        run_cfg = replace(cfg, regressor=replace(cfg.regressor, lam=lam))
        aps = []
        for f, test_idx in enumerate(folds):
            train_idx = np.sort(np.concatenate([folds[g] for g in range(n_folds) if g != f]))
            train, test = dataset.subset(train_idx), dataset.subset(np.sort(test_idx))
            res = run_train(run_cfg.with_seed(derive_seed(cfg.seed, f)), train, top_r)
            _, s = run_predict(res.archive, test)
            aps.append(evaluate(s, test.labels, top_r).average_precision)
        scores[lam] = float(np.mean(aps))
    best = max(scores, key=lambda k: (scores[k], -k))
    return {"mean_ap": scores, "best_lambda": best}


def write_training_outputs(result: TrainResult, out_dir, dataset: LabeledDataset, command="train") -> None:
    """Archive, encoder trace and manifest for a single training run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_archive(result.archive, out / "model.dlsta")
    trace_rows = [
        {"iter": i, "kl": kl, "step_norm": (result.step_norms[i - 1] if i > 0 else 0.0)}
        for i, kl in enumerate(result.trace)
    ]
    write_csv(out / "trace.csv", trace_rows, ("iter", "kl", "step_norm"))
    write_json(
        out / "manifest.json",
        _manifest(result.archive.config, dataset, command, method=result.archive.method,
                  encoder_iterations=result.encoder_iterations, timings=result.timings),
    )
