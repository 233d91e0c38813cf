"""Multi-label dataset ingestion, splitting and label corruption.

Datasets are held as dense numpy arrays. Loaders understand the Mulan
distribution format (an ARFF file plus an XML file naming the label
attributes) and plain dense CSV files.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import arff
import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset input."""


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix paired with a binary label matrix.

    Arrays are copied and marked read-only on construction so a dataset can
    be shared freely.
    """

    features: np.ndarray
    labels: np.ndarray
    label_names: tuple = ()
    instance_ids: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        Y = np.array(self.labels, copy=True)
        if X.ndim != 2 or Y.ndim != 2:
            raise DatasetError("features and labels must be 2-D")
        if X.shape[0] != Y.shape[0]:
            raise DatasetError(
                f"row count mismatch: {X.shape[0]} feature rows vs {Y.shape[0]} label rows"
            )
        if Y.size and not np.isin(Y, (0, 1)).all():
            raise DatasetError("label matrix must contain only 0 and 1")
        Y = Y.astype(np.int8)
        n, d = X.shape
        K = Y.shape[1]
        if d < 1 or K < 1:
            raise DatasetError("need at least one feature and one label")
        label_names = tuple(self.label_names) or tuple(f"label{j}" for j in range(K))
        instance_ids = tuple(self.instance_ids) or tuple(str(i) for i in range(n))
        feature_names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(d))
        if len(label_names) != K or len(instance_ids) != n or len(feature_names) != d:
            raise DatasetError("name/id tuples do not match matrix shapes")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", Y)
        object.__setattr__(self, "label_names", label_names)
        object.__setattr__(self, "instance_ids", instance_ids)
        object.__setattr__(self, "feature_names", feature_names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def K(self) -> int:
        return self.labels.shape[1]

    @property
    def cardinality(self) -> float:
        """Mean number of positive labels per instance."""
        if self.n == 0:
            return 0.0
        return float(self.labels.sum(axis=1).mean())

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return LabeledDataset(
            self.features[rows],
            self.labels[rows],
            self.label_names,
            tuple(self.instance_ids[i] for i in rows),
            self.feature_names,
        )

    def with_labels(self, labels) -> "LabeledDataset":
        return LabeledDataset(
            self.features, labels, self.label_names, self.instance_ids, self.feature_names
        )

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.label_names == other.label_names
            and self.instance_ids == other.instance_ids
            and self.feature_names == other.feature_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def __repr__(self):
        return (
            f"LabeledDataset(n={self.n}, d={self.d}, K={self.K}, "
            f"card={self.cardinality:.3f})"
        )


def empty_like(ds: LabeledDataset) -> LabeledDataset:
    return LabeledDataset(
        np.empty((0, ds.d)),
        np.empty((0, ds.K), dtype=np.int8),
        ds.label_names,
        (),
        ds.feature_names,
    )


# ---------------------------------------------------------------------------
# Mulan ARFF + XML
# ---------------------------------------------------------------------------


def read_label_xml(path) -> list[str]:
    """Return label names from a Mulan XML label file, in document order."""
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise DatasetError(f"malformed label XML {path}: {exc}") from exc
    names = []
    for el in root.iter():
        tag = el.tag.rsplit("}", 1)[-1]
        if tag == "label":
            name = el.get("name")
            if name is None:
                raise DatasetError(f"label element without a name in {path}")
            names.append(name)
    if not names:
        raise DatasetError(f"no labels declared in {path}")
    return names


def load_arff(arff_path, label_xml_path) -> LabeledDataset:
    """Load a Mulan multi-label dataset.

    Label columns are taken in the order of the XML file. All remaining
    attributes must be numeric and become the feature matrix. Sparse ARFF
    rows are densified.
    """
    label_names = read_label_xml(label_xml_path)
    text = Path(arff_path).read_text(encoding="utf-8")
    sparse, n_rows = _scan_data_section(text)
    try:
        obj = arff.loads(text, return_type=arff.COO if sparse else arff.DENSE)
    except arff.ArffException as exc:
        raise DatasetError(f"malformed ARFF {arff_path}: {exc}") from exc

    attributes = obj["attributes"]
    attr_names = [a[0] for a in attributes]
    index = {name: i for i, name in enumerate(attr_names)}
    missing = [name for name in label_names if name not in index]
    if missing:
        raise DatasetError(f"labels absent from ARFF: {missing}")

    if sparse:
        values, (rows, cols) = obj["data"][0], obj["data"][1:]
        table = np.zeros((n_rows, len(attributes)), dtype=object)
        table[:] = 0.0
        for v, r, c in zip(values, rows, cols):
            table[r, c] = v
    else:
        table = np.array(obj["data"], dtype=object)
        if table.size == 0:
            table = table.reshape(0, len(attributes))

    label_cols = [index[name] for name in label_names]
    label_set = set(label_cols)
    feature_cols = [i for i in range(len(attributes)) if i not in label_set]
    for i in feature_cols:
        if not _is_numeric(attributes[i][1]):
            raise DatasetError(f"feature attribute {attr_names[i]!r} is not numeric")

    Y = np.zeros((table.shape[0], len(label_cols)), dtype=np.int8)
    for j, c in enumerate(label_cols):
        for i, v in enumerate(table[:, c]):
            Y[i, j] = _binary(v, attr_names[c])
    try:
        X = table[:, feature_cols].astype(np.float64)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"non-numeric feature value in {arff_path}") from exc
    if np.isnan(X).any():
        raise DatasetError(f"missing feature values in {arff_path}")
    return LabeledDataset(
        X, Y, tuple(label_names), (), tuple(attr_names[i] for i in feature_cols)
    )


def _scan_data_section(text: str) -> tuple[bool, int]:
    """(rows are sparse, number of data rows)."""
    in_data, sparse, count = False, False, 0
    for line in io.StringIO(text):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        if in_data:
            if count == 0:
                sparse = s.startswith("{")
            count += 1
        elif s.lower().startswith("@data"):
            in_data = True
    return sparse, count


def _is_numeric(kind) -> bool:
    return isinstance(kind, str) and kind.upper() in ("NUMERIC", "REAL", "INTEGER")


def _binary(v, name: str) -> int:
    if v is None:
        raise DatasetError(f"missing value in label column {name!r}")
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise DatasetError(f"non-binary value {v!r} in label column {name!r}") from None
    if f == 0.0:
        return 0
    if f == 1.0:
        return 1
    raise DatasetError(f"non-binary value {v!r} in label column {name!r}")


# ---------------------------------------------------------------------------
# Dense CSV
# ---------------------------------------------------------------------------


def _read_csv_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        return None, [], []
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = rows[0], rows[1:]
    ids = []
    if header is not None and header[0].strip() == "id":
        header = header[1:]
        ids = [r[0] for r in rows]
        rows = [r[1:] for r in rows]
    return header, ids, rows


def _parse_cells(rows, path, binary=False):
    width = {len(r) for r in rows}
    if len(width) > 1:
        raise DatasetError(f"ragged rows in {path}")
    out = np.empty((len(rows), width.pop() if width else 0))
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DatasetError(f"non-numeric cell {cell!r} at {path}:{i + 1}") from None
            if binary and out[i, j] not in (0.0, 1.0):
                raise DatasetError(f"non-binary label cell {cell!r} at {path}:{i + 1}")
    return out


def load_csv(features_path, labels_path) -> LabeledDataset:
    """Load features and labels from two dense CSV files.

    A first row that does not parse as numbers is a header. A leading
    header column named ``id`` carries instance identifiers.
    """
    fh, fids, frows = _read_csv_table(features_path)
    lh, lids, lrows = _read_csv_table(labels_path)
    if len(frows) != len(lrows):
        raise DatasetError(
            f"row-count mismatch: {len(frows)} feature rows vs {len(lrows)} label rows"
        )
    X = _parse_cells(frows, features_path)
    Y = _parse_cells(lrows, labels_path, binary=True).astype(np.int8)
    ids = fids or lids
    if fids and lids and fids != lids:
        raise DatasetError("instance ids differ between feature and label files")
    return LabeledDataset(X, Y, tuple(lh or ()), tuple(ids), tuple(fh or ()))


def save_csv(ds: LabeledDataset, features_path, labels_path) -> None:
    """Write ``ds`` as two CSV files that :func:`load_csv` reads back exactly."""
    with open(features_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *ds.feature_names])
        for iid, row in zip(ds.instance_ids, ds.features):
            w.writerow([iid, *(repr(float(v)) for v in row)])
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *ds.label_names])
        for iid, row in zip(ds.instance_ids, ds.labels):
            w.writerow([iid, *(str(int(v)) for v in row)])


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train_fraction_per_class: float = 0.1
    mode: str = "per-class-fraction"
    # used by mode="provided-split"
    train_ids: Optional[Sequence[str]] = None

    def __post_init__(self):
        if self.mode not in ("per-class-fraction", "provided-split"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "per-class-fraction" and not 0 < self.train_fraction_per_class <= 1:
            raise ValueError("train_fraction_per_class must lie in (0, 1]")
        if self.mode == "provided-split" and self.train_ids is None:
            raise ValueError("provided-split needs train_ids")


def split_indices(labels: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Sorted training row indices for a per-class fractional split.

    Each class contributes ``ceil(fraction * count)`` of its positive rows;
    rows with no positive label form one extra pool sampled the same way.
    Overlapping picks are pooled and deduplicated.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    chosen = set()
    pools = [np.flatnonzero(labels[:, j]) for j in range(labels.shape[1])]
    pools.append(np.flatnonzero(labels.sum(axis=1) == 0))
    for j, pool in enumerate(pools):
        if pool.size == 0:
            if j < labels.shape[1]:
                warnings.warn(f"class {j} has no positive instances; no train rows drawn")
            continue
        take = min(pool.size, max(1, math.ceil(fraction * pool.size - 1e-9)))
        chosen.update(rng.choice(pool, size=take, replace=False).tolist())
    return np.array(sorted(chosen), dtype=np.intp)


def split(ds: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Deterministic train/test split. Row order is preserved in both parts."""
    if spec.mode == "provided-split":
        wanted = set(spec.train_ids)
        unknown = wanted.difference(ds.instance_ids)
        if unknown:
            raise DatasetError(f"unknown train ids: {sorted(unknown)[:5]}")
        train_idx = np.array([i for i, iid in enumerate(ds.instance_ids) if iid in wanted], dtype=np.intp)
    else:
        train_idx = split_indices(ds.labels, spec.train_fraction_per_class, spec.seed)
    mask = np.zeros(ds.n, dtype=bool)
    mask[train_idx] = True
    test_idx = np.flatnonzero(~mask)
    test = ds.subset(test_idx) if test_idx.size else empty_like(ds)
    return ds.subset(train_idx), test


# ---------------------------------------------------------------------------
# Missing-label corruption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorruptionSpec:
    missing_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.missing_ratio < 1:
            raise ValueError("missing_ratio must lie in [0, 1)")


def draw_drops(labels: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of observed positives chosen uniformly for removal."""
    pos = np.flatnonzero(np.asarray(labels).ravel() == 1)
    n_drop = int(round(ratio * pos.size))
    mask = np.zeros(np.asarray(labels).size, dtype=bool)
    if n_drop:
        mask[rng.choice(pos, size=n_drop, replace=False)] = True
    return mask.reshape(np.shape(labels))


def corrupt_labels(train: LabeledDataset, spec: CorruptionSpec) -> LabeledDataset:
    """Hide a fraction of the observed positive labels of a training set.

    Hidden entries become 0. Afterwards one hidden entry is put back in every
    class left without positives, then in every instance left without
    positives, each pick uniform among that column's (row's) hidden entries.
    """
    if not 0 <= spec.missing_ratio < 1:
        raise ValueError("missing_ratio must lie in [0, 1)")
    Y = train.labels
    if (Y.sum(axis=1) == 0).any() or (Y.sum(axis=0) == 0).any():
        raise DatasetError("every instance and class needs a positive label before corruption")
    if spec.missing_ratio == 0:
        return train
    rng = np.random.default_rng(spec.seed)
    dropped = draw_drops(Y, spec.missing_ratio, rng)
    out = Y.copy()
    out[dropped] = 0
    for j in range(out.shape[1]):
        if out[:, j].sum() == 0:
            i = rng.choice(np.flatnonzero(dropped[:, j]))
            out[i, j] = 1
            dropped[i, j] = False
    for i in range(out.shape[0]):
        if out[i].sum() == 0:
            j = rng.choice(np.flatnonzero(dropped[i]))
            out[i, j] = 1
            dropped[i, j] = False
    return train.with_labels(out)


def dropped_entries(before: LabeledDataset, after: LabeledDataset) -> list[tuple[str, str]]:
    """(instance id, label name) pairs that were positive before and are 0 after."""
    rows, cols = np.nonzero((before.labels == 1) & (after.labels == 0))
    return [(before.instance_ids[i], before.label_names[j]) for i, j in zip(rows, cols)]


def manifest(seed: int, spec, train: LabeledDataset, test: LabeledDataset, dropped=()) -> dict:
    """JSON-ready record of a split (and optional corruption)."""
    from dataclasses import asdict

    spec_dict = asdict(spec) if hasattr(spec, "__dataclass_fields__") else dict(spec)
    if spec_dict.get("train_ids") is not None:
        spec_dict["train_ids"] = list(spec_dict["train_ids"])
    return {
        "seed": seed,
        "spec": spec_dict,
        "train_ids": list(train.instance_ids),
        "test_ids": list(test.instance_ids),
        "dropped_entries": [list(e) for e in dropped],
    }
