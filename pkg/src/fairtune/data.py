"""Tabular dataset container, CSV ingestion, encoding, standardisation, splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class CsvFormatError(ValueError):
    """CSV file does not match the declared schema."""


@dataclass
class Dataset:
    """Feature matrix plus binary label and protected-attribute vectors.

    features is float64 and row-major; labels and protected take values in
    {0, 1} and share the feature row count.
    """

    features: np.ndarray
    labels: np.ndarray
    protected: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64).ravel()
        self.protected = np.asarray(self.protected, dtype=np.float64).ravel()
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.protected.shape != (n,):
            raise ValueError("labels/protected length must match the feature rows")
        for name, vec in (("labels", self.labels), ("protected", self.protected)):
            if not np.isin(vec, (0.0, 1.0)).all():
                raise ValueError(f"{name} must be binary 0/1")
        if not self.feature_names:
            self.feature_names = [f"x{i + 1}" for i in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("one feature name per column required")

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.protected[idx],
                       list(self.feature_names))


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    stratify_by_label: bool = False

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ValueError("three positive split ratios required")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")


@dataclass(frozen=True)
class CsvSchema:
    label_column: str
    positive_label: str
    protected_column: str
    privileged_value: str
    drop_columns: tuple[str, ...] = ()
    protected_as_feature: bool = False

    def __post_init__(self):
        if self.label_column == self.protected_column:
            raise ValueError("label and protected columns must be distinct")


def _is_numeric(values: list[str]) -> bool:
    for v in values:
        try:
            float(v)
        except ValueError:
            return False
    return True


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a UTF-8, comma-separated, header-first CSV into a Dataset.

    Numeric columns pass through; other columns are one-hot encoded with
    lexicographically ordered category columns. The label maps to 1 iff it
    equals positive_label, the protected attribute to 1 iff it equals
    privileged_value. The protected column is excluded from the features
    unless schema.protected_as_feature is set.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    for col in (schema.label_column, schema.protected_column, *schema.drop_columns):
        if col not in header:
            raise CsvFormatError(f"{path}: missing column {col!r}")
    width = len(header)
    for lineno, row in enumerate(rows, start=2):
        if len(row) != width:
            raise CsvFormatError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
    columns = {name: [row[j] for row in rows] for j, name in enumerate(header)}
    labels = np.array([1.0 if v == schema.positive_label else 0.0
                       for v in columns[schema.label_column]])
    protected = np.array([1.0 if v == schema.privileged_value else 0.0
                          for v in columns[schema.protected_column]])
    skip = {schema.label_column, *schema.drop_columns}
    if not schema.protected_as_feature:
        skip.add(schema.protected_column)
    feats: list[np.ndarray] = []
    names: list[str] = []
    for name in header:
        if name in skip:
            continue
        raw = columns[name]
        if name == schema.protected_column:
            feats.append(protected)
            names.append(name)
        elif _is_numeric(raw):
            try:
                feats.append(np.array([float(v) for v in raw]))
            except ValueError:  # pragma: no cover - guarded by _is_numeric
                raise CsvFormatError(f"{path}: unparseable value in column {name!r}")
            names.append(name)
        else:
            for cat in sorted(set(raw)):
                feats.append(np.array([1.0 if v == cat else 0.0 for v in raw]))
                names.append(f"{name}={cat}")
    if not feats:
        raise CsvFormatError(f"{path}: no feature columns left")
    return Dataset(np.column_stack(feats), labels, protected, names)


def save_csv(data: Dataset, path, label_column: str = "label",
             protected_column: str = "protected") -> None:
    """Write a Dataset in the same CSV dialect load_csv reads."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*data.feature_names, label_column, protected_column])
        for i in range(len(data)):
            writer.writerow([repr(float(v)) for v in data.features[i]]
                            + [int(data.labels[i]), int(data.protected[i])])


def largest_remainder_sizes(n: int, ratios) -> list[int]:
    """Integer partition of n proportional to ratios, largest remainders first."""
    exact = [n * r for r in ratios]
    sizes = [int(np.floor(e)) for e in exact]
    short = n - sum(sizes)
    remainders = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in remainders[:short]:
        sizes[i] += 1
    return sizes


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle followed by a ratio partition into train/valid/test.

    With stratify_by_label the partition applies per label class, so class
    proportions carry over up to largest-remainder rounding.
    """
    n = len(data)
    if n < 3:
        raise ValueError("need at least 3 rows to split")
    rng = np.random.default_rng(spec.seed)
    if not spec.stratify_by_label:
        order = rng.permutation(n)
        sizes = largest_remainder_sizes(n, spec.ratios)
        parts = np.split(order, np.cumsum(sizes)[:-1])
    else:
        parts = [[], [], []]
        for cls in (0.0, 1.0):
            idx = np.nonzero(data.labels == cls)[0]
            if idx.size < 3:
                raise ValueError(f"label class {int(cls)} has fewer than 3 rows")
            order = idx[rng.permutation(idx.size)]
            sizes = largest_remainder_sizes(idx.size, spec.ratios)
            for part, chunk in zip(parts, np.split(order, np.cumsum(sizes)[:-1])):
                part.append(chunk)
        parts = [np.concatenate(p) for p in parts]
    return tuple(data.take(p) for p in parts)


@dataclass(frozen=True)
class StandardizeStats:
    mean: np.ndarray
    sd: np.ndarray


def standardize(train: Dataset, *others: Dataset) -> tuple[tuple[Dataset, ...], StandardizeStats]:
    """Z-score every feature using the training mean and standard deviation.

    Zero-variance columns are centred but not divided. The same statistics
    apply to every additional dataset.
    """
    if len(train) == 0:
        raise ValueError("empty training data")
    mean = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    divisor = np.where(sd == 0.0, 1.0, sd)

    def apply(ds: Dataset) -> Dataset:
        return Dataset((ds.features - mean) / divisor, ds.labels, ds.protected,
                       list(ds.feature_names))

    return tuple(apply(ds) for ds in (train, *others)), StandardizeStats(mean, sd)


def one_hot_encode(data: Dataset, columns) -> Dataset:
    """Replace the named integer-valued feature columns by indicator columns,
    one per observed category, ordered by category value."""
    targets = set(columns)
    missing = targets - set(data.feature_names)
    if missing:
        raise ValueError(f"unknown feature columns: {sorted(missing)}")
    feats: list[np.ndarray] = []
    names: list[str] = []
    for j, name in enumerate(data.feature_names):
        col = data.features[:, j]
        if name in targets:
            for cat in sorted(set(col.tolist())):
                feats.append((col == cat).astype(np.float64))
                names.append(f"{name}={cat:g}")
        else:
            feats.append(col)
            names.append(name)
    return Dataset(np.column_stack(feats), data.labels, data.protected, names)


def append_protected_feature(data: Dataset, name: str = "protected") -> Dataset:
    """Expose the protected attribute to the classifier as an extra feature."""
    return Dataset(np.column_stack([data.features, data.protected]),
                   data.labels, data.protected, [*data.feature_names, name])
