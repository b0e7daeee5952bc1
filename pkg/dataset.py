"""
Imbalanced binary-classification datasets: CSV loading, stratified splits,
optional min-max scaling and the synthetic two-blob generator.
"""
import csv
import hashlib
import logging
import os
from dataclasses import dataclass, field

import numpy as np

# Set up logging
logger = logging.getLogger(__name__)

POSITIVE = 1
NEGATIVE = 0
CLASS_NAMES = {POSITIVE: "positive", NEGATIVE: "negative"}


class DatasetError(ValueError):
    """Raised when a dataset file or split request is invalid"""


@dataclass(frozen=True)
class FitnessCase:
    """One input record: feature values and its binary label"""
    features: tuple
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable set of fitness cases.

    Features are kept as a read-only (n_cases, n_features) float64 matrix and
    labels as a read-only int vector holding POSITIVE / NEGATIVE.
    """
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()
    positive_token: str = "1"
    negative_token: str = "0"
    fingerprint: str = field(init=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DatasetError(f"Feature matrix must be 2-D with at least one column, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"Label vector length {y.shape} does not match {X.shape[0]} cases")
        if not np.isin(y, (POSITIVE, NEGATIVE)).all():
            raise DatasetError("Labels must be POSITIVE or NEGATIVE")
        if not np.isfinite(X).all():
            raise DatasetError("Feature values must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{k}" for k in range(X.shape[1])))
        digest = hashlib.sha1(X.tobytes() + y.tobytes()).hexdigest()
        object.__setattr__(self, "fingerprint", digest)

    def __len__(self):
        return self.X.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.fingerprint == other.fingerprint
                and self.X.shape == other.X.shape
                and self.positive_token == other.positive_token
                and self.negative_token == other.negative_token)

    def __hash__(self):
        return hash(self.fingerprint)

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def class_counts(self):
        n_pos = int(np.count_nonzero(self.y == POSITIVE))
        return {"positive": n_pos, "negative": len(self) - n_pos}

    @property
    def cases(self):
        return [FitnessCase(tuple(float(v) for v in row), int(label)) for row, label in zip(self.X, self.y)]

    def subset(self, indices):
        """Return a new Dataset holding the given case indices, in the given order"""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices], self.y[indices], self.feature_names,
                       self.positive_token, self.negative_token)


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=-1, positive_label=None):
    """
    Load a comma-separated binary-classification file.

    Args:
        path: CSV file path
        label_column: index of the label column (negative indices count from the end)
        positive_label: label token of the positive class; the rarer class when omitted

    Returns:
        Dataset with feature and row order preserved
    """
    if not os.path.exists(path):
        raise DatasetError(f"Dataset file not found: {path}")

    with open(path, newline="") as f:
        rows = [[cell.strip() for cell in row] for row in csv.reader(f) if row and any(c.strip() for c in row)]
    if not rows:
        raise DatasetError(f"Dataset file is empty: {path}")

    width = len(rows[0])
    for number, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DatasetError(f"Ragged row {number} in {path}: expected {width} columns, got {len(row)}")
    if width < 2:
        raise DatasetError("Dataset needs at least one feature column and a label column")
    if not -width <= label_column < width:
        raise DatasetError(f"Label column {label_column} out of range for {width} columns")
    label_index = label_column % width
    feature_indices = [k for k in range(width) if k != label_index]

    header = None
    if any(not _is_number(rows[0][k]) for k in feature_indices):
        header = rows[0]
        rows = rows[1:]
        logger.info(f"Treating first row of {path} as a header")
    if not rows:
        raise DatasetError(f"Dataset file has a header but no data rows: {path}")

    features = np.empty((len(rows), len(feature_indices)), dtype=np.float64)
    tokens = []
    for r, row in enumerate(rows):
        for c, k in enumerate(feature_indices):
            try:
                features[r, c] = float(row[k])
            except ValueError:
                raise DatasetError(f"Non-numeric feature cell {row[k]!r} at data row {r + 1}, column {k}") from None
        tokens.append(row[label_index])

    distinct = sorted(set(tokens))
    if len(distinct) != 2:
        raise DatasetError(f"Invalid label cardinality: expected 2 distinct labels, found {len(distinct)} {distinct}")

    counts = {token: tokens.count(token) for token in distinct}
    if positive_label is None:
        # rarer class wins; sorted() makes the lexicographically smaller token win ties
        positive_label = min(distinct, key=lambda token: counts[token])
    positive_label = str(positive_label)
    if positive_label not in counts:
        raise DatasetError(f"Positive label {positive_label!r} has zero rows (labels present: {distinct})")
    negative_label = distinct[1] if distinct[0] == positive_label else distinct[0]

    labels = np.array([POSITIVE if token == positive_label else NEGATIVE for token in tokens], dtype=np.int64)
    names = tuple(header[k] for k in feature_indices) if header else ()
    ds = Dataset(features, labels, names, positive_label, negative_label)
    logger.info(f"Loaded {len(ds)} cases with {ds.n_features} features from {path}: {ds.class_counts}")
    return ds


def stratified_split(ds, train_fraction, seed):
    """
    Split a dataset into train and test parts, class by class.

    Each class contributes round(train_fraction * class size) cases to the
    training part, clamped so both parts keep at least one case per class.
    Cases keep their original relative order inside each part.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in (POSITIVE, NEGATIVE):
        members = np.flatnonzero(ds.y == label)
        if len(members) < 2:
            raise DatasetError(f"Class {CLASS_NAMES[label]} has {len(members)} cases; stratified split needs at least 2")
        n_train = int(np.floor(train_fraction * len(members) + 0.5))
        n_train = min(max(n_train, 1), len(members) - 1)
        shuffled = rng.permutation(members)
        train_idx.extend(shuffled[:n_train])
        test_idx.extend(shuffled[n_train:])
    train = ds.subset(np.sort(train_idx))
    test = ds.subset(np.sort(test_idx))
    logger.debug(f"Split {len(ds)} cases into {train.class_counts} train / {test.class_counts} test")
    return train, test


def min_max_scale(train, test=None):
    """Scale features to [0, 1] with bounds fitted on the training part only"""
    lo = train.X.min(axis=0)
    span = train.X.max(axis=0) - lo
    span[span == 0] = 1.0

    def scaled(ds):
        return Dataset((ds.X - lo) / span, ds.y, ds.feature_names, ds.positive_token, ds.negative_token)

    return scaled(train), (scaled(test) if test is not None else None)


def make_synthetic(n=200, imbalance=9, seed=0, separation=2.0):
    """
    Two 2-D Gaussian blobs with minority:majority = 1:imbalance.

    Returns:
        (features, labels) where labels hold the tokens "pos" / "neg"
    """
    if n < 4 or imbalance <= 0:
        raise DatasetError(f"Synthetic dataset needs n >= 4 and a positive imbalance ratio, got n={n}, ratio={imbalance}")
    rng = np.random.default_rng(seed)
    n_pos = max(2, int(round(n / (1.0 + imbalance))))
    n_neg = n - n_pos
    if n_neg < 2:
        raise DatasetError(f"Synthetic dataset with n={n} leaves fewer than 2 majority cases")
    pos = rng.normal(loc=separation, scale=1.0, size=(n_pos, 2))
    neg = rng.normal(loc=0.0, scale=1.0, size=(n_neg, 2))
    features = np.vstack([pos, neg])
    labels = ["pos"] * n_pos + ["neg"] * n_neg
    order = rng.permutation(n)
    return features[order], [labels[i] for i in order]


def write_synthetic_csv(path, n=200, imbalance=9, seed=0):
    """Write the synthetic dataset as CSV with a header row x0,x1,label"""
    features, labels = make_synthetic(n, imbalance, seed)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x0", "x1", "label"])
        for row, label in zip(features, labels):
            writer.writerow([repr(float(v)) for v in row] + [label])
    logger.info(f"Wrote synthetic dataset with {n} rows (1:{imbalance}) to {path}")
    return path
