"""Labeled datasets: a Gaussian-mixture generator plus CSV and IDX loaders."""

import csv
import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .validation import as_float_array, check_labels

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    class_index: list = field(init=False, repr=False)

    def __post_init__(self):
        self.features = as_float_array(self.features, "features", ndim=2)
        self.n_classes = int(self.n_classes)
        if self.n_classes < 1:
            raise DataError("need at least one class")
        self.labels = check_labels(self.labels, self.n_classes)
        if len(self.labels) != len(self.features):
            raise DataError(f"{len(self.features)} feature rows but {len(self.labels)} labels")
        # positions of each class in dataset order
        self.class_index = [np.flatnonzero(self.labels == c) for c in range(self.n_classes)]

    @property
    def n(self):
        return len(self.labels)

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def class_counts(self):
        return np.array([len(ix) for ix in self.class_index])

    @property
    def balanced(self):
        counts = self.class_counts
        return bool(np.all(counts == counts[0]))

    def standardized(self):
        """Copy with every feature column shifted to mean 0 and scaled to variance 1."""
        mu = self.features.mean(axis=0)
        sd = self.features.std(axis=0)
        sd[sd == 0.0] = 1.0
        return LabeledDataset((self.features - mu) / sd, self.labels.copy(), self.n_classes)

    def subset(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(self.features[positions], self.labels[positions], self.n_classes)


def gen_gaussian_mixture(n_classes, d_in, n_per_class, separation=3.0, noise_scale=1.0, seed=0):
    """Isotropic Gaussian classes centred at ``separation`` times random orthonormal directions.

    Examples are ordered class by class.
    """
    if n_classes < 2:
        raise ConfigError("need at least two classes")
    if n_per_class < 1:
        raise ConfigError("need at least one example per class")
    if d_in < n_classes:
        raise ConfigError(f"d_in={d_in} cannot host {n_classes} orthonormal class directions")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d_in, n_classes)))
    means = separation * Q.T
    noise = rng.standard_normal((n_classes, n_per_class, d_in)) * noise_scale
    X = (means[:, None, :] + noise).reshape(n_classes * n_per_class, d_in)
    y = np.repeat(np.arange(n_classes), n_per_class)
    return LabeledDataset(X, y, n_classes)


def write_csv(dataset, path, header=True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j}" for j in range(dataset.n_features)] + ["label"])
        for xrow, label in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in xrow] + [int(label)])


def load_csv(path, has_header=False, n_classes=None):
    """Read rows of ``d_in`` floats followed by an integer label.

    ``n_classes`` defaults to ``max(label) + 1``. Errors name the 1-based
    line of the offending row.
    """
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and has_header:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: need at least one feature and a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}:{lineno}: expected {width} cells, got {len(row)}")
            try:
                feats = [float(cell) for cell in row[:-1]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            try:
                label = int(row[-1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: label {row[-1]!r} is not an integer") from None
            if label < 0 or (n_classes is not None and label >= n_classes):
                raise DataError(f"{path}:{lineno}: label {label} out of range")
            if not np.all(np.isfinite(feats)):
                raise DataError(f"{path}:{lineno}: non-finite feature")
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if n_classes is None:
        n_classes = max(labels) + 1
    return LabeledDataset(np.array(rows), np.array(labels, dtype=np.int64), n_classes)


def _read_maybe_gzip(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return blob


def _idx_header(blob, path, magic, ndims):
    if len(blob) < 4 + 4 * ndims:
        raise FormatError(f"{path}: truncated header")
    found = struct.unpack_from(">I", blob, 0)[0]
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack_from(f">{ndims}I", blob, 4)


def load_idx(images_path, labels_path, limit_per_class=None, n_classes=None):
    """Load an IDX image/label pair (MNIST layout), optionally gzip-compressed.

    Pixels are scaled to [0, 1] and images flattened. With
    ``limit_per_class`` only the first that many occurrences of each class
    (in file order) are kept, preserving file order.
    """
    img = _read_maybe_gzip(images_path)
    lab = _read_maybe_gzip(labels_path)
    n_img, rows, cols = _idx_header(img, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,) = _idx_header(lab, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise FormatError(f"{n_img} images but {n_lab} labels")
    pixels = rows * cols
    if len(img) < 16 + n_img * pixels:
        raise FormatError(f"{images_path}: truncated, expected {n_img * pixels} pixel bytes")
    if len(lab) < 8 + n_lab:
        raise FormatError(f"{labels_path}: truncated, expected {n_lab} label bytes")
    X = np.frombuffer(img, dtype=np.uint8, count=n_img * pixels, offset=16).reshape(n_img, pixels)
    y = np.frombuffer(lab, dtype=np.uint8, count=n_lab, offset=8).astype(np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1 if n_lab else 1
    if limit_per_class is not None:
        keep = np.zeros(n_lab, dtype=bool)
        for c in range(n_classes):
            keep[np.flatnonzero(y == c)[:limit_per_class]] = True
        X, y = X[keep], y[keep]
    return LabeledDataset(X.astype(np.float64) / 255.0, y, n_classes)


def write_idx(dataset, images_path, labels_path, shape):
    """Write features (assumed in [0, 1]) and labels as an IDX pair; used for fixtures."""
    rows, cols = shape
    pix = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, dataset.n, rows, cols))
        fh.write(pix.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, dataset.n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
