"""Logit-derivative matrix, its three-level hierarchy, and the G operators.

For an example ``x`` of class ``c`` with softmax output ``p`` and logit
Jacobian ``J`` (rows ``J_k``), the column for logit coordinate ``c'`` is

    delta[i, c, c'] = sqrt(p_c') * (J_c' - sum_k p_k J_k)

and ``G = (1/n) Delta Delta^T``. Columns are grouped by ``(c, c')``; group
means are averaged over ``c' != c`` into cluster centers. With class weights
``w_c = n_c / n`` (``1/C`` when balanced) the operators are

    G0  = sum_c w_c delta_cc delta_cc^T
    G1  = (C - 1) sum_c w_c delta_c delta_c^T
    G2  = (C - 1) sum_c w_c Sigma_c
    G3  = sum_c w_c sum_c' Sigma_cc'
    G12 = sum_c w_c sum_c' delta_cc' delta_cc'^T

so that ``G = G0 + G1 + G2 + G3`` and ``G = G12 + G3``.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DataError, ResourceLimitError
from .linalg import sym_eig_small
from .logistic import softmax
from .model import forward, logit_jacobian, loss_grad

PARTS = ("G", "G0", "G1", "G2", "G3", "G12")
DEFAULT_MAX_BYTES = 2 * 1024 ** 3
MATERIALIZE_LIMIT = 2000


@dataclass
class DeltaMatrix:
    """Columns of Delta, stored one per row of ``columns`` (shape ``(n*C, P)``).

    Column order is class ``c`` outermost, then the examples of that class in
    dataset order, then logit coordinate ``c'``. ``positions[t]`` is the
    dataset row of the ``t``-th example in that order and ``probs[t]`` its
    softmax output.
    """

    columns: np.ndarray
    positions: np.ndarray
    example_class: np.ndarray
    probs: np.ndarray
    n_classes: int
    class_counts: np.ndarray

    @property
    def n(self):
        return len(self.positions)

    @property
    def dim(self):
        return self.columns.shape[1]

    @property
    def matrix(self):
        """Delta itself, ``P x (n C)`` (a transposed view)."""
        return self.columns.T

    @property
    def balanced(self):
        return bool(np.all(self.class_counts == self.class_counts[0]))

    def index_map(self):
        """``(example_position, class, within_class_index, logit)`` for every column."""
        C = self.n_classes
        starts = np.concatenate([[0], np.cumsum(self.class_counts)[:-1]])
        t = np.repeat(np.arange(self.n), C)
        cls = self.example_class[t]
        return (self.positions[t], cls, t - starts[cls], np.tile(np.arange(C), self.n))

    def column(self, i, c, c_prime):
        start = int(np.sum(self.class_counts[:c]))
        if not 0 <= i < self.class_counts[c]:
            raise IndexError(f"class {c} has {self.class_counts[c]} examples")
        return self.columns[(start + i) * self.n_classes + c_prime]


def delta_bytes(n, n_classes, n_params):
    return 8 * n * n_classes * n_params


def build_delta(model, dataset, max_bytes=DEFAULT_MAX_BYTES, chunk=64):
    C, P = model.n_classes, model.n_params
    if dataset.n_classes != C or dataset.n_features != model.n_features:
        raise DataError("dataset and model dimensions disagree")
    required = delta_bytes(dataset.n, C, P)
    if required > max_bytes:
        raise ResourceLimitError(
            f"Delta needs {required} bytes, above the limit of {max_bytes}", required, max_bytes)
    positions = np.concatenate(dataset.class_index).astype(np.int64)
    example_class = dataset.labels[positions]
    columns = np.empty((dataset.n * C, P))
    probs = np.empty((dataset.n, C))
    off_diag = 1.0 - np.eye(C)
    for start in range(0, dataset.n, chunk):
        pos = positions[start:start + chunk]
        X = dataset.features[pos]
        p = softmax(forward(model, X))
        J = logit_jacobian(model, X)
        # sum_k p_k (J_c' - J_k) written without forming J_c' - p^T J, which
        # cancels badly once one probability approaches 1
        w = p[:, None, :] * off_diag
        centered = w.sum(axis=2)[:, :, None] * J - np.einsum("nck,nkp->ncp", w, J)
        block = np.sqrt(p)[:, :, None] * centered
        columns[start * C:(start + len(pos)) * C] = block.reshape(-1, P)
        probs[start:start + len(pos)] = p
    return DeltaMatrix(columns, positions, example_class, probs, C, dataset.class_counts)


@dataclass
class CollinearityReport:
    positions: np.ndarray
    cosines: np.ndarray
    ratios: np.ndarray
    sqrt_pc: np.ndarray
    skipped: int

    @property
    def min_abs_cosine(self):
        return float(np.min(self.cosines)) if len(self.cosines) else float("nan")

    @property
    def max_ratio_error(self):
        if not len(self.ratios):
            return float("nan")
        return float(np.max(np.abs(np.abs(self.ratios) - self.sqrt_pc)))


def delta_gradient_collinearity(delta, model, dataset):
    """Compare ``delta[i, c, c]`` with the loss gradient of the same example.

    Reports ``|cos|`` and the scalar ``ratio = <delta, g> / |g|^2`` whose
    magnitude should equal ``sqrt(p_c)``. Pairs where either vector is
    exactly zero are skipped and counted.
    """
    C = delta.n_classes
    X = dataset.features[delta.positions]
    grads = loss_grad(model, X, dataset.labels[delta.positions])
    rows = np.arange(delta.n) * C + delta.example_class
    diag_cols = delta.columns[rows]
    dn = np.linalg.norm(diag_cols, axis=1)
    gn = np.linalg.norm(grads, axis=1)
    keep = (dn > 0) & (gn > 0)
    dots = np.einsum("np,np->n", diag_cols[keep], grads[keep])
    pc = delta.probs[np.arange(delta.n), delta.example_class]
    return CollinearityReport(
        positions=delta.positions[keep],
        cosines=np.abs(dots) / (dn[keep] * gn[keep]),
        ratios=dots / gn[keep] ** 2,
        sqrt_pc=np.sqrt(pc[keep]),
        skipped=int(np.sum(~keep)),
    )


@dataclass
class HierarchyStats:
    """Group means, cluster centers and centered residuals of a DeltaMatrix.

    ``member_deviations[c, j]`` is ``delta_{c,c'} - delta_c`` for the ``j``-th
    ``c' != c`` in increasing order; ``centered`` holds every column minus
    its group mean, in Delta's column order.
    """

    delta: DeltaMatrix
    weights: np.ndarray
    group_means: np.ndarray
    cluster_centers: np.ndarray
    member_deviations: np.ndarray
    centered: np.ndarray

    @property
    def n_classes(self):
        return self.delta.n_classes

    @property
    def dim(self):
        return self.delta.dim

    @property
    def diag_means(self):
        C = self.n_classes
        return self.group_means[np.arange(C), np.arange(C)]

    @property
    def balanced(self):
        return self.delta.balanced

    def part(self, name):
        return GPart(name, self)


def compute_hierarchy(delta):
    C, P = delta.n_classes, delta.dim
    counts = np.asarray(delta.class_counts)
    if C < 2:
        raise DataError("the hierarchy needs at least two classes")
    if np.any(counts == 0):
        raise DataError(f"classes {np.flatnonzero(counts == 0).tolist()} have no examples")
    weights = counts / counts.sum()
    group_means = np.empty((C, C, P))
    centered = np.empty_like(delta.columns)
    row = 0
    for c in range(C):
        rows = slice(row, row + counts[c] * C)
        block = delta.columns[rows].reshape(counts[c], C, P)
        group_means[c] = block.mean(axis=0)
        centered[rows] = (block - group_means[c]).reshape(-1, P)
        row += counts[c] * C
    others = [[k for k in range(C) if k != c] for c in range(C)]
    centers = np.stack([group_means[c, others[c]].mean(axis=0) for c in range(C)])
    deviations = np.stack([group_means[c, others[c]] - centers[c] for c in range(C)])
    return HierarchyStats(delta, weights, group_means, centers, deviations, centered)


class GPart:
    """One of the G operators, applied matrix-free.

    Each part is a weighted sum of outer products ``sum_j coef_j b_j b_j^T``
    over generating vectors ``b_j``; products cost two passes over them.
    """

    def __init__(self, name, stats):
        if name not in PARTS:
            raise ContractViolation(f"unknown part {name!r}; expected one of {PARTS}")
        self.name = name
        self.stats = stats
        self._gen = None

    @property
    def dim(self):
        return self.stats.dim

    @property
    def n_classes(self):
        return self.stats.n_classes

    @property
    def shape(self):
        return (self.dim, self.dim)

    def generators(self):
        """``(B, coef)`` with the part equal to ``B^T diag(coef) B``."""
        if self._gen is None:
            self._gen = _generators(self.name, self.stats)
        return self._gen

    def matvec(self, v):
        B, coef = self.generators()
        return B.T @ (coef * (B @ v))

    def __matmul__(self, v):
        return self.matvec(v)

    def __repr__(self):
        return f"GPart({self.name!r}, dim={self.dim})"


def _generators(name, s):
    C = s.n_classes
    w = s.weights
    n = s.delta.n
    if name == "G":
        B = s.delta.columns
        return B, np.full(len(B), 1.0 / n)
    if name == "G0":
        return s.diag_means, w.copy()
    if name == "G1":
        return s.cluster_centers, (C - 1) * w
    if name == "G2":
        return s.member_deviations.reshape(-1, s.dim), np.repeat(w, C - 1)
    if name == "G3":
        return s.centered, np.full(len(s.centered), 1.0 / n)
    # G12 straight from the C^2 group means
    return s.group_means.reshape(-1, s.dim), np.repeat(w, C)


def g_apply(part, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (part.dim,):
        raise ContractViolation(f"expected a vector of length {part.dim}, got shape {v.shape}")
    return part.matvec(v)


def materialize(part, max_dim=MATERIALIZE_LIMIT):
    """Dense ``P x P`` matrix of a part; refused above ``max_dim``."""
    if part.dim > max_dim:
        raise ResourceLimitError(
            f"refusing to materialize a {part.dim}x{part.dim} operator (limit {max_dim})",
            required=8 * part.dim ** 2, limit=8 * max_dim ** 2)
    B, coef = part.generators()
    S = B * np.sqrt(coef)[:, None]
    M = S.T @ S
    return 0.5 * (M + M.T)


def gram_outliers(stats, level="G1"):
    """Nonzero spectrum of G1 or G12 from the Gram matrix of its generators.

    For G1 this is the ``C x C`` matrix ``(C - 1) sqrt(w_a w_b) <delta_a, delta_b>``
    (``(C-1)/C <delta_a, delta_b>`` when balanced); for G12 the ``C^2 x C^2``
    matrix ``sqrt(w_a w_b) <delta_aa', delta_bb'>``.
    """
    if level not in ("G1", "G12"):
        raise ContractViolation("gram_outliers supports levels 'G1' and 'G12'")
    B, coef = _generators(level, stats)
    S = B * np.sqrt(coef)[:, None]
    K = S @ S.T
    return sym_eig_small(0.5 * (K + K.T))[0]


def separation_score(points, labels):
    """Between-group scatter trace over total scatter trace, in [0, 1]."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    mean = points.mean(axis=0)
    total = float(np.sum((points - mean) ** 2))
    if total == 0.0:
        return float("nan")
    between = 0.0
    for g in np.unique(labels):
        members = points[labels == g]
        between += len(members) * float(np.sum((members.mean(axis=0) - mean) ** 2))
    return between / total


@dataclass
class GeometryReport:
    trace_g0: float
    trace_g1: float
    trace_g2: float
    trace_g3: float
    between_within_ratio: float
    diag_norms: list
    center_norms: list
    median_diag_norm: float
    median_center_norm: float
    score_by_class: float
    score_by_logit: float

    def to_dict(self):
        return dict(self.__dict__)


def cluster_geometry(stats, delta=None):
    """Summaries of how tightly group means gather around their cluster centers.

    The separation scores label the off-diagonal group means
    ``{delta_cc' : c != c'}`` once by class ``c`` and once by logit
    coordinate ``c'``.
    """
    C = stats.n_classes
    w = stats.weights
    center_sq = np.sum(stats.cluster_centers ** 2, axis=1)
    dev_sq = np.sum(stats.member_deviations ** 2, axis=(1, 2))
    trace_g1 = float((C - 1) * np.sum(w * center_sq))
    trace_g2 = float(np.sum(w * dev_sq))
    trace_g0 = float(np.sum(w * np.sum(stats.diag_means ** 2, axis=1)))
    trace_g3 = float(np.sum(stats.centered ** 2) / stats.delta.n)
    diag_norms = np.linalg.norm(stats.diag_means, axis=1)
    center_norms = np.sqrt(center_sq)
    mask = ~np.eye(C, dtype=bool)
    points = stats.group_means[mask]
    by_class = np.repeat(np.arange(C), C - 1)
    by_logit = np.nonzero(mask)[1]
    return GeometryReport(
        trace_g0=trace_g0,
        trace_g1=trace_g1,
        trace_g2=trace_g2,
        trace_g3=trace_g3,
        between_within_ratio=trace_g1 / trace_g2 if trace_g2 > 0 else float("inf"),
        diag_norms=diag_norms.tolist(),
        center_norms=center_norms.tolist(),
        median_diag_norm=float(np.median(diag_norms)),
        median_center_norm=float(np.median(center_norms)),
        score_by_class=separation_score(points, by_class),
        score_by_logit=separation_score(points, by_logit),
    )


def write_delta_export(delta, bin_path, header_path):
    """Raw little-endian float64 columns of Delta plus a JSON header."""
    header = {
        "P": delta.dim,
        "n": delta.n,
        "C": delta.n_classes,
        "dtype": "<f8",
        "storage": "column-major: each Delta column is P contiguous values",
        "index_order": ["c", "i", "c_prime"],
        "class_counts": [int(k) for k in delta.class_counts],
        "example_positions": [int(k) for k in delta.positions],
    }
    with open(header_path, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(bin_path, "wb") as fh:
        fh.write(np.ascontiguousarray(delta.columns, dtype="<f8").tobytes())


def read_delta_export(bin_path, header_path):
    with open(header_path) as fh:
        header = json.load(fh)
    raw = np.fromfile(bin_path, dtype="<f8")
    N = header["n"] * header["C"]
    if raw.size != N * header["P"]:
        raise DataError(f"{bin_path}: expected {N * header['P']} values, found {raw.size}")
    return header, raw.reshape(N, header["P"])
