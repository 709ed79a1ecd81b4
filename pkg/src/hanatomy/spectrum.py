"""Spectral density estimation and top-eigenvalue extraction for symmetric operators.

Operators may be a dense array, any object with ``matvec`` and ``dim`` (such
as :class:`hanatomy.decomp.GPart`) or a scipy ``LinearOperator``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .linalg import SymTridiagonal, sym_eig_small, tridiag_eig


class _Operator:
    def __init__(self, matvec, dim, n_classes=None):
        self.matvec = matvec
        self.dim = dim
        self.n_classes = n_classes


def as_operator(op):
    if isinstance(op, np.ndarray):
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ContractViolation(f"operator matrix must be square, got {op.shape}")
        return _Operator(lambda v: op @ v, op.shape[0])
    if hasattr(op, "matvec"):
        dim = getattr(op, "dim", None) or op.shape[0]
        return _Operator(op.matvec, dim, getattr(op, "n_classes", None))
    raise ContractViolation(f"cannot use {type(op).__name__} as a linear operator")


def _project_out(w, basis):
    if basis is not None and basis.shape[1]:
        w -= basis @ (basis.T @ w)
    return w


def lanczos(matvec, v0, steps, basis=None, breakdown=1e-12):
    """Lanczos tridiagonalisation with full reorthogonalisation.

    Vectors are also kept orthogonal to the columns of ``basis`` (used for
    deflation). Stops early when the next off-diagonal falls below
    ``breakdown`` times the running operator scale; returns
    ``(alpha, beta, Q)`` with ``len(beta) == len(alpha) - 1`` and the Lanczos
    vectors in the rows of ``Q``.
    """
    q = np.array(v0, dtype=np.float64)
    q = _project_out(q, basis)
    q /= np.linalg.norm(q)
    Q = np.empty((steps, len(q)))
    alpha, beta = [], []
    scale = 0.0
    for j in range(steps):
        Q[j] = q
        w = matvec(q)
        a = float(q @ w)
        alpha.append(a)
        w -= Q[:j + 1].T @ (Q[:j + 1] @ w)
        w -= Q[:j + 1].T @ (Q[:j + 1] @ w)
        w = _project_out(w, basis)
        b = float(np.linalg.norm(w))
        scale = max(scale, abs(a) + b)
        if j == steps - 1 or b <= breakdown * scale:
            break
        beta.append(b)
        q = w / b
    k = len(alpha)
    return np.array(alpha), np.array(beta[:k - 1]), Q[:k]


@dataclass
class SpectralDensity:
    grid: np.ndarray
    density: np.ndarray
    smoothing_sigma: float
    probes: int
    lanczos_steps: int
    nodes: list = field(default_factory=list, repr=False)
    weights: list = field(default_factory=list, repr=False)

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "density"])
            for x, d in zip(self.grid, self.density):
                w.writerow([repr(float(x)), repr(float(d))])


def kernel_density(points, grid, sigma, weights=None):
    """Gaussian-smoothed spectral measure on ``grid``.

    Each point's kernel is renormalised to unit trapezoid mass on the grid, so
    mass sitting at a grid edge (such as the zero eigenvalues of a PSD
    operator) is not lost. Points whose kernel barely touches the grid are
    dropped.
    """
    points = np.asarray(points, dtype=np.float64).ravel()
    grid = np.asarray(grid, dtype=np.float64)
    if weights is None:
        weights = np.full(len(points), 1.0 / len(points))
    weights = np.asarray(weights, dtype=np.float64).ravel()
    density = np.zeros_like(grid)
    for start in range(0, len(points), 256):
        x = points[start:start + 256, None]
        K = np.exp(-0.5 * ((grid[None, :] - x) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
        mass = np.trapezoid(K, grid, axis=1)
        ok = mass >= 1e-3
        scale = np.where(ok, weights[start:start + 256] / np.where(ok, mass, 1.0), 0.0)
        density += scale @ K
    return density


def density_l1(a, b, grid):
    return float(np.trapezoid(np.abs(np.asarray(a) - np.asarray(b)), grid))


def default_grid(top, n_points=1024):
    return np.linspace(0.0, 1.05 * top, n_points)


def slq_density(op, m=10, k=100, sigma=None, grid=None, seed=0, n_grid=1024):
    """Stochastic Lanczos quadrature estimate of the spectral density.

    ``m`` Rademacher probes, ``k`` Lanczos steps each; Gauss nodes and
    weights of every probe are smoothed with a Gaussian kernel and averaged.
    Without an explicit grid, 1024 points cover ``[0, 1.05 * largest node]``;
    ``sigma`` defaults to the grid span over 200.
    """
    A = as_operator(op)
    if m < 1:
        raise ContractViolation("need at least one probe")
    if not 1 <= k <= A.dim:
        raise ContractViolation(f"Lanczos steps must lie in [1, {A.dim}]")
    rng = np.random.default_rng(seed)
    all_nodes, all_weights = [], []
    for _ in range(m):
        z = rng.integers(0, 2, size=A.dim) * 2.0 - 1.0
        alpha, beta, _ = lanczos(A.matvec, z, k)
        nodes, weights = tridiag_eig(SymTridiagonal(alpha, beta))
        all_nodes.append(nodes)
        all_weights.append(weights)
    if grid is None:
        grid = default_grid(max(float(n.max()) for n in all_nodes), n_grid)
    grid = np.asarray(grid, dtype=np.float64)
    if sigma is None:
        sigma = (grid[-1] - grid[0]) / 200.0
    density = kernel_density(
        np.concatenate(all_nodes), grid, sigma, np.concatenate(all_weights) / m)
    return SpectralDensity(grid, density, float(sigma), m, k, all_nodes, all_weights)


@dataclass
class TopEigs:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    converged: bool


def topk_eigs(op, k, max_iter=50, tol=1e-8, seed=0, steps=40):
    """Leading ``k`` eigenpairs by repeated Lanczos extraction and deflation.

    After each pair ``(lam, v)`` is found the search continues on
    ``op - lam v v^T`` restricted to the complement of the vectors found so
    far. A pair is accepted once ``|op v - lam v| <= tol * lam_1``; otherwise
    Lanczos restarts from the current Ritz vector, up to ``max_iter`` times.
    ``converged`` is False if any pair ran out of restarts.
    """
    A = as_operator(op)
    P = A.dim
    if not 1 <= k <= P:
        raise ContractViolation(f"k must lie in [1, {P}]")
    if A.n_classes is not None and k > 4 * A.n_classes:
        raise ContractViolation(f"k={k} exceeds 4C={4 * A.n_classes}")
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    rng = np.random.default_rng(seed)
    V = np.zeros((P, 0))
    lams, residuals = [], []
    all_converged = True

    def deflated(v):
        return A.matvec(v) - V @ (np.array(lams) * (V.T @ v))

    for j in range(k):
        x = rng.standard_normal(P)
        n_steps = min(steps, P - j)
        ok = False
        for _ in range(max_iter):
            alpha, beta, Q = lanczos(deflated, x, n_steps, basis=V)
            theta, Y = sym_eig_small(SymTridiagonal(alpha, beta).to_dense())
            x = Q.T @ Y[:, 0]
            for _ in range(2):
                x = _project_out(x, V)
            x /= np.linalg.norm(x)
            Ax = A.matvec(x)
            lam = float(x @ Ax)
            res = float(np.linalg.norm(Ax - lam * x))
            ref = lams[0] if lams else lam
            if res <= tol * max(abs(ref), np.finfo(float).tiny) or res == 0.0:
                ok = True
                break
        all_converged &= ok
        lams.append(lam)
        residuals.append(res)
        V = np.column_stack([V, x])
    order = np.argsort(-np.array(lams), kind="stable")
    return TopEigs(np.array(lams)[order], V[:, order], np.array(residuals)[order], all_converged)


def bulk_edge(density):
    """Largest grid point where the density exceeds 1e-3 of its maximum."""
    d = density.density
    above = np.flatnonzero(d > 1e-3 * d.max())
    return float(density.grid[above[-1]])


@dataclass
class OutlierReport:
    top_g: list
    gram_g1: list
    gram_g12: list
    deviations: list
    deviations_g12_g1: list
    weyl_ok: bool
    weyl_slack: float
    bulk_edge: float
    outlier_count: int
    n_classes: int

    def to_dict(self):
        return {
            "topG": self.top_g,
            "gramG1": self.gram_g1,
            "gramG12": self.gram_g12,
            "deviations": self.deviations,
            "deviationsG12vsG1": self.deviations_g12_g1,
            "weyl_ok": self.weyl_ok,
            "weyl_slack": self.weyl_slack,
            "bulk_edge": self.bulk_edge,
            "outlier_count": self.outlier_count,
            "n_classes": self.n_classes,
        }


def _rel(a, b):
    return abs(a - b) / abs(a) if a != 0 else (0.0 if b == 0 else float("inf"))


def compare_outliers(g_top, gram1, gram12, density=None, n_classes=None):
    """Check ``lam_c(G) >= lam_c(G12) >= lam_c(G1)`` and measure the Gram approximation.

    Deviations are ``|lam_c(G) - lam_c(G1 Gram)| / lam_c(G)`` and
    ``|lam_c(G12) - lam_c(G1)| / lam_c(G12)`` for ``c < C``.
    """
    g_top = [float(x) for x in sorted(g_top, reverse=True)]
    gram1 = [float(x) for x in sorted(gram1, reverse=True)]
    gram12 = [float(x) for x in sorted(gram12, reverse=True)]
    C = n_classes if n_classes is not None else len(gram1)
    if min(len(g_top), len(gram1), len(gram12)) < C:
        raise ContractViolation(
            f"need at least C={C} values per list, got {len(g_top)}/{len(gram1)}/{len(gram12)}")
    slack = 1e-8 * abs(g_top[0])
    weyl = all(g_top[c] >= gram12[c] - slack and gram12[c] >= gram1[c] - slack for c in range(C))
    edge = bulk_edge(density) if density is not None else float("nan")
    count = int(sum(x > edge for x in g_top)) if density is not None else -1
    return OutlierReport(
        top_g=g_top,
        gram_g1=gram1,
        gram_g12=gram12,
        deviations=[_rel(g_top[c], gram1[c]) for c in range(C)],
        deviations_g12_g1=[_rel(gram12[c], gram1[c]) for c in range(C)],
        weyl_ok=bool(weyl),
        weyl_slack=slack,
        bulk_edge=edge,
        outlier_count=count,
        n_classes=C,
    )


@dataclass
class DynamicsTable:
    rows: list
    transition_epoch: int

    def to_dict(self):
        return {"rows": self.rows, "transition_epoch": self.transition_epoch}


def epoch_dynamics(snapshots, dataset, tol=1e-8, seed=0):
    """Per-snapshot cluster scores and top-C Gram deviations.

    ``snapshots`` maps epoch to model (or is a sequence of pairs); rows come
    out sorted by epoch. The transition epoch is the first whose by-class
    score exceeds its by-logit score, or None.
    """
    from .decomp import build_delta, cluster_geometry, compute_hierarchy, gram_outliers

    items = sorted(dict(snapshots).items())
    if len(items) < 2:
        raise ContractViolation("epoch dynamics needs at least two snapshots")
    rows = []
    transition = None
    for epoch, model in items:
        stats = compute_hierarchy(build_delta(model, dataset))
        geo = cluster_geometry(stats)
        C = stats.n_classes
        gram1 = gram_outliers(stats, "G1")
        top = topk_eigs(stats.part("G"), C, tol=tol, seed=seed).eigenvalues
        rows.append({
            "epoch": int(epoch),
            "score_by_class": geo.score_by_class,
            "score_by_logit": geo.score_by_logit,
            "trace_ratio": geo.between_within_ratio,
            "median_diag_norm": geo.median_diag_norm,
            "median_center_norm": geo.median_center_norm,
            "top_g": [float(x) for x in top],
            "gram_g1": [float(x) for x in gram1],
            "deviations": [_rel(float(top[c]), float(gram1[c])) for c in range(C)],
        })
        if transition is None and geo.score_by_class > geo.score_by_logit:
            transition = int(epoch)
    return DynamicsTable(rows, transition)
