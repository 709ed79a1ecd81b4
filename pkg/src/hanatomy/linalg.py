"""Small dense linear algebra: symmetric eigensolvers and orthonormalization.

Matrices are plain ``float64`` numpy arrays. The symmetric tridiagonal
solver is a self-contained implicit-shift QL iteration that only tracks the
first row of the eigenvector matrix, which is all Gauss quadrature needs.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, RankDeficientError
from .validation import as_float_array, check_square, check_symmetric

MAX_DENSE_DIM = 10_000


@dataclass(frozen=True)
class SymTridiagonal:
    """Symmetric tridiagonal matrix, as produced by Lanczos.

    ``diag`` holds alpha_1..alpha_k and ``offdiag`` beta_1..beta_{k-1}.
    """

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = as_float_array(self.diag, "diag", ndim=1)
        e = as_float_array(self.offdiag, "offdiag", ndim=1)
        if len(d) and len(e) != len(d) - 1:
            raise ContractViolation("offdiag must have exactly len(diag) - 1 entries")
        if np.any(e < 0):
            raise ContractViolation("offdiag entries must be non-negative")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    def __len__(self):
        return len(self.diag)

    def to_dense(self):
        k = len(self.diag)
        T = np.diag(self.diag)
        if k > 1:
            idx = np.arange(k - 1)
            T[idx, idx + 1] = self.offdiag
            T[idx + 1, idx] = self.offdiag
        return T


def sym_eig_small(M):
    """Eigen-decomposition of a dense symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order; eigenvector ``j`` is column ``j``. Exactly tied
    eigenvalues keep the order in which the solver produced them.
    """
    M = check_square(as_float_array(M, "M"), "M")
    if M.shape[0] > MAX_DENSE_DIM:
        raise ContractViolation(f"dimension {M.shape[0]} exceeds {MAX_DENSE_DIM}")
    check_symmetric(M, 1e-9, "M")
    if M.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def orthonormalize(V, tol=1e-12):
    """Orthonormalize the columns of ``V`` by modified Gram-Schmidt.

    Every column is projected twice against its predecessors, which keeps
    ``Q^T Q`` at identity to working precision. A column whose remaining
    norm drops below ``tol`` times its original norm is reported through
    :class:`RankDeficientError`.
    """
    V = as_float_array(V, "V", ndim=2)
    Q = V.copy()
    for j in range(Q.shape[1]):
        q = Q[:, j]
        norm0 = np.linalg.norm(q)
        for _ in range(2):
            if j:
                q -= Q[:, :j] @ (Q[:, :j].T @ q)
        norm = np.linalg.norm(q)
        if norm0 == 0.0 or norm <= tol * norm0:
            raise RankDeficientError(j)
        Q[:, j] = q / norm
    return Q


def tridiag_eig(T, max_sweeps=60):
    """Eigenvalues and squared first eigenvector components of ``T``.

    These are the Gauss quadrature nodes and weights associated with
    the Lanczos tridiagonal. Nodes are returned in ascending order.
    """
    if not isinstance(T, SymTridiagonal):
        T = SymTridiagonal(*T)
    n = len(T)
    if n == 0:
        raise ContractViolation("empty tridiagonal matrix")
    d = [float(x) for x in T.diag]
    e = [float(x) for x in T.offdiag] + [0.0]
    # only the first row of the accumulated rotation matrix is needed
    z = [0.0] * n
    z[0] = 1.0
    eps = np.finfo(np.float64).eps

    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_sweeps:
                raise ArithmeticError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0

    nodes = np.array(d)
    weights = np.array(z) ** 2
    order = np.argsort(nodes, kind="stable")
    return nodes[order], weights[order]
