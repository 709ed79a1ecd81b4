"""End-to-end analysis of one trained model on one dataset."""

import hashlib
from dataclasses import dataclass

import numpy as np

from .decomp import (
    DEFAULT_MAX_BYTES,
    build_delta,
    cluster_geometry,
    compute_hierarchy,
    delta_gradient_collinearity,
    gram_outliers,
)
from .model import accuracy, dataset_loss
from .spectrum import compare_outliers, slq_density, topk_eigs


def derive_seed(seed, tag):
    """Per-component seed: first 8 bytes of sha256("<seed>:<tag>"), little-endian."""
    digest = hashlib.sha256(f"{int(seed)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class AnalysisResult:
    delta: object
    hierarchy: object
    geometry: object
    collinearity: object
    top: object
    gram_g1: np.ndarray
    gram_g12: np.ndarray
    density: object
    report: object
    train_loss: float
    train_accuracy: float

    def scree_rows(self):
        C = self.report.n_classes
        return [(c + 1, self.report.top_g[c], self.report.gram_g12[c], self.report.gram_g1[c])
                for c in range(C)]


def run_analysis(model, dataset, topk=None, slq_probes=10, slq_steps=100, tol=1e-8,
                 seed=0, max_bytes=DEFAULT_MAX_BYTES):
    """Build Delta and its hierarchy, then compare the spectrum of G with the Gram shortcuts.

    ``topk`` defaults to ``2 C`` eigenvalues of G so the report can tell
    whether more than C of them clear the bulk edge.
    """
    C = model.n_classes
    delta = build_delta(model, dataset, max_bytes=max_bytes)
    stats = compute_hierarchy(delta)
    G = stats.part("G")
    k = min(topk if topk is not None else 2 * C, 4 * C, G.dim)
    top = topk_eigs(G, k, tol=tol, seed=derive_seed(seed, "topk"))
    gram1 = gram_outliers(stats, "G1")
    gram12 = gram_outliers(stats, "G12")
    density = slq_density(G, slq_probes, min(slq_steps, G.dim), seed=derive_seed(seed, "slq"))
    report = compare_outliers(top.eigenvalues, gram1, gram12, density, n_classes=C)
    return AnalysisResult(
        delta=delta,
        hierarchy=stats,
        geometry=cluster_geometry(stats),
        collinearity=delta_gradient_collinearity(delta, model, dataset),
        top=top,
        gram_g1=gram1,
        gram_g12=gram12,
        density=density,
        report=report,
        train_loss=dataset_loss(model, dataset.features, dataset.labels),
        train_accuracy=accuracy(model, dataset.features, dataset.labels),
    )
