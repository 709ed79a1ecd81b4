"""Gauss-Newton Hessian anatomy for small softmax classifiers."""

from .analysis import AnalysisResult, derive_seed, run_analysis
from .data import LabeledDataset, gen_gaussian_mixture, load_csv, load_idx, write_csv
from .decomp import (
    PARTS,
    DeltaMatrix,
    GPart,
    GeometryReport,
    HierarchyStats,
    build_delta,
    cluster_geometry,
    compute_hierarchy,
    delta_gradient_collinearity,
    g_apply,
    gram_outliers,
    materialize,
    read_delta_export,
    write_delta_export,
)
from .errors import (
    ConfigError,
    ContractViolation,
    DataError,
    FormatError,
    HanatomyError,
    RankDeficientError,
    ResourceLimitError,
    TrainingDivergence,
)
from .estimators import HessianOutlierAnalysis, SoftmaxMLPClassifier
from .linalg import SymTridiagonal, orthonormalize, sym_eig_small, tridiag_eig
from .logistic import ce_gradient, ce_hessian, ce_loss, factor_ce_hessian, log_softmax, softmax
from .model import (
    MlpModel,
    accuracy,
    dataset_loss,
    forward,
    full_hessian_fd,
    init_mlp,
    load_checkpoint,
    logit_jacobian,
    loss_and_grad,
    loss_grad,
    save_checkpoint,
)
from .spectrum import (
    DynamicsTable,
    OutlierReport,
    SpectralDensity,
    TopEigs,
    bulk_edge,
    compare_outliers,
    epoch_dynamics,
    kernel_density,
    lanczos,
    slq_density,
    topk_eigs,
)
from .train import TrainConfig, TrainTrace, lr_schedule, momentum_step, sgd_train

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult",
    "ConfigError",
    "ContractViolation",
    "DataError",
    "DeltaMatrix",
    "DynamicsTable",
    "FormatError",
    "GPart",
    "GeometryReport",
    "HanatomyError",
    "HessianOutlierAnalysis",
    "HierarchyStats",
    "LabeledDataset",
    "MlpModel",
    "OutlierReport",
    "PARTS",
    "RankDeficientError",
    "ResourceLimitError",
    "SoftmaxMLPClassifier",
    "SpectralDensity",
    "SymTridiagonal",
    "TopEigs",
    "TrainConfig",
    "TrainTrace",
    "TrainingDivergence",
    "accuracy",
    "build_delta",
    "bulk_edge",
    "ce_gradient",
    "ce_hessian",
    "ce_loss",
    "cluster_geometry",
    "compare_outliers",
    "compute_hierarchy",
    "dataset_loss",
    "delta_gradient_collinearity",
    "derive_seed",
    "epoch_dynamics",
    "factor_ce_hessian",
    "forward",
    "full_hessian_fd",
    "g_apply",
    "gen_gaussian_mixture",
    "gram_outliers",
    "init_mlp",
    "kernel_density",
    "lanczos",
    "load_checkpoint",
    "load_csv",
    "load_idx",
    "log_softmax",
    "logit_jacobian",
    "loss_and_grad",
    "loss_grad",
    "lr_schedule",
    "materialize",
    "momentum_step",
    "orthonormalize",
    "read_delta_export",
    "run_analysis",
    "save_checkpoint",
    "sgd_train",
    "slq_density",
    "softmax",
    "sym_eig_small",
    "topk_eigs",
    "tridiag_eig",
    "write_csv",
    "write_delta_export",
]
