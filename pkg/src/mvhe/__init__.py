"""Multi-view Hybrid Embedding (MvHE), its kernel extension and baselines
for cross-view classification."""

from .dataset import (MultiViewDataset, SyntheticSpec, generate_synthetic, load_dataset,
                      permute_pair_labels, save_dataset, split_by_object)
from .embedding import (HyperParams, KernelModel, KernelSpec, LinearModel, fit_kmvhe, fit_mvhe,
                        gram, transform_kernel, transform_linear)
from .harness import (ExperimentConfig, ExperimentReport, cross_validate, cross_view_accuracy,
                      mean_accuracy, robustness_sweep, run_experiment)

__all__ = [
    "MultiViewDataset", "SyntheticSpec", "generate_synthetic", "load_dataset", "save_dataset",
    "split_by_object", "permute_pair_labels", "HyperParams", "KernelSpec", "LinearModel",
    "KernelModel", "fit_mvhe", "fit_kmvhe", "gram", "transform_linear", "transform_kernel",
    "ExperimentConfig", "ExperimentReport", "run_experiment", "robustness_sweep",
    "cross_validate", "cross_view_accuracy", "mean_accuracy",
]
