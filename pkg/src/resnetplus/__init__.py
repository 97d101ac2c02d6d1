"""ResNet-D + CBAM image classifier on a self-contained numpy autodiff
engine, with training, clinical-style evaluation reports, and a CLI.

The import surface mirrors a run's life cycle: configure (ModelConfig,
TrainConfig, RunConfig), build (build_model), feed (Manifest and friends),
train (train, evaluate), persist (save_checkpoint, load_checkpoint), and
report (compute_report, export_report).
"""

from .autodiff import Variable, backward, grad_check, no_grad, zero_grad
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (ConfigError, RunConfig, load_run_config,
                     parse_synth_spec, with_num_classes)
from .data import (AugmentPolicy, DataError, Dataset, Manifest, Sample,
                   batch_iter, decode_image, load_manifest,
                   make_synth_manifest, preprocess, save_image_tree,
                   save_manifest, scan_dataset, synth_dataset)
from .metrics import (MetricsReport, classification_metrics, compute_report,
                      confusion, dca_ovr, export_report, roc_auc_ovr)
from .model import Model, ModelConfig, build_model, param_count
from .trainer import (DivergenceError, EmaState, EvalResult, TrainConfig,
                      TrainReport, cosine_lr, evaluate, sgd_step, train)

__version__ = "0.1.0"

__all__ = [
    "Variable", "backward", "grad_check", "no_grad", "zero_grad",
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "ConfigError", "RunConfig", "load_run_config", "parse_synth_spec",
    "with_num_classes",
    "AugmentPolicy", "DataError", "Dataset", "Manifest", "Sample",
    "batch_iter", "decode_image", "load_manifest", "make_synth_manifest",
    "preprocess", "save_image_tree", "save_manifest", "scan_dataset",
    "synth_dataset",
    "MetricsReport", "classification_metrics", "compute_report",
    "confusion", "dca_ovr", "export_report", "roc_auc_ovr",
    "Model", "ModelConfig", "build_model", "param_count",
    "DivergenceError", "EmaState", "EvalResult", "TrainConfig",
    "TrainReport", "cosine_lr", "evaluate", "sgd_step", "train",
    "__version__",
]
