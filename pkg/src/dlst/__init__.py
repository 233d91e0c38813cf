"""Distribution-based label space transformation for multi-label learning.

Label vectors are embedded into a low-dimensional code space by matching
pairwise Student-t similarity distributions, a kernel logistic regressor
maps features to codes, and ML-KNN decodes codes back to label vectors.
"""

from .archive import ModelArchive, load_archive, save_archive
from .config import PipelineConfig, config_from_dict, load_config
from .dataset import CorruptionSpec, LabeledDataset, SplitSpec, corrupt_labels, load_arff, load_csv, split
from .decoder import MlknnModel, decode, train_mlknn
from .encoder import (
    EncoderConfig,
    compute_label_distribution,
    compute_latent_distribution,
    kl_divergence,
    kl_gradient,
    optimize_latent,
)
from .metrics import EvalReport, MetricConfig, average_precision, evaluate, macro_f1, micro_f1, top_r_binarize
from .pipeline import run_evaluate, run_missing_sweep, run_predict, run_train, run_train_ratio_sweep
from .regressor import KernelSpec, RegressorConfig, predict_latent, train_regressor

__version__ = "0.1.0"
