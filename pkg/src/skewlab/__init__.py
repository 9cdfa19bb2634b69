"""skewlab: a desk-scale laboratory for class-imbalanced semi-supervised
learning built around a rebalancing auxiliary classifier head."""

__version__ = "0.1.0"

from .augment import AugmentConfig, strong_augment, weak_augment
from .backbone import BackboneLossConfig, backbone_loss
from .balance import (
    AnnealSchedule,
    BalanceConfig,
    MaskSampler,
    balanced_classification_loss,
    balanced_consistency_loss,
    soft_pseudo_labels,
    total_loss,
)
from .config import (
    ConfigError,
    DatasetConfig,
    ExperimentConfig,
    config_hash,
    default_config,
    parse_config,
    parse_config_text,
    resolved_ini,
)
from .data import (
    DataError,
    DataPool,
    ImbalanceProfile,
    Minibatch,
    SplitDataset,
    class_sizes,
    generate_gaussian_mixture,
    load_csv_dataset,
    sample_minibatch,
    split_labeled_unlabeled,
    write_csv_dataset,
)
from .experiment import (
    ablation_variants,
    build_run_data,
    export_dataset,
    run_ablation_suite,
    run_experiment,
    train_one_seed,
)
from .metrics import (
    MetricsReport,
    build_metrics_report,
    confusion_matrix,
    gmean,
    histogram_balance,
    minority_accuracy,
    minority_classes,
    overall_accuracy,
    per_class_recall,
    prediction_histogram,
)
from .model import (
    EmaModel,
    Model,
    ModelConfig,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .seeding import SeedStreams
from .tensor import (
    Tape,
    Tensor,
    UsageError,
    affine,
    backward,
    cross_entropy_soft,
    mul,
    no_grad,
    recording,
    relu,
    scale,
    softmax,
    sum_all,
)
from .train import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    adam_step,
    evaluate,
    train,
    train_decoupled,
)
