"""T1/T2 MR contrast translation: models, training, evaluation, and the perceptual study."""

from .data import (
    ImageSlice,
    NormalizedImage,
    PairedDataset,
    Volume,
    denormalize,
    extract_slice,
    load_paired_dataset,
    load_volume,
    make_batches,
    split_dataset,
    zscore_normalize,
)
from .errors import (
    BoundsError,
    ConfigError,
    DegenerateImageError,
    EmptySessionError,
    FormatError,
    MrTranslateError,
    NotFoundError,
    NumericalError,
    OrderViolationError,
    SessionCompleteError,
    ShapeError,
    UnsupportedOperationError,
)
from .estimator import ContrastTranslator
from .losses import (
    KINDS,
    LossWeights,
    adversarial_loss,
    cycle_loss,
    kl_loss,
    supervised_mae_loss,
    total_loss,
)
from .metrics import (
    ErrorMap,
    MetricReport,
    evaluate_model,
    histogram_entropy,
    mae,
    mutual_information,
    psnr,
    relative_error_map,
)
from .networks import (
    ModelBundle,
    build_model,
    count_conv_layers,
    discriminate,
    encode,
    generate,
)
from .study import (
    Composition,
    PerceptualReport,
    PoolImage,
    SessionStore,
    StudySession,
    create_session,
    next_item,
    score_session,
    submit_rating,
)
from .training import (
    EpochRecord,
    TrainConfig,
    load_checkpoint,
    parse_train_config,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BoundsError",
    "Composition",
    "ConfigError",
    "ContrastTranslator",
    "DegenerateImageError",
    "EmptySessionError",
    "EpochRecord",
    "ErrorMap",
    "FormatError",
    "ImageSlice",
    "KINDS",
    "LossWeights",
    "MetricReport",
    "ModelBundle",
    "MrTranslateError",
    "NormalizedImage",
    "NotFoundError",
    "NumericalError",
    "OrderViolationError",
    "PairedDataset",
    "PerceptualReport",
    "PoolImage",
    "SessionCompleteError",
    "SessionStore",
    "ShapeError",
    "StudySession",
    "TrainConfig",
    "UnsupportedOperationError",
    "Volume",
    "adversarial_loss",
    "build_model",
    "count_conv_layers",
    "create_session",
    "cycle_loss",
    "denormalize",
    "discriminate",
    "encode",
    "evaluate_model",
    "extract_slice",
    "generate",
    "histogram_entropy",
    "kl_loss",
    "load_checkpoint",
    "load_paired_dataset",
    "load_volume",
    "mae",
    "make_batches",
    "mutual_information",
    "next_item",
    "parse_train_config",
    "psnr",
    "relative_error_map",
    "save_checkpoint",
    "score_session",
    "split_dataset",
    "submit_rating",
    "supervised_mae_loss",
    "total_loss",
    "train",
    "zscore_normalize",
]
