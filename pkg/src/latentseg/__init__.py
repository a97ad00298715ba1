"""Two-stage latent customer segmentation with self-paced loss correction."""
from ._kernels import BACKEND
from .domain import (ChurnStatus, CustomerRecord, Dataset, LatentIntent, SegmentLabel,
                     Transaction, validate_dataset)
from .datagen import GenConfig, derive_stage2_initial_labels, generate_population
from .stage1 import Stage1Model, Stage1TrainConfig, filter_active, train_stage1
from .stage2 import SplcConfig, Stage2Model, score_customers, train_stage2

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChurnStatus", "CustomerRecord", "Dataset", "LatentIntent", "SegmentLabel",
    "Transaction", "validate_dataset", "GenConfig", "derive_stage2_initial_labels",
    "generate_population", "Stage1Model", "Stage1TrainConfig", "filter_active",
    "train_stage1", "SplcConfig", "Stage2Model", "score_customers", "train_stage2",
]
