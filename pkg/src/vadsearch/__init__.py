"""Cell-based neural architecture search and training for frame-level voice
activity detection: GP surrogate over a WL graph kernel, an 18-operation
search space, and a synthetic desk-scale data pipeline."""

from .arch import (ArchSpec, CellSpec, OpKind, canonical_hash, deserialize_arch,
                   discovered_arch, discovered_cell, mutate_cell, random_cell,
                   serialize_arch, validate_arch, validate_cell, wl_features)
from .metrics import auc, boosted_predictions, f1
from .model import build_model, count_params, load_checkpoint, save_checkpoint
from .search import Archive, ArchiveRecord, SearchConfig, evaluate_arch, run_search
from .surrogate import (AcquisitionConfig, expected_improvement, gp_fit,
                        gp_predict, select_batch, wl_kernel)
from .training import TrainConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "ArchSpec", "CellSpec", "OpKind", "canonical_hash", "deserialize_arch",
    "discovered_arch", "discovered_cell", "mutate_cell", "random_cell",
    "serialize_arch", "validate_arch", "validate_cell", "wl_features",
    "auc", "boosted_predictions", "f1",
    "build_model", "count_params", "load_checkpoint", "save_checkpoint",
    "Archive", "ArchiveRecord", "SearchConfig", "evaluate_arch", "run_search",
    "AcquisitionConfig", "expected_improvement", "gp_fit", "gp_predict",
    "select_batch", "wl_kernel",
    "TrainConfig", "TrainReport", "train",
]
