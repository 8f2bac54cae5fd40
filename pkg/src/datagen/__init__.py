"""Dataset generation and persistence."""
from .generator import (
    Dataset,
    DatasetRecord,
    GenConfig,
    NextStateRule,
    budget_matched_config,
    generate_dataset,
    perturb_state,
    sample_initial_guess,
    sample_initial_state,
)
from .storage import DatasetFormatError, dataset_frame, export_text, read_dataset, write_dataset

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "DatasetRecord",
    "GenConfig",
    "NextStateRule",
    "budget_matched_config",
    "dataset_frame",
    "export_text",
    "generate_dataset",
    "perturb_state",
    "read_dataset",
    "sample_initial_guess",
    "sample_initial_state",
    "write_dataset",
]
