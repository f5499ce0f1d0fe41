"""Dataset files, splits, synthetic data and model archives."""

from .archive import Archive, ArchiveError, ArchiveStats, load_archive, load_model, save_model
from .datasets import (
    DatasetFormatError,
    parse_dataset,
    parse_dataset_text,
    read_label_lists,
    serialize_dataset,
    split_train_validation,
    write_dataset,
    write_label_lists,
)
from .synthetic import SyntheticSpec, SyntheticTruth, generate_synthetic

__all__ = [
    "Archive", "ArchiveError", "ArchiveStats", "DatasetFormatError", "SyntheticSpec", "SyntheticTruth",
    "generate_synthetic", "load_archive", "load_model", "parse_dataset", "parse_dataset_text", "read_label_lists",
    "save_model", "serialize_dataset", "split_train_validation", "write_dataset", "write_label_lists",
]
