"""Reproducibility shell: data, configs, the end-to-end pipeline and sweeps."""

from ..config import ExperimentConfig, load_config, save_config
from .data import ingest_folder, load_and_split, make_shapes, read_image, split_indices, write_image
from .pipeline import receive_degraded, stream, transmit_pipeline
from .sweep import CSV_COLUMNS, SweepResult, export_plots, run_sweep

__all__ = [
    "ExperimentConfig",
    "load_config",
    "save_config",
    "ingest_folder",
    "load_and_split",
    "make_shapes",
    "read_image",
    "write_image",
    "split_indices",
    "receive_degraded",
    "stream",
    "transmit_pipeline",
    "CSV_COLUMNS",
    "SweepResult",
    "run_sweep",
    "export_plots",
]
