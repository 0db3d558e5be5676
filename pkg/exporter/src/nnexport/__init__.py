"""Export Keras models and datasets into the fuzzing engine's file formats."""

from nnexport.keras_export import ExportManifest, UnsupportedLayerError, export_golden, export_model
from nnexport.dataset_export import export_dataset, read_netpbm

__version__ = "0.1.0"
