"""treewatt-exporter: model-tree extraction from PyTorch models."""

from .export import ExportRequest, export_tree, load_profile
from .tracing import CUSTOM_PRIMITIVES, PRIMITIVE_CLASSES, ExportError, trace_model

__version__ = "0.1.0"
