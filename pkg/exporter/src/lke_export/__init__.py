"""lke-export: pretrained image features in the LKE1 interchange format.

Extracts CLIP ViT-B/32 (512-dim) or ResNet-50 (2048-dim, pooled penultimate)
features from plain and selectively encrypted images and writes one LKE1 file
per (image, encryption level) for ingestion by downstream MI estimators.
"""

__version__ = "0.1.0"

from .export import ExportJob, run_export
from .lke import read_lke, write_lke
from .models import load_feature_model

__all__ = ["ExportJob", "run_export", "read_lke", "write_lke", "load_feature_model"]
