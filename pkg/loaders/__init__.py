"""
Loaders package for datasets and model bundles
"""

from .idx_loader import IdxFormatError, LabeledDataset, load_idx, save_idx
from .bundle_store import BundleFormatError, ModelBundle, load_model_bundle, save_model_bundle

__all__ = [
    'IdxFormatError', 'LabeledDataset', 'load_idx', 'save_idx',
    'BundleFormatError', 'ModelBundle', 'load_model_bundle', 'save_model_bundle',
]
