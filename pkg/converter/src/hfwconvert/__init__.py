"""Checkpoint conversion into HFW1 tensor containers."""

from .convert import ConversionError, convert, expected_target_shape, verify
from .container import read_tensors, write_tensors
from .manifest import ConversionManifest, Mapping, load_manifest

__version__ = "0.1.0"
