"""Export torchvision GoogLeNet / MobileNetV2 trunks to the engine's model format."""

from .convert import (
    ExportSpec,
    GOOGLENET_TAPS,
    MOBILENET_TAPS,
    build_and_convert,
    classifier_free_param_count,
    reference_forward,
)
from .emit import ExportError, ManifestWriter

__version__ = "0.1.0"
