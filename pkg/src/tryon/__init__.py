"""Per-garment virtual try-on: capture-to-dataset pipeline, garment synthesis
training, and a real-time try-on engine with a companion service API."""

__version__ = "0.1.0"

from .errors import BackendError, ConfigError, InputError, TryonError  # noqa: F401
from .imaging import (  # noqa: F401
    HybridRepresentation,
    RepresentationMode,
    RoiTransform,
    build_representation,
    composite,
    concat_channels,
    roi_extract,
    roi_inverse,
)
