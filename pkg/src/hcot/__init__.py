"""Hyperspectral camouflaged-object tracking testbed."""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    ATTRIBUTE_VOCABULARY,
    BBox,
    HsiCube,
    ResponseMaps,
    SequenceRecord,
    TrackerConfig,
    crop_patch,
    false_color,
    subcube,
)
