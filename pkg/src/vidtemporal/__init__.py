"""Label-free temporal analytics for video object detection streams."""

from .associate import AssociatorConfig, Tracklet, run
from .core import BBox, Detection, FrameDetections, VideoSequence, iou, nms
from .metrics import SequenceReport, evaluate, log_contrast
from .refine import RefinerConfig, fusion_weights, refine_stream
from .sot import SotConfig, sos_nms

__all__ = [
    "AssociatorConfig", "BBox", "Detection", "FrameDetections", "RefinerConfig",
    "SequenceReport", "SotConfig", "Tracklet", "VideoSequence", "evaluate",
    "fusion_weights", "iou", "log_contrast", "nms", "refine_stream", "run", "sos_nms",
]
__version__ = "0.1.0"
