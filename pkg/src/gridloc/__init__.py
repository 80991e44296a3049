"""Monocular localization over a grid-patterned floor.

A downward-looking camera sees two families of parallel floor lines.  From
their images the pipeline recovers height, roll, pitch and the position
inside the current grid cell, and a winner-take-all tracker integrates the
sub-cell offsets into a position relative to the starting cell.
"""
from .pipeline import FrameInput, FrameOutput, PipelineState, process_frame, run_stream
from .types import CameraModel, DetectedLine, GridSpec, PipelineConfig, PoseEstimate

__version__ = "0.1.0"

__all__ = ["CameraModel", "DetectedLine", "GridSpec", "PipelineConfig", "PoseEstimate",
           "FrameInput", "FrameOutput", "PipelineState", "process_frame", "run_stream",
           "__version__"]
