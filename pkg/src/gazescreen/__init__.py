"""Gaze scan-path screening pipeline.

Raw gaze samples are segmented into fixations and saccades, rasterized into
scan-path images, augmented, split, and classified with small residual CNNs.
A seeded simulator provides synthetic cohorts for end-to-end runs.
"""

from gazescreen.gaze_io import GazeRecording, GazeSample, GroupLabel, parse_gaze_csv, write_gaze_csv
from gazescreen.geometry import ViewingGeometry, degrees_to_pixels, dispersion, pixels_to_degrees

__version__ = "0.1.0"

__all__ = [
    "GazeRecording",
    "GazeSample",
    "GroupLabel",
    "ViewingGeometry",
    "degrees_to_pixels",
    "dispersion",
    "parse_gaze_csv",
    "pixels_to_degrees",
    "write_gaze_csv",
]
