"""Gait detection from wrist-worn accelerometry.

Preprocessing, window construction, a window-classification baseline and the
J-Net sample-wise segmentation model, chorea-stratified evaluation and
daily-living walking analytics.
"""

__version__ = "0.1.0"

FS_MODEL = 30.0
WINDOW_SAMPLES = 300
