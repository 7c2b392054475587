"""SAR fishing-activity detection toolkit.

Turns multi-channel SAR scenes and point labels into annotated training
patches, and scores point-detection prediction files with the F1_D / F1_S /
F1_V / F1_F metric family and their Avg-F1 aggregate.
"""

__version__ = "0.1.0"
