"""liplab: gauge-based scaled-oscillation analysis at desk scale.

Submodules: gauges (scale functions and orderings), setlib (cube sets, box
counting, dimensions, microscopic certificates), funclib (sampled functions
and oscillation estimators), construct (the staircase builds with exact
certificates), partition (Vitali image covers and graph checks), cli.
"""

from . import construct, funclib, gauges, partition, setlib  # noqa: F401

__version__ = "0.1.0"
