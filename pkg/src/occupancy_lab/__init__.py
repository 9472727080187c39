"""Small counts in the infinite occupancy scheme.

Certified moments, de-Poissonization bounds, regime diagnostics and exact
Monte Carlo for balls thrown into boxes with frequencies p_1 >= p_2 >= ... > 0.
"""

__version__ = "0.1.0"

from .frequencies import FrequencySpec, FrequencyView, build_frequencies

__all__ = ["FrequencySpec", "FrequencyView", "build_frequencies", "__version__"]
