"""Two-point sEMG finger-force decoding pipeline.

Synthetic 12-channel sEMG cohorts, causal preprocessing, time-domain
features, near-linear regressors trained only on force extremes, offline
direction/interpolation analyses, and a real-time decode service.
"""

__version__ = "0.1.0"
