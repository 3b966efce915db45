"""
Low-rank SDC
High-order rank-adaptive integration of linear matrix ODEs via
spectral deferred correction on top of merge-BUG steps
"""

__version__ = "0.1.0"
