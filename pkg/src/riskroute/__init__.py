"""Risk-aware routing over trajectory-derived logistics graphs.

Pipeline: GPS trajectories -> k-means zones -> transition graph ->
GCN+GRU congestion forecast -> risk-weighted shortest paths.
"""

from ._accel import backend

__version__ = "0.1.0"

__all__ = ["backend", "__version__"]
