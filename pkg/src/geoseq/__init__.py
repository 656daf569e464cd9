"""geoseq: geocoding as geohash-sequence generation.

Text queries map to fixed-length geohash strings through an autoregressive
policy trained by maximum likelihood and refined with group-relative policy
optimization under a geodesic distance-deviation reward. The package also
ships the synthetic dataset builders, the WGS-84 geodesic solver, the
evaluation metrics and baselines, and a CLI tying them together.
"""

__version__ = "0.1.0"

from geoseq.coords import BBox, LatLon

__all__ = ["BBox", "LatLon", "__version__"]
