"""Information-constrained optimal transport, Gaussian transportation bounds,
spherical concentration and relay-channel converse bounds."""

__version__ = "0.1.0"
