"""Bootstrap confidence intervals for edges in speckled (SAR-like) imagery."""

__version__ = "0.1.0"
