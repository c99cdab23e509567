"""Dynamic information design with informational puts: thresholds, policy, certification and simulation."""

__version__ = "0.1.0"
