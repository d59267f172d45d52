"""Flow-level AllReduce scheduling simulator with baseline and learned schedulers."""

__version__ = "0.1.0"
