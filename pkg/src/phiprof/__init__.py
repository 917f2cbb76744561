"""Power, energy and phase profiling for offloaded mini-app runs on host + MIC clusters."""

__version__ = "0.1.0"
