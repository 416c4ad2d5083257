"""Trace-driven simulator of EEE link power management in HPC interconnects."""

from .des import MS, NS, PS, S, US, SimulationError, Simulator
from .topology import ConfigurationError, TopologyConfig, build, micro

__all__ = ["MS", "NS", "PS", "S", "US", "SimulationError", "Simulator", "ConfigurationError",
           "TopologyConfig", "build", "micro"]
__version__ = "0.1.0"
