"""Drone-swarm relay selection: bee-colony routing, digital-twin consensus and network coding."""

__version__ = "0.1.0"
